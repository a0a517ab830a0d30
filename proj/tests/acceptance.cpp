// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "posmap/posmap.hpp"
#include "support.hpp"

using namespace posmap;
using namespace posmap::fixtures;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double sign_free_distance(const VectorXd& x, const VectorXd& want) {
  return std::min((x - want).lpNorm<Eigen::Infinity>(), (x + want).lpNorm<Eigen::Infinity>());
}

bool has_minimizer(const PositivityReport& r, const VectorXd& u, const VectorXd& v, double tol) {
  for (const auto& m : r.minimizers)
    if (sign_free_distance(m.u, u) <= tol && sign_free_distance(m.v, v) <= tol) return true;
  return false;
}

VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Positivity criteria 1-3 share this shape.
void printed_minimum(Outcome& o, const BiQuadraticForm& b, PositivityStatus want_status,
                     double want_bmin, const VectorXd& u, const VectorXd& v, int want_rank,
                     double max_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const PositivityReport r = check_positivity(b);
  const double secs = seconds_since(t0);
  o.detail << "status " << to_string(r.status) << ", b_min " << r.b_min << ", k " << r.order_used
           << ", rank " << r.moment_rank << ", " << secs << " s";
  o.require(r.status == want_status, "status");
  o.require(r.has_b_min && std::abs(r.b_min - want_bmin) <= 1e-3, "b_min within 1e-3");
  o.require(has_minimizer(r, u, v, 1e-2), "minimizer within 1e-2");
  if (want_rank > 0) {
    o.require(r.order_used == 3, "flat at k=3");
    o.require(r.moment_rank == want_rank, "moment rank");
  }
  if (max_seconds > 0) o.require(secs < max_seconds, "runtime");
}

void criterion_1(Outcome& o) {
  printed_minimum(o, gram_example(), PositivityStatus::kNotPositive, -0.3157,
                  vec({0.9830, -0.1835}), vec({0.4632, 0.8863}), 1, 30.0);
}

void criterion_2(Outcome& o) {
  printed_minimum(o, polynomial_example(), PositivityStatus::kPositive, 0.5837,
                  vec({0.9946, -0.1040}), vec({0.9946, -0.1040}), 0, 0.0);
}

void criterion_3(Outcome& o) {
  printed_minimum(o, tensor_example(), PositivityStatus::kNotPositive, -2.3197,
                  vec({-0.3496, -0.4003, 0.8471}), vec({-0.5017, 0.5383, 0.6772}), 1, 0.0);
}

void criterion_4(Outcome& o) {
  const PositivityReport r = check_positivity(cyclic_example());
  o.detail << "status " << to_string(r.status) << ", b_min " << r.b_min << ", "
           << r.minimizers.size() << " minimizers, rank " << r.moment_rank
           << (r.boundary ? ", boundary" : "") << (r.rounded ? ", rounded" : "");
  o.require(r.status == PositivityStatus::kPositive, "status");
  o.require(r.boundary, "boundary flag");
  o.require(r.has_b_min && std::abs(r.b_min) <= 1e-6, "b_min = 0 within 1e-6");
  o.require(r.minimizers.size() == 3, "exactly 3 minimizers");
  o.require(r.moment_rank == 3, "moment rank 3");
  const VectorXd e[3] = {VectorXd::Unit(3, 0), VectorXd::Unit(3, 1), VectorXd::Unit(3, 2)};
  o.require(has_minimizer(r, e[1], e[0], 1e-4), "((0,1,0),(1,0,0))");
  o.require(has_minimizer(r, e[2], e[1], 1e-4), "((0,0,1),(0,1,0))");
  o.require(has_minimizer(r, e[0], e[2], 1e-4), "((1,0,0),(0,0,1))");
}

void criterion_5(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const PositivityReport r = check_positivity(harmonic_example());
  const double secs = seconds_since(t0);
  o.detail << "status " << to_string(r.status) << ", b_min " << r.b_min << ", " << secs << " s";
  o.require(r.status == PositivityStatus::kPositive, "status");
  o.require(r.has_b_min && std::abs(r.b_min - 0.0175) <= 1e-3, "b_min within 1e-3");
  o.require(secs < 15 * 60, "runtime");
}

void not_separable(Outcome& o, const KroneckerMatrix& a, double max_seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const SeparabilityReport r = check_separability(a);
  const double secs = seconds_since(t0);
  o.detail << "status " << to_string(r.status) << ", k " << r.order_used;
  if (r.ray_check) {
    o.detail << ", ray min eig " << r.ray_check->min_eig << ", value " << r.ray_check->value;
  }
  o.detail << ", " << secs << " s";
  o.require(r.status == SeparabilityStatus::kNotSeparable, "status");
  o.require(r.order_used == 3, "at k=3");
  o.require(r.infeasibility_ray.has_value() && r.ray_check && r.ray_check->passes, "ray attached");
  if (r.ray_check) {
    o.require(r.ray_check->min_eig >= -1e-7, "ray min eig");
    o.require(r.ray_check->value < 0.0, "ray value < 0");
  }
  if (max_seconds > 0) o.require(secs < max_seconds, "runtime");
}

void criterion_6(Outcome& o) { not_separable(o, small_entangled_example(), 30.0); }

void criterion_7(Outcome& o) {
  const KroneckerMatrix a = cyclic_matrix_example();
  const double pair = pairing(cyclic_example(), a);
  not_separable(o, a, 0.0);
  // A, read as the form (x (x) y)' A (x (x) y), is the cyclic form itself,
  // so the coefficient pairing is a sum of squares and stays positive.
  std::mt19937_64 rng(7);
  double gap = 0.0;
  for (int s = 0; s < 200; ++s) {
    const VectorXd u = random_in_K(rng, 3), v = random_in_K(rng, 3);
    VectorXd uv(9);
    for (int i = 0; i < 3; ++i) uv.segment(3 * i, 3) = u(i) * v;
    gap = std::max(gap, std::abs(uv.dot(a.matrix() * uv) - evaluate(cyclic_example(), u, v)));
  }
  o.detail << ", |<A, uu'(x)vv'> - cyclic(u, v)| " << gap << ", coefficient pairing " << pair;
  o.require(gap < 1e-12, "A does not reproduce the cyclic form");
}

void criterion_8(Outcome& o) { not_separable(o, index_sum_example(), 600.0); }

void separable(Outcome& o, const KroneckerMatrix& a, int want_atoms) {
  const auto t0 = std::chrono::steady_clock::now();
  const SeparabilityReport r = check_separability(a);
  const double secs = seconds_since(t0);
  o.detail << "status " << to_string(r.status) << ", " << r.atoms.size() << " atoms, rank "
           << r.moment_rank << ", residual " << r.reconstruction_residual << ", seed " << r.seed
           << (r.rounded ? ", rounded" : "") << ", " << secs << " s";
  o.require(r.status == SeparabilityStatus::kSeparable, "status");
  o.require(r.status == SeparabilityStatus::kSeparable && r.reconstruction_residual <= 1e-6,
            "residual <= 1e-6");
  o.require(verify_decomposition(a, r.atoms) <= 1e-6, "independent residual <= 1e-6");
  o.require(static_cast<int>(r.atoms.size()) == want_atoms,
            std::to_string(want_atoms) + " atoms");
  o.require(r.moment_rank == want_atoms, "moment rank " + std::to_string(want_atoms));
}

void criterion_9(Outcome& o) { separable(o, kronecker_sum_example(), 7); }

void criterion_10(Outcome& o) { separable(o, identity_plus_example(), 15); }

void criterion_11(Outcome& o) {
  struct Case {
    int p, q, r;
    std::uint64_t seed;
  };
  for (const Case c : {Case{3, 4, 5, 101}, Case{4, 4, 6, 102}}) {
    std::mt19937_64 rng(c.seed);
    std::vector<VectorXd> us, vs;
    MatrixXd sum = MatrixXd::Zero(c.p * c.q, c.p * c.q);
    for (int s = 0; s < c.r; ++s) {
      us.push_back(randn(rng, c.p));
      vs.push_back(randn(rng, c.q));
      sum += kron_rank1(us.back(), vs.back()).matrix();
    }
    const auto t0 = std::chrono::steady_clock::now();
    const SeparabilityReport rep = check_separability(KroneckerMatrix(c.p, c.q, sum));
    const double secs = seconds_since(t0);
    double worst = 0.0;
    for (int s = 0; s < c.r; ++s) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& t : rep.atoms) {
        const VectorXd& u = us[static_cast<std::size_t>(s)];
        const VectorXd& v = vs[static_cast<std::size_t>(s)];
        const double t1 = u.dot(t.a) / u.squaredNorm(), t2 = v.dot(t.b) / v.squaredNorm();
        const double e = std::max({(t1 * u - t.a).norm() / t.a.norm(), (t2 * v - t.b).norm() / t.b.norm(),
                                   std::abs(std::abs(t1 * t2) - 1.0)});
        best = std::min(best, e);
      }
      worst = std::max(worst, best);
    }
    o.detail << "(" << c.p << "," << c.q << ") " << c.r << " planted: " << to_string(rep.status)
             << ", " << rep.atoms.size() << " atoms, match " << worst << ", residual "
             << rep.reconstruction_residual << ", seed " << rep.seed << ", " << secs << " s; ";
    const std::string tag = "(" + std::to_string(c.p) + "," + std::to_string(c.q) + ") ";
    o.require(rep.status == SeparabilityStatus::kSeparable, tag + "status");
    o.require(static_cast<int>(rep.atoms.size()) == c.r, tag + "atom count");
    o.require(worst <= 1e-4, tag + "atoms match within 1e-4");
    o.require(rep.status == SeparabilityStatus::kSeparable && rep.reconstruction_residual <= 1e-6,
              tag + "residual");
  }
}

// (a) bound chain against the grid oracle, (b) monotone bounds over k = 3, 4.
void property_bounds(Outcome& o) {
  std::mt19937_64 rng(201);
  double worst_gap = 0.0, worst_chain = 0.0, worst_mono = 0.0;
  int solved = 0;
  for (int inst = 0; inst < 25; ++inst) {
    const BiQuadraticForm b = from_gram(2, 2, random_symmetric(rng, 4));
    const OracleResult grid = grid_min_bisphere_2x2(b, 2e-3);
    double prev = -std::numeric_limits<double>::infinity();
    for (int k : {3, 4}) {
      const SdpOutcome sol = solve(build_relaxation(b, k).sdp);
      if (sol.status != SdpStatus::kOptimal) continue;
      ++solved;
      const double slack = 1e-7 * (1 + std::abs(sol.primal_objective));
      worst_chain = std::max(worst_chain, sol.dual_objective - sol.primal_objective - slack);
      worst_chain = std::max(worst_chain, sol.primal_objective - grid.value - slack);
      worst_gap = std::max(worst_gap, std::abs(sol.primal_objective - grid.value));
      worst_mono = std::max(worst_mono, prev - sol.primal_objective);
      prev = sol.primal_objective;
    }
  }
  o.detail << "(a,b) " << solved << "/50 solves, chain violation " << worst_chain
           << ", |b - grid| " << worst_gap << ", monotonicity violation " << worst_mono << "; ";
  o.require(solved == 50, "(a) all relaxations solved");
  o.require(worst_chain <= 0.0, "(a) b2 <= b1 <= oracle");
  o.require(worst_gap <= 5e-3, "(a) agreement within 5e-3");
  o.require(worst_mono <= 1e-7, "(b) monotone over k");
}

// (c) necessary conditions on atom-built tms.
void property_necessary(Outcome& o) {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> ud(0.1, 2.0);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int p = 2 + inst % 3, q = 2 + (inst / 3) % 3, r = 1 + inst % 7;
    AtomicMeasure mu;
    for (int s = 0; s < r; ++s) mu.atoms.push_back({ud(rng), random_in_K(rng, p), random_in_K(rng, q)});
    const Tms w = tms_from_atoms(mu, p, q, 6);
    const BisphereConstraints k = bisphere_constraints(p, q);
    for (const auto& h : k.h)
      for (const auto& row : ideal_equality_rows(h, *w.basis))
        worst = std::max(worst, std::abs(row.apply(w.values)));
    worst = std::max(worst, -min_eigenvalue(moment_matrix(w, 3)));
    for (const auto& g : k.g) worst = std::max(worst, -min_eigenvalue(localizing_matrix(w, g, 3)));
  }
  o.detail << "(c) worst violation " << worst << "; ";
  o.require(worst <= 1e-8, "(c) necessary conditions within 1e-8");
}

// (d) extraction round trip.
void property_extraction(Outcome& o) {
  std::mt19937_64 rng(203);
  std::uniform_real_distribution<double> ud(0.1, 2.0);
  double worst = 0.0;
  int failures = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const int p = 2 + inst % 3, q = 2 + (inst / 3) % 3, r = 1 + inst % 6;
    AtomicMeasure mu;
    for (int s = 0; s < r; ++s) mu.atoms.push_back({ud(rng), random_in_K(rng, p), random_in_K(rng, q)});
    const Tms w = tms_from_atoms(mu, p, q, 6);
    try {
      const ExtractionResult ex = extract_atoms(w, 3);
      const Tms back = tms_from_atoms(ex.measure, p, q, 6);
      worst = std::max(worst, (back.values - w.values).lpNorm<Eigen::Infinity>());
    } catch (const ExtractionFailed&) {
      ++failures;
    }
  }
  o.detail << "(d) " << failures << " failures, round trip " << worst << "; ";
  o.require(failures == 0 && worst <= 1e-5, "(d) round trip within 1e-5");
}

// (e) verdicts do not depend on the seed of R.
void property_seed_invariance(Outcome& o) {
  std::mt19937_64 rng(204);
  int disagreements = 0, separable = 0;
  for (int inst = 0; inst < 10; ++inst) {
    const int p = 2, q = 2 + inst % 2, r = 1 + inst % 3;
    MatrixXd sum = MatrixXd::Zero(p * q, p * q);
    for (int s = 0; s < r; ++s) sum += kron_rank1(random_in_K(rng, p), random_in_K(rng, q)).matrix();
    const KroneckerMatrix a(p, q, sum);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SeparabilityOptions opts;
      opts.seed = 1000 * seed;
      const SeparabilityReport rep = check_separability(a, opts);
      if (rep.status == SeparabilityStatus::kSeparable) ++separable;
      if (rep.status != SeparabilityStatus::kSeparable) ++disagreements;
    }
  }
  o.detail << "(e) " << separable << "/100 separable; ";
  o.require(disagreements == 0, "(e) same verdict for every seed");
}

// (f) solver on planted problems and the trivial infeasible one.
void property_solver(Outcome& o) {
  std::mt19937_64 rng(205);
  double worst = 0.0;
  int bad = 0;
  for (int inst = 0; inst < 25; ++inst) {
    const int n = 3 + inst % 6, m = 3 + inst % 5, r = 1 + inst % (m - 1);
    const PlantedSdp planted = planted_sdp(rng, n, m, r, inst % 3);
    const SdpOutcome sol = solve(planted.problem);
    if (sol.status != SdpStatus::kOptimal) {
      ++bad;
      continue;
    }
    worst = std::max(worst, std::abs(sol.primal_objective - planted.value) /
                                (1 + std::abs(planted.value)));
  }
  const SdpProblem infeasible = trivially_infeasible_sdp();
  const SdpOutcome sol = solve(infeasible);
  const bool certified = sol.status == SdpStatus::kPrimalInfeasible && sol.certificate &&
                         check_certificate(infeasible, *sol.certificate).passes;
  o.detail << "(f) " << bad << " not optimal, objective error " << worst
           << (certified ? ", infeasible instance certified" : ", infeasible instance not certified");
  o.require(bad == 0 && worst <= 1e-7, "(f) planted optima within 1e-7");
  o.require(certified, "(f) infeasibility certificate");
}

void criterion_12(Outcome& o) {
  property_bounds(o);
  property_necessary(o);
  property_extraction(o);
  property_seed_invariance(o);
  property_solver(o);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"positivity, 2x2 Gram example", criterion_1},
      {"positivity, 2x2 polynomial example", criterion_2},
      {"positivity, 3x3 tensor example", criterion_3},
      {"positivity, cyclic 3x3 example", criterion_4},
      {"positivity, 4x4 harmonic example", criterion_5},
      {"separability, 2x2 entangled example", criterion_6},
      {"separability, 3x3 A1 + 2A2 - A3/2", criterion_7},
      {"separability, 4x4 i+j+k+l", criterion_8},
      {"separability, 2x3 Kronecker sum", criterion_9},
      {"separability, I3 (x) I3 + A2", criterion_10},
      {"separability, planted recovery", criterion_11},
      {"property suite", criterion_12},
  };
  // optional: run only the listed criteria
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n >= 1 && n <= static_cast<int>(criteria.size())) selected[static_cast<std::size_t>(n - 1)] = true;
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failed;
    std::printf("criterion %2zu: %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

#pragma once

// Membership of a Kronecker-subspace matrix in the separable cone: either an
// S-decomposition read off a flat moment vector or an infeasibility ray of the
// moment relaxation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posmap/errors.hpp"
#include "posmap/extraction.hpp"
#include "posmap/forms.hpp"
#include "posmap/moments.hpp"
#include "posmap/relaxation.hpp"
#include "posmap/sdp.hpp"

namespace posmap {

/// R = [z]_3^T G [z]_3 with G PSD, a generic degree-6 SOS objective.
struct SosObjective {
  std::shared_ptr<const MonomialBasis> basis;  ///< degree <= 3 monomials
  Eigen::MatrixXd gram;

  int p() const { return basis->p(); }
  int q() const { return basis->q(); }

  /// Coefficients of R in `target` (degree bound >= 6).
  Eigen::VectorXd coefficients_in(const MonomialBasis& target) const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(target.size()));
    const auto n = static_cast<Eigen::Index>(basis->size());
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) {
        const Exponent e = add_exponents((*basis)[static_cast<std::size_t>(a)],
                                         (*basis)[static_cast<std::size_t>(b)]);
        c(static_cast<Eigen::Index>(target.index_of(e))) += gram(a, b);
      }
    return c;
  }

  double evaluate(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd m = monomial_vector(*basis, z);
    return m.dot(gram * m);
  }
};

inline SosObjective random_sos_objective(int p, int q, std::uint64_t seed) {
  SosObjective r;
  r.basis = std::make_shared<const MonomialBasis>(p, q, 3);
  const auto n = static_cast<Eigen::Index>(r.basis->size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = nd(rng);
  r.gram = g.transpose() * g;
  r.gram /= r.gram.norm();
  return r;
}

/// Relaxation with w|_E = a fixed, the sphere ideal, M_k and the sign cuts.
inline Relaxation build_relaxation(const Eigen::VectorXd& a, const SosObjective& r,
                                   int k) {
  if (k < 3) throw OrderError("relaxation order must be at least 3");
  const int p = r.p(), q = r.q();
  const OmegaIndex omega(p, q);
  if (static_cast<std::size_t>(a.size()) != omega.size()) {
    throw InputError("E-vector needs p(p+1)q(q+1)/4 = " + std::to_string(omega.size()) +
                     " entries");
  }
  Relaxation rel;
  rel.order = k;
  rel.basis = std::make_shared<const MonomialBasis>(p, q, 2 * k);
  rel.sdp = SdpProblem(static_cast<int>(rel.basis->size()));
  rel.sdp.cost = r.coefficients_in(*rel.basis);
  std::vector<SparseRow> rows;
  const auto& ts = omega.tuples();
  for (std::size_t n = 0; n < ts.size(); ++n) {
    SparseRow row;
    row.terms.emplace_back(static_cast<Eigen::Index>(rel.basis->index_of(omega.monomial(ts[n]))),
                           1.0);
    row.rhs = a(static_cast<Eigen::Index>(n));
    rows.push_back(std::move(row));
  }
  const auto cons = bisphere_constraints(p, q);
  detail::add_semialgebraic_constraints(rel, cons.h, cons.g, std::move(rows));
  return rel;
}

inline Relaxation build_relaxation(const KroneckerMatrix& a, const SosObjective& r, int k) {
  return build_relaxation(project_to_E(a), r, k);
}

/// One term (a a^T) (x) (b b^T) of an S-decomposition; a = c^{1/4} u and
/// b = c^{1/4} v for the unit atom (u, v) of weight c.
struct SeparableAtom {
  Eigen::VectorXd a, b;
  double weight = 0.0;
};

inline Eigen::MatrixXd decomposition_sum(int p, int q, const std::vector<SeparableAtom>& atoms) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p * q, p * q);
  for (const auto& t : atoms) s += kronecker(t.a * t.a.transpose(), t.b * t.b.transpose());
  return s;
}

/// ||A - sum (a a^T) (x) (b b^T)||_F / (1 + ||A||_F).
inline double verify_decomposition(const KroneckerMatrix& a,
                                   const std::vector<SeparableAtom>& atoms) {
  for (const auto& t : atoms) {
    if (t.a.size() != a.p() || t.b.size() != a.q()) {
      throw InputError("decomposition term has wrong dimension");
    }
  }
  return (a.matrix() - decomposition_sum(a.p(), a.q(), atoms)).norm() /
         (1.0 + a.matrix().norm());
}

/// Least-squares weights of unit points against A; tiny weights are dropped
/// and the fit repeated, clearly negative ones raise ExtractionFailed.
inline Eigen::VectorXd fit_decomposition_weights(const KroneckerMatrix& a,
                                                 std::vector<Eigen::VectorXd>& points) {
  const int p = a.p(), q = a.q();
  const Eigen::Map<const Eigen::VectorXd> target(a.matrix().data(), a.matrix().size());
  for (;;) {
    Eigen::MatrixXd cols(a.matrix().size(), static_cast<Eigen::Index>(points.size()));
    for (std::size_t s = 0; s < points.size(); ++s) {
      const Eigen::VectorXd u = points[s].head(p), v = points[s].tail(q);
      const Eigen::MatrixXd k = kronecker(u * u.transpose(), v * v.transpose());
      cols.col(static_cast<Eigen::Index>(s)) = Eigen::Map<const Eigen::VectorXd>(k.data(), k.size());
    }
    const Eigen::VectorXd c = cols.colPivHouseholderQr().solve(target);
    Eigen::Index worst = 0;
    const double cmin = c.size() ? c.minCoeff(&worst) : 1.0;
    const double scale = std::max(1.0, c.size() ? c.cwiseAbs().maxCoeff() : 1.0);
    if (cmin < -1e-6 * scale) {
      throw ExtractionFailed("fitted weight " + std::to_string(cmin) + " is negative");
    }
    if (cmin < 1e-8 * scale) {
      points.erase(points.begin() + worst);
      if (points.empty()) throw ExtractionFailed("no atom with positive weight");
      continue;
    }
    return c;
  }
}

/// Gauss-Newton on the entries of A over the terms (a_s, b_s).
inline void refine_decomposition(const KroneckerMatrix& a, std::vector<SeparableAtom>& atoms,
                                 int max_iter = 50) {
  const int p = a.p(), q = a.q(), m = p + q;
  const OmegaIndex omega(p, q);
  const auto& ts = omega.tuples();
  const Eigen::VectorXd target = project_to_E(a);
  const auto ns = static_cast<Eigen::Index>(atoms.size());
  const auto pack = [&] {
    Eigen::VectorXd x(ns * m);
    for (Eigen::Index s = 0; s < ns; ++s)
      x.segment(s * m, m) << atoms[static_cast<std::size_t>(s)].a, atoms[static_cast<std::size_t>(s)].b;
    return x;
  };
  const auto residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd f = -target;
    for (std::size_t n = 0; n < ts.size(); ++n) {
      const auto& t = ts[n];
      for (Eigen::Index s = 0; s < ns; ++s) {
        const auto z = x.segment(s * m, m);
        f(static_cast<Eigen::Index>(n)) += z(t.i) * z(p + t.j) * z(t.k) * z(p + t.l);
      }
    }
    return f;
  };
  Eigen::VectorXd x = pack(), f = residual(x);
  double fn = f.norm();
  for (int it = 0; it < max_iter && fn > 1e-15 * (1.0 + target.norm()); ++it) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(f.size(), x.size());
    for (std::size_t n = 0; n < ts.size(); ++n) {
      const auto& t = ts[n];
      const auto r = static_cast<Eigen::Index>(n);
      const int idx[4] = {t.i, p + t.j, t.k, p + t.l};
      for (Eigen::Index s = 0; s < ns; ++s) {
        const auto z = x.segment(s * m, m);
        for (int f1 = 0; f1 < 4; ++f1) {
          double prod = 1.0;
          for (int f2 = 0; f2 < 4; ++f2)
            if (f2 != f1) prod *= z(idx[f2]);
          j(r, s * m + idx[f1]) += prod;
        }
      }
    }
    const Eigen::VectorXd step = j.completeOrthogonalDecomposition().solve(f);
    const Eigen::VectorXd next = x - step;
    const Eigen::VectorXd fnext = residual(next);
    if (!(fnext.norm() < fn)) break;
    x = next;
    f = fnext;
    fn = f.norm();
  }
  for (Eigen::Index s = 0; s < ns; ++s) {
    auto& t = atoms[static_cast<std::size_t>(s)];
    t.a = x.segment(s * m, p);
    t.b = x.segment(s * m + p, q);
    t.weight = t.a.squaredNorm() * t.b.squaredNorm();
  }
}

enum class SeparabilityStatus { kSeparable, kNotSeparable, kInconclusive };

inline const char* to_string(SeparabilityStatus s) {
  switch (s) {
    case SeparabilityStatus::kSeparable: return "Separable";
    case SeparabilityStatus::kNotSeparable: return "NotSeparable";
    case SeparabilityStatus::kInconclusive: return "Inconclusive";
  }
  return "?";
}

struct SeparabilityTimings {
  double build_seconds = 0.0;
  double solve_seconds = 0.0;
  double extract_seconds = 0.0;
  double total_seconds = 0.0;
};

struct SeparabilityReport {
  SeparabilityStatus status = SeparabilityStatus::kInconclusive;
  std::vector<SeparableAtom> atoms;
  double reconstruction_residual = 0.0;
  std::optional<FarkasRay> infeasibility_ray;
  std::optional<CertificateCheck> ray_check;
  int order_used = 0;
  int flat_t = 0;
  int moment_rank = 0;
  std::uint64_t seed = 0;
  /// Atoms were read at a rank threshold matched to the solver accuracy and
  /// refined on A before verification.
  bool rounded = false;
  SeparabilityTimings timings;
  std::vector<std::string> diagnostics;
};

struct SeparabilityOptions {
  int k_max = 6;
  std::uint64_t seed = 0;
  FlatnessTolerances flatness;
  SdpOptions solver;
  double decomposition_tol = 1e-6;
  std::function<void(const Relaxation&)> on_relaxation;
  bool rounding = true;
  double rounding_gap = 100.0;
  /// Further objectives R (seeds seed+1, ...) tried at an order whose optimum
  /// is not flat before moving to the next order.
  int objective_retries = 3;
};

namespace detail {

// Unit points to weighted terms, refit on A, optional refinement, verified.
inline std::optional<std::vector<SeparableAtom>> fold_atoms(const KroneckerMatrix& a,
                                                            std::vector<Eigen::VectorXd> pts,
                                                            bool refine, double tol,
                                                            double& residual,
                                                            std::string& why) {
  const int p = a.p(), q = a.q();
  Eigen::VectorXd c;
  try {
    c = fit_decomposition_weights(a, pts);
  } catch (const ExtractionFailed& e) {
    why = e.what();
    return std::nullopt;
  }
  std::vector<SeparableAtom> out;
  for (std::size_t s = 0; s < pts.size(); ++s) {
    const double cs = c(static_cast<Eigen::Index>(s));
    const double r4 = std::pow(cs, 0.25);
    out.push_back({r4 * pts[s].head(p), r4 * pts[s].tail(q), cs});
  }
  residual = verify_decomposition(a, out);
  if (residual > tol && refine) {
    refine_decomposition(a, out);
    residual = verify_decomposition(a, out);
  }
  if (residual > tol) {
    why = "decomposition residual " + std::to_string(residual) + " exceeds tolerance";
    return std::nullopt;
  }
  for (auto& t : out) {
    if (t.a.sum() < 0) t.a = -t.a;
    if (t.b.sum() < 0) t.b = -t.b;
  }
  return out;
}

}  // namespace detail

namespace detail {

// Strict flatness scan, then the rounding fallback, on one optimal solve.
inline bool read_decomposition(const KroneckerMatrix& a, const Tms& w, int k,
                               const SdpOutcome& sol, const SeparabilityOptions& opts,
                               SeparabilityReport& rep) {
  const auto cons = bisphere_constraints(a.p(), a.q());
  const std::string where = "k=" + std::to_string(k) + " seed=" + std::to_string(rep.seed);
  ExtractionOptions xo;
  xo.rank_tol = opts.flatness.rank_tol;
  xo.rel_rank_tol = opts.flatness.rel_rank_tol;
  xo.seed = opts.seed;
  xo.reconstruction_tol = std::numeric_limits<double>::infinity();
  const auto attempt = [&](int t, const ExtractionOptions& eo, bool refine,
                           const std::string& tag) {
    try {
      const ExtractionResult ex = extract_atoms(w, t, eo);
      std::vector<Eigen::VectorXd> pts;
      for (const auto& at : ex.measure.atoms) pts.push_back(joint_point(at.u, at.v));
      std::string why;
      auto terms = fold_atoms(a, pts, refine, opts.decomposition_tol,
                              rep.reconstruction_residual, why);
      if (!terms) {
        rep.diagnostics.push_back(where + " t=" + std::to_string(t) + tag + ": " + why);
        return false;
      }
      rep.atoms = std::move(*terms);
      rep.flat_t = t;
      rep.moment_rank = ex.rank;
      return true;
    } catch (const ExtractionFailed& e) {
      rep.diagnostics.push_back(where + " t=" + std::to_string(t) + tag + ": " + e.what());
      return false;
    }
  };
  for (int t = 2; t <= k; ++t) {
    const FlatnessReport fl =
        flatness_check(w, t, cons.h, cons.g, FlatnessMode::kInner, opts.flatness);
    if (fl.is_flat && attempt(t, xo, false, "")) return true;
  }
  if (!opts.rounding) return false;
  const double eps =
      std::max({sol.primal_residual, sol.dual_residual, std::abs(sol.gap), opts.solver.tol});
  for (int t = 2; t <= k; ++t) {
    const Eigen::VectorXd hi = moment_spectrum(w, t);
    const double floor = 1e-2 * std::sqrt(eps) * hi(0);
    double thr = 0.0;
    const int rlo = gapped_rank(moment_spectrum(w, t - 1), floor, opts.rounding_gap);
    const int rhi = gapped_rank(hi, floor, opts.rounding_gap, &thr);
    if (rlo <= 0 || rlo != rhi) continue;
    ExtractionOptions lx = xo;
    lx.rank_tol = thr;
    lx.rel_rank_tol = 0.0;
    lx.retries = 8;
    lx.sphere_tol = 1e-1;
    if (attempt(t, lx, true, " rounding")) {
      rep.rounded = true;
      return true;
    }
  }
  rep.diagnostics.push_back(where + ": no flat truncation");
  return false;
}

}  // namespace detail

inline SeparabilityReport check_separability(const KroneckerMatrix& a,
                                             const SeparabilityOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto secs = [](clock::time_point x, clock::time_point z) {
    return std::chrono::duration<double>(z - x).count();
  };
  if (opts.k_max < 3) throw OrderError("k_max must be at least 3");
  const int p = a.p(), q = a.q();
  SeparabilityReport rep;
  rep.seed = opts.seed;
  const Eigen::VectorXd avec = project_to_E(a);
  const auto finish = [&] {
    rep.timings.total_seconds = secs(t0, clock::now());
    return rep;
  };

  for (int k = 3; k <= opts.k_max; ++k) {
    const std::string where = "k=" + std::to_string(k);
    auto tb = clock::now();
    Relaxation rel = build_relaxation(avec, random_sos_objective(p, q, opts.seed), k);
    rep.timings.build_seconds += secs(tb, clock::now());
    rep.order_used = k;
    for (int attempt = 0; attempt <= opts.objective_retries; ++attempt) {
      rep.seed = opts.seed + static_cast<std::uint64_t>(attempt);
      if (attempt > 0) {
        rel.sdp.cost = random_sos_objective(p, q, rep.seed).coefficients_in(*rel.basis);
      }
      if (opts.on_relaxation) opts.on_relaxation(rel);
      const SdpOutcome sol = solve(rel.sdp, opts.solver);
      rep.timings.solve_seconds += sol.seconds;
      if (sol.status == SdpStatus::kPrimalInfeasible) {
        // Feasibility does not depend on R.
        if (sol.certificate) {
          const CertificateCheck chk = check_certificate(rel.sdp, *sol.certificate);
          if (chk.passes) {
            rep.status = SeparabilityStatus::kNotSeparable;
            rep.infeasibility_ray = sol.certificate;
            rep.ray_check = chk;
            return finish();
          }
          rep.diagnostics.push_back(where + ": infeasibility ray failed its check");
        } else {
          rep.diagnostics.push_back(where + ": infeasible without a ray");
        }
        break;
      }
      if (sol.status != SdpStatus::kOptimal) {
        rep.diagnostics.push_back(where + " seed=" + std::to_string(rep.seed) + ": solver " +
                                  to_string(sol.status) + " (" + sol.message + ")");
        continue;
      }
      const auto te = clock::now();
      const bool found = detail::read_decomposition(a, Tms(rel.basis, sol.w), k, sol, opts, rep);
      rep.timings.extract_seconds += secs(te, clock::now());
      if (found) {
        rep.status = SeparabilityStatus::kSeparable;
        return finish();
      }
    }
  }
  rep.seed = opts.seed;
  rep.diagnostics.push_back("no decomposition found up to k=" + std::to_string(opts.k_max));
  return finish();
}

}  // namespace posmap

#pragma once

// Positivity of a linear map: global minimum of its bi-quadratic form over
// the bi-sphere through the KKT-augmented moment hierarchy.

#include <chrono>
#include <functional>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
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

struct KktProblem {
  Polynomial objective;
  std::vector<Polynomial> h;  ///< x^T x - 1, y^T y - 1, gradient conditions
  std::vector<Polynomial> g;  ///< 1^T x, 1^T y
};

/// Sphere equations, their Lagrange conditions and the two sign cuts.
inline KktProblem build_kkt_problem(const BiQuadraticForm& b) {
  KktProblem out;
  out.objective = b.to_polynomial();
  auto [h, g] = bisphere_constraints(b.p(), b.q());
  out.h = std::move(h);
  for (auto& gp : gradient_polynomials(b)) out.h.push_back(std::move(gp));
  out.g = std::move(g);
  return out;
}

inline Relaxation build_relaxation(const BiQuadraticForm& b, int k) {
  if (k < 3) throw OrderError("relaxation order must be at least 3");
  const KktProblem kkt = build_kkt_problem(b);
  Relaxation rel;
  rel.order = k;
  rel.basis = std::make_shared<const MonomialBasis>(b.p(), b.q(), 2 * k);
  rel.sdp = SdpProblem(static_cast<int>(rel.basis->size()));
  rel.sdp.cost = kkt.objective.coefficients_in(*rel.basis);
  SparseRow mass;
  mass.terms.emplace_back(0, 1.0);
  mass.rhs = 1.0;
  detail::add_semialgebraic_constraints(rel, kkt.h, kkt.g, {mass});
  return rel;
}

enum class PositivityStatus { kPositive, kNotPositive, kInconclusive };

inline const char* to_string(PositivityStatus s) {
  switch (s) {
    case PositivityStatus::kPositive: return "Positive";
    case PositivityStatus::kNotPositive: return "NotPositive";
    case PositivityStatus::kInconclusive: return "Inconclusive";
  }
  return "?";
}

struct BoundRecord {
  int k = 0;
  double primal = 0.0;  ///< moment value b_k^(1)
  double dual = 0.0;    ///< SOS value b_k^(2)
  std::string solver_status;
};

struct Minimizer {
  Eigen::VectorXd u, v;
  double value = 0.0;
  double weight = 0.0;
};

struct Timings {
  double build_seconds = 0.0;
  double solve_seconds = 0.0;
  double extract_seconds = 0.0;
  double total_seconds = 0.0;
};

struct PositivityReport {
  PositivityStatus status = PositivityStatus::kInconclusive;
  double b_min = 0.0;
  bool has_b_min = false;
  bool boundary = false;
  std::vector<BoundRecord> bound_sequence;
  std::vector<Minimizer> minimizers;
  int order_used = 0;
  int flat_t = 0;
  int moment_rank = 0;
  /// Minimizers were recovered from an inexact moment matrix, polished on the
  /// KKT system and certified against the SOS bound.
  bool rounded = false;
  Timings timings;
  std::vector<std::string> diagnostics;
};

struct PositivityOptions {
  int k_max = 6;
  double positivity_tol = 1e-6;
  std::uint64_t seed = 0;
  FlatnessTolerances flatness;
  SdpOptions solver;
  /// Receives each relaxation before it is solved (used for --dump-sdp).
  std::function<void(const Relaxation&)> on_relaxation;
  /// Fallback when strict flatness or extraction fails at an optimal solve.
  bool rounding = true;
  double rounding_gap = 100.0;
  double certificate_tol = 1e-6;
};

namespace detail {

struct RoundedMinimum {
  std::vector<Eigen::VectorXd> points;
  Eigen::VectorXd weights;
  double value = 0.0;
  int t = 0;
};

// Rank read at a threshold matched to the solver accuracy, atoms polished to
// exact KKT points, and the atomic moment vector checked against the SOS
// bound. Every atom must reach the bound, so each one is a global minimizer.
inline std::optional<RoundedMinimum> round_minimum(const BiQuadraticForm& b,
                                                   const KktProblem& kkt, const Tms& w,
                                                   int k, const SdpOutcome& sol,
                                                   const PositivityOptions& opts,
                                                   std::vector<std::string>& diag) {
  const int p = b.p(), q = b.q();
  const double eps = std::max({sol.primal_residual, sol.dual_residual, std::abs(sol.gap),
                               opts.solver.tol});
  const double bound = sol.dual_objective;
  const double tol = opts.certificate_tol * (1.0 + std::abs(bound));
  const std::string where = "k=" + std::to_string(k);
  for (int t = 2; t <= k - 1; ++t) {
    const Eigen::VectorXd hi = moment_spectrum(w, t + 1);
    const double floor = 1e-2 * std::sqrt(eps) * hi(0);
    double thr = 0.0;
    const int r = gapped_rank(moment_spectrum(w, t), floor, opts.rounding_gap);
    if (r <= 0 || r != gapped_rank(hi, floor, opts.rounding_gap, &thr)) continue;
    ExtractionOptions xo;
    xo.rank_tol = thr;
    xo.rel_rank_tol = 0.0;
    xo.seed = opts.seed;
    xo.retries = 8;
    xo.reconstruction_tol = std::numeric_limits<double>::infinity();
    xo.sphere_tol = 1e-1;
    ExtractionResult ex;
    try {
      ex = extract_atoms(w, t + 1, xo);
    } catch (const ExtractionFailed& e) {
      diag.push_back(where + " t=" + std::to_string(t) + " rounding: " + e.what());
      continue;
    }
    std::vector<Eigen::VectorXd> pts;
    bool ok = true;
    for (const auto& a : ex.measure.atoms) {
      Eigen::VectorXd z(p + q);
      z << a.u, a.v;
      if (polish_point(kkt.h, z) > 1e-10) {
        ok = false;
        break;
      }
      z.head(p).normalize();
      z.tail(q).normalize();
      if (z.head(p).sum() < -opts.flatness.eq_tol) z.head(p) *= -1.0;
      if (z.tail(q).sum() < -opts.flatness.eq_tol) z.tail(q) *= -1.0;
      const bool dup = std::any_of(pts.begin(), pts.end(), [&](const Eigen::VectorXd& y) {
        return (y - z).lpNorm<Eigen::Infinity>() < 1e-8;
      });
      if (!dup) pts.push_back(std::move(z));
    }
    if (!ok) {
      diag.push_back(where + " t=" + std::to_string(t) + " rounding: polish did not converge");
      continue;
    }
    RoundedMinimum out;
    out.t = t;
    for (const auto& z : pts) {
      const double val = b.evaluate(z.head(p), z.tail(q));
      if (val - bound > tol) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      diag.push_back(where + " t=" + std::to_string(t) + " rounding: atom above the bound");
      continue;
    }
    double err = 0.0;
    try {
      out.weights = fit_weights(w, t + 1, pts, err);
    } catch (const ExtractionFailed& e) {
      diag.push_back(where + " t=" + std::to_string(t) + " rounding: " + e.what());
      continue;
    }
    out.weights /= out.weights.sum();
    AtomicMeasure mu;
    for (std::size_t s = 0; s < pts.size(); ++s)
      mu.atoms.push_back({out.weights(static_cast<Eigen::Index>(s)), pts[s].head(p),
                          pts[s].tail(q)});
    const Tms ws = tms_from_atoms(mu, p, q, w.degree());
    out.value = ws.apply(b.to_polynomial());
    const FlatnessReport fl =
        flatness_check(ws, t, kkt.h, kkt.g, FlatnessMode::kOuter, opts.flatness);
    if (!fl.is_flat || out.value - bound > tol) {
      diag.push_back(where + " t=" + std::to_string(t) + " rounding: not certified");
      continue;
    }
    out.points = std::move(pts);
    return out;
  }
  return std::nullopt;
}

}  // namespace detail

inline PositivityReport check_positivity(const BiQuadraticForm& b,
                                         const PositivityOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const auto secs = [](clock::time_point a, clock::time_point z) {
    return std::chrono::duration<double>(z - a).count();
  };
  if (opts.k_max < 3) throw OrderError("k_max must be at least 3");
  PositivityReport rep;
  const KktProblem kkt = build_kkt_problem(b);
  ExtractionOptions xo;
  xo.rank_tol = opts.flatness.rank_tol;
  xo.rel_rank_tol = opts.flatness.rel_rank_tol;
  xo.seed = opts.seed;

  for (int k = 3; k <= opts.k_max; ++k) {
    auto tb = clock::now();
    const Relaxation rel = build_relaxation(b, k);
    if (opts.on_relaxation) opts.on_relaxation(rel);
    rep.timings.build_seconds += secs(tb, clock::now());
    const SdpOutcome sol = solve(rel.sdp, opts.solver);
    rep.timings.solve_seconds += sol.seconds;
    rep.order_used = k;
    if (sol.status != SdpStatus::kOptimal) {
      rep.diagnostics.push_back("k=" + std::to_string(k) + ": solver " +
                                to_string(sol.status) + " (" + sol.message + ")");
      continue;
    }
    rep.bound_sequence.push_back({k, sol.primal_objective, sol.dual_objective,
                                  to_string(sol.status)});
    const Tms w(rel.basis, sol.w);
    for (int t = 2; t <= k - 1; ++t) {
      const FlatnessReport fl =
          flatness_check(w, t, kkt.h, kkt.g, FlatnessMode::kOuter, opts.flatness);
      if (!fl.is_flat) continue;
      const auto te = clock::now();
      try {
        const ExtractionResult ex = extract_atoms(w, t + 1, xo);
        rep.timings.extract_seconds += secs(te, clock::now());
        rep.b_min = sol.primal_objective;
        rep.has_b_min = true;
        rep.flat_t = t;
        rep.moment_rank = fl.rank_low;
        for (const auto& a : ex.measure.atoms) {
          rep.minimizers.push_back({a.u, a.v, b.evaluate(a.u, a.v), a.weight});
        }
        if (rep.b_min >= -opts.positivity_tol) {
          rep.status = PositivityStatus::kPositive;
          rep.boundary = std::abs(rep.b_min) <= opts.positivity_tol;
        } else {
          rep.status = PositivityStatus::kNotPositive;
        }
        rep.timings.total_seconds = secs(t0, clock::now());
        return rep;
      } catch (const ExtractionFailed& e) {
        rep.timings.extract_seconds += secs(te, clock::now());
        rep.diagnostics.push_back("k=" + std::to_string(k) + " t=" +
                                  std::to_string(t) + ": " + e.what());
      }
    }
    if (!opts.rounding) continue;
    const auto te = clock::now();
    const auto rm = detail::round_minimum(b, kkt, w, k, sol, opts, rep.diagnostics);
    rep.timings.extract_seconds += secs(te, clock::now());
    if (!rm) continue;
    rep.rounded = true;
    rep.b_min = rm->value;
    rep.has_b_min = true;
    rep.flat_t = rm->t;
    rep.moment_rank = static_cast<int>(rm->points.size());
    for (std::size_t s = 0; s < rm->points.size(); ++s) {
      const Eigen::VectorXd u = rm->points[s].head(b.p()), v = rm->points[s].tail(b.q());
      rep.minimizers.push_back({u, v, b.evaluate(u, v), rm->weights(static_cast<Eigen::Index>(s))});
    }
    if (rep.b_min >= -opts.positivity_tol) {
      rep.status = PositivityStatus::kPositive;
      rep.boundary = std::abs(rep.b_min) <= opts.positivity_tol;
    } else {
      rep.status = PositivityStatus::kNotPositive;
    }
    rep.timings.total_seconds = secs(t0, clock::now());
    return rep;
  }
  rep.diagnostics.push_back("no flat truncation up to k=" + std::to_string(opts.k_max));
  rep.timings.total_seconds = secs(t0, clock::now());
  return rep;
}

}  // namespace posmap

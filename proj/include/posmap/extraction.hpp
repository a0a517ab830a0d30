#pragma once

// Recovery of a finitely atomic measure from a flat moment matrix through
// multiplication operators on a column basis and a common real Schur form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posmap/errors.hpp"
#include "posmap/forms.hpp"
#include "posmap/moments.hpp"

namespace posmap {

struct ExtractionOptions {
  double rank_tol = 1e-6;
  double rel_rank_tol = 1e-9;
  std::uint64_t seed = 0;
  int retries = 3;
  double separation_tol = 1e-8;
  double reconstruction_tol = 1e-5;
  /// Atoms are expected on the bi-sphere; they are renormalized when within
  /// `sphere_tol` of it and rejected otherwise.
  bool on_bisphere = true;
  double sphere_tol = 1e-4;
  /// Flip u (resp. v) when 1^T u < -sign_tol.
  double sign_tol = 1e-8;
};

struct ExtractionResult {
  AtomicMeasure measure;
  int rank = 0;
  double reconstruction_error = 0.0;  ///< max-norm vs w|_{2t}
  int attempts = 0;
};

namespace detail {

struct SchurAttempt {
  bool ok = false;
  Eigen::MatrixXd points;  // num_vars x r
};

inline SchurAttempt schur_points(const std::vector<Eigen::MatrixXd>& shifts,
                                 std::mt19937_64& rng, double sep_tol) {
  const auto r = shifts.front().rows();
  std::normal_distribution<double> nd;
  Eigen::MatrixXd comb = Eigen::MatrixXd::Zero(r, r);
  for (const auto& n : shifts) comb += nd(rng) * n;
  Eigen::RealSchur<Eigen::MatrixXd> schur(comb);
  SchurAttempt out;
  if (schur.info() != Eigen::Success) return out;
  const Eigen::MatrixXd& t = schur.matrixT();
  const double scale = std::max(1.0, t.cwiseAbs().maxCoeff());
  for (Eigen::Index s = 0; s + 1 < r; ++s) {
    if (std::abs(t(s + 1, s)) > 1e-10 * scale) return out;  // complex pair
  }
  std::vector<double> diag(static_cast<std::size_t>(r));
  for (Eigen::Index s = 0; s < r; ++s) diag[static_cast<std::size_t>(s)] = t(s, s);
  std::sort(diag.begin(), diag.end());
  for (std::size_t s = 1; s < diag.size(); ++s) {
    if (diag[s] - diag[s - 1] < sep_tol * scale) return out;
  }
  const Eigen::MatrixXd& q = schur.matrixU();
  out.points.resize(static_cast<Eigen::Index>(shifts.size()), r);
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    for (Eigen::Index s = 0; s < r; ++s) {
      out.points(static_cast<Eigen::Index>(i), s) =
          q.col(s).dot(shifts[i] * q.col(s));
    }
  }
  out.ok = true;
  return out;
}

}  // namespace detail

/// Least-squares weights of `points` (columns z_s) against w|_{2t}.
/// Tiny negative weights are dropped and the fit repeated.
inline Eigen::VectorXd fit_weights(const Tms& w, int t,
                                   std::vector<Eigen::VectorXd>& points,
                                   double& max_error) {
  const MonomialBasis basis(w.p(), w.q(), 2 * t);
  const auto n = static_cast<Eigen::Index>(basis.size());
  const Eigen::VectorXd target = w.values.head(n);
  for (;;) {
    Eigen::MatrixXd a(n, static_cast<Eigen::Index>(points.size()));
    for (std::size_t s = 0; s < points.size(); ++s)
      a.col(static_cast<Eigen::Index>(s)) = monomial_vector(basis, points[s]);
    Eigen::VectorXd c = a.colPivHouseholderQr().solve(target);
    Eigen::Index worst = 0;
    const double cmin = c.size() ? c.minCoeff(&worst) : 1.0;
    if (cmin < -1e-6) {
      throw ExtractionFailed("fitted weight " + std::to_string(cmin) +
                             " is negative");
    }
    if (cmin < 1e-8) {
      points.erase(points.begin() + worst);
      if (points.empty()) throw ExtractionFailed("no atom with positive weight");
      continue;
    }
    max_error = (a * c - target).lpNorm<Eigen::Infinity>();
    return c;
  }
}

/// Extracts atoms from the moment matrix M_t(w), assumed flat over M_{t-1}
/// (rank M_{t-1}(w) = rank M_t(w)). Needs deg(w) >= 2t.
inline ExtractionResult extract_atoms(const Tms& w, int t,
                                      const ExtractionOptions& opts = {}) {
  if (t < 1 || 2 * t > w.degree()) {
    throw StructuralError("extraction order out of range for this tms");
  }
  const int p = w.p(), q = w.q(), nv = p + q;
  const Tms top = w.truncate(2 * t);
  const Eigen::MatrixXd m = moment_matrix(top, t);
  const MonomialBasis rows(p, q, t);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double smax = ev.cwiseAbs().maxCoeff();
  const double thresh = std::max(opts.rank_tol, opts.rel_rank_tol * smax);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (std::abs(ev(i)) > thresh) {
      if (ev(i) < 0) throw ExtractionFailed("moment matrix is not PSD");
      keep.push_back(i);
    }
  const auto r = static_cast<Eigen::Index>(keep.size());
  ExtractionResult res;
  res.rank = static_cast<int>(r);
  if (r == 0) {
    res.reconstruction_error = top.values.lpNorm<Eigen::Infinity>();
    if (res.reconstruction_error > opts.reconstruction_tol) {
      throw ExtractionFailed("moment matrix has rank 0 but w is nonzero");
    }
    return res;
  }
  Eigen::MatrixXd v(m.rows(), r);
  for (Eigen::Index c = 0; c < r; ++c)
    v.col(c) = es.eigenvectors().col(keep[static_cast<std::size_t>(c)]) *
               std::sqrt(ev(keep[static_cast<std::size_t>(c)]));

  // Basis rows among monomials of degree <= t - 1 by column pivoting.
  const auto n_low = static_cast<Eigen::Index>(rows.prefix_size(t - 1));
  if (n_low < r) throw ExtractionFailed("rank exceeds the size of M_{t-1}");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(v.topRows(n_low).transpose());
  std::vector<Eigen::Index> pivots(static_cast<std::size_t>(r));
  for (Eigen::Index c = 0; c < r; ++c)
    pivots[static_cast<std::size_t>(c)] = qr.colsPermutation().indices()(c);
  Eigen::MatrixXd vb(r, r);
  for (Eigen::Index c = 0; c < r; ++c) vb.row(c) = v.row(pivots[static_cast<std::size_t>(c)]);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(vb.transpose());
  if (!lu.isInvertible()) throw ExtractionFailed("column basis is singular");
  // u = v vb^{-1}: row a expresses monomial a in the chosen basis.
  const Eigen::MatrixXd u = lu.solve(v.transpose()).transpose();

  std::vector<Eigen::MatrixXd> shifts;
  shifts.reserve(static_cast<std::size_t>(nv));
  for (int i = 0; i < nv; ++i) {
    Eigen::MatrixXd n(r, r);
    for (Eigen::Index s = 0; s < r; ++s) {
      const Exponent e = add_exponents(rows[static_cast<std::size_t>(pivots[static_cast<std::size_t>(s)])],
                                       rows.variable(i));
      n.row(s) = u.row(static_cast<Eigen::Index>(rows.index_of(e)));
    }
    shifts.push_back(std::move(n));
  }

  std::mt19937_64 rng(opts.seed);
  detail::SchurAttempt attempt;
  for (res.attempts = 1; res.attempts <= 1 + opts.retries; ++res.attempts) {
    attempt = detail::schur_points(shifts, rng, opts.separation_tol);
    if (attempt.ok) break;
  }
  if (!attempt.ok) {
    throw ExtractionFailed("shift operators have complex or clustered eigenvalues");
  }

  std::vector<Eigen::VectorXd> points;
  for (Eigen::Index s = 0; s < r; ++s) {
    Eigen::VectorXd z = attempt.points.col(s);
    if (opts.on_bisphere) {
      const double nu = z.head(p).norm(), nvv = z.tail(q).norm();
      if (std::abs(nu - 1.0) > opts.sphere_tol || std::abs(nvv - 1.0) > opts.sphere_tol) {
        throw ExtractionFailed("extracted point is off the bi-sphere");
      }
      z.head(p) /= nu;
      z.tail(q) /= nvv;
    }
    points.push_back(std::move(z));
  }

  const Eigen::VectorXd c = fit_weights(w, t, points, res.reconstruction_error);
  if (res.reconstruction_error > opts.reconstruction_tol) {
    throw ExtractionFailed("reconstruction error " +
                           std::to_string(res.reconstruction_error) +
                           " exceeds tolerance");
  }
  for (std::size_t s = 0; s < points.size(); ++s) {
    Atom a;
    a.weight = c(static_cast<Eigen::Index>(s));
    a.u = points[s].head(p);
    a.v = points[s].tail(q);
    if (a.u.sum() < -opts.sign_tol) a.u = -a.u;
    if (a.v.sum() < -opts.sign_tol) a.v = -a.v;
    res.measure.atoms.push_back(std::move(a));
  }
  return res;
}

/// Gauss-Newton refinement of z toward a common zero of `eqs`. Returns the
/// final max-norm residual.
inline double polish_point(const std::vector<Polynomial>& eqs, Eigen::VectorXd& z,
                           int max_iter = 30) {
  const auto n = z.size();
  std::vector<std::vector<Polynomial>> jac(eqs.size());
  for (std::size_t i = 0; i < eqs.size(); ++i)
    for (Eigen::Index a = 0; a < n; ++a)
      jac[i].push_back(eqs[i].derivative(static_cast<int>(a)));
  const auto residual = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd f(static_cast<Eigen::Index>(eqs.size()));
    for (std::size_t i = 0; i < eqs.size(); ++i)
      f(static_cast<Eigen::Index>(i)) = eqs[i].evaluate(x);
    return f;
  };
  Eigen::VectorXd f = residual(z);
  double fn = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
  for (int it = 0; it < max_iter && fn > 1e-15; ++it) {
    Eigen::MatrixXd j(f.size(), n);
    for (std::size_t i = 0; i < eqs.size(); ++i)
      for (Eigen::Index a = 0; a < n; ++a)
        j(static_cast<Eigen::Index>(i), a) = jac[i][static_cast<std::size_t>(a)].evaluate(z);
    const Eigen::VectorXd step = j.completeOrthogonalDecomposition().solve(f);
    const Eigen::VectorXd next = z - step;
    const Eigen::VectorXd fnext = residual(next);
    const double nn = fnext.lpNorm<Eigen::Infinity>();
    if (!(nn < fn)) break;
    z = next;
    f = fnext;
    fn = nn;
  }
  return fn;
}

/// Eigenvalues of M_t(w) in decreasing order.
inline Eigen::VectorXd moment_spectrum(const Tms& w, int t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(moment_matrix(w, t),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

/// Numerical rank of a spectrum (decreasing order) taken at its widest gap
/// among cuts whose last kept eigenvalue exceeds `floor`. Returns -1 when that
/// gap is narrower than `min_ratio`; `thr` receives a threshold inside it.
inline int gapped_rank(const Eigen::VectorXd& ev, double floor, double min_ratio,
                       double* thr = nullptr) {
  const auto n = ev.size();
  if (n == 0 || ev(0) <= floor) return 0;
  const double tiny = 1e-16 * ev(0);
  int best = static_cast<int>(n);
  double best_ratio = 0.0;
  for (Eigen::Index r = 1; r < n && ev(r - 1) > floor; ++r) {
    const double ratio = ev(r - 1) / std::max(ev(r), tiny);
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = static_cast<int>(r);
    }
  }
  if (best < n && best_ratio < min_ratio) return -1;
  if (thr) *thr = best < n ? std::sqrt(ev(best - 1) * std::max(ev(best), tiny)) : 0.5 * ev(n - 1);
  return best;
}

}  // namespace posmap

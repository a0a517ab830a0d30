#pragma once

// Bi-quadratic forms, Kronecker-subspace matrices and atomic measures.
//
// Both a form B(x, y) and a matrix A in the Kronecker subspace are stored by
// their coefficients over the index set
//
//   Omega = {(i, j, k, l) : i <= k, j <= l},
//
// each tuple standing for the monomial x_i y_j x_k y_l. Indices are 0-based
// here; the JSON layer converts from the 1-based external convention.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posmap/errors.hpp"
#include "posmap/monomials.hpp"
#include "posmap/polynomial.hpp"

namespace posmap {

struct OmegaTuple {
  int i, j, k, l;
};

/// Enumeration of Omega in loop order i, j, k >= i, l >= j.
class OmegaIndex {
 public:
  OmegaIndex(int p, int q) : p_(p), q_(q) {
    if (p < 1 || q < 1) throw InputError("dimensions must be positive");
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < q; ++j)
        for (int k = i; k < p; ++k)
          for (int l = j; l < q; ++l) tuples_.push_back({i, j, k, l});
  }

  int p() const { return p_; }
  int q() const { return q_; }
  std::size_t size() const { return tuples_.size(); }
  const std::vector<OmegaTuple>& tuples() const { return tuples_; }

  /// Position of the canonical tuple of x_i y_j x_k y_l (any index order).
  std::size_t index(int i, int j, int k, int l) const {
    if (i > k) std::swap(i, k);
    if (j > l) std::swap(j, l);
    // Count tuples preceding (i, j, k, l) in loop order.
    const auto tri = [](int n, int a) { return n - a; };  // choices k >= a
    std::size_t pos = 0;
    const auto block = [&](int i0, int j0) {
      return static_cast<std::size_t>(tri(p_, i0) * tri(q_, j0));
    };
    for (int a = 0; a < i; ++a)
      for (int b = 0; b < q_; ++b) pos += block(a, b);
    for (int b = 0; b < j; ++b) pos += block(i, b);
    pos += static_cast<std::size_t>((k - i) * (q_ - j) + (l - j));
    return pos;
  }

  /// Exponent of x_i y_j x_k y_l in the joint (x, y) variable layout.
  Exponent monomial(const OmegaTuple& t) const {
    Exponent e(static_cast<std::size_t>(p_ + q_), 0);
    e[static_cast<std::size_t>(t.i)] += 1;
    e[static_cast<std::size_t>(t.k)] += 1;
    e[static_cast<std::size_t>(p_ + t.j)] += 1;
    e[static_cast<std::size_t>(p_ + t.l)] += 1;
    return e;
  }

 private:
  int p_, q_;
  std::vector<OmegaTuple> tuples_;
};

inline std::size_t omega_size(int p, int q) {
  return static_cast<std::size_t>(p * (p + 1) * q * (q + 1) / 4);
}

/// Row/column index pi(i, j) of the pair (i, j), 0-based.
inline int kron_index(int q, int i, int j) { return i * q + j; }

inline Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

class BiQuadraticForm {
 public:
  BiQuadraticForm(int p, int q)
      : index_(p, q), coeffs_(Eigen::VectorXd::Zero(
                          static_cast<Eigen::Index>(omega_size(p, q)))) {}

  BiQuadraticForm(int p, int q, Eigen::VectorXd coeffs)
      : index_(p, q), coeffs_(std::move(coeffs)) {
    if (static_cast<std::size_t>(coeffs_.size()) != index_.size()) {
      throw InputError("form needs p(p+1)q(q+1)/4 = " +
                       std::to_string(index_.size()) + " coefficients");
    }
  }

  int p() const { return index_.p(); }
  int q() const { return index_.q(); }
  const OmegaIndex& omega() const { return index_; }
  const Eigen::VectorXd& coefficients() const { return coeffs_; }

  double coefficient(int i, int j, int k, int l) const {
    return coeffs_(static_cast<Eigen::Index>(index_.index(i, j, k, l)));
  }
  void add_to(int i, int j, int k, int l, double value) {
    coeffs_(static_cast<Eigen::Index>(index_.index(i, j, k, l))) += value;
  }

  double evaluate(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    check_point(u, v);
    double total = 0.0;
    const auto& ts = index_.tuples();
    for (std::size_t n = 0; n < ts.size(); ++n) {
      const auto& t = ts[n];
      total += coeffs_(static_cast<Eigen::Index>(n)) * u(t.i) * v(t.j) *
               u(t.k) * v(t.l);
    }
    return total;
  }

  Polynomial to_polynomial() const {
    Polynomial out(p() + q());
    const auto& ts = index_.tuples();
    for (std::size_t n = 0; n < ts.size(); ++n) {
      out.add_term(index_.monomial(ts[n]),
                   coeffs_(static_cast<Eigen::Index>(n)));
    }
    return out;
  }

  /// A symmetric Gram matrix M with B(u, v) = z^T M z, z_{pi(i,j)} = u_i v_j.
  Eigen::MatrixXd to_gram() const {
    const int n = p() * q();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    const auto& ts = index_.tuples();
    for (std::size_t s = 0; s < ts.size(); ++s) {
      const auto& t = ts[s];
      const double b = coeffs_(static_cast<Eigen::Index>(s));
      const int copies = (t.i != t.k ? 2 : 1) * (t.j != t.l ? 2 : 1);
      for (int a : {t.i, t.k})
        for (int c : {t.j, t.l}) {
          const int a2 = a == t.i ? t.k : t.i;
          const int c2 = c == t.j ? t.l : t.j;
          m(kron_index(q(), a, c), kron_index(q(), a2, c2)) = b / copies;
        }
    }
    return m;
  }

 private:
  void check_point(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    if (u.size() != p() || v.size() != q()) {
      throw InputError("evaluation point has wrong dimension");
    }
  }

  OmegaIndex index_;
  Eigen::VectorXd coeffs_;
};

/// Folds a pq x pq symmetric matrix onto Omega.
inline BiQuadraticForm from_gram(int p, int q, const Eigen::MatrixXd& m) {
  const int n = p * q;
  if (m.rows() != n || m.cols() != n) {
    throw InputError("Gram matrix must be pq x pq = " + std::to_string(n) +
                     " x " + std::to_string(n));
  }
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InputError("Gram matrix is not symmetric");
  }
  BiQuadraticForm b(p, q);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j)
      for (int k = 0; k < p; ++k)
        for (int l = 0; l < q; ++l)
          b.add_to(i, j, k, l, m(kron_index(q, i, j), kron_index(q, k, l)));
  return b;
}

/// Folds a full tensor f_{ijkl} (coefficient of x_i y_j x_k y_l), stored
/// row-major as [i][j][k][l] with shape p x q x p x q.
inline BiQuadraticForm from_full_tensor(int p, int q,
                                        const std::vector<double>& f) {
  if (f.size() != static_cast<std::size_t>(p * q * p * q)) {
    throw InputError("tensor must have p*q*p*q = " +
                     std::to_string(p * q * p * q) + " entries");
  }
  BiQuadraticForm b(p, q);
  std::size_t n = 0;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j)
      for (int k = 0; k < p; ++k)
        for (int l = 0; l < q; ++l) b.add_to(i, j, k, l, f[n++]);
  return b;
}

inline double evaluate(const BiQuadraticForm& b, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& v) {
  return b.evaluate(u, v);
}

/// The p + q polynomials B_x - 2 B x and B_y - 2 B y (degree <= 5).
inline std::vector<Polynomial> gradient_polynomials(const BiQuadraticForm& b) {
  const int n = b.p() + b.q();
  const Polynomial poly = b.to_polynomial();
  std::vector<Polynomial> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    out.push_back(poly.derivative(a) - 2.0 * (poly * Polynomial::variable(n, a)));
  }
  return out;
}

/// A symmetric pq x pq matrix in the Kronecker subspace: invariant under
/// swapping i <-> k and j <-> l independently in A[pi(i,j), pi(k,l)].
class KroneckerMatrix {
 public:
  static constexpr double kMembershipTol = 1e-10;

  KroneckerMatrix(int p, int q, Eigen::MatrixXd mat)
      : p_(p), q_(q), mat_(std::move(mat)) {
    if (p < 1 || q < 1) throw InputError("dimensions must be positive");
    if (mat_.rows() != p * q || mat_.cols() != p * q) {
      throw InputError("matrix must be pq x pq = " + std::to_string(p * q) +
                       " x " + std::to_string(p * q));
    }
    const double viol = membership_violation(p, q, mat_);
    if (viol > kMembershipTol) {
      throw InputError("matrix is not in the Kronecker subspace (violation " +
                       std::to_string(viol) + ")");
    }
  }

  /// Largest deviation from symmetry and partial symmetry.
  static double membership_violation(int p, int q, const Eigen::MatrixXd& m) {
    double viol = (m - m.transpose()).cwiseAbs().maxCoeff();
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < q; ++j)
        for (int k = 0; k < p; ++k)
          for (int l = 0; l < q; ++l) {
            const double a = m(kron_index(q, i, j), kron_index(q, k, l));
            viol = std::max(viol, std::abs(a - m(kron_index(q, k, j),
                                                 kron_index(q, i, l))));
            viol = std::max(viol, std::abs(a - m(kron_index(q, i, l),
                                                 kron_index(q, k, j))));
          }
    return viol;
  }

  int p() const { return p_; }
  int q() const { return q_; }
  const Eigen::MatrixXd& matrix() const { return mat_; }
  double entry(int i, int j, int k, int l) const {
    return mat_(kron_index(q_, i, j), kron_index(q_, k, l));
  }

 private:
  int p_, q_;
  Eigen::MatrixXd mat_;
};

/// The Omega-indexed vector a = (A[pi(i,j), pi(k,l)]) over the monomial set E.
inline Eigen::VectorXd project_to_E(const KroneckerMatrix& a) {
  const OmegaIndex omega(a.p(), a.q());
  Eigen::VectorXd out(static_cast<Eigen::Index>(omega.size()));
  const auto& ts = omega.tuples();
  for (std::size_t n = 0; n < ts.size(); ++n) {
    out(static_cast<Eigen::Index>(n)) = a.entry(ts[n].i, ts[n].j, ts[n].k, ts[n].l);
  }
  return out;
}

/// The Kronecker-subspace matrix agreeing with m on the entries
/// m[pi(i,j), pi(k,l)] with i <= k, j <= l; other entries of m are ignored.
inline KroneckerMatrix kronecker_from_upper_entries(int p, int q, const Eigen::MatrixXd& m) {
  if (m.rows() != p * q || m.cols() != p * q) {
    throw InputError("matrix must be pq x pq = " + std::to_string(p * q) + " x " +
                     std::to_string(p * q));
  }
  Eigen::MatrixXd out(p * q, p * q);
  const OmegaIndex omega(p, q);
  for (const auto& t : omega.tuples()) {
    const double v = m(kron_index(q, t.i, t.j), kron_index(q, t.k, t.l));
    for (const auto& [r, c] : {std::pair{kron_index(q, t.i, t.j), kron_index(q, t.k, t.l)},
                               std::pair{kron_index(q, t.k, t.j), kron_index(q, t.i, t.l)}}) {
      out(r, c) = v;
      out(c, r) = v;
    }
  }
  return KroneckerMatrix(p, q, std::move(out));
}

inline KroneckerMatrix kron_rank1(const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& v) {
  return KroneckerMatrix(static_cast<int>(u.size()), static_cast<int>(v.size()),
                         kronecker(u * u.transpose(), v * v.transpose()));
}

inline double pairing(const BiQuadraticForm& b, const KroneckerMatrix& a) {
  if (a.p() != b.p() || a.q() != b.q()) {
    throw InputError("pairing of a form and a matrix of different dimensions");
  }
  return b.coefficients().dot(project_to_E(a));
}

struct Atom {
  double weight = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
};

/// Finitely atomic measure sum_s c_s delta_(u_s, v_s).
struct AtomicMeasure {
  std::vector<Atom> atoms;

  std::size_t size() const { return atoms.size(); }
  bool empty() const { return atoms.empty(); }

  double total_mass() const {
    double m = 0.0;
    for (const auto& a : atoms) m += a.weight;
    return m;
  }

  /// True when every atom has positive weight and lies in
  /// K = {|u| = |v| = 1, 1^T u >= 0, 1^T v >= 0} within `tol`.
  bool in_K(double tol = 1e-8) const {
    for (const auto& a : atoms) {
      if (!(a.weight > 0.0)) return false;
      if (std::abs(a.u.norm() - 1.0) > tol || std::abs(a.v.norm() - 1.0) > tol)
        return false;
      if (a.u.sum() < -tol || a.v.sum() < -tol) return false;
    }
    return true;
  }

  /// sum_s c_s (u_s u_s^T) (x) (v_s v_s^T).
  Eigen::MatrixXd kronecker_sum(int p, int q) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p * q, p * q);
    for (const auto& a : atoms) {
      out += a.weight * kronecker(a.u * a.u.transpose(), a.v * a.v.transpose());
    }
    return out;
  }
};

}  // namespace posmap

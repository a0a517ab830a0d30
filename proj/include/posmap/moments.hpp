#pragma once

// Truncated multi-sequences (tms), moment and localizing matrices, truncated
// ideal rows and flatness tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "posmap/errors.hpp"
#include "posmap/forms.hpp"
#include "posmap/monomials.hpp"
#include "posmap/polynomial.hpp"

namespace posmap {

/// A truncated multi-sequence: one value per monomial of `basis`.
struct Tms {
  std::shared_ptr<const MonomialBasis> basis;
  Eigen::VectorXd values;

  Tms() = default;
  Tms(std::shared_ptr<const MonomialBasis> b, Eigen::VectorXd v)
      : basis(std::move(b)), values(std::move(v)) {
    if (!basis || static_cast<std::size_t>(values.size()) != basis->size()) {
      throw StructuralError("tms length does not match its basis");
    }
  }

  int p() const { return basis->p(); }
  int q() const { return basis->q(); }
  int degree() const { return basis->degree_bound(); }

  double operator[](const Exponent& e) const {
    return values(static_cast<Eigen::Index>(basis->index_of(e)));
  }

  /// Prefix slice w|_d.
  Tms truncate(int d) const {
    if (d > degree()) throw StructuralError("cannot truncate to a higher degree");
    auto b = std::make_shared<const MonomialBasis>(p(), q(), d);
    return Tms(b, values.head(static_cast<Eigen::Index>(b->size())));
  }

  /// <f, w> = sum_alpha f_alpha w_alpha.
  double apply(const Polynomial& f) const {
    double s = 0.0;
    for (const auto& [e, c] : f.terms()) s += c * (*this)[e];
    return s;
  }
};

/// Values of every monomial of `basis` at the point z = (u, v).
inline Eigen::VectorXd monomial_vector(const MonomialBasis& basis,
                                       const Eigen::VectorXd& z) {
  const int n = basis.num_vars();
  const int d = basis.degree_bound();
  Eigen::MatrixXd powers(n, d + 1);
  for (int i = 0; i < n; ++i) {
    powers(i, 0) = 1.0;
    for (int k = 1; k <= d; ++k) powers(i, k) = powers(i, k - 1) * z(i);
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t m = 0; m < basis.size(); ++m) {
    double v = 1.0;
    const auto& e = basis[m];
    for (int i = 0; i < n; ++i) {
      if (e[static_cast<std::size_t>(i)]) v *= powers(i, e[static_cast<std::size_t>(i)]);
    }
    out(static_cast<Eigen::Index>(m)) = v;
  }
  return out;
}

inline Eigen::VectorXd joint_point(const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& v) {
  Eigen::VectorXd z(u.size() + v.size());
  z << u, v;
  return z;
}

/// w = sum_s c_s [(u_s, v_s)]_degree.
inline Tms tms_from_atoms(const AtomicMeasure& mu, int p, int q, int degree) {
  auto basis = std::make_shared<const MonomialBasis>(p, q, degree);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis->size()));
  for (const auto& a : mu.atoms) {
    if (a.u.size() != p || a.v.size() != q) {
      throw InputError("atom has wrong dimension");
    }
    w += a.weight * monomial_vector(*basis, joint_point(a.u, a.v));
  }
  return Tms(basis, std::move(w));
}

/// Symmetric matrix whose entries are linear forms in a moment vector:
/// entry (r, c) = sum over terms (index, coef) of coef * w[index].
class LinearSymmetricMap {
 public:
  struct Term {
    std::int32_t index;
    double coef;
  };

  LinearSymmetricMap() = default;
  LinearSymmetricMap(int size, int num_vars) : size_(size), num_vars_(num_vars) {}

  int size() const { return size_; }
  int num_vars() const { return num_vars_; }

  /// Cell-major term storage for the full n x n matrix (both triangles).
  const std::vector<std::uint32_t>& offsets() const { return offsets_; }
  const std::vector<Term>& terms() const { return terms_; }

  /// Builds the map from a callback producing the terms of cell (r, c), r <= c.
  template <typename CellFn>
  static LinearSymmetricMap build(int size, int num_vars, CellFn&& cell) {
    LinearSymmetricMap m(size, num_vars);
    std::vector<std::vector<Term>> upper(static_cast<std::size_t>(size) * size);
    for (int r = 0; r < size; ++r)
      for (int c = r; c < size; ++c) {
        upper[static_cast<std::size_t>(r) * size + c] = cell(r, c);
      }
    m.offsets_.reserve(static_cast<std::size_t>(size) * size + 1);
    m.offsets_.push_back(0);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        const auto& t = upper[static_cast<std::size_t>(std::min(r, c)) * size +
                              std::max(r, c)];
        m.terms_.insert(m.terms_.end(), t.begin(), t.end());
        m.offsets_.push_back(static_cast<std::uint32_t>(m.terms_.size()));
      }
    return m;
  }

  Eigen::MatrixXd evaluate(const Eigen::VectorXd& w) const {
    Eigen::MatrixXd out(size_, size_);
    for (int r = 0; r < size_; ++r)
      for (int c = 0; c < size_; ++c) {
        const std::size_t cell = static_cast<std::size_t>(r) * size_ + c;
        double s = 0.0;
        for (auto k = offsets_[cell]; k < offsets_[cell + 1]; ++k) {
          s += terms_[k].coef * w(terms_[k].index);
        }
        out(r, c) = s;
      }
    return out;
  }

  /// g += F^*(X): g_alpha += sum_{r,c} coef * X(r, c).
  void adjoint_add(const Eigen::MatrixXd& x, Eigen::VectorXd& g) const {
    for (int r = 0; r < size_; ++r)
      for (int c = 0; c < size_; ++c) {
        const std::size_t cell = static_cast<std::size_t>(r) * size_ + c;
        const double xv = x(r, c);
        for (auto k = offsets_[cell]; k < offsets_[cell + 1]; ++k) {
          g(terms_[k].index) += terms_[k].coef * xv;
        }
      }
  }

 private:
  int size_ = 0;
  int num_vars_ = 0;
  std::vector<std::uint32_t> offsets_;
  std::vector<Term> terms_;
};

inline int ceil_half(int d) { return (d + 1) / 2; }

/// Structure of L_theta^{(t)}(w) for w over `basis`; rows are the monomials a
/// with deg(theta a^2) <= 2t.
inline LinearSymmetricMap localizing_structure(const MonomialBasis& basis,
                                               const Polynomial& theta, int t) {
  if (theta.num_vars() != basis.num_vars()) {
    throw StructuralError("localizing polynomial has wrong variable count");
  }
  if (2 * t > basis.degree_bound()) {
    throw StructuralError("localizing order exceeds the tms degree");
  }
  const int row_degree = t - ceil_half(theta.degree());
  if (row_degree < 0) {
    throw StructuralError("localizing polynomial degree exceeds 2t");
  }
  const int n = static_cast<int>(basis.prefix_size(row_degree));
  const int num_vars = static_cast<int>(basis.size());
  std::vector<std::pair<Exponent, double>> theta_terms(theta.terms().begin(),
                                                       theta.terms().end());
  return LinearSymmetricMap::build(n, num_vars, [&](int r, int c) {
    std::vector<LinearSymmetricMap::Term> out;
    const Exponent rc = add_exponents(basis[static_cast<std::size_t>(r)],
                                      basis[static_cast<std::size_t>(c)]);
    for (const auto& [g, coef] : theta_terms) {
      const auto idx = basis.index_of(add_exponents(rc, g));
      out.push_back({static_cast<std::int32_t>(idx), coef});
    }
    return out;
  });
}

inline LinearSymmetricMap moment_structure(const MonomialBasis& basis, int t) {
  return localizing_structure(basis, Polynomial::constant(basis.num_vars(), 1.0), t);
}

inline Eigen::MatrixXd moment_matrix(const Tms& w, int t) {
  if (2 * t > w.degree()) throw StructuralError("moment order exceeds tms degree");
  // Direct construction through the product table; cheaper than the map.
  const MonomialBasis small(w.p(), w.q(), t);
  const std::size_t n = small.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = w.values(static_cast<Eigen::Index>(
          w.basis->index_of(add_exponents(small[i], small[j]))));
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  return m;
}

inline Eigen::MatrixXd localizing_matrix(const Tms& w, const Polynomial& theta,
                                         int t) {
  return localizing_structure(*w.basis, theta, t).evaluate(w.values);
}

/// Sparse linear functional on a moment vector: sum coef * w[index] = rhs.
struct SparseRow {
  std::vector<std::pair<Eigen::Index, double>> terms;
  double rhs = 0.0;

  double apply(const Eigen::VectorXd& w) const {
    double s = 0.0;
    for (const auto& [i, c] : terms) s += c * w(i);
    return s;
  }
};

/// Rows <h m, w> = 0 for every monomial m with deg(h m) <= degree of basis.
inline std::vector<SparseRow> ideal_equality_rows(const Polynomial& h,
                                                  const MonomialBasis& basis) {
  const int dh = h.degree();
  const int mdeg = basis.degree_bound() - dh;
  std::vector<SparseRow> rows;
  if (mdeg < 0 || h.is_zero()) return rows;
  const std::size_t count = basis.prefix_size(mdeg);
  rows.reserve(count);
  for (std::size_t m = 0; m < count; ++m) {
    SparseRow row;
    for (const auto& [e, c] : h.terms()) {
      row.terms.emplace_back(
          static_cast<Eigen::Index>(basis.index_of(add_exponents(e, basis[m]))), c);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Sorts terms, merges repeated indices, drops zeros and scales so that the
/// first coefficient is 1.
inline SparseRow normalize_row(SparseRow row) {
  std::sort(row.terms.begin(), row.terms.end());
  std::vector<std::pair<Eigen::Index, double>> merged;
  for (const auto& t : row.terms) {
    if (!merged.empty() && merged.back().first == t.first) {
      merged.back().second += t.second;
    } else {
      merged.push_back(t);
    }
  }
  std::erase_if(merged, [](const auto& t) { return t.second == 0.0; });
  row.terms = std::move(merged);
  if (!row.terms.empty()) {
    const double lead = row.terms.front().second;
    for (auto& t : row.terms) t.second /= lead;
    row.rhs /= lead;
  }
  return row;
}

/// Removes rows that encode the same functional (up to scaling) as an
/// earlier row. Rows that become empty are dropped when their rhs is zero.
inline std::vector<SparseRow> deduplicate_rows(const std::vector<SparseRow>& rows,
                                               double tol = 1e-12) {
  struct VecHash {
    std::size_t operator()(const std::vector<Eigen::Index>& v) const noexcept {
      std::size_t h = 0;
      for (auto i : v) h = h * 1000003u + static_cast<std::size_t>(i);
      return h;
    }
  };
  std::unordered_map<std::vector<Eigen::Index>, std::vector<std::size_t>, VecHash>
      seen;
  std::vector<SparseRow> out;
  for (const auto& raw : rows) {
    SparseRow row = normalize_row(raw);
    if (row.terms.empty() && row.rhs == 0.0) continue;
    std::vector<Eigen::Index> key;
    for (const auto& t : row.terms) key.push_back(t.first);
    auto& bucket = seen[key];
    bool duplicate = false;
    for (auto idx : bucket) {
      const auto& other = out[idx];
      bool same = std::abs(other.rhs - row.rhs) <= tol * (1 + std::abs(row.rhs));
      for (std::size_t k = 0; same && k < row.terms.size(); ++k) {
        same = std::abs(other.terms[k].second - row.terms[k].second) <=
               tol * (1 + std::abs(row.terms[k].second));
      }
      if (same) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) {
      bucket.push_back(out.size());
      out.push_back(std::move(row));
    }
  }
  return out;
}

enum class FlatnessMode {
  kInner,  ///< rank M_{t-1} = rank M_t
  kOuter,  ///< rank M_t = rank M_{t+1}
};

struct FlatnessTolerances {
  double rank_tol = 1e-6;
  double rel_rank_tol = 1e-9;
  double psd_tol = 1e-7;
  double eq_tol = 1e-6;
};

struct FlatnessReport {
  int t = 0;
  int rank_low = 0;
  int rank_high = 0;
  double equality_residual = 0.0;
  double localizing_min_eig = 0.0;
  double moment_min_eig = 0.0;
  bool is_flat = false;
};

/// Number of singular values above max(rank_tol, rel_rank_tol * sigma_max).
inline int numerical_rank(const Eigen::MatrixXd& m, double rank_tol,
                          double rel_rank_tol) {
  if (m.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd s = es.eigenvalues().cwiseAbs();
  const double thresh = std::max(rank_tol, rel_rank_tol * s.maxCoeff());
  return static_cast<int>((s.array() > thresh).count());
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline FlatnessReport flatness_check(const Tms& w, int t,
                                     const std::vector<Polynomial>& h,
                                     const std::vector<Polynomial>& g,
                                     FlatnessMode mode,
                                     const FlatnessTolerances& tol = {}) {
  FlatnessReport rep;
  rep.t = t;
  const int low = mode == FlatnessMode::kInner ? t - 1 : t;
  const int high = low + 1;
  if (low < 0 || 2 * high > w.degree()) {
    throw StructuralError("flatness order out of range for this tms");
  }
  const Tms top = w.truncate(2 * high);
  const Eigen::MatrixXd m_high = moment_matrix(top, high);
  const Eigen::MatrixXd m_low = moment_matrix(top, low);
  rep.rank_low = numerical_rank(m_low, tol.rank_tol, tol.rel_rank_tol);
  rep.rank_high = numerical_rank(m_high, tol.rank_tol, tol.rel_rank_tol);
  rep.moment_min_eig = min_eigenvalue(m_high);

  rep.equality_residual = 0.0;
  for (const auto& hi : h) {
    for (const auto& row : ideal_equality_rows(hi, *top.basis)) {
      rep.equality_residual =
          std::max(rep.equality_residual, std::abs(row.apply(top.values)));
    }
  }
  rep.localizing_min_eig = 0.0;
  bool first = true;
  for (const auto& gj : g) {
    if (2 * high < gj.degree()) continue;
    const double e = min_eigenvalue(localizing_matrix(top, gj, high));
    rep.localizing_min_eig = first ? e : std::min(rep.localizing_min_eig, e);
    first = false;
  }
  rep.is_flat = rep.rank_low == rep.rank_high &&
                rep.equality_residual <= tol.eq_tol &&
                rep.localizing_min_eig >= -tol.psd_tol &&
                rep.moment_min_eig >= -tol.psd_tol;
  return rep;
}

}  // namespace posmap

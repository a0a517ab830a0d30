#pragma once

// Monomial bases in the joint variables (x_1..x_p, y_1..y_q).
//
// Every moment vector and moment matrix in the library is indexed through a
// MonomialBasis. Monomials are ordered graded-lexicographically on the
// concatenated exponent vector (x before y), so the degree-d' basis is always
// a prefix of the degree-d basis for d' <= d.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "posmap/errors.hpp"

namespace posmap {

/// Exponent vector of a monomial x^alpha y^beta, stored as (alpha, beta).
using Exponent = std::vector<std::uint8_t>;

struct ExponentHash {
  std::size_t operator()(const Exponent& e) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (auto v : e) {
      h ^= v;
      h *= 1099511628211ull;
    }
    return h;
  }
};

inline int total_degree(const Exponent& e) {
  int d = 0;
  for (auto v : e) d += v;
  return d;
}

inline Exponent add_exponents(const Exponent& a, const Exponent& b) {
  if (a.size() != b.size()) {
    throw StructuralError("exponent vectors of different length");
  }
  Exponent out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int s = a[i] + b[i];
    if (s > std::numeric_limits<std::uint8_t>::max()) {
      throw SizingError("exponent overflow");
    }
    out[i] = static_cast<std::uint8_t>(s);
  }
  return out;
}

/// Binomial coefficient C(n, k); throws SizingError when it exceeds the
/// index range.
inline std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  std::size_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    const std::size_t num = n - k + i;
    // result * num / i is exact at every step; guard the multiplication.
    if (result > std::numeric_limits<std::size_t>::max() / num) {
      throw SizingError("binomial coefficient C(" + std::to_string(n) + ", " +
                        std::to_string(k) + ") overflows the index range");
    }
    result = result * num / i;
  }
  return result;
}

class MonomialBasis {
 public:
  MonomialBasis() = default;

  MonomialBasis(int p, int q, int degree_bound)
      : p_(p), q_(q), degree_bound_(degree_bound) {
    if (p < 1 || q < 1 || degree_bound < 0) {
      throw InputError("monomial basis needs p >= 1, q >= 1, d >= 0");
    }
    const std::size_t n = static_cast<std::size_t>(p + q);
    const std::size_t count = binomial(n + degree_bound, degree_bound);
    if (degree_bound > std::numeric_limits<std::uint8_t>::max()) {
      throw SizingError("degree bound exceeds exponent storage");
    }
    entries_.reserve(count);
    prefix_sizes_.reserve(degree_bound + 1);
    Exponent current(n, 0);
    for (int d = 0; d <= degree_bound; ++d) {
      enumerate(current, 0, d);
      prefix_sizes_.push_back(entries_.size());
    }
    lookup_.reserve(entries_.size() * 2);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      lookup_.emplace(entries_[i], i);
    }
  }

  int p() const { return p_; }
  int q() const { return q_; }
  int num_vars() const { return p_ + q_; }
  int degree_bound() const { return degree_bound_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Exponent>& entries() const { return entries_; }
  const Exponent& operator[](std::size_t i) const { return entries_[i]; }

  /// Number of monomials of degree <= d, i.e. C(p+q+d, d).
  std::size_t prefix_size(int d) const {
    if (d < 0) return 0;
    if (d > degree_bound_) {
      throw StructuralError("prefix degree exceeds basis degree bound");
    }
    return prefix_sizes_[static_cast<std::size_t>(d)];
  }

  int degree_of(std::size_t i) const { return total_degree(entries_[i]); }

  bool contains(const Exponent& e) const { return lookup_.count(e) != 0; }

  std::size_t index_of(const Exponent& e) const {
    auto it = lookup_.find(e);
    if (it == lookup_.end()) {
      throw LookupError("monomial not in basis (degree " +
                        std::to_string(total_degree(e)) + " > " +
                        std::to_string(degree_bound_) + " or wrong arity)");
    }
    return it->second;
  }

  /// Exponent of the single variable x_i (0-based, x first then y).
  Exponent variable(int i) const {
    Exponent e(static_cast<std::size_t>(num_vars()), 0);
    e[static_cast<std::size_t>(i)] = 1;
    return e;
  }

 private:
  // Appends all exponents of total degree `remaining` in positions >= pos,
  // in descending lexicographic order.
  void enumerate(Exponent& current, std::size_t pos, int remaining) {
    if (pos + 1 == current.size()) {
      current[pos] = static_cast<std::uint8_t>(remaining);
      entries_.push_back(current);
      current[pos] = 0;
      return;
    }
    for (int v = remaining; v >= 0; --v) {
      current[pos] = static_cast<std::uint8_t>(v);
      enumerate(current, pos + 1, remaining - v);
    }
    current[pos] = 0;
  }

  int p_ = 0;
  int q_ = 0;
  int degree_bound_ = 0;
  std::vector<Exponent> entries_;
  std::vector<std::size_t> prefix_sizes_;
  std::unordered_map<Exponent, std::size_t, ExponentHash> lookup_;
};

inline MonomialBasis build_basis(int p, int q, int d) {
  return MonomialBasis(p, q, d);
}

/// Table of product positions: at(i, j) is the index in `big` of the product
/// of monomials i and j of `small`.
class ProductTable {
 public:
  ProductTable(const MonomialBasis& small, const MonomialBasis& big) {
    if (small.p() != big.p() || small.q() != big.q()) {
      throw StructuralError("product table needs bases over the same (p, q)");
    }
    if (big.degree_bound() < 2 * small.degree_bound()) {
      throw StructuralError("product table target basis degree too small");
    }
    n_ = small.size();
    table_.resize(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i; j < n_; ++j) {
        const std::size_t k = big.index_of(add_exponents(small[i], small[j]));
        table_[i * n_ + j] = k;
        table_[j * n_ + i] = k;
      }
    }
  }

  std::size_t size() const { return n_; }
  std::size_t at(std::size_t i, std::size_t j) const {
    return table_[i * n_ + j];
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> table_;
};

inline ProductTable product_index_table(const MonomialBasis& small,
                                        const MonomialBasis& big) {
  return ProductTable(small, big);
}

}  // namespace posmap

#pragma once

// Sparse real polynomials in (x, y). Only the arithmetic the relaxations need:
// sums, products, partial derivatives and evaluation.

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "posmap/monomials.hpp"

namespace posmap {

class Polynomial {
 public:
  explicit Polynomial(int num_vars = 0) : num_vars_(num_vars) {}

  static Polynomial constant(int num_vars, double c) {
    Polynomial out(num_vars);
    out.add_term(Exponent(static_cast<std::size_t>(num_vars), 0), c);
    return out;
  }

  static Polynomial variable(int num_vars, int i, double c = 1.0) {
    Polynomial out(num_vars);
    Exponent e(static_cast<std::size_t>(num_vars), 0);
    e[static_cast<std::size_t>(i)] = 1;
    out.add_term(e, c);
    return out;
  }

  int num_vars() const { return num_vars_; }
  const std::map<Exponent, double>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  void add_term(const Exponent& e, double c) {
    if (static_cast<int>(e.size()) != num_vars_) {
      throw StructuralError("polynomial term has wrong number of variables");
    }
    if (c == 0.0) return;
    auto [it, inserted] = terms_.emplace(e, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  double coefficient(const Exponent& e) const {
    auto it = terms_.find(e);
    return it == terms_.end() ? 0.0 : it->second;
  }

  int degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_) d = std::max(d, total_degree(e));
    return d;
  }

  double evaluate(std::span<const double> point) const {
    if (static_cast<int>(point.size()) != num_vars_) {
      throw StructuralError("evaluation point has wrong dimension");
    }
    double total = 0.0;
    for (const auto& [e, c] : terms_) {
      double m = c;
      for (std::size_t i = 0; i < e.size(); ++i) {
        for (int k = 0; k < e[i]; ++k) m *= point[i];
      }
      total += m;
    }
    return total;
  }

  double evaluate(const Eigen::VectorXd& point) const {
    return evaluate(std::span<const double>(point.data(), point.size()));
  }

  Polynomial derivative(int var) const {
    Polynomial out(num_vars_);
    for (const auto& [e, c] : terms_) {
      const auto v = static_cast<std::size_t>(var);
      if (e[v] == 0) continue;
      Exponent d = e;
      d[v] -= 1;
      out.add_term(d, c * e[v]);
    }
    return out;
  }

  Polynomial& operator+=(const Polynomial& other) {
    check_compatible(other);
    for (const auto& [e, c] : other.terms_) add_term(e, c);
    return *this;
  }

  Polynomial& operator-=(const Polynomial& other) {
    check_compatible(other);
    for (const auto& [e, c] : other.terms_) add_term(e, -c);
    return *this;
  }

  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [e, c] : terms_) c *= s;
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) {
    return a += b;
  }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) {
    return a -= b;
  }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_compatible(b);
    Polynomial out(a.num_vars_);
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        out.add_term(add_exponents(ea, eb), ca * cb);
      }
    }
    return out;
  }

  /// Drops terms with |coefficient| <= tol.
  void prune(double tol) {
    for (auto it = terms_.begin(); it != terms_.end();) {
      if (std::abs(it->second) <= tol) {
        it = terms_.erase(it);
      } else {
        ++it;
      }
    }
  }

  /// Dense coefficient vector aligned with `basis`.
  Eigen::VectorXd coefficients_in(const MonomialBasis& basis) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(basis.size()));
    for (const auto& [e, c] : terms_) {
      out(static_cast<Eigen::Index>(basis.index_of(e))) += c;
    }
    return out;
  }

 private:
  void check_compatible(const Polynomial& other) const {
    if (other.num_vars_ != num_vars_) {
      throw StructuralError("polynomials over different variable counts");
    }
  }

  int num_vars_;
  std::map<Exponent, double> terms_;
};

}  // namespace posmap

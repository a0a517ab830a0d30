#pragma once

// Brute-force baselines for the bi-sphere minimum. Test use only; nothing in
// the decision path calls these.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "posmap/errors.hpp"
#include "posmap/forms.hpp"

namespace posmap {

struct OracleResult {
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd u, v;
  /// Upper bound on value - b_min (grid only; 0 for the local search).
  double error_bound = 0.0;
};

/// Minimum of B over a full (theta, phi) grid of [0, 2 pi)^2 with spacing
/// at most `step`. Error bound from |dB/dtheta| + |dB/dphi| <= 4 ||G||_2.
inline OracleResult grid_min_bisphere_2x2(const BiQuadraticForm& b, double step) {
  if (b.p() != 2 || b.q() != 2) throw InputError("grid oracle needs p = q = 2");
  if (!(step > 0.0)) throw InputError("grid step must be positive");
  const double two_pi = 2.0 * std::numbers::pi;
  const int n = static_cast<int>(std::ceil(two_pi / step));
  const double h = two_pi / n;
  const Eigen::Matrix4d g = b.to_gram();
  std::vector<double> c(static_cast<std::size_t>(n)), s(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    c[static_cast<std::size_t>(a)] = std::cos(a * h);
    s[static_cast<std::size_t>(a)] = std::sin(a * h);
  }
  OracleResult out;
  int best_a = 0, best_b = 0;
  for (int a = 0; a < n; ++a) {
    const double x0 = c[static_cast<std::size_t>(a)], x1 = s[static_cast<std::size_t>(a)];
    for (int bb = 0; bb < n; ++bb) {
      const double y0 = c[static_cast<std::size_t>(bb)], y1 = s[static_cast<std::size_t>(bb)];
      const Eigen::Vector4d z(x0 * y0, x0 * y1, x1 * y0, x1 * y1);
      const double val = z.dot(g * z);
      if (val < out.value) {
        out.value = val;
        best_a = a;
        best_b = bb;
      }
    }
  }
  out.u = Eigen::Vector2d(c[static_cast<std::size_t>(best_a)], s[static_cast<std::size_t>(best_a)]);
  out.v = Eigen::Vector2d(c[static_cast<std::size_t>(best_b)], s[static_cast<std::size_t>(best_b)]);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(g, Eigen::EigenvaluesOnly);
  out.error_bound = 2.0 * es.eigenvalues().cwiseAbs().maxCoeff() * h;
  return out;
}

/// Best local minimum of B on the bi-sphere from seeded random starts, by
/// gradient steps with renormalization and Armijo backtracking. An upper
/// bound on b_min.
inline OracleResult multistart_min_bisphere(const BiQuadraticForm& b, int starts,
                                            std::uint64_t seed, int max_iter = 2000) {
  const int p = b.p(), q = b.q();
  const Eigen::MatrixXd g = b.to_gram();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const auto value = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    const Eigen::VectorXd z = kronecker(u, v);
    return z.dot(g * z);
  };
  OracleResult out;
  for (int st = 0; st < starts; ++st) {
    Eigen::VectorXd u(p), v(q);
    for (int i = 0; i < p; ++i) u(i) = nd(rng);
    for (int j = 0; j < q; ++j) v(j) = nd(rng);
    u.normalize();
    v.normalize();
    double f = value(u, v);
    double alpha = 1.0;
    for (int it = 0; it < max_iter; ++it) {
      const Eigen::VectorXd gz = 2.0 * g * kronecker(u, v);
      const Eigen::Map<const Eigen::MatrixXd> gm(gz.data(), q, p);  // gm(j, i)
      Eigen::VectorXd gu = gm.transpose() * v, gv = gm * u;
      gu -= gu.dot(u) * u;
      gv -= gv.dot(v) * v;
      const double gn2 = gu.squaredNorm() + gv.squaredNorm();
      if (gn2 < 1e-24) break;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd un = (u - alpha * gu).normalized();
        const Eigen::VectorXd vn = (v - alpha * gv).normalized();
        const double fn = value(un, vn);
        if (fn <= f - 1e-4 * alpha * gn2) {
          u = un;
          v = vn;
          f = fn;
          moved = true;
          alpha *= 2.0;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
    }
    if (f < out.value) {
      out.value = f;
      out.u = u;
      out.v = v;
    }
  }
  if (starts <= 0) out.value = std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace posmap

#pragma once

// Instances and generators shared by the acceptance runner and unit tests.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "posmap/forms.hpp"
#include "posmap/sdp.hpp"

namespace posmap::fixtures {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd randn(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

inline MatrixXd random_symmetric(std::mt19937_64& rng, int n) {
  MatrixXd g(n, n);
  for (int c = 0; c < n; ++c) g.col(c) = randn(rng, n);
  return 0.5 * (g + g.transpose());
}

/// Unit vector with nonnegative coordinate sum.
inline VectorXd random_in_K(std::mt19937_64& rng, int n) {
  VectorXd v = randn(rng, n).normalized();
  return v.sum() < 0 ? VectorXd(-v) : v;
}

inline MatrixXd unit_outer(int n, int i, int j) {
  MatrixXd m = MatrixXd::Zero(n, n);
  m(i, j) = 1.0;
  return m;
}

// ---------------------------------------------------------------------------
// Positivity instances.

inline BiQuadraticForm gram_example() {
  MatrixXd m(4, 4);
  m << 0.0058, -0.1894, -0.2736, 0.3415, -0.1894, -0.1859, -0.1585, 0.0841, -0.2736, -0.1585,
      -0.0693, -0.0669, 0.3415, 0.0841, -0.0669, 0.2494;
  return from_gram(2, 2, m);
}

/// x1^2(y1^2 + 4y1y2 + 12y2^2) + x1x2(4y1^2 + 16y1y2 + 2y2^2)
///   + x2^2(12y1^2 + 2y1y2 + 2y2^2)
inline BiQuadraticForm polynomial_example() {
  BiQuadraticForm b(2, 2);
  b.add_to(0, 0, 0, 0, 1);
  b.add_to(0, 0, 0, 1, 4);
  b.add_to(0, 1, 0, 1, 12);
  b.add_to(0, 0, 1, 0, 4);
  b.add_to(0, 0, 1, 1, 16);
  b.add_to(0, 1, 1, 1, 2);
  b.add_to(1, 0, 1, 0, 12);
  b.add_to(1, 0, 1, 1, 2);
  b.add_to(1, 1, 1, 1, 2);
  return b;
}

/// Full tensor given as nine 3 x 3 slices f(:, :, k, l).
inline BiQuadraticForm tensor_example() {
  const double slices[3][3][9] = {
      {{-0.9727, 0.3169, -0.3437, -0.6332, -0.7866, 0.4257, -0.3350, -0.9896, -0.4323},
       {0.3169, 0.6158, -0.0184, -0.7866, 0.0160, 0.0085, -0.9896, -0.6663, 0.2559},
       {-0.3437, -0.0184, 0.5649, 0.4257, 0.0085, -0.1439, -0.4323, 0.2559, 0.6162}},
      {{-0.6332, -0.7866, 0.4257, 0.7387, 0.6873, -0.3248, -0.7986, -0.5988, -0.9485},
       {-0.7866, 0.0160, 0.0085, 0.6873, 0.5160, -0.0216, -0.5988, 0.0411, 0.9857},
       {0.4257, 0.0085, -0.1439, -0.3248, -0.0216, -0.0037, -0.9485, 0.9857, -0.7734}},
      {{-0.3350, -0.9896, -0.4323, -0.7986, -0.5988, -0.9485, 0.5853, 0.5921, 0.6301},
       {-0.9896, -0.6663, 0.2559, -0.5988, 0.0411, 0.9857, 0.5921, -0.2907, -0.3881},
       {-0.4323, 0.2559, 0.6162, -0.9485, 0.9857, -0.7734, 0.6301, -0.3881, -0.8526}}};
  std::vector<double> f(81);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) f[((i * 3 + j) * 3 + k) * 3 + l] = slices[k][l][i * 3 + j];
  return from_full_tensor(3, 3, f);
}

/// sum_i x_i^2 y_i^2 + 2 sum_i x_i^2 y_{i+1}^2 - 2 sum_{i<k} x_i x_k y_i y_k
inline BiQuadraticForm cyclic_example() {
  BiQuadraticForm b(3, 3);
  for (int i = 0; i < 3; ++i) {
    b.add_to(i, i, i, i, 1.0);
    b.add_to(i, (i + 1) % 3, i, (i + 1) % 3, 2.0);
    for (int k = i + 1; k < 3; ++k) b.add_to(i, i, k, k, -2.0);
  }
  return b;
}

/// sum over i <= k, j <= l of x_i y_j x_k y_l / (i + j + k + l), 1-based.
inline BiQuadraticForm harmonic_example() {
  BiQuadraticForm b(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = i; k < 4; ++k)
        for (int l = j; l < 4; ++l) b.add_to(i, j, k, l, 1.0 / (i + j + k + l + 4));
  return b;
}

// ---------------------------------------------------------------------------
// Separability instances.

/// Only the entries with i <= k, j <= l are given; the rest follow.
inline KroneckerMatrix small_entangled_example() {
  MatrixXd a(4, 4);
  a << 0.4691, 0.1203, -0.1203, 0.4691, 0.1203, 0.0309, -0.0309, 0.1203, -0.1203, -0.0309,
      0.0309, -0.1203, 0.4691, 0.1203, -0.1203, 0.4691;
  return kronecker_from_upper_entries(2, 2, a);
}

inline MatrixXd cyclic_a1() {
  MatrixXd m = MatrixXd::Zero(9, 9);
  for (int i = 0; i < 3; ++i) m += kronecker(unit_outer(3, i, i), unit_outer(3, i, i));
  return m;
}

inline MatrixXd cyclic_a2() {
  MatrixXd m = MatrixXd::Zero(9, 9);
  for (int i = 0; i < 3; ++i) m += kronecker(unit_outer(3, i, i), unit_outer(3, (i + 1) % 3, (i + 1) % 3));
  return m;
}

/// A1 + 2 A2 - A3 / 2 over (3, 3).
inline KroneckerMatrix cyclic_matrix_example() {
  MatrixXd a3 = MatrixXd::Zero(9, 9);
  for (int i = 0; i < 3; ++i)
    for (int k = i + 1; k < 3; ++k) {
      const MatrixXd s = unit_outer(3, i, k) + unit_outer(3, k, i);
      a3 += kronecker(s, s);
    }
  return KroneckerMatrix(3, 3, cyclic_a1() + 2.0 * cyclic_a2() - 0.5 * a3);
}

/// A[pi(i,j), pi(k,l)] = i + j + k + l, 1-based, over (4, 4).
inline KroneckerMatrix index_sum_example() {
  MatrixXd a(16, 16);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) a(i * 4 + j, k * 4 + l) = i + j + k + l + 4;
  return KroneckerMatrix(4, 4, a);
}

/// B1 (x) C1 + B2 (x) C2 over (2, 3).
inline KroneckerMatrix kronecker_sum_example() {
  MatrixXd b1(2, 2), c1(3, 3), b2(2, 2), c2(3, 3);
  b1 << 2, 1, 1, 3;
  c1 << 3, -1, -1, -1, 3, -1, -1, -1, 3;
  b2 << 1, -1, -1, 2;
  c2 << 4, 2, -1, 2, 4, 2, -1, 2, 4;
  return KroneckerMatrix(2, 3, kronecker(b1, c1) + kronecker(b2, c2));
}

/// I3 (x) I3 + A2 over (3, 3).
inline KroneckerMatrix identity_plus_example() {
  return KroneckerMatrix(3, 3, MatrixXd::Identity(9, 9) + cyclic_a2());
}

// ---------------------------------------------------------------------------
// SDP with a planted complementary primal-dual pair.

struct PlantedSdp {
  SdpProblem problem;
  VectorXd w;
  double value = 0.0;
};

/// Block F(w) = F0 + sum w_i F_i of side m with rank r at the planted w,
/// dual multiplier of rank m - r on the complement, and `neq` equalities.
inline PlantedSdp planted_sdp(std::mt19937_64& rng, int n, int m, int r, int neq) {
  using Term = LinearSymmetricMap::Term;
  std::uniform_real_distribution<double> ud(0.5, 2.0);
  std::vector<MatrixXd> f;
  for (int i = 0; i < n; ++i) f.push_back(random_symmetric(rng, m));
  const VectorXd w = randn(rng, n);
  MatrixXd g(m, m);
  for (int c = 0; c < m; ++c) g.col(c) = randn(rng, m);
  const MatrixXd qm = Eigen::HouseholderQR<MatrixXd>(g).householderQ();
  VectorXd s = VectorXd::Zero(m), z = VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) (i < r ? s(i) : z(i)) = ud(rng);
  const MatrixXd sx = qm * s.asDiagonal() * qm.transpose();
  const MatrixXd zx = qm * z.asDiagonal() * qm.transpose();
  MatrixXd f0 = sx;
  for (int i = 0; i < n; ++i) f0 -= w(i) * f[static_cast<std::size_t>(i)];

  PlantedSdp out;
  out.problem = SdpProblem(n);
  out.problem.add_block(LinearSymmetricMap::build(m, n,
                                                  [&](int a, int b) {
                                                    std::vector<Term> t;
                                                    for (int i = 0; i < n; ++i)
                                                      t.push_back({i, f[static_cast<std::size_t>(i)](a, b)});
                                                    return t;
                                                  }),
                        f0);
  // c = F^*(Z) + G^T y
  const VectorXd y = randn(rng, neq);
  VectorXd c(n);
  for (int i = 0; i < n; ++i) c(i) = (f[static_cast<std::size_t>(i)].cwiseProduct(zx)).sum();
  for (int e = 0; e < neq; ++e) {
    const VectorXd grow = randn(rng, n);
    SparseRow row;
    for (int i = 0; i < n; ++i) row.terms.emplace_back(i, grow(i));
    row.rhs = grow.dot(w);
    out.problem.equalities.push_back(row);
    c += y(e) * grow;
  }
  out.problem.cost = c;
  out.w = w;
  out.value = c.dot(w);
  return out;
}

/// min <I, X> over 2 x 2 PSD X subject to trace X = -1.
inline SdpProblem trivially_infeasible_sdp() {
  using Term = LinearSymmetricMap::Term;
  // X = [[w0, w1], [w1, w2]]
  SdpProblem prob(3);
  prob.cost << 1.0, 0.0, 1.0;
  SparseRow tr;
  tr.terms = {{0, 1.0}, {2, 1.0}};
  tr.rhs = -1.0;
  prob.equalities.push_back(tr);
  prob.add_block(LinearSymmetricMap::build(2, 3, [](int a, int b) {
    return std::vector<Term>{{a == b ? 2 * a : 1, 1.0}};
  }));
  return prob;
}

}  // namespace posmap::fixtures

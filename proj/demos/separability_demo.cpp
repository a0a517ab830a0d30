// Decompose a planted sum of three rank-one Kronecker terms, then show a
// matrix the relaxation proves inseparable.

#include <iostream>
#include <random>

#include "posmap/separability.hpp"

int main() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  const int p = 2, q = 3;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p * q, p * q);
  for (int s = 0; s < 3; ++s) {
    Eigen::VectorXd u(p), v(q);
    for (auto& x : u) x = nd(rng);
    for (auto& x : v) x = nd(rng);
    a += posmap::kron_rank1(u, v).matrix();
  }
  const posmap::SeparabilityReport r = posmap::check_separability(posmap::KroneckerMatrix(p, q, a));
  std::cout << "planted: " << posmap::to_string(r.status) << ", residual "
            << r.reconstruction_residual << "\n";
  for (const auto& t : r.atoms) {
    std::cout << "  a = " << t.a.transpose() << ", b = " << t.b.transpose() << "\n";
  }

  // not PSD, so not separable; the answer comes with a Farkas ray
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
  m(0, 0) = m(3, 3) = 1.0;
  m(0, 3) = m(3, 0) = m(1, 2) = m(2, 1) = 1.0;
  const posmap::SeparabilityReport e = posmap::check_separability(posmap::KroneckerMatrix(2, 2, m));
  std::cout << "coupled: " << posmap::to_string(e.status);
  if (e.ray_check) std::cout << ", ray value " << e.ray_check->value;
  std::cout << "\n";
  return 0;
}

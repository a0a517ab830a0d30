// Is the map behind B(x, y) = sum x_i^2 y_i^2 + 2 sum x_i^2 y_{i+1}^2
// - 2 sum x_i x_k y_i y_k positive? Prints the certified minimum and the
// minimizers on the bi-sphere.

#include <iostream>

#include "posmap/positivity.hpp"

int main() {
  posmap::BiQuadraticForm b(3, 3);
  for (int i = 0; i < 3; ++i) {
    b.add_to(i, i, i, i, 1.0);
    b.add_to(i, (i + 1) % 3, i, (i + 1) % 3, 2.0);
    for (int k = i + 1; k < 3; ++k) b.add_to(i, i, k, k, -2.0);
  }

  const posmap::PositivityReport r = posmap::check_positivity(b);
  std::cout << "status " << posmap::to_string(r.status) << ", b_min " << r.b_min << " at k="
            << r.order_used << "\n";
  for (const auto& m : r.minimizers) {
    std::cout << "  u = " << m.u.transpose() << ", v = " << m.v.transpose() << ", B = " << m.value
              << "\n";
  }
  return r.status == posmap::PositivityStatus::kInconclusive ? 2 : 0;
}

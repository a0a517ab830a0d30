#pragma once

#include <iterator>
#include <memory>
#include <vector>

#include "posmap/moments.hpp"
#include "posmap/polynomial.hpp"
#include "posmap/sdp.hpp"

namespace posmap {

/// A moment relaxation together with the basis indexing its variables.
struct Relaxation {
  std::shared_ptr<const MonomialBasis> basis;
  SdpProblem sdp;
  int order = 0;
};

/// x^T x - 1, y^T y - 1 and the sign cuts 1^T x, 1^T y.
struct BisphereConstraints {
  std::vector<Polynomial> h;
  std::vector<Polynomial> g;
};

inline BisphereConstraints bisphere_constraints(int p, int q) {
  const int n = p + q;
  Polynomial sx = Polynomial::constant(n, -1.0), sy = Polynomial::constant(n, -1.0);
  Polynomial gx(n), gy(n);
  for (int i = 0; i < p; ++i) {
    sx += Polynomial::variable(n, i) * Polynomial::variable(n, i);
    gx += Polynomial::variable(n, i);
  }
  for (int j = 0; j < q; ++j) {
    sy += Polynomial::variable(n, p + j) * Polynomial::variable(n, p + j);
    gy += Polynomial::variable(n, p + j);
  }
  return {{sx, sy}, {gx, gy}};
}

namespace detail {

// Shared assembly: ideal rows for h, PSD blocks M_k and L_g^{(k)}.
inline void add_semialgebraic_constraints(Relaxation& rel,
                                          const std::vector<Polynomial>& h,
                                          const std::vector<Polynomial>& g,
                                          std::vector<SparseRow> rows) {
  const auto& basis = *rel.basis;
  for (const auto& hi : h) {
    auto hr = ideal_equality_rows(hi, basis);
    rows.insert(rows.end(), std::make_move_iterator(hr.begin()),
                std::make_move_iterator(hr.end()));
  }
  rel.sdp.equalities = deduplicate_rows(rows);
  rel.sdp.add_block(moment_structure(basis, rel.order));
  for (const auto& gj : g) rel.sdp.add_block(localizing_structure(basis, gj, rel.order));
}

}  // namespace detail

}  // namespace posmap

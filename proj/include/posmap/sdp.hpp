#pragma once

// Dense semidefinite programming in moment ("dual") form:
//
//   minimize    c^T w
//   subject to  G w = h
//               F_j(w) = F_j0 + sum_alpha w_alpha F_j,alpha  >= 0   (PSD)
//
// Equalities are eliminated through an orthonormal nullspace basis N of G,
// w = w0 - N y, which leaves a pure LMI problem in y. That problem and its
// conic dual are embedded in a homogeneous self-dual model and solved with a
// Mehrotra predictor-corrector method in Nesterov-Todd scaling. The
// embedding yields either an optimal pair or a Farkas ray proving
// infeasibility of the moment problem.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "posmap/errors.hpp"
#include "posmap/moments.hpp"

namespace posmap {

/// One linear matrix inequality F0 + F(w) >= 0.
struct LmiBlock {
  Eigen::MatrixXd constant;  // empty means zero
  LinearSymmetricMap linear;

  int size() const { return linear.size(); }

  Eigen::MatrixXd evaluate(const Eigen::VectorXd& w) const {
    Eigen::MatrixXd m = linear.evaluate(w);
    if (constant.size() != 0) m += constant;
    return m;
  }
};

struct SdpProblem {
  int num_vars = 0;
  Eigen::VectorXd cost;
  std::vector<SparseRow> equalities;
  std::vector<LmiBlock> blocks;

  explicit SdpProblem(int n = 0)
      : num_vars(n), cost(Eigen::VectorXd::Zero(n)) {}

  void add_block(LinearSymmetricMap linear, Eigen::MatrixXd constant = {}) {
    blocks.push_back({std::move(constant), std::move(linear)});
  }

  /// Adds the scalar inequality row(w) >= row.rhs as a 1 x 1 block.
  void add_nonnegative(const SparseRow& row) {
    auto lin = LinearSymmetricMap::build(1, num_vars, [&](int, int) {
      std::vector<LinearSymmetricMap::Term> t;
      for (const auto& [i, c] : row.terms) {
        t.push_back({static_cast<std::int32_t>(i), c});
      }
      return t;
    });
    add_block(std::move(lin), Eigen::MatrixXd::Constant(1, 1, -row.rhs));
  }

  int total_cone_size() const {
    int n = 0;
    for (const auto& b : blocks) n += b.size();
    return n;
  }

  void validate() const {
    if (cost.size() != num_vars) {
      throw StructuralError("SDP cost vector has wrong length");
    }
    for (const auto& row : equalities)
      for (const auto& [i, c] : row.terms)
        if (i < 0 || i >= num_vars) {
          throw StructuralError("SDP equality row refers to unknown variable");
        }
    for (const auto& b : blocks) {
      if (b.linear.num_vars() != num_vars) {
        throw StructuralError("SDP block built for a different variable count");
      }
      if (b.constant.size() != 0 &&
          (b.constant.rows() != b.size() || b.constant.cols() != b.size())) {
        throw StructuralError("SDP block constant has wrong shape");
      }
      if (b.constant.size() != 0 &&
          (b.constant - b.constant.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw StructuralError("SDP block constant is not symmetric");
      }
    }
  }
};

enum class SdpStatus {
  kOptimal,
  kPrimalInfeasible,  ///< the moment problem has no feasible point
  kDualInfeasible,    ///< the moment problem is unbounded below
  kInaccurate,
  kIterationLimit,
};

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::kOptimal: return "Optimal";
    case SdpStatus::kPrimalInfeasible: return "PrimalInfeasible";
    case SdpStatus::kDualInfeasible: return "DualInfeasible";
    case SdpStatus::kInaccurate: return "Inaccurate";
    case SdpStatus::kIterationLimit: return "IterationLimit";
  }
  return "?";
}

/// Farkas ray (Z_j >= 0, y) for the moment problem:
///   sum_j F_j^*(Z_j) + G^T y = 0   and   sum_j <F_j0, Z_j> - h^T y < 0.
/// For any feasible w, 0 <= sum_j <Z_j, F_j(w)> = sum_j <F_j0, Z_j> - h^T y,
/// a contradiction.
struct FarkasRay {
  std::vector<Eigen::MatrixXd> block_multipliers;
  Eigen::VectorXd equality_multipliers;
};

struct CertificateCheck {
  double min_eig = 0.0;           ///< smallest eigenvalue over Z_j (unit ray)
  double value = 0.0;             ///< sum <F_j0, Z_j> - h^T y (unit ray)
  double adjoint_residual = 0.0;  ///< |sum F_j^*(Z_j) + G^T y|_inf (unit ray)
  bool passes = false;
};

struct SdpOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double pivot_tol = 1e-10;
  int refine_steps = 1;
  /// Accepted as optimal (flagged reduced_accuracy) when the iteration stalls.
  double near_tol = 1e-6;
  int stall_iters = 10;
  std::ostream* log = nullptr;
};

struct SdpOutcome {
  SdpStatus status = SdpStatus::kInaccurate;
  Eigen::VectorXd w;                        ///< moment vector
  std::vector<Eigen::MatrixXd> block_values;  ///< F_j(w)
  std::vector<Eigen::MatrixXd> dual_blocks;   ///< Z_j
  Eigen::VectorXd equality_duals;
  double primal_objective = std::numeric_limits<double>::quiet_NaN();
  double dual_objective = std::numeric_limits<double>::quiet_NaN();
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  bool reduced_accuracy = false;
  int iterations = 0;
  double seconds = 0.0;
  std::optional<FarkasRay> certificate;
  std::string message;
};

namespace detail {

inline double frob_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).sum();
}

/// Equality elimination: w = w0 + N z with N an orthonormal basis of null(G).
struct EqualityElimination {
  Eigen::MatrixXd g;  // E x n
  Eigen::VectorXd h;
  Eigen::VectorXd w0;
  Eigen::MatrixXd basis;  // n x m
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_gt;
  int rank = 0;
  bool consistent = true;
  Eigen::VectorXd ls_residual;  // h - G w0

  EqualityElimination(const SdpProblem& prob, double pivot_tol) {
    const int n = prob.num_vars;
    const auto e = static_cast<Eigen::Index>(prob.equalities.size());
    g = Eigen::MatrixXd::Zero(e, n);
    h.resize(e);
    for (Eigen::Index r = 0; r < e; ++r) {
      const auto& row = prob.equalities[static_cast<std::size_t>(r)];
      for (const auto& [i, c] : row.terms) g(r, i) += c;
      h(r) = row.rhs;
    }
    if (e == 0) {
      w0 = Eigen::VectorXd::Zero(n);
      basis = Eigen::MatrixXd::Identity(n, n);
      return;
    }
    // Rows are scaled to unit norm before rank decisions.
    for (Eigen::Index r = 0; r < e; ++r) {
      const double nr = g.row(r).norm();
      if (nr > 0) {
        g.row(r) /= nr;
        h(r) /= nr;
      }
    }
    qr_gt.setThreshold(pivot_tol);
    qr_gt.compute(g.transpose());
    rank = static_cast<int>(qr_gt.rank());
    Eigen::MatrixXd q = qr_gt.householderQ();
    basis = q.rightCols(n - rank);
    // Least-squares particular solution through the same factorization:
    // G = P R^T Q^T, so G Q1 u = h reduces to R1^T u = P^T h.
    const Eigen::MatrixXd r_top =
        qr_gt.matrixR().topRows(rank).triangularView<Eigen::Upper>();
    const Eigen::VectorXd ph = qr_gt.colsPermutation().transpose() * h;
    const Eigen::VectorXd u = r_top.transpose().colPivHouseholderQr().solve(ph);
    w0 = q.leftCols(rank) * u;
    ls_residual = h - g * w0;
    consistent = ls_residual.lpNorm<Eigen::Infinity>() <=
                 1e-9 * (1.0 + h.lpNorm<Eigen::Infinity>());
  }

  /// Least-squares y with G^T y = rhs, in the original (unscaled) row units.
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& rhs,
                                  const SdpProblem& prob) const {
    if (g.rows() == 0) return {};
    Eigen::VectorXd y = qr_gt.solve(rhs);
    // Undo the row scaling: G_scaled = D G.
    for (Eigen::Index r = 0; r < y.size(); ++r) {
      double nr = 0.0;
      for (const auto& [i, c] : prob.equalities[static_cast<std::size_t>(r)].terms)
        nr += c * c;
      nr = std::sqrt(nr);
      if (nr > 0) y(r) /= nr;
    }
    return y;
  }
};

// Adds W (x) W restricted to the block structure into hw:
// hw(beta, alpha) += sum coef_a coef_b W(r, r2) W(c, c2)
// over cells (r, c) containing alpha and (r2, c2) containing beta.
inline void accumulate_schur(const LinearSymmetricMap& map,
                             const Eigen::MatrixXd& w, Eigen::MatrixXd& hw) {
  const int n = map.size();
  const auto& off = map.offsets();
  const auto& terms = map.terms();
  bool single = true;
  for (std::size_t c = 0; c + 1 < off.size(); ++c) {
    if (off[c + 1] - off[c] != 1 || terms[off[c]].coef != 1.0) {
      single = false;
      break;
    }
  }
  if (single) {
    // Plain moment matrices: one unit term per cell.
    std::vector<std::int32_t> idx(static_cast<std::size_t>(n) * n);
    for (std::size_t c = 0; c < idx.size(); ++c) idx[c] = terms[off[c]].index;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        double* col = hw.col(idx[static_cast<std::size_t>(r) * n + c]).data();
        for (int r2 = 0; r2 < n; ++r2) {
          const double a = w(r, r2);
          const std::int32_t* row_idx = &idx[static_cast<std::size_t>(r2) * n];
          const double* wc = w.col(c).data();  // symmetric: W(c, c2) = W(c2, c)
          for (int c2 = 0; c2 < n; ++c2) col[row_idx[c2]] += a * wc[c2];
        }
      }
    }
    return;
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const std::size_t cell = static_cast<std::size_t>(r) * n + c;
      for (auto ka = off[cell]; ka < off[cell + 1]; ++ka) {
        double* col = hw.col(terms[ka].index).data();
        const double ca = terms[ka].coef;
        for (int r2 = 0; r2 < n; ++r2) {
          const double a = ca * w(r, r2);
          for (int c2 = 0; c2 < n; ++c2) {
            const double f = a * w(c2, c);
            const std::size_t cell2 = static_cast<std::size_t>(r2) * n + c2;
            for (auto kb = off[cell2]; kb < off[cell2 + 1]; ++kb) {
              col[terms[kb].index] += f * terms[kb].coef;
            }
          }
        }
      }
    }
  }
}

// Nesterov-Todd scaling of one block: R^T S R = R^{-1} X R^{-T} = diag(lambda).
struct NtScaling {
  Eigen::MatrixXd r, rinv, w;
  Eigen::VectorXd lambda;

  bool compute(const Eigen::MatrixXd& x, const Eigen::MatrixXd& s) {
    Eigen::LLT<Eigen::MatrixXd> lx(x), ls(s);
    if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) return false;
    const Eigen::MatrixXd lxm = lx.matrixL();
    const Eigen::MatrixXd lsm = ls.matrixL();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(lsm.transpose() * lxm,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    lambda = svd.singularValues();
    if (!(lambda.minCoeff() > 0.0)) return false;
    const Eigen::VectorXd isq = lambda.cwiseSqrt().cwiseInverse();
    r = lxm * svd.matrixV() * isq.asDiagonal();
    rinv = lambda.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() *
           lxm.triangularView<Eigen::Lower>().solve(
               Eigen::MatrixXd::Identity(x.rows(), x.cols()));
    w = r * r.transpose();
    return true;
  }
};

// Largest alpha with lambda + alpha * d >= 0 (d symmetric, lambda diagonal).
inline double max_step(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& d) {
  const Eigen::VectorXd isq = lambda.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd m = isq.asDiagonal() * d * isq.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double e = es.eigenvalues()(0);
  return e < 0 ? -1.0 / e : std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline CertificateCheck check_certificate(const SdpProblem& prob,
                                          const FarkasRay& ray) {
  CertificateCheck out;
  if (ray.block_multipliers.size() != prob.blocks.size() ||
      static_cast<std::size_t>(ray.equality_multipliers.size()) !=
          prob.equalities.size()) {
    return out;
  }
  double norm2 = ray.equality_multipliers.squaredNorm();
  for (const auto& z : ray.block_multipliers) norm2 += z.squaredNorm();
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0)) return out;

  Eigen::VectorXd adj = Eigen::VectorXd::Zero(prob.num_vars);
  double value = 0.0;
  out.min_eig = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < prob.blocks.size(); ++j) {
    const Eigen::MatrixXd z = ray.block_multipliers[j] / norm;
    prob.blocks[j].linear.adjoint_add(z, adj);
    if (prob.blocks[j].constant.size() != 0) {
      value += detail::frob_dot(prob.blocks[j].constant, z);
    }
    out.min_eig = std::min(out.min_eig, min_eigenvalue(0.5 * (z + z.transpose())));
  }
  for (std::size_t r = 0; r < prob.equalities.size(); ++r) {
    const double y = ray.equality_multipliers(static_cast<Eigen::Index>(r)) / norm;
    for (const auto& [i, c] : prob.equalities[r].terms) adj(i) += c * y;
    value -= prob.equalities[r].rhs * y;
  }
  out.value = value;
  out.adjoint_residual = adj.size() ? adj.lpNorm<Eigen::Infinity>() : 0.0;
  out.passes = out.min_eig >= -1e-7 && value < -1e-8 &&
               out.adjoint_residual <= 1e-6 * std::abs(value);
  return out;
}

/// Plain-text dump: "c <var> <value>", "e <row> <var> <value>", "h <row>
/// <value>", "b <block> <row> <col> <var> <value>" (var -1 = constant term,
/// upper triangle only, 0-based).
inline void dump_triplets(const SdpProblem& prob, std::ostream& os) {
  os.precision(17);
  os << "# posmap sdp n=" << prob.num_vars << " equalities="
     << prob.equalities.size() << " blocks=" << prob.blocks.size() << "\n";
  for (int i = 0; i < prob.num_vars; ++i)
    if (prob.cost(i) != 0.0) os << "c " << i << " " << prob.cost(i) << "\n";
  for (std::size_t r = 0; r < prob.equalities.size(); ++r) {
    for (const auto& [i, c] : prob.equalities[r].terms)
      os << "e " << r << " " << i << " " << c << "\n";
    os << "h " << r << " " << prob.equalities[r].rhs << "\n";
  }
  for (std::size_t j = 0; j < prob.blocks.size(); ++j) {
    const auto& b = prob.blocks[j];
    const int n = b.size();
    os << "s " << j << " " << n << "\n";
    for (int r = 0; r < n; ++r)
      for (int c = r; c < n; ++c) {
        if (b.constant.size() != 0 && b.constant(r, c) != 0.0)
          os << "b " << j << " " << r << " " << c << " -1 " << b.constant(r, c)
             << "\n";
        const std::size_t cell = static_cast<std::size_t>(r) * n + c;
        for (auto k = b.linear.offsets()[cell]; k < b.linear.offsets()[cell + 1]; ++k)
          os << "b " << j << " " << r << " " << c << " "
             << b.linear.terms()[k].index << " " << b.linear.terms()[k].coef << "\n";
      }
  }
}

inline SdpOutcome solve(const SdpProblem& prob, const SdpOptions& opts = {}) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const auto t_start = std::chrono::steady_clock::now();
  prob.validate();
  SdpOutcome out;
  const auto finish = [&](SdpOutcome& o) -> SdpOutcome {
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              t_start)
                    .count();
    return o;
  };

  const detail::EqualityElimination elim(prob, opts.pivot_tol);
  const std::size_t nb = prob.blocks.size();

  if (!elim.consistent) {
    // Equalities alone are inconsistent: y = h - G w0 is orthogonal to
    // range(G) and has h^T y = |y|^2 > 0.
    FarkasRay ray;
    for (const auto& b : prob.blocks)
      ray.block_multipliers.push_back(MatrixXd::Zero(b.size(), b.size()));
    VectorXd y = elim.ls_residual;
    for (Eigen::Index r = 0; r < y.size(); ++r) {
      double nr = 0.0;
      for (const auto& [i, c] : prob.equalities[static_cast<std::size_t>(r)].terms)
        nr += c * c;
      if (nr > 0) y(r) /= std::sqrt(nr);
    }
    ray.equality_multipliers = y;
    out.status = SdpStatus::kPrimalInfeasible;
    out.certificate = std::move(ray);
    out.message = "equality constraints are inconsistent";
    return finish(out);
  }

  const MatrixXd& nmat = elim.basis;
  const auto m = nmat.cols();
  const int nvars = prob.num_vars;
  const bool identity_basis = prob.equalities.empty();

  // C_j = F_j0 + F_j(w0), A(X) = N^T F^*(X), A^*(y) = F(N y), b = N^T c.
  std::vector<MatrixXd> cmat(nb);
  for (std::size_t j = 0; j < nb; ++j) cmat[j] = prob.blocks[j].evaluate(elim.w0);
  const VectorXd b_raw = identity_basis ? prob.cost : VectorXd(nmat.transpose() * prob.cost);
  const double cost_offset = prob.cost.dot(elim.w0);

  const auto op_a = [&](const std::vector<MatrixXd>& x) -> VectorXd {
    VectorXd g = VectorXd::Zero(nvars);
    for (std::size_t j = 0; j < nb; ++j) prob.blocks[j].linear.adjoint_add(x[j], g);
    return identity_basis ? g : VectorXd(nmat.transpose() * g);
  };
  const auto op_at = [&](const VectorXd& y) {
    const VectorXd wv = identity_basis ? y : VectorXd(nmat * y);
    std::vector<MatrixXd> res(nb);
    for (std::size_t j = 0; j < nb; ++j) res[j] = prob.blocks[j].linear.evaluate(wv);
    return res;
  };

  // Data scaling.
  double c_norm = 0.0;
  for (const auto& c : cmat) c_norm += c.squaredNorm();
  c_norm = std::sqrt(c_norm);
  const double b_norm = b_raw.size() ? b_raw.lpNorm<Eigen::Infinity>() : 0.0;
  const double sc = c_norm > 0 ? c_norm : 1.0;
  const double sb = b_norm > 0 ? b_norm : 1.0;
  std::vector<MatrixXd> cs(nb);
  for (std::size_t j = 0; j < nb; ++j) cs[j] = cmat[j] / sc;
  const VectorXd bs = b_raw / sb;
  double cs_max = 0.0;
  for (const auto& c : cs) cs_max = std::max(cs_max, c.cwiseAbs().maxCoeff());
  const double bs_norm = b_norm / sb;

  int nu = 0;
  for (const auto& blk : prob.blocks) nu += blk.size();

  std::vector<MatrixXd> x(nb), s(nb);
  for (std::size_t j = 0; j < nb; ++j) {
    const int n = prob.blocks[j].size();
    x[j] = MatrixXd::Identity(n, n);
    s[j] = MatrixXd::Identity(n, n);
  }
  VectorXd y = VectorXd::Zero(m);
  double tau = 1.0, kappa = 1.0;

  std::vector<detail::NtScaling> nt(nb);
  MatrixXd hw;
  if (!identity_basis) hw.resize(nvars, nvars);
  MatrixXd hmat(m, m);

  struct Best {
    std::vector<MatrixXd> x, s;
    VectorXd y;
    double tau = 0, kappa = 0, merit = std::numeric_limits<double>::infinity();
  } best;

  SdpStatus status = SdpStatus::kIterationLimit;
  std::string message;
  double stall_ref = std::numeric_limits<double>::infinity();
  int stall_count = 0;
  int iter = 0;
  const auto log = [&](const std::string& line) {
    if (opts.log) *opts.log << line << "\n";
  };

  for (; iter <= opts.max_iter; ++iter) {
    // Residuals of the embedding (scaled data).
    const VectorXd ax = op_a(x);
    const std::vector<MatrixXd> aty = op_at(y);
    const VectorXd f1 = ax - bs * tau;
    std::vector<MatrixXd> f2(nb);
    double cx = 0.0, xs = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      f2[j] = aty[j] + s[j] - cs[j] * tau;
      cx += detail::frob_dot(cs[j], x[j]);
      xs += detail::frob_dot(x[j], s[j]);
    }
    const double by = bs.dot(y);
    const double f3 = cx - by + kappa;
    const double mu = (xs + tau * kappa) / (nu + 1);

    // Termination tests on the unscaled problem.
    double f2max = 0.0;
    for (const auto& f : f2) f2max = std::max(f2max, f.cwiseAbs().maxCoeff());
    const double pres = (m ? f1.lpNorm<Eigen::Infinity>() : 0.0) / tau / (1.0 + bs_norm);
    const double dres = f2max / tau / (1.0 + cs_max);
    const double pobj = cx / tau, dobj = by / tau;
    const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double merit = std::max({pres, dres, gap});
    if (merit < best.merit) best = {x, s, y, tau, kappa, merit};
    if (merit < 0.5 * stall_ref) {
      stall_ref = merit;
      stall_count = 0;
    } else if (++stall_count >= opts.stall_iters) {
      status = SdpStatus::kInaccurate;
      message = "progress stalled";
      break;
    }
    if (opts.log) {
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "%3d pobj=% .9e dobj=% .9e pres=%.2e dres=%.2e gap=%.2e "
                    "tau=%.2e kappa=%.2e mu=%.2e",
                    iter, pobj, dobj, pres, dres, gap, tau, kappa, mu);
      log(buf);
    }
    if (merit <= opts.tol) {
      status = SdpStatus::kOptimal;
      break;
    }
    // Infeasibility of the LMI problem (moment problem): X with A(X) ~ 0,
    // <C, X> < 0.
    double xnorm = 0.0;
    for (const auto& xj : x) xnorm += xj.squaredNorm();
    xnorm = std::sqrt(xnorm);
    if (cx < 0 && ax.norm() <= opts.tol * (-cx) && -cx >= 1e-8 * xnorm &&
        kappa / tau > 1e6) {
      status = SdpStatus::kPrimalInfeasible;
      break;
    }
    // Unboundedness of the moment problem: -A^*(y) >= 0 direction with b^T y > 0.
    double atys = 0.0;
    for (std::size_t j = 0; j < nb; ++j) atys += (aty[j] + s[j]).squaredNorm();
    if (by > 0 && std::sqrt(atys) <= opts.tol * by && kappa / tau > 1e6) {
      status = SdpStatus::kDualInfeasible;
      break;
    }
    if (iter == opts.max_iter) break;

    // Scaling.
    bool ok = true;
    for (std::size_t j = 0; j < nb && ok; ++j) ok = nt[j].compute(x[j], s[j]);
    if (!ok) {
      status = SdpStatus::kInaccurate;
      message = "lost positive definiteness of an iterate";
      break;
    }

    // Schur complement H_ij = <A_i, W A_j W>.
    if (identity_basis) {
      hmat.setZero();
      for (std::size_t j = 0; j < nb; ++j)
        detail::accumulate_schur(prob.blocks[j].linear, nt[j].w, hmat);
    } else {
      hw.setZero();
      for (std::size_t j = 0; j < nb; ++j)
        detail::accumulate_schur(prob.blocks[j].linear, nt[j].w, hw);
      const MatrixXd tmp = hw * nmat;
      hmat.noalias() = nmat.transpose() * tmp;
    }
    hmat = 0.5 * (hmat + hmat.transpose());
    Eigen::LLT<MatrixXd> chol;
    {
      const double diag_max = m ? hmat.diagonal().cwiseAbs().maxCoeff() : 1.0;
      double reg = 0.0;
      for (int attempt = 0; attempt < 8; ++attempt) {
        MatrixXd hr = hmat;
        if (reg > 0) hr.diagonal().array() += reg;
        chol.compute(hr);
        if (chol.info() == Eigen::Success) break;
        reg = reg == 0 ? 1e-12 * std::max(diag_max, 1.0) : reg * 100;
      }
      if (chol.info() != Eigen::Success) {
        status = SdpStatus::kInaccurate;
        message = "Schur complement factorization failed";
        break;
      }
    }

    std::vector<MatrixXd> wcw(nb);
    double c0 = 0.0;
    for (std::size_t j = 0; j < nb; ++j) {
      wcw[j] = nt[j].w * cs[j] * nt[j].w;
      c0 += detail::frob_dot(cs[j], wcw[j]);
    }
    const VectorXd avec = op_a(wcw);
    const VectorXd v = m ? VectorXd(chol.solve(avec + bs)) : VectorXd();
    const VectorXd amb = avec - bs;
    const double amb_v = m ? amb.dot(v) : 0.0;

    struct Direction {
      std::vector<MatrixXd> dx, ds, dxs, dss;  // unscaled and scaled
      VectorXd dy;
      double dtau = 0, dkappa = 0;
    };

    // Solves the Newton system for the scaled complementarity target k_j
    // (dx~ + ds~ = k_j), residual weight eta and tau-kappa target r_tk.
    const auto direction = [&](const std::vector<MatrixXd>& k, double eta,
                               double r_tk) {
      Direction d;
      std::vector<MatrixXd> t(nb);
      double ct = 0.0;
      for (std::size_t j = 0; j < nb; ++j) {
        t[j] = nt[j].r * k[j] * nt[j].r.transpose() + eta * nt[j].w * f2[j] * nt[j].w;
        ct += detail::frob_dot(cs[j], t[j]);
      }
      const VectorXd r1 = -eta * f1 - op_a(t);
      const double r2 = -eta * f3 - ct - r_tk / tau;
      const double den = amb_v - c0 - kappa / tau;
      // Solve through the Schur factor, then refine against the explicit
      // operator: the factor loses accuracy as the iterates approach the
      // boundary.
      d.dy = VectorXd::Zero(m);
      d.dtau = 0.0;
      VectorXd e1 = r1;
      double e2 = r2;
      std::vector<MatrixXd> atdy, waw(nb);
      const double r1n = std::max(r1.norm(), 1e-300);
      for (int pass = 0; pass <= opts.refine_steps; ++pass) {
        const VectorXd u = m ? VectorXd(chol.solve(e1)) : VectorXd();
        const double ddtau = (e2 - (m ? amb.dot(u) : 0.0)) / den;
        if (m) d.dy += u + v * ddtau;
        d.dtau += ddtau;
        atdy = op_at(d.dy);
        double cw = 0.0;
        for (std::size_t j = 0; j < nb; ++j) {
          waw[j] = nt[j].w * atdy[j] * nt[j].w;
          cw += detail::frob_dot(cs[j], waw[j]);
        }
        e1 = r1 - op_a(waw) + (avec + bs) * d.dtau;
        e2 = r2 - (cw - (m ? bs.dot(d.dy) : 0.0) - (c0 + kappa / tau) * d.dtau);
        if (e1.norm() <= 1e-14 * r1n) break;
      }
      d.dx.resize(nb);
      d.ds.resize(nb);
      d.dxs.resize(nb);
      d.dss.resize(nb);
      for (std::size_t j = 0; j < nb; ++j) {
        d.ds[j] = -eta * f2[j] - atdy[j] + cs[j] * d.dtau;
        d.dx[j] = t[j] + waw[j] - wcw[j] * d.dtau;
        d.ds[j] = 0.5 * (d.ds[j] + d.ds[j].transpose());
        d.dx[j] = 0.5 * (d.dx[j] + d.dx[j].transpose());
        d.dxs[j] = nt[j].rinv * d.dx[j] * nt[j].rinv.transpose();
        d.dss[j] = nt[j].r.transpose() * d.ds[j] * nt[j].r;
      }
      d.dkappa = (r_tk - kappa * d.dtau) / tau;
      return d;
    };

    const auto step_length = [&](const Direction& d) {
      double a = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nb; ++j) {
        a = std::min(a, detail::max_step(nt[j].lambda, d.dxs[j]));
        a = std::min(a, detail::max_step(nt[j].lambda, d.dss[j]));
      }
      if (d.dtau < 0) a = std::min(a, -tau / d.dtau);
      if (d.dkappa < 0) a = std::min(a, -kappa / d.dkappa);
      return a;
    };

    // Predictor.
    std::vector<MatrixXd> k_aff(nb);
    for (std::size_t j = 0; j < nb; ++j) k_aff[j] = -MatrixXd(nt[j].lambda.asDiagonal());
    const Direction aff = direction(k_aff, 1.0, -tau * kappa);
    const double a_aff = std::min(1.0, step_length(aff));
    const double sigma = std::clamp(std::pow(1.0 - a_aff, 3.0), 0.0, 1.0);

    // Corrector: lambda o (dx~ + ds~) = -lambda o lambda + sigma mu I - dx~a o ds~a.
    std::vector<MatrixXd> k_cor(nb);
    for (std::size_t j = 0; j < nb; ++j) {
      const auto& lam = nt[j].lambda;
      const int n = static_cast<int>(lam.size());
      MatrixXd rhs = -0.5 * (aff.dxs[j] * aff.dss[j] + aff.dss[j] * aff.dxs[j]);
      for (int i = 0; i < n; ++i) rhs(i, i) += sigma * mu - lam(i) * lam(i);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) rhs(r, c) *= 2.0 / (lam(r) + lam(c));
      k_cor[j] = std::move(rhs);
    }
    const double r_tk = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
    const Direction dir = direction(k_cor, 1.0 - sigma, r_tk);
    const double a_max = step_length(dir);
    const double alpha = std::min(1.0, 0.99 * a_max);
    if (opts.log) {
      // residual of the Newton system for the Schur solve
      char buf[160];
      std::snprintf(buf, sizeof buf, "    a_aff=%.3e sigma=%.3e alpha=%.3e", a_aff,
                    sigma, alpha);
      log(buf);
    }
    if (!(alpha > 1e-12)) {
      status = SdpStatus::kInaccurate;
      message = "step length collapsed";
      break;
    }
    for (std::size_t j = 0; j < nb; ++j) {
      x[j] += alpha * dir.dx[j];
      s[j] += alpha * dir.ds[j];
    }
    if (m) y += alpha * dir.dy;
    tau += alpha * dir.dtau;
    kappa += alpha * dir.dkappa;
    if (!std::isfinite(tau) || !std::isfinite(kappa)) {
      status = SdpStatus::kInaccurate;
      message = "non-finite iterate";
      break;
    }
  }
  out.iterations = iter;

  if (status == SdpStatus::kInaccurate || status == SdpStatus::kIterationLimit) {
    if (best.merit <= opts.near_tol) {
      out.reduced_accuracy = true;
      message = "near-optimal after " + (message.empty() ? std::string("iteration limit") : message) + " (merit " + std::to_string(best.merit) + ")";
      status = SdpStatus::kOptimal;
    }
    x = best.x;
    s = best.s;
    y = best.y;
    tau = best.tau;
    kappa = best.kappa;
  }

  // Assemble results in the original units: X = sb * X^, y = sc * y^.
  if (status == SdpStatus::kPrimalInfeasible) {
    FarkasRay ray;
    VectorXd g = VectorXd::Zero(nvars);
    for (std::size_t j = 0; j < nb; ++j) {
      MatrixXd z = 0.5 * (x[j] + x[j].transpose());
      // Project onto the PSD cone; the adjoint residual absorbs the change.
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(z);
      z = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() *
          es.eigenvectors().transpose();
      prob.blocks[j].linear.adjoint_add(z, g);
      ray.block_multipliers.push_back(std::move(z));
    }
    ray.equality_multipliers = identity_basis ? VectorXd() : elim.solve_transpose(-g, prob);
    if (identity_basis) ray.equality_multipliers.resize(0);
    out.certificate = std::move(ray);
    out.message = "moment problem infeasible (Farkas ray attached)";
  }

  const VectorXd y_orig = y * (sc / tau);
  out.w = identity_basis ? VectorXd(-y_orig) : VectorXd(elim.w0 - nmat * y_orig);
  for (std::size_t j = 0; j < nb; ++j) {
    out.block_values.push_back(prob.blocks[j].evaluate(out.w));
    out.dual_blocks.push_back(x[j] * (sb / tau));
  }
  {
    VectorXd g = VectorXd::Zero(nvars);
    for (std::size_t j = 0; j < nb; ++j)
      prob.blocks[j].linear.adjoint_add(out.dual_blocks[j], g);
    out.equality_duals = identity_basis ? VectorXd() : elim.solve_transpose(prob.cost - g, prob);
  }
  double cx = 0.0;
  for (std::size_t j = 0; j < nb; ++j) cx += detail::frob_dot(cmat[j], out.dual_blocks[j]);
  out.primal_objective = prob.cost.dot(out.w);
  out.dual_objective = cost_offset - cx;
  {
    // Residuals in the original units.
    double pr = 0.0;
    for (const auto& row : prob.equalities) pr = std::max(pr, std::abs(row.apply(out.w) - row.rhs));
    double neg = 0.0;
    for (const auto& bv : out.block_values) neg = std::max(neg, -min_eigenvalue(bv));
    out.primal_residual = std::max(pr, neg);
    VectorXd g = VectorXd::Zero(nvars);
    for (std::size_t j = 0; j < nb; ++j) prob.blocks[j].linear.adjoint_add(out.dual_blocks[j], g);
    VectorXd dr = prob.cost - g;
    if (!identity_basis) dr = nmat.transpose() * dr;
    out.dual_residual = dr.size() ? dr.lpNorm<Eigen::Infinity>() : 0.0;
    out.gap = std::abs(out.primal_objective - out.dual_objective) /
              (1.0 + std::abs(out.primal_objective) + std::abs(out.dual_objective));
  }
  out.status = status;
  if (out.message.empty()) out.message = message.empty() ? to_string(status) : message;
  return finish(out);
}

}  // namespace posmap

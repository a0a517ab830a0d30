#include <random>

#include <gtest/gtest.h>

#include "posmap/separability.hpp"

using namespace posmap;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd randn(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

VectorXd in_K(std::mt19937_64& rng, int n) {
  VectorXd v = randn(rng, n).normalized();
  return v.sum() < 0 ? VectorXd(-v) : v;
}

KroneckerMatrix not_separable_2x2() {
  MatrixXd a(4, 4);
  a << 0.4691, 0.1203, -0.1203, 0.4691, 0.1203, 0.0309, -0.0309, 0.1203, -0.1203, -0.0309,
      0.0309, -0.1203, 0.4691, 0.1203, -0.1203, 0.4691;
  return kronecker_from_upper_entries(2, 2, a);
}

// (u, v) equal to (a, b) up to scalings with |tau1 tau2| = 1
bool same_atom(const VectorXd& u, const VectorXd& v, double c, const SeparableAtom& t, double tol) {
  const VectorXd a = std::pow(c, 0.25) * u, b = std::pow(c, 0.25) * v;
  const double t1 = a.dot(t.a) / a.squaredNorm(), t2 = b.dot(t.b) / b.squaredNorm();
  return (t1 * a - t.a).norm() < tol && (t2 * b - t.b).norm() < tol &&
         std::abs(std::abs(t1 * t2) - 1.0) < tol;
}

}  // namespace

TEST(Separability, RandomObjective) {
  const SosObjective r = random_sos_objective(2, 3, 5);
  EXPECT_EQ(r.gram.rows(), 56);
  EXPECT_NEAR(r.gram.norm(), 1.0, 1e-12);
  const SosObjective again = random_sos_objective(2, 3, 5);
  EXPECT_EQ(r.gram, again.gram);
  EXPECT_NE(r.gram, random_sos_objective(2, 3, 6).gram);
  std::mt19937_64 rng(41);
  for (int s = 0; s < 50; ++s) EXPECT_GE(r.evaluate(randn(rng, 5)), 0.0);
}

TEST(Separability, RelaxationOfPlantedAtomIsFeasible) {
  std::mt19937_64 rng(42);
  const VectorXd u = in_K(rng, 2), v = in_K(rng, 2);
  const KroneckerMatrix a = kron_rank1(u, v);
  EXPECT_EQ(project_to_E(a).size(), 9);
  const Relaxation rel = build_relaxation(a, random_sos_objective(2, 2, 0), 3);
  AtomicMeasure mu;
  mu.atoms.push_back({1.0, u, v});
  const Tms w = tms_from_atoms(mu, 2, 2, 6);
  for (const auto& row : rel.sdp.equalities) EXPECT_NEAR(row.apply(w.values), row.rhs, 1e-10);
  for (const auto& blk : rel.sdp.blocks) EXPECT_GE(min_eigenvalue(blk.evaluate(w.values)), -1e-10);
  EXPECT_THROW(build_relaxation(a, random_sos_objective(2, 2, 0), 2), OrderError);
}

TEST(Separability, VerifyDecomposition) {
  std::mt19937_64 rng(43);
  std::vector<SeparableAtom> atoms;
  for (int s = 0; s < 3; ++s) atoms.push_back({randn(rng, 3), randn(rng, 2), 1.0});
  const KroneckerMatrix a(3, 2, decomposition_sum(3, 2, atoms));
  EXPECT_LT(verify_decomposition(a, atoms), 1e-12);
  atoms.pop_back();
  EXPECT_GT(verify_decomposition(a, atoms), 1e-3);
}

TEST(Separability, NotSeparable2x2) {
  const SeparabilityReport r = check_separability(not_separable_2x2());
  EXPECT_EQ(r.status, SeparabilityStatus::kNotSeparable);
  EXPECT_EQ(r.order_used, 3);
  ASSERT_TRUE(r.infeasibility_ray.has_value());
  ASSERT_TRUE(r.ray_check.has_value());
  EXPECT_TRUE(r.ray_check->passes);
  EXPECT_GE(r.ray_check->min_eig, -1e-7);
  EXPECT_LT(r.ray_check->value, 0.0);
  EXPECT_TRUE(r.atoms.empty());
}

TEST(Separability, PlantedOneAtom) {
  std::mt19937_64 rng(44);
  for (int inst = 0; inst < 3; ++inst) {
    const VectorXd u = in_K(rng, 2), v = in_K(rng, 3);
    const SeparabilityReport r = check_separability(kron_rank1(u, v));
    ASSERT_EQ(r.status, SeparabilityStatus::kSeparable);
    ASSERT_EQ(r.atoms.size(), 1u);
    EXPECT_LE(r.reconstruction_residual, 1e-6);
    EXPECT_TRUE(same_atom(u, v, 1.0, r.atoms[0], 1e-4));
    EXPECT_GE(r.atoms[0].a.sum(), 0.0);
    EXPECT_GE(r.atoms[0].b.sum(), 0.0);
  }
}

TEST(Separability, PlantedThreeAtomsAndScaling) {
  std::mt19937_64 rng(45);
  const int p = 3, q = 3;
  std::vector<VectorXd> us, vs;
  MatrixXd sum = MatrixXd::Zero(p * q, p * q);
  for (int s = 0; s < 3; ++s) {
    us.push_back(in_K(rng, p));
    vs.push_back(in_K(rng, q));
    sum += kron_rank1(us.back(), vs.back()).matrix();
  }
  const SeparabilityReport r = check_separability(KroneckerMatrix(p, q, sum));
  ASSERT_EQ(r.status, SeparabilityStatus::kSeparable);
  EXPECT_LE(r.reconstruction_residual, 1e-6);
  ASSERT_EQ(r.atoms.size(), 3u);
  for (int s = 0; s < 3; ++s) {
    bool found = false;
    for (const auto& t : r.atoms) found = found || same_atom(us[s], vs[s], 1.0, t, 1e-4);
    EXPECT_TRUE(found) << "atom " << s;
  }
  const double alpha = 5.0;
  const SeparabilityReport rs = check_separability(KroneckerMatrix(p, q, alpha * sum));
  ASSERT_EQ(rs.status, SeparabilityStatus::kSeparable);
  ASSERT_EQ(rs.atoms.size(), 3u);
  for (const auto& t : rs.atoms) {
    bool found = false;
    for (const auto& o : r.atoms)
      found = found || std::abs(t.weight - alpha * o.weight) < 1e-4 * alpha;
    EXPECT_TRUE(found);
  }
}

TEST(Separability, PsdKroneckerProduct) {
  // B (x) I with B PSD; the atoms are not unique
  MatrixXd b(2, 2);
  b << 2.0, 1.0, 1.0, 1.0;
  const KroneckerMatrix a(2, 2, kronecker(b, MatrixXd::Identity(2, 2)));
  const SeparabilityReport r = check_separability(a);
  ASSERT_EQ(r.status, SeparabilityStatus::kSeparable);
  EXPECT_LE(r.reconstruction_residual, 1e-6);
  EXPECT_LE(verify_decomposition(a, r.atoms), 1e-6);
}

TEST(Separability, OrderCap) {
  SeparabilityOptions o;
  o.k_max = 2;
  EXPECT_THROW(check_separability(not_separable_2x2(), o), OrderError);
}

TEST(Separability, FitWeightsRejectsNegative) {
  // A = atom1 - atom2 cannot be fitted with nonnegative weights
  const VectorXd u1 = VectorXd::Unit(2, 0), u2 = VectorXd::Unit(2, 1);
  const MatrixXd m = kron_rank1(u1, u1).matrix() - kron_rank1(u2, u2).matrix();
  const KroneckerMatrix a(2, 2, m);
  std::vector<VectorXd> pts = {(VectorXd(4) << u1, u1).finished(), (VectorXd(4) << u2, u2).finished()};
  EXPECT_THROW(fit_decomposition_weights(a, pts), ExtractionFailed);
}

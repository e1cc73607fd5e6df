#include <gtest/gtest.h>

#include "sasaki/basic_chern.hpp"
#include "sasaki/ma_solver.hpp"
#include "support.hpp"

using namespace sasaki;
using testing_support::pi;

namespace {

TransverseMetric deformed(const ChartModel& c, const FourierPotential& pot) {
  return metric_from_potential(pot.sample(c), HermitianMatrixField::identity(c));
}

BasicForm11 uniform_form(const ChartModel& c, const CMatrix& m) { return {HermitianMatrixField::uniform(c, m), 0.0}; }

}  // namespace

TEST(Chern1, FlatIsZero) {
  const auto c = ChartModel::make(2, 8);
  EXPECT_EQ(sup_norm(chern1_form(flat_metric(c)).components.raw()), 0.0);
}

TEST(Chern1, TorusIntegralVanishes) {
  const auto c = ChartModel::make(1, 32);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto g = deformed(c, testing_support::random_kahler_potential(1, seed));
    EXPECT_LE(std::abs(integrate_against_omega(chern1_form(g).components, flat_metric(c))), 1e-6);
  }
}

TEST(Chern1, DeformationInvariance) {
  const auto c = ChartModel::make(2, 12);
  const auto a = chern1_form(deformed(c, testing_support::random_kahler_potential(2, 4)));
  const auto b = chern1_form(deformed(c, testing_support::random_kahler_potential(2, 5)));
  const auto diff = a.components - b.components;
  EXPECT_GT(sup_norm(diff.raw()), 1e-4);
  EXPECT_LE(std::abs(integrate_against_omega(diff, flat_metric(c))), 1e-6);
}

TEST(Positivity, Basics) {
  const auto c = ChartModel::make(2, 8);
  const auto g = flat_metric(c);
  EXPECT_TRUE(is_transverse_positive(deta_form(g), true).ok);
  const auto z = is_transverse_positive(uniform_form(c, CMatrix::Zero(2, 2)), false);
  EXPECT_TRUE(z.ok);
  EXPECT_FALSE(is_transverse_positive(uniform_form(c, CMatrix::Zero(2, 2)), true).ok);
  auto neg = deta_form(g);
  neg.components *= -2.0;  // d eta - 3 d eta
  const auto r = is_transverse_positive(neg, false);
  EXPECT_FALSE(r.ok);
  EXPECT_NEAR(r.min_eigenvalue, -4.0, 1e-14);
  EXPECT_LT(r.worst_point, c.points());
}

TEST(Nef, WitnessChecks) {
  const auto c = ChartModel::make(1, 16);
  const auto g = flat_metric(c);
  const RealField u(c, 0.0);
  EXPECT_TRUE(nef_witness_check(uniform_form(c, CMatrix::Zero(1, 1)), 0.1, u, g).ok);
  auto half = deta_form(g);
  half.components *= -0.5;
  EXPECT_TRUE(nef_witness_check(half, 1.0, u, g).ok);
  EXPECT_FALSE(nef_witness_check(half, 0.25, u, g).ok);
  EXPECT_THROW(nef_witness_check(half, 0.0, u, g), DomainError);
}

TEST(Nef, FlatPathStateWitness) {
  const auto c = ChartModel::make(1, 16);
  const auto g = flat_metric(c);
  const auto path = continuity_path(g, BackgroundSource::synthetic(g, {}), {1.0, 0.5, 0.25, 0.125});
  const auto& st = path.states.back();
  const auto sigma_metric = TransverseMetric::from_components(st.sigma);
  auto theta = chern1_form(sigma_metric);
  theta.components *= -1.0;
  for (double eps : {1.0, 0.125, 1e-3}) EXPECT_TRUE(nef_witness_check(theta, eps, st.u, g).ok);
}

TEST(TraceWrt, Identities) {
  const auto c = ChartModel::make(2, 8);
  const auto g = deformed(c, testing_support::random_kahler_potential(2, 6));
  const auto s = deta_form(g);
  const auto r = trace_wrt(s, s);
  for (double v : r.trace.values()) ASSERT_NEAR(v, 2.0, 1e-12);
  const auto f = deta_form(flat_metric(c));
  const auto rf = trace_wrt(f, f);
  for (double v : rf.trace.values()) ASSERT_NEAR(v, 2.0, 1e-15);
}

TEST(TraceWrt, WedgeQuotientAgreement) {
  Rng rng(8);
  const auto c = ChartModel::make(2, 8);
  HermitianMatrixField sigma(c), beta(c);
  for (std::size_t p = 0; p < c.points(); ++p) {
    sigma.set(p, random_positive_matrix(2, rng));
    CMatrix b(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) b(i, j) = rng.complex_normal();
    beta.set(p, hermitian_part(b));
  }
  const auto r = trace_wrt(BasicForm11{sigma, 0.0}, BasicForm11{beta, 0.0});
  EXPECT_LE(r.wedge_residual, 1e-10);
}

TEST(Ddbar, EqualFormsGiveZero) {
  const auto c = ChartModel::make(1, 16);
  const auto th = chern1_form(deformed(c, testing_support::random_kahler_potential(1, 1)));
  const auto r = ddbar_potential(th, th);
  EXPECT_LE(sup_norm(r.phi.values()), 1e-14);
  EXPECT_TRUE(r.cohomologous);
}

TEST(Ddbar, RecoversCosine) {
  for (int n : {1, 2}) {
    const auto c = ChartModel::make(n, 16);
    const auto phi = sample(c, [](const auto& x) { return std::cos(2 * pi * x[0]); });
    const BasicForm11 th = deta_form(flat_metric(c));
    BasicForm11 thp = th;
    thp.components -= complex_hessian(phi);
    const auto r = ddbar_potential(th, thp);
    EXPECT_TRUE(r.cohomologous);
    EXPECT_LE(r.residual, 1e-8);
    EXPECT_LE(testing_support::max_abs_diff(r.phi.values(), phi.values()), 1e-8);
  }
}

TEST(Ddbar, HarmonicOffsetIsNotExact) {
  const auto c = ChartModel::make(2, 8);
  const auto th = deta_form(flat_metric(c));
  BasicForm11 thp = th;
  CMatrix d = CMatrix::Zero(2, 2);
  d(0, 0) = 0.3;
  d(1, 1) = -0.3;
  thp.components += HermitianMatrixField::uniform(c, d);
  const auto r = ddbar_potential(th, thp);
  EXPECT_FALSE(r.cohomologous);
  EXPECT_GT(r.residual, 0.1);
}

TEST(Ddbar, MeanTraceMismatch) {
  const auto c = ChartModel::make(1, 8);
  const auto th = deta_form(flat_metric(c));
  auto thp = th;
  thp.components *= 2.0;
  EXPECT_THROW(ddbar_potential(th, thp), NotCohomologousError);
}

TEST(MiyaokaYau, NeedsTwoDimensions) {
  EXPECT_THROW(my_integral(HermitianMatrixField::identity(ChartModel::make(1, 8))), DomainError);
}

TEST(MiyaokaYau, FlatIntegralVanishes) {
  const auto c = ChartModel::make(2, 8);
  const auto r = my_integral(deta_form(flat_metric(c)).components);
  EXPECT_NEAR(r.total, 0.0, 1e-10);
  EXPECT_LE(r.max_identity_residual, 1e-12);
}

TEST(MiyaokaYau, FlatFamilyClosedForm) {
  // sigma = 2t g with R = 0: scalar and rho+sigma terms are both
  // (n+2) n / (n+1) = 8/3 against sigma^2/2 = 2 t^2
  const auto c = ChartModel::make(2, 8);
  for (double t : {1.0, 0.25, 0x1p-6}) {
    const auto r = my_integral(HermitianMatrixField::identity(c, 2 * t));
    EXPECT_NEAR(r.total, 0.0, 1e-10);
    EXPECT_NEAR(r.scalar_term, 16.0 / 3.0 * t * t, 1e-12);
    EXPECT_NEAR(r.rho_sigma_term, 16.0 / 3.0 * t * t, 1e-12);
    EXPECT_NEAR(r.q_term, 0.0, 1e-14);
  }
}

TEST(MiyaokaYau, GridStateIdentity) {
  const auto c = ChartModel::make(2, 8);
  const auto g = flat_metric(c);
  SyntheticSpec spec;
  spec.c = -0.3;
  spec.psi = testing_support::random_potential(2, 14, 0.005);
  const auto path = continuity_path(g, BackgroundSource::synthetic(g, spec), {1.0, 0.5, 0.25});
  ASSERT_TRUE(path.completed);
  const auto r = my_integral(path.states.back().sigma);
  EXPECT_LE(r.max_identity_residual, 1e-8);
  EXPECT_NEAR(r.total, r.q_term + r.scalar_term - r.rho_sigma_term, 1e-8 * (1 + std::abs(r.total)));
}

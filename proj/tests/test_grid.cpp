#include <gtest/gtest.h>

#include "sasaki/grid.hpp"
#include "sasaki/small_matrix.hpp"
#include "support.hpp"

using namespace sasaki;
using testing_support::max_abs_diff;
using testing_support::pi;

TEST(ChartModel, RejectsBadSizes) {
  EXPECT_THROW(ChartModel::make(1, 7), DomainError);
  EXPECT_THROW(ChartModel::make(1, 6), DomainError);
  EXPECT_THROW(ChartModel::make(0, 16), DomainError);
  EXPECT_THROW(ChartModel::make(4, 16), DomainError);
  EXPECT_EQ(ChartModel::make(2, 8).points(), 4096u);
}

TEST(ChartModel, RowMajorLayout) {
  const auto c = ChartModel::make(2, 8);
  EXPECT_EQ(c.stride(3), 1u);
  EXPECT_EQ(c.stride(0), 512u);
  EXPECT_EQ(c.index_along(513, 0), 1);
  EXPECT_EQ(c.index_along(513, 3), 1);
  EXPECT_DOUBLE_EQ(c.coordinate(513, 0), 0.125);
}

namespace {

// fd4 symbol over exact symbol for e^{2 pi i x}: (8 sin kh - sin 2kh) / (6 kh)
double fd4_symbol_ratio(double h) {
  const double kh = 2 * pi * h;
  return (8 * std::sin(kh) - std::sin(2 * kh)) / (6 * kh);
}

// |1 - ratio^2| pi^2 for a unit-frequency product, i.e. about pi^2 (kh)^4 / 15
double fd4_square_error_bound(double h) {
  const double r = fd4_symbol_ratio(h);
  return 1.01 * pi * pi * (1 - r * r);
}

}  // namespace

TEST(Wirtinger, ConstantHasZeroDerivative) {
  const auto c = ChartModel::make(2, 16);
  const RealField f(c, 3.25);
  for (int i = 0; i < 2; ++i)
    for (bool conj : {false, true}) {
      const auto d = wirtinger_derivative(f, i, conj);
      for (std::size_t p = 0; p < d.size(); ++p) ASSERT_EQ(d[p], cplx(0.0));
    }
}

TEST(Wirtinger, SineDerivativeConvergesAtFourthOrder) {
  std::vector<int> Ns{16, 32, 64, 128};
  std::vector<double> errs;
  for (int N : Ns) {
    const auto c = ChartModel::make(1, N);
    const auto f = sample(c, [](const auto& x) { return std::sin(2 * pi * x[0]); });
    const auto d = wirtinger_derivative(f, 0, false);
    double e = 0.0;
    for (std::size_t p = 0; p < d.size(); ++p)
      e = std::max(e, std::abs(d[p] - cplx(pi * std::cos(2 * pi * c.coordinate(p, 0)), 0.0)));
    errs.push_back(e);
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < Ns.size(); ++k) {
    const double lx = std::log(Ns[k]), ly = std::log(errs[k]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
  }
  const double m = Ns.size();
  const double slope = -(m * sxy - sx * sy) / (m * sxx - sx * sx);
  EXPECT_GE(slope, 3.7);
  EXPECT_LE(slope, 4.3);
}

TEST(Wirtinger, SpectralSchemeIsExactOnTrigPolynomials) {
  const auto c = ChartModel::make(1, 16, DerivativeScheme::spectral);
  const auto f = sample(c, [](const auto& x) { return std::sin(2 * pi * x[0]) + 0.5 * std::cos(6 * pi * x[1]); });
  const auto d = wirtinger_derivative(f, 0, true);
  for (std::size_t p = 0; p < d.size(); ++p) {
    const double x = c.coordinate(p, 0), y = c.coordinate(p, 1);
    const cplx want(pi * std::cos(2 * pi * x), -0.5 * 0.5 * 6 * pi * std::sin(6 * pi * y));
    ASSERT_LT(std::abs(d[p] - want), 1e-11);
  }
}

TEST(Wirtinger, DbarAfterDGivesQuarterLaplacian) {
  const auto c = ChartModel::make(1, 64);
  const auto f = sample(c, [](const auto& x) { return std::cos(2 * pi * x[0]); });
  const auto d = wirtinger_derivative(f, 0, false);
  const auto dd = wirtinger_derivative(d, 0, true);
  const double r = fd4_symbol_ratio(1.0 / 64);
  double e = 0.0, ed = 0.0;
  for (std::size_t p = 0; p < dd.size(); ++p) {
    const double cs = std::cos(2 * pi * c.coordinate(p, 0));
    e = std::max(e, std::abs(dd[p] + pi * pi * cs));
    ed = std::max(ed, std::abs(dd[p] + r * r * pi * pi * cs));
  }
  EXPECT_LT(ed, 1e-12);
  EXPECT_LT(e, fd4_square_error_bound(1.0 / 64));
}

TEST(ComplexHessian, ZeroField) {
  const auto c = ChartModel::make(2, 8);
  const auto h = complex_hessian(RealField(c, 0.0));
  EXPECT_EQ(sup_norm(h.raw()), 0.0);
}

TEST(ComplexHessian, CosineOneDimensional) {
  for (auto scheme : {DerivativeScheme::fd4, DerivativeScheme::spectral}) {
    const auto c = ChartModel::make(1, 64, scheme);
    const auto f = sample(c, [](const auto& x) { return std::cos(2 * pi * x[0]); });
    const auto h = complex_hessian(f);
    const double r = scheme == DerivativeScheme::fd4 ? fd4_symbol_ratio(1.0 / 64) : 1.0;
    double e = 0.0, ed = 0.0;
    for (std::size_t p = 0; p < c.points(); ++p) {
      const double cs = std::cos(2 * pi * c.coordinate(p, 0));
      e = std::max(e, std::abs(h.diag(0)[p] + pi * pi * cs));
      ed = std::max(ed, std::abs(h.diag(0)[p] + r * r * pi * pi * cs));
    }
    EXPECT_LT(ed, scheme == DerivativeScheme::fd4 ? 1e-12 : 1e-10);
    EXPECT_LT(e, scheme == DerivativeScheme::fd4 ? fd4_square_error_bound(1.0 / 64) : 1e-10);
  }
}

TEST(ComplexHessian, MixedEntryMatchesAnalyticOracle) {
  // f = cos(2 pi x1) cos(2 pi y2): d_1 d_2bar f = sqrt(-1) pi^2 sin(2 pi x1) sin(2 pi y2)
  const auto c = ChartModel::make(2, 16, DerivativeScheme::spectral);
  const auto f = sample(c, [](const auto& x) { return std::cos(2 * pi * x[0]) * std::cos(2 * pi * x[3]); });
  const auto h = complex_hessian(f);
  double e = 0.0;
  for (std::size_t p = 0; p < c.points(); ++p) {
    const cplx want(0.0, pi * pi * std::sin(2 * pi * c.coordinate(p, 0)) * std::sin(2 * pi * c.coordinate(p, 3)));
    e = std::max(e, std::abs(h.entry(0, 1, p) - want));
    e = std::max(e, std::abs(h.entry(1, 0, p) - std::conj(want)));
  }
  EXPECT_LT(e, 1e-10);

  const auto cf = ChartModel::make(2, 32);
  const auto ff = sample(cf, [](const auto& x) { return std::cos(2 * pi * x[0]) * std::cos(2 * pi * x[3]); });
  const auto hf = complex_hessian(ff);
  const double r = fd4_symbol_ratio(1.0 / 32);
  double ef = 0.0, ed = 0.0;
  for (std::size_t p = 0; p < cf.points(); ++p) {
    const cplx want(0.0, pi * pi * std::sin(2 * pi * cf.coordinate(p, 0)) * std::sin(2 * pi * cf.coordinate(p, 3)));
    ef = std::max(ef, std::abs(hf.entry(0, 1, p) - want));
    ed = std::max(ed, std::abs(hf.entry(0, 1, p) - r * r * want));
  }
  EXPECT_LT(ed, 1e-12);
  EXPECT_LT(ef, fd4_square_error_bound(1.0 / 32));
}

TEST(ComplexHessian, MatchesFourierOracleOnRandomPotentials) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto c = ChartModel::make(2, 12, DerivativeScheme::spectral);
    const auto pot = testing_support::random_potential(2, seed, 0.1);
    const auto h = complex_hessian(pot.sample(c));
    const auto want = pot.sample_hessian(c);
    EXPECT_LT(max_abs_diff(h.raw(), want.raw()), 1e-11) << "seed " << seed;
  }
}

TEST(ComplexHessian, HermitianAtEveryPoint) {
  const auto c = ChartModel::make(2, 8);
  const auto h = complex_hessian(testing_support::random_potential(2, 9, 0.1).sample(c));
  for (std::size_t p = 0; p < c.points(); ++p) {
    const CMatrix m = h.at(p);
    ASSERT_LT((m - m.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(WirtingerHessian, AgreesWithRealHessian) {
  const auto c = ChartModel::make(2, 8);
  const auto f = testing_support::random_potential(2, 4, 0.1).sample(c);
  const auto h = complex_hessian(f);
  const auto w = wirtinger_hessian(ComplexField(c, std::vector<cplx>(f.values().begin(), f.values().end())));
  double e = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (std::size_t p = 0; p < c.points(); ++p) e = std::max(e, std::abs(w[i * 2 + j][p] - h.entry(i, j, p)));
  EXPECT_LT(e, 1e-12);
}

TEST(Integrate, ConstantOneGivesUnitVolume) {
  const auto c = ChartModel::make(1, 32);
  EXPECT_NEAR(integrate_density(RealField(c, 1.0)), 1.0, 1e-15);
}

TEST(Integrate, MeanZeroOscillation) {
  const auto c = ChartModel::make(1, 32);
  EXPECT_NEAR(integrate_density(sample(c, [](const auto& x) { return std::sin(2 * pi * x[0]); })), 0.0, 1e-15);
}

TEST(Integrate, ExactOnTrigPolynomial) {
  const auto c = ChartModel::make(1, 32);
  const auto f = sample(c, [](const auto& x) { return 1.0 + 0.5 * std::cos(4 * pi * x[0]); });
  EXPECT_NEAR(integrate_density(f), 1.0, 1e-15);
}

TEST(Integrate, ReebLengthAndPeriodsScale) {
  auto c = ChartModel::make(1, 16);
  c.reeb_length = 3.0;
  c.periods = {2.0, 0.5};
  EXPECT_NEAR(integrate_density(RealField(c, 1.0)), 3.0, 1e-14);
}

TEST(Integrate, ByPartsIsExact) {
  const auto c = ChartModel::make(1, 64);
  const auto f = sample(c, [](const auto& x) { return std::exp(std::sin(2 * pi * x[0])) * std::cos(2 * pi * x[1]); });
  const auto g = sample(c, [](const auto& x) { return std::cos(2 * pi * (x[0] + 2 * x[1])) + 0.3; });
  const auto df = wirtinger_derivative(f, 0, false);
  const auto dg = wirtinger_derivative(g, 0, false);
  RealField re(c), im(c);
  for (std::size_t p = 0; p < c.points(); ++p) {
    const cplx v = df[p] * g[p] + f[p] * dg[p];
    re[p] = v.real();
    im[p] = v.imag();
  }
  EXPECT_LE(std::abs(integrate_density(re)), 1e-10);
  EXPECT_LE(std::abs(integrate_density(im)), 1e-10);
}

TEST(BasicLaplacian, ConstantIsZero) {
  const auto c = ChartModel::make(2, 8);
  const auto out = basic_laplacian(RealField(c, -4.0), HermitianMatrixField::identity(c));
  EXPECT_EQ(sup_norm(out.values()), 0.0);
}

TEST(BasicLaplacian, FlatCosine) {
  const auto c = ChartModel::make(1, 32, DerivativeScheme::spectral);
  const auto u = sample(c, [](const auto& x) { return std::cos(2 * pi * x[0]); });
  const auto out = basic_laplacian(u, HermitianMatrixField::identity(c));
  for (std::size_t p = 0; p < c.points(); ++p)
    ASSERT_NEAR(out[p], -2 * pi * pi * std::cos(2 * pi * c.coordinate(p, 0)), 1e-10);
}

TEST(BasicLaplacian, MatchesFormQuotient) {
  // 4n ddbar u ^ (d eta)^{n-1} / (d eta)^n by mixed discriminants, d eta = 2 g
  Rng rng(11);
  for (int n : {1, 2, 3}) {
    for (int trial = 0; trial < 10; ++trial) {
      CMatrix a(n, n), b(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          a(i, j) = rng.complex_normal();
          b(i, j) = rng.complex_normal();
        }
      const CMatrix g = a * a.adjoint() + CMatrix::Identity(n, n);
      const CMatrix H = hermitian_part(b);
      std::vector<CMatrix> mixed(n, 2.0 * g);
      mixed[0] = H;
      const double quotient = 4.0 * n * (mixed_discriminant(mixed) / mixed_discriminant(std::vector<CMatrix>(n, 2.0 * g))).real();
      const double direct = 2.0 * (g.inverse() * H).trace().real();
      EXPECT_NEAR(quotient, direct, 1e-10 * (1 + std::abs(direct)));
    }
  }
}

TEST(BasicLaplacian, IntegratesToZero) {
  const auto c = ChartModel::make(1, 32, DerivativeScheme::spectral);
  const auto phi = testing_support::random_kahler_potential(1, 5).sample(c);
  HermitianMatrixField g = HermitianMatrixField::identity(c);
  g += complex_hessian(phi);
  const auto inv = invert_positive(g, "test metric");
  const auto u = testing_support::random_potential(1, 6, 1.0).sample(c);
  const auto lap = basic_laplacian(u, g);
  RealField dens(c);
  for (std::size_t p = 0; p < c.points(); ++p) dens[p] = lap[p] * std::exp(inv.logdet[p]);
  EXPECT_LE(std::abs(integrate_density(dens)), 1e-10);
}

TEST(ShiftInvariance, OperationsCommuteWithTranslation) {
  const auto c = ChartModel::make(2, 8);
  const auto f = testing_support::random_potential(2, 21, 0.1).sample(c);
  const auto g = HermitianMatrixField::identity(c);
  for (int axis = 0; axis < 4; ++axis) {
    const auto sf = shift_field(f, axis, 1);
    const auto h = complex_hessian(f), hs = complex_hessian(sf);
    for (int comp = 0; comp < h.components(); ++comp)
      ASSERT_TRUE(shift_field(testing_support::component_field(h, comp), axis, 1) ==
                  testing_support::component_field(hs, comp));
    ASSERT_TRUE(shift_field(partial_derivative(f, axis), axis, 1) == partial_derivative(sf, axis));
    ASSERT_TRUE(shift_field(basic_laplacian(f, g), axis, 1) == basic_laplacian(sf, g));
    ASSERT_EQ(integrate_density(sf), integrate_density(f));
  }
}

TEST(ExactSum, OrderIndependent) {
  std::vector<double> v{1e20, 1.0, -1e20, 3.5, 1e-30};
  std::vector<double> w{3.5, -1e20, 1e-30, 1.0, 1e20};
  EXPECT_EQ(exact_sum(v), exact_sum(w));
  EXPECT_EQ(exact_sum(v), 4.5);
}

TEST(FieldJson, RoundTrip) {
  const auto c = ChartModel::make(1, 8);
  const auto f = testing_support::random_potential(1, 3, 1.0).sample(c);
  const auto j = field_to_json(f);
  EXPECT_EQ(j.at("layout"), "row-major-real-axes");
  EXPECT_EQ(j.at("chart").at("N"), 8);
  EXPECT_TRUE(field_from_json(j) == f);
  auto bad = j;
  bad["values"].erase(0);
  EXPECT_THROW(field_from_json(bad), ConfigError);
}

TEST(InvertPositive, ReportsSingularPoint) {
  const auto c = ChartModel::make(1, 8);
  auto g = HermitianMatrixField::identity(c);
  g.diag(0)[5] = -1.0;
  try {
    invert_positive(g, "metric check");
    FAIL() << "expected a singular-metric error";
  } catch (const SingularMetricError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos);
  }
}

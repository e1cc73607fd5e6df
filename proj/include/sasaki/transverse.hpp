#pragma once

// Transverse Kähler metrics on the grid and at single points: connection,
// curvature, Ricci, scalar curvature and holomorphic sectional curvature.
//
// Conventions (see conventions.hpp for the full ledger):
//   g^{i jbar} = (G^{-1})_{ji}
//   R_{i jbar k lbar} = -d_i d_jbar g_{k lbar} + g^{p qbar} d_i g_{k qbar} d_jbar g_{p lbar}
//   Ric_{i jbar} = g^{k lbar} R_{i jbar k lbar} = -d_i d_jbar log det g
//   K(U) = R(U, Ubar, U, Ubar) / g(U, Ubar)^2   (real-convention H = 4 K)

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "sasaki/errors.hpp"
#include "sasaki/grid.hpp"
#include "sasaki/potential.hpp"
#include "sasaki/sampling.hpp"
#include "sasaki/small_matrix.hpp"

namespace sasaki {

struct TransverseMetric {
  HermitianMatrixField g;
  HermitianMatrixField inverse;
  RealField logdet;

  const ChartModel& chart() const { return g.chart(); }
  int dim() const { return g.dim(); }

  static TransverseMetric from_components(HermitianMatrixField g, const char* what = "metric is not positive definite") {
    auto inv = invert_positive(g, what);
    return {std::move(g), std::move(inv.inverse), std::move(inv.logdet)};
  }
};

inline TransverseMetric flat_metric(const ChartModel& chart, double scale = 1.0) {
  return TransverseMetric::from_components(HermitianMatrixField::identity(chart, scale));
}

/// g = base + phi_{i jbar}.
inline TransverseMetric metric_from_potential(const RealField& phi, const HermitianMatrixField& base) {
  require_same_chart(phi.chart(), base.chart());
  auto g = base + complex_hessian(phi);
  return TransverseMetric::from_components(std::move(g), "potential leaves the Kähler cone");
}

/// Complex scalar field of one matrix entry M_{i jbar}.
inline ComplexField entry_field(const HermitianMatrixField& m, int i, int j) {
  ComplexField f(m.chart());
  const int n = m.dim();
  if (i == j) {
    const double* d = m.diag(i);
    for (std::size_t p = 0; p < f.size(); ++p) f[p] = d[p];
    return f;
  }
  const int o = packed_pair_offset(std::min(i, j), std::max(i, j), n);
  const double* re = m.component(o);
  const double* im = m.component(o + 1);
  const double s = i < j ? 1.0 : -1.0;
  for (std::size_t p = 0; p < f.size(); ++p) f[p] = cplx(re[p], s * im[p]);
  return f;
}

/// d[(k * n + i) * n + j] = d_k g_{i jbar}.
inline std::vector<ComplexField> metric_derivatives(const HermitianMatrixField& g) {
  const int n = g.dim();
  std::vector<ComplexField> d(n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto e = entry_field(g, i, j);
      for (int k = 0; k < n; ++k) d[(k * n + i) * n + j] = wirtinger_derivative(e, k, false);
    }
  return d;
}

/// Gamma^i_{jk} = g^{i lbar} d_k g_{j lbar}; unbarred components only.
struct ChristoffelField {
  int n = 0;
  std::vector<ComplexField> gamma;  // gamma[(i * n + j) * n + k]

  cplx at(int i, int j, int k, std::size_t p) const { return gamma[(i * n + j) * n + k][p]; }
};

inline ChristoffelField christoffel(const TransverseMetric& g) {
  const int n = g.dim();
  const auto d = metric_derivatives(g.g);
  ChristoffelField G{n, std::vector<ComplexField>(n * n * n, ComplexField(g.chart()))};
  for (std::size_t p = 0; p < g.chart().points(); ++p) {
    const CMatrix inv = g.inverse.at(p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = j; k < n; ++k) {
          cplx s = 0.0;
          // d_k g_{j lbar} = d_j g_{k lbar} (Kähler), symmetrized explicitly
          for (int l = 0; l < n; ++l)
            s += inv(l, i) * 0.5 * (d[(k * n + j) * n + l][p] + d[(j * n + k) * n + l][p]);
          G.gamma[(i * n + j) * n + k][p] = s;
          G.gamma[(i * n + k) * n + j][p] = s;
        }
  }
  return G;
}

inline std::size_t tensor_index(int n, int i, int j, int k, int l) {
  return static_cast<std::size_t>(((i * n + j) * n + k) * n + l);
}

/// Full curvature at every grid point plus Ricci (log-det formula) and scalar.
struct CurvatureField {
  int n = 0;
  std::size_t points = 0;
  std::vector<cplx> R;  // point-major, n^4 entries per point
  HermitianMatrixField ricci;
  RealField scalar;

  const cplx* at(std::size_t p) const { return R.data() + p * n * n * n * n; }
  cplx entry(std::size_t p, int i, int j, int k, int l) const { return at(p)[tensor_index(n, i, j, k, l)]; }
};

/// Ric_{i jbar} = g^{k lbar} R_{i jbar k lbar} from a single tensor.
inline CMatrix ricci_contraction(const cplx* R, const CMatrix& inv, int n) {
  CMatrix ric = CMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) ric(i, j) += inv(l, k) * R[tensor_index(n, i, j, k, l)];
  return ric;
}

/// -d_i d_jbar log det g, independent of the four-index tensor.
inline HermitianMatrixField ricci(const TransverseMetric& g) {
  auto r = complex_hessian(g.logdet);
  r *= -1.0;
  return r;
}

inline RealField scalar_curvature(const HermitianMatrixField& ric, const TransverseMetric& g) {
  RealField s(g.chart());
  const int n = g.dim();
  for (std::size_t p = 0; p < s.size(); ++p) {
    std::array<double, 9> w{}, r{};
    g.inverse.gather(p, w.data());
    ric.gather(p, r.data());
    s[p] = packed_trace_product(w.data(), r.data(), n);
  }
  return s;
}

inline CurvatureField curvature(const TransverseMetric& g) {
  const int n = g.dim();
  const std::size_t P = g.chart().points();
  const auto d = metric_derivatives(g.g);
  CurvatureField C;
  C.n = n;
  C.points = P;
  C.R.assign(P * n * n * n * n, 0.0);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      const auto dd = wirtinger_hessian(entry_field(g.g, k, l));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const auto& f = dd[i * n + j];
          for (std::size_t p = 0; p < P; ++p) C.R[p * n * n * n * n + tensor_index(n, i, j, k, l)] = -f[p];
        }
    }
  for (std::size_t p = 0; p < P; ++p) {
    const CMatrix inv = g.inverse.at(p);
    cplx* R = C.R.data() + p * n * n * n * n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) {
            cplx s = 0.0;
            for (int a = 0; a < n; ++a)
              for (int b = 0; b < n; ++b)
                s += inv(b, a) * d[(i * n + k) * n + b][p] * std::conj(d[(j * n + l) * n + a][p]);
            R[tensor_index(n, i, j, k, l)] += s;
          }
  }
  C.ricci = ricci(g);
  C.scalar = scalar_curvature(C.ricci, g);
  return C;
}

/// Ricci by contraction of the stored tensor (for cross-checking).
inline HermitianMatrixField ricci_by_trace(const CurvatureField& C, const TransverseMetric& g) {
  HermitianMatrixField out(g.chart());
  for (std::size_t p = 0; p < C.points; ++p) out.set(p, ricci_contraction(C.at(p), g.inverse.at(p), C.n));
  return out;
}

/// Largest violation of the Kähler symmetries relative to the tensor size.
inline double kahler_symmetry_defect(const cplx* R, int n) {
  double worst = 0.0, scale = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          const cplx v = R[tensor_index(n, i, j, k, l)];
          scale = std::max(scale, std::abs(v));
          worst = std::max(worst, std::abs(v - R[tensor_index(n, k, j, i, l)]));
          worst = std::max(worst, std::abs(v - R[tensor_index(n, i, l, k, j)]));
          worst = std::max(worst, std::abs(v - std::conj(R[tensor_index(n, j, i, l, k)])));
        }
  return scale > 0.0 ? worst / scale : worst;
}

// ---------------------------------------------------------------------------
// Holomorphic sectional curvature
// ---------------------------------------------------------------------------

inline double hsc_value(const cplx* R, const CMatrix& g, const CVector& U, int n) {
  const double norm = (U.adjoint() * g.transpose() * U)(0).real();
  if (!(norm > 0.0)) throw DomainError("holomorphic sectional curvature needs a nonzero direction");
  cplx s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const cplx uij = U(i) * std::conj(U(j));
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) s += R[tensor_index(n, i, j, k, l)] * uij * U(k) * std::conj(U(l));
    }
  return s.real() / (norm * norm);
}

inline double hsc(const CurvatureField& C, const TransverseMetric& g, std::size_t point, const CVector& U) {
  if (U.size() != C.n) throw DomainError("direction has the wrong dimension");
  if (U.squaredNorm() == 0.0) throw DomainError("holomorphic sectional curvature needs a nonzero direction");
  return hsc_value(C.at(point), g.g.at(point), U, C.n);
}

struct HscExtrema {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  std::size_t argmin_point = 0;
  std::size_t argmax_point = 0;
  CVector argmin_direction;
  CVector argmax_direction;

  /// -max K when the sampled maximum is negative, else 0.
  double kappa_estimate() const { return max < 0.0 ? -max : 0.0; }
};

/// Directions used for HSC sampling; one direction when n = 1.
inline std::vector<CVector> hsc_directions(int n, std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw DomainError("samples must be >= 1");
  if (n == 1) return {CVector::Ones(1)};
  return sphere_directions(n, samples, seed);
}

inline HscExtrema hsc_extrema(const CurvatureField& C, const TransverseMetric& g, std::size_t samples,
                              std::uint64_t seed) {
  const auto dirs = hsc_directions(C.n, samples, seed);
  HscExtrema e;
  for (std::size_t p = 0; p < C.points; ++p) {
    const CMatrix gp = g.g.at(p);
    for (const auto& U : dirs) {
      const double k = hsc_value(C.at(p), gp, U, C.n);
      if (k < e.min) {
        e.min = k;
        e.argmin_point = p;
        e.argmin_direction = U;
      }
      if (k > e.max) {
        e.max = k;
        e.argmax_point = p;
        e.argmax_direction = U;
      }
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Closedness of (1,1) forms
// ---------------------------------------------------------------------------

/// max |d_k b_{i jbar} - d_i b_{k jbar}| over points and indices.
inline double closedness_residual(const HermitianMatrixField& b) {
  const int n = b.dim();
  if (n == 1) return 0.0;
  std::vector<ComplexField> e;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) e.push_back(entry_field(b, i, j));
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k < n; ++k)
      for (int j = 0; j < n; ++j) {
        const auto a = wirtinger_derivative(e[i * n + j], k, false);
        const auto c = wirtinger_derivative(e[k * n + j], i, false);
        for (std::size_t p = 0; p < a.size(); ++p) worst = std::max(worst, std::abs(a[p] - c[p]));
      }
  return worst;
}

// ---------------------------------------------------------------------------
// Pointwise analytic mode
// ---------------------------------------------------------------------------

struct PointCurvature {
  int n = 0;
  CMatrix g;
  std::vector<cplx> R;
  CMatrix ricci;        // -d d-bar log det g, by finite differences of log det
  CMatrix ricci_trace;  // contraction of R
  double scalar = 0.0;  // tr(g^{-1} ricci)

  double hsc(const CVector& U) const {
    if (U.size() != n || U.squaredNorm() == 0.0) throw DomainError("bad direction for holomorphic sectional curvature");
    return hsc_value(R.data(), g, U, n);
  }
};

inline std::vector<cplx> curvature_from_jet(const MetricJet& J) {
  const int n = J.n;
  const CMatrix inv = J.g.inverse();
  std::vector<cplx> R(n * n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          cplx s = -J.ddg[i * n + j](k, l);
          for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) s += inv(b, a) * J.dg[i](k, b) * std::conj(J.dg[j](l, a));
          R[tensor_index(n, i, j, k, l)] = s;
        }
  return R;
}

/// d_i d_jbar F at z by fourth-order central differences in the real
/// coordinates with step h.
template <class F>
CMatrix ddbar_by_differences(F&& f, const CVector& z, double h) {
  const int n = static_cast<int>(z.size());
  static constexpr int off[4] = {-2, -1, 1, 2};
  static constexpr double w[4] = {1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};
  auto shifted = [&](int a, double da, int b, double db) {
    CVector y = z;
    auto bump = [&](int axis, double d) {
      if (axis % 2 == 0) y(axis / 2) += d;
      else y(axis / 2) += cplx(0.0, d);
    };
    bump(a, da);
    bump(b, db);
    return f(y);
  };
  auto second = [&](int a, int b) {
    double s = 0.0;
    for (int p = 0; p < 4; ++p)
      for (int q = 0; q < 4; ++q) s += w[p] * w[q] * shifted(a, off[p] * h, b, off[q] * h);
    return s / (h * h);
  };
  CMatrix out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double xx = second(2 * i, 2 * j), yy = second(2 * i + 1, 2 * j + 1);
      const double xy = second(2 * i, 2 * j + 1), yx = second(2 * i + 1, 2 * j);
      out(i, j) = 0.25 * cplx(xx + yy, xy - yx);
    }
  return out;
}

inline PointCurvature pointwise_curvature(const RadialPotential& pot, const CVector& z, double step = 2e-3) {
  const MetricJet J = pot.jet(z);
  PointCurvature pc;
  pc.n = J.n;
  pc.g = J.g;
  pc.R = curvature_from_jet(J);
  const CMatrix inv = J.g.inverse();
  pc.ricci_trace = ricci_contraction(pc.R.data(), inv, J.n);
  pc.ricci = -ddbar_by_differences([&](const CVector& y) { return pot.logdet(y); }, z, step);
  pc.scalar = (inv * pc.ricci).trace().real();
  return pc;
}

}  // namespace sasaki

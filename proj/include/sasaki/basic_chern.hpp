#pragma once

// Basic (1,1) forms: first Chern form, positivity and nef certificates,
// traces, d dbar potentials and the Miyaoka-Yau integrand on grid states.

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "sasaki/curvature_algebra.hpp"
#include "sasaki/errors.hpp"
#include "sasaki/grid.hpp"
#include "sasaki/krylov.hpp"
#include "sasaki/small_matrix.hpp"
#include "sasaki/transverse.hpp"

namespace sasaki {

/// sqrt(-1) b_{i jbar} dz^i ^ dzbar^j with its measured closedness defect.
struct BasicForm11 {
  HermitianMatrixField components;
  double closedness = 0.0;

  static BasicForm11 from(HermitianMatrixField c) {
    const double r = closedness_residual(c);
    return {std::move(c), r};
  }

  const ChartModel& chart() const { return components.chart(); }
  int dim() const { return components.dim(); }
};

/// Components of d eta = 2 g.
inline BasicForm11 deta_form(const TransverseMetric& g) {
  HermitianMatrixField c = g.g;
  c *= 2.0;
  return {std::move(c), 0.0};
}

/// rho / 2 pi.
inline BasicForm11 chern1_form(const TransverseMetric& g) {
  auto r = ricci(g);
  r *= 1.0 / (2.0 * std::numbers::pi);
  return BasicForm11::from(std::move(r));
}

/// Density of beta ^ omega^{n-1} / (n-1)! ^ eta, omega = g, against dV:
/// tr_g(beta) det g.
inline RealField wedge_omega_density(const HermitianMatrixField& beta, const TransverseMetric& g) {
  require_same_chart(beta.chart(), g.chart());
  const int n = g.dim();
  RealField d(g.chart());
  for (std::size_t p = 0; p < d.size(); ++p) {
    std::array<double, 9> w{}, b{};
    g.inverse.gather(p, w.data());
    beta.gather(p, b.data());
    d[p] = packed_trace_product(w.data(), b.data(), n) * std::exp(g.logdet[p]);
  }
  return d;
}

/// Integral of beta ^ omega^{n-1} / (n-1)! ^ eta.
inline double integrate_against_omega(const HermitianMatrixField& beta, const TransverseMetric& g) {
  return integrate_density(wedge_omega_density(beta, g));
}

struct PositivityReport {
  bool ok = true;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  std::size_t worst_point = 0;
};

/// Eigenvalue test at every point; strict means positive definite,
/// otherwise semipositive.
inline PositivityReport is_transverse_positive(const BasicForm11& theta, bool strict) {
  PositivityReport r;
  const auto& c = theta.components;
  for (std::size_t p = 0; p < c.points(); ++p) {
    const double e = min_eigenvalue(c.at(p));
    if (e < r.min_eigenvalue) {
      r.min_eigenvalue = e;
      r.worst_point = p;
    }
  }
  r.ok = strict ? r.min_eigenvalue > 0.0 : r.min_eigenvalue >= 0.0;
  return r;
}

/// theta + sqrt(-1) d dbar u + eps d eta semipositive.
inline PositivityReport nef_witness_check(const BasicForm11& theta, double eps, const RealField& u,
                                          const TransverseMetric& g) {
  if (!(eps > 0.0)) throw DomainError("nef witness needs eps > 0");
  require_same_chart(theta.chart(), u.chart());
  HermitianMatrixField c = theta.components;
  std::vector<double> scratch(hessian_scratch_size(u.chart()));
  add_complex_hessian(u.chart(), u.data(), scratch.data(), c);
  HermitianMatrixField e = g.g;
  e *= 2.0 * eps;
  c += e;
  return is_transverse_positive({std::move(c), 0.0}, false);
}

struct TraceResult {
  RealField trace;
  double wedge_residual = 0.0;  // matrix formula against n beta ^ sigma^{n-1} / sigma^n
};

/// sigma^{i jbar} beta_{i jbar}; for n <= 2 the wedge quotient is computed
/// alongside by exact multilinear algebra.
inline TraceResult trace_wrt(const BasicForm11& sigma, const BasicForm11& beta) {
  require_same_chart(sigma.chart(), beta.chart());
  const int n = sigma.dim();
  const auto inv = invert_positive(sigma.components, "trace_wrt: sigma is not strictly positive");
  TraceResult r{RealField(sigma.chart()), 0.0};
  for (std::size_t p = 0; p < r.trace.size(); ++p) {
    std::array<double, 9> w{}, b{};
    inv.inverse.gather(p, w.data());
    beta.components.gather(p, b.data());
    r.trace[p] = packed_trace_product(w.data(), b.data(), n);
    if (n <= 2) {
      const CMatrix s = sigma.components.at(p), bt = beta.components.at(p);
      std::vector<CMatrix> mixed(n, s);
      mixed[0] = bt;
      const double q = n * mixed_discriminant(mixed).real() / mixed_discriminant(std::vector<CMatrix>(n, s)).real();
      r.wedge_residual = std::max(r.wedge_residual, std::abs(q - r.trace[p]));
    }
  }
  return r;
}

struct DdbarResult {
  RealField phi;
  double residual = 0.0;  // sup |theta - theta' - phi_{i jbar}|
  bool cohomologous = false;
  int iterations = 0;
};

/// Solves sum_i phi_{i ibar} - mean(phi) = tr(theta - theta') and checks the
/// full matrix identity theta - theta' = phi_{i jbar}.
inline DdbarResult ddbar_potential(const BasicForm11& theta, const BasicForm11& theta_prime, double tol = 1e-8) {
  require_same_chart(theta.chart(), theta_prime.chart());
  const auto& chart = theta.chart();
  const int n = theta.dim();
  const std::size_t P = chart.points();
  const auto diff = theta.components - theta_prime.components;
  std::vector<double> rhs(P, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* d = diff.diag(i);
    for (std::size_t p = 0; p < P; ++p) rhs[p] += d[p];
  }
  const double mean = exact_sum(rhs) / static_cast<double>(P);
  const double scale = 1.0 + sup_norm(rhs);
  if (std::abs(mean) > 1e-10 * scale)
    throw NotCohomologousError("forms have different mean traces (difference " + std::to_string(mean) + ")");

  const auto I = HermitianMatrixField::identity(chart);
  std::vector<double> scratch(hessian_scratch_size(chart));
  LinearMap A = [&](std::span<const double> in, std::span<double> out) {
    hessian_trace(I, in.data(), scratch.data(), out.data());
    const double m = exact_sum(in) / static_cast<double>(P);
    for (std::size_t p = 0; p < P; ++p) out[p] -= m;
  };
  FourierPreconditioner M(chart, CMatrix::Identity(n, n), 0.0, -1.0);
  DdbarResult r{RealField(chart, 0.0), 0.0, false, 0};
  const auto kr = bicgstab(A, [&](auto in, auto out) { M.apply(in, out); }, rhs, r.phi.values(), 1e-13, 500);
  r.iterations = kr.iterations;
  const double m = exact_sum(r.phi.values()) / static_cast<double>(P);
  for (auto& v : r.phi.values()) v -= m;
  auto H = complex_hessian(r.phi);
  H -= diff;
  r.residual = sup_norm(H.raw());
  r.cohomologous = r.residual <= tol * scale;
  return r;
}

// ---------------------------------------------------------------------------
// Miyaoka-Yau integral
// ---------------------------------------------------------------------------

struct MiyaokaYauReport {
  double total = 0.0;  // (2 pi)^2 int (2 c2 - n/(n+1) c1^2) ^ sigma^{n-2}/(n-2)! ^ eta
  double q_term = 0.0;
  double scalar_term = 0.0;
  double rho_sigma_term = 0.0;
  double max_identity_residual = 0.0;
  double two_pi_squared = 4.0 * std::numbers::pi * std::numbers::pi;

  nlohmann::json to_json() const {
    return {{"total", total},
            {"q_term", q_term},
            {"scalar_term", scalar_term},
            {"rho_sigma_term", rho_sigma_term},
            {"two_pi_squared", two_pi_squared}};
  }
};

/// Curvature terms in the metric sigma, each integrated against
/// sigma^n / n! ^ eta.
inline MiyaokaYauReport my_integral(const HermitianMatrixField& sigma) {
  const int n = sigma.dim();
  if (n < 2) throw DomainError("Miyaoka-Yau integral needs n >= 2");
  const auto metric = TransverseMetric::from_components(sigma, "my_integral: sigma is not positive definite");
  const auto C = curvature(metric);
  const std::size_t P = sigma.points();
  const std::size_t len = static_cast<std::size_t>(n) * n * n * n;
  double fact = 1.0;
  for (int k = 2; k <= n; ++k) fact *= k;
  RealField tot(sigma.chart()), q(sigma.chart()), s(sigma.chart()), rs(sigma.chart());
  MiyaokaYauReport rep;
  for (std::size_t p = 0; p < P; ++p) {
    const Tensor4 R(C.at(p), C.at(p) + len);
    const auto t = miyaoka_yau_terms(R, sigma.at(p));
    const double vol = std::exp(metric.logdet[p]) / fact;
    tot[p] = t.reduction * vol;
    q[p] = t.q_term * vol;
    s[p] = t.scalar_term * vol;
    rs[p] = t.rho_sigma_term * vol;
    rep.max_identity_residual = std::max(rep.max_identity_residual, t.residual / (1.0 + std::abs(t.reduction)));
  }
  rep.total = integrate_density(tot);
  rep.q_term = integrate_density(q);
  rep.scalar_term = integrate_density(s);
  rep.rho_sigma_term = integrate_density(rs);
  return rep;
}

}  // namespace sasaki

#pragma once

// Transverse Monge-Ampère family on the grid:
//
//   log det(chi_t + u_{i jbar}) - log det(2 g) - u = 0,   chi_t = t d eta - rho,
//
// with (d eta)_{i jbar} = 2 g_{i jbar}. Damped Newton with a matrix-free
// BiCGSTAB inner solve, a continuity driver in t, and the estimate suite.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sasaki/errors.hpp"
#include "sasaki/grid.hpp"
#include "sasaki/krylov.hpp"
#include "sasaki/potential.hpp"
#include "sasaki/sampling.hpp"
#include "sasaki/small_matrix.hpp"
#include "sasaki/transverse.hpp"

namespace sasaki {

// ---------------------------------------------------------------------------
// Background forms
// ---------------------------------------------------------------------------

enum class Provenance { ricci, synthetic };

inline std::string to_string(Provenance p) { return p == Provenance::ricci ? "ricci-of-metric" : "synthetic"; }

struct BackgroundForm {
  HermitianMatrixField chi;
  double t = 0.0;
  Provenance provenance = Provenance::synthetic;
};

/// rho-hat = c d eta + sqrt(-1) d dbar psi; "zero" is c = 0, psi = 0.
struct SyntheticSpec {
  double c = 0.0;
  FourierPotential psi;
};

/// The form rho subtracted from t d eta: Ric(g) or a synthetic closed form.
struct BackgroundSource {
  Provenance provenance = Provenance::synthetic;
  HermitianMatrixField rho;

  static BackgroundSource ricci_of(const TransverseMetric& g) { return {Provenance::ricci, ricci(g)}; }

  static BackgroundSource synthetic(const TransverseMetric& g, const SyntheticSpec& spec) {
    BackgroundSource s;
    s.provenance = Provenance::synthetic;
    s.rho = g.g;
    s.rho *= 2.0 * spec.c;
    if (!spec.psi.empty()) s.rho += complex_hessian(spec.psi.sample(g.chart()));
    return s;
  }

  BackgroundForm at(double t, const TransverseMetric& g) const {
    BackgroundForm b{g.g, t, provenance};
    b.chi *= 2.0 * t;
    b.chi -= rho;
    return b;
  }

  /// Largest eigenvalue of (d eta)^{-1} rho over the grid.
  double max_relative_eigenvalue(const TransverseMetric& g) const {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < g.chart().points(); ++p)
      m = std::max(m, generalized_eigenvalues(rho.at(p), 2.0 * g.g.at(p)).maxCoeff());
    return m;
  }
};

// ---------------------------------------------------------------------------
// Residual
// ---------------------------------------------------------------------------

/// F(u) = log det(chi + u_{i jbar}) - u - rhs, with rhs = log det(2 g) plus
/// an optional manufactured source.
struct MongeAmpereProblem {
  HermitianMatrixField chi;
  RealField rhs;

  const ChartModel& chart() const { return chi.chart(); }
};

inline RealField log_det_two_g(const TransverseMetric& g) {
  RealField r = g.logdet;
  const double shift = g.dim() * std::log(2.0);
  for (auto& v : r.values()) v += shift;
  return r;
}

inline MongeAmpereProblem make_problem(const BackgroundForm& chi, const TransverseMetric& g) {
  require_same_chart(chi.chi.chart(), g.chart());
  return {chi.chi, log_det_two_g(g)};
}

struct Evaluation {
  bool positive = true;
  std::size_t worst_point = 0;
  double worst_eigenvalue = 0.0;
  double residual_sup = 0.0;
};

/// W := (chi + H(u))^{-1} and F := F(u). On positivity loss W and F are
/// partially written and the first failing point is reported.
inline Evaluation evaluate_ma(const MongeAmpereProblem& prob, const RealField& u, HermitianMatrixField& W,
                              RealField& F, double* scratch) {
  const int n = prob.chi.dim();
  std::copy(prob.chi.raw().begin(), prob.chi.raw().end(), W.raw().begin());
  add_complex_hessian(prob.chart(), u.data(), scratch, W);
  Evaluation ev;
  const std::size_t P = u.size();
  double worst = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    std::array<double, 9> a{}, inv{};
    W.gather(p, a.data());
    const auto f = factor_packed(a.data(), n, inv.data());
    if (!f.positive) {
      const double e = min_eigenvalue(unpack_hermitian(a.data(), n));
      if (ev.positive || e < ev.worst_eigenvalue) {
        ev.worst_point = p;
        ev.worst_eigenvalue = e;
      }
      ev.positive = false;
      continue;
    }
    W.scatter(p, inv.data());
    F[p] = f.logdet - u[p] - prob.rhs[p];
    worst = std::max(worst, std::abs(F[p]));
  }
  ev.residual_sup = ev.positive ? worst : std::numeric_limits<double>::infinity();
  return ev;
}

inline RealField ma_residual(const RealField& u, const BackgroundForm& chi, const TransverseMetric& g) {
  const auto prob = make_problem(chi, g);
  HermitianMatrixField W(u.chart());
  RealField F(u.chart());
  std::vector<double> scratch(hessian_scratch_size(u.chart()));
  const auto ev = evaluate_ma(prob, u, W, F, scratch.data());
  if (!ev.positive) throw ConeExitError("iterate left the solution cone", ev.worst_point, ev.worst_eigenvalue);
  return F;
}

// ---------------------------------------------------------------------------
// Newton
// ---------------------------------------------------------------------------

struct NewtonOptions {
  double tol = 1e-9;
  int max_iters = 50;
  double linear_rtol = 1e-10;
  int linear_max_iters = 2000;
  PreconditionerKind preconditioner = PreconditionerKind::fourier;
  double min_step = 0x1.0p-20;
};

struct NewtonResult {
  RealField u;
  HermitianMatrixField inverse;  // sigma^{-1} at the solution
  double residual_sup = 0.0;
  int iterations = 0;
  int linear_iterations = 0;
  std::vector<double> history;  // residual sup-norm after each accepted iterate
  std::vector<double> steps;    // accepted damping factors
  bool linear_all_converged = true;

  /// log(r_k / r_{k-1}) / log(r_{k-1} / r_{k-2}) for the last three iterates.
  double terminal_order() const {
    const std::size_t m = history.size();
    if (m < 3 || history[m - 1] <= 0.0 || history[m - 2] <= 0.0 || history[m - 3] <= 0.0) return 0.0;
    const double a = std::log(history[m - 1] / history[m - 2]);
    const double b = std::log(history[m - 2] / history[m - 3]);
    return b != 0.0 ? a / b : 0.0;
  }
};

/// Damped Newton for F(u) = 0: solve (sigma^{i jbar} d_i d_jbar - 1) h = -F
/// by preconditioned BiCGSTAB, then backtrack u + lambda h, lambda = 1, 1/2,
/// ..., until the residual sup-norm decreases with sigma positive.
inline NewtonResult newton_solve(const MongeAmpereProblem& prob, RealField u0, const NewtonOptions& opt = {}) {
  const auto& chart = prob.chart();
  require_same_chart(chart, u0.chart());
  const std::size_t P = chart.points();
  NewtonResult res;
  RealField u = std::move(u0);
  HermitianMatrixField W(chart);
  RealField F(chart), trial(chart), Ftrial(chart);
  std::vector<double> scratch(hessian_scratch_size(chart));
  auto ev = evaluate_ma(prob, u, W, F, scratch.data());
  if (!ev.positive)
    throw ConeExitError("initial iterate outside the solution cone", ev.worst_point, ev.worst_eigenvalue);
  res.history.push_back(ev.residual_sup);
  while (ev.residual_sup > opt.tol) {
    if (res.iterations >= opt.max_iters)
      throw NonconvergenceError("newton: iteration limit reached", res.history);
    // F becomes the right-hand side -F in place
    for (auto& v : F.values()) v = -v;
    std::vector<double> h(P, 0.0);
    {
      LinearMap A = [&](std::span<const double> in, std::span<double> out) {
        hessian_trace(W, in.data(), scratch.data(), out.data());
        for (std::size_t p = 0; p < P; ++p) out[p] -= in[p];
      };
      KrylovResult kr;
      if (opt.preconditioner == PreconditionerKind::fourier) {
        FourierPreconditioner M(chart, mean_matrix(W), -1.0);
        kr = bicgstab(A, [&](auto in, auto out) { M.apply(in, out); }, F.values(), h, opt.linear_rtol,
                      opt.linear_max_iters);
      } else {
        JacobiPreconditioner M(hessian_trace_diagonal(W, -1.0));
        kr = bicgstab(A, [&](auto in, auto out) { M.apply(in, out); }, F.values(), h, opt.linear_rtol,
                      opt.linear_max_iters);
      }
      res.linear_iterations += kr.iterations;
      res.linear_all_converged = res.linear_all_converged && kr.converged;
    }
    double lambda = 1.0;
    bool any_positive = false;
    Evaluation tev;
    for (;;) {
      for (std::size_t p = 0; p < P; ++p) trial[p] = u[p] + lambda * h[p];
      tev = evaluate_ma(prob, trial, W, Ftrial, scratch.data());
      any_positive = any_positive || tev.positive;
      if (tev.positive && (tev.residual_sup < ev.residual_sup || tev.residual_sup <= opt.tol)) break;
      lambda *= 0.5;
      if (lambda < opt.min_step) {
        if (!any_positive)
          throw ConeExitError("newton: positivity unrecoverable along the step", tev.worst_point,
                              tev.worst_eigenvalue);
        throw NonconvergenceError("newton: backtracking exhausted", res.history);
      }
    }
    std::swap(u, trial);
    std::swap(F, Ftrial);
    ev = tev;
    ++res.iterations;
    res.history.push_back(ev.residual_sup);
    res.steps.push_back(lambda);
  }
  res.u = std::move(u);
  res.inverse = std::move(W);
  res.residual_sup = ev.residual_sup;
  return res;
}

// ---------------------------------------------------------------------------
// Continuity states and paths
// ---------------------------------------------------------------------------

struct ContinuityState {
  double t = 0.0;
  RealField u;
  HermitianMatrixField sigma;
  double residual_sup = 0.0;
  int newton_iters = 0;
  std::map<std::string, double> diagnostics;
  // equation data the state solves
  HermitianMatrixField chi;
  RealField rhs;
  Provenance provenance = Provenance::synthetic;
};

inline HermitianMatrixField sigma_of(const HermitianMatrixField& chi, const RealField& u) {
  HermitianMatrixField s = chi;
  std::vector<double> scratch(hessian_scratch_size(u.chart()));
  add_complex_hessian(u.chart(), u.data(), scratch.data(), s);
  return s;
}

inline ContinuityState solve_state(const MongeAmpereProblem& prob, double t, Provenance provenance, RealField u0,
                                   const NewtonOptions& opt) {
  auto nr = newton_solve(prob, std::move(u0), opt);
  ContinuityState st;
  st.t = t;
  st.sigma = sigma_of(prob.chi, nr.u);
  st.u = std::move(nr.u);
  st.residual_sup = nr.residual_sup;
  st.newton_iters = nr.iterations;
  st.diagnostics["linear_iterations"] = nr.linear_iterations;
  st.diagnostics["terminal_order"] = nr.terminal_order();
  st.diagnostics["linear_all_converged"] = nr.linear_all_converged ? 1.0 : 0.0;
  double min_step = 1.0;
  for (double s : nr.steps) min_step = std::min(min_step, s);
  st.diagnostics["min_step"] = min_step;
  st.chi = prob.chi;
  st.rhs = prob.rhs;
  st.provenance = provenance;
  return st;
}

struct Schedule {
  std::optional<double> t1;  // empty: automatic
  double factor = 0.5;
  double t_min = 0x1.0p-10;
  std::vector<double> values;  // explicit list overrides the geometric rule

  static Schedule explicit_values(std::vector<double> v) {
    Schedule s;
    s.values = std::move(v);
    return s;
  }
};

/// Smallest power of two t1 >= 1 with lambda_min((d eta)^{-1} chi(t1)) >= 0.1 t1.
inline double auto_t1(const BackgroundSource& src, const TransverseMetric& g) {
  const double mu = src.max_relative_eigenvalue(g);
  double t = 1.0;
  for (int k = 0; k < 60; ++k, t *= 2.0)
    if (t - mu >= 0.1 * t) return t;
  throw DomainError("no admissible starting t below 2^60");
}

inline std::vector<double> schedule_values(const Schedule& s, const BackgroundSource& src, const TransverseMetric& g) {
  std::vector<double> v = s.values;
  if (v.empty()) {
    if (!(s.factor > 0.0 && s.factor < 1.0)) throw DomainError("schedule factor must be in (0, 1)");
    if (!(s.t_min > 0.0)) throw DomainError("schedule t_min must be positive");
    const double t1 = s.t1 ? *s.t1 : auto_t1(src, g);
    for (double t = t1; t >= s.t_min * (1.0 - 1e-12); t *= s.factor) v.push_back(t);
  }
  if (v.empty()) throw DomainError("empty schedule");
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!(v[k] > 0.0)) throw DomainError("schedule values must be positive");
    if (k > 0 && !(v[k] < v[k - 1])) throw DomainError("schedule must be strictly decreasing");
  }
  return v;
}

struct PathResult {
  std::vector<ContinuityState> states;
  bool completed = false;
  std::optional<double> failure_t;  // first t where Newton failed
  std::string failure;
  double last_success_t = 0.0;
};

/// Warm-started sweep over the schedule; stops at the first failing t.
inline PathResult continuity_path(const TransverseMetric& g, const BackgroundSource& src,
                                  const std::vector<double>& ts, const NewtonOptions& opt = {}) {
  PathResult path;
  RealField u(g.chart(), 0.0);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const auto chi = src.at(ts[k], g);
    const auto prob = make_problem(chi, g);
    if (k == 0) {
      for (std::size_t p = 0; p < g.chart().points(); ++p) {
        const double e = min_eigenvalue(chi.chi.at(p));
        if (!(e > 0.0)) throw ConeExitError("initial t is not in the cone", p, e);
      }
    }
    try {
      path.states.push_back(solve_state(prob, ts[k], src.provenance, u, opt));
      u = path.states.back().u;
      path.last_success_t = ts[k];
    } catch (const PositivityError& e) {
      path.failure_t = ts[k];
      path.failure = e.what();
      return path;
    } catch (const NonconvergenceError& e) {
      path.failure_t = ts[k];
      path.failure = e.what();
      return path;
    }
  }
  path.completed = true;
  return path;
}

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

/// Shifted equation whose exact solution is u*: rhs = log det(chi + H(u*)) - u*
/// evaluated analytically at the grid points.
inline MongeAmpereProblem manufactured_problem(const ChartModel& chart, const FourierPotential& ustar,
                                               const CMatrix& chi) {
  ustar.check(chart);
  MongeAmpereProblem prob{HermitianMatrixField::uniform(chart, chi), RealField(chart)};
  for (std::size_t p = 0; p < chart.points(); ++p) {
    const auto x = chart.coordinates(p);
    const CMatrix s = chi + ustar.hessian(chart, x);
    std::array<double, 9> a{};
    pack_hermitian(s, a.data());
    const auto f = factor_packed(a.data(), chart.n, nullptr);
    if (!f.positive) throw DomainError("manufactured solution leaves the cone");
    prob.rhs[p] = f.logdet - ustar.value(chart, x);
  }
  return prob;
}

/// Least-squares slope of log(error) against log(N), negated.
inline double convergence_slope(const std::vector<int>& Ns, const std::vector<double>& errors) {
  const std::size_t m = Ns.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double x = std::log(static_cast<double>(Ns[k])), y = std::log(errors[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return -(m * sxy - sx * sy) / (m * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Estimates
// ---------------------------------------------------------------------------

/// HSC hypothesis for the trace bound: kappa bounds the HSC of the d eta
/// metric from above by -kappa.
struct EstimateHypothesis {
  double kappa = 0.0;
  bool certified = false;
  std::string basis = "none";
};

/// Certifies sup K <= -kappa for g by sampling; only meaningful when the
/// path background is the Ricci form of g.
inline EstimateHypothesis certify_hypothesis(const TransverseMetric& g, Provenance provenance, std::size_t samples,
                                             std::uint64_t seed) {
  EstimateHypothesis h;
  if (provenance != Provenance::ricci) {
    h.basis = "synthetic background: curvature hypothesis does not apply";
    return h;
  }
  const auto C = curvature(g);
  const auto e = hsc_extrema(C, g, samples, seed);
  const double tol = 1e-10;
  if (e.max > tol) {
    h.basis = "sampled max HSC " + std::to_string(e.max) + " is positive";
    return h;
  }
  // K of 2g is half the K of g
  h.kappa = std::max(0.0, -e.max) / 2.0;
  h.certified = true;
  h.basis = "sampled HSC over grid";
  return h;
}

struct EstimateReport {
  double t = 0.0;
  double trace_sup = 0.0;  // sup tr_sigma d eta
  double sup_abs_u = 0.0, sup_u = 0.0, inf_u = 0.0;
  double eig_min = 0.0, eig_max = 0.0;  // of sigma against d eta
  double equivalence = 0.0;             // smallest C with d eta / C <= sigma <= C d eta
  double max_principle_lhs = 0.0;       // exp(sup u)
  double max_principle_rhs = 0.0;       // sup det chi / exp(rhs)
  bool max_principle_ok = true;
  std::string bound_status = "no hypothesis";
  double trace_bound = std::numeric_limits<double>::infinity();
  bool bound_ok = true;

  nlohmann::json to_json() const {
    auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"t", t},
            {"trace_sup", trace_sup},
            {"sup_abs_u", sup_abs_u},
            {"sup_u", sup_u},
            {"inf_u", inf_u},
            {"eig_min", eig_min},
            {"eig_max", eig_max},
            {"equivalence", equivalence},
            {"max_principle", {{"lhs", max_principle_lhs}, {"rhs", max_principle_rhs}, {"ok", max_principle_ok}}},
            {"trace_bound", {{"status", bound_status}, {"bound", num(trace_bound)}, {"ok", bound_ok}}}};
  }
};

inline EstimateReport verify_estimates(const ContinuityState& st, const TransverseMetric& g,
                                       const std::optional<EstimateHypothesis>& hyp = std::nullopt,
                                       double slack = 1e-8) {
  const int n = g.dim();
  EstimateReport r;
  r.t = st.t;
  r.sup_u = -std::numeric_limits<double>::infinity();
  r.inf_u = std::numeric_limits<double>::infinity();
  r.eig_min = std::numeric_limits<double>::infinity();
  r.eig_max = -std::numeric_limits<double>::infinity();
  double logdetchi_minus_rhs = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < g.chart().points(); ++p) {
    const CMatrix s = st.sigma.at(p);
    const CMatrix deta = 2.0 * g.g.at(p);
    r.trace_sup = std::max(r.trace_sup, trace_wrt(s, deta));
    const auto ev = generalized_eigenvalues(s, deta);
    r.eig_min = std::min(r.eig_min, ev.minCoeff());
    r.eig_max = std::max(r.eig_max, ev.maxCoeff());
    r.sup_u = std::max(r.sup_u, st.u[p]);
    r.inf_u = std::min(r.inf_u, st.u[p]);
    std::array<double, 9> a{};
    st.chi.gather(p, a.data());
    const auto f = factor_packed(a.data(), n, nullptr);
    if (f.positive) logdetchi_minus_rhs = std::max(logdetchi_minus_rhs, f.logdet - st.rhs[p]);
  }
  r.sup_abs_u = std::max(std::abs(r.sup_u), std::abs(r.inf_u));
  r.equivalence = std::max(r.eig_max, 1.0 / r.eig_min);
  r.max_principle_lhs = std::exp(r.sup_u);
  r.max_principle_rhs = std::exp(logdetchi_minus_rhs);
  r.max_principle_ok = r.max_principle_lhs <= r.max_principle_rhs * (1.0 + slack);
  if (hyp) {
    if (!hyp->certified) {
      r.bound_status = "hypothesis uncertified";
    } else if (hyp->kappa > 0.0) {
      r.trace_bound = 2.0 * n / ((n + 1.0) * hyp->kappa);
      r.bound_ok = r.trace_sup <= 1.05 * r.trace_bound;
      r.bound_status = r.bound_ok ? "asserted: holds" : "asserted: violated";
    } else {
      r.bound_status = "certified with kappa = 0: bound is vacuous";
    }
  }
  return r;
}

struct UniformityReport {
  double sup_abs_u_ratio = 1.0;
  double trace_ratio = 1.0;
  double equivalence_ratio = 1.0;
  bool max_principle_all = true;

  double worst() const { return std::max({sup_abs_u_ratio, trace_ratio, equivalence_ratio}); }

  nlohmann::json to_json() const {
    return {{"sup_abs_u_ratio", sup_abs_u_ratio},
            {"trace_ratio", trace_ratio},
            {"equivalence_ratio", equivalence_ratio},
            {"max_principle_all", max_principle_all}};
  }
};

inline UniformityReport path_uniformity(const std::vector<EstimateReport>& reps) {
  UniformityReport u;
  auto ratio = [&](auto get) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& r : reps) {
      lo = std::min(lo, get(r));
      hi = std::max(hi, get(r));
    }
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  };
  if (reps.empty()) return u;
  u.sup_abs_u_ratio = ratio([](const EstimateReport& r) { return r.sup_abs_u; });
  u.trace_ratio = ratio([](const EstimateReport& r) { return r.trace_sup; });
  u.equivalence_ratio = ratio([](const EstimateReport& r) { return r.equivalence; });
  for (const auto& r : reps) u.max_principle_all = u.max_principle_all && r.max_principle_ok;
  return u;
}

/// Pointwise tr_sigma d eta.
inline RealField trace_field(const HermitianMatrixField& sigma_inverse, const TransverseMetric& g) {
  RealField T(g.chart());
  const int n = g.dim();
  for (std::size_t p = 0; p < T.size(); ++p) {
    std::array<double, 9> w{}, a{};
    sigma_inverse.gather(p, w.data());
    g.g.gather(p, a.data());
    T[p] = 2.0 * packed_trace_product(w.data(), a.data(), n);
  }
  return T;
}

struct KeyInequalityReport {
  double min_margin = 0.0;      // min over points of lhs - rhs
  double lhs_max_abs = 0.0;
  double two_path_difference = 0.0;  // lhs against the chain-rule composition
  bool asserted = false;
  bool ok = true;
  std::string status;

  nlohmann::json to_json() const {
    return {{"min_margin", min_margin}, {"lhs_max_abs", lhs_max_abs}, {"two_path_difference", two_path_difference},
            {"asserted", asserted}, {"ok", ok}, {"status", status}};
  }
};

/// lhs = sigma^{k lbar} d_k d_lbar log tr_sigma d eta against
/// rhs = -1 + (n+1)/(2n) kappa tr_sigma d eta.
inline KeyInequalityReport key_inequality_diagnostic(const ContinuityState& st, const TransverseMetric& g,
                                                     const EstimateHypothesis& hyp) {
  const int n = g.dim();
  const auto inv = invert_positive(st.sigma, "key inequality: sigma is not positive definite").inverse;
  const auto T = trace_field(inv, g);
  RealField logT(g.chart());
  for (std::size_t p = 0; p < T.size(); ++p) logT[p] = std::log(T[p]);
  RealField lhs(g.chart());
  hessian_trace(inv, logT, lhs);

  // independent route: sigma^{k lbar} (d_k d_lbar T / T - d_k T d_lbar T / T^2)
  std::vector<ComplexField> dT, dbT;
  for (int k = 0; k < n; ++k) {
    dT.push_back(wirtinger_derivative(T, k, false));
    dbT.push_back(wirtinger_derivative(T, k, true));
  }
  RealField alt(g.chart(), 0.0);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      const auto ddT = wirtinger_derivative(dbT[l], k, false);
      for (std::size_t p = 0; p < T.size(); ++p) {
        const cplx w = inv.entry(l, k, p);
        alt[p] += (w * (ddT[p] / T[p] - dT[k][p] * dbT[l][p] / (T[p] * T[p]))).real();
      }
    }
  KeyInequalityReport r;
  r.min_margin = std::numeric_limits<double>::infinity();
  const double coef = (n + 1.0) / (2.0 * n) * (hyp.certified ? hyp.kappa : 0.0);
  for (std::size_t p = 0; p < T.size(); ++p) {
    const double rhs = -1.0 + coef * T[p];
    r.min_margin = std::min(r.min_margin, lhs[p] - rhs);
    r.lhs_max_abs = std::max(r.lhs_max_abs, std::abs(lhs[p]));
    r.two_path_difference = std::max(r.two_path_difference, std::abs(lhs[p] - alt[p]));
  }
  r.asserted = hyp.certified;
  r.ok = !r.asserted || r.min_margin >= -1e-8;
  r.status = hyp.certified ? "asserted" : "diagnostic only: hypothesis uncertified";
  return r;
}

// ---------------------------------------------------------------------------
// Integral diagnostics
// ---------------------------------------------------------------------------

/// Integral of rho against (d eta)^n ^ eta, i.e. rho det(2g) dV L.
inline double integrate_against_volume(const RealField& rho, const TransverseMetric& g) {
  RealField d(g.chart());
  const double shift = g.dim() * std::log(2.0);
  for (std::size_t p = 0; p < d.size(); ++p) d[p] = rho[p] * std::exp(g.logdet[p] + shift);
  return integrate_density(d);
}

struct LogGradientResult {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = true;
};

/// int |grad log(-u)|^2 against (1 / min(-u)) int |v| with v = -Delta_B u,
/// where |grad f|^2 = 2 g^{i jbar} d_i f d_jbar f.
inline LogGradientResult log_gradient_check(const RealField& u, const TransverseMetric& g, double slack = 1e-9) {
  double sup = -std::numeric_limits<double>::infinity();
  for (double x : u.values()) sup = std::max(sup, x);
  if (!(sup < 0.0)) throw DomainError("log_gradient_check needs u < 0 everywhere");
  const int n = g.dim();
  const auto v = basic_laplacian(u, g.g);
  RealField f(u.chart());
  for (std::size_t p = 0; p < f.size(); ++p) f[p] = std::log(-u[p]);
  std::vector<ComplexField> df;
  for (int i = 0; i < n; ++i) df.push_back(wirtinger_derivative(f, i, false));
  RealField grad(u.chart()), absv(u.chart());
  for (std::size_t p = 0; p < f.size(); ++p) {
    cplx s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s += g.inverse.entry(j, i, p) * df[i][p] * std::conj(df[j][p]);
    grad[p] = 2.0 * s.real();
    absv[p] = std::abs(v[p]);
  }
  LogGradientResult r;
  r.lhs = integrate_against_volume(grad, g);
  r.rhs = integrate_against_volume(absv, g) / (-sup);
  r.ok = r.lhs <= r.rhs * (1.0 + slack);
  return r;
}

/// int exp(-alpha (u - max u)) (d eta)^n ^ eta.
inline double exp_integral_diagnostic(const RealField& u, double alpha, const TransverseMetric& g) {
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : u.values()) mx = std::max(mx, x);
  RealField e(u.chart());
  for (std::size_t p = 0; p < e.size(); ++p) e[p] = std::exp(-alpha * (u[p] - mx));
  return integrate_against_volume(e, g);
}

struct VolumeLimit {
  std::vector<double> ts;
  std::vector<double> volumes;
  std::vector<double> max_u_ratio;  // exp(-max u_t / n)
  double limit = 0.0;
  bool positive = false;

  nlohmann::json to_json() const {
    return {{"t", ts}, {"volumes", volumes}, {"max_u_ratio", max_u_ratio}, {"limit", limit}, {"positive", positive}};
  }
};

/// V(t) = int e^{u_t} (d eta)^n ^ eta per state, extrapolated to t = 0 by a
/// linear least-squares fit through the last four points.
inline VolumeLimit volume_limit(const std::vector<ContinuityState>& path, const TransverseMetric& g) {
  if (path.empty()) throw DomainError("volume_limit needs a nonempty path");
  VolumeLimit v;
  const int n = g.dim();
  for (const auto& st : path) {
    RealField e(st.u.chart());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < e.size(); ++p) {
      e[p] = std::exp(st.u[p]);
      mx = std::max(mx, st.u[p]);
    }
    v.ts.push_back(st.t);
    v.volumes.push_back(integrate_against_volume(e, g));
    v.max_u_ratio.push_back(std::exp(-mx / n));
  }
  const std::size_t m = std::min<std::size_t>(4, v.ts.size());
  const std::size_t k0 = v.ts.size() - m;
  if (m == 1) {
    v.limit = v.volumes.back();
  } else {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = k0; k < v.ts.size(); ++k) {
      sx += v.ts[k], sy += v.volumes[k], sxx += v.ts[k] * v.ts[k], sxy += v.ts[k] * v.volumes[k];
    }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    v.limit = (sy - slope * sx) / m;
  }
  v.positive = v.limit > 1e-6 * v.volumes.front();
  return v;
}

}  // namespace sasaki

#pragma once

// Run orchestration for the sasaki-ma tool: strict config parsing, command
// dispatch, report assembly, atomic persistence and report comparison.

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sasaki/basic_chern.hpp"
#include "sasaki/conventions.hpp"
#include "sasaki/curvature_algebra.hpp"
#include "sasaki/errors.hpp"
#include "sasaki/grid.hpp"
#include "sasaki/ma_solver.hpp"
#include "sasaki/potential.hpp"
#include "sasaki/transverse.hpp"

namespace sasaki::cli {

using nlohmann::json;

enum class Command { curvature, solve, chern, verify, royden };

inline std::string to_string(Command c) {
  switch (c) {
    case Command::curvature: return "curvature";
    case Command::solve: return "solve";
    case Command::chern: return "chern";
    case Command::verify: return "verify";
    case Command::royden: return "royden";
  }
  return "";
}

inline Command parse_command(const std::string& s) {
  if (s == "curvature") return Command::curvature;
  if (s == "solve") return Command::solve;
  if (s == "chern") return Command::chern;
  if (s == "verify") return Command::verify;
  if (s == "royden") return Command::royden;
  throw ConfigError("unknown command '" + s + "'");
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct ManufacturedSpec {
  FourierPotential solution;
  double chi = 2.0;
  bool start_exact = false;
};

struct RoydenSpec {
  std::vector<int> dims{2};
  RoydenCorpusOptions options;
};

struct RunConfig {
  Command command = Command::solve;
  std::optional<ChartModel> chart;
  Potential potential;
  Provenance background = Provenance::synthetic;
  SyntheticSpec synthetic;
  Schedule schedule;
  NewtonOptions newton;
  std::uint64_t seed = 0;
  std::string outputs = "sasaki-out";
  std::size_t samples = 200;
  std::optional<ManufacturedSpec> manufactured;
  double uniformity_bound = 1.25;
  std::array<double, 2> uniformity_window{0.0, 0.0625};  // t range entering the max/min ratios
  std::vector<double> alphas{0.5, 1.0, 2.0};
  std::vector<double> nef_eps{1.0, 0.5, 0.25, 0.125};
  std::optional<Potential> compare_potential;
  int point_count = 100;
  double point_radius = 0.5;
  RoydenSpec royden;
  json canonical;  // validated config without output location
};

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad or missing '" + key + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

inline SyntheticSpec parse_synthetic(const json& spec, int n) {
  SyntheticSpec s;
  if (spec.is_string()) {
    if (spec.get<std::string>() != "zero") throw ConfigError("synthetic spec must be \"zero\" or an object");
    return s;
  }
  require_keys(spec, {"c", "psi"}, "background.spec");
  s.c = get_or<double>(spec, "c", 0.0, "background.spec");
  if (spec.contains("psi")) {
    const auto& p = spec.at("psi");
    const auto pot = parse_potential(p.is_array() ? json{{"fourier", p}} : p, n);
    if (!pot.periodic()) throw ConfigError("synthetic psi must be periodic");
    s.psi = pot.fourier;
  }
  return s;
}

inline void parse_schedule(const json& j, Schedule& s) {
  require_keys(j, {"t1", "factor", "t_min", "values"}, "schedule");
  if (j.contains("t1")) {
    const auto& t1 = j.at("t1");
    if (t1.is_string()) {
      if (t1.get<std::string>() != "auto") throw ConfigError("schedule.t1 must be \"auto\" or a number");
    } else if (t1.is_number()) {
      s.t1 = t1.get<double>();
    } else {
      throw ConfigError("schedule.t1 must be \"auto\" or a number");
    }
  }
  s.factor = get_or<double>(j, "factor", s.factor, "schedule");
  s.t_min = get_or<double>(j, "t_min", s.t_min, "schedule");
  s.values = get_or<std::vector<double>>(j, "values", {}, "schedule");
  if (!(s.factor > 0.0 && s.factor < 1.0)) throw ConfigError("schedule.factor must be in (0, 1)");
  if (!(s.t_min > 0.0)) throw ConfigError("schedule.t_min must be positive");
  if (s.t1 && !(*s.t1 > 0.0)) throw ConfigError("schedule.t1 must be positive");
  for (std::size_t k = 0; k < s.values.size(); ++k)
    if (!(s.values[k] > 0.0) || (k > 0 && !(s.values[k] < s.values[k - 1])))
      throw ConfigError("schedule.values must be positive and strictly decreasing");
}

inline void parse_newton(const json& j, NewtonOptions& o) {
  require_keys(j, {"tol", "max_iters", "linear_rtol", "linear_max_iters", "preconditioner"}, "newton");
  o.tol = get_or<double>(j, "tol", o.tol, "newton");
  o.max_iters = get_or<int>(j, "max_iters", o.max_iters, "newton");
  o.linear_rtol = get_or<double>(j, "linear_rtol", o.linear_rtol, "newton");
  o.linear_max_iters = get_or<int>(j, "linear_max_iters", o.linear_max_iters, "newton");
  if (j.contains("preconditioner")) o.preconditioner = parse_preconditioner(get<std::string>(j, "preconditioner", "newton"));
  if (!(o.tol > 0.0) || o.max_iters < 1 || !(o.linear_rtol > 0.0) || o.linear_max_iters < 1)
    throw ConfigError("newton options must be positive");
}

}  // namespace detail

/// Validates the whole config before anything runs. CLI overrides take
/// precedence over config values.
inline RunConfig parse_config(const json& j, std::optional<std::string> command = std::nullopt,
                              std::optional<std::uint64_t> seed = std::nullopt,
                              std::optional<std::string> outputs = std::nullopt) {
  using detail::get;
  using detail::get_or;
  detail::require_keys(j,
                       {"command", "chart", "potential", "background", "schedule", "newton", "seed", "outputs",
                        "samples", "manufactured", "verify", "chern", "points", "n", "dims", "instances", "sigmas",
                        "kappa_range", "derate", "certify_samples"},
                       "config");
  RunConfig c;
  if (j.contains("command")) {
    c.command = parse_command(get<std::string>(j, "command", "config"));
    if (command && parse_command(*command) != c.command)
      throw ConfigError("command '" + *command + "' does not match config command '" + to_string(c.command) + "'");
  } else if (command) {
    c.command = parse_command(*command);
  } else {
    throw ConfigError("no command given");
  }
  c.seed = seed ? *seed : get_or<std::uint64_t>(j, "seed", 0, "config");
  c.outputs = outputs ? *outputs : get_or<std::string>(j, "outputs", c.outputs, "config");
  c.samples = get_or<std::size_t>(j, "samples", c.samples, "config");
  if (c.samples < 1) throw ConfigError("samples must be >= 1");

  if (c.command == Command::royden) {
    for (const char* k : {"chart", "potential", "background", "schedule", "newton", "manufactured"})
      if (j.contains(k)) throw ConfigError(std::string("key '") + k + "' does not apply to royden");
    if (j.contains("n") && j.contains("dims")) throw ConfigError("give either n or dims");
    if (j.contains("n")) c.royden.dims = {get<int>(j, "n", "config")};
    if (j.contains("dims")) c.royden.dims = get<std::vector<int>>(j, "dims", "config");
    if (c.royden.dims.empty()) throw ConfigError("royden needs at least one dimension");
    for (int n : c.royden.dims)
      if (n < 1 || n > kMaxDim) throw ConfigError("royden dimensions must be in {1, 2, 3}");
    auto& o = c.royden.options;
    o.instances = get_or<int>(j, "instances", o.instances, "config");
    o.sigmas = get_or<int>(j, "sigmas", o.sigmas, "config");
    o.derate = get_or<double>(j, "derate", o.derate, "config");
    o.certify_samples = get_or<std::size_t>(j, "certify_samples", o.certify_samples, "config");
    if (j.contains("kappa_range")) {
      const auto r = get<std::vector<double>>(j, "kappa_range", "config");
      if (r.size() != 2 || !(r[0] > 0.0) || !(r[1] >= r[0])) throw ConfigError("kappa_range must be [lo, hi] with 0 < lo <= hi");
      o.kappa_min = r[0];
      o.kappa_max = r[1];
    }
    if (o.instances < 1 || o.sigmas < 1 || o.certify_samples < 1 || !(o.derate > 0.0 && o.derate <= 1.0))
      throw ConfigError("royden options out of range");
  } else {
    for (const char* k : {"n", "dims", "instances", "sigmas", "kappa_range", "derate", "certify_samples"})
      if (j.contains(k)) throw ConfigError(std::string("key '") + k + "' only applies to royden");
    if (!j.contains("chart")) throw ConfigError("config requires a chart");
    c.chart = chart_from_json(j.at("chart"));
    const int n = c.chart->n;
    c.potential = parse_potential(j.value("potential", json("flat")), n);
    if (!c.potential.periodic() && c.command != Command::curvature)
      throw ConfigError("radial potentials are only supported by the curvature command");
    c.potential.fourier.check(*c.chart);
    if (j.contains("background")) {
      const auto& b = j.at("background");
      detail::require_keys(b, {"mode", "spec"}, "background");
      const auto mode = get<std::string>(b, "mode", "background");
      if (mode == "ricci") {
        c.background = Provenance::ricci;
        if (b.contains("spec")) throw ConfigError("ricci background takes no spec");
      } else if (mode == "synthetic") {
        c.background = Provenance::synthetic;
        c.synthetic = detail::parse_synthetic(b.value("spec", json("zero")), n);
        c.synthetic.psi.check(*c.chart);
      } else {
        throw ConfigError("background.mode must be ricci or synthetic");
      }
    }
    if (j.contains("schedule")) detail::parse_schedule(j.at("schedule"), c.schedule);
    if (j.contains("newton")) detail::parse_newton(j.at("newton"), c.newton);
    if (j.contains("manufactured")) {
      if (c.command != Command::solve) throw ConfigError("manufactured mode only applies to solve");
      const auto& m = j.at("manufactured");
      detail::require_keys(m, {"solution", "chi", "start"}, "manufactured");
      ManufacturedSpec ms;
      if (!m.contains("solution")) throw ConfigError("manufactured mode needs a solution");
      ms.solution = fourier_from_json(m.at("solution"));
      ms.solution.check(*c.chart);
      ms.chi = get_or<double>(m, "chi", ms.chi, "manufactured");
      const auto start = get_or<std::string>(m, "start", "zero", "manufactured");
      if (start != "zero" && start != "exact") throw ConfigError("manufactured.start must be zero or exact");
      ms.start_exact = start == "exact";
      if (!(ms.chi > 0.0)) throw ConfigError("manufactured.chi must be positive");
      c.manufactured = ms;
    }
    if (j.contains("verify")) {
      if (c.command != Command::verify) throw ConfigError("verify options only apply to verify");
      const auto& v = j.at("verify");
      detail::require_keys(v, {"uniformity_bound", "uniformity_window", "alphas"}, "verify");
      c.uniformity_bound = get_or<double>(v, "uniformity_bound", c.uniformity_bound, "verify");
      if (v.contains("uniformity_window")) {
        const auto w = get<std::vector<double>>(v, "uniformity_window", "verify");
        if (w.size() != 2 || !(w[0] >= 0.0) || !(w[1] > w[0])) throw ConfigError("verify.uniformity_window must be [lo, hi] with 0 <= lo < hi");
        c.uniformity_window = {w[0], w[1]};
      }
      c.alphas = get_or<std::vector<double>>(v, "alphas", c.alphas, "verify");
      for (double a : c.alphas)
        if (!(a > 0.0)) throw ConfigError("verify.alphas must be positive");
    }
    if (j.contains("chern")) {
      if (c.command != Command::chern) throw ConfigError("chern options only apply to chern");
      const auto& ch = j.at("chern");
      detail::require_keys(ch, {"eps", "compare_potential"}, "chern");
      c.nef_eps = get_or<std::vector<double>>(ch, "eps", c.nef_eps, "chern");
      for (double e : c.nef_eps)
        if (!(e > 0.0)) throw ConfigError("chern.eps must be positive");
      if (ch.contains("compare_potential")) {
        c.compare_potential = parse_potential(ch.at("compare_potential"), n);
        if (!c.compare_potential->periodic()) throw ConfigError("compare_potential must be periodic");
        c.compare_potential->fourier.check(*c.chart);
      }
    }
    if (j.contains("points")) {
      if (c.command != Command::curvature) throw ConfigError("points only apply to curvature");
      const auto& p = j.at("points");
      detail::require_keys(p, {"count", "radius"}, "points");
      c.point_count = get_or<int>(p, "count", c.point_count, "points");
      c.point_radius = get_or<double>(p, "radius", c.point_radius, "points");
      if (c.point_count < 1 || !(c.point_radius > 0.0)) throw ConfigError("points options out of range");
    }
  }
  c.canonical = j;
  c.canonical.erase("outputs");
  c.canonical["command"] = to_string(c.command);
  c.canonical["seed"] = c.seed;
  return c;
}

inline RunConfig load_config(const std::string& path, std::optional<std::string> command = std::nullopt,
                             std::optional<std::uint64_t> seed = std::nullopt,
                             std::optional<std::string> outputs = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j, std::move(command), seed, std::move(outputs));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw Error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

struct Assertion {
  std::string name;
  bool ok = true;
  double value = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // positive = satisfied with room

  json to_json() const {
    auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"name", name}, {"ok", ok}, {"value", num(value)}, {"bound", num(bound)}, {"margin", num(margin)}};
  }
};

inline Assertion at_most(std::string name, double value, double bound) {
  return {std::move(name), value <= bound, value, bound, bound - value};
}

inline Assertion at_least(std::string name, double value, double bound) {
  return {std::move(name), value >= bound, value, bound, value - bound};
}

struct RunReport {
  json results = json::object();
  std::vector<Assertion> assertions;
  std::string csv;  // per-t path series
  bool nonconvergence = false;
  double seconds = 0.0;
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;

  bool all_ok() const {
    for (const auto& a : assertions)
      if (!a.ok) return false;
    return true;
  }

  int exit_code() const {
    if (nonconvergence) return 3;
    return all_ok() ? 0 : 1;
  }

  json to_json() const {
    json as = json::array();
    for (const auto& a : assertions) as.push_back(a.to_json());
    return {{"schema_version", kSchemaVersion},
            {"tool_version", kToolVersion},
            {"command", command},
            {"config_hash", config_hash},
            {"seed", seed},
            {"results", results},
            {"assertions", as},
            {"all_ok", all_ok()},
            {"nonconvergence", nonconvergence}};
  }
};

namespace detail {

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline TransverseMetric grid_metric(const ChartModel& chart, const Potential& pot) {
  try {
    return metric_from_potential(pot.fourier.sample(chart), HermitianMatrixField::identity(chart));
  } catch (const PositivityError& e) {
    throw ConfigError(e.what());
  }
}

inline TransverseMetric grid_metric(const RunConfig& c) { return grid_metric(*c.chart, c.potential); }

inline BackgroundSource background_source(const RunConfig& c, const TransverseMetric& g) {
  return c.background == Provenance::ricci ? BackgroundSource::ricci_of(g)
                                           : BackgroundSource::synthetic(g, c.synthetic);
}

inline bool exactly_flat_path(const RunConfig& c) {
  return c.potential.label == "flat" &&
         (c.background == Provenance::ricci || (c.synthetic.c == 0.0 && c.synthetic.psi.empty()));
}

// -- curvature ---------------------------------------------------------------

inline void run_curvature_grid(const RunConfig& c, RunReport& rep) {
  const auto g = grid_metric(c);
  const auto C = curvature(g);
  const int n = g.dim();
  double sym = 0.0, rmax = 0.0;
  for (std::size_t p = 0; p < C.points; ++p) {
    sym = std::max(sym, kahler_symmetry_defect(C.at(p), n));
    for (std::size_t q = 0; q < static_cast<std::size_t>(n * n * n * n); ++q) rmax = std::max(rmax, std::abs(C.at(p)[q]));
  }
  const auto tr = ricci_by_trace(C, g);
  auto d = tr - C.ricci;
  const double ric_scale = std::max(1e-300, sup_norm(C.ricci.raw()));
  const double ric_diff = sup_norm(d.raw());
  const auto e = hsc_extrema(C, g, c.samples, c.seed);
  const double closed = closedness_residual(C.ricci);
  const auto c1 = chern1_form(g);
  const double c1_int = integrate_against_omega(c1.components, g);
  rep.results = {{"mode", "grid"},
                 {"chart", chart_to_json(*c.chart)},
                 {"potential", c.potential.label},
                 {"max_abs_R", rmax},
                 {"symmetry_defect", sym},
                 {"ricci_trace_difference", ric_diff},
                 {"ricci_sup", sup_norm(C.ricci.raw())},
                 {"ricci_closedness", closed},
                 {"scalar_sup", sup_norm(C.scalar.values())},
                 {"hsc", {{"min", e.min}, {"max", e.max}, {"argmin_point", e.argmin_point},
                          {"argmax_point", e.argmax_point}, {"kappa_estimate", e.kappa_estimate()},
                          {"samples", c.samples}}},
                 {"c1_integral", c1_int}};
  rep.assertions.push_back(at_most("kahler_symmetry_relative", sym / (1.0 + rmax), 1e-8));
  rep.assertions.push_back(at_most("ricci_closedness", closed, 1e-8 * (1.0 + ric_scale)));
  if (c.chart->scheme == DerivativeScheme::spectral)
    rep.assertions.push_back(at_most("ricci_vs_trace_relative", ric_diff / (1.0 + ric_scale), 1e-7));
  if (n == 1) rep.assertions.push_back(at_most("torus_c1_integral", std::abs(c1_int), 1e-6));
}

/// Constant-HSC oracle: R = (K/2)(g g + g g), Ric = (n+1) K/2 g.
inline void run_curvature_points(const RunConfig& c, RunReport& rep) {
  const int n = c.chart->n;
  if (n > kMaxDim) throw ConfigError("pointwise mode supports n <= 3");
  const auto& pot = *c.potential.radial;
  const double K = pot.constant_hsc();
  Rng rng(c.seed);
  const auto dirs = hsc_directions(n, std::min<std::size_t>(c.samples, 64), c.seed ^ 0x9e3779b97f4a7c15ULL);
  double r_err = 0.0, ric_err = 0.0, trace_err = 0.0, k_err = 0.0;
  double kmin = std::numeric_limits<double>::infinity(), kmax = -kmin;
  for (int m = 0; m < c.point_count; ++m) {
    CVector z(n);
    for (int i = 0; i < n; ++i) z(i) = rng.complex_normal();
    z *= c.point_radius * std::pow(rng.uniform(), 1.0 / (2 * n)) / z.norm();
    const auto pc = pointwise_curvature(pot, z);
    const CMatrix& gz = pc.g;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) {
            const cplx o = 0.5 * K * (gz(i, j) * gz(k, l) + gz(i, l) * gz(k, j));
            r_err = std::max(r_err, std::abs(pc.R[tensor_index(n, i, j, k, l)] - o));
          }
    const CMatrix ric_oracle = 0.5 * (n + 1.0) * K * gz;
    ric_err = std::max(ric_err, (pc.ricci - ric_oracle).cwiseAbs().maxCoeff());
    trace_err = std::max(trace_err, (pc.ricci_trace - ric_oracle).cwiseAbs().maxCoeff());
    for (const auto& U : dirs) {
      const double k = pc.hsc(U);
      kmin = std::min(kmin, k);
      kmax = std::max(kmax, k);
      k_err = std::max(k_err, std::abs(k - K));
    }
  }
  rep.results = {{"mode", "pointwise"},
                 {"potential", pot.name()},
                 {"n", n},
                 {"points", c.point_count},
                 {"radius", c.point_radius},
                 {"oracle_hsc", K},
                 {"max_tensor_error", r_err},
                 {"max_ricci_error", ric_err},
                 {"max_ricci_trace_error", trace_err},
                 {"max_hsc_error", k_err},
                 {"hsc_min", kmin},
                 {"hsc_max", kmax}};
  rep.assertions.push_back(at_most("tensor_vs_oracle", r_err, 1e-6));
  rep.assertions.push_back(at_most("ricci_vs_oracle", ric_err, 1e-6));
  rep.assertions.push_back(at_most("ricci_trace_vs_oracle", trace_err, 1e-6));
  rep.assertions.push_back(at_most("hsc_vs_oracle", k_err, 1e-6));
  if (K > 0.0) rep.assertions.push_back(at_least("hsc_sign_positive", kmin, std::numeric_limits<double>::min()));
  else rep.assertions.push_back(at_most("hsc_sign_negative", kmax, -std::numeric_limits<double>::min()));
}

// -- solve / verify -------------------------------------------------------------

struct PathRun {
  TransverseMetric g;
  BackgroundSource src;
  std::vector<double> schedule;
  PathResult path;
  std::vector<EstimateReport> estimates;
  std::optional<VolumeLimit> volumes;
};

inline PathRun run_path(const RunConfig& c, RunReport& rep) {
  auto g = grid_metric(c);
  auto src = background_source(c, g);
  std::vector<double> ts;
  try {
    ts = schedule_values(c.schedule, src, g);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  PathResult path;
  try {
    path = continuity_path(g, src, ts, c.newton);
  } catch (const ConeExitError& e) {
    throw ConfigError(std::string("schedule start is not admissible: ") + e.what());
  }
  PathRun run{std::move(g), std::move(src), std::move(ts), std::move(path), {}, std::nullopt};
  for (const auto& st : run.path.states) run.estimates.push_back(verify_estimates(st, run.g));
  if (!run.path.states.empty()) run.volumes = volume_limit(run.path.states, run.g);
  rep.nonconvergence = !run.path.completed;

  std::ostringstream csv;
  csv << "t,sup_u,inf_u,trace_sup,eig_min,eig_max,V_t,newton_iters,residual\n";
  json states = json::array();
  for (std::size_t k = 0; k < run.path.states.size(); ++k) {
    const auto& st = run.path.states[k];
    const auto& e = run.estimates[k];
    const double V = run.volumes->volumes[k];
    csv << fmt(st.t) << ',' << fmt(e.sup_u) << ',' << fmt(e.inf_u) << ',' << fmt(e.trace_sup) << ','
        << fmt(e.eig_min) << ',' << fmt(e.eig_max) << ',' << fmt(V) << ',' << st.newton_iters << ','
        << fmt(st.residual_sup) << '\n';
    json diag = json::object();
    for (const auto& [key, v] : st.diagnostics) diag[key] = num(v);
    states.push_back({{"t", st.t},
                      {"sup_u", e.sup_u},
                      {"inf_u", e.inf_u},
                      {"trace_sup", e.trace_sup},
                      {"eig_min", e.eig_min},
                      {"eig_max", e.eig_max},
                      {"V_t", V},
                      {"newton_iters", st.newton_iters},
                      {"residual", st.residual_sup},
                      {"diagnostics", diag}});
  }
  rep.csv = csv.str();
  rep.results["chart"] = chart_to_json(*c.chart);
  rep.results["potential"] = c.potential.label;
  rep.results["background"] = to_string(run.src.provenance);
  rep.results["schedule"] = run.schedule;
  rep.results["states"] = states;
  rep.results["completed"] = run.path.completed;
  rep.results["failure_t"] = run.path.failure_t ? json(*run.path.failure_t) : json(nullptr);
  rep.results["failure"] = run.path.failure;
  rep.results["last_success_t"] = run.path.states.empty() ? json(nullptr) : json(run.path.last_success_t);
  if (run.volumes) rep.results["volume_limit"] = run.volumes->to_json();

  double worst_res = 0.0, worst_eig = std::numeric_limits<double>::infinity();
  bool mp = true;
  for (std::size_t k = 0; k < run.path.states.size(); ++k) {
    worst_res = std::max(worst_res, run.path.states[k].residual_sup);
    worst_eig = std::min(worst_eig, run.estimates[k].eig_min);
    mp = mp && run.estimates[k].max_principle_ok;
  }
  if (!run.path.states.empty()) {
    rep.assertions.push_back(at_most("residual_within_tolerance", worst_res, c.newton.tol));
    rep.assertions.push_back(at_least("sigma_positive", worst_eig, std::numeric_limits<double>::min()));
    rep.assertions.push_back({"max_principle_all_states", mp, mp ? 1.0 : 0.0, 1.0, mp ? 0.0 : -1.0});
  }
  if (exactly_flat_path(c)) {
    double worst = 0.0;
    const int n = c.chart->n;
    for (const auto& st : run.path.states)
      for (double v : st.u.values()) worst = std::max(worst, std::abs(v - n * std::log(st.t)));
    rep.results["flat_path_error"] = worst;
    rep.assertions.push_back(at_most("flat_path_exact", worst, 1e-10));
  }
  return run;
}

inline void run_manufactured(const RunConfig& c, RunReport& rep) {
  const auto& chart = *c.chart;
  const auto& m = *c.manufactured;
  const auto prob = manufactured_problem(chart, m.solution, m.chi * CMatrix::Identity(chart.n, chart.n));
  const auto exact = m.solution.sample(chart);
  NewtonResult nr;
  try {
    nr = newton_solve(prob, m.start_exact ? exact : RealField(chart, 0.0), c.newton);
  } catch (const NonconvergenceError& e) {
    rep.nonconvergence = true;
    rep.results = {{"mode", "manufactured"}, {"failure", e.what()}, {"history", e.residual_history()}};
    return;
  } catch (const PositivityError& e) {
    rep.nonconvergence = true;
    rep.results = {{"mode", "manufactured"}, {"failure", e.what()}};
    return;
  }
  double err = 0.0;
  for (std::size_t p = 0; p < exact.size(); ++p) err = std::max(err, std::abs(nr.u[p] - exact[p]));
  rep.results = {{"mode", "manufactured"},
                 {"chart", chart_to_json(chart)},
                 {"chi", m.chi},
                 {"start", m.start_exact ? "exact" : "zero"},
                 {"max_error", err},
                 {"residual", nr.residual_sup},
                 {"newton_iters", nr.iterations},
                 {"linear_iters", nr.linear_iterations},
                 {"history", nr.history},
                 {"steps", nr.steps},
                 {"terminal_order", num(nr.terminal_order())}};
  rep.assertions.push_back(at_most("residual_within_tolerance", nr.residual_sup, c.newton.tol));
  bool mono = true;
  for (std::size_t k = 2; k < nr.history.size(); ++k) mono = mono && nr.history[k] < nr.history[k - 1];
  rep.assertions.push_back({"monotone_residual", mono, mono ? 1.0 : 0.0, 1.0, mono ? 0.0 : -1.0});
}

inline void run_solve(const RunConfig& c, RunReport& rep) {
  if (c.manufactured) return run_manufactured(c, rep);
  run_path(c, rep);
}

inline void run_verify(const RunConfig& c, RunReport& rep) {
  auto run = run_path(c, rep);
  const auto hyp = certify_hypothesis(run.g, run.src.provenance, c.samples, c.seed);
  json hypj = {{"kappa", hyp.kappa}, {"certified", hyp.certified}, {"basis", hyp.basis}};
  json ests = json::array(), keys = json::array();
  for (std::size_t k = 0; k < run.path.states.size(); ++k) {
    const auto& st = run.path.states[k];
    run.estimates[k] = verify_estimates(st, run.g, hyp);
    ests.push_back(run.estimates[k].to_json());
    const auto ki = key_inequality_diagnostic(st, run.g, hyp);
    keys.push_back(ki.to_json());
    if (ki.asserted) rep.assertions.push_back(at_least("key_inequality_t" + fmt(st.t), ki.min_margin, -1e-8));
    if (hyp.certified && hyp.kappa > 0.0)
      rep.assertions.push_back(
          at_most("trace_bound_t" + fmt(st.t), run.estimates[k].trace_sup, 1.05 * run.estimates[k].trace_bound));
  }
  rep.results["hypothesis"] = hypj;
  rep.results["estimates"] = ests;
  rep.results["key_inequality"] = keys;
  if (!run.estimates.empty()) {
    std::vector<EstimateReport> tail;
    for (const auto& e : run.estimates)
      if (e.t >= c.uniformity_window[0] && e.t <= c.uniformity_window[1]) tail.push_back(e);
    const auto u = path_uniformity(tail);
    rep.results["uniformity"] = u.to_json();
    rep.results["uniformity"]["window"] = c.uniformity_window;
    rep.results["uniformity"]["states"] = tail.size();
    rep.results["uniformity_bound"] = c.uniformity_bound;
    rep.assertions.push_back(at_least("uniformity_window_states", static_cast<double>(tail.size()), 2.0));
    rep.assertions.push_back(at_most("uniform_sup_abs_u", u.sup_abs_u_ratio, c.uniformity_bound));
    rep.assertions.push_back(at_most("uniform_trace", u.trace_ratio, c.uniformity_bound));
    rep.assertions.push_back(at_most("uniform_equivalence", u.equivalence_ratio, c.uniformity_bound));

    const auto& last = run.path.states.back();
    RealField w = last.u;
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : w.values()) mx = std::max(mx, v);
    for (auto& v : w.values()) v -= mx + 1.0;
    const auto lg = log_gradient_check(w, run.g);
    rep.results["log_gradient"] = {{"lhs", lg.lhs}, {"rhs", lg.rhs}};
    rep.assertions.push_back(at_most("log_gradient", lg.lhs, lg.rhs * (1.0 + 1e-9)));

    json ex = json::array();
    double prev = std::numeric_limits<double>::infinity();
    bool mono = true;
    auto alphas = c.alphas;
    std::sort(alphas.begin(), alphas.end());
    for (double a : alphas) {
      const double v = exp_integral_diagnostic(last.u, a, run.g);
      ex.push_back({{"alpha", a}, {"integral", v}});
      mono = mono && v <= prev;
      prev = v;
    }
    rep.results["exp_integral"] = ex;
    rep.assertions.push_back({"exp_integral_monotone", mono, mono ? 1.0 : 0.0, 1.0, mono ? 0.0 : -1.0});
  }
}

// -- chern -------------------------------------------------------------------

inline void run_chern(const RunConfig& c, RunReport& rep) {
  const auto g = grid_metric(c);
  const int n = g.dim();
  const auto c1 = chern1_form(g);
  const double c1_int = integrate_against_omega(c1.components, g);
  json c1j = {{"c1_omega", c1_int}, {"closedness", c1.closedness}};
  rep.assertions.push_back(at_most("c1_closed", c1.closedness, 1e-8));
  if (n == 1) rep.assertions.push_back(at_most("torus_c1_integral", std::abs(c1_int), 1e-6));
  if (c.compare_potential) {
    const auto g2 = grid_metric(*c.chart, *c.compare_potential);
    const double other = integrate_against_omega(chern1_form(g2).components, g2);
    c1j["c1_omega_compare"] = other;
    rep.assertions.push_back(at_most("c1_deformation_invariance", std::abs(other - c1_int), 1e-6 * (1.0 + std::abs(c1_int))));
  }
  HermitianMatrixField neg = c1.components;
  neg *= -1.0;
  const BasicForm11 theta{neg, c1.closedness};
  const auto pos = is_transverse_positive(theta, true);
  json nef = json::array();
  const RealField zero(*c.chart, 0.0);
  for (double e : c.nef_eps) {
    const auto r = nef_witness_check(theta, e, zero, g);
    nef.push_back({{"eps", e}, {"ok", r.ok}, {"min_eigenvalue", r.min_eigenvalue}});
  }
  rep.results = {{"chart", chart_to_json(*c.chart)},
                 {"potential", c.potential.label},
                 {"c1_integrals", c1j},
                 {"minus_c1_positive", {{"strict", pos.ok}, {"min_eigenvalue", pos.min_eigenvalue}, {"point", pos.worst_point}}},
                 {"nef_certificates", nef}};
  if (n >= 2) {
    HermitianMatrixField deta = g.g;
    deta *= 2.0;
    const auto my = my_integral(deta);
    rep.results["my"] = my.to_json();
    rep.results["identities"] = {{"max_residual", my.max_identity_residual}};
    rep.assertions.push_back(at_most("my_identity", my.max_identity_residual, 1e-8));
    if (c.potential.label == "flat") rep.assertions.push_back(at_most("my_flat_zero", std::abs(my.total), 1e-10));
  }
}

// -- royden ------------------------------------------------------------------

inline void run_royden(const RunConfig& c, RunReport& rep) {
  json corp = json::array();
  for (int n : c.royden.dims) {
    const auto r = royden_corpus(n, c.seed, c.royden.options);
    corp.push_back(r.to_json());
    rep.assertions.push_back(at_least("royden_margin_n" + std::to_string(n), r.min_margin, -1e-9));
    rep.assertions.push_back(at_most("q_identity_n" + std::to_string(n), r.max_identity_residual, 1e-9));
  }
  rep.results = {{"corpora", corp}};
}

}  // namespace detail

/// Dispatches one validated config; never writes files.
inline RunReport run(const RunConfig& c) {
  RunReport rep;
  rep.command = to_string(c.command);
  rep.seed = c.seed;
  rep.config_hash = sha256_hex(c.canonical.dump());
  const auto t0 = std::chrono::steady_clock::now();
  switch (c.command) {
    case Command::curvature:
      if (c.potential.periodic()) detail::run_curvature_grid(c, rep);
      else detail::run_curvature_points(c, rep);
      break;
    case Command::solve: detail::run_solve(c, rep); break;
    case Command::verify: detail::run_verify(c, rep); break;
    case Command::chern: detail::run_chern(c, rep); break;
    case Command::royden: detail::run_royden(c, rep); break;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Writes to a sibling temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void persist(const RunReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_atomic(dir / "report.json", rep.to_json().dump(2) + "\n");
  write_atomic(dir / "conventions.json", convention_ledger().dump(2) + "\n");
  if (!rep.csv.empty()) write_atomic(dir / "path.csv", rep.csv);
  write_atomic(dir / "timings.json", json{{"command", rep.command}, {"seconds", rep.seconds}}.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

struct CompareResult {
  json diffs = json::array();
  bool empty() const { return diffs.empty(); }
};

namespace detail {

inline void compare_walk(const json& a, const json& b, const std::string& path, double tol, CompareResult& out) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    const double d = std::abs(x - y);
    if (d > tol * std::max({1.0, std::abs(x), std::abs(y)}) || (std::isnan(d) && !(std::isnan(x) && std::isnan(y))))
      out.diffs.push_back({{"path", path}, {"a", x}, {"b", y}, {"abs", d}, {"ratio", y != 0.0 ? json(x / y) : json(nullptr)}});
    return;
  }
  if (a.type() != b.type()) {
    out.diffs.push_back({{"path", path}, {"a", a}, {"b", b}, {"kind", "type"}});
    return;
  }
  if (a.is_object()) {
    std::set<std::string> keys;
    for (auto it = a.begin(); it != a.end(); ++it) keys.insert(it.key());
    for (auto it = b.begin(); it != b.end(); ++it) keys.insert(it.key());
    for (const auto& k : keys) {
      const std::string p = path + "/" + k;
      if (!a.contains(k) || !b.contains(k)) {
        out.diffs.push_back({{"path", p}, {"kind", a.contains(k) ? "missing_in_b" : "missing_in_a"}});
        continue;
      }
      compare_walk(a.at(k), b.at(k), p, tol, out);
    }
    return;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) {
      out.diffs.push_back({{"path", path}, {"kind", "length"}, {"a", a.size()}, {"b", b.size()}});
      return;
    }
    for (std::size_t k = 0; k < a.size(); ++k) compare_walk(a[k], b[k], path + "/" + std::to_string(k), tol, out);
    return;
  }
  if (a != b) out.diffs.push_back({{"path", path}, {"a", a}, {"b", b}});
}

}  // namespace detail

/// Field-wise diff of two reports; numbers differ when
/// |a - b| > tol * max(1, |a|, |b|).
inline CompareResult compare(const json& a, const json& b, double tol = 0.0) {
  if (!a.contains("schema_version") || !b.contains("schema_version") || a.at("schema_version") != b.at("schema_version"))
    throw ConfigError("reports have different schema versions");
  if (a.value("command", std::string()) != b.value("command", std::string()))
    throw ConfigError("reports come from different commands");
  CompareResult r;
  detail::compare_walk(a, b, "", tol, r);
  return r;
}

}  // namespace sasaki::cli

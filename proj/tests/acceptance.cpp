// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sasaki/basic_chern.hpp"
#include "sasaki/cli/run.hpp"
#include "sasaki/curvature_algebra.hpp"
#include "sasaki/ma_solver.hpp"
#include "support.hpp"

using namespace sasaki;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += " [violated: " + what + "]";
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::vector<double> halving(double t1, double tmin) {
  std::vector<double> ts;
  for (double t = t1; t >= tmin; t *= 0.5) ts.push_back(t);
  return ts;
}

FourierPotential reference_solution(int n) {
  FourierMode a, b;
  a.index.assign(2 * n, 0);
  a.index[0] = 1;
  a.cos_amp = 0.02;
  b.index.assign(2 * n, 0);
  b.index[1] = 1;
  if (n > 1) b.index[2] = 1;
  b.sin_amp = 0.015;
  return FourierPotential({a, b});
}

PathResult synthetic_path(const TransverseMetric& g, double c, const FourierPotential& psi = {}) {
  SyntheticSpec spec;
  spec.c = c;
  spec.psi = psi;
  NewtonOptions o;
  o.tol = 1e-11;
  return continuity_path(g, BackgroundSource::synthetic(g, spec), halving(1.0, 0x1p-10), o);
}

Outcome flat_path_exactness() {
  Outcome r;
  const auto t0 = Clock::now();
  const auto c = ChartModel::make(1, 32);
  const auto g = flat_metric(c);
  const auto src = BackgroundSource::synthetic(g, {});
  Schedule s;
  s.t1 = 1.0;
  const auto path = continuity_path(g, src, schedule_values(s, src, g));
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (const auto& st : path.states)
    for (double v : st.u.values()) worst = std::max(worst, std::abs(v - std::log(st.t)));
  r.require(path.completed && path.states.size() == 11, "path completes over 11 states");
  r.require(worst <= 1e-10, "sup |u_t - log t| <= 1e-10");
  r.require(secs < 5.0, "runtime < 5 s");
  r.note("max error " + sci(worst) + ", " + sci(secs) + " s");
  return r;
}

Outcome manufactured_convergence() {
  Outcome r;
  for (int n : {1, 2}) {
    std::vector<int> Ns{16, 32, 64};
    std::vector<double> errs;
    for (int N : Ns) {
      const auto t0 = Clock::now();
      const auto c = ChartModel::make(n, N);
      const auto us = reference_solution(n);
      double err = 0.0;
      {
        NewtonOptions o;
        o.tol = 1e-11;
        const auto res = newton_solve(manufactured_problem(c, us, 2.0 * CMatrix::Identity(n, n)), RealField(c, 0.0), o);
        err = testing_support::max_abs_diff(res.u.values(), us.sample(c).values());
      }
      const double secs = seconds_since(t0);
      errs.push_back(err);
      if (n == 2 && N == 64) {
        r.require(secs < 120.0, "n = 2, N = 64 runtime < 120 s");
        r.note("n=2 N=64 " + sci(secs) + " s");
      }
    }
    const double slope = convergence_slope(Ns, errs);
    r.require(slope >= 3.7, "slope >= 3.7 for n = " + std::to_string(n));
    r.note("n=" + std::to_string(n) + " errors " + sci(errs[0]) + "/" + sci(errs[1]) + "/" + sci(errs[2]) +
           " slope " + sci(slope));
  }
  return r;
}

Outcome volume_limit_check() {
  Outcome r;
  const auto c = ChartModel::make(1, 64);
  const auto g = flat_metric(c);
  // class volume of -rho = 0.6 g against the transverse volume, n = 1
  const double class_volume = 0.6 * c.volume();
  {
    const auto path = synthetic_path(g, -0.3);
    r.require(path.completed, "synthetic path completes");
    const auto v = volume_limit(path.states, g);
    const double rel = std::abs(v.limit - class_volume) / class_volume;
    r.require(rel <= 1e-4, "synthetic limit within 1e-4 relative");
    r.require(v.positive, "positivity flag raised");
    r.note("synthetic limit " + sci(v.limit) + " rel err " + sci(rel));
  }
  {
    const auto path = synthetic_path(g, -0.3, testing_support::random_potential(1, 2024, 0.01));
    r.require(path.completed, "perturbed synthetic path completes");
    const auto v = volume_limit(path.states, g);
    const double rel = std::abs(v.limit - class_volume) / class_volume;
    r.require(rel <= 1e-4, "ddbar-perturbed limit within 1e-4 relative");
    r.note("perturbed limit rel err " + sci(rel));
  }
  {
    const auto path = synthetic_path(g, 0.0);
    r.require(path.completed, "flat path completes");
    const auto v = volume_limit(path.states, g);
    r.require(std::abs(v.limit) <= 1e-8, "flat limit 0 within 1e-8");
    r.require(!v.positive, "flat positivity flag not raised");
    r.note("flat limit " + sci(v.limit));
  }
  return r;
}

Outcome estimate_suite() {
  Outcome r;
  const auto c = ChartModel::make(1, 64);
  const auto g = flat_metric(c);
  const auto path = synthetic_path(g, -0.3);
  r.require(path.completed, "path completes");
  std::vector<EstimateReport> all, tail;
  bool mp = true;
  for (const auto& st : path.states) {
    const auto e = verify_estimates(st, g, std::nullopt, 1e-8);
    mp = mp && e.max_principle_ok;
    all.push_back(e);
    if (st.t <= 0x1p-4) tail.push_back(e);
  }
  const auto u = path_uniformity(tail);
  const auto full = path_uniformity(all);
  r.require(tail.size() >= 2, "window holds at least two states");
  r.require(u.sup_abs_u_ratio <= 1.25, "sup|u| ratio <= 1.25");
  r.require(u.trace_ratio <= 1.25, "trace ratio <= 1.25");
  r.require(u.equivalence_ratio <= 1.25, "equivalence ratio <= 1.25");
  r.require(mp, "maximum principle at every state");
  r.note("t in [2^-10, 2^-4]: ratios " + sci(u.sup_abs_u_ratio) + "/" + sci(u.trace_ratio) + "/" +
         sci(u.equivalence_ratio) + " over " + std::to_string(tail.size()) + " states");
  r.note("whole path [2^-10, 1] for reference: " + sci(full.sup_abs_u_ratio) + "/" + sci(full.trace_ratio) + "/" +
         sci(full.equivalence_ratio));
  return r;
}

Outcome royden_corpus_check() {
  Outcome r;
  const auto t0 = Clock::now();
  int checks = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int n : {2, 3}) {
    const auto rep = royden_corpus(n, 7);
    checks += rep.checks;
    worst = std::min(worst, rep.min_margin);
  }
  const double secs = seconds_since(t0);
  r.require(checks == 10000, "10000 checks");
  r.require(worst >= -1e-9, "margin >= -1e-9");
  r.require(secs < 60.0, "runtime < 60 s");
  r.note(std::to_string(checks) + " checks, min margin " + sci(worst) + ", " + sci(secs) + " s");
  return r;
}

Outcome q_identity_check_corpus() {
  Outcome r;
  double worst = 0.0;
  int count = 0;
  for (int n : {2, 3})
    for (std::uint64_t k = 0; k < 1000; ++k) {
      const auto q = q_identity_check(random_curvature(n, 0xACCE55ULL + 1000 * n + k));
      worst = std::max(worst, q.residual / (1.0 + std::abs(q.lhs)));
      ++count;
    }
  r.require(worst <= 1e-9, "|lhs - rhs| <= 1e-9 (1 + |lhs|)");
  r.note(std::to_string(count) + " tensors, worst scaled residual " + sci(worst));
  return r;
}

Outcome miyaoka_yau_machinery() {
  Outcome r;
  {
    const auto c = ChartModel::make(2, 16);
    const auto g = flat_metric(c);
    SyntheticSpec spec;
    spec.c = -0.3;
    spec.psi = testing_support::random_potential(2, 17, 0.005);
    NewtonOptions o;
    o.tol = 1e-11;
    const auto path = continuity_path(g, BackgroundSource::synthetic(g, spec), halving(1.0, 0x1p-4), o);
    r.require(path.completed, "grid path completes");
    double worst = 0.0;
    for (const auto& st : path.states) worst = std::max(worst, my_integral(st.sigma).max_identity_residual);
    r.require(worst <= 1e-8, "grid identity residual <= 1e-8");
    r.note("grid states " + std::to_string(path.states.size()) + " residual " + sci(worst));
    const auto flat = my_integral(deta_form(g).components);
    r.require(std::abs(flat.total) <= 1e-10, "flat integral 0 within 1e-10");
    r.note("flat total " + sci(flat.total));
  }
  {
    Rng rng(606);
    double worst = 0.0;
    for (int n : {2, 3})
      for (std::uint64_t k = 0; k < 500; ++k) {
        const auto A = random_curvature(n, 0xBEEFULL + 1000 * n + k);
        const auto t = miyaoka_yau_terms(A.R, random_positive_matrix(n, rng));
        worst = std::max(worst, t.residual / (1.0 + std::abs(t.reduction)));
      }
    r.require(worst <= 1e-8, "algebraic identity residual <= 1e-8");
    r.note("algebraic residual " + sci(worst));
  }
  {
    double lowest = std::numeric_limits<double>::infinity(), closure = 0.0, hsc = -1.0;
    int count = 0;
    for (int n : {2, 3})
      for (std::uint64_t k = 0; k < 100; ++k) {
        const auto A = einstein_type_curvature(n, 0xE1ULL + 1000 * n + k);
        hsc = std::max(hsc, hsc_sup(A, 4000, kCertifySeed));
        closure = std::max(closure, (A.ricci() + A.h).cwiseAbs().maxCoeff());
        lowest = std::min(lowest, miyaoka_yau_terms(A.R, A.h).reduction);
        ++count;
      }
    r.require(hsc <= 0.0, "instances have nonpositive sampled HSC");
    r.require(closure <= 1e-10, "rho + sigma = 0 imposed");
    r.require(lowest >= -1e-8, "endpoint integrand >= -1e-8");
    r.note(std::to_string(count) + " endpoint instances, min " + sci(lowest));
  }
  return r;
}

Outcome log_gradient_corpus() {
  Outcome r;
  const auto c = ChartModel::make(1, 64);
  Rng rng(5252);
  int held = 0;
  double tightest = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100; ++k) {
    const auto f = testing_support::random_potential(1, rng.next_seed(), rng.uniform(0.05, 0.5), 5).sample(c);
    double mx = -1e300;
    for (double v : f.values()) mx = std::max(mx, v);
    const double gap = rng.uniform(0.02, 2.0);
    RealField u(c);
    for (std::size_t p = 0; p < u.size(); ++p) u[p] = f[p] - mx - gap;
    const auto g = k % 2 == 0 ? flat_metric(c)
                              : metric_from_potential(testing_support::random_kahler_potential(1, rng.next_seed()).sample(c),
                                                      HermitianMatrixField::identity(c));
    const auto res = log_gradient_check(u, g, 1e-9);
    if (res.ok) ++held;
    if (res.rhs > 0) tightest = std::min(tightest, res.rhs / std::max(res.lhs, 1e-300));
  }
  r.require(held == 100, "inequality holds in all 100 cases");
  r.note(std::to_string(held) + "/100 hold, tightest rhs/lhs " + sci(tightest));
  return r;
}

/// g_{i jbar} = f' delta_ij + f'' zbar_i z_j for h = f(|z|^2).
CMatrix radial_metric(const CVector& z, int sign) {
  const int n = static_cast<int>(z.size());
  const double s = z.squaredNorm();
  const double f1 = 1.0 / (1.0 + sign * s), f2 = -sign / ((1.0 + sign * s) * (1.0 + sign * s));
  CMatrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = (i == j ? f1 : 0.0) + f2 * std::conj(z(i)) * z(j);
  return g;
}

/// One variable: R = -(G' + s G'') + s G'^2 / G with G = (1 + sign s)^{-2}.
double radial_curvature_1d(double s, int sign) {
  const double a = 1.0 + sign * s;
  const double G = 1.0 / (a * a), G1 = -2.0 * sign / (a * a * a), G2 = 6.0 / (a * a * a * a);
  return -(G1 + s * G2) + s * G1 * G1 / G;
}

Outcome curvature_oracles() {
  Outcome r;
  Rng rng(909);
  for (auto kind : {RadialPotential::Kind::fubini_study, RadialPotential::Kind::poincare}) {
    const RadialPotential pot(kind);
    const int sign = kind == RadialPotential::Kind::fubini_study ? 1 : -1;
    const double K = 2.0 * sign;
    double err_g = 0, err_R = 0, err_ric = 0, err_hsc = 0, sign_min = 1e300;
    for (int n : {1, 2, 3})
      for (int k = 0; k < 100; ++k) {
        CVector z(n);
        for (int i = 0; i < n; ++i) z(i) = rng.complex_normal();
        z *= 0.5 * std::pow(rng.uniform(), 1.0 / (2 * n)) / z.norm();
        const auto pc = pointwise_curvature(pot, z);
        const CMatrix g = radial_metric(z, sign);
        err_g = std::max(err_g, (pc.g - g).cwiseAbs().maxCoeff());
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int a = 0; a < n; ++a)
              for (int b = 0; b < n; ++b) {
                const cplx want = 0.5 * K * (g(i, j) * g(a, b) + g(i, b) * g(a, j));
                err_R = std::max(err_R, std::abs(pc.R[tensor_index(n, i, j, a, b)] - want));
              }
        if (n == 1) err_R = std::max(err_R, std::abs(pc.R[0].real() - radial_curvature_1d(z.squaredNorm(), sign)));
        const CMatrix ric = 0.5 * K * (n + 1) * g;
        err_ric = std::max({err_ric, (pc.ricci - ric).cwiseAbs().maxCoeff(), (pc.ricci_trace - ric).cwiseAbs().maxCoeff()});
        CVector U(n);
        for (int i = 0; i < n; ++i) U(i) = rng.complex_normal();
        const double h = pc.hsc(U);
        err_hsc = std::max(err_hsc, std::abs(h - K));
        sign_min = std::min(sign_min, sign * h);
      }
    const std::string name = pot.name();
    r.require(std::max({err_g, err_R, err_ric, err_hsc}) <= 1e-6, name + " values within 1e-6");
    r.require(sign_min > 0.0, name + " strict sign");
    r.note(name + " 300 points: metric " + sci(err_g) + " R " + sci(err_R) + " Ric " + sci(err_ric) + " K " +
           sci(err_hsc));
  }
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  Outcome r;
  const auto root = std::filesystem::temp_directory_path() / "sasaki_acceptance_determinism";
  std::filesystem::remove_all(root);
  int configs = 0;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(SASAKI_CONFIG_DIR)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto cfg = cli::load_config(f.string());
    const auto name = f.stem().string();
    for (const char* k : {"a", "b"}) cli::persist(cli::run(cfg), root / name / k);
    const bool same = slurp(root / name / "a" / "report.json") == slurp(root / name / "b" / "report.json");
    r.require(same, name + " reports identical");
    ++configs;
  }
  std::filesystem::remove_all(root);
  r.note(std::to_string(configs) + " configs run twice, report.json byte-compared");
  return r;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"flat-path exactness", flat_path_exactness},
      {"manufactured-solution convergence", manufactured_convergence},
      {"volume limit", volume_limit_check},
      {"estimate suite", estimate_suite},
      {"Royden corpus", royden_corpus_check},
      {"Q identity", q_identity_check_corpus},
      {"Miyaoka-Yau machinery", miyaoka_yau_machinery},
      {"log-gradient corpus", log_gradient_corpus},
      {"curvature oracles", curvature_oracles},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.ok) ++failed;
    std::printf("%s %zu %s: %s\n", o.ok ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

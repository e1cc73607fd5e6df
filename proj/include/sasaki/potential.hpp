#pragma once

// Kähler potentials: periodic Fourier sums sampled on grids, and radial
// closed-form potentials f(|z|^2) evaluated pointwise with analytic jets.

#include <nlohmann/json.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sasaki/errors.hpp"
#include "sasaki/grid.hpp"
#include "sasaki/small_matrix.hpp"

namespace sasaki {

/// a cos(theta) + b sin(theta), theta = 2 pi sum_a k_a x_a / P_a.
struct FourierMode {
  std::vector<int> index;  // one wavenumber per real axis
  double cos_amp = 0.0;
  double sin_amp = 0.0;
};

class FourierPotential {
 public:
  FourierPotential() = default;
  explicit FourierPotential(std::vector<FourierMode> modes) : modes_(std::move(modes)) {}

  const std::vector<FourierMode>& modes() const { return modes_; }
  bool empty() const { return modes_.empty(); }

  void check(const ChartModel& chart) const {
    for (const auto& m : modes_)
      if (static_cast<int>(m.index.size()) != chart.axes())
        throw ConfigError("Fourier mode index must have one entry per real axis");
  }

  double value(const ChartModel& chart, const std::vector<double>& x) const {
    double v = 0.0;
    for (const auto& m : modes_) {
      const double th = phase(chart, m, x);
      v += m.cos_amp * std::cos(th) + m.sin_amp * std::sin(th);
    }
    return v;
  }

  /// Analytic d_i d_jbar at x.
  CMatrix hessian(const ChartModel& chart, const std::vector<double>& x) const {
    const int n = chart.n;
    CMatrix h = CMatrix::Zero(n, n);
    for (const auto& m : modes_) {
      const double th = phase(chart, m, x);
      // a cos + b sin = c e^{i th} + conj(c) e^{-i th}, c = (a - i b) / 2
      const cplx c = 0.5 * cplx(m.cos_amp, -m.sin_amp) * std::polar(1.0, th);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const cplx f = holo_factor(chart, m, i) * anti_factor(chart, m, j);
          const cplx fc = std::conj(holo_factor(chart, m, j) * anti_factor(chart, m, i));
          h(i, j) += c * f + std::conj(c) * fc;
        }
    }
    return h;
  }

  RealField sample(const ChartModel& chart) const {
    check(chart);
    RealField f(chart);
    for (std::size_t p = 0; p < f.size(); ++p) f[p] = value(chart, chart.coordinates(p));
    return f;
  }

  HermitianMatrixField sample_hessian(const ChartModel& chart) const {
    check(chart);
    HermitianMatrixField h(chart);
    for (std::size_t p = 0; p < chart.points(); ++p) h.set(p, hessian(chart, chart.coordinates(p)));
    return h;
  }

 private:
  static double omega(const ChartModel& chart, const FourierMode& m, int axis) {
    return 2.0 * std::numbers::pi * m.index[axis] / chart.periods[axis];
  }
  static double phase(const ChartModel& chart, const FourierMode& m, const std::vector<double>& x) {
    double th = 0.0;
    for (int a = 0; a < chart.axes(); ++a) th += omega(chart, m, a) * x[a];
    return th;
  }
  // d_i e^{i th} = (i w_x + w_y) / 2 e^{i th}
  static cplx holo_factor(const ChartModel& chart, const FourierMode& m, int i) {
    return 0.5 * cplx(omega(chart, m, 2 * i + 1), omega(chart, m, 2 * i));
  }
  // d_ibar e^{i th} = (i w_x - w_y) / 2 e^{i th}
  static cplx anti_factor(const ChartModel& chart, const FourierMode& m, int i) {
    return 0.5 * cplx(-omega(chart, m, 2 * i + 1), omega(chart, m, 2 * i));
  }

  std::vector<FourierMode> modes_;
};

/// Value, Kähler metric and its first two derivatives at one point.
struct MetricJet {
  int n = 0;
  CMatrix g;                  // g_{i jbar}
  std::vector<CMatrix> dg;    // dg[k](i, j) = d_k g_{i jbar}
  std::vector<CMatrix> ddg;   // ddg[k * n + l](i, j) = d_k d_lbar g_{i jbar}
};

/// h = f(s), s = |z|^2, with f' .. f'''' supplied by closed forms.
class RadialPotential {
 public:
  enum class Kind { fubini_study, poincare };

  explicit RadialPotential(Kind kind) : kind_(kind) {}

  Kind kind() const { return kind_; }
  std::string name() const { return kind_ == Kind::fubini_study ? "fubini-study" : "poincare"; }

  /// Constant holomorphic sectional curvature of the metric in the
  /// complexified normalization.
  double constant_hsc() const { return kind_ == Kind::fubini_study ? 2.0 : -2.0; }

  double value(const CVector& z) const {
    const double s = z.squaredNorm();
    check_domain(s);
    return kind_ == Kind::fubini_study ? std::log1p(s) : -std::log1p(-s);
  }

  /// d^k f / ds^k for k = 1..4.
  double derivative(int k, double s) const {
    static constexpr double fact[] = {1.0, 1.0, 1.0, 2.0, 6.0};
    if (kind_ == Kind::fubini_study) {
      const double sign = (k % 2 == 1) ? 1.0 : -1.0;
      return sign * fact[k] / std::pow(1.0 + s, k);
    }
    return fact[k] / std::pow(1.0 - s, k);
  }

  MetricJet jet(const CVector& z) const {
    const int n = static_cast<int>(z.size());
    const double s = z.squaredNorm();
    check_domain(s);
    const double f1 = derivative(1, s), f2 = derivative(2, s), f3 = derivative(3, s), f4 = derivative(4, s);
    auto zb = [&](int i) { return std::conj(z(i)); };
    auto delta = [](int a, int b) { return a == b ? 1.0 : 0.0; };
    MetricJet J;
    J.n = n;
    J.g = CMatrix(n, n);
    J.dg.assign(n, CMatrix(n, n));
    J.ddg.assign(n * n, CMatrix(n, n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        J.g(i, j) = f1 * delta(i, j) + f2 * zb(i) * z(j);
        for (int k = 0; k < n; ++k) {
          J.dg[k](i, j) = f3 * zb(i) * zb(k) * z(j) + f2 * (zb(i) * delta(j, k) + zb(k) * delta(i, j));
          for (int l = 0; l < n; ++l) {
            J.ddg[k * n + l](i, j) = f4 * z(l) * zb(i) * zb(k) * z(j) +
                                     f3 * (delta(i, l) * zb(k) * z(j) + delta(k, l) * zb(i) * z(j)) +
                                     f3 * z(l) * (zb(i) * delta(j, k) + zb(k) * delta(i, j)) +
                                     f2 * (delta(i, l) * delta(j, k) + delta(k, l) * delta(i, j));
          }
        }
      }
    return J;
  }

  /// log det g at z.
  double logdet(const CVector& z) const {
    const double s = z.squaredNorm();
    check_domain(s);
    const int n = static_cast<int>(z.size());
    // g = f' I + f'' zbar z^T ; det = f'^{n-1} (f' + f'' s)
    const double f1 = derivative(1, s), f2 = derivative(2, s);
    return (n - 1) * std::log(f1) + std::log(f1 + f2 * s);
  }

 private:
  void check_domain(double s) const {
    if (kind_ == Kind::poincare && !(s < 1.0)) throw DomainError("poincare potential needs |z| < 1");
  }
  Kind kind_;
};

/// A potential as configured: a periodic Fourier sum or a radial closed form.
struct Potential {
  std::string label = "flat";
  FourierPotential fourier;
  std::optional<RadialPotential> radial;

  bool periodic() const { return !radial.has_value(); }
};

inline FourierPotential fourier_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("fourier potential must be an array of modes");
  std::vector<FourierMode> modes;
  for (const auto& m : j) {
    if (!m.is_object() || !m.contains("index")) throw ConfigError("fourier mode requires an index");
    for (auto it = m.begin(); it != m.end(); ++it)
      if (it.key() != "index" && it.key() != "cos" && it.key() != "sin")
        throw ConfigError("unknown fourier mode key '" + it.key() + "'");
    FourierMode fm;
    try {
      fm.index = m.at("index").get<std::vector<int>>();
      fm.cos_amp = m.value("cos", 0.0);
      fm.sin_amp = m.value("sin", 0.0);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed fourier mode: ") + e.what());
    }
    modes.push_back(std::move(fm));
  }
  return FourierPotential(std::move(modes));
}

/// Presets: "flat", "cosine:eps,k" (eps cos(2 pi k x_1 / P_1)), "fubini-study",
/// "poincare"; or {"fourier": [{"index": [...], "cos": a, "sin": b}, ...]}.
inline Potential parse_potential(const nlohmann::json& j, int n) {
  Potential p;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    p.label = s;
    if (s == "flat") return p;
    if (s == "fubini-study") {
      p.radial = RadialPotential(RadialPotential::Kind::fubini_study);
      return p;
    }
    if (s == "poincare") {
      p.radial = RadialPotential(RadialPotential::Kind::poincare);
      return p;
    }
    if (s.rfind("cosine:", 0) == 0) {
      const auto args = s.substr(7);
      const auto comma = args.find(',');
      if (comma == std::string::npos) throw ConfigError("cosine preset needs 'cosine:eps,k'");
      double eps = 0.0;
      int k = 0;
      try {
        std::size_t used = 0;
        eps = std::stod(args.substr(0, comma), &used);
        if (used != comma) throw ConfigError("bad cosine amplitude");
        std::size_t used_k = 0;
        k = std::stoi(args.substr(comma + 1), &used_k);
        if (used_k != args.size() - comma - 1) throw ConfigError("bad cosine wavenumber");
      } catch (const std::logic_error&) {
        throw ConfigError("cannot parse cosine preset '" + s + "'");
      }
      FourierMode m;
      m.index.assign(2 * n, 0);
      m.index[0] = k;
      m.cos_amp = eps;
      p.fourier = FourierPotential({m});
      return p;
    }
    throw ConfigError("unknown potential preset '" + s + "'");
  }
  if (j.is_object() && j.contains("fourier") && j.size() == 1) {
    p.label = "fourier";
    p.fourier = fourier_from_json(j.at("fourier"));
    for (const auto& m : p.fourier.modes())
      if (static_cast<int>(m.index.size()) != 2 * n)
        throw ConfigError("Fourier mode index must have one entry per real axis");
    return p;
  }
  throw ConfigError("potential must be a preset string or {\"fourier\": [...]}");
}

}  // namespace sasaki

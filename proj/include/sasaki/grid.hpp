#pragma once

// Periodic transverse grids, basic fields and complex differentiation.
//
// A chart of complex dimension n is sampled on N points per real axis. The
// complex coordinate z^i = x_i + sqrt(-1) y_i contributes real axes 2i (x_i)
// and 2i+1 (y_i). Fields are stored row-major over the real axes: axis 0 is
// the slowest index and axis 2n-1 the fastest ("row-major-real-axes").
// The Reeb circle is never sampled; every field is basic by construction and
// the Reeb length only enters integrals as a scalar factor.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sasaki/errors.hpp"
#include "sasaki/small_matrix.hpp"

namespace sasaki {

enum class DerivativeScheme { fd4, spectral };

inline std::string to_string(DerivativeScheme s) { return s == DerivativeScheme::fd4 ? "fd4" : "spectral"; }

inline DerivativeScheme parse_scheme(const std::string& s) {
  if (s == "fd4") return DerivativeScheme::fd4;
  if (s == "spectral") return DerivativeScheme::spectral;
  throw ConfigError("unknown derivative scheme '" + s + "'");
}

struct ChartModel {
  int n = 1;
  int N = 16;
  std::vector<double> periods;  // one per real axis
  double reeb_length = 1.0;
  DerivativeScheme scheme = DerivativeScheme::fd4;

  static ChartModel make(int n, int N, DerivativeScheme scheme = DerivativeScheme::fd4) {
    ChartModel c;
    c.n = n;
    c.N = N;
    c.periods.assign(2 * n, 1.0);
    c.scheme = scheme;
    c.validate();
    return c;
  }

  void validate() const {
    if (n < 1 || n > kMaxDim) throw DomainError("chart dimension n must be in [1, 3]");
    if (N < 8 || N % 2 != 0) throw DomainError("grid size N must be even and >= 8");
    if (static_cast<int>(periods.size()) != 2 * n)
      throw DomainError("chart needs one period per real axis");
    for (double p : periods)
      if (!(p > 0.0)) throw DomainError("periods must be positive");
    if (!(reeb_length > 0.0)) throw DomainError("reeb_length must be positive");
  }

  int axes() const { return 2 * n; }

  std::size_t points() const {
    std::size_t p = 1;
    for (int a = 0; a < axes(); ++a) p *= static_cast<std::size_t>(N);
    return p;
  }

  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int a = axes() - 1; a > axis; --a) s *= static_cast<std::size_t>(N);
    return s;
  }

  double spacing(int axis) const { return periods[axis] / N; }

  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < axes(); ++a) v *= spacing(a);
    return v;
  }

  /// Lebesgue volume of the transverse torus times the Reeb length.
  double volume() const {
    double v = reeb_length;
    for (double p : periods) v *= p;
    return v;
  }

  int index_along(std::size_t point, int axis) const {
    return static_cast<int>((point / stride(axis)) % static_cast<std::size_t>(N));
  }

  double coordinate(std::size_t point, int axis) const { return index_along(point, axis) * spacing(axis); }

  std::vector<double> coordinates(std::size_t point) const {
    std::vector<double> x(axes());
    for (int a = 0; a < axes(); ++a) x[a] = coordinate(point, a);
    return x;
  }

  bool operator==(const ChartModel&) const = default;
};

inline void require_same_chart(const ChartModel& a, const ChartModel& b) {
  if (!(a == b)) throw DomainError("fields live on different charts");
}

template <class T>
class GridField {
 public:
  GridField() = default;
  explicit GridField(ChartModel chart, T fill = T{})
      : chart_(std::move(chart)), values_(chart_.points(), fill) {}
  GridField(ChartModel chart, std::vector<T> values) : chart_(std::move(chart)), values_(std::move(values)) {
    if (values_.size() != chart_.points()) throw DomainError("field size does not match chart");
  }

  const ChartModel& chart() const { return chart_; }
  std::size_t size() const { return values_.size(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  T& operator[](std::size_t p) { return values_[p]; }
  const T& operator[](std::size_t p) const { return values_[p]; }

  GridField& operator+=(const GridField& o) {
    require_same_chart(chart_, o.chart_);
    for (std::size_t p = 0; p < values_.size(); ++p) values_[p] += o.values_[p];
    return *this;
  }
  GridField& operator-=(const GridField& o) {
    require_same_chart(chart_, o.chart_);
    for (std::size_t p = 0; p < values_.size(); ++p) values_[p] -= o.values_[p];
    return *this;
  }
  GridField& operator*=(T s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  friend GridField operator+(GridField a, const GridField& b) { return a += b; }
  friend GridField operator-(GridField a, const GridField& b) { return a -= b; }
  friend GridField operator*(T s, GridField a) { return a *= s; }

  bool operator==(const GridField&) const = default;

 private:
  ChartModel chart_;
  std::vector<T> values_;
};

using RealField = GridField<double>;
using ComplexField = GridField<cplx>;

template <class F>
RealField sample(const ChartModel& chart, F&& f) {
  RealField out(chart);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = f(chart.coordinates(p));
  return out;
}

/// n x n Hermitian matrix per grid point, stored packed and component-major
/// (component c of point p at c * points + p). Hermitian by construction.
class HermitianMatrixField {
 public:
  HermitianMatrixField() = default;
  explicit HermitianMatrixField(ChartModel chart)
      : chart_(std::move(chart)), n_(chart_.n), data_(packed_size(n_) * chart_.points(), 0.0) {}

  static HermitianMatrixField uniform(const ChartModel& chart, const CMatrix& m) {
    HermitianMatrixField f(chart);
    if (m.rows() != chart.n || m.cols() != chart.n) throw DomainError("matrix size does not match chart");
    std::array<double, 9> packed{};
    pack_hermitian(m, packed.data());
    for (int c = 0; c < f.components(); ++c) std::fill_n(f.component(c), f.points(), packed[c]);
    return f;
  }

  static HermitianMatrixField identity(const ChartModel& chart, double scale = 1.0) {
    return uniform(chart, CMatrix::Identity(chart.n, chart.n) * scale);
  }

  const ChartModel& chart() const { return chart_; }
  int dim() const { return n_; }
  int components() const { return packed_size(n_); }
  std::size_t points() const { return chart_.points(); }

  double* component(int c) { return data_.data() + static_cast<std::size_t>(c) * points(); }
  const double* component(int c) const { return data_.data() + static_cast<std::size_t>(c) * points(); }
  double* diag(int i) { return component(i); }
  const double* diag(int i) const { return component(i); }
  double* re(int i, int j) { return component(packed_pair_offset(i, j, n_)); }
  double* im(int i, int j) { return component(packed_pair_offset(i, j, n_) + 1); }

  void gather(std::size_t p, double* packed) const {
    const std::size_t P = points();
    for (int c = 0; c < components(); ++c) packed[c] = data_[c * P + p];
  }
  void scatter(std::size_t p, const double* packed) {
    const std::size_t P = points();
    for (int c = 0; c < components(); ++c) data_[c * P + p] = packed[c];
  }

  CMatrix at(std::size_t p) const {
    std::array<double, 9> packed{};
    gather(p, packed.data());
    return unpack_hermitian(packed.data(), n_);
  }
  void set(std::size_t p, const CMatrix& m) {
    std::array<double, 9> packed{};
    pack_hermitian(m, packed.data());
    scatter(p, packed.data());
  }
  cplx entry(int i, int j, std::size_t p) const {
    std::array<double, 9> packed{};
    gather(p, packed.data());
    return packed_entry(packed.data(), i, j, n_);
  }

  std::span<double> raw() { return data_; }
  std::span<const double> raw() const { return data_; }

  HermitianMatrixField& operator+=(const HermitianMatrixField& o) {
    require_same_chart(chart_, o.chart_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  HermitianMatrixField& operator-=(const HermitianMatrixField& o) {
    require_same_chart(chart_, o.chart_);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  HermitianMatrixField& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend HermitianMatrixField operator+(HermitianMatrixField a, const HermitianMatrixField& b) { return a += b; }
  friend HermitianMatrixField operator-(HermitianMatrixField a, const HermitianMatrixField& b) { return a -= b; }
  friend HermitianMatrixField operator*(double s, HermitianMatrixField a) { return a *= s; }

  bool operator==(const HermitianMatrixField&) const = default;

 private:
  ChartModel chart_;
  int n_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Summation
// ---------------------------------------------------------------------------

/// Pairwise summation of f(i) over [begin, end) in a fixed tree order.
template <class F>
auto pairwise_sum(std::size_t begin, std::size_t end, F&& f) -> decltype(f(begin)) {
  using R = decltype(f(begin));
  if (end - begin <= 128) {
    R s{};
    for (std::size_t i = begin; i < end; ++i) s += f(i);
    return s;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  return pairwise_sum(begin, mid, f) + pairwise_sum(mid, end, f);
}

template <class T>
T pairwise_sum(std::span<const T> v) {
  return pairwise_sum(0, v.size(), [&](std::size_t i) { return v[i]; });
}

/// Order-independent exact summation (fixed-point superaccumulator over the
/// full double range). The rounded result depends only on the exact sum, so
/// permuting the inputs (e.g. translating a periodic field) is bit-neutral.
class ExactAccumulator {
 public:
  void add(double x) {
    if (x == 0.0) return;
    if (!std::isfinite(x)) {
      nonfinite_ += x;
      return;
    }
    int e = 0;
    const double m = std::frexp(x, &e);
    const auto mi = static_cast<std::int64_t>(std::ldexp(m, 53));
    const int shift = e - 53 + kOffset;
    const int k = shift / 32;
    const int r = shift % 32;
    __int128 v = static_cast<__int128>(mi) << r;
    for (int q = 0; q < 3; ++q) {
      const __int128 low = v & 0xffffffff;
      digits_[k + q] += static_cast<std::int64_t>(low);
      v = (v - low) >> 32;
    }
    digits_[k + 3] += static_cast<std::int64_t>(v);
    if (++pending_ == (1u << 29)) normalize();
  }

  double value() {
    if (nonfinite_ != 0.0 || std::isnan(nonfinite_)) return nonfinite_;
    normalize();
    double sign = 1.0;
    if (digits_[kDigits - 1] < 0) {
      sign = -1.0;
      for (auto& d : digits_) d = -d;
      normalize();
    }
    double s = 0.0;
    for (int k = kDigits - 1; k >= 0; --k)
      if (digits_[k] != 0) s += std::ldexp(static_cast<double>(digits_[k]), 32 * k - kOffset);
    return sign * s;
  }

 private:
  static constexpr int kOffset = 1152;
  static constexpr int kDigits = 72;

  void normalize() {
    for (int k = 0; k + 1 < kDigits; ++k) {
      const std::int64_t c = digits_[k] >> 32;
      digits_[k] -= c * (std::int64_t{1} << 32);
      digits_[k + 1] += c;
    }
    pending_ = 0;
  }

  std::array<std::int64_t, kDigits> digits_{};
  std::uint32_t pending_ = 0;
  double nonfinite_ = 0.0;
};

inline double exact_sum(std::span<const double> v) {
  ExactAccumulator acc;
  for (double x : v) acc.add(x);
  return acc.value();
}

inline double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// ---------------------------------------------------------------------------
// Stencils
// ---------------------------------------------------------------------------

/// Periodic (circulant) first-derivative stencil along one real axis.
/// Taps come in antisymmetric pairs: offsets {k, -k}, weights {w, -w}, and
/// kernels evaluate w (f[i + k] - f[i - k]) so constants map to exactly 0.
struct AxisStencil {
  int axis = 0;
  std::vector<int> offsets;
  std::vector<double> weights;
  std::vector<int> wrap;  // wrap[i * taps + k] = (i + offsets[k]) mod N

  std::size_t taps() const { return offsets.size(); }

  /// Weight of the composed stencil (this o other) at offset 0.
  double center_of_square() const {
    double c = 0.0;
    for (std::size_t k = 0; k < taps(); ++k)
      for (std::size_t l = 0; l < taps(); ++l)
        if (offsets[k] + offsets[l] == 0) c += weights[k] * weights[l];
    return c;
  }

  /// Fourier symbol sum_k w_k exp(i theta k), theta = 2 pi m / N.
  cplx symbol(int m, int N) const {
    cplx s = 0.0;
    const double theta = 2.0 * std::numbers::pi * m / N;
    for (std::size_t k = 0; k < taps(); ++k) s += weights[k] * std::polar(1.0, theta * offsets[k]);
    return s;
  }
};

inline AxisStencil first_derivative_stencil(const ChartModel& chart, int axis) {
  AxisStencil st;
  st.axis = axis;
  const double h = chart.spacing(axis);
  const int N = chart.N;
  if (chart.scheme == DerivativeScheme::fd4) {
    st.offsets = {1, -1, 2, -2};
    st.weights = {8.0 / (12.0 * h), -8.0 / (12.0 * h), -1.0 / (12.0 * h), 1.0 / (12.0 * h)};
  } else {
    // Trigonometric interpolant derivative; the m = N/2 tap is exactly zero.
    const double scale = 2.0 * std::numbers::pi / chart.periods[axis];
    for (int m = 1; 2 * m < N; ++m) {
      const double sign = (m % 2 == 0) ? 1.0 : -1.0;
      const double w = -0.5 * scale * sign / std::tan(std::numbers::pi * m / N);
      st.offsets.insert(st.offsets.end(), {m, -m});
      st.weights.insert(st.weights.end(), {w, -w});
    }
  }
  st.wrap.resize(static_cast<std::size_t>(N) * st.taps());
  for (int i = 0; i < N; ++i)
    for (std::size_t k = 0; k < st.taps(); ++k) st.wrap[i * st.taps() + k] = ((i + st.offsets[k]) % N + N) % N;
  return st;
}

namespace detail {

template <int Taps, class T, class Sink>
void sweep_fixed(const ChartModel& chart, const AxisStencil& st, const T* in, Sink& sink) {
  const std::size_t s = chart.stride(st.axis);
  const std::size_t N = static_cast<std::size_t>(chart.N);
  const std::size_t outer = chart.points() / (N * s);
  double w[Taps];
  for (int k = 0; k < Taps; ++k) w[k] = st.weights[k];
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(outer); ++o) {
    const T* row = in + static_cast<std::size_t>(o) * N * s;
    const std::size_t base0 = static_cast<std::size_t>(o) * N * s;
    for (std::size_t i = 0; i < N; ++i) {
      const T* src[Taps];
      for (int k = 0; k < Taps; ++k) src[k] = row + static_cast<std::size_t>(st.wrap[i * Taps + k]) * s;
      const std::size_t base = base0 + i * s;
      for (std::size_t j = 0; j < s; ++j) {
        T v = w[0] * (src[0][j] - src[1][j]);
        for (int k = 2; k < Taps; k += 2) v += w[k] * (src[k][j] - src[k + 1][j]);
        sink(base + j, v);
      }
    }
  }
}

}  // namespace detail

/// Applies a circulant stencil along its axis; sink(p, value) receives every
/// output point exactly once.
template <class T, class Sink>
void sweep_axis(const ChartModel& chart, const AxisStencil& st, const T* in, Sink&& sink) {
  if (st.taps() == 4) return detail::sweep_fixed<4>(chart, st, in, sink);
  const std::size_t s = chart.stride(st.axis);
  const std::size_t N = static_cast<std::size_t>(chart.N);
  const std::size_t outer = chart.points() / (N * s);
  const std::size_t taps = st.taps();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(outer); ++o) {
    std::vector<const T*> src(taps);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t k = 0; k < taps; ++k) src[k] = in + (o * N + st.wrap[i * taps + k]) * s;
      const std::size_t base = (o * N + i) * s;
      for (std::size_t j = 0; j < s; ++j) {
        T v{};
        for (std::size_t k = 0; k < taps; k += 2) v += st.weights[k] * (src[k][j] - src[k + 1][j]);
        sink(base + j, v);
      }
    }
  }
}

template <class T>
GridField<T> partial_derivative(const GridField<T>& f, int axis) {
  const auto& chart = f.chart();
  if (axis < 0 || axis >= chart.axes()) throw DomainError("axis out of range");
  GridField<T> out(chart);
  const auto st = first_derivative_stencil(chart, axis);
  T* o = out.data();
  sweep_axis(chart, st, f.data(), [o](std::size_t p, T v) { o[p] = v; });
  return out;
}

/// d f / d z^i (conjugate = false) or d f / d zbar^i, with
/// d_i = (d_{x_i} - sqrt(-1) d_{y_i}) / 2. Complex index i is 0-based.
template <class T>
ComplexField wirtinger_derivative(const GridField<T>& f, int i, bool conjugate) {
  const auto& chart = f.chart();
  if (i < 0 || i >= chart.n) throw DomainError("complex index out of range");
  const auto dx = partial_derivative(f, 2 * i);
  const auto dy = partial_derivative(f, 2 * i + 1);
  ComplexField out(chart);
  const cplx iy = conjugate ? cplx(0.0, 0.5) : cplx(0.0, -0.5);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = 0.5 * cplx(dx[p]) + iy * cplx(dy[p]);
  return out;
}

// ---------------------------------------------------------------------------
// Complex Hessians
// ---------------------------------------------------------------------------

/// One real second derivative D_a D_b entering d_i d_jbar, with its role.
struct HessianPair {
  enum class Kind { diag, xx_yy, x_y, y_x };
  int a, b;  // real axes, a < b or a == b
  int i, j;  // complex indices (i <= j)
  Kind kind;
};

/// Real-axis pairs needed by the complex Hessian, grouped by smaller axis:
/// (x_i,x_i), (y_i,y_i) for each i, and (x_i,x_j), (y_i,y_j), (x_i,y_j),
/// (y_i,x_j) for i < j. The (x_i, y_i) pair cancels and is never formed.
inline std::vector<HessianPair> hessian_pairs(int n) {
  std::vector<HessianPair> out;
  using K = HessianPair::Kind;
  for (int a = 0; a < 2 * n; ++a) {
    const int ci = a / 2;
    const bool ay = (a % 2) == 1;
    out.push_back({a, a, ci, ci, K::diag});
    for (int cj = ci + 1; cj < n; ++cj) {
      if (!ay) {
        out.push_back({a, 2 * cj, ci, cj, K::xx_yy});
        out.push_back({a, 2 * cj + 1, ci, cj, K::x_y});
      } else {
        out.push_back({a, 2 * cj + 1, ci, cj, K::xx_yy});
        out.push_back({a, 2 * cj, ci, cj, K::y_x});
      }
    }
  }
  return out;
}

/// For every Hessian pair, make_sink(pair) returns a callable receiving
/// (p, D_b D_a f at p). One first-derivative field is held in scratch.
template <class T, class MakeSink>
void hessian_sweeps(const ChartModel& chart, const T* f, T* scratch, MakeSink&& make_sink) {
  const auto pairs = hessian_pairs(chart.n);
  std::vector<AxisStencil> stencils;
  for (int a = 0; a < chart.axes(); ++a) stencils.push_back(first_derivative_stencil(chart, a));
  for (int a = 0; a < chart.axes(); ++a) {
    sweep_axis(chart, stencils[a], f, [scratch](std::size_t p, T v) { scratch[p] = v; });
    for (const auto& pr : pairs) {
      if (pr.a != a) continue;
      sweep_axis(chart, stencils[pr.b], static_cast<const T*>(scratch), make_sink(pr));
    }
  }
}

template <class T, class MakeSink>
void hessian_sweeps(const GridField<T>& f, MakeSink&& make_sink) {
  std::vector<T> scratch(f.size());
  hessian_sweeps(f.chart(), f.data(), scratch.data(), make_sink);
}

/// Scratch length needed by the row-fused Hessian kernels: one field per
/// real axis.
inline std::size_t hessian_scratch_size(const ChartModel& chart) {
  return chart.points() * static_cast<std::size_t>(chart.axes());
}

/// All first derivatives D_a f go to scratch + a * points; then for every
/// grid row along the last axis, row_sink(base, rows) receives
/// rows[k][j] = D_b D_a f at base + j for the k-th Hessian pair.
template <class RowSink>
void hessian_rows(const ChartModel& chart, const double* f, double* scratch, RowSink&& row_sink) {
  const auto pairs = hessian_pairs(chart.n);
  const int d = chart.axes();
  const int last = d - 1;
  const std::size_t P = chart.points();
  const std::size_t N = static_cast<std::size_t>(chart.N);
  std::vector<AxisStencil> st;
  for (int a = 0; a < d; ++a) st.push_back(first_derivative_stencil(chart, a));
  for (int a = 0; a < d; ++a) {
    double* s = scratch + a * P;
    sweep_axis(chart, st[a], f, [s](std::size_t p, double v) { s[p] = v; });
  }
  const std::size_t rows = P / N;
  const std::size_t np = pairs.size();
#pragma omp parallel
  {
    std::vector<double> buf(np * N);
    std::vector<double*> rowp(np);
    for (std::size_t k = 0; k < np; ++k) rowp[k] = buf.data() + k * N;
    std::vector<std::size_t> coord(d, 0);
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * N;
      std::size_t rem = static_cast<std::size_t>(r);
      for (int a = last - 1; a >= 0; --a) {
        coord[a] = rem % N;
        rem /= N;
      }
      for (std::size_t k = 0; k < np; ++k) {
        const auto& pr = pairs[k];
        const auto& sb = st[pr.b];
        const std::size_t T = sb.taps();
        const double* src = scratch + pr.a * P + base;
        double* out = rowp[k];
        if (pr.b == last) {
          for (std::size_t j = 0; j < N; ++j) {
            double v = 0.0;
            for (std::size_t t = 0; t < T; t += 2)
              v += sb.weights[t] * (src[sb.wrap[j * T + t]] - src[sb.wrap[j * T + t + 1]]);
            out[j] = v;
          }
        } else {
          const auto stride = static_cast<std::ptrdiff_t>(chart.stride(pr.b));
          const auto i = static_cast<std::ptrdiff_t>(coord[pr.b]);
          std::fill(out, out + N, 0.0);
          for (std::size_t t = 0; t < T; t += 2) {
            const double w = sb.weights[t];
            const double* qp = src + (sb.wrap[i * T + t] - i) * stride;
            const double* qm = src + (sb.wrap[i * T + t + 1] - i) * stride;
            for (std::size_t j = 0; j < N; ++j) out[j] += w * (qp[j] - qm[j]);
          }
        }
      }
      row_sink(base, static_cast<double* const*>(rowp.data()));
    }
  }
}

/// out += H(f) in packed components. scratch holds hessian_scratch_size.
inline void add_complex_hessian(const ChartModel& chart, const double* f, double* scratch, HermitianMatrixField& out) {
  using K = HessianPair::Kind;
  const auto pairs = hessian_pairs(chart.n);
  std::vector<double*> dst(pairs.size());
  std::vector<double> q(pairs.size(), 0.25);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pr = pairs[k];
    switch (pr.kind) {
      case K::diag: dst[k] = out.diag(pr.i); break;
      case K::xx_yy: dst[k] = out.re(pr.i, pr.j); break;
      case K::x_y: dst[k] = out.im(pr.i, pr.j); break;
      case K::y_x: dst[k] = out.im(pr.i, pr.j), q[k] = -0.25; break;
    }
  }
  const std::size_t N = static_cast<std::size_t>(chart.N);
  hessian_rows(chart, f, scratch, [&](std::size_t base, double* const* rows) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      double* o = dst[k] + base;
      const double* v = rows[k];
      const double c = q[k];
      for (std::size_t j = 0; j < N; ++j) o[j] += c * v[j];
    }
  });
}

/// u_{i jbar} = d^2 u / dz^i dzbar^j for a real field.
inline HermitianMatrixField complex_hessian(const RealField& f) {
  HermitianMatrixField h(f.chart());
  std::vector<double> scratch(hessian_scratch_size(f.chart()));
  add_complex_hessian(f.chart(), f.data(), scratch.data(), h);
  return h;
}

/// d_i d_jbar f for a complex field; entry (i, j) at index i * n + j.
inline std::vector<ComplexField> wirtinger_hessian(const ComplexField& f) {
  const int n = f.chart().n;
  std::vector<ComplexField> out(n * n, ComplexField(f.chart()));
  using K = HessianPair::Kind;
  const cplx I(0.0, 1.0);
  hessian_sweeps(f, [&](const HessianPair& pr) {
    cplx* a = out[pr.i * n + pr.j].data();
    cplx* b = out[pr.j * n + pr.i].data();
    cplx qa = 0.25, qb = 0.25;
    switch (pr.kind) {
      case K::diag: b = nullptr; break;
      case K::xx_yy: break;
      case K::x_y: qa = 0.25 * I, qb = -0.25 * I; break;
      case K::y_x: qa = -0.25 * I, qb = 0.25 * I; break;
    }
    return [a, b, qa, qb](std::size_t p, cplx v) {
      a[p] += qa * v;
      if (b) b[p] += qb * v;
    };
  });
  return out;
}

/// Coefficient multiplying D_a D_b h in tr(W H(h)) for packed W at a point.
inline double trace_pair_coefficient(const HessianPair& pr, const double* w, int n) {
  using K = HessianPair::Kind;
  switch (pr.kind) {
    case K::diag: return 0.25 * w[pr.i];
    case K::xx_yy: return 0.5 * w[packed_pair_offset(pr.i, pr.j, n)];
    case K::x_y: return 0.5 * w[packed_pair_offset(pr.i, pr.j, n) + 1];
    case K::y_x: return -0.5 * w[packed_pair_offset(pr.i, pr.j, n) + 1];
  }
  return 0.0;
}

/// out = tr(W H(h)) = W^{i jbar} h_{i jbar} pointwise, fused (no Hessian
/// stored). scratch holds hessian_scratch_size.
inline void hessian_trace(const HermitianMatrixField& W, const double* h, double* scratch, double* out) {
  const int n = W.dim();
  using K = HessianPair::Kind;
  const auto pairs = hessian_pairs(n);
  std::vector<const double*> w(pairs.size());
  std::vector<double> q(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pr = pairs[k];
    switch (pr.kind) {
      case K::diag: w[k] = W.diag(pr.i), q[k] = 0.25; break;
      case K::xx_yy: w[k] = W.component(packed_pair_offset(pr.i, pr.j, n)), q[k] = 0.5; break;
      case K::x_y: w[k] = W.component(packed_pair_offset(pr.i, pr.j, n) + 1), q[k] = 0.5; break;
      case K::y_x: w[k] = W.component(packed_pair_offset(pr.i, pr.j, n) + 1), q[k] = -0.5; break;
    }
  }
  const std::size_t N = static_cast<std::size_t>(W.chart().N);
  hessian_rows(W.chart(), h, scratch, [&](std::size_t base, double* const* rows) {
    double* o = out + base;
    for (std::size_t j = 0; j < N; ++j) o[j] = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double* wk = w[k] + base;
      const double* v = rows[k];
      const double c = q[k];
      for (std::size_t j = 0; j < N; ++j) o[j] += c * wk[j] * v[j];
    }
  });
}

inline void hessian_trace(const HermitianMatrixField& W, const RealField& h, RealField& out) {
  require_same_chart(W.chart(), h.chart());
  std::vector<double> scratch(hessian_scratch_size(h.chart()));
  hessian_trace(W, h.data(), scratch.data(), out.data());
}

// ---------------------------------------------------------------------------
// Integration and Laplacian
// ---------------------------------------------------------------------------

/// L_xi * cell volume * sum of rho (periodic trapezoid rule), summed exactly.
inline double integrate_density(const RealField& rho) {
  const auto& chart = rho.chart();
  return chart.reeb_length * chart.cell_volume() * exact_sum(rho.values());
}

/// Pointwise inverse and log-determinant of a positive definite field.
struct InverseResult {
  HermitianMatrixField inverse;
  RealField logdet;
};

inline InverseResult invert_positive(const HermitianMatrixField& m, const char* what) {
  const int n = m.dim();
  InverseResult r{HermitianMatrixField(m.chart()), RealField(m.chart())};
  for (std::size_t p = 0; p < m.points(); ++p) {
    std::array<double, 9> a{}, inv{};
    m.gather(p, a.data());
    const auto f = factor_packed(a.data(), n, inv.data());
    if (!f.positive) throw SingularMetricError(what, p, min_eigenvalue(unpack_hermitian(a.data(), n)));
    r.inverse.scatter(p, inv.data());
    r.logdet[p] = f.logdet;
  }
  return r;
}

/// Basic Laplacian Delta_B u = 2 g^{i jbar} u_{i jbar}; equals
/// 4n sqrt(-1) ddbar u ^ (d eta)^{n-1} ^ eta / ((d eta)^n ^ eta) with
/// (d eta)_{i jbar} = 2 g_{i jbar}.
inline RealField basic_laplacian(const RealField& u, const HermitianMatrixField& g) {
  require_same_chart(u.chart(), g.chart());
  const auto inv = invert_positive(g, "basic_laplacian: metric is not positive definite");
  RealField out(u.chart());
  hessian_trace(inv.inverse, u, out);
  out *= 2.0;
  return out;
}

/// Translates a field by `cells` lattice cells along an axis.
template <class T>
GridField<T> shift_field(const GridField<T>& f, int axis, int cells) {
  const auto& chart = f.chart();
  GridField<T> out(chart);
  const std::size_t s = chart.stride(axis);
  const int N = chart.N;
  for (std::size_t p = 0; p < f.size(); ++p) {
    const int i = chart.index_along(p, axis);
    const int j = ((i + cells) % N + N) % N;
    out[p - static_cast<std::size_t>(i) * s + static_cast<std::size_t>(j) * s] = f[p];
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON layout
// ---------------------------------------------------------------------------

inline nlohmann::json chart_to_json(const ChartModel& c) {
  return {{"n", c.n}, {"N", c.N}, {"periods", c.periods}, {"reeb_length", c.reeb_length}, {"scheme", to_string(c.scheme)}};
}

inline ChartModel chart_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("chart must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::vector<std::string> known = {"n", "N", "periods", "reeb_length", "scheme"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown chart key '" + it.key() + "'");
  }
  if (!j.contains("n") || !j.contains("N")) throw ConfigError("chart requires n and N");
  ChartModel c;
  try {
    c.n = j.at("n").get<int>();
    c.N = j.at("N").get<int>();
    c.periods = j.contains("periods") ? j.at("periods").get<std::vector<double>>() : std::vector<double>(2 * c.n, 1.0);
    c.reeb_length = j.value("reeb_length", 1.0);
    c.scheme = parse_scheme(j.value("scheme", std::string("fd4")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed chart: ") + e.what());
  }
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline nlohmann::json field_to_json(const RealField& f) {
  return {{"chart", chart_to_json(f.chart())},
          {"values", std::vector<double>(f.values().begin(), f.values().end())},
          {"layout", "row-major-real-axes"}};
}

inline RealField field_from_json(const nlohmann::json& j) {
  if (j.value("layout", std::string()) != "row-major-real-axes") throw ConfigError("unsupported field layout");
  auto chart = chart_from_json(j.at("chart"));
  auto values = j.at("values").get<std::vector<double>>();
  if (values.size() != chart.points()) throw ConfigError("field value count does not match chart");
  return RealField(std::move(chart), std::move(values));
}

}  // namespace sasaki

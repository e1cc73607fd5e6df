#pragma once

// Matrix-free BiCGSTAB for the nonsymmetric linearized operators, with a
// Jacobi (diagonal) preconditioner and a constant-coefficient Fourier
// preconditioner built on FFTW. Inner products use a fixed pairwise order.

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "sasaki/errors.hpp"
#include "sasaki/grid.hpp"
#include "sasaki/small_matrix.hpp"

namespace sasaki {

inline double dot(std::span<const double> a, std::span<const double> b) {
  return pairwise_sum(0, a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

struct KrylovResult {
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// out = Op(in)
using LinearMap = std::function<void(std::span<const double> in, std::span<double> out)>;

/// Right-preconditioned BiCGSTAB for A x = b; x holds the initial guess.
/// Stops when ||b - A x|| <= rtol ||b||.
inline KrylovResult bicgstab(const LinearMap& A, const LinearMap& M, std::span<const double> b, std::span<double> x,
                             double rtol, int max_iters) {
  const std::size_t n = b.size();
  std::vector<double> r(n), rhat(n), p(n, 0.0), v(n, 0.0), phat(n), shat(n), t(n);
  KrylovResult res;
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }
  A(x, r);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  double rn = norm2(r);
  res.relative_residual = rn / bnorm;
  if (rn <= rtol * bnorm) {
    res.converged = true;
    return res;
  }
  rhat = r;
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  for (int it = 1; it <= max_iters; ++it) {
    res.iterations = it;
    const double rho_new = dot(rhat, r);
    if (rho_new == 0.0 || omega == 0.0) {
      // breakdown: restart the shadow residual
      rhat = r;
      rho = 1.0, alpha = 1.0, omega = 1.0;
      std::fill(p.begin(), p.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      continue;
    }
    const double beta = (rho_new / rho) * (alpha / omega);
    rho = rho_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    M(p, phat);
    A(phat, v);
    const double rv = dot(rhat, v);
    if (rv == 0.0) {
      rhat = r;
      rho = 1.0, alpha = 1.0, omega = 1.0;
      continue;
    }
    alpha = rho / rv;
    for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * v[i];  // r now holds s
    const double sn = norm2(r);
    if (sn <= rtol * bnorm) {
      for (std::size_t i = 0; i < n; ++i) x[i] += alpha * phat[i];
      res.converged = true;
      res.relative_residual = sn / bnorm;
      return res;
    }
    M(r, shat);
    A(shat, t);
    const double tt = dot(t, t);
    omega = tt > 0.0 ? dot(t, r) / tt : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * phat[i] + omega * shat[i];
      r[i] -= omega * t[i];
    }
    rn = norm2(r);
    res.relative_residual = rn / bnorm;
    if (rn <= rtol * bnorm) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Operators of the form  h -> tr(W H(h)) + shift h  (+ mean_shift mean(h))
// ---------------------------------------------------------------------------

/// Pointwise diagonal of h -> tr(W H(h)) + shift h.
inline std::vector<double> hessian_trace_diagonal(const HermitianMatrixField& W, double shift) {
  const auto& chart = W.chart();
  const int n = W.dim();
  std::vector<double> centre(chart.axes());
  for (int a = 0; a < chart.axes(); ++a) centre[a] = first_derivative_stencil(chart, a).center_of_square();
  std::vector<double> d(chart.points(), shift);
  for (int i = 0; i < n; ++i) {
    const double c = 0.25 * (centre[2 * i] + centre[2 * i + 1]);
    const double* w = W.diag(i);
    for (std::size_t p = 0; p < d.size(); ++p) d[p] += c * w[p];
  }
  return d;
}

class JacobiPreconditioner {
 public:
  explicit JacobiPreconditioner(std::vector<double> diagonal) : inv_(std::move(diagonal)) {
    for (auto& v : inv_) v = 1.0 / v;
  }
  void apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t p = 0; p < inv_.size(); ++p) out[p] = inv_[p] * in[p];
  }

 private:
  std::vector<double> inv_;
};

/// Exact inverse of the constant-coefficient operator
/// h -> tr(Wbar H(h)) + shift h + mean_shift mean(h) using the discrete
/// stencil symbols, applied with real-to-complex FFTs.
class FourierPreconditioner {
 public:
  FourierPreconditioner(const ChartModel& chart, const CMatrix& wbar, double shift, double mean_shift = 0.0)
      : chart_(chart) {
    const int d = chart.axes();
    const int N = chart.N;
    dims_.assign(d, N);
    const std::size_t P = chart.points();
    complex_size_ = P / N * (N / 2 + 1);
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * P));
    spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * complex_size_));
    if (!real_ || !spec_) throw Error("FFT buffer allocation failed");
    forward_ = fftw_plan_dft_r2c(d, dims_.data(), real_, spec_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r(d, dims_.data(), spec_, real_, FFTW_ESTIMATE);

    // mu_a(m): imaginary part of the first-derivative symbol along axis a
    std::vector<std::vector<double>> mu(d, std::vector<double>(N));
    for (int a = 0; a < d; ++a) {
      const auto st = first_derivative_stencil(chart, a);
      for (int m = 0; m < N; ++m) mu[a][m] = st.symbol(m, N).imag();
    }
    std::array<double, 9> w{};
    pack_hermitian(wbar, w.data());
    const auto pairs = hessian_pairs(chart.n);
    inv_symbol_.resize(complex_size_);
    std::vector<double> sym(complex_size_);
    std::vector<int> m(d, 0);
    for (std::size_t q = 0; q < complex_size_; ++q) {
      std::size_t rem = q;
      m[d - 1] = static_cast<int>(rem % (N / 2 + 1));
      rem /= (N / 2 + 1);
      for (int a = d - 2; a >= 0; --a) {
        m[a] = static_cast<int>(rem % N);
        rem /= N;
      }
      double s = shift;
      for (const auto& pr : pairs) s -= trace_pair_coefficient(pr, w.data(), chart.n) * mu[pr.a][m[pr.a]] * mu[pr.b][m[pr.b]];
      if (q == 0) s += mean_shift;
      sym[q] = s;
    }
    // Nyquist symbols of odd stencils are roundoff, not zero
    double smax = 0.0;
    for (double s : sym) smax = std::max(smax, std::abs(s));
    for (std::size_t q = 0; q < complex_size_; ++q)
      inv_symbol_[q] = (std::abs(sym[q]) > 1e-12 * smax) ? 1.0 / (sym[q] * static_cast<double>(P)) : 0.0;
  }

  FourierPreconditioner(const FourierPreconditioner&) = delete;
  FourierPreconditioner& operator=(const FourierPreconditioner&) = delete;

  ~FourierPreconditioner() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  void apply(std::span<const double> in, std::span<double> out) const {
    std::memcpy(real_, in.data(), sizeof(double) * in.size());
    fftw_execute(forward_);
    for (std::size_t q = 0; q < complex_size_; ++q) {
      spec_[q][0] *= inv_symbol_[q];
      spec_[q][1] *= inv_symbol_[q];
    }
    fftw_execute(backward_);
    std::memcpy(out.data(), real_, sizeof(double) * out.size());
  }

 private:
  ChartModel chart_;
  std::vector<int> dims_;
  std::size_t complex_size_ = 0;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_{};
  fftw_plan backward_{};
  std::vector<double> inv_symbol_;
};

/// Pointwise mean of a matrix field (exact summation per component).
inline CMatrix mean_matrix(const HermitianMatrixField& W) {
  std::array<double, 9> m{};
  for (int c = 0; c < W.components(); ++c)
    m[c] = exact_sum(std::span<const double>(W.component(c), W.points())) / static_cast<double>(W.points());
  return unpack_hermitian(m.data(), W.dim());
}

enum class PreconditionerKind { fourier, jacobi };

inline std::string to_string(PreconditionerKind k) { return k == PreconditionerKind::fourier ? "fourier" : "jacobi"; }

inline PreconditionerKind parse_preconditioner(const std::string& s) {
  if (s == "fourier") return PreconditionerKind::fourier;
  if (s == "jacobi" || s == "diagonal") return PreconditionerKind::jacobi;
  throw ConfigError("unknown preconditioner '" + s + "'");
}

}  // namespace sasaki

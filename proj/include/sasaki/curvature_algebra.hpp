#pragma once

// Single-point algebra for Kähler curvature-type tensors R_{i jbar k lbar}
// with a Hermitian metric h: random generation with an HSC bound, sampled
// HSC suprema, the Royden contraction bound, the Q-tensor norm identity and
// the pointwise Miyaoka-Yau integrand.
//
// Indices are raised with W = h^{-1} via h^{i jbar} = W_{ji}.

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sasaki/errors.hpp"
#include "sasaki/sampling.hpp"
#include "sasaki/small_matrix.hpp"
#include "sasaki/transverse.hpp"

namespace sasaki {

using Tensor4 = std::vector<cplx>;

inline Tensor4 zero_tensor(int n) { return Tensor4(static_cast<std::size_t>(n * n * n * n), 0.0); }

/// h_{i jbar} h_{k lbar} + h_{i lbar} h_{k jbar}; HSC of -c times this is -2c.
inline Tensor4 shift_tensor(const CMatrix& h) {
  const int n = static_cast<int>(h.rows());
  Tensor4 T = zero_tensor(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) T[tensor_index(n, i, j, k, l)] = h(i, j) * h(k, l) + h(i, l) * h(k, j);
  return T;
}

/// W^{i jbar} W^{k lbar} T_{i jbar k lbar}.
inline double full_trace(const Tensor4& T, const CMatrix& W, int n) {
  cplx s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) s += W(j, i) * W(l, k) * T[tensor_index(n, i, j, k, l)];
  return s.real();
}

/// |T|^2 with every index raised by W.
inline double tensor_norm2(const Tensor4& T, const CMatrix& W, int n) {
  Tensor4 a(T.size()), b(T.size());
  auto idx = [n](int i, int j, int k, int l) { return tensor_index(n, i, j, k, l); };
  // contract each slot in turn: slots 0, 2 use W_{a i}, slots 1, 3 use W_{j b}
  for (int x = 0; x < n; ++x)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          cplx s = 0.0;
          for (int i = 0; i < n; ++i) s += W(x, i) * T[idx(i, j, k, l)];
          a[idx(x, j, k, l)] = s;
        }
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          cplx s = 0.0;
          for (int j = 0; j < n; ++j) s += W(j, y) * a[idx(x, j, k, l)];
          b[idx(x, y, k, l)] = s;
        }
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z)
        for (int l = 0; l < n; ++l) {
          cplx s = 0.0;
          for (int k = 0; k < n; ++k) s += W(z, k) * b[idx(x, y, k, l)];
          a[idx(x, y, z, l)] = s;
        }
  double total = 0.0;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z)
        for (int w = 0; w < n; ++w) {
          cplx s = 0.0;
          for (int l = 0; l < n; ++l) s += W(l, w) * a[idx(x, y, z, l)];
          total += (s * std::conj(T[idx(x, y, z, w)])).real();
        }
  return total;
}

/// |A|^2 = tr(A W A W) for a Hermitian 2-tensor.
inline double form_norm2(const CMatrix& A, const CMatrix& W) { return (A * W * A * W).trace().real(); }

struct AlgebraicCurvature {
  int n = 1;
  CMatrix h;
  Tensor4 R;

  CMatrix inverse() const { return h.inverse(); }
  double scalar() const { return full_trace(R, inverse(), n); }
  CMatrix ricci() const { return ricci_contraction(R.data(), inverse(), n); }
  double hsc(const CVector& U) const { return hsc_value(R.data(), h, U, n); }
  cplx at(int i, int j, int k, int l) const { return R[tensor_index(n, i, j, k, l)]; }

  AlgebraicCurvature scaled(double lambda) const {
    AlgebraicCurvature a = *this;
    for (auto& v : a.R) v *= lambda;
    return a;
  }
};

/// Fills T with independent complex normals on each symmetry orbit, so the
/// Kähler symmetries hold bit-for-bit.
inline Tensor4 random_symmetric_tensor(int n, Rng& rng) {
  Tensor4 T = zero_tensor(n);
  std::vector<bool> done(T.size(), false);
  using Idx = std::array<int, 4>;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          if (done[tensor_index(n, i, j, k, l)]) continue;
          // orbit closure under (i<->k), (j<->l) and the conjugating swap (i,j,k,l) -> (j,i,l,k)
          std::vector<std::pair<Idx, bool>> orbit{{{i, j, k, l}, false}};
          bool real_only = false;
          for (std::size_t q = 0; q < orbit.size(); ++q) {
            const auto [t, c] = orbit[q];
            const std::pair<Idx, bool> next[3] = {
                {{t[2], t[1], t[0], t[3]}, c}, {{t[0], t[3], t[2], t[1]}, c}, {{t[1], t[0], t[3], t[2]}, !c}};
            for (const auto& m : next) {
              bool seen = false;
              for (const auto& o : orbit)
                if (o.first == m.first) {
                  seen = true;
                  if (o.second != m.second) real_only = true;
                }
              if (!seen) orbit.push_back(m);
            }
          }
          cplx v = rng.complex_normal();
          if (real_only) v = v.real();
          for (const auto& [t, c] : orbit) {
            const auto p = tensor_index(n, t[0], t[1], t[2], t[3]);
            T[p] = c ? std::conj(v) : v;
            done[p] = true;
          }
        }
  return T;
}

/// Random Hermitian positive definite matrix, eigenvalues roughly in [0.5, 2.5].
inline CMatrix random_positive_matrix(int n, Rng& rng) {
  CMatrix M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = rng.complex_normal() * (0.5 / std::sqrt(static_cast<double>(n)));
  CMatrix h = M * M.adjoint() + 0.5 * CMatrix::Identity(n, n);
  return hermitian_part(h);
}

inline std::vector<CVector> algebra_directions(int n, std::size_t samples, std::uint64_t seed) {
  return hsc_directions(n, samples, seed);
}

/// Sampled max of K over unit directions; nondecreasing along nested samples.
inline double hsc_sup(const AlgebraicCurvature& A, std::size_t samples, std::uint64_t seed) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& U : algebra_directions(A.n, samples, seed)) m = std::max(m, A.hsc(U));
  return m;
}

inline double hsc_inf(const AlgebraicCurvature& A, std::size_t samples, std::uint64_t seed) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& U : algebra_directions(A.n, samples, seed)) m = std::min(m, A.hsc(U));
  return m;
}

struct CurvatureTarget {
  bool bounded = false;  // require sampled sup K <= -kappa
  double kappa = 0.0;
  std::size_t certify_samples = 10000;
  double random_scale = 1.0;
};

inline constexpr std::uint64_t kCertifySeed = 0x5eed5eedULL;

/// Deterministic random Kähler-type tensor. With a bound, the random part is
/// shifted by -c (hh + hh): that term has constant K = -2c, so the smallest
/// admissible c over the certification directions is explicit.
inline AlgebraicCurvature random_curvature(int n, std::uint64_t seed, const CurvatureTarget& target = {}) {
  if (n < 1 || n > kMaxDim) throw DomainError("random_curvature needs n in {1, 2, 3}");
  Rng rng(seed);
  AlgebraicCurvature A;
  A.n = n;
  A.h = random_positive_matrix(n, rng);
  A.R = random_symmetric_tensor(n, rng);
  for (auto& v : A.R) v *= target.random_scale;
  if (!target.bounded) return A;
  if (!(target.kappa >= 0.0)) throw DomainError("target kappa must be nonnegative");
  const double sup = hsc_sup(A, target.certify_samples, kCertifySeed);
  double c = std::max(0.0, 0.5 * (sup + target.kappa));
  const auto S = shift_tensor(A.h);
  // roundoff can leave the certified max a few ulps above -kappa; nudge c up
  for (int attempt = 0; attempt < 60; ++attempt) {
    AlgebraicCurvature B = A;
    for (std::size_t q = 0; q < B.R.size(); ++q) B.R[q] -= c * S[q];
    if (hsc_sup(B, target.certify_samples, kCertifySeed) <= -target.kappa) return B;
    c += std::max(1e-14, 1e-13 * std::abs(c)) * std::pow(2.0, attempt);
  }
  throw Error("random_curvature: HSC target unreachable (seed " + std::to_string(seed) + ")");
}

// ---------------------------------------------------------------------------
// Royden contraction bound
// ---------------------------------------------------------------------------

enum class TraceConvention { metric, contact };

struct RoydenResult {
  double lhs = 0.0;     // sigma^{i jbar} sigma^{k lbar} R_{i jbar k lbar}
  double rhs = 0.0;     // -(n+1)/(2n) kappa (tr_sigma h)^2
  double margin = 0.0;  // rhs - lhs
  double trace = 0.0;
  bool hypothesis_ok = true;
  std::string warning;
};

/// Checks sigma sigma R <= -(n+1)/(2n) kappa (tr_sigma h)^2 given sup K <= -kappa.
/// The contact convention evaluates the same statement for the rescaled
/// structure (2h, 2R, kappa/2); its margin is exactly twice the metric one.
inline RoydenResult royden_check(const AlgebraicCurvature& A, const CMatrix& sigma, double kappa,
                                 TraceConvention convention = TraceConvention::metric,
                                 std::size_t precondition_samples = 2000) {
  if (!(kappa > 0.0)) throw DomainError("royden_check needs kappa > 0");
  const int n = A.n;
  if (min_eigenvalue(sigma) <= 0.0) throw DomainError("royden_check needs a positive definite sigma");
  const double scale = convention == TraceConvention::contact ? 2.0 : 1.0;
  const CMatrix W = sigma.inverse();
  RoydenResult r;
  r.trace = scale * trace_wrt(sigma, A.h);
  r.lhs = scale * full_trace(A.R, W, n);
  const double k = kappa / scale;
  r.rhs = -(n + 1.0) / (2.0 * n) * k * r.trace * r.trace;
  r.margin = r.rhs - r.lhs;
  if (precondition_samples == 0) return r;
  const double sup = hsc_sup(A, precondition_samples, kCertifySeed);
  if (sup > -kappa * (1.0 - 1e-12)) {
    r.hypothesis_ok = false;
    r.warning = "sampled sup HSC " + std::to_string(sup) + " exceeds -kappa";
  }
  return r;
}

// ---------------------------------------------------------------------------
// Q tensor
// ---------------------------------------------------------------------------

/// Q = R - S / (n (n+1)) (hh + hh).
inline Tensor4 q_tensor(const AlgebraicCurvature& A) {
  const double S = A.scalar();
  const auto sh = shift_tensor(A.h);
  Tensor4 Q = A.R;
  const double f = S / (A.n * (A.n + 1.0));
  for (std::size_t q = 0; q < Q.size(); ++q) Q[q] -= f * sh[q];
  return Q;
}

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

/// |Q|^2 against |R|^2 - 2 S^2 / (n (n+1)).
inline IdentityCheck q_identity_check(const AlgebraicCurvature& A) {
  const CMatrix W = A.inverse();
  const double S = full_trace(A.R, W, A.n);
  IdentityCheck c;
  c.lhs = tensor_norm2(q_tensor(A), W, A.n);
  c.rhs = tensor_norm2(A.R, W, A.n) - 2.0 * S * S / (A.n * (A.n + 1.0));
  c.residual = std::abs(c.lhs - c.rhs);
  return c;
}

// ---------------------------------------------------------------------------
// Miyaoka-Yau integrand
// ---------------------------------------------------------------------------

struct MiyaokaYauTerms {
  double reduction = 0.0;       // |R|^2 - S^2 - (n+2)/(n+1) (|rho|^2 - S^2)
  double q_term = 0.0;          // |Q|^2
  double scalar_term = 0.0;     // (n+2)/(n(n+1)) (S + n)^2
  double rho_sigma_term = 0.0;  // (n+2)/(n+1) |rho + sigma|^2
  double decomposition = 0.0;   // q_term + scalar_term - rho_sigma_term
  double residual = 0.0;        // |reduction - decomposition|
};

/// Pointwise terms for curvature R of the metric sigma; rho and S are the
/// traces of R, all norms in sigma.
inline MiyaokaYauTerms miyaoka_yau_terms(const Tensor4& R, const CMatrix& sigma) {
  const int n = static_cast<int>(sigma.rows());
  const CMatrix W = sigma.inverse();
  const CMatrix rho = hermitian_part(ricci_contraction(R.data(), W, n));
  const double S = (W * rho).trace().real();
  const double R2 = tensor_norm2(R, W, n);
  const double rho2 = form_norm2(rho, W);
  const double a = (n + 2.0) / (n + 1.0);
  MiyaokaYauTerms t;
  t.reduction = R2 - S * S - a * (rho2 - S * S);
  AlgebraicCurvature A{n, sigma, R};
  t.q_term = tensor_norm2(q_tensor(A), W, n);
  t.scalar_term = (n + 2.0) / (n * (n + 1.0)) * (S + n) * (S + n);
  t.rho_sigma_term = a * form_norm2(rho + sigma, W);
  t.decomposition = t.q_term + t.scalar_term - t.rho_sigma_term;
  t.residual = std::abs(t.reduction - t.decomposition);
  return t;
}

/// Removes the Ricci part of a Kähler-type tensor: T - A o h with
/// (n+2) A + tr_h(A) h = Ric(T).
inline Tensor4 trace_free_part(const Tensor4& T, const CMatrix& h) {
  const int n = static_cast<int>(h.rows());
  const CMatrix W = h.inverse();
  const CMatrix B = hermitian_part(ricci_contraction(T.data(), W, n));
  const double trB = (W * B).trace().real();
  const CMatrix A = (B - trB / (2.0 * (n + 1.0)) * h) / (n + 2.0);
  Tensor4 out = T;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
          out[tensor_index(n, i, j, k, l)] -=
              A(i, j) * h(k, l) + A(k, l) * h(i, j) + A(i, l) * h(k, j) + A(k, j) * h(i, l);
  return out;
}

/// Curvature with rho = -h and sampled HSC <= 0: -(hh + hh)/(n+1) plus a
/// scaled trace-free random part.
inline AlgebraicCurvature einstein_type_curvature(int n, std::uint64_t seed, std::size_t samples = 4000) {
  Rng rng(seed);
  AlgebraicCurvature A;
  A.n = n;
  A.h = random_positive_matrix(n, rng);
  const auto P = trace_free_part(random_symmetric_tensor(n, rng), A.h);
  const auto S = shift_tensor(A.h);
  double eps = rng.uniform(0.05, 0.5);
  for (int attempt = 0; attempt < 80; ++attempt) {
    A.R = zero_tensor(n);
    for (std::size_t q = 0; q < A.R.size(); ++q) A.R[q] = -S[q] / (n + 1.0) + eps * P[q];
    if (hsc_sup(A, samples, kCertifySeed) <= 0.0) return A;
    eps *= 0.7;
  }
  throw Error("einstein_type_curvature: could not reach nonpositive HSC");
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

struct RoydenCorpusReport {
  std::uint64_t seed = 0;
  int n = 2;
  int instances = 0;
  int sigmas_per_instance = 0;
  int checks = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  double max_identity_residual = 0.0;
  int hypothesis_warnings = 0;

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"n", n},
            {"instances", instances},
            {"sigmas_per_instance", sigmas_per_instance},
            {"checks", checks},
            {"min_margin", min_margin},
            {"max_identity_residual", max_identity_residual},
            {"hypothesis_warnings", hypothesis_warnings}};
  }
};

struct RoydenCorpusOptions {
  int instances = 500;
  int sigmas = 10;
  double kappa_min = 0.5;
  double kappa_max = 2.0;
  double derate = 0.95;
  std::size_t certify_samples = 10000;
};

/// Both the Royden margins and the Q identity over one generated corpus.
inline RoydenCorpusReport royden_corpus(int n, std::uint64_t seed, const RoydenCorpusOptions& opt = {}) {
  RoydenCorpusReport rep;
  rep.seed = seed;
  rep.n = n;
  rep.instances = opt.instances;
  rep.sigmas_per_instance = opt.sigmas;
  Rng master(seed);
  for (int m = 0; m < opt.instances; ++m) {
    const std::uint64_t inst_seed = master.next_seed();
    const double kappa = master.uniform(opt.kappa_min, opt.kappa_max);
    CurvatureTarget target;
    target.bounded = true;
    target.kappa = kappa;
    target.certify_samples = opt.certify_samples;
    const auto A = random_curvature(n, inst_seed, target);
    const auto q = q_identity_check(A);
    rep.max_identity_residual = std::max(rep.max_identity_residual, q.residual / (1.0 + std::abs(q.lhs)));
    Rng srng(master.next_seed());
    for (int s = 0; s < opt.sigmas; ++s) {
      const CMatrix sigma = random_positive_matrix(n, srng);
      const auto r = royden_check(A, sigma, opt.derate * kappa, TraceConvention::metric, 0);
      rep.min_margin = std::min(rep.min_margin, r.margin);
      ++rep.checks;
    }
  }
  return rep;
}

}  // namespace sasaki

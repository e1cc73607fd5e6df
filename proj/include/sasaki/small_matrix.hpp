#pragma once

// Small dense complex matrices (n <= 3) used per grid point, plus the packed
// real layout for Hermitian matrices shared by every matrix field.
//
// Packed layout for an n x n Hermitian matrix (n*n reals):
//   [0, n)              diagonal entries M_ii (real)
//   n + 2k, n + 2k + 1  Re M_ij, Im M_ij for the k-th pair i < j (row-major)

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "sasaki/errors.hpp"

namespace sasaki {

using cplx = std::complex<double>;
using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using CVector = Eigen::Matrix<cplx, Eigen::Dynamic, 1, 0, 3, 1>;

inline constexpr int kMaxDim = 3;

inline int packed_size(int n) { return n * n; }

/// Offset of Re M_ij (i < j) within the packed layout; Im follows at +1.
inline int packed_pair_offset(int i, int j, int n) {
  // pairs enumerated row-major: (0,1), (0,2), ..., (1,2), ...
  int k = 0;
  for (int r = 0; r < i; ++r) k += n - 1 - r;
  k += j - i - 1;
  return n + 2 * k;
}

inline cplx packed_entry(const double* packed, int i, int j, int n) {
  if (i == j) return {packed[i], 0.0};
  if (i < j) {
    const int o = packed_pair_offset(i, j, n);
    return {packed[o], packed[o + 1]};
  }
  const int o = packed_pair_offset(j, i, n);
  return {packed[o], -packed[o + 1]};
}

inline CMatrix unpack_hermitian(const double* packed, int n) {
  CMatrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = packed_entry(packed, i, j, n);
  return m;
}

/// Packs the Hermitian part of m: diagonal real parts, upper entries averaged
/// with the conjugate of the lower ones.
inline void pack_hermitian(const CMatrix& m, double* packed) {
  const int n = static_cast<int>(m.rows());
  for (int i = 0; i < n; ++i) packed[i] = m(i, i).real();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const cplx v = 0.5 * (m(i, j) + std::conj(m(j, i)));
      const int o = packed_pair_offset(i, j, n);
      packed[o] = v.real();
      packed[o + 1] = v.imag();
    }
}

inline CMatrix hermitian_part(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

inline double min_eigenvalue(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline Eigen::VectorXd eigenvalues(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Eigenvalues of b^{-1} a for Hermitian a and positive definite b.
inline Eigen::VectorXd generalized_eigenvalues(const CMatrix& a, const CMatrix& b) {
  Eigen::GeneralizedSelfAdjointEigenSolver<CMatrix> es(hermitian_part(a), hermitian_part(b),
                                                       Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  return es.eigenvalues();
}

/// tr(a^{-1} b), i.e. a^{i jbar} b_{i jbar} with a^{i jbar} = (a^{-1})_{ji}.
inline double trace_wrt(const CMatrix& a, const CMatrix& b) {
  return (a.inverse() * b).trace().real();
}

/// Result of factoring one packed Hermitian matrix.
struct PackedFactor {
  bool positive = false;
  double logdet = 0.0;
};

/// Cholesky-based positivity test, log-determinant and (optionally) packed
/// inverse for n <= 3. Closed forms are used for n = 1, 2.
inline PackedFactor factor_packed(const double* a, int n, double* inverse_out) {
  PackedFactor f;
  if (n == 1) {
    if (!(a[0] > 0.0)) return f;
    f.positive = true;
    f.logdet = std::log(a[0]);
    if (inverse_out) inverse_out[0] = 1.0 / a[0];
    return f;
  }
  if (n == 2) {
    const double p = a[0], q = a[1], br = a[2], bi = a[3];
    const double det = p * q - (br * br + bi * bi);
    if (!(p > 0.0) || !(det > 0.0)) return f;
    f.positive = true;
    f.logdet = std::log(det);
    if (inverse_out) {
      inverse_out[0] = q / det;
      inverse_out[1] = p / det;
      inverse_out[2] = -br / det;
      inverse_out[3] = -bi / det;
    }
    return f;
  }
  std::array<cplx, 9> L{};
  auto A = [&](int i, int j) { return packed_entry(a, i, j, n); };
  double logdet = 0.0;
  for (int j = 0; j < n; ++j) {
    double d = A(j, j).real();
    for (int k = 0; k < j; ++k) d -= std::norm(L[j * 3 + k]);
    if (!(d > 0.0)) return f;
    const double ljj = std::sqrt(d);
    L[j * 3 + j] = ljj;
    logdet += 2.0 * std::log(ljj);
    for (int i = j + 1; i < n; ++i) {
      cplx s = A(i, j);
      for (int k = 0; k < j; ++k) s -= L[i * 3 + k] * std::conj(L[j * 3 + k]);
      L[i * 3 + j] = s / ljj;
    }
  }
  f.positive = true;
  f.logdet = logdet;
  if (inverse_out) {
    // Linv lower triangular, A^{-1} = Linv^* Linv.
    std::array<cplx, 9> Li{};
    for (int i = 0; i < n; ++i) {
      Li[i * 3 + i] = 1.0 / L[i * 3 + i];
      for (int j = 0; j < i; ++j) {
        cplx s = 0.0;
        for (int k = j; k < i; ++k) s -= L[i * 3 + k] * Li[k * 3 + j];
        Li[i * 3 + j] = s / L[i * 3 + i];
      }
    }
    CMatrix inv(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        cplx s = 0.0;
        for (int k = std::max(i, j); k < n; ++k) s += std::conj(Li[k * 3 + i]) * Li[k * 3 + j];
        inv(i, j) = s;
      }
    pack_hermitian(inv, inverse_out);
  }
  return f;
}

/// tr(W H) for packed Hermitian W, H.
inline double packed_trace_product(const double* w, const double* h, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += w[i] * h[i];
  for (int o = n; o < n * n; o += 2) s += 2.0 * (w[o] * h[o] + w[o + 1] * h[o + 1]);
  return s;
}

/// Mixed discriminant D(A_1, ..., A_n) =
///   (1/n!) sum_{pi, tau in S_n} sgn(pi) sgn(tau) prod_k (A_k)_{pi(k) tau(k)},
/// the density of a wedge of n real (1,1) forms relative to the normalized
/// volume form (D(A, ..., A) = det A). Computed by explicit permutation sums.
inline cplx mixed_discriminant(const std::vector<CMatrix>& mats) {
  const int n = static_cast<int>(mats.size());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> perms;
  std::vector<int> signs;
  do {
    perms.push_back(perm);
    int inversions = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (perm[i] > perm[j]) ++inversions;
    signs.push_back(inversions % 2 == 0 ? 1 : -1);
  } while (std::next_permutation(perm.begin(), perm.end()));
  cplx total = 0.0;
  for (std::size_t a = 0; a < perms.size(); ++a)
    for (std::size_t b = 0; b < perms.size(); ++b) {
      cplx prod = static_cast<double>(signs[a] * signs[b]);
      for (int k = 0; k < n; ++k) prod *= mats[k](perms[a][k], perms[b][k]);
      total += prod;
    }
  return total / static_cast<double>(perms.size());
}

}  // namespace sasaki

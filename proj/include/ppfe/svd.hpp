#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "ppfe/error.hpp"
#include "ppfe/tensor.hpp"

namespace ppfe {

/// Thin SVD a = u * diag(s) * vt with k = min(m, n).
struct SvdResult {
  Matrix u;   // m x k, orthonormal columns
  Vector s;   // k, non-increasing
  Matrix vt;  // k x n, orthonormal rows
};

struct SvdOptions {
  int max_sweeps = 60;
  double tolerance = 1e-12;
};

namespace detail {

// One-sided Jacobi on the rows of `g` (each row is a column of the operand).
// `vrows` accumulates the right rotations, one row per right singular vector.
inline void jacobi_orthogonalize(Matrix& g, Matrix& vrows, const SvdOptions& opt) {
  const std::size_t n = g.rows();
  const std::size_t len = g.cols();
  double scale = 0.0;
  for (double v : g.data()) scale += v * v;
  const double negligible = scale * 1e-300;

  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto gp = g.row(p);
        auto gq = g.row(q);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
          alpha += gp[k] * gp[k];
          beta += gq[k] * gq[k];
          gamma += gp[k] * gq[k];
        }
        if (alpha <= negligible || beta <= negligible) continue;
        if (std::abs(gamma) <= opt.tolerance * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < len; ++k) {
          const double a = gp[k];
          const double b = gq[k];
          gp[k] = c * a - s * b;
          gq[k] = s * a + c * b;
        }
        auto vp = vrows.row(p);
        auto vq = vrows.row(q);
        for (std::size_t k = 0; k < vrows.cols(); ++k) {
          const double a = vp[k];
          const double b = vq[k];
          vp[k] = c * a - s * b;
          vq[k] = s * a + c * b;
        }
      }
    }
    if (!rotated) return;
  }
  throw ConvergenceError("svd: one-sided Jacobi did not converge", opt.max_sweeps);
}

// Fill columns of `u` flagged in `missing` with unit vectors orthogonal to the rest.
inline void complete_basis(Matrix& u, const std::vector<bool>& missing) {
  const std::size_t m = u.rows();
  const std::size_t k = u.cols();
  std::vector<bool> done(k);
  for (std::size_t j = 0; j < k; ++j) done[j] = !missing[j];
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < k; ++j) {
    if (done[j]) continue;
    for (; candidate < m; ++candidate) {
      Vector v(m, 0.0);
      v[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < k; ++c) {
          if (!done[c]) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += u(i, c) * v[i];
          for (std::size_t i = 0; i < m; ++i) v[i] -= proj * u(i, c);
        }
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = v[i] / norm;
        done[j] = true;
        ++candidate;
        break;
      }
    }
  }
}

// SVD for m >= n.
inline SvdResult svd_tall(const Matrix& a, const SvdOptions& opt) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix g = transpose(a);  // n x m, row j = column j of a
  Matrix vrows = Matrix::identity(n);
  jacobi_orthogonalize(g, vrows, opt);

  Vector norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (double v : g.row(j)) s += v * v;
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdResult r{Matrix(m, n), Vector(n), Matrix(n, n)};
  const double smax = n > 0 ? norms[order[0]] : 0.0;
  std::vector<bool> missing(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    const double s = norms[src];
    if (s <= smax * 1e-150 || s == 0.0) {
      r.s[j] = 0.0;
      missing[j] = true;
    } else {
      r.s[j] = s;
      for (std::size_t i = 0; i < m; ++i) r.u(i, j) = g(src, i) / s;
    }
    auto vr = vrows.row(src);
    std::copy(vr.begin(), vr.end(), r.vt.row(j).begin());
  }
  if (std::any_of(missing.begin(), missing.end(), [](bool b) { return b; })) {
    complete_basis(r.u, missing);
  }
  return r;
}

}  // namespace detail

/// Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
/// Throws ConvergenceError when `max_sweeps` sweeps still leave a non-orthogonal pair.
inline SvdResult svd(const Matrix& a, const SvdOptions& opt = {}) {
  if (!a.all_finite()) throw InvalidArgument("svd: input contains non-finite entries");
  if (a.rows() >= a.cols()) return detail::svd_tall(a, opt);
  SvdResult t = detail::svd_tall(transpose(a), opt);
  return SvdResult{transpose(t.vt), std::move(t.s), transpose(t.u)};
}

/// u * diag(s) * vt.
inline Matrix reconstruct(const SvdResult& r) {
  Matrix us = r.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= r.s[j];
  return matmul(us, r.vt);
}

/// Best rank-`rank` factorization (left m x rank, right rank x n). The singular values are
/// split evenly: left = U_r sqrt(S_r), right = sqrt(S_r) V_r^T.
inline std::pair<Matrix, Matrix> truncate_svd(const SvdResult& r, std::size_t rank) {
  const std::size_t k = r.s.size();
  if (rank < 1 || rank > k) {
    throw InvalidArgument("truncate_svd: rank " + std::to_string(rank) + " outside [1, " +
                          std::to_string(k) + "]");
  }
  Matrix left(r.u.rows(), rank);
  Matrix right(rank, r.vt.cols());
  for (std::size_t j = 0; j < rank; ++j) {
    const double root = std::sqrt(r.s[j]);
    for (std::size_t i = 0; i < left.rows(); ++i) left(i, j) = r.u(i, j) * root;
    for (std::size_t c = 0; c < right.cols(); ++c) right(j, c) = r.vt(j, c) * root;
  }
  return {std::move(left), std::move(right)};
}

/// Squared Frobenius error of the rank-`rank` truncation: sum of the discarded s_i^2.
inline double truncation_error_sq(const SvdResult& r, std::size_t rank) {
  double e = 0.0;
  for (std::size_t i = rank; i < r.s.size(); ++i) e += r.s[i] * r.s[i];
  return e;
}

/// Parameter-count reduction of a rows x cols weight replaced by rank-r factors.
inline double low_rank_reduction_factor(std::size_t rows, std::size_t cols, std::size_t rank) {
  return static_cast<double>(rows * cols) / static_cast<double>(rank * (rows + cols));
}

}  // namespace ppfe

#pragma once

// Independent reference computations for the tests. Nothing here calls into the library's
// numerical routines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "ppfe/rng.hpp"
#include "ppfe/tensor.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const ppfe::Matrix& m) {
  Dense d(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
  return d;
}

inline Dense matmul(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Dense c(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i][p]) * b[p][j];
      c[i][j] = static_cast<double>(s);
    }
  return c;
}

inline Dense transpose(const Dense& a) {
  if (a.empty()) return {};
  Dense t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations, descending.
inline std::vector<double> symmetric_eigenvalues(Dense a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

/// Singular values of `a` as square roots of the eigenvalues of a^T a (or a a^T, the smaller).
inline std::vector<double> singular_values(const ppfe::Matrix& m) {
  const Dense a = to_dense(m);
  const Dense g = m.rows() >= m.cols() ? matmul(transpose(a), a) : matmul(a, transpose(a));
  auto ev = symmetric_eigenvalues(g);
  for (double& v : ev) v = std::sqrt(std::max(v, 0.0));
  return ev;
}

/// Scalar boosting step: eps = sum w l / (max l * sum w), beta = log((1-eps)/eps)/2,
/// w' proportional to w exp(beta l), sum w' = n.
struct Reweight {
  double eps, beta;
  std::vector<double> w;
};

inline Reweight reweight(const std::vector<double>& l, const std::vector<double>& w, double clamp = 1e-6) {
  double lmax = 0.0, sw = 0.0, swl = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    lmax = std::max(lmax, l[i]);
    sw += w[i];
    swl += w[i] * l[i];
  }
  double eps = lmax > 0.0 ? swl / (lmax * sw) : clamp;
  eps = std::min(std::max(eps, clamp), 1.0 - clamp);
  const double beta = 0.5 * std::log((1.0 - eps) / eps);
  std::vector<double> out(l.size());
  double total = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) total += out[i] = w[i] * std::exp(beta * l[i]);
  for (double& v : out) v *= static_cast<double>(l.size()) / total;
  return {eps, beta, out};
}

/// Solves the 2x2 system [[a, b], [c, d]] x = r by the explicit inverse.
inline std::pair<double, double> solve2(double a, double b, double c, double d, double r0, double r1) {
  const double det = a * d - b * c;
  return {(d * r0 - b * r1) / det, (-c * r0 + a * r1) / det};
}

/// Spearman rank correlation (no ties expected).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i + 1);
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

/// Shannon entropy (nats) of label frequencies.
inline double entropy(const std::vector<int>& labels, int classes) {
  std::vector<double> c(static_cast<std::size_t>(classes), 0.0);
  for (int l : labels) c[static_cast<std::size_t>(l)] += 1.0;
  double h = 0.0;
  for (double v : c)
    if (v > 0) {
      const double p = v / static_cast<double>(labels.size());
      h -= p * std::log(p);
    }
  return h;
}

/// Whether the 8-byte pattern of `v` occurs anywhere in `bytes`.
inline bool contains_double(std::span<const std::uint8_t> bytes, double v) {
  std::uint8_t pat[8];
  std::memcpy(pat, &v, 8);
  return std::search(bytes.begin(), bytes.end(), pat, pat + 8) != bytes.end();
}

inline ppfe::Matrix random_matrix(ppfe::Rng& rng, std::size_t r, std::size_t c) {
  ppfe::Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace oracle

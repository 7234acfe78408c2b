#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ppfe/datagen.hpp"
#include "ppfe/error.hpp"
#include "ppfe/ppfe.hpp"
#include "ppfe/rng.hpp"
#include "ppfe/tensor.hpp"

namespace ppfe::ridge {

struct RidgeFit {
  Vector w;
  double lambda = 0.0;
  double val_mse = 0.0;
};

/// Solves (X^T diag(omega) X + lambda I) w = X^T diag(omega) y + lambda w0 by Cholesky, i.e.
/// weighted least squares penalized towards `prior` (zero when empty). Empty omega means 1.
inline Vector ridge_solve_weighted(const Matrix& x, std::span<const double> y, std::span<const double> omega,
                                   double lambda, std::span<const double> prior = {}) {
  const std::size_t n = x.rows(), d = x.cols();
  if (y.size() != n) throw DimensionError("ridge: X has " + std::to_string(n) + " rows but y has " + std::to_string(y.size()));
  if (!omega.empty() && omega.size() != n) throw DimensionError("ridge: weight length mismatch");
  if (!prior.empty() && prior.size() != d) throw DimensionError("ridge: prior length mismatch");
  if (!(lambda >= 0.0)) throw InvalidArgument("ridge: lambda must be non-negative");

  Matrix a(d, d);
  Vector b(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    const double wi = omega.empty() ? 1.0 : omega[i];
    for (std::size_t p = 0; p < d; ++p) {
      const double v = wi * xi[p];
      b[p] += v * y[i];
      for (std::size_t q = 0; q <= p; ++q) a(p, q) += v * xi[q];
    }
  }
  for (std::size_t p = 0; p < d; ++p) {
    a(p, p) += lambda;
    if (!prior.empty()) b[p] += lambda * prior[p];
    for (std::size_t q = 0; q < p; ++q) a(q, p) = a(p, q);
  }

  // In-place lower Cholesky with a relative pivot floor so that rank deficiency is reported
  // instead of producing garbage.
  double scale = 0.0;
  for (std::size_t p = 0; p < d; ++p) scale = std::max(scale, std::abs(a(p, p)));
  const double floor = std::max(scale, 1.0) * 1e-13;
  Matrix l(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    double s = a(j, j);
    for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    if (!(s > floor)) throw NumericError("ridge: singular normal equations (lambda = " + std::to_string(lambda) + ")");
    l(j, j) = std::sqrt(s);
    for (std::size_t i = j + 1; i < d; ++i) {
      double t = a(i, j);
      for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  Vector z(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * z[k];
    z[i] = s / l(i, i);
  }
  Vector w(d);
  for (std::size_t i = d; i-- > 0;) {
    double s = z[i];
    for (std::size_t k = i + 1; k < d; ++k) s -= l(k, i) * w[k];
    w[i] = s / l(i, i);
  }
  return w;
}

/// Plain ridge: (X^T X + lambda I) w = X^T y.
inline Vector ridge_solve(const Matrix& x, std::span<const double> y, double lambda) {
  return ridge_solve_weighted(x, y, {}, lambda);
}

inline double mse(const Matrix& x, std::span<const double> y, std::span<const double> w) {
  if (x.rows() == 0) throw InvalidArgument("mse: empty data");
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double r = y[i] - dot(x.row(i), w);
    s += r * r;
  }
  return s / static_cast<double>(x.rows());
}

/// 13 log-spaced values from 1e-4 to 1e2.
inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 12; ++i) g.push_back(std::pow(10.0, -4.0 + 0.5 * i));
  return g;
}

/// Train/holdout index split; the holdout takes round(fraction * n) samples.
struct HoldoutSplit {
  std::vector<std::size_t> train, val;
};

inline HoldoutSplit holdout_split(std::size_t n, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("holdout fraction must lie in (0, 1)");
  const auto nval = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (nval == 0 || nval >= n) {
    throw InvalidArgument("too few samples (" + std::to_string(n) + ") to hold out a validation split");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(idx));
  HoldoutSplit s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nval));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(nval), idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

inline Vector select_values(std::span<const double> v, std::span<const std::size_t> idx) {
  Vector out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

inline std::vector<double> sorted_grid(std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("lambda grid is empty");
  std::vector<double> g(grid.begin(), grid.end());
  for (double v : g)
    if (!(v >= 0.0)) throw InvalidArgument("lambda grid values must be non-negative");
  std::sort(g.begin(), g.end());
  return g;
}

/// Fits on a random (1 - holdout) share of the data for every grid value, keeps the lambda
/// with the lowest holdout MSE (the smaller lambda on ties) and refits on all samples.
inline RidgeFit select_lambda(const Matrix& x, std::span<const double> y, std::span<const double> grid, double holdout,
                              Rng& rng) {
  const auto g = sorted_grid(grid);
  const auto split = holdout_split(x.rows(), holdout, rng);
  const Matrix xt = select_rows(x, split.train), xv = select_rows(x, split.val);
  const Vector yt = select_values(y, split.train), yv = select_values(y, split.val);
  RidgeFit best;
  best.val_mse = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double lam : g) {
    Vector w;
    try {
      w = ridge_solve(xt, yt, lam);
    } catch (const NumericError&) {
      continue;
    }
    const double v = mse(xv, yv, w);
    if (!any || v < best.val_mse) {
      best.lambda = lam;
      best.val_mse = v;
      any = true;
    }
  }
  if (!any) throw NumericError("select_lambda: every grid value gave a singular system");
  best.w = ridge_solve(x, y, best.lambda);
  return best;
}

// ---------------------------------------------------------------------------------------------
// Linear experiment track

struct LinearMethod {
  enum class Kind { Local, FedAvg, Ppfe };
  Kind kind = Kind::Ppfe;
  std::size_t stages = 4;
  /// Stage t >= 2 penalizes the deviation from the previous stage with lambda_1 / factor^(t-1),
  /// scaled by the client's sample count.
  double schedule_factor = 4.0;
  bool reweighting = true;
  WeightUpdateSign sign = WeightUpdateSign::UpweightLoss;

  static LinearMethod local() { return {Kind::Local}; }
  static LinearMethod fedavg() { return {Kind::FedAvg}; }
  static LinearMethod ppfe(std::size_t t = 4) { return {Kind::Ppfe, t}; }

  std::string name() const {
    switch (kind) {
      case Kind::Local: return "local";
      case Kind::FedAvg: return "fedavg";
      case Kind::Ppfe: break;
    }
    return "ppfe";
  }
};

struct LinearOptions {
  std::vector<double> grid = default_lambda_grid();
  double holdout = 0.2;
  double eps_clamp = 1e-6;
};

/// Training clients, fresh test draws (n_test = n_k) and the generating truth.
struct LinearData {
  data::RegressionTask task;
  std::vector<data::ClientDataset> test;
  Rng rng{0};
};

inline LinearData make_linear_data(const data::SyntheticRegressionSpec& spec, const Rng& rng) {
  LinearData d;
  d.task = data::gen_synthetic_regression(spec, rng);
  for (std::size_t k = 0; k < spec.clients; ++k) {
    Rng tr = rng.derive("test-data", k);
    d.test.push_back(data::sample_client_regression(d.task.truth, k, spec.samples_per_client, tr));
  }
  d.rng = rng;
  return d;
}

struct LinearResult {
  std::string method;
  std::vector<Vector> weights;  // final linear predictor per client
  Vector client_mse;            // test MSE per client
  Vector client_n;              // test sample count per client
  double mean_mse = 0.0;        // weighted by test sample counts
  double lambda = 0.0;          // FedAvg: shared lambda; PPFE: lambda_1; Local: 0
  std::vector<double> train_mse_by_stage;  // PPFE only, averaged over clients
};

struct LinearPpfeFit {
  Vector w;
  std::vector<Vector> members;
  std::vector<double> betas;
  std::vector<double> train_mse;        // ensemble after each stage
};

namespace detail {

inline Vector mean_of(const std::vector<Vector>& ws) {
  Vector m(ws.front().size(), 0.0);
  for (const auto& w : ws)
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += w[j];
  for (double& v : m) v /= static_cast<double>(ws.size());
  return m;
}

inline Vector squared_residuals(const Matrix& x, std::span<const double> y, std::span<const double> w) {
  Vector r(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double e = y[i] - dot(x.row(i), w);
    r[i] = e * e;
  }
  return r;
}

/// Step along `dir` from `w` that minimizes the unweighted training MSE, floored at zero.
inline double descent_step(const Matrix& x, std::span<const double> y, std::span<const double> w,
                           std::span<const double> dir) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double p = dot(x.row(i), dir);
    num += (y[i] - dot(x.row(i), w)) * p;
    den += p * p;
  }
  return den > 0.0 ? std::max(num / den, 0.0) : 0.0;
}

}  // namespace detail

/// Per-client boosted fit starting from the shared solution `base`. Stage t >= 2 fits a
/// weighted ridge model to the residual of the running ensemble with penalty
/// lambda_1 / factor^(t-1) * n. After every stage the running ensemble (newest coefficient
/// provisionally 1) is scored with squared residuals normalized by their maximum, which
/// yields the stage coefficient and the next sample weights. Member t > 1 enters the ensemble
/// with coefficient beta_t / beta_1, so the shared member keeps unit scale, capped at the
/// step that minimizes the unweighted training MSE along the member.
inline LinearPpfeFit linear_ppfe_client(const Matrix& x, std::span<const double> y, const Vector& base,
                                        double lambda1, const LinearMethod& m, double eps_clamp = 1e-6) {
  if (m.stages == 0) throw InvalidArgument("linear PPFE: need at least one stage");
  if (!(m.schedule_factor > 0.0)) throw InvalidArgument("linear PPFE: schedule factor must be positive");
  LinearPpfeFit fit;
  Vector omega(x.rows(), 1.0);
  Vector current(base.size(), 0.0);
  const double n = static_cast<double>(x.rows());
  for (std::size_t t = 0; t < m.stages; ++t) {
    Vector member;
    if (t == 0) {
      member = base;
    } else {
      Vector resid(x.rows());
      for (std::size_t i = 0; i < x.rows(); ++i) resid[i] = y[i] - dot(x.row(i), current);
      const double lam = lambda1 * std::pow(m.schedule_factor, -static_cast<double>(t)) * n;
      member = ridge_solve_weighted(x, resid, omega, lam);
    }
    Vector provisional = current;
    for (std::size_t j = 0; j < member.size(); ++j) provisional[j] += member[j];
    Vector loss = detail::squared_residuals(x, y, provisional);
    const double lmax = *std::max_element(loss.begin(), loss.end());
    if (lmax > 0.0)
      for (double& v : loss) v /= lmax;
    auto rw = reweight(loss, omega, eps_clamp, m.sign);
    if (m.reweighting) omega = std::move(rw.weights);
    fit.betas.push_back(rw.beta);
    const double beta1 = fit.betas.front();
    double c = t == 0 ? 1.0 : (beta1 > 0.0 ? std::max(rw.beta, 0.0) / beta1 : 1.0);
    if (t > 0) c = std::min(c, detail::descent_step(x, y, current, member));
    for (std::size_t j = 0; j < member.size(); ++j) current[j] += c * member[j];
    fit.members.push_back(std::move(member));
    fit.train_mse.push_back(mse(x, y, current));
  }
  fit.w = std::move(current);
  return fit;
}

namespace detail {

struct Splits {
  std::vector<Matrix> xt, xv;
  std::vector<Vector> yt, yv;
};

inline Splits make_splits(const LinearData& d, double holdout) {
  Splits s;
  for (std::size_t k = 0; k < d.task.clients.size(); ++k) {
    const auto& c = d.task.clients[k];
    Rng r = d.rng.derive("holdout", k);
    const auto sp = holdout_split(c.size(), holdout, r);
    s.xt.push_back(select_rows(c.features, sp.train));
    s.xv.push_back(select_rows(c.features, sp.val));
    s.yt.push_back(select_values(c.targets, sp.train));
    s.yv.push_back(select_values(c.targets, sp.val));
  }
  return s;
}

/// Shared lambda for the averaged model: the grid value whose averaged holdout fit has the
/// lowest pooled validation MSE.
inline double select_shared_lambda(const Splits& s, std::span<const double> grid) {
  const auto g = sorted_grid(grid);
  double best = g.front(), best_v = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double lam : g) {
    std::vector<Vector> ws;
    try {
      for (std::size_t k = 0; k < s.xt.size(); ++k) ws.push_back(ridge_solve(s.xt[k], s.yt[k], lam));
    } catch (const NumericError&) {
      continue;
    }
    const Vector avg = mean_of(ws);
    double sse = 0.0, cnt = 0.0;
    for (std::size_t k = 0; k < s.xv.size(); ++k) {
      sse += mse(s.xv[k], s.yv[k], avg) * static_cast<double>(s.xv[k].rows());
      cnt += static_cast<double>(s.xv[k].rows());
    }
    const double v = sse / cnt;
    if (!any || v < best_v) {
      best = lam;
      best_v = v;
      any = true;
    }
  }
  if (!any) throw NumericError("shared lambda selection: every grid value gave a singular system");
  return best;
}

inline Vector averaged_ridge(const std::vector<Matrix>& xs, const std::vector<Vector>& ys, double lam) {
  std::vector<Vector> ws;
  for (std::size_t k = 0; k < xs.size(); ++k) ws.push_back(ridge_solve(xs[k], ys[k], lam));
  return mean_of(ws);
}

inline void finish(LinearResult& r, const LinearData& d) {
  double sse = 0.0, cnt = 0.0;
  for (std::size_t k = 0; k < d.test.size(); ++k) {
    const double e = mse(d.test[k].features, d.test[k].targets, r.weights[k]);
    const double n = static_cast<double>(d.test[k].size());
    r.client_mse.push_back(e);
    r.client_n.push_back(n);
    sse += e * n;
    cnt += n;
  }
  r.mean_mse = sse / cnt;
}

}  // namespace detail

/// Runs one method of the linear track on prepared data. Local tunes lambda per client;
/// FedAvg averages client ridge solutions at one pooled-validated lambda; PPFE starts from the
/// FedAvg solution and tunes lambda_1 by pooled validation of the whole staged fit.
inline LinearResult run_linear_method(const LinearData& d, const LinearMethod& m, const LinearOptions& opt = {}) {
  const auto& clients = d.task.clients;
  if (clients.empty()) throw InvalidArgument("linear experiment: no clients");
  LinearResult r;
  r.method = m.name();

  if (m.kind == LinearMethod::Kind::Local) {
    for (std::size_t k = 0; k < clients.size(); ++k) {
      Rng cr = d.rng.derive("holdout", k);
      r.weights.push_back(select_lambda(clients[k].features, clients[k].targets, opt.grid, opt.holdout, cr).w);
    }
    detail::finish(r, d);
    return r;
  }

  const auto splits = detail::make_splits(d, opt.holdout);
  const double shared_lam = detail::select_shared_lambda(splits, opt.grid);
  std::vector<Matrix> xs;
  std::vector<Vector> ys;
  for (const auto& c : clients) {
    xs.push_back(c.features);
    ys.push_back(c.targets);
  }
  const Vector global = detail::averaged_ridge(xs, ys, shared_lam);

  if (m.kind == LinearMethod::Kind::FedAvg) {
    r.lambda = shared_lam;
    r.weights.assign(clients.size(), global);
    detail::finish(r, d);
    return r;
  }

  const Vector global_t = detail::averaged_ridge(splits.xt, splits.yt, shared_lam);
  const auto g = sorted_grid(opt.grid);
  double best = g.front(), best_v = std::numeric_limits<double>::infinity();
  for (double lam : g) {
    double sse = 0.0, cnt = 0.0;
    for (std::size_t k = 0; k < clients.size(); ++k) {
      const auto fit = linear_ppfe_client(splits.xt[k], splits.yt[k], global_t, lam, m, opt.eps_clamp);
      sse += mse(splits.xv[k], splits.yv[k], fit.w) * static_cast<double>(splits.xv[k].rows());
      cnt += static_cast<double>(splits.xv[k].rows());
    }
    if (sse / cnt < best_v) {
      best_v = sse / cnt;
      best = lam;
    }
  }
  r.lambda = best;
  r.train_mse_by_stage.assign(m.stages, 0.0);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto fit = linear_ppfe_client(clients[k].features, clients[k].targets, global, best, m, opt.eps_clamp);
    r.weights.push_back(fit.w);
    for (std::size_t t = 0; t < m.stages; ++t) r.train_mse_by_stage[t] += fit.train_mse[t] / static_cast<double>(clients.size());
  }
  detail::finish(r, d);
  return r;
}

inline LinearResult run_linear_experiment(const data::SyntheticRegressionSpec& spec, const LinearMethod& m,
                                          const Rng& rng, const LinearOptions& opt = {}) {
  return run_linear_method(make_linear_data(spec, rng), m, opt);
}

}  // namespace ppfe::ridge

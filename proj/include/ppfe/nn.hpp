#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "ppfe/error.hpp"
#include "ppfe/rng.hpp"
#include "ppfe/svd.hpp"
#include "ppfe/tensor.hpp"

namespace ppfe::nn {

enum class Activation : std::uint8_t { Identity = 0, ReLU = 1, Tanh = 2 };

/// y = x W^T + b, W is out x in, b is 1 x out.
struct Dense {
  Matrix weight;
  Matrix bias;
};

/// y = x (A B)^T + b with A out x r and B r x in.
struct LowRankDense {
  Matrix a;
  Matrix b;
  Matrix bias;
};

/// Dense layer whose weight is confined to the support of a binary mask.
struct MaskedDense {
  Matrix weight;
  Matrix bias;
  Matrix mask;  // entries are exactly 0 or 1
};

struct ActivationLayer {
  Activation fn = Activation::Identity;
};

using Layer = std::variant<Dense, LowRankDense, MaskedDense, ActivationLayer>;

inline bool is_linear(const Layer& l) { return !std::holds_alternative<ActivationLayer>(l); }

/// Input width of a linear layer; 0 for activations (they pass the width through).
inline std::size_t in_dim(const Layer& l) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, LowRankDense>) return x.b.cols();
        else if constexpr (std::is_same_v<T, ActivationLayer>) return 0;
        else return x.weight.cols();
      },
      l);
}

inline std::size_t out_dim(const Layer& l) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ActivationLayer>) return 0;
        else return x.bias.cols();
      },
      l);
}

/// Trainable parameter matrices of a layer, in a fixed order.
inline std::vector<Matrix*> params(Layer& l) {
  return std::visit(
      [](auto& x) -> std::vector<Matrix*> {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Dense>) return {&x.weight, &x.bias};
        else if constexpr (std::is_same_v<T, LowRankDense>) return {&x.a, &x.b, &x.bias};
        else if constexpr (std::is_same_v<T, MaskedDense>) return {&x.weight, &x.bias};
        else return {};
      },
      l);
}

inline std::vector<const Matrix*> params(const Layer& l) {
  auto ptrs = params(const_cast<Layer&>(l));
  return {ptrs.begin(), ptrs.end()};
}

/// Dense weight equivalent of a linear layer (A*B for low-rank, W for the others).
inline Matrix effective_weight(const Layer& l) {
  if (const auto* d = std::get_if<Dense>(&l)) return d->weight;
  if (const auto* r = std::get_if<LowRankDense>(&l)) return matmul(r->a, r->b);
  if (const auto* m = std::get_if<MaskedDense>(&l)) return m->weight;
  throw InvalidArgument("effective_weight: activation layer has no weight");
}

inline const Matrix& bias_of(const Layer& l) {
  if (const auto* d = std::get_if<Dense>(&l)) return d->bias;
  if (const auto* r = std::get_if<LowRankDense>(&l)) return r->bias;
  if (const auto* m = std::get_if<MaskedDense>(&l)) return m->bias;
  throw InvalidArgument("bias_of: activation layer has no bias");
}

/// Layer stack split into a shared body [0, split) and a personalized head [split, size).
struct Model {
  std::vector<Layer> layers;
  std::size_t split = 0;
  /// Bumped on every in-place parameter update; forward caches remember it.
  std::uint64_t revision = 0;

  std::size_t input_dim() const {
    for (const auto& l : layers)
      if (is_linear(l)) return in_dim(l);
    return 0;
  }
  std::size_t output_dim() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      if (is_linear(*it)) return out_dim(*it);
    return 0;
  }

  /// Checks that adjacent linear layers compose and that split is in range.
  void validate() const {
    if (split > layers.size()) {
      throw DimensionError("model split " + std::to_string(split) + " exceeds layer count " +
                           std::to_string(layers.size()));
    }
    std::size_t width = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (!is_linear(l)) continue;
      if (width != 0 && in_dim(l) != width) {
        throw DimensionError("layer " + std::to_string(i) + " expects width " +
                             std::to_string(in_dim(l)) + " but receives " + std::to_string(width));
      }
      width = out_dim(l);
      if (const auto* r = std::get_if<LowRankDense>(&l)) {
        if (r->a.cols() != r->b.rows() || r->a.rows() != r->bias.cols() ||
            r->a.cols() > std::min(r->a.rows(), r->b.cols())) {
          throw DimensionError("layer " + std::to_string(i) + ": inconsistent low-rank factors " +
                               r->a.shape() + " and " + r->b.shape());
        }
      }
      if (const auto* m = std::get_if<MaskedDense>(&l)) {
        if (!m->mask.same_shape(m->weight)) {
          throw DimensionError("layer " + std::to_string(i) + ": mask shape " + m->mask.shape() +
                               " differs from weight " + m->weight.shape());
        }
      }
    }
  }
};

/// Indices of the linear (non-activation) layers, in order.
inline std::vector<std::size_t> linear_layer_indices(const Model& m) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.layers.size(); ++i)
    if (is_linear(m.layers[i])) idx.push_back(i);
  return idx;
}

/// Split index that personalizes the trailing `depth` linear layers (and the activations
/// that follow them). depth 0 means the whole model is shared.
inline std::size_t split_for_personal_depth(const Model& m, std::size_t depth) {
  const auto lin = linear_layer_indices(m);
  if (depth > lin.size()) {
    throw InvalidArgument("personal depth " + std::to_string(depth) + " exceeds the " +
                          std::to_string(lin.size()) + " linear layers of the model");
  }
  if (depth == 0) return m.layers.size();
  return lin[lin.size() - depth];
}

inline std::size_t personal_depth(const Model& m) {
  std::size_t n = 0;
  for (std::size_t i = m.split; i < m.layers.size(); ++i)
    if (is_linear(m.layers[i])) ++n;
  return n;
}

/// Fully connected network widths[0] -> ... -> widths.back(), hidden activation after every
/// layer but the last. Weights are Kaiming-uniform over fan-in, biases start at zero.
inline Model make_mlp(std::span<const std::size_t> widths, Activation hidden, Rng& rng) {
  if (widths.size() < 2) throw InvalidArgument("make_mlp: need at least input and output width");
  Model m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t fan_in = widths[i];
    const std::size_t fan_out = widths[i + 1];
    if (fan_in == 0 || fan_out == 0) throw InvalidArgument("make_mlp: zero width");
    const double gain = hidden == Activation::ReLU ? 6.0 : 3.0;
    const double bound = std::sqrt(gain / static_cast<double>(fan_in));
    Dense d{Matrix(fan_out, fan_in), Matrix(1, fan_out)};
    for (double& w : d.weight.data()) w = (2.0 * rng.uniform() - 1.0) * bound;
    m.layers.emplace_back(std::move(d));
    if (i + 2 < widths.size()) m.layers.emplace_back(ActivationLayer{hidden});
  }
  m.split = m.layers.size();
  return m;
}

// ---------------------------------------------------------------------------------------------
// Forward / backward

struct ForwardCache {
  std::vector<Matrix> inputs;  // input of every layer
  std::uint64_t revision = 0;
  std::size_t layer_count = 0;
  const Model* model = nullptr;
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

namespace detail {

inline void add_bias(Matrix& y, const Matrix& bias) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias.data()[j];
  }
}

inline double activate(Activation fn, double v) {
  switch (fn) {
    case Activation::ReLU: return v > 0.0 ? v : 0.0;
    case Activation::Tanh: return std::tanh(v);
    case Activation::Identity: break;
  }
  return v;
}

inline double activate_grad(Activation fn, double v) {
  switch (fn) {
    case Activation::ReLU: return v > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case Activation::Identity: break;
  }
  return 1.0;
}

inline Matrix layer_forward(const Layer& layer, const Matrix& x) {
  return std::visit(
      [&](const auto& l) -> Matrix {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ActivationLayer>) {
          Matrix y = x;
          for (double& v : y.data()) v = activate(l.fn, v);
          return y;
        } else {
          if (x.cols() != in_dim(layer)) {
            throw DimensionError("forward: input " + x.shape() + " does not match layer input width " +
                                 std::to_string(in_dim(layer)));
          }
          Matrix y;
          if constexpr (std::is_same_v<T, LowRankDense>) {
            y = matmul_nt(matmul_nt(x, l.b), l.a);
          } else {
            y = matmul_nt(x, l.weight);
          }
          add_bias(y, l.bias);
          return y;
        }
      },
      layer);
}

inline Matrix apply_layers(const Model& m, std::size_t begin, std::size_t end, Matrix x,
                           ForwardCache* cache) {
  for (std::size_t i = begin; i < end; ++i) {
    if (cache) cache->inputs.push_back(x);
    x = layer_forward(m.layers[i], x);
  }
  return x;
}

}  // namespace detail

/// Runs the model on a batch (rows are samples) and keeps the intermediates for backward().
inline ForwardResult forward(const Model& model, const Matrix& x) {
  if (!model.layers.empty() && x.cols() != model.input_dim()) {
    throw DimensionError("forward: batch " + x.shape() + " does not match model input width " +
                         std::to_string(model.input_dim()));
  }
  ForwardResult r;
  r.cache.inputs.reserve(model.layers.size());
  r.output = detail::apply_layers(model, 0, model.layers.size(), x, &r.cache);
  r.cache.revision = model.revision;
  r.cache.layer_count = model.layers.size();
  r.cache.model = &model;
  return r;
}

/// Forward pass without caching.
inline Matrix predict(const Model& model, const Matrix& x) {
  if (!model.layers.empty() && x.cols() != model.input_dim()) {
    throw DimensionError("predict: batch " + x.shape() + " does not match model input width " +
                         std::to_string(model.input_dim()));
  }
  return detail::apply_layers(model, 0, model.layers.size(), x, nullptr);
}

/// Per-layer gradients congruent with params(layer).
struct Gradients {
  std::vector<std::vector<Matrix>> layers;
};

inline Gradients zero_gradients(const Model& m) {
  Gradients g;
  g.layers.reserve(m.layers.size());
  for (const auto& l : m.layers) {
    std::vector<Matrix> lg;
    for (const Matrix* p : params(l)) lg.emplace_back(p->rows(), p->cols());
    g.layers.push_back(std::move(lg));
  }
  return g;
}

/// Backpropagates dLoss/dOutput through the cached forward pass.
inline Gradients backward(const Model& model, const ForwardCache& cache, const Matrix& grad_output) {
  if (cache.model != &model || cache.revision != model.revision ||
      cache.layer_count != model.layers.size() || cache.inputs.size() != model.layers.size()) {
    throw InvalidArgument("backward: stale forward cache (model changed since forward)");
  }
  Gradients grads = zero_gradients(model);
  Matrix g = grad_output;
  for (std::size_t idx = model.layers.size(); idx-- > 0;) {
    const Matrix& x = cache.inputs[idx];
    auto& lg = grads.layers[idx];
    const bool need_input_grad = idx > 0;
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, ActivationLayer>) {
            for (std::size_t i = 0; i < g.size(); ++i)
              g.data()[i] *= detail::activate_grad(l.fn, x.data()[i]);
          } else {
            if (g.cols() != l.bias.cols() || g.rows() != x.rows()) {
              throw DimensionError("backward: gradient " + g.shape() + " does not match layer output");
            }
            Matrix db(1, l.bias.cols());
            for (std::size_t i = 0; i < g.rows(); ++i) {
              auto r = g.row(i);
              for (std::size_t j = 0; j < r.size(); ++j) db.data()[j] += r[j];
            }
            if constexpr (std::is_same_v<T, LowRankDense>) {
              const Matrix h = matmul_nt(x, l.b);  // batch x r
              lg[0] = matmul_tn(g, h);              // out x r
              Matrix dh = matmul(g, l.a);           // batch x r
              lg[1] = matmul_tn(dh, x);             // r x in
              lg[2] = std::move(db);
              if (need_input_grad) g = matmul(dh, l.b);
            } else if constexpr (std::is_same_v<T, MaskedDense>) {
              lg[0] = hadamard(matmul_tn(g, x), l.mask);
              lg[1] = std::move(db);
              if (need_input_grad) g = matmul(g, l.weight);
            } else {
              lg[0] = matmul_tn(g, x);
              lg[1] = std::move(db);
              if (need_input_grad) g = matmul(g, l.weight);
            }
          }
        },
        model.layers[idx]);
  }
  return grads;
}

// ---------------------------------------------------------------------------------------------
// Losses

enum class LossKind { MSE, CrossEntropy };

/// Regression targets (n x out matrix) or class labels.
class Targets {
 public:
  static Targets regression(Matrix values) {
    Targets t;
    t.values_ = std::move(values);
    t.is_labels_ = false;
    return t;
  }
  static Targets regression(std::span<const double> values) {
    return regression(Matrix::column(values));
  }
  static Targets classes(std::vector<int> labels) {
    Targets t;
    t.labels_ = std::move(labels);
    t.is_labels_ = true;
    return t;
  }

  bool is_labels() const noexcept { return is_labels_; }
  std::size_t rows() const noexcept { return is_labels_ ? labels_.size() : values_.rows(); }
  const Matrix& values() const noexcept { return values_; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  Targets subset(std::span<const std::size_t> idx) const {
    if (is_labels_) {
      std::vector<int> l(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) l[i] = labels_[idx[i]];
      return classes(std::move(l));
    }
    return regression(select_rows(values_, idx));
  }

 private:
  Matrix values_;
  std::vector<int> labels_;
  bool is_labels_ = false;
};

inline constexpr double kProbClamp = 1e-12;

namespace detail {

inline void check_targets(const Matrix& output, const Targets& t, LossKind kind) {
  if (t.rows() != output.rows()) {
    throw DimensionError("loss: " + std::to_string(t.rows()) + " targets for output " + output.shape());
  }
  if (kind == LossKind::CrossEntropy) {
    if (!t.is_labels()) throw InvalidArgument("loss: cross-entropy needs class labels");
    for (int c : t.labels()) {
      if (c < 0 || static_cast<std::size_t>(c) >= output.cols()) {
        throw InvalidArgument("loss: target class " + std::to_string(c) + " out of range [0, " +
                              std::to_string(output.cols()) + ")");
      }
    }
  } else {
    if (t.is_labels()) throw InvalidArgument("loss: MSE needs real-valued targets");
    if (!t.values().same_shape(output)) {
      throw DimensionError("loss: targets " + t.values().shape() + " vs output " + output.shape());
    }
  }
}

inline void check_weights(std::span<const double> w, std::size_t n) {
  if (w.size() != n) {
    throw DimensionError("loss: " + std::to_string(w.size()) + " weights for batch of " + std::to_string(n));
  }
  for (double v : w)
    if (!(v >= 0.0)) throw InvalidArgument("loss: negative or NaN sample weight");
}

}  // namespace detail

/// Row-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto r = p.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      s += v;
    }
    for (double& v : r) v /= s;
  }
  return p;
}

/// Loss of every sample: squared error summed over outputs, or clamped negative log-likelihood.
inline Vector per_sample_loss(const Matrix& output, const Targets& targets, LossKind kind) {
  detail::check_targets(output, targets, kind);
  Vector loss(output.rows(), 0.0);
  if (kind == LossKind::MSE) {
    for (std::size_t i = 0; i < output.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < output.cols(); ++j) {
        const double d = output(i, j) - targets.values()(i, j);
        s += d * d;
      }
      loss[i] = s;
    }
  } else {
    const Matrix p = softmax(output);
    for (std::size_t i = 0; i < output.rows(); ++i) {
      const double pi = std::clamp(p(i, static_cast<std::size_t>(targets.labels()[i])), kProbClamp,
                                   1.0 - kProbClamp);
      loss[i] = -std::log(pi);
    }
  }
  return loss;
}

/// (1 / sum w) * sum_i w_i * loss_i.
inline double weighted_loss(const Matrix& output, const Targets& targets, std::span<const double> weights,
                            LossKind kind) {
  detail::check_weights(weights, output.rows());
  const Vector l = per_sample_loss(output, targets, kind);
  double total = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    total += weights[i] * l[i];
    wsum += weights[i];
  }
  if (wsum <= 0.0) throw InvalidArgument("weighted_loss: weights sum to zero");
  return total / wsum;
}

/// Gradient of weighted_loss with respect to the output.
inline Matrix weighted_loss_grad(const Matrix& output, const Targets& targets,
                                 std::span<const double> weights, LossKind kind) {
  detail::check_weights(weights, output.rows());
  detail::check_targets(output, targets, kind);
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (wsum <= 0.0) throw InvalidArgument("weighted_loss_grad: weights sum to zero");
  Matrix g(output.rows(), output.cols());
  if (kind == LossKind::MSE) {
    for (std::size_t i = 0; i < output.rows(); ++i) {
      const double scale = 2.0 * weights[i] / wsum;
      for (std::size_t j = 0; j < output.cols(); ++j)
        g(i, j) = scale * (output(i, j) - targets.values()(i, j));
    }
  } else {
    g = softmax(output);
    for (std::size_t i = 0; i < output.rows(); ++i) {
      g(i, static_cast<std::size_t>(targets.labels()[i])) -= 1.0;
      const double scale = weights[i] / wsum;
      for (double& v : g.row(i)) v *= scale;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// Optimizer

enum class ParamFilter { Shared, Personal, All };

inline bool layer_selected(const Model& m, std::size_t layer, ParamFilter f) {
  switch (f) {
    case ParamFilter::Shared: return layer < m.split;
    case ParamFilter::Personal: return layer >= m.split;
    case ParamFilter::All: break;
  }
  return true;
}

/// SGD with heavy-ball momentum: v <- momentum * v + g; p <- p - lr * v.
/// `shared_lr`, when set, replaces `lr` for layers of the shared body.
struct SgdMomentum {
  double lr = 0.01;
  double momentum = 0.0;
  std::optional<double> shared_lr;
  std::vector<std::vector<Matrix>> velocity;

  SgdMomentum() = default;
  SgdMomentum(double lr_, double momentum_, std::optional<double> shared_lr_ = std::nullopt)
      : lr(lr_), momentum(momentum_), shared_lr(shared_lr_) {
    if (!(lr > 0.0) && lr != 0.0) throw InvalidArgument("SgdMomentum: learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("SgdMomentum: momentum must be in [0, 1)");
  }
};

inline void sgd_step(SgdMomentum& opt, Model& model, const Gradients& grads, ParamFilter filter) {
  if (grads.layers.size() != model.layers.size()) {
    throw DimensionError("sgd_step: gradients cover " + std::to_string(grads.layers.size()) +
                         " layers, model has " + std::to_string(model.layers.size()));
  }
  if (opt.velocity.empty()) opt.velocity = zero_gradients(model).layers;
  if (opt.velocity.size() != model.layers.size()) {
    throw DimensionError("sgd_step: optimizer state does not match model");
  }
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    if (!layer_selected(model, li, filter)) continue;
    auto ps = params(model.layers[li]);
    auto& vel = opt.velocity[li];
    const auto& gl = grads.layers[li];
    if (gl.size() != ps.size() || vel.size() != ps.size()) {
      throw DimensionError("sgd_step: parameter count mismatch at layer " + std::to_string(li));
    }
    const double lr = (li < model.split && opt.shared_lr) ? *opt.shared_lr : opt.lr;
    for (std::size_t k = 0; k < ps.size(); ++k) {
      Matrix& p = *ps[k];
      if (!p.same_shape(gl[k]) || !p.same_shape(vel[k])) {
        throw DimensionError("sgd_step: gradient " + gl[k].shape() + " vs parameter " + p.shape());
      }
      auto pv = p.data();
      auto gv = gl[k].data();
      auto vv = vel[k].data();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        vv[i] = opt.momentum * vv[i] + gv[i];
        pv[i] -= lr * vv[i];
      }
    }
    if (auto* m = std::get_if<MaskedDense>(&model.layers[li])) {
      for (std::size_t i = 0; i < m->weight.size(); ++i)
        if (m->mask.data()[i] == 0.0) m->weight.data()[i] = 0.0;
    }
  }
  ++model.revision;
}

// ---------------------------------------------------------------------------------------------
// Parameter counting

enum class Partition { Shared, Personal, All };

inline std::size_t layer_parameter_count(const Layer& l) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Dense>) return x.weight.size() + x.bias.size();
        else if constexpr (std::is_same_v<T, LowRankDense>) return x.a.size() + x.b.size() + x.bias.size();
        else if constexpr (std::is_same_v<T, MaskedDense>) {
          std::size_t nz = 0;
          for (double v : x.mask.data()) nz += v != 0.0 ? 1 : 0;
          return nz + x.bias.size();
        } else return 0;
      },
      l);
}

/// Trainable scalar count of a partition.
inline std::size_t parameter_count(const Model& m, Partition part) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const bool shared = i < m.split;
    if (part == Partition::Shared && !shared) continue;
    if (part == Partition::Personal && shared) continue;
    n += layer_parameter_count(m.layers[i]);
  }
  return n;
}

// ---------------------------------------------------------------------------------------------
// Parameter vectors for the shared body

/// Copies of all parameter matrices of layers [begin, end).
inline std::vector<Matrix> collect_params(const Model& m, std::size_t begin, std::size_t end) {
  std::vector<Matrix> out;
  for (std::size_t i = begin; i < end; ++i)
    for (const Matrix* p : params(m.layers[i])) out.push_back(*p);
  return out;
}

inline std::vector<Matrix> shared_params(const Model& m) { return collect_params(m, 0, m.split); }
inline std::vector<Matrix> personal_params(const Model& m) {
  return collect_params(m, m.split, m.layers.size());
}

/// Overwrites the shared body with `values` (same order as shared_params()).
inline void load_shared_params(Model& m, std::span<const Matrix> values) {
  std::size_t k = 0;
  for (std::size_t i = 0; i < m.split; ++i) {
    for (Matrix* p : params(m.layers[i])) {
      if (k >= values.size() || !p->same_shape(values[k])) {
        throw DimensionError("load_shared_params: shared parameter layout mismatch at layer " +
                             std::to_string(i));
      }
      *p = values[k++];
    }
  }
  if (k != values.size()) throw DimensionError("load_shared_params: too many parameter blocks");
  ++m.revision;
}

inline bool all_params_finite(const Model& m) {
  for (const auto& l : m.layers)
    for (const Matrix* p : params(l))
      if (!p->all_finite()) return false;
  return true;
}

}  // namespace ppfe::nn

#pragma once

// Models, losses, gradients and local SGD.
//
// Two model kinds: multinomial logistic regression and a 1-hidden-layer tanh
// MLP.  Parameters live in a flat vector with a fixed layout:
//
//   multinomial-logistic:  W[C x D] row-major, then bias b[C]
//   mlp-1hidden:           W1[Hd x D], b1[Hd], W2[C x Hd], b2[C]
//
// All batch reductions accumulate per-example contributions in ascending
// example-index order, so results depend only on batch membership, never on
// the order a batch was presented in.  Everything is 64-bit and pure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedstas/core.hpp"
#include "fedstas/rng.hpp"

namespace fedstas {

enum class ModelKind { multinomial_logistic, mlp_1hidden };

struct ModelSpec {
  ModelKind kind = ModelKind::multinomial_logistic;
  int input_dim = 0;
  int num_classes = 0;
  int hidden_dim = 0;  // mlp only

  std::size_t param_count() const {
    const auto d = static_cast<std::size_t>(input_dim);
    const auto c = static_cast<std::size_t>(num_classes);
    if (kind == ModelKind::multinomial_logistic) return c * d + c;
    const auto h = static_cast<std::size_t>(hidden_dim);
    return h * d + h + c * h + c;
  }
};

struct ParamVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

inline ParamVector zeros_like(const ModelSpec& spec) {
  return ParamVector{std::vector<double>(spec.param_count(), 0.0)};
}

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 1;
  int batch_size = 32;
};

namespace detail {

inline void check_params(const ModelSpec& spec, const ParamVector& params) {
  if (params.size() != spec.param_count())
    throw ContractError("parameter vector length " + std::to_string(params.size()) +
                        " does not match model spec (" +
                        std::to_string(spec.param_count()) + ")");
}

inline void check_example(const ModelSpec& spec, const Example& ex) {
  if (ex.features.size() != static_cast<std::size_t>(spec.input_dim))
    throw ContractError("example feature dim " + std::to_string(ex.features.size()) +
                        " does not match input_dim " + std::to_string(spec.input_dim));
  if (ex.label < 0 || ex.label >= spec.num_classes)
    throw ContractError("label " + std::to_string(ex.label) + " out of range");
}

// log(sum exp(z)) with max-subtraction; also exposes softmax probabilities.
inline double softmax_inplace(std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return zmax + std::log(sum);  // log-sum-exp of the original logits
}

// Per-example forward pass. Fills `probs` with softmax outputs and returns the
// cross-entropy loss. Scratch buffers are caller-provided to avoid churn.
struct Workspace {
  std::vector<double> logits;   // C
  std::vector<double> hidden;   // Hd (mlp)
  std::vector<double> dlogits;  // C
  std::vector<double> dhidden;  // Hd
};

inline double forward_example(const ModelSpec& spec, const ParamVector& p,
                              const Example& ex, Workspace& ws) {
  const int d = spec.input_dim, c = spec.num_classes;
  ws.logits.assign(static_cast<std::size_t>(c), 0.0);
  if (spec.kind == ModelKind::multinomial_logistic) {
    const double* w = p.values.data();
    const double* b = w + static_cast<std::size_t>(c) * d;
    for (int i = 0; i < c; ++i) {
      double z = b[i];
      const double* row = w + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) z += row[j] * ex.features[static_cast<std::size_t>(j)];
      ws.logits[static_cast<std::size_t>(i)] = z;
    }
  } else {
    const int h = spec.hidden_dim;
    const double* w1 = p.values.data();
    const double* b1 = w1 + static_cast<std::size_t>(h) * d;
    const double* w2 = b1 + h;
    const double* b2 = w2 + static_cast<std::size_t>(c) * h;
    ws.hidden.assign(static_cast<std::size_t>(h), 0.0);
    for (int i = 0; i < h; ++i) {
      double z = b1[i];
      const double* row = w1 + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) z += row[j] * ex.features[static_cast<std::size_t>(j)];
      ws.hidden[static_cast<std::size_t>(i)] = std::tanh(z);
    }
    for (int i = 0; i < c; ++i) {
      double z = b2[i];
      const double* row = w2 + static_cast<std::size_t>(i) * h;
      for (int j = 0; j < h; ++j) z += row[j] * ws.hidden[static_cast<std::size_t>(j)];
      ws.logits[static_cast<std::size_t>(i)] = z;
    }
  }
  const double lse = softmax_inplace(ws.logits);  // logits now hold probabilities
  (void)lse;
  const double pl = ws.logits[static_cast<std::size_t>(ex.label)];
  return -std::log(std::max(pl, 1e-300));
}

// Accumulates this example's loss gradient into `grad` (unscaled sum).
inline void backward_example(const ModelSpec& spec, const ParamVector& p,
                             const Example& ex, Workspace& ws, ParamVector& grad) {
  forward_example(spec, p, ex, ws);
  const int d = spec.input_dim, c = spec.num_classes;
  ws.dlogits = ws.logits;  // softmax probabilities
  ws.dlogits[static_cast<std::size_t>(ex.label)] -= 1.0;

  if (spec.kind == ModelKind::multinomial_logistic) {
    double* gw = grad.values.data();
    double* gb = gw + static_cast<std::size_t>(c) * d;
    for (int i = 0; i < c; ++i) {
      const double dz = ws.dlogits[static_cast<std::size_t>(i)];
      double* row = gw + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) row[j] += dz * ex.features[static_cast<std::size_t>(j)];
      gb[i] += dz;
    }
    return;
  }

  const int h = spec.hidden_dim;
  const double* w2 = p.values.data() + static_cast<std::size_t>(h) * d + h;
  double* gw1 = grad.values.data();
  double* gb1 = gw1 + static_cast<std::size_t>(h) * d;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + static_cast<std::size_t>(c) * h;

  ws.dhidden.assign(static_cast<std::size_t>(h), 0.0);
  for (int i = 0; i < c; ++i) {
    const double dz = ws.dlogits[static_cast<std::size_t>(i)];
    const double* row = w2 + static_cast<std::size_t>(i) * h;
    double* grow = gw2 + static_cast<std::size_t>(i) * h;
    for (int j = 0; j < h; ++j) {
      grow[j] += dz * ws.hidden[static_cast<std::size_t>(j)];
      ws.dhidden[static_cast<std::size_t>(j)] += dz * row[j];
    }
    gb2[i] += dz;
  }
  for (int i = 0; i < h; ++i) {
    const double a = ws.hidden[static_cast<std::size_t>(i)];
    const double dz = ws.dhidden[static_cast<std::size_t>(i)] * (1.0 - a * a);
    double* row = gw1 + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) row[j] += dz * ex.features[static_cast<std::size_t>(j)];
    gb1[i] += dz;
  }
}

inline std::vector<std::size_t> sorted_indices(std::span<const std::size_t> idx) {
  std::vector<std::size_t> s(idx.begin(), idx.end());
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace detail

/// Mean cross-entropy of `params` over data[idx] for each index in `idx`.
/// Accumulation runs in ascending index order regardless of the order of idx.
inline double forward_loss(const ModelSpec& spec, const ParamVector& params,
                           std::span<const Example> data,
                           std::span<const std::size_t> idx) {
  detail::check_params(spec, params);
  if (idx.empty()) throw ContractError("forward_loss: empty batch");
  detail::Workspace ws;
  double sum = 0.0;
  for (std::size_t i : detail::sorted_indices(idx)) {
    detail::check_example(spec, data[i]);
    sum += detail::forward_example(spec, params, data[i], ws);
  }
  const double loss = sum / static_cast<double>(idx.size());
  if (!std::isfinite(loss)) throw NumericalError("forward_loss: non-finite loss");
  return loss;
}

inline double forward_loss(const ModelSpec& spec, const ParamVector& params,
                           std::span<const Example> batch) {
  std::vector<std::size_t> idx(batch.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return forward_loss(spec, params, batch, idx);
}

/// Gradient of forward_loss w.r.t. params (same ordering guarantee).
inline ParamVector gradient(const ModelSpec& spec, const ParamVector& params,
                            std::span<const Example> data,
                            std::span<const std::size_t> idx) {
  detail::check_params(spec, params);
  if (idx.empty()) throw ContractError("gradient: empty batch");
  detail::Workspace ws;
  ParamVector grad = zeros_like(spec);
  for (std::size_t i : detail::sorted_indices(idx)) {
    detail::check_example(spec, data[i]);
    detail::backward_example(spec, params, data[i], ws, grad);
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (double& g : grad.values) {
    g *= inv;
    if (!std::isfinite(g)) throw NumericalError("gradient: non-finite component");
  }
  return grad;
}

inline ParamVector gradient(const ModelSpec& spec, const ParamVector& params,
                            std::span<const Example> batch) {
  std::vector<std::size_t> idx(batch.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return gradient(spec, params, batch, idx);
}

/// E epochs of mini-batch SGD with a seed-deterministic shuffle per epoch.
/// Batch membership comes from the shuffle; within a batch the gradient
/// accumulates in ascending index order.
inline ParamVector local_train(const ModelSpec& spec, const ParamVector& params_init,
                               std::span<const Example> data, const TrainConfig& cfg,
                               Rng rng) {
  detail::check_params(spec, params_init);
  if (data.empty()) throw ContractError("local_train: empty dataset");
  if (cfg.learning_rate <= 0.0 && cfg.learning_rate != 0.0)
    throw ContractError("local_train: negative learning rate");
  if (cfg.epochs < 1) throw ContractError("local_train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ContractError("local_train: batch_size must be >= 1");

  ParamVector params = params_init;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      const ParamVector g = gradient(spec, params, data, batch);
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= cfg.learning_rate * g[i];
    }
    for (double v : params.values)
      if (!std::isfinite(v))
        throw NumericalError("local_train: parameters diverged at epoch " +
                             std::to_string(epoch));
  }
  return params;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean loss and argmax accuracy; prediction ties break to the lowest class.
inline EvalResult evaluate(const ModelSpec& spec, const ParamVector& params,
                           std::span<const Example> test) {
  detail::check_params(spec, params);
  if (test.empty()) throw ContractError("evaluate: empty test set");
  detail::Workspace ws;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const Example& ex : test) {
    detail::check_example(spec, ex);
    loss_sum += detail::forward_example(spec, params, ex, ws);
    int best = 0;
    for (int c = 1; c < spec.num_classes; ++c)
      if (ws.logits[static_cast<std::size_t>(c)] > ws.logits[static_cast<std::size_t>(best)])
        best = c;
    if (best == ex.label) ++correct;
  }
  return EvalResult{loss_sum / static_cast<double>(test.size()),
                    static_cast<double>(correct) / static_cast<double>(test.size())};
}

/// Zero for the logistic model, small seeded uniform for the MLP.
inline ParamVector init_params(const ModelSpec& spec, Rng rng) {
  ParamVector p = zeros_like(spec);
  if (spec.kind == ModelKind::mlp_1hidden) {
    for (double& v : p.values) v = (rng.next_double() * 2.0 - 1.0) * 0.05;
  }
  return p;
}

}  // namespace fedstas

#pragma once

// Data-level sampling inside a participating client: an independent
// Bernoulli(p_tilde) draw over the local examples, followed by local SGD on
// the drawn subset.  p_tilde = data_budget / n_estimate, where the estimate
// comes from the privatized size reports; the clamp that keeps p_tilde in
// (0, 1] happens where the plan is built (make_sample_plan).

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "fedstas/compression.hpp"
#include "fedstas/core.hpp"
#include "fedstas/model.hpp"
#include "fedstas/privacy.hpp"
#include "fedstas/rng.hpp"

namespace fedstas {

struct DataSamplePlan {
  double inclusion_prob = 1.0;  // p_tilde
  int data_budget = 0;          // requested total examples across clients

  void validate() const {
    if (!(inclusion_prob > 0.0 && inclusion_prob <= 1.0))
      throw ContractError("data sample plan: inclusion_prob outside (0, 1]");
    if (data_budget < 1) throw ContractError("data sample plan: data_budget < 1");
  }
};

/// p_tilde = data_budget / max(n_estimate, num_reports, data_budget).  The
/// clamp keeps the probability finite and at most one even when the de-biased
/// size estimate comes out tiny or negative.
inline DataSamplePlan make_sample_plan(int data_budget, double n_estimate,
                                       int num_reports) {
  if (data_budget < 1) throw ContractError("make_sample_plan: data_budget < 1");
  double floor_n = static_cast<double>(std::max(num_reports, data_budget));
  const double n = std::max(n_estimate, floor_n);
  DataSamplePlan plan;
  plan.data_budget = data_budget;
  plan.inclusion_prob = static_cast<double>(data_budget) / n;
  plan.validate();
  return plan;
}

/// Independent Bernoulli(p_tilde) over the examples in index order.  An empty
/// draw keeps one uniformly chosen example so local training stays defined.
inline std::vector<std::size_t> sample_local_indices(std::size_t dataset_size,
                                                     const DataSamplePlan& plan,
                                                     Rng& rng) {
  plan.validate();
  if (dataset_size == 0) throw ContractError("sample_local: empty dataset");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < dataset_size; ++i)
    if (rng.next_double() < plan.inclusion_prob) keep.push_back(i);
  if (keep.empty()) keep.push_back(static_cast<std::size_t>(rng.next_below(dataset_size)));
  return keep;
}

inline std::vector<Example> sample_local(const LocalDataset& data,
                                         const DataSamplePlan& plan, Rng rng) {
  const auto idx = sample_local_indices(data.examples.size(), plan, rng);
  std::vector<Example> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data.examples[i]);
  return out;
}

/// One client's round: draw the data sample once, train E epochs on it, and
/// return the updated parameters plus the compressed update direction
/// G = params_new - params_old.
inline std::pair<ParamVector, CompressedGradient> client_update(
    const ModelSpec& spec, const LocalDataset& client, const ParamVector& params,
    const DataSamplePlan& plan, const TrainConfig& train_cfg,
    const SketchConfig& sketch_cfg, Rng sample_rng, Rng train_rng) {
  const std::vector<Example> sample = sample_local(client, plan, sample_rng);
  ParamVector updated = local_train(spec, params, sample, train_cfg, train_rng);
  std::vector<double> g(updated.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = updated[i] - params[i];
  return {std::move(updated), compress_gradient(g, sketch_cfg)};
}

/// Monte Carlo estimate of E[(p_tilde - p)^2]: each trial privatizes every
/// size in `true_sizes`, de-biases the report sum into an estimate, and
/// compares the resulting clamped probability with p = data_budget / n_true.
inline double mse_p_tilde(const std::vector<int>& true_sizes, const PrivacyConfig& cfg,
                          int data_budget, int trials, Rng rng) {
  cfg.validate();
  if (true_sizes.empty()) throw ContractError("mse_p_tilde: no sizes");
  if (trials < 1) throw ContractError("mse_p_tilde: trials < 1");
  long long n_true = 0;
  for (int s : true_sizes) n_true += s;
  const double p = static_cast<double>(data_budget) / static_cast<double>(n_true);
  const int m = static_cast<int>(true_sizes.size());

  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    double report_sum = 0.0;
    for (int s : true_sizes) report_sum += privatize_size(s, cfg, rng);
    const double n_est = estimate_total(m, cfg, report_sum);
    const DataSamplePlan plan = make_sample_plan(data_budget, n_est, m);
    const double d = plan.inclusion_prob - p;
    acc += d * d;
  }
  return acc / static_cast<double>(trials);
}

}  // namespace fedstas

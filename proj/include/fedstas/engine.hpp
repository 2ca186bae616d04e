#pragma once

// Round orchestration for all four strategies.
//
//   uniform:    m clients without replacement, full local data, plain mean.
//   fedsts:     stratify on stored compressed updates, Neyman allocation,
//               norm-proportional with-replacement sampling, full local data.
//   fedstas:    fedsts plus data-level Bernoulli sampling with p from the
//               participants' true total size.
//   fedstas-dp: fedstas with the total size estimated from privatized
//               reports instead of the true value.
//
// Stratified strategies need a compressed update per client before round 1.
// A one-time seeding pass at round 0 trains every client for one epoch from
// the initial parameters, keeps only the compressed update directions, and
// discards the trained parameters.  After that a client's stored update is
// refreshed only in rounds where it participates, so stratification runs on
// stale gradients for clients that have not been drawn recently.
//
// Every random decision draws from an rng_stream keyed by
// (master_seed, domain, round, entity); rounds are 1-based, the seeding pass
// is round 0.  Nothing reads the wall clock except the wall_ms field, which
// never feeds back into the simulation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedstas/client_sampling.hpp"
#include "fedstas/compression.hpp"
#include "fedstas/core.hpp"
#include "fedstas/data_pipeline.hpp"
#include "fedstas/data_sampling.hpp"
#include "fedstas/model.hpp"
#include "fedstas/privacy.hpp"
#include "fedstas/rng.hpp"
#include "fedstas/stratification.hpp"

namespace fedstas {

enum class StrategyKind { uniform, fedsts, fedstas, fedstas_dp };

inline std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::uniform: return "uniform";
    case StrategyKind::fedsts: return "fedsts";
    case StrategyKind::fedstas: return "fedstas";
    case StrategyKind::fedstas_dp: return "fedstas-dp";
  }
  return "?";
}

inline std::string to_string(AggregationMode m) {
  return m == AggregationMode::plain ? "plain" : "ht-corrected";
}

struct Strategy {
  StrategyKind kind = StrategyKind::fedstas;
  AggregationMode aggregation = AggregationMode::plain;
};

struct DatasetConfig {
  enum class Source { synthetic, idx };
  Source source = Source::synthetic;

  // synthetic
  int num_classes = 10;
  int input_dim = 64;
  int train_per_class = 600;
  int test_per_class = 100;
  double class_separation = 3.0;

  // idx
  std::string train_images, train_labels, test_images, test_labels;
};

struct ExperimentConfig {
  int num_clients = 0;       // N
  int clients_per_round = 0; // m
  int num_strata = 1;        // H
  int rounds = 0;            // T

  // Data-level budget: sample_ratio > 0 derives the budget each round as
  // ceil(q * participants' true total); otherwise data_budget is used as is.
  double sample_ratio = 0.0;
  int data_budget = 0;

  TrainConfig train;
  SketchConfig sketch;
  std::optional<PrivacyConfig> privacy;

  PartitionScheme partition_scheme = PartitionScheme::iid;
  double alpha_dir = 0.0;

  ModelSpec model;
  DatasetConfig dataset;
  std::uint64_t master_seed = 0;

  void validate(const Strategy& strategy) const {
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (clients_per_round < 1 || clients_per_round > num_clients)
      throw ConfigError("clients_per_round must be in [1, num_clients]");
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (train.learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (train.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (model.input_dim < 1 || model.num_classes < 2)
      throw ConfigError("model needs input_dim >= 1 and num_classes >= 2");
    if (model.kind == ModelKind::mlp_1hidden && model.hidden_dim < 1)
      throw ConfigError("mlp model needs hidden_dim >= 1");
    if (partition_scheme == PartitionScheme::dirichlet && !(alpha_dir > 0.0))
      throw ConfigError("dirichlet partition needs alpha_dir > 0");

    const bool stratified = strategy.kind != StrategyKind::uniform;
    if (stratified) {
      if (num_strata < 1 || num_strata > num_clients)
        throw ConfigError("num_strata must be in [1, num_clients]");
      if (clients_per_round < num_strata)
        throw ConfigError("clients_per_round must be >= num_strata so every "
                          "stratum can be represented");
      try {
        sketch.validate();
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
    }
    const bool data_sampling = strategy.kind == StrategyKind::fedstas ||
                               strategy.kind == StrategyKind::fedstas_dp;
    if (data_sampling) {
      const bool has_q = sample_ratio > 0.0;
      const bool has_budget = data_budget >= 1;
      if (has_q == has_budget)
        throw ConfigError("set exactly one of sample_ratio and data_budget "
                          "for data-sampling strategies");
      if (has_q && sample_ratio > 1.0) throw ConfigError("sample_ratio must be <= 1");
    }
    if (strategy.kind == StrategyKind::fedstas_dp) {
      if (!privacy) throw ConfigError("fedstas-dp requires a privacy section");
      try {
        privacy->validate();
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
    }
  }
};

struct MetricsRecord {
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  std::vector<int> selected_clients;  // draw order, duplicates possible
  int n_selected_distinct = 0;
  std::vector<int> allocation;        // m_h (empty for uniform)
  bool dp_active = false;
  double ntilde = 0.0;                // meaningful when dp_active
  int round_data_budget = 0;          // 0 when no data-level sampling
  double p_tilde = 1.0;
  double wall_ms = 0.0;               // measured; excluded from metrics CSV
};

struct ExperimentResult {
  std::vector<MetricsRecord> metrics;
  ParamVector final_params;
  Partition partition;
};

inline std::pair<std::vector<Example>, std::vector<Example>> load_dataset(
    const DatasetConfig& ds, std::uint64_t master_seed) {
  if (ds.source == DatasetConfig::Source::idx) {
    auto train = load_idx(ds.train_images, ds.train_labels);
    auto test = load_idx(ds.test_images, ds.test_labels);
    return {std::move(train), std::move(test)};
  }
  auto train = synthesize(ds.num_classes, ds.input_dim, ds.train_per_class,
                          ds.class_separation, derive_seed(master_seed, "dataset", 0, 0));
  auto test = synthesize(ds.num_classes, ds.input_dim, ds.test_per_class,
                         ds.class_separation, derive_seed(master_seed, "dataset", 0, 1));
  return {std::move(train), std::move(test)};
}

class Engine {
 public:
  Engine(ExperimentConfig cfg, Strategy strategy)
      : cfg_(std::move(cfg)), strategy_(strategy) {
    cfg_.validate(strategy_);

    auto [train, test] = load_dataset(cfg_.dataset, cfg_.master_seed);
    train_ = std::move(train);
    test_ = std::move(test);

    partition_ = cfg_.partition_scheme == PartitionScheme::iid
                     ? partition_iid(train_, cfg_.num_clients, cfg_.master_seed)
                     : partition_dirichlet(train_, cfg_.num_clients, cfg_.alpha_dir,
                                           cfg_.master_seed);

    params_ = init_params(cfg_.model, rng_stream(cfg_.master_seed, "init", 0, 0));

    if (strategy_.kind != StrategyKind::uniform) seed_gradients();
  }

  const Partition& partition() const { return partition_; }
  const ParamVector& params() const { return params_; }
  const ExperimentConfig& config() const { return cfg_; }
  const Strategy& strategy() const { return strategy_; }

  MetricsRecord run_round(int round) {
    const auto t0 = std::chrono::steady_clock::now();
    MetricsRecord rec;
    rec.round = round;
    try {
      if (strategy_.kind == StrategyKind::uniform) {
        round_uniform(round, rec);
      } else {
        round_stratified(round, rec);
      }
    } catch (const ContractError& e) {
      throw ContractError("round " + std::to_string(round) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("round " + std::to_string(round) + ": " + e.what());
    }

    std::vector<int> distinct = rec.selected_clients;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    rec.n_selected_distinct = static_cast<int>(distinct.size());

    const EvalResult on_train = evaluate(cfg_.model, params_, train_);
    const EvalResult on_test = evaluate(cfg_.model, params_, test_);
    rec.train_loss = on_train.loss;
    rec.test_accuracy = on_test.accuracy;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return rec;
  }

  ExperimentResult run_all() {
    ExperimentResult result;
    result.metrics.reserve(static_cast<std::size_t>(cfg_.rounds));
    for (int t = 1; t <= cfg_.rounds; ++t) result.metrics.push_back(run_round(t));
    result.final_params = params_;
    result.partition = partition_;
    return result;
  }

 private:
  LocalDataset client_data(int client) const {
    LocalDataset d;
    d.client_id = client;
    const auto& idx = partition_.client_indices[static_cast<std::size_t>(client)];
    d.examples.reserve(idx.size());
    for (std::size_t i : idx) d.examples.push_back(train_[i]);
    return d;
  }

  std::size_t client_size(int client) const {
    return partition_.client_indices[static_cast<std::size_t>(client)].size();
  }

  void store_gradient(int client, CompressedGradient cg) {
    const auto c = static_cast<std::size_t>(client);
    restored_[c] = restore(cg);
    norms_[c] = compressed_norm(cg);
    gradients_[c] = std::move(cg);
  }

  // Round-0 pass: every client trains one epoch from the initial parameters
  // purely to obtain a first compressed update; the trained parameters are
  // discarded.
  void seed_gradients() {
    gradients_.resize(static_cast<std::size_t>(cfg_.num_clients));
    restored_.resize(static_cast<std::size_t>(cfg_.num_clients));
    norms_.assign(static_cast<std::size_t>(cfg_.num_clients), 0.0);
    TrainConfig seed_cfg = cfg_.train;
    seed_cfg.epochs = 1;
    for (int c = 0; c < cfg_.num_clients; ++c) {
      const LocalDataset data = client_data(c);
      const ParamVector w = local_train(
          cfg_.model, params_, data.examples, seed_cfg,
          rng_stream(cfg_.master_seed, "local-train", 0, static_cast<std::uint64_t>(c)));
      std::vector<double> g(w.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = w[i] - params_[i];
      store_gradient(c, compress_gradient(g, cfg_.sketch));
    }
  }

  void round_uniform(int round, MetricsRecord& rec) {
    const int m = cfg_.clients_per_round;
    Rng pick = rng_stream(cfg_.master_seed, "client-sample",
                          static_cast<std::uint64_t>(round), 0);
    const auto chosen = pick.sample_without_replacement(
        static_cast<std::size_t>(cfg_.num_clients), static_cast<std::size_t>(m));
    for (std::size_t i : chosen) rec.selected_clients.push_back(static_cast<int>(i));

    std::vector<int> order = rec.selected_clients;
    std::sort(order.begin(), order.end());
    ParamVector sum = zeros_like(cfg_.model);
    for (int c : order) {
      const LocalDataset data = client_data(c);
      const ParamVector w = local_train(
          cfg_.model, params_, data.examples, cfg_.train,
          rng_stream(cfg_.master_seed, "local-train", static_cast<std::uint64_t>(round),
                     static_cast<std::uint64_t>(c)));
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += w[i];
    }
    for (std::size_t i = 0; i < sum.size(); ++i)
      sum[i] /= static_cast<double>(m);
    params_ = std::move(sum);
  }

  void round_stratified(int round, MetricsRecord& rec) {
    const auto r = static_cast<std::uint64_t>(round);
    const int m = cfg_.clients_per_round;

    // Stratify on the stored (possibly stale) compressed updates.
    const Stratification strata =
        stratify(restored_, cfg_.num_strata, rng_stream(cfg_.master_seed, "stratify", r, 0));
    const std::vector<std::vector<int>> members = strata.members();

    std::vector<std::vector<double>> norm_groups(members.size());
    std::vector<std::size_t> sizes(members.size());
    for (std::size_t h = 0; h < members.size(); ++h) {
      sizes[h] = members[h].size();
      for (int c : members[h]) norm_groups[h].push_back(norms_[static_cast<std::size_t>(c)]);
    }

    const Allocation alloc = neyman_allocate(sizes, stratum_std(norm_groups), m);
    std::vector<std::vector<double>> probs(members.size());
    for (std::size_t h = 0; h < members.size(); ++h)
      if (!norm_groups[h].empty()) probs[h] = importance_probs(norm_groups[h]);

    const RoundPlan plan = sample_clients(
        members, alloc, probs, rng_stream(cfg_.master_seed, "client-sample", r, 0));
    for (const SelectedClient& s : plan.selected) rec.selected_clients.push_back(s.client_id);
    rec.allocation = alloc.per_stratum;

    // Data-level plan.
    DataSamplePlan ds_plan{1.0, 1};
    const bool data_sampling = strategy_.kind == StrategyKind::fedstas ||
                               strategy_.kind == StrategyKind::fedstas_dp;
    if (data_sampling) {
      long long true_total = 0;
      for (const SelectedClient& s : plan.selected)
        true_total += static_cast<long long>(client_size(s.client_id));
      const int budget =
          cfg_.sample_ratio > 0.0
              ? static_cast<int>(std::ceil(cfg_.sample_ratio * static_cast<double>(true_total)))
              : cfg_.data_budget;
      rec.round_data_budget = budget;

      double n_for_plan = static_cast<double>(true_total);
      if (strategy_.kind == StrategyKind::fedstas_dp) {
        const PrivacyConfig& priv = *cfg_.privacy;
        double report_sum = 0.0;
        for (std::size_t i = 0; i < plan.selected.size(); ++i) {
          const auto true_size = static_cast<long long>(client_size(plan.selected[i].client_id));
          const int clipped = static_cast<int>(
              std::clamp<long long>(true_size, 1, priv.size_cap - 1));
          Rng priv_rng = rng_stream(cfg_.master_seed, "privacy", r, i);
          report_sum += privatize_size(clipped, priv, priv_rng);
        }
        n_for_plan = estimate_total(static_cast<int>(plan.selected.size()), priv, report_sum);
        rec.dp_active = true;
        rec.ntilde = n_for_plan;
      }
      ds_plan = make_sample_plan(budget, n_for_plan, static_cast<int>(plan.selected.size()));
      rec.p_tilde = ds_plan.inclusion_prob;
    }

    // Train each distinct participant once; duplicates reuse the result.
    std::vector<int> distinct;
    for (const SelectedClient& s : plan.selected) distinct.push_back(s.client_id);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::map<int, std::pair<ParamVector, CompressedGradient>> results;
    for (int c : distinct) {
      const LocalDataset data = client_data(c);
      results.emplace(
          c, client_update(cfg_.model, data, params_, ds_plan, cfg_.train, cfg_.sketch,
                           rng_stream(cfg_.master_seed, "data-sample", r,
                                      static_cast<std::uint64_t>(c)),
                           rng_stream(cfg_.master_seed, "local-train", r,
                                      static_cast<std::uint64_t>(c))));
    }

    std::vector<ParamVector> updates;
    updates.reserve(plan.selected.size());
    for (const SelectedClient& s : plan.selected)
      updates.push_back(results.at(s.client_id).first);

    params_ = aggregate(updates, plan, strategy_.aggregation);
    for (int c : distinct) store_gradient(c, std::move(results.at(c).second));
  }

  ExperimentConfig cfg_;
  Strategy strategy_;
  std::vector<Example> train_, test_;
  Partition partition_;
  ParamVector params_;
  std::vector<CompressedGradient> gradients_;
  std::vector<std::vector<double>> restored_;
  std::vector<double> norms_;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Strategy& strategy) {
  return Engine(cfg, strategy).run_all();
}

}  // namespace fedstas

// fedstas CLI: run experiments, build partitions, compare finished runs.
//
// Exit codes: 0 success, 1 runtime failure (I/O, numerics, missing data),
// 2 configuration problems (bad file, bad key, bad flag).

#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedstas/fedstas.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json config_to_json(const fedstas::ExperimentConfig& cfg, const fedstas::Strategy& st) {
  json j;
  j["experiment"]["strategy"] = fedstas::to_string(st.kind);
  j["experiment"]["aggregation"] = fedstas::to_string(st.aggregation);
  j["experiment"]["num_clients"] = cfg.num_clients;
  j["experiment"]["clients_per_round"] = cfg.clients_per_round;
  j["experiment"]["num_strata"] = cfg.num_strata;
  j["experiment"]["rounds"] = cfg.rounds;
  j["experiment"]["sample_ratio"] = cfg.sample_ratio;
  j["experiment"]["data_budget"] = cfg.data_budget;
  j["experiment"]["master_seed"] = cfg.master_seed;

  j["train"]["learning_rate"] = cfg.train.learning_rate;
  j["train"]["epochs"] = cfg.train.epochs;
  j["train"]["batch_size"] = cfg.train.batch_size;

  j["sketch"]["sketch_dim"] = cfg.sketch.sketch_dim;
  j["sketch"]["levels"] = cfg.sketch.levels;

  if (cfg.privacy) {
    j["privacy"]["size_cap"] = cfg.privacy->size_cap;
    j["privacy"]["alpha"] = cfg.privacy->alpha;
    if (cfg.privacy->epsilon > 0.0) j["privacy"]["epsilon"] = cfg.privacy->epsilon;
  }

  j["partition"]["scheme"] =
      cfg.partition_scheme == fedstas::PartitionScheme::iid ? "iid" : "dirichlet";
  if (cfg.partition_scheme == fedstas::PartitionScheme::dirichlet)
    j["partition"]["alpha_dir"] = cfg.alpha_dir;

  const auto& ds = cfg.dataset;
  if (ds.source == fedstas::DatasetConfig::Source::synthetic) {
    j["dataset"]["source"] = "synthetic";
    j["dataset"]["num_classes"] = ds.num_classes;
    j["dataset"]["input_dim"] = ds.input_dim;
    j["dataset"]["train_per_class"] = ds.train_per_class;
    j["dataset"]["test_per_class"] = ds.test_per_class;
    j["dataset"]["class_separation"] = ds.class_separation;
  } else {
    j["dataset"]["source"] = "idx";
    j["dataset"]["train_images"] = ds.train_images;
    j["dataset"]["train_labels"] = ds.train_labels;
    j["dataset"]["test_images"] = ds.test_images;
    j["dataset"]["test_labels"] = ds.test_labels;
  }

  j["model"]["kind"] =
      cfg.model.kind == fedstas::ModelKind::multinomial_logistic ? "logistic" : "mlp";
  j["model"]["input_dim"] = cfg.model.input_dim;
  j["model"]["num_classes"] = cfg.model.num_classes;
  if (cfg.model.kind == fedstas::ModelKind::mlp_1hidden)
    j["model"]["hidden_dim"] = cfg.model.hidden_dim;
  return j;
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::string strategy_flag;
  std::string aggregation_flag;
  std::uint64_t seed_flag = 0;
  bool seed_set = false;
};

fedstas::LoadedConfig resolve_config(const CommonFlags& f) {
  std::vector<std::string> overrides = f.overrides;
  if (!f.strategy_flag.empty())
    overrides.push_back("experiment.strategy=" + f.strategy_flag);
  if (!f.aggregation_flag.empty())
    overrides.push_back("experiment.aggregation=" + f.aggregation_flag);
  if (f.seed_set)
    overrides.push_back("experiment.master_seed=" + std::to_string(f.seed_flag));
  return fedstas::load_config(f.config_path, overrides);
}

int cmd_run(const CommonFlags& flags) {
  const fedstas::LoadedConfig loaded = resolve_config(flags);
  const fedstas::ExperimentConfig& cfg = loaded.cfg;

  std::string out_dir = flags.out_dir;
  if (out_dir.empty())
    out_dir = "runs/" + fedstas::to_string(loaded.strategy.kind) + "-seed" +
              std::to_string(cfg.master_seed);
  fs::create_directories(out_dir);
  const auto in_dir = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  fedstas::Engine engine(cfg, loaded.strategy);

  json manifest;
  manifest["artifact"] = "fedstas";
  manifest["format_version"] = 1;
  manifest["strategy"] = fedstas::to_string(loaded.strategy.kind);
  manifest["aggregation"] = fedstas::to_string(loaded.strategy.aggregation);
  manifest["master_seed"] = cfg.master_seed;
  manifest["config"] = config_to_json(cfg, loaded.strategy);
  manifest["started_utc"] = utc_now();
  manifest["outputs"] = {{"metrics", "metrics.csv"},     {"timings", "timings.csv"},
                         {"rounds", "rounds.jsonl"},     {"model", "model.bin"},
                         {"partition", "partition.json"}};
  fedstas::write_json_file(in_dir("manifest.json"), manifest);
  fedstas::write_partition(in_dir("partition.json"), engine.partition());

  std::vector<fedstas::MetricsRecord> metrics;
  metrics.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int t = 1; t <= cfg.rounds; ++t) {
    metrics.push_back(engine.run_round(t));
    const fedstas::MetricsRecord& r = metrics.back();
    std::cerr << "round " << r.round << "/" << cfg.rounds
              << " loss=" << fedstas::fmt_g12(r.train_loss)
              << " acc=" << fedstas::fmt_g12(r.test_accuracy) << "\n";
  }

  fedstas::write_metrics_csv(in_dir("metrics.csv"), metrics);
  fedstas::write_timings_csv(in_dir("timings.csv"), metrics);
  fedstas::write_rounds_jsonl(in_dir("rounds.jsonl"), metrics);
  fedstas::write_model(in_dir("model.bin"), engine.params());

  manifest["finished_utc"] = utc_now();
  manifest["rounds_completed"] = cfg.rounds;
  manifest["final_test_accuracy"] = metrics.back().test_accuracy;
  fedstas::write_json_file(in_dir("manifest.json"), manifest);

  std::cout << out_dir << "\n";
  return 0;
}

int cmd_partition(const CommonFlags& flags) {
  const fedstas::LoadedConfig loaded = resolve_config(flags);
  const fedstas::ExperimentConfig& cfg = loaded.cfg;

  std::string out_dir = flags.out_dir.empty() ? "." : flags.out_dir;
  fs::create_directories(out_dir);

  auto [train, test] = fedstas::load_dataset(cfg.dataset, cfg.master_seed);
  (void)test;
  const fedstas::Partition p =
      cfg.partition_scheme == fedstas::PartitionScheme::iid
          ? fedstas::partition_iid(train, cfg.num_clients, cfg.master_seed)
          : fedstas::partition_dirichlet(train, cfg.num_clients, cfg.alpha_dir,
                                         cfg.master_seed);

  fedstas::write_partition((fs::path(out_dir) / "partition.json").string(), p);
  fedstas::write_histogram_csv((fs::path(out_dir) / "histogram.csv").string(), p);
  std::cout << (fs::path(out_dir) / "partition.json").string() << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& run_dirs, const std::string& out_file) {
  struct Run {
    std::string dir;
    std::string strategy;
    json partition_cfg;
    std::vector<fedstas::MetricsRow> rows;
  };
  std::vector<Run> runs;
  for (const std::string& dir : run_dirs) {
    Run r;
    r.dir = dir;
    const json manifest = fedstas::read_json_file((fs::path(dir) / "manifest.json").string());
    r.strategy = manifest.at("strategy").get<std::string>();
    if (manifest.contains("config")) {
      const json& c = manifest["config"];
      if (c.contains("partition")) r.partition_cfg = c["partition"];
      if (c.contains("dataset")) r.partition_cfg["dataset"] = c["dataset"];
      if (c.contains("experiment") && c["experiment"].contains("master_seed"))
        r.partition_cfg["master_seed"] = c["experiment"]["master_seed"];
    }
    r.rows = fedstas::read_metrics_csv((fs::path(dir) / "metrics.csv").string());
    if (r.rows.empty()) throw fedstas::IoError(dir + ": metrics.csv has no rows");
    runs.push_back(std::move(r));
  }

  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].partition_cfg != runs[0].partition_cfg)
      std::cerr << "warning: " << runs[i].dir << " and " << runs[0].dir
                << " were produced against different partitions; the comparison "
                   "mixes datasets\n";

  {
    std::ofstream out(out_file, std::ios::binary);
    if (!out) throw fedstas::IoError("cannot open for writing: " + out_file);
    out << "strategy,run_dir,round,train_loss,test_accuracy\n";
    for (const Run& r : runs)
      for (const fedstas::MetricsRow& row : r.rows)
        out << r.strategy << ',' << r.dir << ',' << row.round << ','
            << fedstas::fmt_g12(row.train_loss) << ','
            << fedstas::fmt_g12(row.test_accuracy) << "\n";
  }

  std::vector<std::size_t> order(runs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return runs[a].rows.back().test_accuracy > runs[b].rows.back().test_accuracy;
  });

  std::cout << "strategy            final_accuracy  final_loss  rounds  run_dir\n";
  for (std::size_t i : order) {
    const auto& last = runs[i].rows.back();
    char line[256];
    std::snprintf(line, sizeof line, "%-18s  %14.4f  %10.4f  %6d  %s\n",
                  runs[i].strategy.c_str(), last.test_accuracy, last.train_loss,
                  last.round, runs[i].dir.c_str());
    std::cout << line;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedSTaS federated-learning simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", run_flags.config_path, "TOML config file")->required();
  run->add_option("--out", run_flags.out_dir, "Output directory");
  run->add_option("--strategy", run_flags.strategy_flag,
                  "uniform | fedsts | fedstas | fedstas-dp");
  run->add_option("--strategy.aggregation", run_flags.aggregation_flag,
                  "plain | ht-corrected");
  run->add_option("--seed", run_flags.seed_flag, "Master seed")
      ->each([&](const std::string&) { run_flags.seed_set = true; });
  run->add_option("--set", run_flags.overrides, "Override section.key=value")
      ->take_all();

  CommonFlags part_flags;
  CLI::App* part = app.add_subcommand("partition", "Build and persist a partition");
  part->add_option("--config", part_flags.config_path, "TOML config file")->required();
  part->add_option("--out", part_flags.out_dir, "Output directory");
  part->add_option("--seed", part_flags.seed_flag, "Master seed")
      ->each([&](const std::string&) { part_flags.seed_set = true; });
  part->add_option("--set", part_flags.overrides, "Override section.key=value")
      ->take_all();

  std::vector<std::string> compare_dirs;
  std::string compare_out = "compare.csv";
  CLI::App* cmp = app.add_subcommand("compare", "Merge and rank finished runs");
  cmp->add_option("dirs", compare_dirs, "Run directories")->expected(-2);
  cmp->add_option("--out", compare_out, "Merged CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (part->parsed()) return cmd_partition(part_flags);
    return cmd_compare(compare_dirs, compare_out);
  } catch (const fedstas::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

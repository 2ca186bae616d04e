#pragma once

// Run artifacts: metrics CSV, per-round JSONL detail, timings, the model
// binary, and partition JSON.
//
// metrics.csv is the determinism surface: identical (config, seed) runs must
// produce byte-identical files.  Measured wall time is therefore excluded
// from it (the wall_ms column stays empty) and written to timings.csv
// instead.  Numbers are printed with %.12g in the C locale.
//
// model.bin: explicit little-endian, an 8-byte unsigned count followed by
// count 8-byte IEEE doubles.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedstas/core.hpp"
#include "fedstas/data_pipeline.hpp"
#include "fedstas/engine.hpp"
#include "fedstas/model.hpp"

namespace fedstas {

inline std::string fmt_g12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      f.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  f.push_back(cur);
  return f;
}

}  // namespace detail

inline constexpr const char* kMetricsHeader =
    "round,train_loss,test_accuracy,n_selected,ntilde,wall_ms";

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricsRecord>& records) {
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  out << kMetricsHeader << "\n";
  for (const MetricsRecord& r : records) {
    out << r.round << ',' << fmt_g12(r.train_loss) << ',' << fmt_g12(r.test_accuracy)
        << ',' << r.n_selected_distinct << ',';
    if (r.dp_active) out << fmt_g12(r.ntilde);
    out << ',' << "\n";  // wall_ms intentionally empty
  }
  if (!out) throw IoError("write failed: " + path);
}

struct MetricsRow {
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  int n_selected = 0;
  bool has_ntilde = false;
  double ntilde = 0.0;
};

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty metrics file: " + path);
  if (line != kMetricsHeader)
    throw IoError(path + ": unexpected metrics header '" + line + "'");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) throw IoError(path + ": malformed metrics row '" + line + "'");
    MetricsRow r;
    r.round = std::atoi(f[0].c_str());
    r.train_loss = std::atof(f[1].c_str());
    r.test_accuracy = std::atof(f[2].c_str());
    r.n_selected = std::atoi(f[3].c_str());
    if (!f[4].empty()) {
      r.has_ntilde = true;
      r.ntilde = std::atof(f[4].c_str());
    }
    rows.push_back(r);
  }
  return rows;
}

inline void write_timings_csv(const std::string& path,
                              const std::vector<MetricsRecord>& records) {
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  out << "round,wall_ms\n";
  char buf[64];
  for (const MetricsRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%.3f", r.wall_ms);
    out << r.round << ',' << buf << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_rounds_jsonl(const std::string& path,
                               const std::vector<MetricsRecord>& records) {
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  for (const MetricsRecord& r : records) {
    nlohmann::json j;
    j["round"] = r.round;
    j["train_loss"] = r.train_loss;
    j["test_accuracy"] = r.test_accuracy;
    j["selected"] = r.selected_clients;
    j["distinct"] = r.n_selected_distinct;
    j["allocation"] = r.allocation;
    j["p_tilde"] = r.p_tilde;
    j["data_budget"] = r.round_data_budget;
    if (r.dp_active) j["ntilde"] = r.ntilde;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_model(const std::string& path, const ParamVector& params) {
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  auto put_u64 = [&](std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
  };
  put_u64(params.size());
  for (double d : params.values) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(bits);
  }
  if (!out) throw IoError("write failed: " + path);
}

inline ParamVector read_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  auto get_u64 = [&]() {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw IoError(path + ": truncated model file");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  };
  const std::uint64_t count = get_u64();
  ParamVector p;
  p.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t bits = get_u64();
    std::memcpy(&p.values[i], &bits, 8);
  }
  return p;
}

inline nlohmann::json partition_to_json(const Partition& p) {
  nlohmann::json j;
  j["recipe"]["scheme"] =
      p.recipe.scheme == PartitionScheme::iid ? "iid" : "dirichlet";
  if (p.recipe.scheme == PartitionScheme::dirichlet)
    j["recipe"]["alpha_dir"] = p.recipe.alpha_dir;
  j["recipe"]["seed"] = p.recipe.seed;
  j["num_clients"] = p.client_indices.size();
  j["clients"] = p.client_indices;
  return j;
}

inline void write_partition(const std::string& path, const Partition& p) {
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  out << partition_to_json(p).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

/// Rebuilds a Partition from JSON.  The label histogram needs the source
/// examples, so it is recomputed only when they are supplied.
inline Partition read_partition(const std::string& path,
                                const std::vector<Example>* examples = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open partition file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  Partition p;
  const std::string scheme = j.at("recipe").at("scheme").get<std::string>();
  p.recipe.scheme = scheme == "iid" ? PartitionScheme::iid : PartitionScheme::dirichlet;
  if (p.recipe.scheme == PartitionScheme::dirichlet)
    p.recipe.alpha_dir = j.at("recipe").at("alpha_dir").get<double>();
  p.recipe.seed = j.at("recipe").at("seed").get<std::uint64_t>();
  p.client_indices = j.at("clients").get<std::vector<std::vector<std::size_t>>>();
  if (examples != nullptr) {
    const int classes = detail::label_count(*examples);
    p.label_histogram.assign(p.client_indices.size(),
                             std::vector<long long>(static_cast<std::size_t>(classes), 0));
    for (std::size_t c = 0; c < p.client_indices.size(); ++c)
      for (std::size_t i : p.client_indices[c])
        ++p.label_histogram[c][static_cast<std::size_t>((*examples)[i].label)];
  }
  return p;
}

inline void write_histogram_csv(const std::string& path, const Partition& p) {
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  const std::size_t classes = p.label_histogram.empty() ? 0 : p.label_histogram[0].size();
  out << "client";
  for (std::size_t c = 0; c < classes; ++c) out << ",label_" << c;
  out << "\n";
  for (std::size_t k = 0; k < p.label_histogram.size(); ++k) {
    out << k;
    for (long long v : p.label_histogram[k]) out << ',' << v;
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace fedstas

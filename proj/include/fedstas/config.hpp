#pragma once

// Experiment configuration: a small TOML subset plus the schema that maps it
// onto ExperimentConfig.
//
// Supported TOML: `[section]` headers, `key = value` lines, `#` comments,
// and scalar values (quoted strings with \" and \\ escapes, integers, reals,
// booleans).  That is the whole config surface; arrays, nested tables, dates
// and multi-line strings are rejected with a line diagnostic.  Keys are
// addressed as "section.key" throughout, which is also the dotted-key form
// the CLI override flags use.
//
// Every parse or schema problem throws ConfigError carrying a line number
// where one exists; the CLI turns those into exit code 2.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedstas/core.hpp"
#include "fedstas/engine.hpp"

namespace fedstas {

struct TomlValue {
  enum class Kind { integer, real, text, boolean };
  Kind kind = Kind::text;
  std::string text;  // unescaped content for text, raw token otherwise
  int line = 0;      // 0 for CLI overrides
};

class TomlTable {
 public:
  void insert(const std::string& key, TomlValue v) {
    auto it = entries_.find(key);
    if (it != entries_.end())
      throw ConfigError("line " + std::to_string(v.line) + ": duplicate key '" + key +
                        "' (first set on line " + std::to_string(it->second.line) + ")");
    entries_.emplace(key, std::move(v));
  }

  void assign(const std::string& key, TomlValue v) { entries_[key] = std::move(v); }

  const TomlValue* find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, TomlValue>& entries() const { return entries_; }

 private:
  std::map<std::string, TomlValue> entries_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline bool valid_word(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

inline std::string strip_comment(const std::string& line) {
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_quotes = !in_quotes;
    if (c == '#' && !in_quotes) return line.substr(0, i);
  }
  return line;
}

inline bool looks_like_integer(const std::string& s) {
  std::size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

inline TomlValue parse_scalar(const std::string& raw, int line) {
  TomlValue v;
  v.line = line;
  if (raw.empty())
    throw ConfigError("line " + std::to_string(line) + ": missing value");

  if (raw[0] == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < raw.size(); ++i) {
      const char c = raw[i];
      if (c == '\\') {
        if (i + 1 >= raw.size())
          throw ConfigError("line " + std::to_string(line) + ": dangling escape");
        const char n = raw[++i];
        if (n == '"' || n == '\\') out.push_back(n);
        else
          throw ConfigError("line " + std::to_string(line) +
                            ": unsupported escape \\" + std::string(1, n));
        continue;
      }
      if (c == '"') break;
      out.push_back(c);
    }
    if (i >= raw.size())
      throw ConfigError("line " + std::to_string(line) + ": unterminated string");
    if (!trim(raw.substr(i + 1)).empty())
      throw ConfigError("line " + std::to_string(line) + ": trailing characters after string");
    v.kind = TomlValue::Kind::text;
    v.text = out;
    return v;
  }

  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.text = raw;
    return v;
  }
  if (looks_like_integer(raw)) {
    v.kind = TomlValue::Kind::integer;
    v.text = raw;
    return v;
  }
  char* end = nullptr;
  std::strtod(raw.c_str(), &end);
  if (end != nullptr && *end == '\0') {
    v.kind = TomlValue::Kind::real;
    v.text = raw;
    return v;
  }
  throw ConfigError("line " + std::to_string(line) + ": cannot parse value '" + raw + "'");
}

}  // namespace detail

inline TomlTable parse_toml(const std::string& content) {
  TomlTable table;
  std::istringstream in(content);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      const std::string name = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::valid_word(name))
        throw ConfigError("line " + std::to_string(line_no) + ": bad section name '" +
                          name + "'");
      section = name;
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (!detail::valid_word(key))
      throw ConfigError("line " + std::to_string(line_no) + ": bad key '" + key + "'");
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    table.insert(full, detail::parse_scalar(value, line_no));
  }
  return table;
}

inline TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml(buf.str());
}

/// CLI override "section.key=value".  Values are classified with the same
/// scalar rules, except an unparseable token is taken as a bare string so
/// `--set experiment.strategy=fedstas` works without quotes.
inline void apply_override(TomlTable& table, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + spec + "' is not of the form key=value");
  const std::string key = detail::trim(spec.substr(0, eq));
  const std::string value = detail::trim(spec.substr(eq + 1));
  if (key.empty()) throw ConfigError("override '" + spec + "' has an empty key");
  TomlValue v;
  try {
    v = detail::parse_scalar(value, 0);
  } catch (const ConfigError&) {
    v.kind = TomlValue::Kind::text;
    v.text = value;
    v.line = 0;
  }
  table.assign(key, v);
}

class ConfigReader {
 public:
  explicit ConfigReader(const TomlTable& table) : table_(table) {}

  bool has(const std::string& key) const { return table_.find(key) != nullptr; }

  std::string get_text(const std::string& key) {
    const TomlValue& v = require(key);
    if (v.kind != TomlValue::Kind::text) throw type_error(key, v, "a string");
    return v.text;
  }
  std::string text_or(const std::string& key, const std::string& fallback) {
    return has(key) ? get_text(key) : fallback;
  }

  std::int64_t get_int(const std::string& key) {
    const TomlValue& v = require(key);
    if (v.kind != TomlValue::Kind::integer) throw type_error(key, v, "an integer");
    return std::strtoll(v.text.c_str(), nullptr, 10);
  }
  std::int64_t int_or(const std::string& key, std::int64_t fallback) {
    return has(key) ? get_int(key) : fallback;
  }

  std::uint64_t get_u64(const std::string& key) {
    const TomlValue& v = require(key);
    if (v.kind != TomlValue::Kind::integer || v.text.find('-') != std::string::npos)
      throw type_error(key, v, "a non-negative integer");
    return std::strtoull(v.text.c_str(), nullptr, 10);
  }
  std::uint64_t u64_or(const std::string& key, std::uint64_t fallback) {
    return has(key) ? get_u64(key) : fallback;
  }

  double get_real(const std::string& key) {
    const TomlValue& v = require(key);
    if (v.kind != TomlValue::Kind::real && v.kind != TomlValue::Kind::integer)
      throw type_error(key, v, "a number");
    return std::strtod(v.text.c_str(), nullptr);
  }
  double real_or(const std::string& key, double fallback) {
    return has(key) ? get_real(key) : fallback;
  }

  /// Every key in the table must have been read by the schema; anything left
  /// over is a typo or an unsupported option and gets a line diagnostic.
  void finish() const {
    for (const auto& [key, value] : table_.entries())
      if (used_.find(key) == used_.end())
        throw ConfigError("line " + std::to_string(value.line) + ": unknown key '" +
                          key + "'");
  }

 private:
  const TomlValue& require(const std::string& key) {
    const TomlValue* v = table_.find(key);
    if (v == nullptr) throw ConfigError("missing required key '" + key + "'");
    used_.insert(key);
    return *v;
  }
  static ConfigError type_error(const std::string& key, const TomlValue& v,
                                const std::string& expected) {
    return ConfigError("line " + std::to_string(v.line) + ": key '" + key +
                       "' must be " + expected);
  }

  const TomlTable& table_;
  std::set<std::string> used_;
};

struct LoadedConfig {
  ExperimentConfig cfg;
  Strategy strategy;
};

namespace detail {

inline StrategyKind strategy_from_name(const std::string& name) {
  if (name == "uniform") return StrategyKind::uniform;
  if (name == "fedsts") return StrategyKind::fedsts;
  if (name == "fedstas") return StrategyKind::fedstas;
  if (name == "fedstas-dp") return StrategyKind::fedstas_dp;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected uniform, fedsts, fedstas, or fedstas-dp)");
}

inline AggregationMode aggregation_from_name(const std::string& name) {
  if (name == "plain") return AggregationMode::plain;
  if (name == "ht-corrected") return AggregationMode::ht_corrected;
  throw ConfigError("unknown aggregation mode '" + name +
                    "' (expected plain or ht-corrected)");
}

inline int to_int(std::int64_t v, const std::string& key) {
  if (v < INT32_MIN || v > INT32_MAX)
    throw ConfigError("key '" + key + "' out of range");
  return static_cast<int>(v);
}

}  // namespace detail

inline LoadedConfig config_from_table(const TomlTable& table) {
  ConfigReader r(table);
  LoadedConfig out;

  out.strategy.kind = detail::strategy_from_name(r.text_or("experiment.strategy", "fedstas"));
  out.strategy.aggregation =
      detail::aggregation_from_name(r.text_or("experiment.aggregation", "plain"));

  ExperimentConfig& cfg = out.cfg;
  cfg.num_clients = detail::to_int(r.get_int("experiment.num_clients"), "experiment.num_clients");
  cfg.clients_per_round =
      detail::to_int(r.get_int("experiment.clients_per_round"), "experiment.clients_per_round");
  cfg.rounds = detail::to_int(r.get_int("experiment.rounds"), "experiment.rounds");
  if (out.strategy.kind != StrategyKind::uniform) {
    cfg.num_strata =
        detail::to_int(r.get_int("experiment.num_strata"), "experiment.num_strata");
  } else {
    cfg.num_strata = detail::to_int(r.int_or("experiment.num_strata", 1), "experiment.num_strata");
  }
  cfg.sample_ratio = r.real_or("experiment.sample_ratio", 0.0);
  cfg.data_budget = detail::to_int(r.int_or("experiment.data_budget", 0), "experiment.data_budget");
  cfg.master_seed = r.u64_or("experiment.master_seed", 1);

  cfg.train.learning_rate = r.real_or("train.learning_rate", 0.01);
  cfg.train.epochs = detail::to_int(r.int_or("train.epochs", 1), "train.epochs");
  cfg.train.batch_size = detail::to_int(r.int_or("train.batch_size", 32), "train.batch_size");

  cfg.sketch.sketch_dim = detail::to_int(r.int_or("sketch.sketch_dim", 2048), "sketch.sketch_dim");
  cfg.sketch.levels = detail::to_int(r.int_or("sketch.levels", 9), "sketch.levels");

  if (r.has("privacy.size_cap") || r.has("privacy.epsilon") || r.has("privacy.alpha")) {
    const int cap = detail::to_int(r.get_int("privacy.size_cap"), "privacy.size_cap");
    if (r.has("privacy.epsilon")) {
      if (r.has("privacy.alpha"))
        throw ConfigError("privacy: set epsilon or alpha, not both");
      try {
        cfg.privacy = PrivacyConfig::from_epsilon(r.get_real("privacy.epsilon"), cap);
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
    } else if (r.has("privacy.alpha")) {
      PrivacyConfig p;
      p.size_cap = cap;
      p.alpha = r.get_real("privacy.alpha");
      try {
        p.validate();
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
      cfg.privacy = p;
    } else {
      throw ConfigError("privacy: size_cap given without epsilon or alpha");
    }
  }

  const std::string scheme = r.text_or("partition.scheme", "iid");
  if (scheme == "iid") {
    cfg.partition_scheme = PartitionScheme::iid;
    cfg.alpha_dir = 0.0;
  } else if (scheme == "dirichlet") {
    cfg.partition_scheme = PartitionScheme::dirichlet;
    cfg.alpha_dir = r.get_real("partition.alpha_dir");
  } else {
    throw ConfigError("unknown partition scheme '" + scheme +
                      "' (expected iid or dirichlet)");
  }

  const std::string source = r.text_or("dataset.source", "synthetic");
  DatasetConfig& ds = cfg.dataset;
  if (source == "synthetic") {
    ds.source = DatasetConfig::Source::synthetic;
    ds.num_classes = detail::to_int(r.int_or("dataset.num_classes", 10), "dataset.num_classes");
    ds.input_dim = detail::to_int(r.int_or("dataset.input_dim", 64), "dataset.input_dim");
    ds.train_per_class =
        detail::to_int(r.int_or("dataset.train_per_class", 600), "dataset.train_per_class");
    ds.test_per_class =
        detail::to_int(r.int_or("dataset.test_per_class", 100), "dataset.test_per_class");
    ds.class_separation = r.real_or("dataset.class_separation", 3.0);
    cfg.model.input_dim = ds.input_dim;
    cfg.model.num_classes = ds.num_classes;
  } else if (source == "idx") {
    ds.source = DatasetConfig::Source::idx;
    ds.train_images = r.get_text("dataset.train_images");
    ds.train_labels = r.get_text("dataset.train_labels");
    ds.test_images = r.get_text("dataset.test_images");
    ds.test_labels = r.get_text("dataset.test_labels");
    cfg.model.input_dim = detail::to_int(r.get_int("model.input_dim"), "model.input_dim");
    cfg.model.num_classes =
        detail::to_int(r.get_int("model.num_classes"), "model.num_classes");
  } else {
    throw ConfigError("unknown dataset source '" + source +
                      "' (expected synthetic or idx)");
  }

  const std::string kind = r.text_or("model.kind", "logistic");
  if (kind == "logistic") {
    cfg.model.kind = ModelKind::multinomial_logistic;
  } else if (kind == "mlp") {
    cfg.model.kind = ModelKind::mlp_1hidden;
    cfg.model.hidden_dim = detail::to_int(r.get_int("model.hidden_dim"), "model.hidden_dim");
  } else {
    throw ConfigError("unknown model kind '" + kind + "' (expected logistic or mlp)");
  }

  r.finish();
  cfg.validate(out.strategy);
  return out;
}

inline LoadedConfig load_config(const std::string& path,
                                const std::vector<std::string>& overrides) {
  TomlTable table = parse_toml_file(path);
  for (const std::string& o : overrides) apply_override(table, o);
  return config_from_table(table);
}

}  // namespace fedstas

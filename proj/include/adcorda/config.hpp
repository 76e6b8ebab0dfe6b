#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "adcorda/attacks.hpp"
#include "adcorda/coral.hpp"
#include "adcorda/dataset.hpp"
#include "adcorda/error.hpp"
#include "adcorda/mlp.hpp"
#include "adcorda/text.hpp"
#include "adcorda/train.hpp"

namespace adcorda {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "file"
  std::string train_path;           // file source: pool split into train/valid
  std::string test_path;
  SyntheticSpec synthetic;           // pool; seed is the sample seed
  std::size_t test_per_class = 100;
  std::uint64_t test_seed = 1001;
  double valid_fraction = 0.1;
};

struct RobustConfig {
  bool enabled = true;
  float epsilon = 5e-4f;
  std::vector<AttackKind> ensemble{AttackKind::BI, AttackKind::LL, AttackKind::SP};
};

struct ExperimentConfig {
  DataConfig data;
  std::vector<std::size_t> hidden_dims{128, 64};
  TrainConfig train;
  std::optional<AttackKind> attack = AttackKind::DDN;  // nullopt: curriculum only
  AttackConfig attack_cfg = AttackConfig::defaults(AttackKind::DDN);
  bool alpha_set = false;
  bool max_iter_set = false;
  bool keep_all_perturbed = false;
  std::size_t threads = 0;
  CoralConfig coral;
  bool quantize = false;
  int quant_bits = 8;
  RobustConfig robust;
  std::vector<std::uint64_t> seeds{1, 2, 5};

  ExperimentConfig() { train.epochs = 30; }

  /// Attack settings for a kind: alpha follows epsilon / 4 and max_iter the
  /// per-kind default unless set explicitly.
  AttackConfig attack_for(AttackKind kind, std::uint64_t seed) const {
    AttackConfig c = attack_cfg;
    const auto d = AttackConfig::defaults(kind, c.epsilon);
    if (!alpha_set) c.alpha = d.alpha;
    if (!max_iter_set) c.max_iter = d.max_iter;
    c.seed = seed;
    return c;
  }

  MlpSpec model_spec(std::size_t dim, std::size_t classes, std::uint64_t seed) const {
    return MlpSpec{dim, hidden_dims, classes, seed};
  }

  void validate() const {
    if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
    if (data.source != "synthetic" && data.source != "file") throw ConfigError("data.source must be 'synthetic' or 'file'");
    if (data.source == "file" && (data.train_path.empty() || data.test_path.empty())) {
      throw ConfigError("data.source = file needs data.train_path and data.test_path");
    }
    if (!(data.valid_fraction > 0.0 && data.valid_fraction < 1.0)) throw ConfigError("data.valid_fraction must lie in (0, 1)");
    if (data.synthetic.num_classes < 2 || data.synthetic.dim < 2 || data.synthetic.per_class == 0 || data.test_per_class == 0) {
      throw ConfigError("synthetic data needs num_classes >= 2, dim >= 2 and positive sample counts");
    }
    for (auto h : hidden_dims)
      if (h == 0) throw ConfigError("model.hidden entries must be positive");
    train.validate();
    coral.validate();
    if (quant_bits < 2 || quant_bits > 16) throw ConfigError("quantize.bits must lie in [2, 16]");
    if (!(robust.epsilon >= 0.0f)) throw ConfigError("robust.epsilon must be >= 0");
    if (robust.ensemble.empty()) throw ConfigError("robust.ensemble must not be empty");
    if (attack) {
      try {
        attack_for(*attack, 1).validate(*attack);
      } catch (const InputError& e) {
        throw ConfigError(std::string("attack: ") + e.what());
      }
    }
  }
};

inline std::string attack_name(const std::optional<AttackKind>& k) { return k ? to_string(*k) : "None"; }

namespace detail {

template <typename T>
T parse_value(std::string_view key, std::string_view v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return std::string(v);
  } else {
    const auto n = text::parse_number<T>(v);
    if (!n) throw ConfigError(std::string(key) + ": cannot parse '" + std::string(v) + "'");
    return *n;
  }
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view v) {
  std::vector<T> out;
  if (text::trim(v).empty()) return out;
  for (auto part : text::split(v, ',')) out.push_back(parse_value<T>(key, text::trim(part)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + text::to_text(v[i]);
  return s;
}

inline std::string show(bool b) { return b ? "true" : "false"; }

struct KeySpec {
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define ADCORDA_SCALAR_KEY(name, field, type)                                                          \
  {name, KeySpec{[](ExperimentConfig& c, std::string_view v) { c.field = parse_value<type>(name, v); }, \
                 [](const ExperimentConfig& c) { return text::to_text(c.field); }}}

inline const std::map<std::string, KeySpec, std::less<>>& config_keys() {
  static const std::map<std::string, KeySpec, std::less<>> keys = {
      {"data.source", {[](ExperimentConfig& c, std::string_view v) { c.data.source = std::string(v); },
                       [](const ExperimentConfig& c) { return c.data.source; }}},
      {"data.train_path", {[](ExperimentConfig& c, std::string_view v) { c.data.train_path = std::string(v); },
                           [](const ExperimentConfig& c) { return c.data.train_path; }}},
      {"data.test_path", {[](ExperimentConfig& c, std::string_view v) { c.data.test_path = std::string(v); },
                          [](const ExperimentConfig& c) { return c.data.test_path; }}},
      ADCORDA_SCALAR_KEY("data.num_classes", data.synthetic.num_classes, std::size_t),
      ADCORDA_SCALAR_KEY("data.dim", data.synthetic.dim, std::size_t),
      ADCORDA_SCALAR_KEY("data.per_class", data.synthetic.per_class, std::size_t),
      ADCORDA_SCALAR_KEY("data.noise_std", data.synthetic.noise_std, float),
      ADCORDA_SCALAR_KEY("data.label_noise", data.synthetic.label_noise, float),
      ADCORDA_SCALAR_KEY("data.seed", data.synthetic.seed, std::uint64_t),
      ADCORDA_SCALAR_KEY("data.prototype_seed", data.synthetic.prototype_seed, std::uint64_t),
      ADCORDA_SCALAR_KEY("data.test_per_class", data.test_per_class, std::size_t),
      ADCORDA_SCALAR_KEY("data.test_seed", data.test_seed, std::uint64_t),
      ADCORDA_SCALAR_KEY("data.valid_fraction", data.valid_fraction, double),
      {"model.hidden", {[](ExperimentConfig& c, std::string_view v) { c.hidden_dims = parse_list<std::size_t>("model.hidden", v); },
                        [](const ExperimentConfig& c) { return join(c.hidden_dims); }}},
      ADCORDA_SCALAR_KEY("train.lr", train.lr, float),
      ADCORDA_SCALAR_KEY("train.momentum", train.momentum, float),
      ADCORDA_SCALAR_KEY("train.weight_decay", train.weight_decay, float),
      ADCORDA_SCALAR_KEY("train.batch_size", train.batch_size, std::size_t),
      ADCORDA_SCALAR_KEY("train.epochs", train.epochs, std::size_t),
      {"attack.kind", {[](ExperimentConfig& c, std::string_view v) {
                         if (v == "none" || v == "None") {
                           c.attack.reset();
                           return;
                         }
                         const auto k = parse_attack_kind(v);
                         if (!k) throw ConfigError("attack.kind: unknown attack '" + std::string(v) + "'");
                         c.attack = *k;
                       },
                       [](const ExperimentConfig& c) { return attack_name(c.attack); }}},
      ADCORDA_SCALAR_KEY("attack.epsilon", attack_cfg.epsilon, float),
      {"attack.alpha", {[](ExperimentConfig& c, std::string_view v) {
                          c.alpha_set = v != "auto";
                          if (c.alpha_set) c.attack_cfg.alpha = parse_value<float>("attack.alpha", v);
                        },
                        [](const ExperimentConfig& c) { return c.alpha_set ? text::to_text(c.attack_cfg.alpha) : "auto"; }}},
      {"attack.max_iter", {[](ExperimentConfig& c, std::string_view v) {
                             c.max_iter_set = v != "auto";
                             if (c.max_iter_set) c.attack_cfg.max_iter = parse_value<std::size_t>("attack.max_iter", v);
                           },
                           [](const ExperimentConfig& c) { return c.max_iter_set ? text::to_text(c.attack_cfg.max_iter) : "auto"; }}},
      ADCORDA_SCALAR_KEY("attack.ddn_gamma", attack_cfg.ddn_gamma, float),
      {"attack.ddn_init_norm", {[](ExperimentConfig& c, std::string_view v) {
                                  if (v == "auto") c.attack_cfg.ddn_init_norm.reset();
                                  else c.attack_cfg.ddn_init_norm = parse_value<float>("attack.ddn_init_norm", v);
                                },
                                [](const ExperimentConfig& c) {
                                  return c.attack_cfg.ddn_init_norm ? text::to_text(*c.attack_cfg.ddn_init_norm) : "auto";
                                }}},
      ADCORDA_SCALAR_KEY("attack.ddn_max_iter", attack_cfg.ddn_max_iter, std::size_t),
      ADCORDA_SCALAR_KEY("attack.ddn_step", attack_cfg.ddn_step, float),
      {"attack.sp_densities", {[](ExperimentConfig& c, std::string_view v) { c.attack_cfg.sp_densities = parse_list<float>("attack.sp_densities", v); },
                               [](const ExperimentConfig& c) { return join(c.attack_cfg.sp_densities); }}},
      ADCORDA_SCALAR_KEY("attack.sp_repeats", attack_cfg.sp_repeats, std::size_t),
      {"attack.keep_all_perturbed", {[](ExperimentConfig& c, std::string_view v) { c.keep_all_perturbed = parse_value<bool>("attack.keep_all_perturbed", v); },
                                     [](const ExperimentConfig& c) { return show(c.keep_all_perturbed); }}},
      ADCORDA_SCALAR_KEY("attack.threads", threads, std::size_t),
      {"coral.lambda", {[](ExperimentConfig& c, std::string_view v) {
                          if (v == "auto") c.coral.lambda.reset();
                          else c.coral.lambda = parse_value<float>("coral.lambda", v);
                        },
                        [](const ExperimentConfig& c) { return c.coral.lambda ? text::to_text(*c.coral.lambda) : "auto"; }}},
      ADCORDA_SCALAR_KEY("coral.epochs", coral.epochs, std::size_t),
      ADCORDA_SCALAR_KEY("coral.batch_size", coral.batch_size, std::size_t),
      ADCORDA_SCALAR_KEY("coral.lr", coral.lr, float),
      ADCORDA_SCALAR_KEY("coral.momentum", coral.momentum, float),
      ADCORDA_SCALAR_KEY("coral.weight_decay", coral.weight_decay, float),
      {"quantize.enabled", {[](ExperimentConfig& c, std::string_view v) { c.quantize = parse_value<bool>("quantize.enabled", v); },
                            [](const ExperimentConfig& c) { return show(c.quantize); }}},
      ADCORDA_SCALAR_KEY("quantize.bits", quant_bits, int),
      {"robust.enabled", {[](ExperimentConfig& c, std::string_view v) { c.robust.enabled = parse_value<bool>("robust.enabled", v); },
                          [](const ExperimentConfig& c) { return show(c.robust.enabled); }}},
      ADCORDA_SCALAR_KEY("robust.epsilon", robust.epsilon, float),
      {"robust.ensemble", {[](ExperimentConfig& c, std::string_view v) {
                             c.robust.ensemble.clear();
                             for (auto part : text::split(v, ',')) {
                               const auto k = parse_attack_kind(text::trim(part));
                               if (!k) throw ConfigError("robust.ensemble: unknown attack '" + std::string(text::trim(part)) + "'");
                               c.robust.ensemble.push_back(*k);
                             }
                           },
                           [](const ExperimentConfig& c) {
                             std::string s;
                             for (std::size_t i = 0; i < c.robust.ensemble.size(); ++i) s += (i ? "," : "") + to_string(c.robust.ensemble[i]);
                             return s;
                           }}},
      {"run.seeds", {[](ExperimentConfig& c, std::string_view v) { c.seeds = parse_list<std::uint64_t>("run.seeds", v); },
                     [](const ExperimentConfig& c) { return join(c.seeds); }}},
  };
  return keys;
}

#undef ADCORDA_SCALAR_KEY

}  // namespace detail

/// Applies one `key = value` setting; unknown keys are errors.
inline void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const auto& keys = detail::config_keys();
  auto it = keys.find(key);
  if (it == keys.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(cfg, text::trim(value));
}

/// Parses line-oriented `key = value` text. Blank lines and lines starting
/// with '#' are skipped; a key may appear only once.
inline ExperimentConfig parse_config(std::string_view content, ExperimentConfig cfg = {}) {
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = text::trim(t.substr(0, eq));
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    }
    try {
      set_config_value(cfg, key, t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Every key with its effective value, sorted by key.
inline std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, spec] : detail::config_keys()) out.emplace_back(k, spec.get(cfg));
  return out;
}

}  // namespace adcorda

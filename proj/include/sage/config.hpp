#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "sage/trainer.hpp"

namespace sage {

/// Everything one `run` or `ablate` invocation needs.
struct ExperimentConfig {
  WorldConfig world;
  TrainConfig train;  // carries the bound and metric settings
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds{1};

  void validate() const {
    world.validate();
    train.validate();
    if (output_dir.empty()) throw std::invalid_argument("output_dir must be non-empty");
    if (seeds.empty()) throw std::invalid_argument("seeds must be non-empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
      throw std::invalid_argument("seeds must be distinct");
    }
    if (train.slate_length > world.n_items) throw std::invalid_argument("slate_length exceeds n_items");
  }
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

/// Reads the keys of one mapping and rejects any it was not asked about.
class ConfigSection {
 public:
  ConfigSection(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(name_ + " must be a mapping", line_of(node_));
  }

  bool present() const { return node_ && node_.IsMap(); }
  int line() const { return line_of(node_); }

  template <typename T>
  void get(const std::string& key, T& out) {
    known_.insert(key);
    if (!present()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(path(key) + ": cannot parse '" + scalar_text(v) + "'", line_of(v));
    }
  }

  template <typename E, typename Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    bool seen = present() && node_[key];
    get(key, s);
    if (!seen) return;
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path(key) + ": " + e.what(), line_of(node_[key]));
    }
  }

  ConfigSection child(const std::string& key) {
    known_.insert(key);
    return ConfigSection(present() ? node_[key] : YAML::Node(), name_.empty() ? key : name_ + "." + key);
  }

  void reject_unknown() const {
    if (!present()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!known_.count(key)) throw ConfigError("unknown key '" + path(key) + "'", line_of(kv.first));
    }
  }

 private:
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
  static std::string scalar_text(const YAML::Node& v) { return v.IsScalar() ? v.Scalar() : "<non-scalar>"; }

  YAML::Node node_;
  std::string name_;
  std::set<std::string> known_;
};

inline UpdateRule update_rule_from_string(const std::string& s) {
  if (s == "plain") return UpdateRule::Plain;
  if (s == "adam") return UpdateRule::Adam;
  throw std::invalid_argument("expected plain or adam, got '" + s + "'");
}

inline AdvantageMode advantage_from_string(const std::string& s) {
  if (s == "decoupled") return AdvantageMode::Decoupled;
  if (s == "naive") return AdvantageMode::Naive;
  throw std::invalid_argument("expected decoupled or naive, got '" + s + "'");
}

inline EntropyBase entropy_base_from_string(const std::string& s) {
  if (s == "nats") return EntropyBase::Nats;
  if (s == "bits") return EntropyBase::Bits;
  throw std::invalid_argument("expected nats or bits, got '" + s + "'");
}

}  // namespace detail

/// Parses YAML (JSON is accepted as a YAML subset). Missing keys keep their
/// defaults; unknown keys and out-of-range values raise ConfigError.
inline ExperimentConfig parse_experiment_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(e.msg, e.mark.is_null() ? 0 : e.mark.line + 1);
  }
  ExperimentConfig cfg;
  if (!root || root.IsNull()) return cfg;
  detail::ConfigSection top(root, "");
  if (!top.present()) throw ConfigError("top level must be a mapping", detail::line_of(root));

  auto world = top.child("world");
  auto& w = cfg.world;
  world.get("n_items", w.n_items);
  world.get("n_subcats", w.n_subcats);
  world.get("n_users", w.n_users);
  world.get("zipf_exponent", w.zipf_exponent);
  world.get("cold_fraction", w.cold_fraction);
  world.get("n_interactions", w.n_interactions);
  world.get("preference_concentration", w.preference_concentration);
  world.get("relevant_per_user", w.relevant_per_user);
  world.get("cold_quality_quantile", w.cold_quality_quantile);
  auto fb = world.child("feedback");
  fb.get("affinity_weight", w.feedback.affinity_weight);
  fb.get("quality_weight", w.feedback.quality_weight);
  fb.get("click_bias", w.feedback.click_bias);
  fb.get("watch_noise_sigma", w.feedback.watch_noise_sigma);
  fb.get("stochastic", w.feedback.stochastic);
  fb.reject_unknown();
  world.reject_unknown();

  auto train = top.child("train");
  auto& t = cfg.train;
  train.get_enum("optimizer", t.optimizer, optimizer_from_string);
  train.get("group_size", t.group_size);
  train.get("batch_users", t.batch_users);
  train.get("learning_rate", t.learning_rate);
  train.get("total_steps", t.total_steps);
  train.get("slate_length", t.slate_length);
  train.get("inner_updates", t.inner_updates);
  train.get("embedding_dim", t.embedding_dim);
  train.get_enum("update_rule", t.update_rule, detail::update_rule_from_string);
  train.get_enum("advantage", t.advantage, detail::advantage_from_string);
  train.get("weights", t.weights);
  train.get("norm_eps", t.norm_eps);
  train.get("clip_eps", t.clip_eps);
  train.get("eval_every", t.eval_every);
  train.reject_unknown();

  auto bounds = top.child("bounds");
  bounds.get("eps_boost", t.bounds.eps_boost);
  bounds.get("beta", t.bounds.beta);
  bounds.get_enum("pos_mode", t.bounds.pos_mode, bound_mode_from_string);
  bounds.get_enum("neg_mode", t.bounds.neg_mode, bound_mode_from_string);
  bounds.get("ema_decay", t.bounds.ema_decay);
  bounds.reject_unknown();

  auto metrics = top.child("metrics");
  metrics.get("k", t.metrics.k);
  metrics.get_enum("entropy_base", t.metrics.entropy_base, detail::entropy_base_from_string);
  metrics.reject_unknown();

  top.get("output_dir", cfg.output_dir);
  top.get("seeds", cfg.seeds);
  top.reject_unknown();

  auto section_line = [&](const char* key) {
    for (const auto& kv : root) {
      if (kv.first.as<std::string>() == key) return detail::line_of(kv.first);
    }
    return 0;
  };
  try {
    cfg.world.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("world: ") + e.what(), section_line("world"));
  }
  try {
    cfg.train.bounds.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bounds: ") + e.what(), section_line("bounds"));
  }
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what(), section_line("train"));
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), section_line("seeds"));
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_experiment_config(ss.str());
  } catch (const ConfigError& e) {
    throw e.with_prefix(path + ": ");
  }
}

}  // namespace sage

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "detadvprop/common.hpp"
#include "detadvprop/config.hpp"

namespace detadv {

// Flat `key = value` run configuration. `#` starts a comment; keys are
// namespaced (detector.*, train.*, attack.*, scene.*). Keys that no consumer
// recognizes are an error, caught by finish().
class FlatConfig {
 public:
  static FlatConfig parse_string(const std::string& text, const std::string& origin = "<string>") {
    FlatConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const std::size_t eq = trimmed.find('=');
      DETADV_CONFIG_CHECK(eq != std::string::npos, origin, ":", lineno, ": expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      DETADV_CONFIG_CHECK(!key.empty(), origin, ":", lineno, ": empty key");
      DETADV_CONFIG_CHECK(!cfg.kv_.count(key), origin, ":", lineno, ": duplicate key '", key, "'");
      cfg.kv_[key] = value;
    }
    return cfg;
  }

  static FlatConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    DETADV_CONFIG_CHECK(in.good(), "cannot open config file '", path, "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  // Command-line overrides; the flag wins over the file.
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key, double fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return parse_double(it->second, key);
  }

  int get_int(const std::string& key, int fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return parse_int(it->second, key);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': invalid unsigned integer '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "': invalid boolean '" + v + "'");
  }

  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    std::vector<double> out;
    for (const std::string& tok : split_csv(it->second)) out.push_back(parse_double(tok, key));
    return out;
  }

  std::vector<int> get_ints(const std::string& key, std::vector<int> fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    std::vector<int> out;
    for (const std::string& tok : split_csv(it->second)) out.push_back(parse_int(tok, key));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return split_csv(it->second);
  }

  // Throws if any key was never consumed by a loader.
  void finish() const {
    for (const auto& [key, value] : kv_) {
      DETADV_CONFIG_CHECK(consumed_.count(key), "unknown config key '", key, "'");
    }
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  static std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream ss(s);
    while (std::getline(ss, tok, ',')) {
      const std::string t = trim(tok);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  static double parse_double(const std::string& v, const std::string& key) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      DETADV_CONFIG_CHECK(pos == v.size(), "config key '", key, "': trailing characters in '", v, "'");
      return x;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': invalid number '" + v + "'");
    }
  }

  static int parse_int(const std::string& v, const std::string& key) {
    try {
      std::size_t pos = 0;
      const int x = std::stoi(v, &pos);
      DETADV_CONFIG_CHECK(pos == v.size(), "config key '", key, "': trailing characters in '", v, "'");
      return x;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': invalid integer '" + v + "'");
    }
  }

  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> consumed_;
};

inline DetectorConfig detector_config_from(FlatConfig& cfg) {
  DetectorConfig d;
  d.num_classes = cfg.get_int("detector.num_classes", d.num_classes);
  d.in_channels = cfg.get_int("detector.in_channels", d.in_channels);
  d.width = cfg.get_int("detector.width", d.width);
  d.depth = cfg.get_int("detector.depth", d.depth);
  d.num_stages = cfg.get_int("detector.num_stages", d.num_stages);
  d.levels = cfg.get_ints("detector.levels", d.levels);
  d.head_depth = cfg.get_int("detector.head_depth", d.head_depth);
  d.anchor_scales = cfg.get_doubles("detector.anchor_scales", d.anchor_scales);
  d.anchor_ratios = cfg.get_doubles("detector.anchor_ratios", d.anchor_ratios);
  d.anchor_base = cfg.get_double("detector.anchor_base", d.anchor_base);
  d.loss_weight_w = cfg.get_double("detector.loss_weight_w", d.loss_weight_w);
  d.focal_alpha = cfg.get_double("detector.focal_alpha", d.focal_alpha);
  d.focal_gamma = cfg.get_double("detector.focal_gamma", d.focal_gamma);
  d.huber_delta = cfg.get_double("detector.huber_delta", d.huber_delta);
  d.pos_iou = cfg.get_double("detector.pos_iou", d.pos_iou);
  d.neg_iou = cfg.get_double("detector.neg_iou", d.neg_iou);
  d.bn_branches = cfg.get_int("detector.bn_branches", d.bn_branches);
  d.bn_epsilon = cfg.get_double("detector.bn_epsilon", d.bn_epsilon);
  d.bn_decay = cfg.get_double("detector.bn_decay", d.bn_decay);
  d.validate();
  return d;
}

inline AttackConfig attack_config_from(FlatConfig& cfg) {
  AttackConfig a;
  a.mode = attack_mode_from_string(cfg.get_string("attack.mode", to_string(a.mode)));
  a.source = attack_source_from_string(cfg.get_string("attack.source", to_string(a.source)));
  a.epsilon = cfg.get_double("attack.epsilon", a.epsilon);
  a.random_init = cfg.get_bool("attack.random_init", a.random_init);
  a.target_scope = target_scope_from_string(cfg.get_string("attack.target_scope", to_string(a.target_scope)));
  if (cfg.has("attack.epsilon_object"))
    a.epsilon_object = cfg.get_double("attack.epsilon_object", 0.0);
  if (cfg.has("attack.epsilon_background"))
    a.epsilon_background = cfg.get_double("attack.epsilon_background", 0.0);
  a.training_stats = cfg.get_bool("attack.training_stats", a.training_stats);
  a.validate();
  return a;
}

inline TrainConfig train_config_from(FlatConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_int("train.epochs", t.epochs);
  t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
  t.base_lr = cfg.get_double("train.base_lr", t.base_lr);
  t.warmup_epochs = cfg.get_int("train.warmup_epochs", t.warmup_epochs);
  t.momentum = cfg.get_double("train.momentum", t.momentum);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.variant = train_variant_from_string(cfg.get_string("train.variant", to_string(t.variant)));
  t.seed = cfg.get_u64("train.seed", t.seed);
  t.hflip = cfg.get_bool("train.hflip", t.hflip);
  t.scale_jitter = cfg.get_bool("train.scale_jitter", t.scale_jitter);
  t.jitter_min = cfg.get_double("train.jitter_min", t.jitter_min);
  t.jitter_max = cfg.get_double("train.jitter_max", t.jitter_max);
  t.attack = attack_config_from(cfg);
  t.validate();
  return t;
}

inline SceneSpec scene_spec_from(FlatConfig& cfg) {
  SceneSpec s;
  s.image_size = cfg.get_int("scene.image_size", s.image_size);
  s.catalog = cfg.get_strings("scene.catalog", s.catalog);
  s.objects_min = cfg.get_int("scene.objects_min", s.objects_min);
  s.objects_max = cfg.get_int("scene.objects_max", s.objects_max);
  s.size_min = cfg.get_double("scene.size_min", s.size_min);
  s.size_max = cfg.get_double("scene.size_max", s.size_max);
  s.bg_level = cfg.get_double("scene.bg_level", s.bg_level);
  s.bg_noise = cfg.get_double("scene.bg_noise", s.bg_noise);
  s.max_overlap_iou = cfg.get_double("scene.max_overlap_iou", s.max_overlap_iou);
  s.place_retries = cfg.get_int("scene.place_retries", s.place_retries);
  s.val_fraction = cfg.get_double("scene.val_fraction", s.val_fraction);
  s.validate();
  return s;
}

}  // namespace detadv

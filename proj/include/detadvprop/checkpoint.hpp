#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "detadvprop/config.hpp"
#include "detadvprop/detector.hpp"

namespace detadv {

using json = nlohmann::json;

inline json detector_config_to_json(const DetectorConfig& cfg) {
  return json{{"num_classes", cfg.num_classes},
              {"in_channels", cfg.in_channels},
              {"width", cfg.width},
              {"depth", cfg.depth},
              {"num_stages", cfg.num_stages},
              {"levels", cfg.levels},
              {"head_depth", cfg.head_depth},
              {"anchor_scales", cfg.anchor_scales},
              {"anchor_ratios", cfg.anchor_ratios},
              {"anchor_base", cfg.anchor_base},
              {"loss_weight_w", cfg.loss_weight_w},
              {"focal_alpha", cfg.focal_alpha},
              {"focal_gamma", cfg.focal_gamma},
              {"huber_delta", cfg.huber_delta},
              {"pos_iou", cfg.pos_iou},
              {"neg_iou", cfg.neg_iou},
              {"bn_branches", cfg.bn_branches},
              {"bn_epsilon", cfg.bn_epsilon},
              {"bn_decay", cfg.bn_decay}};
}

inline DetectorConfig detector_config_from_json(const json& j) {
  DetectorConfig cfg;
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.depth = j.at("depth").get<int>();
  cfg.num_stages = j.at("num_stages").get<int>();
  cfg.levels = j.at("levels").get<std::vector<int>>();
  cfg.head_depth = j.at("head_depth").get<int>();
  cfg.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
  cfg.anchor_ratios = j.at("anchor_ratios").get<std::vector<double>>();
  cfg.anchor_base = j.at("anchor_base").get<double>();
  cfg.loss_weight_w = j.at("loss_weight_w").get<double>();
  cfg.focal_alpha = j.at("focal_alpha").get<double>();
  cfg.focal_gamma = j.at("focal_gamma").get<double>();
  cfg.huber_delta = j.at("huber_delta").get<double>();
  cfg.pos_iou = j.at("pos_iou").get<double>();
  cfg.neg_iou = j.at("neg_iou").get<double>();
  cfg.bn_branches = j.at("bn_branches").get<int>();
  cfg.bn_epsilon = j.at("bn_epsilon").get<double>();
  cfg.bn_decay = j.at("bn_decay").get<double>();
  cfg.validate();
  return cfg;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  DETADV_CHECK(out.good(), "cannot open '", path, "' for writing");
  out << content;
  DETADV_CHECK(out.good(), "write failure on '", path, "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DETADV_CHECK(in.good(), "cannot open '", path, "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Checkpoint = weight blob (<base>.bin) + JSON sidecar (<base>.json).
inline void save_checkpoint(const DetectorState& state, const std::string& base_path, int epoch,
                            std::uint64_t rng_seed) {
  save_weight_blob(state, base_path + ".bin");
  json sidecar{{"config", detector_config_to_json(state.config)},
               {"branch_names", branch_names(state.config.bn_branches)},
               {"epoch", epoch},
               {"rng_seed", rng_seed}};
  write_text_file(base_path + ".json", sidecar.dump(2) + "\n");
}

struct Checkpoint {
  DetectorState state;
  int epoch = 0;
  std::uint64_t rng_seed = 0;
};

inline Checkpoint load_checkpoint(const std::string& base_path) {
  json sidecar = json::parse(read_text_file(base_path + ".json"));
  Checkpoint ckpt;
  DetectorConfig cfg = detector_config_from_json(sidecar.at("config"));
  ckpt.state = init_detector(cfg, 0);
  load_weight_blob(ckpt.state, base_path + ".bin");
  ckpt.epoch = sidecar.at("epoch").get<int>();
  ckpt.rng_seed = sidecar.at("rng_seed").get<std::uint64_t>();
  const auto names = sidecar.at("branch_names").get<std::vector<std::string>>();
  DETADV_CHECK(static_cast<int>(names.size()) == cfg.bn_branches,
               "checkpoint sidecar branch_names disagree with bn_branches");
  return ckpt;
}

}  // namespace detadv

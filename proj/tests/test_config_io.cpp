#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "detadvprop/attack.hpp"
#include "detadvprop/checkpoint.hpp"
#include "detadvprop/flatconfig.hpp"
#include "test_support.hpp"

using namespace detadv;
using namespace testsupport;
namespace fs = std::filesystem;

TEST_CASE("flatconfig: parsing, comments, overrides, unknown keys") {
  FlatConfig cfg = FlatConfig::parse_string(
      "# run settings\n"
      "train.epochs = 5   # inline comment\n"
      "train.base_lr = 0.25\n"
      "detector.levels = 2, 3\n"
      "\n");
  CHECK(cfg.get_int("train.epochs", 0) == 5);
  CHECK(cfg.get_double("train.base_lr", 0) == 0.25);
  CHECK(cfg.get_ints("detector.levels", {}) == std::vector<int>{2, 3});

  // The flag wins over the file.
  cfg.set("train.epochs", "9");
  CHECK(cfg.get_int("train.epochs", 0) == 9);

  CHECK_THROWS_AS(FlatConfig::parse_string("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(FlatConfig::parse_string("not a pair\n"), ConfigError);

  FlatConfig unknown = FlatConfig::parse_string("trian.epochs = 3\n");
  train_config_from(unknown);
  CHECK_THROWS_AS(unknown.finish(), ConfigError);

  FlatConfig bad_value = FlatConfig::parse_string("train.epochs = five\n");
  CHECK_THROWS_AS(train_config_from(bad_value), ConfigError);
}

TEST_CASE("flatconfig: full train/attack/detector round trip") {
  FlatConfig cfg = FlatConfig::parse_string(
      "detector.width = 12\n"
      "detector.num_classes = 2\n"
      "detector.loss_weight_w = 0.5\n"
      "train.epochs = 3\n"
      "train.variant = three_bn\n"
      "train.seed = 42\n"
      "attack.mode = targeted\n"
      "attack.source = cls\n"
      "attack.epsilon = 2.5\n"
      "attack.target_scope = object_anchors\n"
      "attack.epsilon_object = 3\n"
      "attack.epsilon_background = 1\n");
  DetectorConfig d = detector_config_from(cfg);
  TrainConfig t = train_config_from(cfg);
  cfg.finish();
  CHECK(d.width == 12);
  CHECK(d.loss_weight_w == 0.5);
  CHECK(t.variant == TrainVariant::kThreeBn);
  CHECK(t.required_branches() == 3);
  CHECK(t.attack.mode == AttackMode::kTargeted);
  CHECK(t.attack.source == AttackSourceKind::kCls);
  CHECK(t.attack.target_scope == TargetScope::kObjectAnchors);
  REQUIRE(t.attack.region_weighted());
  CHECK(*t.attack.epsilon_object == 3.0);

  // Region strengths must come in pairs.
  FlatConfig half = FlatConfig::parse_string("attack.epsilon_object = 2\n");
  CHECK_THROWS_AS(attack_config_from(half), ConfigError);
}

TEST_CASE("checkpoint: save/load round trip preserves every parameter bit") {
  DetectorConfig cfg = toy_config(2, 3);
  DetectorState state = init_detector(cfg, 8);
  // Move the state away from initialization.
  forward(state, random_images(2, 1, 4, 4, 9), 1, true);
  forward(state, random_images(2, 1, 4, 4, 10), 0, true);

  const fs::path base = fs::temp_directory_path() / "detadv_ckpt_test";
  save_checkpoint(state, base.string(), 7, 1234);
  Checkpoint loaded = load_checkpoint(base.string());
  CHECK(loaded.epoch == 7);
  CHECK(loaded.rng_seed == 1234);
  CHECK(loaded.state.config.bn_branches == 2);
  CHECK(states_bit_equal(loaded.state, state));

  // Sidecar carries the branch names.
  const json sidecar = json::parse(read_text_file(base.string() + ".json"));
  CHECK(sidecar.at("branch_names").get<std::vector<std::string>>() ==
        std::vector<std::string>{"main", "aux"});

  // A truncated blob is rejected.
  const std::string blob = read_text_file(base.string() + ".bin");
  write_text_file(base.string() + ".bin", blob.substr(0, blob.size() / 2));
  CHECK_THROWS(load_checkpoint(base.string()));

  fs::remove(base.string() + ".bin");
  fs::remove(base.string() + ".json");
}

TEST_CASE("input_gradient: non-finite loss reports a diagnostic") {
  DetectorConfig cfg = toy_config(1, 2);
  DetectorState state = init_detector(cfg, 3);
  state.convs.back().b[0] = std::nan("");  // poison the box head
  Tensor batch = random_images(1, 1, 4, 4, 4);
  auto targets = random_targets(1, 4, cfg.num_classes, 5, 0.5, 0.0);
  CHECK_THROWS_WITH(input_gradient(state, batch, AttackSourceKind::kLoc, targets, 0),
                    Catch::Matchers::ContainsSubstring("non-finite"));
}

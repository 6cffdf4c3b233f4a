#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "detadvprop/attack.hpp"
#include "detadvprop/checkpoint.hpp"
#include "detadvprop/corruption.hpp"
#include "detadvprop/datagen.hpp"
#include "detadvprop/dataset.hpp"
#include "detadvprop/eval.hpp"
#include "detadvprop/flatconfig.hpp"
#include "detadvprop/inference.hpp"
#include "detadvprop/report.hpp"
#include "detadvprop/trainer.hpp"
#include "detadvprop/version.hpp"

namespace detadv::cli {

namespace fs = std::filesystem;

// Every command drops a manifest with the resolved configuration, the seeds
// and the artifact paths, so a run can be replayed from its manifest alone.
struct ManifestBuilder {
  json j;

  explicit ManifestBuilder(const std::string& command) {
    j["command"] = command;
    j["tool_version"] = kToolVersion;
    j["dataset_paths"] = json::array();
    j["checkpoint_paths"] = json::array();
    j["report_paths"] = json::array();
    j["seeds"] = json::object();
  }

  void set_config(const FlatConfig& cfg) {
    json c = json::object();
    for (const auto& [k, v] : cfg.entries()) c[k] = v;
    j["config"] = c;
  }
  void add_dataset(const std::string& p) { add_existing("dataset_paths", p); }
  void add_checkpoint(const std::string& p) { add_existing("checkpoint_paths", p); }
  void add_report(const std::string& p) { add_existing("report_paths", p); }
  void add_seed(const std::string& name, std::uint64_t seed) { j["seeds"][name] = seed; }

  void write(const std::string& path) { write_text_file(path, j.dump(2) + "\n"); }

 private:
  void add_existing(const char* key, const std::string& p) {
    DETADV_CHECK(fs::exists(p), "manifest: referenced path '", p, "' does not exist");
    j[key].push_back(p);
  }
};

inline FlatConfig load_config_or_empty(const std::string& path) {
  return path.empty() ? FlatConfig::parse_string("") : FlatConfig::parse_file(path);
}

// ---- gen-data --------------------------------------------------------------

inline int cmd_gen_data(const std::string& spec_path, int n, std::uint64_t seed,
                        const std::string& out, bool overwrite) {
  FlatConfig cfg = load_config_or_empty(spec_path);
  SceneSpec spec = scene_spec_from(cfg);
  cfg.finish();
  generate_dataset(spec, n, seed, out, overwrite);

  ManifestBuilder manifest("gen-data");
  manifest.set_config(cfg);
  manifest.add_seed("root", seed);
  manifest.add_dataset(out);
  manifest.j["n_images"] = n;
  manifest.write(out + "/manifest.json");
  return 0;
}

// ---- train -----------------------------------------------------------------

inline int cmd_train(const std::string& config_path, const std::string& variant_flag,
                     const std::string& data_flag, const std::string& seed_flag,
                     const std::string& out) {
  FlatConfig cfg = FlatConfig::parse_file(config_path);
  if (!variant_flag.empty()) cfg.set("train.variant", variant_flag);
  if (!data_flag.empty()) cfg.set("train.data", data_flag);
  if (!seed_flag.empty()) cfg.set("train.seed", seed_flag);

  DetectorConfig detector_cfg = detector_config_from(cfg);
  TrainConfig train_cfg = train_config_from(cfg);
  const std::string data_dir = cfg.get_string("train.data", "");
  DETADV_CONFIG_CHECK(!data_dir.empty(), "train: no dataset (set train.data or pass --data)");
  cfg.finish();

  Dataset ds = load_dataset(data_dir);
  DETADV_CONFIG_CHECK(ds.num_classes() == detector_cfg.num_classes,
                      "detector.num_classes (", detector_cfg.num_classes,
                      ") disagrees with the dataset catalog (", ds.num_classes(), ")");
  TrainData data = load_train_data(ds);

  TrainResult result = train(detector_cfg, train_cfg, data, out);

  ManifestBuilder manifest("train");
  manifest.set_config(cfg);
  manifest.add_seed("root", train_cfg.seed);
  manifest.add_dataset(data_dir);
  manifest.add_checkpoint(out + "/final.bin");
  manifest.add_checkpoint(out + "/final_stripped.bin");
  manifest.write(out + "/manifest.json");
  return 0;
}

// ---- corrupt ---------------------------------------------------------------

inline int cmd_corrupt(const std::string& data_dir, const std::string& out, std::uint64_t seed,
                       const std::vector<std::string>& kind_names,
                       const std::vector<int>& severities, bool overwrite) {
  std::vector<CorruptionKind> kinds;
  if (kind_names.empty()) {
    kinds = all_corruption_kinds();
  } else {
    for (const std::string& name : kind_names) kinds.push_back(corruption_kind_from_string(name));
  }
  std::vector<int> sevs = severities.empty() ? std::vector<int>{1, 2, 3, 4, 5} : severities;
  build_corruption_grid(data_dir, kinds, sevs, seed, out, overwrite);

  ManifestBuilder manifest("corrupt");
  FlatConfig cfg = FlatConfig::parse_string("");
  manifest.set_config(cfg);
  manifest.add_seed("root", seed);
  manifest.add_dataset(data_dir);
  manifest.add_dataset(out);
  manifest.j["kinds"] = json::array();
  for (CorruptionKind k : kinds) manifest.j["kinds"].push_back(to_string(k));
  manifest.j["severities"] = sevs;
  manifest.write(out + "/manifest.json");
  return 0;
}

// ---- eval ------------------------------------------------------------------

inline EvalReport evaluate_checkpoint(const DetectorState& state, const Dataset& ds,
                                      const InferenceSettings& settings) {
  InferenceResult inf = run_inference(state, ds, ds.val_ids, settings);
  return evaluate(inf.detections, inf.annotations, ds.num_classes(), coco_iou_thresholds(),
                  settings.max_dets);
}

inline int cmd_eval(const std::string& ckpt, const std::string& data_dir,
                    const std::string& grid_dir, const std::string& out_path,
                    const InferenceSettings& settings) {
  Checkpoint loaded = load_checkpoint(ckpt);
  Dataset ds = load_dataset(data_dir);
  EvalReport report = evaluate_checkpoint(loaded.state, ds, settings);

  if (!grid_dir.empty()) {
    const json manifest = json::parse(read_text_file(grid_dir + "/grid_manifest.json"));
    std::vector<VariantScore> scores;
    std::vector<std::pair<std::string, int>> expected;
    for (const json& v : manifest.at("variants")) {
      const std::string kind = v.at("kind").get<std::string>();
      const int severity = v.at("severity").get<int>();
      expected.push_back({kind, severity});
      Dataset vds = load_dataset(grid_dir + "/" + v.at("path").get<std::string>());
      EvalReport vreport = evaluate_checkpoint(loaded.state, vds, settings);
      scores.push_back(VariantScore{kind, severity, vreport.map});
    }
    report = evaluate_grid(report, scores, expected);
  }

  const json out_json = eval_report_to_json(report);
  std::cout << render_report_table({{ckpt, report}});
  if (!out_path.empty()) {
    if (fs::path(out_path).has_parent_path())
      fs::create_directories(fs::path(out_path).parent_path());
    write_text_file(out_path, out_json.dump(2) + "\n");
    ManifestBuilder manifest("eval");
    FlatConfig cfg = FlatConfig::parse_string("");
    manifest.set_config(cfg);
    manifest.add_dataset(data_dir);
    if (!grid_dir.empty()) manifest.add_dataset(grid_dir);
    manifest.add_checkpoint(ckpt + ".bin");
    manifest.add_report(out_path);
    manifest.j["settings"] = {{"score_thr", settings.score_thr},
                              {"nms_iou", settings.nms_iou},
                              {"max_dets", settings.max_dets}};
    manifest.write(out_path + ".manifest.json");
  } else {
    std::cout << out_json.dump(2) << "\n";
  }
  return 0;
}

// ---- report ----------------------------------------------------------------

inline int cmd_report(const std::vector<std::string>& paths, int baseline,
                      const std::string& out_path) {
  DETADV_CONFIG_CHECK(!paths.empty(), "report: need at least one report file");
  DETADV_CONFIG_CHECK(baseline >= 0 && baseline < static_cast<int>(paths.size()),
                      "report: baseline index out of range");
  std::vector<NamedReport> reports;
  for (const std::string& p : paths)
    reports.push_back({fs::path(p).stem().string(), eval_report_from_json(json::parse(read_text_file(p)))});

  std::cout << render_report_table(reports);
  if (reports.size() >= 2) {
    CompareResult cmp = compare_report(reports, static_cast<std::size_t>(baseline));
    std::cout << "\n" << cmp.text;
    if (!out_path.empty()) write_text_file(out_path, cmp.table.dump(2) + "\n");
  }
  return 0;
}

// ---- attack-dump -----------------------------------------------------------

inline int cmd_attack_dump(const std::string& ckpt, const std::string& data_dir,
                           const std::string& config_path, int n, std::uint64_t seed,
                           const std::string& out, bool overwrite) {
  FlatConfig cfg = load_config_or_empty(config_path);
  AttackConfig attack = attack_config_from(cfg);
  cfg.finish();

  Checkpoint loaded = load_checkpoint(ckpt);
  Dataset ds = load_dataset(data_dir);
  DETADV_CONFIG_CHECK(n >= 1, "attack-dump: need n >= 1 images");
  DETADV_CHECK(static_cast<int>(ds.val_ids.size()) >= n, "attack-dump: validation split has only ",
               ds.val_ids.size(), " images");

  if (fs::exists(out) && !fs::is_empty(out))
    DETADV_CONFIG_CHECK(overwrite, "output path '", out,
                        "' is not empty; pass overwrite to replace it");
  fs::create_directories(out);

  const DatasetItem& first = ds.by_id(ds.val_ids.front());
  const int h = first.height, w = first.width;
  Tensor batch({n, loaded.state.config.in_channels, h, w});
  std::vector<Annotation> anns(n);
  AnchorSet anchors = generate_anchors(loaded.state.config, h, w);
  std::vector<AnchorTargets> targets;
  for (int i = 0; i < n; ++i) {
    const DatasetItem& item = ds.by_id(ds.val_ids[i]);
    Tensor image = read_ppm(ds.dir + "/" + item.file);
    std::copy(image.data(), image.data() + image.size(), batch.data() + batch.idx4(i, 0, 0, 0));
    anns[i] = item.ann;
    targets.push_back(assign_targets(anchors, item.ann, loaded.state.config.num_classes,
                                     loaded.state.config.pos_iou, loaded.state.config.neg_iou));
  }

  const int branch = loaded.state.config.bn_branches > 1 ? 1 : 0;
  AdversarialBatch adv = generate_adversarial(loaded.state, batch, targets, attack, branch, seed,
                                              &anns);

  json images = json::array();
  const std::size_t image_size = adv.images.size() / n;
  for (int i = 0; i < n; ++i) {
    Tensor image({3, h, w});
    std::copy(adv.images.data() + i * image_size, adv.images.data() + (i + 1) * image_size,
              image.data());
    char name[32];
    std::snprintf(name, sizeof(name), "adv_%05d.ppm", ds.val_ids[i]);
    write_ppm(out + "/" + name, image);

    Tensor origin({3, h, w});
    std::copy(batch.data() + i * image_size, batch.data() + (i + 1) * image_size, origin.data());
    images.push_back(json{{"id", ds.val_ids[i]},
                          {"file", name},
                          {"source_tag", to_string(adv.source_tag[i])},
                          {"linf", measured_linf(image, origin)}});
  }

  json manifest{{"command", "attack-dump"},
                {"tool_version", kToolVersion},
                {"seed", seed},
                {"cfg",
                 {{"mode", to_string(attack.mode)},
                  {"source", to_string(attack.source)},
                  {"epsilon", attack.epsilon},
                  {"random_init", attack.random_init},
                  {"target_scope", to_string(attack.target_scope)},
                  {"training_stats", attack.training_stats}}},
                {"images", images}};
  if (attack.epsilon_object) manifest["cfg"]["epsilon_object"] = *attack.epsilon_object;
  if (attack.epsilon_background) manifest["cfg"]["epsilon_background"] = *attack.epsilon_background;
  write_text_file(out + "/manifest.json", manifest.dump(2) + "\n");
  return 0;
}

// ---- dispatcher ------------------------------------------------------------

inline int run_command(const std::vector<std::string>& args) {
  CLI::App app{"Adversarially-augmented detector training and evaluation toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic detection dataset");
  std::string gen_spec, gen_out;
  int gen_n = 0;
  std::uint64_t gen_seed = 1;
  bool gen_overwrite = false;
  gen->add_option("--spec", gen_spec, "Scene spec file (flat key = value)");
  gen->add_option("--n", gen_n, "Number of images")->required();
  gen->add_option("--seed", gen_seed, "Root seed");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--overwrite", gen_overwrite, "Replace a non-empty output directory");

  // train
  auto* tr = app.add_subcommand("train", "Train a detector variant");
  std::string tr_config, tr_variant, tr_data, tr_seed, tr_out;
  tr->add_option("--config", tr_config, "Run config file")->required();
  tr->add_option("--variant", tr_variant, "vanilla|det_advprop|cls|loc|det|three_bn");
  tr->add_option("--data", tr_data, "Dataset directory (overrides train.data)");
  tr->add_option("--seed", tr_seed, "Root seed (overrides train.seed)");
  tr->add_option("--out", tr_out, "Checkpoint output directory")->required();

  // corrupt
  auto* co = app.add_subcommand("corrupt", "Build a corruption grid over the validation split");
  std::string co_data, co_out;
  std::uint64_t co_seed = 1;
  std::vector<std::string> co_kinds;
  std::vector<int> co_sevs;
  bool co_overwrite = false;
  co->add_option("--data", co_data, "Clean dataset directory")->required();
  co->add_option("--out", co_out, "Grid output directory")->required();
  co->add_option("--seed", co_seed, "Root seed");
  co->add_option("--kinds", co_kinds, "Corruption kinds (default: all 8)")->delimiter(',');
  co->add_option("--severities", co_sevs, "Severity levels (default: 1..5)")->delimiter(',');
  co->add_flag("--overwrite", co_overwrite, "Replace a non-empty output directory");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint (optionally over a grid)");
  std::string ev_ckpt, ev_data, ev_grid, ev_out;
  InferenceSettings ev_settings;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint base path (without .bin/.json)")->required();
  ev->add_option("--data", ev_data, "Clean dataset directory")->required();
  ev->add_option("--grid", ev_grid, "Corruption grid directory");
  ev->add_option("--out", ev_out, "Report JSON output path");
  ev->add_option("--score-thr", ev_settings.score_thr, "Detection score threshold");
  ev->add_option("--nms-iou", ev_settings.nms_iou, "NMS IoU threshold");
  ev->add_option("--max-dets", ev_settings.max_dets, "Max detections per image");

  // report
  auto* re = app.add_subcommand("report", "Render and compare evaluation reports");
  std::vector<std::string> re_paths;
  int re_baseline = 0;
  std::string re_out;
  re->add_option("reports", re_paths, "Report JSON files")->required();
  re->add_option("--baseline", re_baseline, "Baseline report index (default 0)");
  re->add_option("--out", re_out, "Delta table JSON output path");

  // attack-dump
  auto* ad = app.add_subcommand("attack-dump", "Write an adversarial batch with a manifest");
  std::string ad_ckpt, ad_data, ad_config, ad_out;
  int ad_n = 8;
  std::uint64_t ad_seed = 1;
  bool ad_overwrite = false;
  ad->add_option("--ckpt", ad_ckpt, "Checkpoint base path")->required();
  ad->add_option("--data", ad_data, "Dataset directory")->required();
  ad->add_option("--config", ad_config, "Attack config file (attack.* keys)");
  ad->add_option("--n", ad_n, "Number of validation images to attack");
  ad->add_option("--seed", ad_seed, "Attack seed");
  ad->add_option("--out", ad_out, "Output directory")->required();
  ad->add_flag("--overwrite", ad_overwrite, "Replace a non-empty output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_spec, gen_n, gen_seed, gen_out, gen_overwrite);
    if (tr->parsed()) return cmd_train(tr_config, tr_variant, tr_data, tr_seed, tr_out);
    if (co->parsed()) return cmd_corrupt(co_data, co_out, co_seed, co_kinds, co_sevs, co_overwrite);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_grid, ev_out, ev_settings);
    if (re->parsed()) return cmd_report(re_paths, re_baseline, re_out);
    if (ad->parsed())
      return cmd_attack_dump(ad_ckpt, ad_data, ad_config, ad_n, ad_seed, ad_out, ad_overwrite);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

inline int run_command(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args);
}

}  // namespace detadv::cli

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "detadvprop/cli.hpp"

using namespace detadv;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("detadv_cli_" + tag);
  fs::remove_all(p);
  return p;
}

// Small end-to-end configuration: 32x32 scenes, narrow detector, two epochs.
const char* kSceneCfg =
    "scene.image_size = 32\n"
    "scene.objects_min = 1\n"
    "scene.objects_max = 2\n"
    "scene.size_min = 10\n"
    "scene.size_max = 20\n";

const char* kRunCfg =
    "detector.width = 4\n"
    "detector.num_classes = 3\n"
    "train.epochs = 2\n"
    "train.batch_size = 4\n"
    "train.base_lr = 0.05\n"
    "train.warmup_epochs = 1\n"
    "train.scale_jitter = false\n"
    "train.seed = 9\n"
    "attack.source = maxmax\n"
    "attack.epsilon = 1\n";

struct Workspace {
  fs::path root;
  fs::path scene_cfg, run_cfg, data, ckpt, grid;

  Workspace() {
    root = temp_dir("ws");
    fs::create_directories(root);
    scene_cfg = root / "scene.cfg";
    run_cfg = root / "run.cfg";
    data = root / "data";
    ckpt = root / "ckpt";
    grid = root / "grid";
    write_text_file(scene_cfg.string(), kSceneCfg);
    write_text_file(run_cfg.string(), kRunCfg);
  }
  ~Workspace() { fs::remove_all(root); }
};

int run(const std::vector<std::string>& args) { return cli::run_command(args); }

}  // namespace

TEST_CASE("cli: usage errors exit 1 without side effects") {
  CHECK(run({"no-such-command"}) == 1);
  CHECK(run({}) == 1);
  CHECK(run({"gen-data", "--bogus-flag", "x"}) == 1);

  Workspace ws;
  const fs::path out = ws.root / "never";
  CHECK(run({"train", "--config", ws.run_cfg.string(), "--variant", "bogus", "--out",
             out.string()}) == 1);
  CHECK_FALSE(fs::exists(out));

  // Unknown config key is a usage error too.
  const fs::path bad_cfg = ws.root / "bad.cfg";
  write_text_file(bad_cfg.string(), std::string(kRunCfg) + "trian.epochs = 3\n");
  CHECK(run({"train", "--config", bad_cfg.string(), "--data", "unused", "--out",
             out.string()}) == 1);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("cli: gen-data happy path and deterministic re-run") {
  Workspace ws;
  CHECK(run({"gen-data", "--spec", ws.scene_cfg.string(), "--n", "12", "--seed", "7", "--out",
             ws.data.string()}) == 0);
  CHECK(fs::exists(ws.data / "index.json"));
  CHECK(fs::exists(ws.data / "manifest.json"));

  const fs::path data2 = ws.root / "data2";
  CHECK(run({"gen-data", "--spec", ws.scene_cfg.string(), "--n", "12", "--seed", "7", "--out",
             data2.string()}) == 0);
  CHECK(read_text_file((ws.data / "index.json").string()) ==
        read_text_file((data2 / "index.json").string()));

  // Refusal to clobber without --overwrite is a usage error.
  CHECK(run({"gen-data", "--spec", ws.scene_cfg.string(), "--n", "3", "--seed", "8", "--out",
             ws.data.string()}) == 1);
  CHECK(run({"gen-data", "--spec", ws.scene_cfg.string(), "--n", "3", "--seed", "8", "--out",
             ws.data.string(), "--overwrite"}) == 0);
}

TEST_CASE("cli: full pipeline from data to compared reports") {
  Workspace ws;
  REQUIRE(run({"gen-data", "--spec", ws.scene_cfg.string(), "--n", "16", "--seed", "7", "--out",
               ws.data.string()}) == 0);
  REQUIRE(run({"train", "--config", ws.run_cfg.string(), "--variant", "det_advprop", "--data",
               ws.data.string(), "--out", ws.ckpt.string()}) == 0);
  CHECK(fs::exists(ws.ckpt / "final.bin"));
  CHECK(fs::exists(ws.ckpt / "final.json"));
  CHECK(fs::exists(ws.ckpt / "final_stripped.bin"));
  CHECK(fs::exists(ws.ckpt / "train_log.jsonl"));
  CHECK(fs::exists(ws.ckpt / "manifest.json"));

  REQUIRE(run({"corrupt", "--data", ws.data.string(), "--out", ws.grid.string(), "--seed", "3",
               "--kinds", "gaussian_noise,contrast", "--severities", "1,3"}) == 0);
  const json grid_manifest =
      json::parse(read_text_file((ws.grid / "grid_manifest.json").string()));
  CHECK(grid_manifest.at("variants").size() == 4);

  // A 2-epoch toy model emits only low-score detections; drop the threshold
  // so the clean mAP is nonzero and rPC is defined.
  const fs::path report_path = ws.root / "advprop.json";
  REQUIRE(run({"eval", "--ckpt", (ws.ckpt / "final").string(), "--data", ws.data.string(),
               "--grid", ws.grid.string(), "--score-thr", "0.002", "--out",
               report_path.string()}) == 0);
  const json report = json::parse(read_text_file(report_path.string()));
  CHECK(report.contains("map"));
  CHECK(report.contains("mean_corrupted_map"));
  CHECK(report.contains("rpc_percent"));
  CHECK(report.at("per_variant_map").size() == 4);

  // Train a vanilla twin and compare reports.
  const fs::path ckpt2 = ws.root / "ckpt_vanilla";
  REQUIRE(run({"train", "--config", ws.run_cfg.string(), "--variant", "vanilla", "--data",
               ws.data.string(), "--out", ckpt2.string()}) == 0);
  const fs::path report2_path = ws.root / "vanilla.json";
  REQUIRE(run({"eval", "--ckpt", (ckpt2 / "final").string(), "--data", ws.data.string(),
               "--grid", ws.grid.string(), "--score-thr", "0.002", "--out",
               report2_path.string()}) == 0);

  const fs::path delta_path = ws.root / "delta.json";
  CHECK(run({"report", report2_path.string(), report_path.string(), "--baseline", "0", "--out",
             delta_path.string()}) == 0);
  const json delta = json::parse(read_text_file(delta_path.string()));
  REQUIRE(delta.size() == 2);
  CHECK(delta[0].at("baseline").get<bool>());
  CHECK(delta[1].contains("map"));
  CHECK(delta[1]["map"].contains("rendered"));
}

TEST_CASE("cli: eval reproduces byte-identical reports for the same inputs") {
  Workspace ws;
  REQUIRE(run({"gen-data", "--spec", ws.scene_cfg.string(), "--n", "10", "--seed", "5", "--out",
               ws.data.string()}) == 0);
  REQUIRE(run({"train", "--config", ws.run_cfg.string(), "--variant", "vanilla", "--data",
               ws.data.string(), "--out", ws.ckpt.string()}) == 0);
  const fs::path r1 = ws.root / "r1.json";
  const fs::path r2 = ws.root / "r2.json";
  REQUIRE(run({"eval", "--ckpt", (ws.ckpt / "final").string(), "--data", ws.data.string(),
               "--out", r1.string()}) == 0);
  REQUIRE(run({"eval", "--ckpt", (ws.ckpt / "final").string(), "--data", ws.data.string(),
               "--out", r2.string()}) == 0);
  CHECK(read_text_file(r1.string()) == read_text_file(r2.string()));
}

TEST_CASE("cli: attack-dump writes images and a manifest with linf bounds") {
  Workspace ws;
  REQUIRE(run({"gen-data", "--spec", ws.scene_cfg.string(), "--n", "10", "--seed", "5", "--out",
               ws.data.string()}) == 0);
  REQUIRE(run({"train", "--config", ws.run_cfg.string(), "--variant", "det_advprop", "--data",
               ws.data.string(), "--out", ws.ckpt.string()}) == 0);
  const fs::path dump = ws.root / "advdump";
  REQUIRE(run({"attack-dump", "--ckpt", (ws.ckpt / "final").string(), "--data", ws.data.string(),
               "--n", "2", "--seed", "11", "--out", dump.string()}) == 0);
  const json manifest = json::parse(read_text_file((dump / "manifest.json").string()));
  REQUIRE(manifest.at("images").size() == 2);
  for (const json& im : manifest.at("images")) {
    CHECK(fs::exists(dump / im.at("file").get<std::string>()));
    const std::string tag = im.at("source_tag").get<std::string>();
    CHECK((tag == "cls" || tag == "loc" || tag == "det"));
    // epsilon = 1 plus 8-bit quantization of the dumped PPM.
    CHECK(im.at("linf").get<double>() <= 2.0 / 255.0 + 1e-9);
  }
  CHECK(manifest.at("cfg").at("source").get<std::string>() == "maxmax");
}

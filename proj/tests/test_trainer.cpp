#include <catch2/catch_amalgamated.hpp>

#include "detadvprop/optimizer.hpp"
#include "detadvprop/trainer.hpp"
#include "test_support.hpp"

using namespace detadv;
using namespace testsupport;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TrainData tiny_data(int n_train, int n_val, const DetectorConfig& cfg, std::uint64_t seed) {
  TrainData data;
  data.image_h = 4;
  data.image_w = 4;
  data.num_classes = cfg.num_classes;
  AnchorSet anchors = generate_anchors(cfg, 4, 4);
  Rng rng(seed);
  auto make_item = [&]() {
    TrainItem item;
    item.image = random_images(1, cfg.in_channels, 4, 4, rng.next_u64());
    Tensor img({cfg.in_channels, 4, 4});
    std::copy(item.image.data(), item.image.data() + img.size(), img.data());
    item.image = img;
    const double y = rng.uniform(0.0, 1.0), x = rng.uniform(0.0, 1.0);
    item.ann.boxes.push_back(Box{y, x, y + 3.0, x + 3.0});
    item.ann.classes.push_back(static_cast<int>(rng.uniform_int(cfg.num_classes)));
    return item;
  };
  for (int i = 0; i < n_train; ++i) data.train.push_back(make_item());
  for (int i = 0; i < n_val; ++i) data.val.push_back(make_item());
  return data;
}

bool train_logs_equal_ignoring_wall_time(const TrainLog& a, const TrainLog& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const EpochRecord& x = a.records[i];
    const EpochRecord& y = b.records[i];
    if (x.epoch != y.epoch || x.steps != y.steps || x.lr != y.lr) return false;
    if (x.clean.l_cls != y.clean.l_cls || x.clean.l_loc != y.clean.l_loc ||
        x.clean.l_det != y.clean.l_det)
      return false;
    if (x.adv.size() != y.adv.size()) return false;
    for (std::size_t j = 0; j < x.adv.size(); ++j)
      if (x.adv[j].l_det != y.adv[j].l_det) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("lr_schedule: warmup endpoints and cosine tail") {
  CHECK(lr_schedule(0, 1000, 100, 0.32) == 0.0);
  CHECK_THAT(lr_schedule(100, 1000, 100, 0.32), WithinAbs(0.32, 1e-15));
  CHECK_THAT(lr_schedule(1000, 1000, 100, 0.32), WithinAbs(0.0, 1e-15));
  CHECK_THAT(lr_schedule(50, 1000, 100, 0.32), WithinAbs(0.16, 1e-15));
  // Halfway through the cosine phase.
  CHECK_THAT(lr_schedule(550, 1000, 100, 0.32), WithinAbs(0.16, 1e-12));
  CHECK_THROWS_AS(lr_schedule(0, 10, 11, 0.32), ConfigError);
}

TEST_CASE("vanilla_step: zero learning rate leaves parameters bit-unchanged") {
  DetectorConfig cfg = toy_config();
  DetectorState state = init_detector(cfg, 3);
  DetectorState before = state;
  SgdOptimizer opt(state, 0.9, 4e-5);
  Tensor batch = random_images(2, 1, 4, 4, 4);
  auto targets = random_targets(2, 4, cfg.num_classes, 5, 0.5, 0.0);
  vanilla_step(state, batch, targets, opt, 0.0);
  for (std::size_t i = 0; i < state.convs.size(); ++i) {
    CHECK(bit_equal(state.convs[i].w, before.convs[i].w));
    CHECK(bit_equal(state.convs[i].b, before.convs[i].b));
  }
  for (std::size_t i = 0; i < state.bns.size(); ++i) {
    CHECK(bit_equal(state.bns[i].branches[0].gamma, before.bns[i].branches[0].gamma));
    CHECK(bit_equal(state.bns[i].branches[0].beta, before.bns[i].branches[0].beta));
  }
  // Statistics still update.
  CHECK_FALSE(bit_equal(state.bns[0].branches[0].run_mean, before.bns[0].branches[0].run_mean));
}

TEST_CASE("vanilla_step: plain SGD matches the closed form") {
  // momentum 0, weight decay 0: new_param = param - lr * grad.
  DetectorConfig cfg = toy_config();
  DetectorState state = init_detector(cfg, 7);
  Tensor batch = random_images(2, 1, 4, 4, 8);
  auto targets = random_targets(2, 4, cfg.num_classes, 9, 0.5, 0.0);

  // Reference gradient from an unstepped twin.
  DetectorState twin = state;
  ForwardTrace trace;
  RawPredictions preds = forward_pass(twin, batch, 0, BnStatsMode::kBatch, true, &trace, &twin);
  Tensor dlogits, doffsets;
  detection_loss_from_predictions(preds.logits, preds.offsets, targets, cfg, &dlogits, &doffsets);
  GradBuffers grads = GradBuffers::zeros_like(twin);
  backward_pass(twin, trace, dlogits, doffsets, &grads, nullptr);

  const double lr = 0.05;
  SgdOptimizer opt(state, 0.0, 0.0);
  DetectorState before = state;
  vanilla_step(state, batch, targets, opt, lr);
  for (std::size_t c = 0; c < state.convs.size(); ++c)
    for (std::size_t i = 0; i < state.convs[c].w.size(); ++i)
      CHECK_THAT(state.convs[c].w[i],
                 WithinAbs(before.convs[c].w[i] - lr * grads.conv_w[c][i], 1e-7));
}

TEST_CASE("det_advprop_step: Eq. (7) structure and BN routing twin test") {
  DetectorConfig cfg = toy_config(2, 3);
  const std::uint64_t seed = 21;
  DetectorState advprop_state = init_detector(cfg, seed);
  DetectorState vanilla_state = init_detector(cfg, seed);
  REQUIRE(states_bit_equal(advprop_state, vanilla_state));

  Tensor batch = random_images(4, 1, 4, 4, 22);
  auto targets = random_targets(4, 4, cfg.num_classes, 23, 0.5, 0.0);
  AttackConfig attack;
  attack.source = AttackSourceKind::kMaxMax;

  SgdOptimizer opt_a(advprop_state, 0.9, 4e-5);
  SgdOptimizer opt_b(vanilla_state, 0.9, 4e-5);
  DetAdvPropStepResult result =
      det_advprop_step(advprop_state, batch, targets, opt_a, 0.01, attack, 99);
  vanilla_step(vanilla_state, batch, targets, opt_b, 0.01);

  // The optimized scalar is the exact sum of the two bundles.
  const double total = result.clean.l_det + result.adv.l_det;
  CHECK(total == result.clean.l_det + result.adv.l_det);
  CHECK(result.clean.finite());
  CHECK(result.adv.finite());

  // Main-branch statistics are a pure function of the clean sub-batch:
  // bit-equal to the vanilla twin's.
  for (std::size_t i = 0; i < advprop_state.bns.size(); ++i) {
    CHECK(bit_equal(advprop_state.bns[i].branches[0].run_mean,
                    vanilla_state.bns[i].branches[0].run_mean));
    CHECK(bit_equal(advprop_state.bns[i].branches[0].run_var,
                    vanilla_state.bns[i].branches[0].run_var));
  }
  // The auxiliary branch moved away from its initialization.
  DetectorState fresh = init_detector(cfg, seed);
  CHECK_FALSE(bit_equal(advprop_state.bns[0].branches[1].run_mean,
                        fresh.bns[0].branches[1].run_mean));
  // Weight sharing: the adversarial domain contributed, so the shared convs
  // differ from the vanilla twin's after the step.
  bool any_diff = false;
  for (std::size_t c = 0; c < advprop_state.convs.size(); ++c)
    if (!bit_equal(advprop_state.convs[c].w, vanilla_state.convs[c].w)) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("det_advprop_step: zero learning rate freezes parameters, not statistics") {
  DetectorConfig cfg = toy_config(2, 3);
  DetectorState state = init_detector(cfg, 31);
  DetectorState before = state;
  SgdOptimizer opt(state, 0.9, 4e-5);
  Tensor batch = random_images(2, 1, 4, 4, 32);
  auto targets = random_targets(2, 4, cfg.num_classes, 33, 0.5, 0.0);
  AttackConfig attack;
  attack.source = AttackSourceKind::kMaxMax;
  det_advprop_step(state, batch, targets, opt, 0.0, attack, 34);

  for (std::size_t c = 0; c < state.convs.size(); ++c)
    CHECK(bit_equal(state.convs[c].w, before.convs[c].w));
  for (std::size_t i = 0; i < state.bns.size(); ++i)
    for (int br = 0; br < 2; ++br) {
      CHECK(bit_equal(state.bns[i].branches[br].gamma, before.bns[i].branches[br].gamma));
      CHECK(bit_equal(state.bns[i].branches[br].beta, before.bns[i].branches[br].beta));
      CHECK_FALSE(bit_equal(state.bns[i].branches[br].run_mean,
                            before.bns[i].branches[br].run_mean));
    }
}

TEST_CASE("three_bn_step: sum structure, branch isolation, zero-epsilon degeneracy") {
  DetectorConfig cfg = toy_config(3, 3);
  const std::uint64_t seed = 41;
  DetectorState state = init_detector(cfg, seed);
  DetectorState twin = init_detector(cfg, seed);

  Tensor batch = random_images(3, 1, 4, 4, 42);
  auto targets = random_targets(3, 4, cfg.num_classes, 43, 0.5, 0.0);
  AttackConfig attack;
  attack.source = AttackSourceKind::kMaxMax;  // ignored: 3BN always runs cls+loc
  const std::uint64_t attack_seed = 44;

  SgdOptimizer opt(state, 0.9, 4e-5);
  ThreeBnStepResult result = three_bn_step(state, batch, targets, opt, 0.01, attack, attack_seed);
  CHECK(result.clean.finite());
  CHECK(result.adv_cls.finite());
  CHECK(result.adv_loc.finite());

  // Branch 1 statistics depend only on the cls-sourced sub-batch: reproduce
  // them on a twin that runs nothing else through branch 1.
  AttackConfig cls_only;
  cls_only.source = AttackSourceKind::kCls;
  cls_only.epsilon = attack.epsilon;
  cls_only.random_init = attack.random_init;
  AdversarialBatch x_cls = generate_adversarial(twin, batch, targets, cls_only, 1, attack_seed);
  forward(twin, x_cls.images, 1, true);
  for (std::size_t i = 0; i < state.bns.size(); ++i) {
    CHECK(bit_equal(state.bns[i].branches[1].run_mean, twin.bns[i].branches[1].run_mean));
    CHECK(bit_equal(state.bns[i].branches[1].run_var, twin.bns[i].branches[1].run_var));
  }

  // Zero-radius ball with no random init: all three sub-batches identical.
  DetectorState zero_state = init_detector(cfg, seed);
  SgdOptimizer zero_opt(zero_state, 0.9, 4e-5);
  AttackConfig zero_attack;
  zero_attack.epsilon = 0.0;
  zero_attack.random_init = false;
  ThreeBnStepResult z =
      three_bn_step(zero_state, batch, targets, zero_opt, 0.0, zero_attack, 45);
  CHECK_THAT(z.adv_cls.l_det, WithinRel(z.adv_loc.l_det, 1e-12));
}

TEST_CASE("train: bookkeeping on a tiny run") {
  DetectorConfig cfg = toy_config();
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 4;
  tcfg.base_lr = 0.01;
  tcfg.warmup_epochs = 1;
  tcfg.variant = TrainVariant::kVanilla;
  tcfg.seed = 5;
  tcfg.scale_jitter = false;
  TrainData data = tiny_data(8, 2, cfg, 6);
  TrainResult result = train(cfg, tcfg, data);
  REQUIRE(result.log.records.size() == 2);
  CHECK(result.log.records[0].epoch == 0);
  CHECK(result.log.records[1].epoch == 1);
  CHECK(result.log.records[0].steps == 2);
  CHECK(result.log.records[1].steps == 2);
  CHECK(result.log.records[0].adv.empty());
}

TEST_CASE("train: deterministic across runs with the same seed") {
  DetectorConfig cfg = toy_config();
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch_size = 3;
  tcfg.base_lr = 0.02;
  tcfg.warmup_epochs = 1;
  tcfg.variant = TrainVariant::kDetAdvProp;
  tcfg.attack.source = AttackSourceKind::kMaxMax;
  tcfg.attack.random_init = true;
  tcfg.seed = 1234;
  TrainData data = tiny_data(6, 2, cfg, 7);

  TrainResult a = train(cfg, tcfg, data);
  TrainResult b = train(cfg, tcfg, data);
  CHECK(states_bit_equal(a.state, b.state));
  CHECK(train_logs_equal_ignoring_wall_time(a.log, b.log));
}

TEST_CASE("train: empty dataset is an error") {
  DetectorConfig cfg = toy_config();
  TrainConfig tcfg;
  TrainData data;
  data.image_h = data.image_w = 4;
  CHECK_THROWS(train(cfg, tcfg, data));
}

TEST_CASE("stripped final state reproduces main-branch outputs") {
  DetectorConfig cfg = toy_config(2, 3);
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 4;
  tcfg.base_lr = 0.02;
  tcfg.warmup_epochs = 0;
  tcfg.variant = TrainVariant::kDetAdvProp;
  tcfg.seed = 77;
  tcfg.scale_jitter = false;
  TrainData data = tiny_data(8, 2, cfg, 78);
  TrainResult result = train(cfg, tcfg, data);

  DetectorState stripped = strip_auxiliary_branches(result.state);
  Tensor batch = random_images(2, 1, 4, 4, 79);
  RawPredictions full = forward_frozen(result.state, batch, kMainBranch);
  RawPredictions lean = forward_frozen(stripped, batch, 0);
  CHECK(bit_equal(full.logits, lean.logits));
  CHECK(bit_equal(full.offsets, lean.offsets));
}

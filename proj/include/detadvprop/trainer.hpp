#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "detadvprop/anchors.hpp"
#include "detadvprop/attack.hpp"
#include "detadvprop/augment.hpp"
#include "detadvprop/checkpoint.hpp"
#include "detadvprop/config.hpp"
#include "detadvprop/detector.hpp"
#include "detadvprop/optimizer.hpp"

namespace detadv {

struct EpochRecord {
  int epoch = 0;
  int steps = 0;
  LossBundle clean;
  std::vector<LossBundle> adv;  // one per adversarial domain (0, 1 or 2)
  double lr = 0.0;
  double wall_ms = 0.0;  // excluded from determinism comparisons
};

struct TrainLog {
  std::vector<EpochRecord> records;

  void append(EpochRecord rec) {
    DETADV_CHECK(rec.clean.finite(), "train log: non-finite clean loss at epoch ", rec.epoch);
    for (const LossBundle& b : rec.adv)
      DETADV_CHECK(b.finite(), "train log: non-finite adversarial loss at epoch ", rec.epoch);
    DETADV_CHECK(records.empty() || rec.epoch == records.back().epoch + 1,
                 "train log: epoch index must increase monotonically");
    records.push_back(std::move(rec));
  }

  // Line-delimited JSON, one record per epoch.
  std::string to_jsonl() const {
    std::string out;
    for (const EpochRecord& r : records) {
      json adv = json::array();
      for (const LossBundle& b : r.adv)
        adv.push_back({{"l_cls", b.l_cls}, {"l_loc", b.l_loc}, {"l_det", b.l_det}});
      json j{{"epoch", r.epoch},
             {"steps", r.steps},
             {"clean", {{"l_cls", r.clean.l_cls}, {"l_loc", r.clean.l_loc}, {"l_det", r.clean.l_det}}},
             {"adv", adv},
             {"lr", r.lr},
             {"wall_ms", r.wall_ms}};
      out += j.dump() + "\n";
    }
    return out;
  }
};

namespace detail {

inline LossBundle accumulate_domain(DetectorState& state, const Tensor& batch,
                                    const std::vector<AnchorTargets>& targets, int branch,
                                    GradBuffers* grads) {
  ForwardTrace trace;
  RawPredictions preds = forward_pass(state, batch, branch, BnStatsMode::kBatch,
                                      /*commit_stats=*/true, &trace, &state);
  Tensor dlogits, doffsets;
  LossBundle bundle = detection_loss_from_predictions(preds.logits, preds.offsets, targets,
                                                      state.config, &dlogits, &doffsets);
  DETADV_CHECK(bundle.finite(), "non-finite detection loss on branch ", branch,
               " (l_cls=", bundle.l_cls, ", l_loc=", bundle.l_loc, ")");
  backward_pass(state, trace, dlogits, doffsets, grads, nullptr);
  return bundle;
}

}  // namespace detail

// [OP] vanilla_step — one SGD update of L_det on the main branch.
inline LossBundle vanilla_step(DetectorState& state, const Tensor& batch,
                               const std::vector<AnchorTargets>& targets, SgdOptimizer& opt,
                               double lr) {
  GradBuffers grads = GradBuffers::zeros_like(state);
  LossBundle bundle = detail::accumulate_domain(state, batch, targets, kMainBranch, &grads);
  opt.step(state, grads, lr);
  return bundle;
}

// [OP] det_advprop_step — Algorithm 1: attack on the auxiliary branch, clean
// loss on main, adversarial loss on auxiliary, one step on their sum
// (Eq. (7)). Main statistics see only the clean sub-batch; auxiliary
// statistics only the adversarial one. Also used by the single-source
// CLS/LOC/DET variants.
struct DetAdvPropStepResult {
  LossBundle clean;
  LossBundle adv;
  std::vector<AttackTag> source_tag;
};

inline DetAdvPropStepResult det_advprop_step(DetectorState& state, const Tensor& batch,
                                             const std::vector<AnchorTargets>& targets,
                                             SgdOptimizer& opt, double lr,
                                             const AttackConfig& attack, std::uint64_t attack_seed,
                                             const std::vector<Annotation>* anns = nullptr) {
  DETADV_CHECK(state.config.bn_branches == 2, "det_advprop_step requires bn_branches == 2");
  const int aux = 1;
  AdversarialBatch adv = generate_adversarial(state, batch, targets, attack, aux, attack_seed, anns);

  GradBuffers grads = GradBuffers::zeros_like(state);
  DetAdvPropStepResult result;
  result.clean = detail::accumulate_domain(state, batch, targets, kMainBranch, &grads);
  result.adv = detail::accumulate_domain(state, adv.images, targets, aux, &grads);
  result.source_tag = std::move(adv.source_tag);
  opt.step(state, grads, lr);
  return result;
}

// [OP] three_bn_step — 3BN variant: both single-task attacks are kept, each
// with its own auxiliary branch; one step on the sum of the three L_det.
struct ThreeBnStepResult {
  LossBundle clean;
  LossBundle adv_cls;
  LossBundle adv_loc;
};

inline ThreeBnStepResult three_bn_step(DetectorState& state, const Tensor& batch,
                                       const std::vector<AnchorTargets>& targets,
                                       SgdOptimizer& opt, double lr, const AttackConfig& attack,
                                       std::uint64_t attack_seed,
                                       const std::vector<Annotation>* anns = nullptr) {
  DETADV_CHECK(state.config.bn_branches == 3, "three_bn_step requires bn_branches == 3");
  AttackConfig cls_cfg = attack;
  cls_cfg.source = AttackSourceKind::kCls;
  AttackConfig loc_cfg = attack;
  loc_cfg.source = AttackSourceKind::kLoc;
  AdversarialBatch x_cls = generate_adversarial(state, batch, targets, cls_cfg, 1, attack_seed, anns);
  AdversarialBatch x_loc = generate_adversarial(state, batch, targets, loc_cfg, 2, attack_seed, anns);

  GradBuffers grads = GradBuffers::zeros_like(state);
  ThreeBnStepResult result;
  result.clean = detail::accumulate_domain(state, batch, targets, 0, &grads);
  result.adv_cls = detail::accumulate_domain(state, x_cls.images, targets, 1, &grads);
  result.adv_loc = detail::accumulate_domain(state, x_loc.images, targets, 2, &grads);
  opt.step(state, grads, lr);
  return result;
}

// Preloaded dataset split, ready for the training loop.
struct TrainItem {
  Tensor image;  // [C, H, W]
  Annotation ann;
};

struct TrainData {
  std::vector<TrainItem> train;
  std::vector<TrainItem> val;
  int image_h = 0, image_w = 0;
  int num_classes = 0;
};

struct TrainResult {
  DetectorState state;
  TrainLog log;
};

// [OP] train — the full loop: deterministic shuffling, augmentation, the
// configured per-step variant, per-epoch checkpoints, and a final stripped
// checkpoint. Everything derives from the root seed.
inline TrainResult train(const DetectorConfig& detector_cfg, const TrainConfig& cfg,
                         const TrainData& data, const std::string& out_dir = "") {
  cfg.validate();
  DetectorConfig dcfg = detector_cfg;
  dcfg.bn_branches = cfg.required_branches();
  dcfg.validate();
  DETADV_CHECK(!data.train.empty(), "train: dataset is empty");

  const bool write_files = !out_dir.empty();
  if (write_files) std::filesystem::create_directories(out_dir);

  DetectorState state = init_detector(dcfg, cfg.seed);
  SgdOptimizer opt(state, cfg.momentum, cfg.weight_decay);
  AnchorSet anchors = generate_anchors(dcfg, data.image_h, data.image_w);

  const long n_train = static_cast<long>(data.train.size());
  const long steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = steps_per_epoch * cfg.epochs;
  const long warmup_steps = steps_per_epoch * cfg.warmup_epochs;

  TrainResult result;
  long global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Deterministic shuffle.
    std::vector<int> order(n_train);
    for (long i = 0; i < n_train; ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(subseed(cfg.seed, "data", static_cast<std::uint64_t>(epoch)));
    for (long i = n_train - 1; i > 0; --i) {
      const long j = static_cast<long>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
      std::swap(order[i], order[j]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const int adv_domains = cfg.variant == TrainVariant::kVanilla ? 0
                            : cfg.variant == TrainVariant::kThreeBn ? 2
                                                                    : 1;
    rec.adv.assign(adv_domains, LossBundle{});
    double lr = 0.0;
    long steps_done = 0;

    for (long begin = 0; begin < n_train; begin += cfg.batch_size) {
      const long end = std::min(begin + cfg.batch_size, n_train);
      const int bsz = static_cast<int>(end - begin);

      // Assemble the (augmented) batch.
      Tensor batch({bsz, dcfg.in_channels, data.image_h, data.image_w});
      std::vector<Annotation> anns(bsz);
      std::vector<AnchorTargets> targets;
      targets.reserve(bsz);
      for (int i = 0; i < bsz; ++i) {
        const TrainItem& item = data.train[order[begin + i]];
        Sample sample{item.image, item.ann};
        Rng aug_rng(subseed(cfg.seed, "augment",
                            static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                static_cast<std::uint64_t>(order[begin + i])));
        if (cfg.hflip && aug_rng.uniform() < 0.5) sample = hflip(sample);
        if (cfg.scale_jitter) {
          const double s = aug_rng.uniform(cfg.jitter_min, cfg.jitter_max);
          sample = scale_jitter(sample, s, aug_rng);
        }
        std::copy(sample.image.data(), sample.image.data() + sample.image.size(),
                  batch.data() + batch.idx4(i, 0, 0, 0));
        anns[i] = sample.ann;
        targets.push_back(
            assign_targets(anchors, sample.ann, dcfg.num_classes, dcfg.pos_iou, dcfg.neg_iou));
      }

      lr = lr_schedule(global_step, total_steps, warmup_steps, cfg.base_lr);
      const std::uint64_t attack_seed = subseed(cfg.seed, "attack",
                                                static_cast<std::uint64_t>(global_step));
      try {
        switch (cfg.variant) {
          case TrainVariant::kVanilla: {
            rec.clean += vanilla_step(state, batch, targets, opt, lr);
            break;
          }
          case TrainVariant::kThreeBn: {
            ThreeBnStepResult r =
                three_bn_step(state, batch, targets, opt, lr, cfg.attack, attack_seed, &anns);
            rec.clean += r.clean;
            rec.adv[0] += r.adv_cls;
            rec.adv[1] += r.adv_loc;
            break;
          }
          default: {
            AttackConfig attack = cfg.attack;
            if (cfg.variant == TrainVariant::kCls) attack.source = AttackSourceKind::kCls;
            if (cfg.variant == TrainVariant::kLoc) attack.source = AttackSourceKind::kLoc;
            if (cfg.variant == TrainVariant::kDet) attack.source = AttackSourceKind::kDet;
            DetAdvPropStepResult r =
                det_advprop_step(state, batch, targets, opt, lr, attack, attack_seed, &anns);
            rec.clean += r.clean;
            rec.adv[0] += r.adv;
            break;
          }
        }
      } catch (const RuntimeError& err) {
        throw RuntimeError(detail::concat("epoch ", epoch, " step ", steps_done, ": ",
                                          err.what()));
      }
      ++steps_done;
      ++global_step;
    }

    const double inv = 1.0 / static_cast<double>(steps_done);
    rec.clean *= inv;
    for (LossBundle& b : rec.adv) b *= inv;
    rec.steps = static_cast<int>(steps_done);
    rec.lr = lr;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    result.log.append(rec);

    if (write_files)
      save_checkpoint(state, out_dir + "/ckpt_epoch_" + std::to_string(epoch), epoch, cfg.seed);
  }

  if (write_files) {
    save_checkpoint(state, out_dir + "/final", cfg.epochs - 1, cfg.seed);
    save_checkpoint(strip_auxiliary_branches(state), out_dir + "/final_stripped", cfg.epochs - 1,
                    cfg.seed);
    write_text_file(out_dir + "/train_log.jsonl", result.log.to_jsonl());
  }
  result.state = std::move(state);
  return result;
}

}  // namespace detadv

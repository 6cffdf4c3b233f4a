#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "detadvprop/anchors.hpp"
#include "detadvprop/config.hpp"
#include "detadvprop/layers.hpp"
#include "detadvprop/losses.hpp"
#include "detadvprop/rng.hpp"
#include "detadvprop/tensor.hpp"

namespace detadv {

struct ConvParam {
  Tensor w;  // [out_c, in_c, k, k]
  Tensor b;  // [out_c]
  int stride = 1;
};

// One batch-norm branch: affine parameters plus running statistics, all
// independent per branch. Branch 0 is "main".
struct BnBranchState {
  Tensor gamma, beta, run_mean, run_var;
};

struct BnParam {
  int channels = 0;
  std::vector<BnBranchState> branches;
};

constexpr int kMainBranch = 0;

inline std::vector<std::string> branch_names(int bn_branches) {
  switch (bn_branches) {
    case 1: return {"main"};
    case 2: return {"main", "aux"};
    default: return {"main", "aux_cls", "aux_loc"};
  }
}

// All learnable parameters. Convolution weights are a single copy shared by
// every branch; only the BN state is per branch.
struct DetectorState {
  DetectorConfig config;
  std::vector<ConvParam> convs;  // backbone, head tower, cls head, box head
  std::vector<BnParam> bns;      // backbone only, in forward order

  int bn_branches() const { return config.bn_branches; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const ConvParam& c : convs) n += c.w.size() + c.b.size();
    for (const BnParam& bn : bns)
      n += bn.branches.size() * 4 * static_cast<std::size_t>(bn.channels);
    return n;
  }
};

// Static execution plan derived from the config: a linear backbone chain of
// conv/bn/relu ops with per-level taps, then a shared head tower.
struct ArchPlan {
  enum class OpKind { kConv, kBn, kRelu };
  struct Op {
    OpKind kind;
    int index = -1;  // conv or bn parameter index
  };
  std::vector<Op> backbone;
  std::vector<int> level_tap;  // backbone op position whose output feeds each level
  int head_tower_first = 0;    // first head conv index into DetectorState::convs
  int head_depth = 0;
  int cls_conv = 0;
  int box_conv = 0;

  static ArchPlan build(const DetectorConfig& cfg) {
    ArchPlan plan;
    int conv_idx = 0, bn_idx = 0;
    std::vector<int> stage_end(cfg.num_stages, -1);
    for (int s = 0; s < cfg.num_stages; ++s) {
      plan.backbone.push_back({OpKind::kConv, conv_idx++});
      plan.backbone.push_back({OpKind::kBn, bn_idx++});
      plan.backbone.push_back({OpKind::kRelu, -1});
      for (int d = 0; d < cfg.depth; ++d) {
        plan.backbone.push_back({OpKind::kConv, conv_idx++});
        plan.backbone.push_back({OpKind::kBn, bn_idx++});
        plan.backbone.push_back({OpKind::kRelu, -1});
      }
      stage_end[s] = static_cast<int>(plan.backbone.size()) - 1;
    }
    for (int level : cfg.levels) plan.level_tap.push_back(stage_end[level]);
    plan.head_tower_first = conv_idx;
    plan.head_depth = cfg.head_depth;
    plan.cls_conv = conv_idx + cfg.head_depth;
    plan.box_conv = plan.cls_conv + 1;
    return plan;
  }
};

inline Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double stddev = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

inline Tensor small_normal(std::vector<int> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

inline DetectorState init_detector(const DetectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DetectorState state;
  state.config = cfg;
  Rng rng(subseed(seed, "init"));

  auto add_conv = [&](int in_c, int out_c, int stride) {
    ConvParam p;
    p.w = he_normal({out_c, in_c, 3, 3}, in_c * 9, rng);
    p.b = Tensor({out_c});
    p.stride = stride;
    state.convs.push_back(std::move(p));
  };
  auto add_bn = [&](int channels) {
    BnParam bn;
    bn.channels = channels;
    bn.branches.resize(cfg.bn_branches);
    for (BnBranchState& br : bn.branches) {
      br.gamma = Tensor({channels});
      br.gamma.fill(1.0);
      br.beta = Tensor({channels});
      br.run_mean = Tensor({channels});
      br.run_var = Tensor({channels});
      br.run_var.fill(1.0);
    }
    state.bns.push_back(std::move(bn));
  };

  int prev = cfg.in_channels;
  for (int s = 0; s < cfg.num_stages; ++s) {
    const int ch = cfg.stage_channels(s);
    add_conv(prev, ch, 2);
    add_bn(ch);
    for (int d = 0; d < cfg.depth; ++d) {
      add_conv(ch, ch, 1);
      add_bn(ch);
    }
    prev = ch;
  }
  const int hc = cfg.head_channels();
  for (int h = 0; h < cfg.head_depth; ++h) add_conv(hc, hc, 1);

  // Prediction heads: small weights, and a classification bias matching a
  // 0.01 foreground prior so early training is not swamped by background
  // terms.
  const int pc = cfg.anchors_per_cell();
  ConvParam cls;
  cls.w = small_normal({pc * cfg.num_classes, hc, 3, 3}, 0.01, rng);
  cls.b = Tensor({pc * cfg.num_classes});
  cls.b.fill(-std::log((1.0 - 0.01) / 0.01));
  cls.stride = 1;
  state.convs.push_back(std::move(cls));
  ConvParam box;
  box.w = small_normal({pc * 4, hc, 3, 3}, 0.01, rng);
  box.b = Tensor({pc * 4});
  box.stride = 1;
  state.convs.push_back(std::move(box));
  return state;
}

enum class BnStatsMode { kBatch, kRunning };

struct RawPredictions {
  Tensor logits;   // [B, A, K]
  Tensor offsets;  // [B, A, 4]
};

struct OpRecord {
  ArchPlan::Op op;
  Tensor in;
  Tensor out;
  BnCache bn_cache;
};

struct LevelTrace {
  std::vector<OpRecord> head_ops;  // head tower convs + relus, interleaved
  Tensor head_out;                 // input to the cls/box prediction convs
  int grid_h = 0, grid_w = 0;
};

struct ForwardTrace {
  int branch = 0;
  BnStatsMode stats_mode = BnStatsMode::kRunning;
  Tensor input;
  std::vector<OpRecord> backbone;
  std::vector<LevelTrace> levels;
};

namespace detail {

// clsmap [B, pc*K, H, W] -> rows of the flat per-anchor tensor at
// anchor index base + (y*W+x)*pc + a.
inline void scatter_level_predictions(const Tensor& map, int per_cell, int values_per_anchor,
                                      int anchor_base, Tensor* flat) {
  const int batch = map.dim(0), grid_h = map.dim(2), grid_w = map.dim(3);
  const int num_anchors = flat->dim(1);
  for (int b = 0; b < batch; ++b)
    for (int a = 0; a < per_cell; ++a)
      for (int v = 0; v < values_per_anchor; ++v) {
        const int ch = a * values_per_anchor + v;
        const double* src = map.data() + map.idx4(b, ch, 0, 0);
        for (int y = 0; y < grid_h; ++y)
          for (int x = 0; x < grid_w; ++x) {
            const int anchor = anchor_base + (y * grid_w + x) * per_cell + a;
            (*flat)[(static_cast<std::size_t>(b) * num_anchors + anchor) * values_per_anchor + v] =
                src[y * grid_w + x];
          }
      }
}

inline Tensor gather_level_gradient(const Tensor& dflat, int per_cell, int values_per_anchor,
                                    int anchor_base, int batch, int grid_h, int grid_w) {
  Tensor dmap({batch, per_cell * values_per_anchor, grid_h, grid_w});
  const int num_anchors = dflat.dim(1);
  for (int b = 0; b < batch; ++b)
    for (int a = 0; a < per_cell; ++a)
      for (int v = 0; v < values_per_anchor; ++v) {
        const int ch = a * values_per_anchor + v;
        double* dst = dmap.data() + dmap.idx4(b, ch, 0, 0);
        for (int y = 0; y < grid_h; ++y)
          for (int x = 0; x < grid_w; ++x) {
            const int anchor = anchor_base + (y * grid_w + x) * per_cell + a;
            dst[y * grid_w + x] =
                dflat[(static_cast<std::size_t>(b) * num_anchors + anchor) * values_per_anchor + v];
          }
      }
  return dmap;
}

}  // namespace detail

inline void validate_image_batch(const Tensor& batch, const DetectorConfig& cfg) {
  DETADV_CHECK(batch.rank() == 4, "image batch must be rank 4 (B,C,H,W)");
  DETADV_CHECK(batch.dim(1) == cfg.in_channels, "image batch has ", batch.dim(1),
               " channels, config expects ", cfg.in_channels);
  const int stride = cfg.max_stride();
  DETADV_CHECK(batch.dim(2) % stride == 0 && batch.dim(3) % stride == 0,
               "image size must be divisible by the coarsest stride ", stride);
  constexpr double kTol = 1e-9;
  for (std::size_t i = 0; i < batch.size(); ++i)
    DETADV_CHECK(batch[i] >= -1.0 - kTol && batch[i] <= 1.0 + kTol,
                 "image batch value ", batch[i], " outside [-1, 1]");
}

// Forward pass through the selected BN branch. `commit_stats` folds the batch
// statistics into the branch running estimates (training only); attack-time
// passes never commit. `trace`, when given, captures everything backward
// needs.
inline RawPredictions forward_pass(const DetectorState& state_in, const Tensor& batch, int branch,
                                   BnStatsMode stats_mode, bool commit_stats,
                                   ForwardTrace* trace, DetectorState* mutable_state = nullptr) {
  const DetectorConfig& cfg = state_in.config;
  DETADV_CHECK(branch >= 0 && branch < cfg.bn_branches, "branch ", branch,
               " out of range for bn_branches=", cfg.bn_branches);
  DETADV_CHECK(!commit_stats || mutable_state, "commit_stats requires a mutable state");
  validate_image_batch(batch, cfg);

  const ArchPlan plan = ArchPlan::build(cfg);
  if (trace) {
    trace->branch = branch;
    trace->stats_mode = stats_mode;
    trace->input = batch;
    trace->backbone.clear();
    trace->levels.clear();
  }

  Tensor cur = batch;
  std::vector<Tensor> level_feats;
  std::size_t tap_cursor = 0;
  for (std::size_t i = 0; i < plan.backbone.size(); ++i) {
    const ArchPlan::Op& op = plan.backbone[i];
    OpRecord rec;
    rec.op = op;
    Tensor out;
    if (op.kind == ArchPlan::OpKind::kConv) {
      const ConvParam& c = state_in.convs[op.index];
      out = conv2d_forward(cur, c.w, c.b, c.stride);
    } else if (op.kind == ArchPlan::OpKind::kBn) {
      const BnParam& bn = state_in.bns[op.index];
      const BnBranchState& br = bn.branches[branch];
      BnCache cache;
      if (stats_mode == BnStatsMode::kBatch) {
        BnBatchStats stats;
        out = bn_forward_train(cur, br.gamma, br.beta, cfg.bn_epsilon, &cache, &stats);
        if (commit_stats) {
          BnBranchState& mbr = mutable_state->bns[op.index].branches[branch];
          const double d = cfg.bn_decay;
          for (int c = 0; c < bn.channels; ++c) {
            mbr.run_mean[c] = d * mbr.run_mean[c] + (1.0 - d) * stats.mean[c];
            mbr.run_var[c] = d * mbr.run_var[c] + (1.0 - d) * stats.var[c];
          }
        }
      } else {
        out = bn_forward_frozen(cur, br.gamma, br.beta, br.run_mean, br.run_var, cfg.bn_epsilon,
                                &cache);
      }
      if (trace) rec.bn_cache = std::move(cache);
    } else {
      out = relu_forward(cur);
    }
    if (trace) {
      rec.in = cur;
      rec.out = out;
      trace->backbone.push_back(std::move(rec));
    }
    if (tap_cursor < plan.level_tap.size() &&
        plan.level_tap[tap_cursor] == static_cast<int>(i)) {
      level_feats.push_back(out);
      ++tap_cursor;
    }
    cur = std::move(out);
  }
  DETADV_CHECK(level_feats.size() == cfg.levels.size(), "internal: missing level taps");

  const int batch_n = batch.dim(0);
  const int pc = cfg.anchors_per_cell();
  int total_anchors = 0;
  for (const Tensor& f : level_feats) total_anchors += f.dim(2) * f.dim(3) * pc;

  RawPredictions preds;
  preds.logits = Tensor({batch_n, total_anchors, cfg.num_classes});
  preds.offsets = Tensor({batch_n, total_anchors, 4});

  int anchor_base = 0;
  for (std::size_t l = 0; l < level_feats.size(); ++l) {
    Tensor feat = level_feats[l];
    LevelTrace ltrace;
    ltrace.grid_h = feat.dim(2);
    ltrace.grid_w = feat.dim(3);
    for (int h = 0; h < plan.head_depth; ++h) {
      const ConvParam& c = state_in.convs[plan.head_tower_first + h];
      OpRecord conv_rec;
      conv_rec.op = {ArchPlan::OpKind::kConv, plan.head_tower_first + h};
      Tensor conv_out = conv2d_forward(feat, c.w, c.b, c.stride);
      Tensor relu_out = relu_forward(conv_out);
      if (trace) {
        conv_rec.in = feat;
        conv_rec.out = conv_out;
        ltrace.head_ops.push_back(std::move(conv_rec));
        OpRecord relu_rec;
        relu_rec.op = {ArchPlan::OpKind::kRelu, -1};
        relu_rec.in = conv_out;
        relu_rec.out = relu_out;
        ltrace.head_ops.push_back(std::move(relu_rec));
      }
      feat = std::move(relu_out);
    }
    const ConvParam& cls = state_in.convs[plan.cls_conv];
    const ConvParam& box = state_in.convs[plan.box_conv];
    Tensor cls_map = conv2d_forward(feat, cls.w, cls.b, 1);
    Tensor box_map = conv2d_forward(feat, box.w, box.b, 1);
    detail::scatter_level_predictions(cls_map, pc, cfg.num_classes, anchor_base, &preds.logits);
    detail::scatter_level_predictions(box_map, pc, 4, anchor_base, &preds.offsets);
    anchor_base += feat.dim(2) * feat.dim(3) * pc;
    if (trace) {
      ltrace.head_out = std::move(feat);
      trace->levels.push_back(std::move(ltrace));
    }
  }
  return preds;
}

// [OP] forward — training flag selects batch statistics + running update.
inline RawPredictions forward(DetectorState& state, const Tensor& batch, int branch, bool training,
                              ForwardTrace* trace = nullptr) {
  return training
             ? forward_pass(state, batch, branch, BnStatsMode::kBatch, true, trace, &state)
             : forward_pass(state, batch, branch, BnStatsMode::kRunning, false, trace);
}

inline RawPredictions forward_frozen(const DetectorState& state, const Tensor& batch, int branch,
                                     ForwardTrace* trace = nullptr) {
  return forward_pass(state, batch, branch, BnStatsMode::kRunning, false, trace);
}

// Parameter gradients, aligned with DetectorState. Only the traced branch's
// BN affine gradients are populated by backward_pass.
struct GradBuffers {
  std::vector<Tensor> conv_w, conv_b;
  std::vector<std::vector<Tensor>> bn_gamma, bn_beta;  // [bn][branch]

  static GradBuffers zeros_like(const DetectorState& state) {
    GradBuffers g;
    for (const ConvParam& c : state.convs) {
      g.conv_w.push_back(Tensor(c.w.shape()));
      g.conv_b.push_back(Tensor(c.b.shape()));
    }
    for (const BnParam& bn : state.bns) {
      std::vector<Tensor> gs, bs;
      for (std::size_t br = 0; br < bn.branches.size(); ++br) {
        gs.push_back(Tensor({bn.channels}));
        bs.push_back(Tensor({bn.channels}));
      }
      g.bn_gamma.push_back(std::move(gs));
      g.bn_beta.push_back(std::move(bs));
    }
    return g;
  }
};

// Backpropagates prediction gradients through the trace. Accumulates into
// `grads` when given; returns the input-pixel gradient when `dinput` is
// given. The trace must come from a forward_pass with trace capture.
inline void backward_pass(const DetectorState& state, const ForwardTrace& trace,
                          const Tensor& dlogits, const Tensor& doffsets, GradBuffers* grads,
                          Tensor* dinput) {
  const DetectorConfig& cfg = state.config;
  const ArchPlan plan = ArchPlan::build(cfg);
  const int pc = cfg.anchors_per_cell();
  const int batch_n = trace.input.dim(0);

  // Head towers per level; gradients of shared convs accumulate across levels.
  std::vector<Tensor> dlevel_feats;
  int anchor_base = 0;
  for (std::size_t l = 0; l < trace.levels.size(); ++l) {
    const LevelTrace& lt = trace.levels[l];
    Tensor dcls_map = detail::gather_level_gradient(dlogits, pc, cfg.num_classes, anchor_base,
                                                    batch_n, lt.grid_h, lt.grid_w);
    Tensor dbox_map = detail::gather_level_gradient(doffsets, pc, 4, anchor_base, batch_n,
                                                    lt.grid_h, lt.grid_w);
    anchor_base += lt.grid_h * lt.grid_w * pc;

    Tensor dfeat = Tensor(lt.head_out.shape());
    const ConvParam& cls = state.convs[plan.cls_conv];
    const ConvParam& box = state.convs[plan.box_conv];
    conv2d_backward(lt.head_out, cls.w, dcls_map, 1, &dfeat,
                    grads ? &grads->conv_w[plan.cls_conv] : nullptr,
                    grads ? &grads->conv_b[plan.cls_conv] : nullptr);
    Tensor dfeat_box = Tensor(lt.head_out.shape());
    conv2d_backward(lt.head_out, box.w, dbox_map, 1, &dfeat_box,
                    grads ? &grads->conv_w[plan.box_conv] : nullptr,
                    grads ? &grads->conv_b[plan.box_conv] : nullptr);
    dfeat += dfeat_box;

    for (int i = static_cast<int>(lt.head_ops.size()) - 1; i >= 0; --i) {
      const OpRecord& rec = lt.head_ops[i];
      if (rec.op.kind == ArchPlan::OpKind::kRelu) {
        dfeat = relu_backward(rec.out, dfeat);
      } else {
        const ConvParam& c = state.convs[rec.op.index];
        Tensor dprev(rec.in.shape());
        conv2d_backward(rec.in, c.w, dfeat, c.stride, &dprev,
                        grads ? &grads->conv_w[rec.op.index] : nullptr,
                        grads ? &grads->conv_b[rec.op.index] : nullptr);
        dfeat = std::move(dprev);
      }
    }
    dlevel_feats.push_back(std::move(dfeat));
  }

  // Backbone chain, injecting level gradients at their tap positions.
  Tensor dcur;
  int tap = static_cast<int>(plan.level_tap.size()) - 1;
  for (int i = static_cast<int>(trace.backbone.size()) - 1; i >= 0; --i) {
    const OpRecord& rec = trace.backbone[i];
    if (dcur.size() == 0) dcur = Tensor(rec.out.shape());
    while (tap >= 0 && plan.level_tap[tap] == i) {
      dcur += dlevel_feats[tap];
      --tap;
    }
    if (rec.op.kind == ArchPlan::OpKind::kRelu) {
      dcur = relu_backward(rec.out, dcur);
    } else if (rec.op.kind == ArchPlan::OpKind::kBn) {
      const BnParam& bn = state.bns[rec.op.index];
      const BnBranchState& br = bn.branches[trace.branch];
      Tensor dprev(rec.in.shape());
      bn_backward(rec.in, br.gamma, br.run_mean, rec.bn_cache, dcur, &dprev,
                  grads ? &grads->bn_gamma[rec.op.index][trace.branch] : nullptr,
                  grads ? &grads->bn_beta[rec.op.index][trace.branch] : nullptr);
      dcur = std::move(dprev);
    } else {
      const ConvParam& c = state.convs[rec.op.index];
      const bool need_dx = dinput || i > 0;
      Tensor dprev;
      if (need_dx) dprev = Tensor(rec.in.shape());
      conv2d_backward(rec.in, c.w, dcur, c.stride, need_dx ? &dprev : nullptr,
                      grads ? &grads->conv_w[rec.op.index] : nullptr,
                      grads ? &grads->conv_b[rec.op.index] : nullptr);
      dcur = std::move(dprev);
    }
  }
  if (dinput) *dinput = std::move(dcur);
}

// [OP] detection_loss — forward through the selected branch, then Eq. (2).
inline LossBundle detection_loss(DetectorState& state, const Tensor& batch,
                                 const std::vector<AnchorTargets>& targets, int branch,
                                 bool training = false) {
  RawPredictions preds = forward(state, batch, branch, training);
  return detection_loss_from_predictions(preds.logits, preds.offsets, targets, state.config);
}

// [OP] strip_auxiliary_branches — keep only the main branch.
inline DetectorState strip_auxiliary_branches(const DetectorState& state) {
  DETADV_CHECK(state.config.bn_branches >= 1, "strip: state has no branches");
  DetectorState out = state;
  out.config.bn_branches = 1;
  for (BnParam& bn : out.bns) bn.branches.resize(1);
  return out;
}

// ---- checkpoint I/O ------------------------------------------------------

namespace detail {
constexpr char kCheckpointMagic[8] = {'D', 'A', 'P', 'C', 'K', 'P', 'T', '1'};

template <typename Fn>
void visit_parameters(DetectorState& state, Fn&& fn) {
  for (ConvParam& c : state.convs) {
    fn(c.w);
    fn(c.b);
  }
  for (BnParam& bn : state.bns)
    for (BnBranchState& br : bn.branches) {
      fn(br.gamma);
      fn(br.beta);
      fn(br.run_mean);
      fn(br.run_var);
    }
}
}  // namespace detail

inline void save_weight_blob(const DetectorState& state, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  DETADV_CHECK(out.good(), "cannot open '", path, "' for writing");
  out.write(detail::kCheckpointMagic, 8);
  std::uint64_t count = state.parameter_count();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  detail::visit_parameters(const_cast<DetectorState&>(state), [&](Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  DETADV_CHECK(out.good(), "write failure on '", path, "'");
}

inline void load_weight_blob(DetectorState& state, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DETADV_CHECK(in.good(), "cannot open '", path, "' for reading");
  char magic[8];
  in.read(magic, 8);
  DETADV_CHECK(in.good() && std::memcmp(magic, detail::kCheckpointMagic, 8) == 0,
               "'", path, "' is not a checkpoint blob");
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  DETADV_CHECK(count == state.parameter_count(), "checkpoint '", path, "' holds ", count,
               " values, expected ", state.parameter_count());
  detail::visit_parameters(state, [&](Tensor& t) {
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  DETADV_CHECK(in.good(), "truncated checkpoint blob '", path, "'");
}

inline bool states_bit_equal(const DetectorState& a, const DetectorState& b) {
  if (a.convs.size() != b.convs.size() || a.bns.size() != b.bns.size()) return false;
  for (std::size_t i = 0; i < a.convs.size(); ++i)
    if (!bit_equal(a.convs[i].w, b.convs[i].w) || !bit_equal(a.convs[i].b, b.convs[i].b))
      return false;
  for (std::size_t i = 0; i < a.bns.size(); ++i) {
    if (a.bns[i].branches.size() != b.bns[i].branches.size()) return false;
    for (std::size_t br = 0; br < a.bns[i].branches.size(); ++br) {
      const BnBranchState& x = a.bns[i].branches[br];
      const BnBranchState& y = b.bns[i].branches[br];
      if (!bit_equal(x.gamma, y.gamma) || !bit_equal(x.beta, y.beta) ||
          !bit_equal(x.run_mean, y.run_mean) || !bit_equal(x.run_var, y.run_var))
        return false;
    }
  }
  return true;
}

// Snapshot of one branch's BN state across all layers; used by the
// branch-isolation tests.
inline std::vector<Tensor> branch_snapshot(const DetectorState& state, int branch) {
  std::vector<Tensor> snap;
  for (const BnParam& bn : state.bns) {
    const BnBranchState& br = bn.branches[branch];
    snap.push_back(br.gamma);
    snap.push_back(br.beta);
    snap.push_back(br.run_mean);
    snap.push_back(br.run_var);
  }
  return snap;
}

inline bool snapshots_bit_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bit_equal(a[i], b[i])) return false;
  return true;
}

}  // namespace detadv

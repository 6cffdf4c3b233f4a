#pragma once

#include <cmath>

#include "detadvprop/detector.hpp"

namespace detadv {

// [OP] lr_schedule — linear warmup from 0 to base_lr, then cosine decay to 0.
inline double lr_schedule(long step, long total_steps, long warmup_steps, double base_lr) {
  DETADV_CONFIG_CHECK(warmup_steps <= total_steps,
                      "lr_schedule: warmup_steps exceeds total_steps");
  DETADV_CHECK(step >= 0 && step <= total_steps, "lr_schedule: step out of range");
  if (warmup_steps > 0 && step <= warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double t = static_cast<double>(step - warmup_steps) /
                   static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(3.141592653589793 * t));
}

// SGD with momentum and decoupled-from-BN weight decay: BN affine parameters
// and running statistics receive no decay.
class SgdOptimizer {
 public:
  SgdOptimizer(const DetectorState& state, double momentum, double weight_decay)
      : momentum_(momentum),
        weight_decay_(weight_decay),
        velocity_(GradBuffers::zeros_like(state)) {}

  void step(DetectorState& state, const GradBuffers& grads, double lr) {
    for (std::size_t c = 0; c < state.convs.size(); ++c) {
      update(state.convs[c].w, grads.conv_w[c], velocity_.conv_w[c], lr, weight_decay_);
      update(state.convs[c].b, grads.conv_b[c], velocity_.conv_b[c], lr, weight_decay_);
    }
    for (std::size_t i = 0; i < state.bns.size(); ++i) {
      for (std::size_t br = 0; br < state.bns[i].branches.size(); ++br) {
        update(state.bns[i].branches[br].gamma, grads.bn_gamma[i][br], velocity_.bn_gamma[i][br],
               lr, 0.0);
        update(state.bns[i].branches[br].beta, grads.bn_beta[i][br], velocity_.bn_beta[i][br],
               lr, 0.0);
      }
    }
  }

 private:
  void update(Tensor& param, const Tensor& grad, Tensor& vel, double lr, double decay) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = momentum_ * vel[i] + grad[i] + decay * param[i];
      param[i] -= lr * vel[i];
    }
  }

  double momentum_;
  double weight_decay_;
  GradBuffers velocity_;
};

}  // namespace detadv

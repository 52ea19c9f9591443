#pragma once

#include <vector>

#include "gec/configs.hpp"
#include "gec/nn/graph.hpp"

namespace gec::nn {

/// Adam with bias correction:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
class Adam {
 public:
  Adam(std::vector<Parameter*> params, double beta1, double beta2, double epsilon);

  void step(double learning_rate);
  long steps() const { return t_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Scales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);
double grad_norm(const std::vector<Parameter*>& params);

/// Learning rate at 1-based step under the configured schedule.
double scheduled_lr(const OptimizerConfig& cfg, long step);

}  // namespace gec::nn

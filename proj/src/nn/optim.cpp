#include "gec/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace gec::nn {

Adam::Adam(std::vector<Parameter*> params, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    if (learning_rate == 0.0) continue;
    p.value.array() -= learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-6);
    for (auto* p : params) p->grad *= s;
  }
  return norm;
}

double scheduled_lr(const OptimizerConfig& cfg, long step) {
  if (cfg.schedule == LrSchedule::kConstant) return cfg.learning_rate;
  const double s = static_cast<double>(std::max(1L, step));
  const double w = static_cast<double>(cfg.warmup_steps);
  return s < w ? cfg.learning_rate * s / w : cfg.learning_rate * std::sqrt(w / s);
}

}  // namespace gec::nn

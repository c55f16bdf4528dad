#include "tar/optim.hpp"

#include <cmath>

#include "tar/errors.hpp"

namespace tar {

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.warmup_frac * static_cast<double>(total_steps)));
}

double lr_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  const std::size_t warm = warmup_steps(total_steps, cfg);
  if (step < warm) return cfg.lr * static_cast<double>(step) / static_cast<double>(warm);
  double lr = cfg.lr;
  for (double m : cfg.milestones) {
    if (static_cast<double>(step) >= m * static_cast<double>(total_steps)) lr *= cfg.lr_decay;
  }
  return lr;
}

Adam::Adam(const ParamStore& params, double beta1, double beta2, double eps)
    : names_(params.names()), params_(params.tensors()), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    for (double g : params_[k].grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter '" + names_[k] + "'");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto g = params_[k].grad();
    auto w = params_[k].mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      w[i] = round_to_precision(w[i] - lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_));
    }
  }
}

}  // namespace tar

#pragma once

#include <cstddef>
#include <vector>

#include "tar/config.hpp"
#include "tar/params.hpp"

namespace tar {

// Learning rate at `step` (0-based) of `total_steps`: linear ramp from 0 over
// the warmup steps, then multiplied by lr_decay at each passed milestone.
double lr_schedule(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);
std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg);

class Adam {
 public:
  Adam(const ParamStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Updates every parameter in place from its accumulated gradient (missing
  // gradients count as zero) and rounds to the active precision. Throws
  // NumericalError naming the parameter on a non-finite gradient.
  void step(double lr);
  std::size_t steps() const { return t_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace tar

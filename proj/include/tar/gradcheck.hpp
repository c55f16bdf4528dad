#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tar/tensor.hpp"

namespace tar {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckResult {
  // max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over all
  // checked entries.
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients of `fn` with central finite differences for
// every input in `differentiable` (indices into `inputs`). Runs in f64.
// `analytic_scale` multiplies the analytic gradient before comparison; it is
// a hook for negative-control tests and is 1 in normal use.
GradCheckResult check_gradients(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                                const std::vector<std::size_t>& differentiable,
                                double step = 1e-5, double analytic_scale = 1.0);

// Convenience: all inputs differentiable.
GradCheckResult check_gradients(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                                double step = 1e-5);

}  // namespace tar

namespace tar {

inline constexpr double kGradCheckTolerance = 1e-6;

// One entry of the grad-check suite: builds a small random instance from
// `seed` and checks it.
struct GradCheckCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed, double analytic_scale)> run;
};

// matmul, conv2d, softmax, elementwise, attention_block, mlp_fusion,
// focal_loss, fine_loss, in that order.
const std::vector<GradCheckCase>& gradcheck_registry();

}  // namespace tar

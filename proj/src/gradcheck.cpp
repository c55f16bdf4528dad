#include "tar/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tar/errors.hpp"

namespace tar {

namespace {

std::vector<Tensor> fresh_leaves(const std::vector<Tensor>& inputs,
                                 const std::vector<bool>& grad_mask) {
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto d = inputs[i].data();
    leaves.push_back(Tensor::from_data(inputs[i].shape(), {d.begin(), d.end()}, grad_mask[i]));
  }
  return leaves;
}

}  // namespace

GradCheckResult check_gradients(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                                const std::vector<std::size_t>& differentiable, double step,
                                double analytic_scale) {
  PrecisionScope f64(Precision::f64);
  std::vector<bool> mask(inputs.size(), false);
  for (std::size_t i : differentiable) {
    if (i >= inputs.size()) throw ContractError("check_gradients: bad input index");
    mask[i] = true;
  }

  std::vector<Tensor> leaves = fresh_leaves(inputs, mask);
  Tensor loss = fn(leaves);
  if (loss.numel() != 1) throw ContractError("check_gradients: function must be scalar");
  loss.backward();

  GradCheckResult result;
  NoGradScope no_grad;
  std::vector<bool> no_mask(inputs.size(), false);
  for (std::size_t idx : differentiable) {
    const auto analytic = leaves[idx].grad();
    std::vector<Tensor> probe = fresh_leaves(inputs, no_mask);
    const std::size_t n = inputs[idx].numel();
    for (std::size_t e = 0; e < n; ++e) {
      auto d = probe[idx].mutable_data();
      const double orig = d[e];
      d[e] = orig + step;
      const double fp = fn(probe).item();
      d[e] = orig - step;
      const double fm = fn(probe).item();
      d[e] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = (analytic.empty() ? 0.0 : analytic[e]) * analytic_scale;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

GradCheckResult check_gradients(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                                double step) {
  std::vector<std::size_t> all(inputs.size());
  std::iota(all.begin(), all.end(), 0);
  return check_gradients(fn, inputs, all, step);
}

}  // namespace tar

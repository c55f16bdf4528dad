#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tar/config.hpp"
#include "tar/geometry.hpp"
#include "tar/tensor.hpp"

namespace tar {

struct CellPair {
  std::size_t i = 0;  // optical cell
  std::size_t j = 0;  // SAR cell
  bool operator==(const CellPair&) const = default;
};

struct Supervision {
  std::vector<CellPair> positives;
  std::vector<CellPair> negatives;
  // Per positive: ground-truth offset of the warped optical window center from
  // the SAR window center, in fine-grid units.
  std::vector<Point2> fine_targets;
  // Per positive: offset lies inside the fine window.
  std::vector<bool> fine_valid;
};

// Coarse grid of `grid_w` x `grid_h` cells on both images (stride 8).
// Negatives are every in-range pair outside the positive set; when
// `max_negatives` is given they are subsampled uniformly with `rng_seed`.
Supervision build_supervision(const AffineTransform& gt, std::size_t grid_w, std::size_t grid_h,
                              std::size_t fine_window, std::size_t max_negatives = SIZE_MAX,
                              std::uint64_t rng_seed = 0);

// Sum-form focal loss over the listed cells of P [n_o x n_s]. P is clamped
// to [1e-6, 1 - 1e-6].
Tensor focal_loss(const Tensor& P, const std::vector<CellPair>& positives,
                  const std::vector<CellPair>& negatives, const LossConfig& cfg);

// (1/|Q|) sum_{k in Q} w_k ||gt_k - pred_k||^2 with pred [B x 2]; weights are
// constants. Returns a zero scalar when Q is empty. Throws ContractError on
// length mismatches.
Tensor fine_loss(const Tensor& pred, const std::vector<Point2>& targets,
                 const std::vector<double>& weights, const std::vector<bool>& valid);

Tensor total_loss(const Tensor& coarse, const Tensor& fine, const LossConfig& cfg);

}  // namespace tar

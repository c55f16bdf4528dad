#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tar/config.hpp"
#include "tar/params.hpp"

namespace tar {

// [h*w x d] fixed 2-D sinusoidal encoding. Channels [0, q) hold sin(x f_k),
// [q, 2q) cos(x f_k), [2q, 3q) sin(y f_k), [3q, 4q) cos(y f_k) with q = d/4
// and f_k = 10000^(-k/q). Row r*w + c encodes cell (r, c).
Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t d);

struct ConfidenceMatrix {
  Tensor S;  // [n_o x n_s] scaled cosine similarities
  Tensor P;  // dual-softmax confidences
};

// P = softmax over rows (axis 0) times softmax over columns (axis 1) of S.
Tensor dual_softmax(const Tensor& S);

// Rows of `optical` [n_o x d] and `sar` [n_s x d] are L2-normalized before
// S = <f_i, f_j> / temperature.
ConfidenceMatrix coarse_confidence(const Tensor& optical, const Tensor& sar, double temperature);

struct CoarseMatch {
  std::size_t i = 0;  // optical cell, row-major
  std::size_t j = 0;  // SAR cell
  double confidence = 0.0;
};

// Pairs with P >= theta that are mutual argmaxes (ties toward the smaller
// index), ordered by i.
std::vector<CoarseMatch> select_coarse(std::span<const double> P, std::size_t rows,
                                       std::size_t cols, double theta);

// Fine-grid index at the center of coarse cell `cell`: round(4*cell + 1.5).
inline std::size_t fine_center_index(std::size_t cell) { return 4 * cell + 2; }
// Input-pixel coordinate of fine index f.
inline double fine_to_pixel(double f) { return 2.0 * f + 0.5; }
// Input-pixel coordinate of coarse cell c's center.
inline double coarse_center_pixel(std::size_t c) { return 8.0 * c + 3.5; }

// True when a w x w window centered at fine index `center` fits in `extent`.
inline bool window_fits(std::size_t center, std::size_t w, std::size_t extent) {
  return center >= w / 2 && center + w / 2 < extent;
}

struct FineWindows {
  Tensor optical;                 // [B x w*w x d_f]
  Tensor sar;                     // [B x w*w x d_f]
  std::vector<std::size_t> kept;  // indices into the coarse match list
  std::vector<std::pair<std::size_t, std::size_t>> centers_o;  // (row, col) fine indices
  std::vector<std::pair<std::size_t, std::size_t>> centers_s;
};

// coarse_w: width of the coarse grid. Matches whose window would leave the
// fine map are skipped.
FineWindows crop_fine_windows(const Tensor& fine_o, const Tensor& fine_s,
                              const std::vector<CoarseMatch>& matches, std::size_t coarse_w,
                              std::size_t w);

struct HeatmapStats {
  Tensor mu;                    // [B x 2] (x, y) offsets in fine-grid units
  std::vector<double> sigma2;   // scatter about mu
  std::vector<double> weight;   // 1 / (1 + sigma2)
};

// Window offsets p - center for position k = a*w + b: (b - w/2, a - w/2).
std::vector<Point2> window_offsets(std::size_t w);

// heat [B x w*w] rows are distributions over window positions.
HeatmapStats heatmap_statistics(const Tensor& heat, std::size_t w, FineMode mode);

void init_fine(ParamStore& params, const std::string& prefix, const ModelConfig& cfg, Rng& rng);

struct FineResult {
  Tensor heat;  // [B x w*w]
  HeatmapStats stats;
};

// Self then cross attention over the window positions, then the heatmap of
// the attended optical center against the attended SAR window.
FineResult fine_refine(const Tensor& win_o, const Tensor& win_s, const ParamStore& params,
                       const std::string& prefix, std::size_t heads, std::size_t w,
                       FineMode mode);

}  // namespace tar

#include "tar/cfdm.hpp"

#include <cmath>

#include "tar/errors.hpp"
#include "tar/tafe.hpp"

namespace tar {

Tensor positional_encoding(std::size_t h, std::size_t w, std::size_t d) {
  if (d % 4 != 0) throw DimensionError("positional encoding width must be divisible by 4");
  const std::size_t q = d / 4;
  std::vector<double> data(h * w * d);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double* row = &data[(r * w + c) * d];
      for (std::size_t k = 0; k < q; ++k) {
        const double f = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(q));
        row[k] = std::sin(c * f);
        row[q + k] = std::cos(c * f);
        row[2 * q + k] = std::sin(r * f);
        row[3 * q + k] = std::cos(r * f);
      }
    }
  return Tensor::from_data({h * w, d}, std::move(data));
}

Tensor dual_softmax(const Tensor& S) { return mul(softmax(S, 0), softmax(S, 1)); }

ConfidenceMatrix coarse_confidence(const Tensor& optical, const Tensor& sar, double temperature) {
  if (optical.rank() != 2 || sar.rank() != 2 || optical.dim(1) != sar.dim(1)) {
    throw DimensionError("coarse confidence needs [n x d] inputs of equal width, got " +
                         shape_str(optical.shape()) + " and " + shape_str(sar.shape()));
  }
  ConfidenceMatrix m;
  const Tensor fo = l2_normalize(optical, 1);
  const Tensor fs = l2_normalize(sar, 1);
  m.S = scale(matmul(fo, transpose(fs)), 1.0 / temperature);
  m.P = dual_softmax(m.S);
  return m;
}

std::vector<CoarseMatch> select_coarse(std::span<const double> P, std::size_t rows,
                                       std::size_t cols, double theta) {
  if (P.size() != rows * cols) throw ContractError("select_coarse: size mismatch");
  std::vector<std::size_t> row_best(rows, 0), col_best(cols, 0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 1; j < cols; ++j)
      if (P[i * cols + j] > P[i * cols + row_best[i]]) row_best[i] = j;
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 1; i < rows; ++i)
      if (P[i * cols + j] > P[col_best[j] * cols + j]) col_best[j] = i;
  std::vector<CoarseMatch> out;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t j = row_best[i];
    if (cols == 0 || col_best[j] != i) continue;
    const double p = P[i * cols + j];
    if (p >= theta) out.push_back({i, j, p});
  }
  return out;
}

FineWindows crop_fine_windows(const Tensor& fine_o, const Tensor& fine_s,
                              const std::vector<CoarseMatch>& matches, std::size_t coarse_w,
                              std::size_t w) {
  FineWindows fw;
  const std::size_t ho = fine_o.dim(1), wo = fine_o.dim(2);
  const std::size_t hs = fine_s.dim(1), ws = fine_s.dim(2);
  for (std::size_t k = 0; k < matches.size(); ++k) {
    const std::size_t ro = fine_center_index(matches[k].i / coarse_w);
    const std::size_t co = fine_center_index(matches[k].i % coarse_w);
    const std::size_t rs = fine_center_index(matches[k].j / coarse_w);
    const std::size_t cs = fine_center_index(matches[k].j % coarse_w);
    if (!window_fits(ro, w, ho) || !window_fits(co, w, wo) || !window_fits(rs, w, hs) ||
        !window_fits(cs, w, ws)) {
      continue;
    }
    fw.kept.push_back(k);
    fw.centers_o.emplace_back(ro, co);
    fw.centers_s.emplace_back(rs, cs);
  }
  if (!fw.kept.empty()) {
    fw.optical = gather_windows(fine_o, fw.centers_o, w);
    fw.sar = gather_windows(fine_s, fw.centers_s, w);
  }
  return fw;
}

std::vector<Point2> window_offsets(std::size_t w) {
  std::vector<Point2> g;
  const double half = static_cast<double>(w / 2);
  for (std::size_t a = 0; a < w; ++a)
    for (std::size_t b = 0; b < w; ++b) g.push_back({b - half, a - half});
  return g;
}

HeatmapStats heatmap_statistics(const Tensor& heat, std::size_t w, FineMode mode) {
  const std::size_t n = w * w;
  if (heat.rank() != 2 || heat.dim(1) != n) {
    throw DimensionError("heatmap must be [B x " + std::to_string(n) + "], got " +
                         shape_str(heat.shape()));
  }
  const std::size_t batch = heat.dim(0);
  const auto grid = window_offsets(w);
  HeatmapStats st;
  const auto h = heat.data();
  if (mode == FineMode::expectation) {
    std::vector<double> g(n * 2);
    for (std::size_t k = 0; k < n; ++k) {
      g[2 * k] = grid[k].x;
      g[2 * k + 1] = grid[k].y;
    }
    st.mu = matmul(heat, Tensor::from_data({n, 2}, std::move(g)));
  } else {
    std::vector<double> mu(batch * 2);
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < n; ++k)
        if (h[b * n + k] > h[b * n + best]) best = k;
      mu[2 * b] = grid[best].x;
      mu[2 * b + 1] = grid[best].y;
    }
    st.mu = Tensor::from_data({batch, 2}, std::move(mu));
  }
  // The scatter always describes the soft heatmap; it is a detached statistic.
  // Moments are taken relative to the row mass so rows summing to 1 only up
  // to rounding still give exact results for symmetric heatmaps.
  for (std::size_t b = 0; b < batch; ++b) {
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      mass += h[b * n + k];
      mx += h[b * n + k] * grid[k].x;
      my += h[b * n + k] * grid[k].y;
    }
    if (!(mass > 0.0)) throw ContractError("heatmap row " + std::to_string(b) + " has no mass");
    mx /= mass;
    my /= mass;
    double scatter = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double dx = grid[k].x - mx, dy = grid[k].y - my;
      scatter += h[b * n + k] * (dx * dx + dy * dy);
    }
    st.sigma2.push_back(scatter / mass);
    st.weight.push_back(mass / (mass + scatter));
  }
  return st;
}

void init_fine(ParamStore& params, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
  init_attention(params, prefix + ".self", cfg.d_f, cfg.ffn_mult, rng);
  init_attention(params, prefix + ".cross", cfg.d_f, cfg.ffn_mult, rng);
}

FineResult fine_refine(const Tensor& win_o, const Tensor& win_s, const ParamStore& params,
                       const std::string& prefix, std::size_t heads, std::size_t w,
                       FineMode mode) {
  const std::size_t n = w * w;
  if (win_o.rank() != 3 || win_o.shape() != win_s.shape() || win_o.dim(1) != n) {
    throw DimensionError("fine windows must be matching [B x " + std::to_string(n) +
                         " x d] stacks, got " + shape_str(win_o.shape()) + " and " +
                         shape_str(win_s.shape()));
  }
  const std::size_t batch = win_o.dim(0), d = win_o.dim(2);
  const Tensor so = attention_block(win_o, win_o, params, prefix + ".self", heads);
  const Tensor ss = attention_block(win_s, win_s, params, prefix + ".self", heads);
  const Tensor co = attention_block(so, ss, params, prefix + ".cross", heads);
  const Tensor cs = attention_block(ss, so, params, prefix + ".cross", heads);
  const Tensor q = reshape(select_position(co, n / 2), {batch, 1, d});
  const Tensor logits = scale(bmm(q, cs, true), 1.0 / std::sqrt(static_cast<double>(d)));
  FineResult r;
  r.heat = softmax(reshape(logits, {batch, n}), 1);
  r.stats = heatmap_statistics(r.heat, w, mode);
  return r;
}

}  // namespace tar

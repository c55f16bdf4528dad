#include "tar/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tar/errors.hpp"
#include "tar/rng.hpp"

namespace tar {

namespace {

constexpr double kClamp = 1e-6;

double center8(std::size_t c) { return 8.0 * static_cast<double>(c) + 3.5; }

// Cell containing pixel coordinate v on a grid of n cells, or -1.
long cell_of(double v, std::size_t n) {
  if (!(v >= 0.0) || v >= 8.0 * static_cast<double>(n)) return -1;
  return static_cast<long>(std::floor(v / 8.0));
}

}  // namespace

Supervision build_supervision(const AffineTransform& gt, std::size_t grid_w, std::size_t grid_h,
                              std::size_t fine_window, std::size_t max_negatives,
                              std::uint64_t rng_seed) {
  if (!(std::abs(gt.det()) >= 1e-6) || !gt.valid()) {
    throw ValidationError("degenerate ground-truth affine " + gt.str());
  }
  const AffineTransform inv = invert(gt);
  const std::size_t n = grid_w * grid_h;
  std::vector<long> fwd(n, -1), back(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 q = gt.apply({center8(i % grid_w), center8(i / grid_w)});
    const long cx = cell_of(q.x, grid_w), cy = cell_of(q.y, grid_h);
    if (cx >= 0 && cy >= 0) fwd[i] = cy * static_cast<long>(grid_w) + cx;
    const Point2 p = inv.apply({center8(i % grid_w), center8(i / grid_w)});
    const long bx = cell_of(p.x, grid_w), by = cell_of(p.y, grid_h);
    if (bx >= 0 && by >= 0) back[i] = by * static_cast<long>(grid_w) + bx;
  }

  Supervision sup;
  std::vector<long> partner(n, -1);
  const double half = static_cast<double>(fine_window / 2);
  for (std::size_t i = 0; i < n; ++i) {
    if (fwd[i] < 0 || back[fwd[i]] != static_cast<long>(i)) continue;
    const std::size_t j = static_cast<std::size_t>(fwd[i]);
    partner[i] = fwd[i];
    sup.positives.push_back({i, j});
    const Point2 po{2.0 * (4 * (i % grid_w) + 2) + 0.5, 2.0 * (4 * (i / grid_w) + 2) + 0.5};
    const Point2 ps{2.0 * (4 * (j % grid_w) + 2) + 0.5, 2.0 * (4 * (j / grid_w) + 2) + 0.5};
    const Point2 q = gt.apply(po);
    const Point2 e{(q.x - ps.x) / 2.0, (q.y - ps.y) / 2.0};
    sup.fine_targets.push_back(e);
    sup.fine_valid.push_back(std::abs(e.x) <= half && std::abs(e.y) <= half);
  }

  std::vector<CellPair> neg;
  for (std::size_t i = 0; i < n; ++i) {
    if (fwd[i] < 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (back[j] < 0 || partner[i] == static_cast<long>(j)) continue;
      neg.push_back({i, j});
    }
  }
  if (neg.size() > max_negatives) {
    Rng rng(rng_seed);
    // Partial Fisher-Yates, then restore row-major order.
    for (std::size_t k = 0; k < max_negatives; ++k) {
      const auto r = static_cast<std::size_t>(
          rng.integer(static_cast<std::int64_t>(k), static_cast<std::int64_t>(neg.size()) - 1));
      std::swap(neg[k], neg[r]);
    }
    neg.resize(max_negatives);
    std::sort(neg.begin(), neg.end(), [](const CellPair& a, const CellPair& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
  }
  sup.negatives = std::move(neg);
  return sup;
}

Tensor focal_loss(const Tensor& P, const std::vector<CellPair>& positives,
                  const std::vector<CellPair>& negatives, const LossConfig& cfg) {
  if (P.rank() != 2) throw DimensionError("focal loss expects a 2-D confidence matrix");
  const std::size_t cols = P.dim(1);
  const auto p = P.data();
  const double a = cfg.focal_alpha, g = cfg.focal_gamma;
  auto index = [&](const CellPair& c) {
    if (c.i >= P.dim(0) || c.j >= cols) throw ContractError("focal loss cell out of range");
    return c.i * cols + c.j;
  };
  auto clamp = [](double v, bool& inside) {
    inside = v > kClamp && v < 1.0 - kClamp;
    return std::clamp(v, kClamp, 1.0 - kClamp);
  };
  double loss = 0.0;
  for (const auto& c : positives) {
    bool in;
    const double x = clamp(p[index(c)], in);
    loss += cfg.lambda_pos * -a * std::pow(1.0 - x, g) * std::log(x);
  }
  for (const auto& c : negatives) {
    bool in;
    const double x = clamp(p[index(c)], in);
    loss += cfg.lambda_neg * -a * std::pow(x, g) * std::log(1.0 - x);
  }
  return make_result({1}, {loss}, {P}, [=, P = P](detail::Node& self) {
    const double up = self.grad[0];
    auto& gp = P.node()->grad_buffer();
    const auto pv = P.data();
    for (const auto& c : positives) {
      const std::size_t k = c.i * cols + c.j;
      bool in;
      const double x = clamp(pv[k], in);
      if (!in) continue;
      // d/dx [-(1-x)^g log x] = g (1-x)^(g-1) log x - (1-x)^g / x
      const double d = g * std::pow(1.0 - x, g - 1.0) * std::log(x) - std::pow(1.0 - x, g) / x;
      gp[k] += up * cfg.lambda_pos * a * d;
    }
    for (const auto& c : negatives) {
      const std::size_t k = c.i * cols + c.j;
      bool in;
      const double x = clamp(pv[k], in);
      if (!in) continue;
      // d/dx [-x^g log(1-x)] = -g x^(g-1) log(1-x) + x^g / (1-x)
      const double d = -g * std::pow(x, g - 1.0) * std::log(1.0 - x) + std::pow(x, g) / (1.0 - x);
      gp[k] += up * cfg.lambda_neg * a * d;
    }
  });
}

Tensor fine_loss(const Tensor& pred, const std::vector<Point2>& targets,
                 const std::vector<double>& weights, const std::vector<bool>& valid) {
  const std::size_t b = targets.size();
  if (weights.size() != b || valid.size() != b) {
    throw ContractError("fine loss: targets, weights and validity flags differ in length");
  }
  std::size_t q = 0;
  for (bool v : valid) q += v ? 1 : 0;
  if (q == 0) return Tensor::scalar(0.0);
  if (pred.rank() != 2 || pred.dim(0) != b || pred.dim(1) != 2) {
    throw ContractError("fine loss: predictions " + shape_str(pred.shape()) + " for " +
                        std::to_string(b) + " targets");
  }
  const auto p = pred.data();
  double loss = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    if (!valid[k]) continue;
    const double dx = targets[k].x - p[2 * k], dy = targets[k].y - p[2 * k + 1];
    loss += weights[k] * (dx * dx + dy * dy);
  }
  const double inv_q = 1.0 / static_cast<double>(q);
  return make_result({1}, {loss * inv_q}, {pred}, [=, pred = pred](detail::Node& self) {
    const double up = self.grad[0] * inv_q;
    auto& g = pred.node()->grad_buffer();
    const auto pv = pred.data();
    for (std::size_t k = 0; k < b; ++k) {
      if (!valid[k]) continue;
      g[2 * k] += up * weights[k] * 2.0 * (pv[2 * k] - targets[k].x);
      g[2 * k + 1] += up * weights[k] * 2.0 * (pv[2 * k + 1] - targets[k].y);
    }
  });
}

Tensor total_loss(const Tensor& coarse, const Tensor& fine, const LossConfig& cfg) {
  return add(scale(coarse, cfg.lambda_c), scale(fine, cfg.lambda_f));
}

}  // namespace tar

#include "tar/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "tar/errors.hpp"

namespace tar {

double rmse(std::span<const Point2> pred, std::span<const Point2> gt) {
  if (pred.size() != gt.size()) {
    throw ContractError("rmse: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(gt.size()) + " ground-truth points");
  }
  if (pred.empty()) return std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i].x - gt[i].x, dy = pred[i].y - gt[i].y;
    acc += dx * dx + dy * dy;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double cmr(std::span<const double> rmses, double tau) {
  if (rmses.empty()) throw ConfigError("cmr over an empty pair list");
  std::size_t hits = 0;
  for (double r : rmses) hits += r < tau ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rmses.size());
}

std::vector<Point2> check_points(std::size_t width, std::size_t height) {
  std::vector<Point2> pts;
  pts.reserve(kCheckGrid * kCheckGrid);
  const double sx = static_cast<double>(width) / kCheckGrid;
  const double sy = static_cast<double>(height) / kCheckGrid;
  for (std::size_t r = 0; r < kCheckGrid; ++r)
    for (std::size_t c = 0; c < kCheckGrid; ++c)
      pts.push_back({(c + 0.5) * sx - 0.5, (r + 0.5) * sy - 0.5});
  return pts;
}

double grid_rmse(const AffineTransform& estimated, const AffineTransform& gt,
                 std::size_t width, std::size_t height) {
  const auto pts = check_points(width, height);
  return rmse(apply_points(estimated, pts), apply_points(gt, pts));
}

EvalReport summarize(std::vector<PairResult> pairs) {
  EvalReport report;
  report.pairs = std::move(pairs);
  std::vector<double> values;
  double total = 0.0;
  std::size_t finite = 0;
  for (const PairResult& p : report.pairs) {
    values.push_back(p.rmse);
    if (std::isfinite(p.rmse)) {
      total += p.rmse;
      ++finite;
    }
  }
  for (std::size_t i = 0; i < kCmrThresholds.size(); ++i) {
    report.cmr[i] = cmr(values, kCmrThresholds[i]);
  }
  report.rmse_mean =
      finite ? total / static_cast<double>(finite) : std::numeric_limits<double>::infinity();
  return report;
}

namespace {

std::string fmt6(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "pair_id,rmse,n_matches,cmr1_hit,cmr3_hit,cmr5_hit\n";
  for (const PairResult& p : report.pairs) {
    out += p.id + "," + fmt6(p.rmse) + "," + std::to_string(p.n_matches);
    for (double tau : kCmrThresholds) out += p.rmse < tau ? ",1" : ",0";
    out += "\n";
  }
  out += "TOTAL," + fmt6(report.rmse_mean) + ",-";
  for (double c : report.cmr) out += "," + fmt6(c);
  out += "\n";
  return out;
}

}  // namespace tar

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tar/geometry.hpp"

namespace tar {

// Registration error thresholds (pixels) at which CMR is reported.
inline constexpr std::array<double, 3> kCmrThresholds{1.0, 3.0, 5.0};

// Side length of the check-point grid used for per-pair RMSE.
inline constexpr std::size_t kCheckGrid = 8;

// sqrt(mean ||pred - gt||^2). Empty input is a registration failure and
// yields +inf; mismatched lengths throw ContractError.
double rmse(std::span<const Point2> pred, std::span<const Point2> gt);

// Fraction of entries strictly below tau. +inf entries count as misses.
// Throws ConfigError on an empty list.
double cmr(std::span<const double> rmses, double tau);

// kCheckGrid x kCheckGrid cell-centered points covering a width x height image.
std::vector<Point2> check_points(std::size_t width, std::size_t height);

// RMSE between gt- and estimate-warped check points.
double grid_rmse(const AffineTransform& estimated, const AffineTransform& gt,
                 std::size_t width, std::size_t height);

struct PairResult {
  std::string id;
  double rmse = 0.0;  // +inf for failed registrations
  std::size_t n_matches = 0;
};

struct EvalReport {
  std::vector<PairResult> pairs;
  std::array<double, kCmrThresholds.size()> cmr{};
  // Mean over successfully registered pairs; +inf when none registered.
  double rmse_mean = 0.0;

  std::size_t pair_count() const { return pairs.size(); }
};

EvalReport summarize(std::vector<PairResult> pairs);

// "pair_id,rmse,n_matches,cmr1_hit,cmr3_hit,cmr5_hit" rows followed by
// "TOTAL,rmse_mean,-,cmr1,cmr3,cmr5".
std::string report_csv(const EvalReport& report);

}  // namespace tar

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tar/geometry.hpp"

namespace tar {

struct Correspondence {
  Point2 src;  // optical
  Point2 dst;  // SAR
};

enum class EstimateMethod { lsq, ransac };

struct RansacConfig {
  int iterations = 1000;
  double inlier_radius = 3.0;  // pixels
  std::uint64_t seed = 0;
};

struct RansacResult {
  AffineTransform transform;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

// Least squares over all correspondences. Throws EstimationError for fewer
// than 3 matches or collinear source points.
AffineTransform estimate_affine_lsq(std::span<const Correspondence> matches);

// Minimal 3-point hypotheses, largest consensus set wins (earliest on ties),
// final least-squares refit on the inliers.
RansacResult estimate_affine_ransac(std::span<const Correspondence> matches,
                                    const RansacConfig& cfg);

AffineTransform estimate_affine(std::span<const Correspondence> matches, EstimateMethod method,
                                const RansacConfig& cfg = {});

}  // namespace tar

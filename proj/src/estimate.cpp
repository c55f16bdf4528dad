#include "tar/estimate.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "tar/errors.hpp"
#include "tar/rng.hpp"

namespace tar {

namespace {

// Relative spread of the source points along their weakest direction.
// Zero for collinear sets.
bool collinear(std::span<const Correspondence> matches) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& m : matches) mean += Eigen::Vector2d(m.src.x, m.src.y);
  mean /= static_cast<double>(matches.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& m : matches) {
    const Eigen::Vector2d d = Eigen::Vector2d(m.src.x, m.src.y) - mean;
    cov += d * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double hi = eig.eigenvalues()(1), lo = eig.eigenvalues()(0);
  return !(hi > 0.0) || lo <= 1e-12 * hi;
}

}  // namespace

AffineTransform estimate_affine_lsq(std::span<const Correspondence> matches) {
  if (matches.size() < 3) {
    throw EstimationError("affine estimation needs at least 3 matches, got " +
                          std::to_string(matches.size()));
  }
  if (collinear(matches)) throw EstimationError("affine estimation on collinear points");

  // Center the sources for conditioning; x' and y' share the design matrix.
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& m : matches) mean += Eigen::Vector2d(m.src.x, m.src.y);
  mean /= static_cast<double>(matches.size());

  const Eigen::Index n = static_cast<Eigen::Index>(matches.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::MatrixXd rhs(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = matches[static_cast<std::size_t>(i)];
    design.row(i) << m.src.x - mean.x(), m.src.y - mean.y(), 1.0;
    rhs.row(i) << m.dst.x, m.dst.y;
  }
  const Eigen::Matrix3d normal = design.transpose() * design;
  const Eigen::Matrix<double, 3, 2> sol = normal.ldlt().solve(design.transpose() * rhs);

  AffineTransform t;
  for (int r = 0; r < 2; ++r) {
    const double a = sol(0, r), b = sol(1, r), c = sol(2, r);
    t.m[3 * r + 0] = a;
    t.m[3 * r + 1] = b;
    t.m[3 * r + 2] = c - a * mean.x() - b * mean.y();
  }
  for (double v : t.m) {
    if (!std::isfinite(v)) throw EstimationError("affine least squares diverged");
  }
  return t;
}

RansacResult estimate_affine_ransac(std::span<const Correspondence> matches,
                                    const RansacConfig& cfg) {
  const std::size_t n = matches.size();
  if (n < 3) {
    throw EstimationError("affine estimation needs at least 3 matches, got " +
                          std::to_string(n));
  }
  if (collinear(matches)) throw EstimationError("affine estimation on collinear points");

  Rng rng(cfg.seed);
  const double r2 = cfg.inlier_radius * cfg.inlier_radius;
  std::vector<bool> best_mask;
  std::size_t best_count = 0;
  std::vector<bool> mask(n);
  for (int it = 0; it < cfg.iterations; ++it) {
    std::size_t idx[3];
    idx[0] = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n) - 1));
    do {
      idx[1] = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n) - 1));
    } while (idx[1] == idx[0]);
    do {
      idx[2] = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n) - 1));
    } while (idx[2] == idx[0] || idx[2] == idx[1]);
    const Correspondence sample[3] = {matches[idx[0]], matches[idx[1]], matches[idx[2]]};
    if (collinear(sample)) continue;
    AffineTransform hyp;
    try {
      hyp = estimate_affine_lsq(sample);
    } catch (const EstimationError&) {
      continue;
    }
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 p = hyp.apply(matches[i].src);
      const double dx = p.x - matches[i].dst.x, dy = p.y - matches[i].dst.y;
      mask[i] = dx * dx + dy * dy <= r2;
      count += mask[i] ? 1 : 0;
    }
    if (count > best_count) {
      best_count = count;
      best_mask = mask;
    }
  }
  if (best_count < 3) throw EstimationError("RANSAC found no consensus of 3 or more matches");

  std::vector<Correspondence> inliers;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask[i]) inliers.push_back(matches[i]);
  }
  RansacResult result;
  result.transform = estimate_affine_lsq(inliers);
  result.inliers = std::move(best_mask);
  result.inlier_count = best_count;
  return result;
}

AffineTransform estimate_affine(std::span<const Correspondence> matches, EstimateMethod method,
                                const RansacConfig& cfg) {
  if (method == EstimateMethod::lsq) return estimate_affine_lsq(matches);
  return estimate_affine_ransac(matches, cfg).transform;
}

}  // namespace tar

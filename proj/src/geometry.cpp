#include "tar/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tar/errors.hpp"

namespace tar {

AffineTransform AffineTransform::similarity(double scale, double angle_rad, Point2 pivot,
                                            double tx, double ty) {
  const double c = scale * std::cos(angle_rad);
  const double s = scale * std::sin(angle_rad);
  // p' = S R (p - pivot) + pivot + t
  AffineTransform t;
  t.m = {c, -s, 0.0, s, c, 0.0};
  t.m[2] = pivot.x - (c * pivot.x - s * pivot.y) + tx;
  t.m[5] = pivot.y - (s * pivot.x + c * pivot.y) + ty;
  return t;
}

bool AffineTransform::valid() const {
  for (double v : m) {
    if (!std::isfinite(v)) return false;
  }
  return std::abs(det()) > 1e-6;
}

std::string AffineTransform::str() const {
  std::ostringstream os;
  os.precision(17);
  os << m[0] << ' ' << m[1] << ' ' << m[2] << ' ' << m[3] << ' ' << m[4] << ' ' << m[5];
  return os.str();
}

std::vector<Point2> apply_points(const AffineTransform& t, std::span<const Point2> points) {
  std::vector<Point2> out;
  out.reserve(points.size());
  for (const Point2& p : points) out.push_back(t.apply(p));
  return out;
}

AffineTransform compose(const AffineTransform& outer, const AffineTransform& inner) {
  const auto& a = outer.m;
  const auto& b = inner.m;
  AffineTransform r;
  r.m = {a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4], a[0] * b[2] + a[1] * b[5] + a[2],
         a[3] * b[0] + a[4] * b[3], a[3] * b[1] + a[4] * b[4], a[3] * b[2] + a[4] * b[5] + a[5]};
  return r;
}

AffineTransform invert(const AffineTransform& t) {
  if (!t.valid()) throw GeometryError("cannot invert singular transform [" + t.str() + "]");
  const auto& m = t.m;
  const double inv_det = 1.0 / t.det();
  const double a = m[4] * inv_det, b = -m[1] * inv_det;
  const double c = -m[3] * inv_det, d = m[0] * inv_det;
  AffineTransform r;
  r.m = {a, b, -(a * m[2] + b * m[5]), c, d, -(c * m[2] + d * m[5])};
  return r;
}

double max_abs_difference(const AffineTransform& a, const AffineTransform& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < 6; ++i) worst = std::max(worst, std::abs(a.m[i] - b.m[i]));
  return worst;
}

void PerturbConfig::validate() const {
  if (!(scale_min > 0.0) || scale_max < scale_min) {
    throw ValidationError("perturbation scale range must satisfy 0 < min <= max");
  }
  if (rotation_deg < 0.0 || rotation_deg > 180.0) {
    throw ValidationError("perturbation rotation must lie in [0, 180] degrees");
  }
  if (translation_frac < 0.0 || translation_frac >= 1.0) {
    throw ValidationError("perturbation translation fraction must lie in [0, 1)");
  }
}

AffineTransform PerturbParams::to_affine(std::size_t width, std::size_t height) const {
  const Point2 center{(static_cast<double>(width) - 1.0) / 2.0,
                      (static_cast<double>(height) - 1.0) / 2.0};
  return AffineTransform::similarity(scale, angle_deg * std::numbers::pi / 180.0, center, tx,
                                     ty);
}

PerturbParams sample_perturbation_params(Rng& rng, const PerturbConfig& cfg,
                                         std::size_t width, std::size_t height) {
  // A degenerate range is a constant; uniform_real_distribution needs lo < hi.
  auto draw = [&rng](double lo, double hi) { return lo < hi ? rng.uniform(lo, hi) : lo; };
  PerturbParams p;
  p.scale = draw(cfg.scale_min, cfg.scale_max);
  p.angle_deg = draw(-cfg.rotation_deg, cfg.rotation_deg);
  const double mx = cfg.translation_frac * static_cast<double>(width);
  const double my = cfg.translation_frac * static_cast<double>(height);
  p.tx = draw(-mx, mx);
  p.ty = draw(-my, my);
  return p;
}

AffineTransform sample_perturbation(Rng& rng, const PerturbConfig& cfg, std::size_t width,
                                    std::size_t height) {
  return sample_perturbation_params(rng, cfg, width, height).to_affine(width, height);
}

}  // namespace tar

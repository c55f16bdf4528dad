#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tar/rng.hpp"

namespace tar {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// 2x3 affine map [a b tx; c d ty] in pixel units. Pixel (i, j) of an image
// has its center at (x, y) = (j, i). Transforms in this project map optical
// coordinates to SAR coordinates.
struct AffineTransform {
  std::array<double, 6> m{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(double tx, double ty) {
    return {{1.0, 0.0, tx, 0.0, 1.0, ty}};
  }
  // Scale and counter-clockwise rotation (radians, in x-right / y-down pixel
  // axes) about `pivot`, followed by a translation.
  static AffineTransform similarity(double scale, double angle_rad, Point2 pivot,
                                    double tx = 0.0, double ty = 0.0);

  double det() const { return m[0] * m[4] - m[1] * m[3]; }
  bool valid() const;
  Point2 apply(Point2 p) const {
    return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
  }
  std::string str() const;
};

std::vector<Point2> apply_points(const AffineTransform& t, std::span<const Point2> points);
// outer(inner(p))
AffineTransform compose(const AffineTransform& outer, const AffineTransform& inner);
// Throws GeometryError when |det| <= 1e-6.
AffineTransform invert(const AffineTransform& t);
double max_abs_difference(const AffineTransform& a, const AffineTransform& b);

struct PerturbConfig {
  double scale_min = 0.7;
  double scale_max = 1.3;
  double rotation_deg = 35.0;     // angles drawn from [-rotation_deg, rotation_deg]
  double translation_frac = 0.10;  // of image width / height

  void validate() const;
};

struct PerturbParams {
  double scale = 1.0;
  double angle_deg = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  // Scale and rotation about the image center, then translation.
  AffineTransform to_affine(std::size_t width, std::size_t height) const;
};

PerturbParams sample_perturbation_params(Rng& rng, const PerturbConfig& cfg,
                                         std::size_t width, std::size_t height);
AffineTransform sample_perturbation(Rng& rng, const PerturbConfig& cfg, std::size_t width,
                                    std::size_t height);

}  // namespace tar

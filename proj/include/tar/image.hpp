#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "tar/geometry.hpp"
#include "tar/tensor.hpp"

namespace tar {

// Single-channel image, row-major, intensities nominally in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const Image&) const = default;
};

// Bilinear sample at continuous pixel coordinates; outside the image -> 0.
double sample_bilinear(const Image& img, double x, double y);

// out(q) = in(T^-1 q) with bilinear interpolation and zero fill.
Image warp_image(const Image& img, const AffineTransform& t);

void clamp01(Image& img);

// [1 x H x W] tensor of the pixel values.
Tensor image_to_tensor(const Image& img);

// Binary PGM (P5, maxval 255). Values are clamped to [0, 1] and rounded.
void write_pgm(const Image& img, const std::filesystem::path& path);
Image read_pgm(const std::filesystem::path& path);
// Intensities after an 8-bit round trip, as written by write_pgm.
Image quantize8(const Image& img);

}  // namespace tar

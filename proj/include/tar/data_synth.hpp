#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tar/geometry.hpp"
#include "tar/image.hpp"
#include "tar/rng.hpp"

namespace tar {

struct SynthConfig {
  std::size_t size = 64;
  int octaves = 4;
  double looks = 4.0;  // speckle looks L
  double gamma_min = 0.6;
  double gamma_max = 1.6;
  bool perturb = true;
  PerturbConfig perturbation;

  void validate() const;
};

struct Scene {
  Image image;
  Image water;  // 1 inside water bodies, 0 elsewhere
  std::string tag;
};

struct PairSample {
  std::string id;
  Image optical;
  Image sar;
  AffineTransform gt;  // optical -> SAR
  std::string scene_tag;
};

Scene gen_base_scene(Rng& rng, const SynthConfig& cfg);

// Gamma correction, edge emphasis and contrast inversion on water.
Image sar_remap(const Scene& scene, double gamma);
// Multiplicative Gamma(L, 1/L) noise.
Image apply_speckle(const Image& img, double looks, Rng& rng);

PairSample gen_pair(const Scene& scene, Rng& rng, const SynthConfig& cfg);

// Sample `index` of the dataset defined by `seed`; independent of every other index.
PairSample gen_sample(std::uint64_t seed, std::uint64_t index, const SynthConfig& cfg);
std::string sample_id(std::uint64_t index);

// {id}_opt.pgm, {id}_sar.pgm and {id}_affine.txt.
void write_pair(const PairSample& pair, const std::filesystem::path& dir);
void write_manifest(const std::vector<std::string>& ids, const std::filesystem::path& dir);

std::string format_affine(const AffineTransform& t);
AffineTransform parse_affine(const std::string& text, const std::string& source);

// Reads every {id}_opt.pgm / {id}_sar.pgm pair in `dir`, sorted by id.
std::vector<PairSample> load_pair_dir(const std::filesystem::path& dir);

}  // namespace tar

#include "tar/data_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>

#include "tar/errors.hpp"
#include "tar/io.hpp"
#include "tar/text_library.hpp"

namespace tar {

void SynthConfig::validate() const {
  if (size == 0 || size % 8 != 0) {
    throw ConfigError("image size must be a positive multiple of 8, got " + std::to_string(size));
  }
  if (octaves < 1) throw ConfigError("texture octaves must be >= 1");
  if (!(looks >= 1.0)) throw ConfigError("speckle looks must be >= 1");
  if (!(gamma_min > 0.0) || gamma_max < gamma_min) throw ConfigError("invalid gamma range");
  perturbation.validate();
}

namespace {

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// One octave of value noise on a lattice with `cells` cells per side.
void add_value_noise(Image& img, Rng& rng, std::size_t cells, double amplitude) {
  const std::size_t n = cells + 1;
  std::vector<double> lattice(n * n);
  for (double& v : lattice) v = rng.uniform01();
  const double step = static_cast<double>(img.width) / static_cast<double>(cells);
  for (std::size_t y = 0; y < img.height; ++y) {
    const double fy = (y + 0.5) / step;
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), cells - 1);
    const double ty = smooth(fy - y0);
    for (std::size_t x = 0; x < img.width; ++x) {
      const double fx = (x + 0.5) / step;
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), cells - 1);
      const double tx = smooth(fx - x0);
      const double a = lattice[y0 * n + x0], b = lattice[y0 * n + x0 + 1];
      const double c = lattice[(y0 + 1) * n + x0], d = lattice[(y0 + 1) * n + x0 + 1];
      img.at(x, y) += amplitude * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty);
    }
  }
}

double segment_distance(Point2 p, Point2 a, Point2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

bool inside_polygon(Point2 p, const std::vector<Point2>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) {
      in = !in;
    }
  }
  return in;
}

void draw_road(Image& img, Rng& rng) {
  const double s = static_cast<double>(img.width);
  const Point2 a{rng.uniform(-0.2, 1.2) * s, rng.uniform(-0.2, 1.2) * s};
  const Point2 b{rng.uniform(-0.2, 1.2) * s, rng.uniform(-0.2, 1.2) * s};
  const double half = rng.uniform(0.75, 1.75);
  const double tone = rng.uniform01() < 0.5 ? rng.uniform(0.8, 0.95) : rng.uniform(0.05, 0.2);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double d = segment_distance({double(x), double(y)}, a, b);
      const double w = std::clamp(half + 0.5 - d, 0.0, 1.0);
      img.at(x, y) = img.at(x, y) * (1 - w) + tone * w;
    }
}

void draw_field(Image& img, Rng& rng) {
  const double s = static_cast<double>(img.width);
  const Point2 c{rng.uniform(0.1, 0.9) * s, rng.uniform(0.1, 0.9) * s};
  const int k = static_cast<int>(rng.integer(3, 6));
  const double r = rng.uniform(0.12, 0.3) * s;
  const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
  std::vector<Point2> poly;
  for (int i = 0; i < k; ++i) {
    const double ang = phase + 2 * std::numbers::pi * i / k + rng.uniform(-0.3, 0.3);
    const double rr = r * rng.uniform(0.7, 1.2);
    poly.push_back({c.x + rr * std::cos(ang), c.y + rr * std::sin(ang)});
  }
  const double tone = rng.uniform(0.25, 0.85);
  const double stripe = rng.uniform(0.0, 0.15);
  const double freq = rng.uniform(0.5, 1.2);
  const double dir = rng.uniform(0.0, std::numbers::pi);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      if (!inside_polygon({double(x), double(y)}, poly)) continue;
      const double u = x * std::cos(dir) + y * std::sin(dir);
      img.at(x, y) = tone + stripe * std::sin(freq * u);
    }
}

void draw_water(Image& img, Image& mask, Rng& rng) {
  const double s = static_cast<double>(img.width);
  const int blobs = static_cast<int>(rng.integer(2, 3));
  std::vector<std::array<double, 3>> discs;
  Point2 c{rng.uniform(0.1, 0.9) * s, rng.uniform(0.1, 0.9) * s};
  for (int i = 0; i < blobs; ++i) {
    const double r = rng.uniform(0.06, 0.16) * s;
    discs.push_back({c.x, c.y, r});
    c.x += rng.uniform(-1.0, 1.0) * r;
    c.y += rng.uniform(-1.0, 1.0) * r;
  }
  const double tone = rng.uniform(0.03, 0.12);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      for (const auto& d : discs) {
        const double dx = x - d[0], dy = y - d[1];
        if (dx * dx + dy * dy <= d[2] * d[2]) {
          img.at(x, y) = tone;
          mask.at(x, y) = 1.0;
          break;
        }
      }
    }
}

Image blur3(const Image& img) {
  Image out(img.width, img.height);
  const double k[3] = {0.25, 0.5, 0.25};
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t sx = std::clamp<std::ptrdiff_t>(std::ptrdiff_t(x) + dx, 0, img.width - 1);
          const std::size_t sy = std::clamp<std::ptrdiff_t>(std::ptrdiff_t(y) + dy, 0, img.height - 1);
          acc += k[dx + 1] * k[dy + 1] * img.at(sx, sy);
        }
      out.at(x, y) = acc;
    }
  return out;
}

}  // namespace

Scene gen_base_scene(Rng& rng, const SynthConfig& cfg) {
  cfg.validate();
  Scene scene;
  scene.image = Image(cfg.size, cfg.size);
  scene.water = Image(cfg.size, cfg.size);
  for (int o = 0; o < cfg.octaves; ++o) {
    add_value_noise(scene.image, rng, std::size_t{4} << o, std::pow(0.85, o));
  }
  // Equalize the texture histogram onto [0.1, 0.9]; summed octaves crowd
  // around the mean and leave little contrast at cell scale.
  {
    auto& px = scene.image.pixels;
    std::vector<std::size_t> order(px.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return px[a] < px[b]; });
    const double denom = static_cast<double>(std::max<std::size_t>(order.size() - 1, 1));
    std::vector<double> eq(px.size());
    for (std::size_t r = 0; r < order.size(); ++r) eq[order[r]] = 0.1 + 0.8 * r / denom;
    px = std::move(eq);
  }

  const int structures = static_cast<int>(rng.integer(1, 3));
  for (int i = 0; i < structures; ++i) {
    switch (rng.integer(0, 2)) {
      case 0: draw_road(scene.image, rng); break;
      case 1: draw_field(scene.image, rng); break;
      default: draw_water(scene.image, scene.water, rng); break;
    }
  }
  clamp01(scene.image);
  const auto& tags = expanded_categories();
  scene.tag = tags[static_cast<std::size_t>(rng.integer(0, std::int64_t(tags.size()) - 1))];
  return scene;
}

Image sar_remap(const Scene& scene, double gamma) {
  const Image& img = scene.image;
  Image out(img.width, img.height);
  auto px = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
    x = std::clamp<std::ptrdiff_t>(x, 0, img.width - 1);
    y = std::clamp<std::ptrdiff_t>(y, 0, img.height - 1);
    return img.at(x, y);
  };
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::ptrdiff_t i = x, j = y;
      const double gx = (px(i + 1, j - 1) + 2 * px(i + 1, j) + px(i + 1, j + 1)) -
                        (px(i - 1, j - 1) + 2 * px(i - 1, j) + px(i - 1, j + 1));
      const double gy = (px(i - 1, j + 1) + 2 * px(i, j + 1) + px(i + 1, j + 1)) -
                        (px(i - 1, j - 1) + 2 * px(i, j - 1) + px(i + 1, j - 1));
      const double edge = std::sqrt(gx * gx + gy * gy) / 4.0;
      double v = 0.55 * std::pow(img.at(x, y), gamma) + 0.6 * edge;
      if (scene.water.at(x, y) > 0.5) v = 0.6 - v;
      out.at(x, y) = std::clamp(v, 0.0, 1.0);
    }
  return out;
}

Image apply_speckle(const Image& img, double looks, Rng& rng) {
  Image out = img;
  for (double& v : out.pixels) v *= rng.gamma(looks, 1.0 / looks);
  return out;
}

PairSample gen_pair(const Scene& scene, Rng& rng, const SynthConfig& cfg) {
  cfg.validate();
  PairSample pair;
  pair.scene_tag = scene.tag;
  pair.optical = blur3(scene.image);
  clamp01(pair.optical);
  const double gamma = rng.uniform(cfg.gamma_min, cfg.gamma_max);
  const Image speckled = apply_speckle(sar_remap(scene, gamma), cfg.looks, rng);
  pair.gt = cfg.perturb ? sample_perturbation(rng, cfg.perturbation, cfg.size, cfg.size)
                        : AffineTransform::identity();
  pair.sar = warp_image(speckled, pair.gt);
  clamp01(pair.sar);
  return pair;
}

std::string sample_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(index));
  return buf;
}

PairSample gen_sample(std::uint64_t seed, std::uint64_t index, const SynthConfig& cfg) {
  Rng rng = Rng::derive(seed, index);
  const Scene scene = gen_base_scene(rng, cfg);
  PairSample pair = gen_pair(scene, rng, cfg);
  pair.id = sample_id(index);
  return pair;
}

std::string format_affine(const AffineTransform& t) {
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < 6; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", t.m[i]);
    out += buf;
    out += (i == 2 || i == 5) ? "\n" : " ";
  }
  return out;
}

AffineTransform parse_affine(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  AffineTransform t;
  for (double& v : t.m) {
    if (!(in >> v)) throw IngestionError(source + ": expected 6 numbers");
  }
  std::string extra;
  if (in >> extra) throw IngestionError(source + ": trailing content '" + extra + "'");
  if (!t.valid()) throw IngestionError(source + ": degenerate affine transform");
  return t;
}

void write_pair(const PairSample& pair, const std::filesystem::path& dir) {
  write_pgm(pair.optical, dir / (pair.id + "_opt.pgm"));
  write_pgm(pair.sar, dir / (pair.id + "_sar.pgm"));
  write_file((dir / (pair.id + "_affine.txt")).string(), format_affine(pair.gt));
}

void write_manifest(const std::vector<std::string>& ids, const std::filesystem::path& dir) {
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  write_file((dir / "manifest.txt").string(), text);
}

std::vector<PairSample> load_pair_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IngestionError("'" + dir.string() + "' is not a directory");
  struct Files {
    bool opt = false, sar = false, affine = false;
  };
  std::map<std::string, Files> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    auto strip = [&](std::string_view suffix) -> std::string {
      return name.ends_with(suffix) ? name.substr(0, name.size() - suffix.size()) : std::string();
    };
    if (auto id = strip("_opt.pgm"); !id.empty()) found[id].opt = true;
    else if (auto id2 = strip("_sar.pgm"); !id2.empty()) found[id2].sar = true;
    else if (auto id3 = strip("_affine.txt"); !id3.empty()) found[id3].affine = true;
  }
  std::vector<PairSample> pairs;
  for (const auto& [id, f] : found) {
    if (!f.opt || !f.sar) {
      throw IngestionError("pair '" + id + "' in " + dir.string() + " is missing its " +
                           (f.opt ? "_sar.pgm" : "_opt.pgm") + " file");
    }
    PairSample p;
    p.id = id;
    p.optical = read_pgm(dir / (id + "_opt.pgm"));
    p.sar = read_pgm(dir / (id + "_sar.pgm"));
    if (p.optical.width != p.sar.width || p.optical.height != p.sar.height) {
      throw IngestionError("pair '" + id + "': optical and SAR sizes differ");
    }
    if (p.optical.width % 8 != 0 || p.optical.height % 8 != 0 || p.optical.width == 0 ||
        p.optical.height == 0) {
      throw IngestionError("pair '" + id + "': image size is not a positive multiple of 8");
    }
    if (f.affine) {
      const fs::path path = dir / (id + "_affine.txt");
      p.gt = parse_affine(read_file(path.string()), path.string());
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace tar

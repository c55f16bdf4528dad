#include "tar/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tar/errors.hpp"

namespace tar {

double sample_bilinear(const Image& img, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  const double ax = x - fx, ay = y - fy;
  auto px = [&img](long xi, long yi) {
    if (xi < 0 || yi < 0 || xi >= static_cast<long>(img.width) ||
        yi >= static_cast<long>(img.height)) {
      return 0.0;
    }
    return img.at(static_cast<std::size_t>(xi), static_cast<std::size_t>(yi));
  };
  // Exact hits skip the zero-weight neighbours so integer shifts are exact.
  const double top = ax == 0.0 ? px(x0, y0) : (1.0 - ax) * px(x0, y0) + ax * px(x0 + 1, y0);
  if (ay == 0.0) return top;
  const double bottom =
      ax == 0.0 ? px(x0, y0 + 1) : (1.0 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

Image warp_image(const Image& img, const AffineTransform& t) {
  const AffineTransform inv = invert(t);
  Image out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const Point2 src = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      out.at(x, y) = sample_bilinear(img, src.x, src.y);
    }
  }
  return out;
}

void clamp01(Image& img) {
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
}

Tensor image_to_tensor(const Image& img) {
  return Tensor::from_data({1, img.height, img.width}, img.pixels);
}

Image quantize8(const Image& img) {
  Image out = img;
  for (double& v : out.pixels) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

void write_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IngestionError("cannot open '" + path.string() + "' for writing");
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IngestionError("failed writing '" + path.string() + "'");
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("cannot open '" + path.string() + "'");
  const std::string name = path.string();
  if (next_token(is) != "P5") throw IngestionError("'" + name + "' is not a binary PGM (P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(is));
    h = std::stoul(next_token(is));
    maxval = std::stoul(next_token(is));
  } catch (const std::exception&) {
    throw IngestionError("malformed PGM header in '" + name + "'");
  }
  if (w == 0 || h == 0 || maxval != 255) {
    throw IngestionError("unsupported PGM geometry or maxval in '" + name + "'");
  }
  std::vector<unsigned char> bytes(w * h);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size()) {
    throw IngestionError("truncated PGM data in '" + name + "'");
  }
  Image img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace tar

#include "tar/text_library.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "tar/errors.hpp"
#include "tar/io.hpp"
#include "tar/rng.hpp"

namespace tar {

namespace detail {
extern const std::string_view kExpandedCategoryText;
extern const std::string_view kBasicCategoryText;
}  // namespace detail

namespace {

constexpr char kMagic[8] = {'T', 'A', 'R', 'T', 'X', 'T', '1', '\0'};

}  // namespace

void validate_categories(const std::vector<std::string>& categories) {
  if (categories.empty()) throw ValidationError("category list is empty");
  std::set<std::string> seen;
  for (const std::string& c : categories) {
    if (c.empty()) throw ValidationError("empty category name");
    if (!seen.insert(c).second) throw ValidationError("duplicate category name '" + c + "'");
  }
}

PromptSet build_prompts(const std::vector<std::string>& categories) {
  validate_categories(categories);
  PromptSet set;
  set.categories = categories;
  for (const std::string& c : categories) set.prompts.push_back(std::string(kPromptPrefix) + c);
  return set;
}

std::string category_from_prompt(std::string_view prompt) {
  if (!prompt.starts_with(kPromptPrefix)) {
    throw ValidationError("prompt does not follow the template: '" + std::string(prompt) + "'");
  }
  return std::string(prompt.substr(kPromptPrefix.size()));
}

std::vector<std::string> parse_category_text(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

std::vector<std::string> read_category_file(const std::string& path) {
  auto cats = parse_category_text(read_file(path));
  validate_categories(cats);
  return cats;
}

std::string category_file_text(const std::vector<std::string>& categories) {
  std::string out;
  for (const std::string& c : categories) out += c + "\n";
  return out;
}

const std::vector<std::string>& expanded_categories() {
  static const std::vector<std::string> list = parse_category_text(detail::kExpandedCategoryText);
  return list;
}

const std::vector<std::string>& basic_categories() {
  static const std::vector<std::string> list = parse_category_text(detail::kBasicCategoryText);
  return list;
}

const std::vector<std::string>& categories_by_name(const std::string& which) {
  if (which == "expanded") return expanded_categories();
  if (which == "basic") return basic_categories();
  throw ConfigError("unknown category list '" + which + "' (expected basic or expanded)");
}

Tensor TextLibrary::tensor() const { return Tensor::from_data({names.size(), dim}, rows); }

TextLibrary synth_embeddings(const std::vector<std::string>& categories, std::size_t dim,
                             std::uint64_t seed) {
  if (dim < 8) throw ValidationError("synthetic text width must be at least 8");
  validate_categories(categories);
  TextLibrary lib;
  lib.names = categories;
  lib.dim = dim;
  lib.source = LibrarySource::synthetic;
  lib.rows.resize(categories.size() * dim);
  std::vector<double> row(dim);
  for (std::size_t k = 0; k < categories.size(); ++k) {
    CounterRng rng(hash_combine(seed, hash_string(categories[k])));
    double sq = 0.0;
    for (double& v : row) {
      v = rng.next_normal();
      sq += v * v;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < dim; ++j) {
      lib.rows[k * dim + j] = static_cast<float>(row[j] * inv);
    }
  }
  return lib;
}

std::string encode_library(const TextLibrary& lib) {
  if (lib.names.empty()) throw ValidationError("cannot save an empty text library");
  if (lib.rows.size() != lib.names.size() * lib.dim) {
    throw ContractError("text library rows do not match names x dim");
  }
  ByteWriter w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.u32(static_cast<std::uint32_t>(lib.names.size()));
  w.u32(static_cast<std::uint32_t>(lib.dim));
  for (std::size_t k = 0; k < lib.names.size(); ++k) {
    if (lib.names[k].size() > 0xFFFF) throw ValidationError("category name too long");
    w.u16(static_cast<std::uint16_t>(lib.names[k].size()));
    w.bytes(lib.names[k]);
    for (std::size_t j = 0; j < lib.dim; ++j) w.f32(static_cast<float>(lib.rows[k * lib.dim + j]));
  }
  return w.take();
}

TextLibrary decode_library(std::string_view bytes) {
  ByteReader r(bytes, "TARTXT1");
  if (r.bytes(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw FormatError("TARTXT1: bad magic");
  }
  TextLibrary lib;
  const std::uint32_t k = r.u32();
  lib.dim = r.u32();
  if (k == 0) throw FormatError("TARTXT1: library has no categories");
  if (lib.dim == 0) throw FormatError("TARTXT1: zero embedding width");
  lib.source = LibrarySource::exported;
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::uint16_t len = r.u16();
    lib.names.emplace_back(r.bytes(len));
    const std::size_t base = lib.rows.size();
    double sq = 0.0;
    for (std::size_t j = 0; j < lib.dim; ++j) {
      const double v = r.f32();
      lib.rows.push_back(v);
      sq += v * v;
    }
    // Rows written by a well-behaved exporter are already unit length; leave
    // them untouched so that re-saving reproduces the file.
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0)) throw FormatError("TARTXT1: zero embedding for '" + lib.names.back() + "'");
    if (std::abs(norm - 1.0) > 1e-6) {
      for (std::size_t j = 0; j < lib.dim; ++j) {
        lib.rows[base + j] = static_cast<float>(lib.rows[base + j] / norm);
      }
    }
  }
  if (!r.done()) throw FormatError("TARTXT1: trailing bytes after last record");
  try {
    validate_categories(lib.names);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("TARTXT1: ") + e.what());
  }
  return lib;
}

void save_library(const TextLibrary& lib, const std::string& path) {
  write_file(path, encode_library(lib));
}

TextLibrary load_library(const std::string& path) { return decode_library(read_file(path)); }

}  // namespace tar

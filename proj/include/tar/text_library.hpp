#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tar/tensor.hpp"

namespace tar {

inline constexpr std::string_view kPromptPrefix = "a satellite image of ";

struct PromptSet {
  std::vector<std::string> categories;
  std::vector<std::string> prompts;
};

// Throws ValidationError on an empty list, empty names or duplicates.
void validate_categories(const std::vector<std::string>& categories);

PromptSet build_prompts(const std::vector<std::string>& categories);

// Inverse of the template; throws ValidationError if the prefix is missing.
std::string category_from_prompt(std::string_view prompt);

// Shipped vocabularies. basic_categories() is a subset of expanded_categories().
const std::vector<std::string>& expanded_categories();
const std::vector<std::string>& basic_categories();
const std::vector<std::string>& categories_by_name(const std::string& which);  // basic|expanded

// Newline-delimited names; blank lines and '#' comments are skipped.
std::vector<std::string> parse_category_text(std::string_view text);
std::vector<std::string> read_category_file(const std::string& path);
std::string category_file_text(const std::vector<std::string>& categories);

enum class LibrarySource { synthetic, exported };

struct TextLibrary {
  std::vector<std::string> names;
  std::size_t dim = 0;
  std::vector<double> rows;  // names.size() x dim, f32-representable
  LibrarySource source = LibrarySource::synthetic;

  std::size_t size() const { return names.size(); }
  // [K x dim] constant tensor.
  Tensor tensor() const;
};

TextLibrary synth_embeddings(const std::vector<std::string>& categories, std::size_t dim,
                             std::uint64_t seed);

// TARTXT1 encoding.
std::string encode_library(const TextLibrary& lib);
TextLibrary decode_library(std::string_view bytes);
void save_library(const TextLibrary& lib, const std::string& path);
TextLibrary load_library(const std::string& path);

}  // namespace tar

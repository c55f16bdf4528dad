#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "tar/errors.hpp"
#include "tar/io.hpp"
#include "tar/text_library.hpp"

namespace tar {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tar_txt_" + name)).string();
}

TEST(Prompts, Template) {
  const PromptSet p = build_prompts({"forest"});
  ASSERT_EQ(p.prompts.size(), 1u);
  EXPECT_EQ(p.prompts[0], "a satellite image of forest");
  const PromptSet two = build_prompts({"river", "bridge"});
  EXPECT_EQ(two.prompts[0], "a satellite image of river");
  EXPECT_EQ(two.prompts[1], "a satellite image of bridge");
}

TEST(Prompts, RejectsBadLists) {
  EXPECT_THROW(build_prompts({}), ValidationError);
  EXPECT_THROW(build_prompts({"a", ""}), ValidationError);
  EXPECT_THROW(build_prompts({"a", "b", "a"}), ValidationError);
  EXPECT_THROW(category_from_prompt("an image of x"), ValidationError);
}

TEST(Prompts, NameExtractionRoundTrip) {
  const auto& cats = expanded_categories();
  const PromptSet p = build_prompts(cats);
  std::vector<std::string> back;
  for (const auto& s : p.prompts) back.push_back(category_from_prompt(s));
  EXPECT_EQ(back, cats);
}

TEST(Vocabulary, SizesAndSubset) {
  EXPECT_EQ(expanded_categories().size(), 224u);
  EXPECT_EQ(basic_categories().size(), 37u);
  validate_categories(expanded_categories());
  validate_categories(basic_categories());
  const std::set<std::string> all(expanded_categories().begin(), expanded_categories().end());
  for (const auto& c : basic_categories()) EXPECT_TRUE(all.count(c)) << c;
}

TEST(Vocabulary, ShippedFilesMatchEmbeddedLists) {
  EXPECT_EQ(read_category_file(TAR_DATA_DIR "/categories_expanded.txt"), expanded_categories());
  EXPECT_EQ(read_category_file(TAR_DATA_DIR "/categories_basic.txt"), basic_categories());
}

TEST(Vocabulary, ParseSkipsCommentsAndBlanks) {
  EXPECT_EQ(parse_category_text("# header\nforest\n\nriver\r\n"),
            (std::vector<std::string>{"forest", "river"}));
}

TEST(Synth, DeterministicAndUnitRows) {
  const auto a = synth_embeddings(expanded_categories(), 64, 7);
  const auto b = synth_embeddings(expanded_categories(), 64, 7);
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.source, LibrarySource::synthetic);
  for (std::size_t k = 0; k < a.size(); ++k) {
    double sq = 0.0;
    for (std::size_t j = 0; j < a.dim; ++j) sq += a.rows[k * a.dim + j] * a.rows[k * a.dim + j];
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
  }
  const auto c = synth_embeddings(expanded_categories(), 64, 8);
  EXPECT_NE(a.rows, c.rows);
}

TEST(Synth, RowsDependOnNameNotPosition) {
  const auto a = synth_embeddings({"forest", "river"}, 16, 1);
  const auto b = synth_embeddings({"river", "forest"}, 16, 1);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(a.rows[j], b.rows[16 + j]);
}

TEST(Synth, RejectsNarrowWidth) {
  EXPECT_THROW(synth_embeddings({"a"}, 7, 0), ValidationError);
}

TEST(Synth, PairwiseCosineBound) {
  const auto lib = synth_embeddings(expanded_categories(), 64, 0);
  double worst = 0.0;
  for (std::size_t i = 0; i < lib.size(); ++i)
    for (std::size_t j = i + 1; j < lib.size(); ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < lib.dim; ++d) dot += lib.rows[i * 64 + d] * lib.rows[j * 64 + d];
      worst = std::max(worst, std::abs(dot));
    }
  EXPECT_LT(worst, 0.6);
}

TEST(Tartxt, RoundTripIsByteExact) {
  const auto lib = synth_embeddings({"forest", "river", "bridge"}, 8, 3);
  const std::string path = temp_path("rt.bin");
  save_library(lib, path);
  const auto loaded = load_library(path);
  EXPECT_EQ(loaded.names, lib.names);
  EXPECT_EQ(loaded.rows, lib.rows);
  EXPECT_EQ(loaded.source, LibrarySource::exported);
  EXPECT_EQ(encode_library(loaded), read_file(path));
  std::filesystem::remove(path);
}

TEST(Tartxt, LayoutIsLittleEndian) {
  TextLibrary lib;
  lib.names = {"ab"};
  lib.dim = 1;
  lib.rows = {1.0};
  const std::string b = encode_library(lib);
  const std::string expect("TARTXT1\0\x01\0\0\0\x01\0\0\0\x02\0ab\0\0\x80\x3f", 24);
  EXPECT_EQ(b, expect);
}

TEST(Tartxt, NonUnitRowsAreNormalizedOnLoad) {
  TextLibrary lib;
  lib.names = {"a"};
  lib.dim = 2;
  lib.rows = {3.0, 4.0};
  const auto loaded = decode_library(encode_library(lib));
  EXPECT_NEAR(loaded.rows[0], 0.6, 1e-7);
  EXPECT_NEAR(loaded.rows[1], 0.8, 1e-7);
}

TEST(Tartxt, RejectsMalformedFiles) {
  const auto lib = synth_embeddings({"forest", "river"}, 8, 3);
  std::string b = encode_library(lib);
  std::string bad = b;
  bad[0] = 'X';
  EXPECT_THROW(decode_library(bad), FormatError);
  EXPECT_THROW(decode_library(b.substr(0, b.size() - 3)), FormatError);
  EXPECT_THROW(decode_library(b.substr(0, 10)), FormatError);
  std::string empty = b.substr(0, 16);
  empty[8] = 0;
  EXPECT_THROW(decode_library(empty), FormatError);
  EXPECT_THROW(load_library(temp_path("does_not_exist")), IngestionError);
}

}  // namespace
}  // namespace tar

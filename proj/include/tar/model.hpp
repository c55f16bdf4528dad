#pragma once

#include <cstdint>
#include <vector>

#include "tar/backbone.hpp"
#include "tar/cfdm.hpp"
#include "tar/config.hpp"
#include "tar/image.hpp"
#include "tar/losses.hpp"
#include "tar/params.hpp"
#include "tar/text_library.hpp"

namespace tar {

struct FineMatch {
  Point2 optical;  // input pixels
  Point2 sar;
  double confidence = 0.0;
  double weight = 0.0;
};

struct MatchResult {
  std::vector<CoarseMatch> coarse;
  std::vector<FineMatch> fine;
};

// Text features projected to the coarse and fine widths. Computed once and
// shared by every pair of a batch.
struct TextContext {
  Tensor coarse;  // [K x d_c], undefined when text is off at the coarse stage
  Tensor fine;    // [K x d_f]
};

struct CoarseForward {
  FeaturePyramid optical;
  FeaturePyramid sar;
  Tensor fused_o;  // [n x d_c] features entering the similarity
  Tensor fused_s;
  ConfidenceMatrix confidence;
  std::size_t grid_w = 0;
  std::size_t grid_h = 0;
};

struct LossTerms {
  Tensor coarse;
  Tensor fine;
  Tensor total;
  std::size_t fine_samples = 0;
};

class Model {
 public:
  // Builds and initializes every parameter from `seed`.
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Library width must equal config().d_text.
  void set_text(const TextLibrary& lib);
  void set_text_tensor(const Tensor& embeddings);
  bool has_text() const { return text_.defined(); }
  const Tensor& text() const { return text_; }
  bool uses_text() const { return cfg_.text_stage != TextStage::none; }

  TextContext text_context() const;

  CoarseForward forward_coarse(const Tensor& optical, const Tensor& sar,
                               const TextContext& text) const;

  LossTerms training_loss(const Tensor& optical, const Tensor& sar, const Supervision& sup,
                          const LossConfig& loss, const TextContext& text) const;

  // Inference without gradient recording.
  MatchResult match(const Image& optical, const Image& sar) const;

 private:
  std::string backbone_prefix(bool sar) const;
  Tensor fine_text(const Tensor& windows, const TextContext& text) const;

  ModelConfig cfg_;
  ParamStore params_;
  Tensor text_;
};

}  // namespace tar

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tar/data_synth.hpp"
#include "tar/estimate.hpp"
#include "tar/tensor.hpp"

namespace tar {

enum class TextStage { none, coarse, fine, both };
enum class PeStage { pre_tafe, post_tafe };
enum class FineMode { expectation, argmax };

const char* text_stage_name(TextStage s);
const char* pe_stage_name(PeStage s);
const char* fine_mode_name(FineMode m);

struct ModelConfig {
  std::size_t d_f = 32;
  std::size_t d_c = 64;
  std::size_t stem_width = 16;
  std::size_t mid_width = 32;
  bool shared_weights = true;
  std::size_t heads = 4;
  std::size_t n_tafe = 2;
  std::size_t ffn_mult = 2;
  TextStage text_stage = TextStage::coarse;
  PeStage pe_stage = PeStage::post_tafe;
  std::size_t d_text = 64;  // width of synthetic libraries
  double theta_c = 0.2;
  double temperature = 0.1;
  std::size_t fine_window = 3;
  FineMode fine_mode = FineMode::expectation;

  bool text_coarse() const { return text_stage == TextStage::coarse || text_stage == TextStage::both; }
  bool text_fine() const { return text_stage == TextStage::fine || text_stage == TextStage::both; }
};

struct LossConfig {
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double lambda_pos = 1.0;
  double lambda_neg = 1.0;
  double lambda_c = 1.0;
  double lambda_f = 1.0;
  std::size_t neg_ratio = 8;  // |negatives| <= neg_ratio * |positives|
};

struct TrainConfig {
  double lr = 8e-3;
  double warmup_frac = 0.05;
  std::vector<double> milestones{0.6, 0.8};  // fractions of total steps
  double lr_decay = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
  std::size_t val_count = 8;
};

struct EvalConfig {
  EstimateMethod estimator = EstimateMethod::ransac;
  int ransac_iters = 1000;
  double ransac_radius = 3.0;
  std::uint64_t ransac_seed = 0;
};

struct TextConfig {
  std::string vocabulary = "expanded";  // basic | expanded
  std::uint64_t text_seed = 0;
};

// Every tunable of the pipeline, settable as flat key=value pairs.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;
  TextConfig text;
  SynthConfig synth;

  // Applies one setting; throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  // All violated constraints, empty when valid.
  std::vector<std::string> problems() const;
  // Throws a ConfigError listing every problem.
  void validate() const;

  // "key=value" lines for every key, in keys() order.
  std::string to_text() const;
};

// Parses a config file body: "key = value" lines, '#' comments, blank lines.
// Collects every malformed line and unknown key before throwing.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source);
void apply_config_file(RunConfig& cfg, const std::string& path);
// "key=value" override strings, as given to --set.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace tar

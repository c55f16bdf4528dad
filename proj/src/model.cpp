#include "tar/model.hpp"

#include "tar/errors.hpp"
#include "tar/tafe.hpp"

namespace tar {

namespace {

ModelConfig normalized(ModelConfig cfg) {
  // Checkpoints store f32; keep the live values identical to reloaded ones.
  cfg.theta_c = static_cast<float>(cfg.theta_c);
  cfg.temperature = static_cast<float>(cfg.temperature);
  return cfg;
}

// Per-channel standardization over the cells of a flattened [n x d] map.
// Removes the component shared by all cells, which otherwise dominates the
// cosine similarity.
Tensor normalize_cells(const Tensor& x, std::size_t h, std::size_t w) {
  const std::size_t d = x.dim(1);
  return transpose(reshape(instance_norm(reshape(transpose(x), {d, h, w})), {d, h * w}));
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(normalized(cfg)) {
  Rng rng(seed);
  init_backbone(params_, backbone_prefix(false), cfg_, rng);
  if (!cfg_.shared_weights) init_backbone(params_, backbone_prefix(true), cfg_, rng);
  if (cfg_.text_coarse()) {
    init_text_projection(params_, "tafe.text_proj", cfg_.d_text, cfg_.d_c, rng);
    init_attention(params_, "tafe.text", cfg_.d_c, cfg_.ffn_mult, rng);
  }
  init_visual_interaction(params_, "tafe.visual", cfg_.d_c, cfg_.ffn_mult, cfg_.n_tafe, rng);
  init_fusion(params_, "tafe.fuse", cfg_.d_c, rng);
  if (cfg_.text_fine()) {
    init_text_projection(params_, "fine.text_proj", cfg_.d_text, cfg_.d_f, rng);
    init_attention(params_, "fine.text", cfg_.d_f, cfg_.ffn_mult, rng);
  }
  init_fine(params_, "fine", cfg_, rng);
  params_.round_values();
}

std::string Model::backbone_prefix(bool sar) const {
  if (cfg_.shared_weights) return "backbone";
  return sar ? "backbone_sar" : "backbone_opt";
}

void Model::set_text(const TextLibrary& lib) { set_text_tensor(lib.tensor()); }

void Model::set_text_tensor(const Tensor& embeddings) {
  if (embeddings.rank() != 2 || embeddings.dim(0) == 0) {
    throw ValidationError("text library must be a non-empty [K x d] matrix");
  }
  if (embeddings.dim(1) != cfg_.d_text) {
    throw ConfigError("text library width " + std::to_string(embeddings.dim(1)) +
                      " does not match d_text=" + std::to_string(cfg_.d_text));
  }
  text_ = embeddings.detach();
}

TextContext Model::text_context() const {
  TextContext ctx;
  if (!uses_text()) return ctx;
  if (!has_text()) {
    throw ConfigError(std::string("text_stage=") + text_stage_name(cfg_.text_stage) +
                      " needs a text library");
  }
  if (cfg_.text_coarse()) ctx.coarse = project_text(text_, params_, "tafe.text_proj");
  if (cfg_.text_fine()) ctx.fine = project_text(text_, params_, "fine.text_proj");
  return ctx;
}

CoarseForward Model::forward_coarse(const Tensor& optical, const Tensor& sar,
                                    const TextContext& text) const {
  CoarseForward f;
  f.optical = extract(optical, params_, backbone_prefix(false));
  f.sar = extract(sar, params_, backbone_prefix(true));
  if (f.optical.coarse.shape() != f.sar.coarse.shape()) {
    throw DimensionError("optical and SAR images differ in size");
  }
  f.grid_h = f.optical.coarse.dim(1);
  f.grid_w = f.optical.coarse.dim(2);
  Tensor co = flatten_chw(f.optical.coarse);
  Tensor cs = flatten_chw(f.sar.coarse);
  const Tensor pe = positional_encoding(f.grid_h, f.grid_w, cfg_.d_c);
  if (cfg_.pe_stage == PeStage::pre_tafe) {
    co = add(co, pe);
    cs = add(cs, pe);
  }
  const VisualInteraction v = visual_interact(co, cs, params_, "tafe.visual", cfg_.n_tafe, cfg_.heads);
  Tensor to, ts;
  if (cfg_.text_coarse()) {
    to = text_enhance(co, text.coarse, params_, "tafe.text", cfg_.heads);
    ts = text_enhance(cs, text.coarse, params_, "tafe.text", cfg_.heads);
  } else {
    to = Tensor::zeros(co.shape());
    ts = Tensor::zeros(cs.shape());
  }
  f.fused_o = normalize_cells(fuse(v.optical, to, params_, "tafe.fuse"), f.grid_h, f.grid_w);
  f.fused_s = normalize_cells(fuse(v.sar, ts, params_, "tafe.fuse"), f.grid_h, f.grid_w);
  if (cfg_.pe_stage == PeStage::post_tafe) {
    f.fused_o = add(f.fused_o, pe);
    f.fused_s = add(f.fused_s, pe);
  }
  f.confidence = coarse_confidence(f.fused_o, f.fused_s, cfg_.temperature);
  return f;
}

Tensor Model::fine_text(const Tensor& windows, const TextContext& text) const {
  if (!cfg_.text_fine()) return windows;
  const Shape s = windows.shape();
  const Tensor flat = reshape(windows, {s[0] * s[1], s[2]});
  return reshape(text_enhance(flat, text.fine, params_, "fine.text", cfg_.heads), s);
}

LossTerms Model::training_loss(const Tensor& optical, const Tensor& sar, const Supervision& sup,
                               const LossConfig& loss, const TextContext& text) const {
  const CoarseForward f = forward_coarse(optical, sar, text);
  LossTerms t;
  t.coarse = focal_loss(f.confidence.P, sup.positives, sup.negatives, loss);

  std::vector<CoarseMatch> fine_pairs;
  std::vector<Point2> targets;
  for (std::size_t k = 0; k < sup.positives.size(); ++k) {
    if (!sup.fine_valid[k]) continue;
    fine_pairs.push_back({sup.positives[k].i, sup.positives[k].j, 1.0});
    targets.push_back(sup.fine_targets[k]);
  }
  const std::size_t w = cfg_.fine_window;
  const FineWindows win = crop_fine_windows(f.optical.fine, f.sar.fine, fine_pairs, f.grid_w, w);
  if (win.kept.empty() || loss.lambda_f == 0.0) {
    t.fine = Tensor::scalar(0.0);
  } else {
    std::vector<Point2> kept_targets;
    for (std::size_t k : win.kept) kept_targets.push_back(targets[k]);
    const FineResult r = fine_refine(fine_text(win.optical, text), fine_text(win.sar, text), params_,
                                     "fine", cfg_.heads, w, FineMode::expectation);
    t.fine = fine_loss(r.stats.mu, kept_targets, r.stats.weight,
                       std::vector<bool>(kept_targets.size(), true));
    t.fine_samples = kept_targets.size();
  }
  t.total = total_loss(t.coarse, t.fine, loss);
  return t;
}

MatchResult Model::match(const Image& optical, const Image& sar) const {
  NoGradScope no_grad;
  const TextContext text = text_context();
  const CoarseForward f = forward_coarse(image_to_tensor(optical), image_to_tensor(sar), text);
  MatchResult m;
  const std::size_t n = f.grid_w * f.grid_h;
  m.coarse = select_coarse(f.confidence.P.data(), n, n, cfg_.theta_c);
  const std::size_t w = cfg_.fine_window;
  const FineWindows win = crop_fine_windows(f.optical.fine, f.sar.fine, m.coarse, f.grid_w, w);
  if (win.kept.empty()) return m;
  const FineResult r = fine_refine(fine_text(win.optical, text), fine_text(win.sar, text), params_,
                                   "fine", cfg_.heads, w, cfg_.fine_mode);
  const auto mu = r.stats.mu.data();
  for (std::size_t b = 0; b < win.kept.size(); ++b) {
    FineMatch fm;
    fm.optical = {fine_to_pixel(win.centers_o[b].second), fine_to_pixel(win.centers_o[b].first)};
    fm.sar = {fine_to_pixel(win.centers_s[b].second + mu[2 * b]),
              fine_to_pixel(win.centers_s[b].first + mu[2 * b + 1])};
    fm.confidence = m.coarse[win.kept[b]].confidence;
    fm.weight = r.stats.weight[b];
    m.fine.push_back(fm);
  }
  return m;
}

}  // namespace tar

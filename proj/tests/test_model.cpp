#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "tar/backbone.hpp"
#include "tar/cfdm.hpp"
#include "tar/data_synth.hpp"
#include "tar/errors.hpp"
#include "tar/gradcheck.hpp"
#include "tar/model.hpp"
#include "tar/tafe.hpp"

namespace tar {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---- backbone --------------------------------------------------------------

TEST(Backbone, OutputShapes) {
  PrecisionScope p(Precision::f64);
  ModelConfig cfg;
  ParamStore params;
  Rng rng(1);
  init_backbone(params, "bb", cfg, rng);
  const FeaturePyramid f = extract(Tensor::zeros({1, 64, 64}), params, "bb");
  EXPECT_EQ(f.fine.shape(), (Shape{32, 32, 32}));
  EXPECT_EQ(f.coarse.shape(), (Shape{64, 8, 8}));
  const FeaturePyramid g = extract(Tensor::zeros({1, 24, 40}), params, "bb");
  EXPECT_EQ(g.fine.shape(), (Shape{32, 12, 20}));
  EXPECT_EQ(g.coarse.shape(), (Shape{64, 3, 5}));
  for (double v : f.coarse.data()) EXPECT_TRUE(std::isfinite(v));
  for (double v : f.fine.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Backbone, ShapeContractUpTo256) {
  ModelConfig cfg;
  cfg.d_c = 16;
  cfg.d_f = 8;
  cfg.stem_width = 4;
  cfg.mid_width = 8;
  ParamStore params;
  Rng rng(2);
  init_backbone(params, "bb", cfg, rng);
  for (std::size_t h : {8u, 56u, 256u})
    for (std::size_t w : {16u, 256u}) {
      const FeaturePyramid f = extract(Tensor::zeros({1, h, w}), params, "bb");
      EXPECT_EQ(f.fine.shape(), (Shape{8, h / 2, w / 2}));
      EXPECT_EQ(f.coarse.shape(), (Shape{16, h / 8, w / 8}));
    }
}

TEST(Backbone, RejectsSizesNotDivisibleBy8) {
  ModelConfig cfg;
  ParamStore params;
  Rng rng(3);
  init_backbone(params, "bb", cfg, rng);
  EXPECT_THROW(extract(Tensor::zeros({1, 60, 64}), params, "bb"), GeometryError);
  EXPECT_THROW(extract(Tensor::zeros({2, 64, 64}), params, "bb"), DimensionError);
}

TEST(Backbone, InteriorShiftEquivariance) {
  PrecisionScope p(Precision::f64);
  ModelConfig cfg;
  ParamStore params;
  Rng rng(4);
  init_backbone(params, "bb", cfg, rng);
  const std::size_t h = 128, w = 192;
  Tensor a = Tensor::zeros({1, h, w}), b = Tensor::zeros({1, h, w});
  Rng content(5);
  for (std::size_t y = 48; y < 80; ++y)
    for (std::size_t x = 72; x < 104; ++x) {
      const double v = content.uniform01();
      a.mutable_data()[y * w + x] = v;
      b.mutable_data()[y * w + x + 8] = v;
    }
  const Tensor ca = extract(a, params, "bb").coarse;
  const Tensor cb = extract(b, params, "bb").coarse;
  const std::size_t c = ca.dim(0), gh = ca.dim(1), gw = ca.dim(2);
  // Cells far enough from the border that zero padding cannot reach them.
  double worst = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 5; y + 5 < gh; ++y)
      for (std::size_t x = 5; x + 6 < gw; ++x) {
        worst = std::max(worst, std::abs(ca.value((ch * gh + y) * gw + x) -
                                         cb.value((ch * gh + y) * gw + x + 1)));
      }
  EXPECT_LT(worst, 1e-5);
}

TEST(Backbone, SharedWeightsSwitch) {
  ModelConfig cfg;
  const Model shared(cfg, 0);
  cfg.shared_weights = false;
  const Model separate(cfg, 0);
  EXPECT_TRUE(shared.params().contains("backbone.stem.w"));
  EXPECT_TRUE(separate.params().contains("backbone_opt.stem.w"));
  EXPECT_TRUE(separate.params().contains("backbone_sar.stem.w"));
  EXPECT_GT(separate.params().numel(), shared.params().numel());
}

// ---- attention -------------------------------------------------------------

// Two-loop reference for attention_core with explicit projections.
std::vector<double> naive_attention(const Tensor& fq, const Tensor& fk, const Tensor& wq,
                                    const Tensor& wk, const Tensor& wv, std::size_t heads) {
  const std::size_t nq = fq.dim(0), nk = fk.dim(0), d = fq.dim(1), dh = d / heads;
  auto proj = [&](const Tensor& x, const Tensor& w, std::size_t n) {
    std::vector<double> out(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) out[i * d + j] += x.value(i * d + k) * w.value(k * d + j);
    return out;
  };
  const auto q = proj(fq, wq, nq), k = proj(fk, wk, nk), v = proj(fk, wv, nk);
  std::vector<double> out(nq * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < nq; ++i) {
      std::vector<double> logit(nk);
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) s += q[i * d + c] * k[j * d + c];
        logit[j] = s / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(logit.begin(), logit.end());
      double z = 0.0;
      for (double& l : logit) z += (l = std::exp(l - mx));
      for (std::size_t j = 0; j < nk; ++j)
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out[i * d + c] += logit[j] / z * v[j * d + c];
    }
  return out;
}

struct AttnFixture {
  ParamStore params;
  explicit AttnFixture(std::size_t d, std::uint64_t seed = 7) {
    Rng rng(seed);
    init_attention(params, "a", d, 2, rng);
  }
};

TEST(Attention, MatchesTwoLoopOracle) {
  PrecisionScope p(Precision::f64);
  for (std::size_t heads : {1u, 4u}) {
    AttnFixture fx(8);
    Rng rng(11);
    const Tensor fq = random_tensor({5, 8}, rng), fk = random_tensor({6, 8}, rng);
    const AttentionOutput out = attention(fq, fk, fx.params, "a", heads);
    const auto ref = naive_attention(fq, fk, fx.params.get("a.wq"), fx.params.get("a.wk"),
                                     fx.params.get("a.wv"), heads);
    EXPECT_LT(max_abs_diff(out.attended.data(), ref), 1e-12);
  }
}

TEST(Attention, SingleKeyCollapsesToItsValue) {
  PrecisionScope p(Precision::f64);
  AttnFixture fx(8);
  Rng rng(12);
  const Tensor fq = random_tensor({5, 8}, rng), fk = random_tensor({1, 8}, rng);
  const AttentionOutput out = attention(fq, fk, fx.params, "a", 4);
  const Tensor v = matmul(fk, fx.params.get("a.wv"));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.attended.value(i * 8 + c), v.value(c), 1e-12);
}

TEST(Attention, IdenticalKeysAverageValues) {
  PrecisionScope p(Precision::f64);
  Rng rng(13);
  const Tensor q = random_tensor({3, 4}, rng);
  Tensor k = Tensor::zeros({5, 4});
  const Tensor row = random_tensor({1, 4}, rng);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t c = 0; c < 4; ++c) k.mutable_data()[j * 4 + c] = row.value(c);
  const Tensor v = random_tensor({5, 4}, rng);
  const Tensor out = attention_core(q, k, v, 2);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 5; ++j) mean += v.value(j * 4 + c) / 5.0;
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out.value(i * 4 + c), mean, 1e-12);
  }
}

TEST(Attention, KeyPermutationInvariance) {
  PrecisionScope p(Precision::f64);
  AttnFixture fx(8);
  Rng rng(14);
  const Tensor fq = random_tensor({5, 8}, rng), fk = random_tensor({5, 8}, rng);
  std::vector<double> perm(fk.numel());
  const std::size_t order[5] = {3, 0, 4, 1, 2};
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t c = 0; c < 8; ++c) perm[j * 8 + c] = fk.value(order[j] * 8 + c);
  const Tensor a = attention(fq, fk, fx.params, "a", 4).out;
  const Tensor b = attention(fq, Tensor::from_data({5, 8}, perm), fx.params, "a", 4).out;
  EXPECT_LT(max_abs_diff(a.data(), b.data()), 1e-12);
}

TEST(Attention, ConvexHullOfScalarValues) {
  PrecisionScope p(Precision::f64);
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor q = random_tensor({4, 1}, rng, 5.0), k = random_tensor({7, 1}, rng, 5.0);
    const Tensor v = random_tensor({7, 1}, rng);
    const auto vd = v.data();
    const double lo = *std::min_element(vd.begin(), vd.end());
    const double hi = *std::max_element(vd.begin(), vd.end());
    const Tensor out = attention_core(q, k, v, 1);
    for (double o : out.data()) {
      EXPECT_GE(o, lo - 1e-12);
      EXPECT_LE(o, hi + 1e-12);
    }
  }
}

TEST(Attention, WidthMismatchRejected) {
  AttnFixture fx(8);
  EXPECT_THROW(attention(Tensor::zeros({2, 8}), Tensor::zeros({2, 4}), fx.params, "a", 4),
               DimensionError);
}

// ---- text branch -------------------------------------------------------------

TEST(TextEnhance, SingleCategoryCollapse) {
  PrecisionScope p(Precision::f64);
  AttnFixture fx(8);
  Rng rng(16);
  const Tensor coarse = random_tensor({6, 8}, rng), text = random_tensor({1, 8}, rng);
  const AttentionOutput out = attention(coarse, text, fx.params, "a", 4);
  const Tensor v = matmul(text, fx.params.get("a.wv"));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.attended.value(i * 8 + c), v.value(c), 1e-12);
  EXPECT_EQ(text_enhance(coarse, text, fx.params, "a", 4).shape(), coarse.shape());
}

TEST(TextEnhance, FullLibraryShapeAndEmptyRejected) {
  ModelConfig cfg;
  ParamStore params;
  Rng rng(17);
  init_text_projection(params, "t", 64, cfg.d_c, rng);
  init_attention(params, "a", cfg.d_c, 2, rng);
  const TextLibrary lib = synth_embeddings(expanded_categories(), 64, 0);
  const Tensor proj = project_text(lib.tensor(), params, "t");
  EXPECT_EQ(proj.shape(), (Shape{224, 64}));
  const Tensor coarse = random_tensor({64, 64}, rng);
  EXPECT_EQ(text_enhance(coarse, proj, params, "a", 4).shape(), (Shape{64, 64}));
  EXPECT_THROW(text_enhance(coarse, Tensor(), params, "a", 4), ValidationError);
}

TEST(TextEnhance, DuplicatedLibraryRowsChangeNothing) {
  PrecisionScope p(Precision::f64);
  AttnFixture fx(8);
  Rng rng(18);
  const Tensor coarse = random_tensor({6, 8}, rng), text = random_tensor({5, 8}, rng);
  const Tensor doubled = concat(text, text, 0);
  const Tensor a = text_enhance(coarse, text, fx.params, "a", 4);
  const Tensor b = text_enhance(coarse, doubled, fx.params, "a", 4);
  EXPECT_LT(max_abs_diff(a.data(), b.data()), 1e-12);
}

// ---- visual branch -----------------------------------------------------------

TEST(VisualInteract, IdenticalInputsGiveIdenticalOutputs) {
  ParamStore params;
  Rng rng(19);
  init_visual_interaction(params, "v", 16, 2, 2, rng);
  const Tensor x = random_tensor({9, 16}, rng);
  const VisualInteraction v = visual_interact(x, x, params, "v", 2, 4);
  ASSERT_EQ(v.optical.numel(), v.sar.numel());
  for (std::size_t i = 0; i < v.optical.numel(); ++i) EXPECT_EQ(v.optical.value(i), v.sar.value(i));
  EXPECT_EQ(v.self_attended.size(), 2u);
}

TEST(VisualInteract, SingleCellCrossAttendsToOtherValue) {
  PrecisionScope p(Precision::f64);
  AttnFixture fx(8);
  Rng rng(20);
  const Tensor a = random_tensor({1, 8}, rng), b = random_tensor({1, 8}, rng);
  const AttentionOutput out = attention(a, b, fx.params, "a", 4);
  const Tensor v = matmul(b, fx.params.get("a.wv"));
  EXPECT_LT(max_abs_diff(out.attended.data(), v.data()), 1e-12);
}

TEST(VisualInteract, PermutedSarLeavesOpticalSelfAttentionUnchanged) {
  PrecisionScope p(Precision::f64);
  ParamStore params;
  Rng rng(21);
  init_visual_interaction(params, "v", 8, 2, 1, rng);
  const Tensor o = random_tensor({4, 8}, rng), s = random_tensor({4, 8}, rng);
  std::vector<double> perm(s.numel());
  const std::size_t order[4] = {2, 3, 1, 0};
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t c = 0; c < 8; ++c) perm[j * 8 + c] = s.value(order[j] * 8 + c);
  const auto a = visual_interact(o, s, params, "v", 1, 4);
  const auto b = visual_interact(o, Tensor::from_data({4, 8}, perm), params, "v", 1, 4);
  EXPECT_EQ(max_abs_diff(a.self_attended[0].first.data(), b.self_attended[0].first.data()), 0.0);
  EXPECT_GT(max_abs_diff(a.sar.data(), b.sar.data()), 1e-3);
}

// ---- fusion ------------------------------------------------------------------

TEST(Fuse, ZeroWeightsGiveZeroAndWidthsAreRight) {
  ParamStore params;
  Rng rng(22);
  init_fusion(params, "f", 64, rng);
  EXPECT_EQ(params.get("f.fc1.w").shape(), (Shape{128, 64}));
  EXPECT_EQ(params.get("f.fc2.w").shape(), (Shape{64, 64}));
  EXPECT_EQ(params.get("f.fc3.w").shape(), (Shape{64, 64}));
  for (const auto& n : params.names()) {
    Tensor t = params.get(n);
    for (double& v : t.mutable_data()) v = 0.0;
  }
  const Tensor out = fuse(random_tensor({5, 64}, rng), random_tensor({5, 64}, rng), params, "f");
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(fuse(Tensor::zeros({5, 64}), Tensor::zeros({4, 64}), params, "f"), DimensionError);
}

TEST(Fuse, GradientsForBothBranches) {
  ParamStore params;
  Rng rng(23);
  init_fusion(params, "f", 6, rng);
  Tensor w = random_tensor({4, 6}, rng);
  const GradCheckResult r = check_gradients(
      [&](const std::vector<Tensor>& in) { return sum(mul(fuse(in[0], in[1], params, "f"), w)); },
      {random_tensor({4, 6}, rng), random_tensor({4, 6}, rng)});
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.checked, 48u);
}

// ---- positional encoding and confidences -------------------------------------

TEST(PositionalEncoding, OriginAndSeparability) {
  const Tensor pe = positional_encoding(8, 8, 64);
  for (std::size_t k = 0; k < 16; ++k) {
    EXPECT_EQ(pe.value(k), 0.0);
    EXPECT_EQ(pe.value(16 + k), 1.0);
    EXPECT_EQ(pe.value(32 + k), 0.0);
    EXPECT_EQ(pe.value(48 + k), 1.0);
  }
  // (2,3) vs (2,5): same row, different columns.
  const std::size_t a = 2 * 8 + 3, b = 2 * 8 + 5;
  for (std::size_t c = 0; c < 64; ++c) {
    const bool same = pe.value(a * 64 + c) == pe.value(b * 64 + c);
    if (c >= 32) EXPECT_TRUE(same);
  }
  EXPECT_NE(pe.value(a * 64 + 0), pe.value(b * 64 + 0));
}

TEST(PositionalEncoding, RowMajorFlattenOrder) {
  Tensor x = Tensor::zeros({1, 8, 8});
  x.mutable_data()[1 * 8 + 2] = 1.0;
  EXPECT_EQ(flatten_chw(x).value(10), 1.0);
  PrecisionScope p(Precision::f64);
  const Tensor pe = positional_encoding(8, 8, 8);
  EXPECT_NEAR(pe.value(10 * 8 + 0), std::sin(2.0), 1e-15);  // x = 2
  EXPECT_NEAR(pe.value(10 * 8 + 4), std::sin(1.0), 1e-15);  // y = 1
}

TEST(Confidence, SingleCell) {
  const ConfidenceMatrix m = coarse_confidence(Tensor::full({1, 4}, 0.5), Tensor::full({1, 4}, 2.0), 0.1);
  EXPECT_EQ(m.P.value(0), 1.0);
}

TEST(Confidence, SaturatedDiagonal) {
  PrecisionScope p(Precision::f64);
  double prev_off = 1.0;
  for (double c : {5.0, 10.0, 40.0}) {
    std::vector<double> s(16, 0.0);
    for (std::size_t i = 0; i < 4; ++i) s[i * 5] = c;
    const Tensor P = dual_softmax(Tensor::from_data({4, 4}, s));
    double off = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        if (i != j) off = std::max(off, P.value(i * 4 + j));
    EXPECT_LT(off, prev_off);
    prev_off = off;
    if (c == 40.0) {
      for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(P.value(i * 5), 1.0, 1e-12);
    }
  }
}

TEST(Confidence, DualSoftmaxBoundsAndFactorSums) {
  PrecisionScope p(Precision::f64);
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor S = random_tensor({6, 7}, rng, 8.0);
    const Tensor r0 = softmax(S, 0), r1 = softmax(S, 1), P = dual_softmax(S);
    for (std::size_t j = 0; j < 7; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 6; ++i) s += r0.value(i * 7 + j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) s += r1.value(i * 7 + j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    for (std::size_t k = 0; k < 42; ++k) {
      EXPECT_GE(P.value(k), 0.0);
      EXPECT_LE(P.value(k), std::min(r0.value(k), r1.value(k)) + 1e-15);
    }
  }
}

TEST(Confidence, SimilarityIsScaledCosine) {
  PrecisionScope p(Precision::f64);
  Rng rng(25);
  const Tensor a = random_tensor({3, 5}, rng), b = random_tensor({4, 5}, rng);
  const ConfidenceMatrix m = coarse_confidence(a, b, 0.1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double ab = 0, aa = 0, bb = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        ab += a.value(i * 5 + c) * b.value(j * 5 + c);
        aa += a.value(i * 5 + c) * a.value(i * 5 + c);
        bb += b.value(j * 5 + c) * b.value(j * 5 + c);
      }
      EXPECT_NEAR(m.S.value(i * 4 + j), ab / std::sqrt(aa * bb) / 0.1, 1e-12);
    }
}

// ---- selection -----------------------------------------------------------------

TEST(SelectCoarse, DiagonalAndThreshold) {
  std::vector<double> P(16, 0.02);
  for (std::size_t i = 0; i < 4; ++i) P[i * 5] = 0.9;
  const auto m = select_coarse(P, 4, 4, 0.2);
  ASSERT_EQ(m.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(m[i].i, i);
    EXPECT_EQ(m[i].j, i);
    EXPECT_EQ(m[i].confidence, 0.9);
  }
  std::vector<double> low(16, 0.1);
  low[5] = 0.19;
  EXPECT_TRUE(select_coarse(low, 4, 4, 0.2).empty());
}

TEST(SelectCoarse, TiesGoToSmallestIndex) {
  const std::vector<double> P{0.5, 0.5, 0.0, 0.0};
  const auto m = select_coarse(P, 2, 2, 0.2);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].i, 0u);
  EXPECT_EQ(m[0].j, 0u);
}

TEST(SelectCoarse, InjectiveAndAboveThresholdOnRandomInputs) {
  Rng rng(26);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> P(64);
    for (double& v : P) v = rng.uniform01();
    const auto m = select_coarse(P, 8, 8, 0.5);
    std::vector<bool> ui(8), uj(8);
    for (const auto& c : m) {
      EXPECT_GE(c.confidence, 0.5);
      EXPECT_FALSE(ui[c.i]);
      EXPECT_FALSE(uj[c.j]);
      ui[c.i] = uj[c.j] = true;
    }
  }
}

// ---- fine windows ----------------------------------------------------------------

TEST(FineWindows, CenterMappingAndBorderRule) {
  EXPECT_EQ(fine_center_index(0), 2u);
  EXPECT_EQ(fine_center_index(7), 30u);
  EXPECT_FALSE(window_fits(0, 3, 32));
  EXPECT_TRUE(window_fits(1, 3, 32));
  EXPECT_FALSE(window_fits(31, 3, 32));
  EXPECT_FALSE(window_fits(2, 7, 32));

  Tensor fine = Tensor::zeros({2, 32, 32});
  for (std::size_t i = 0; i < fine.numel(); ++i) fine.mutable_data()[i] = static_cast<double>(i);
  const FineWindows w = crop_fine_windows(fine, fine, {{0, 9, 0.5}}, 8, 3);
  ASSERT_EQ(w.kept.size(), 1u);
  EXPECT_EQ(w.centers_o[0], (std::pair<std::size_t, std::size_t>{2, 2}));
  EXPECT_EQ(w.centers_s[0], (std::pair<std::size_t, std::size_t>{6, 6}));
  // Position 0 of the optical window is fine pixel (1, 1), channel 1.
  EXPECT_EQ(w.optical.value(1), fine.value(1 * 1024 + 1 * 32 + 1));
  EXPECT_EQ(w.optical.value(8 * 2 + 0), fine.value(3 * 32 + 3));

  // A wide window overlaps the border for cell 0 and is skipped.
  const FineWindows wide = crop_fine_windows(fine, fine, {{0, 0, 0.5}, {9, 9, 0.5}}, 8, 7);
  ASSERT_EQ(wide.kept.size(), 1u);
  EXPECT_EQ(wide.kept[0], 1u);
}

// ---- heatmap statistics ------------------------------------------------------------

TEST(Heatmap, UniformCase) {
  PrecisionScope p(Precision::f64);
  const HeatmapStats s =
      heatmap_statistics(softmax(Tensor::zeros({1, 9}), 1), 3, FineMode::expectation);
  EXPECT_NEAR(s.mu.value(0), 0.0, 1e-15);
  EXPECT_NEAR(s.mu.value(1), 0.0, 1e-15);
  EXPECT_NEAR(s.sigma2[0], 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.weight[0], 3.0 / 7.0, 1e-15);
}

TEST(Heatmap, OneHotCorner) {
  std::vector<double> h(9, 0.0);
  h[8] = 1.0;  // position (a, b) = (2, 2) -> offset (+1, +1)
  const HeatmapStats s = heatmap_statistics(Tensor::from_data({1, 9}, h), 3, FineMode::expectation);
  EXPECT_EQ(s.mu.value(0), 1.0);
  EXPECT_EQ(s.mu.value(1), 1.0);
  EXPECT_EQ(s.sigma2[0], 0.0);
  EXPECT_EQ(s.weight[0], 1.0);
}

TEST(Heatmap, BoundsOnRandomHeatmaps) {
  PrecisionScope p(Precision::f64);
  Rng rng(27);
  const Tensor heat = softmax(random_tensor({500, 9}, rng, 10.0), 1);
  const HeatmapStats s = heatmap_statistics(heat, 3, FineMode::expectation);
  for (std::size_t b = 0; b < 500; ++b) {
    EXPECT_LE(std::abs(s.mu.value(2 * b)), 1.0);
    EXPECT_LE(std::abs(s.mu.value(2 * b + 1)), 1.0);
    EXPECT_GT(s.weight[b], 0.0);
    EXPECT_LE(s.weight[b], 1.0);
    EXPECT_GT(s.sigma2[b], 0.0);  // never exactly one-hot
  }
}

TEST(Heatmap, ArgmaxMode) {
  const std::vector<double> h{0.1, 0.05, 0.05, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1};
  const HeatmapStats s = heatmap_statistics(Tensor::from_data({1, 9}, h), 3, FineMode::argmax);
  EXPECT_EQ(s.mu.value(0), -1.0);
  EXPECT_EQ(s.mu.value(1), 0.0);
}

TEST(FineRefine, HeatRowsAreDistributionsAndBatchOrderIsIrrelevant) {
  PrecisionScope p(Precision::f64);
  ModelConfig cfg;
  ParamStore params;
  Rng rng(28);
  init_fine(params, "fine", cfg, rng);
  const Tensor wo = random_tensor({4, 9, cfg.d_f}, rng), ws = random_tensor({4, 9, cfg.d_f}, rng);
  const FineResult r = fine_refine(wo, ws, params, "fine", cfg.heads, 3, FineMode::expectation);
  ASSERT_EQ(r.heat.shape(), (Shape{4, 9}));
  for (std::size_t b = 0; b < 4; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < 9; ++k) s += r.heat.value(b * 9 + k);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // Reverse the batch: every per-window statistic follows its window.
  auto reversed = [](const Tensor& t) {
    const std::size_t stride = t.numel() / 4;
    std::vector<double> out(t.numel());
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t k = 0; k < stride; ++k) out[(3 - b) * stride + k] = t.value(b * stride + k);
    return Tensor::from_data(t.shape(), out);
  };
  const FineResult q =
      fine_refine(reversed(wo), reversed(ws), params, "fine", cfg.heads, 3, FineMode::expectation);
  for (std::size_t b = 0; b < 4; ++b) {
    EXPECT_NEAR(q.stats.mu.value(2 * (3 - b)), r.stats.mu.value(2 * b), 1e-12);
    EXPECT_NEAR(q.stats.weight[3 - b], r.stats.weight[b], 1e-12);
  }
}

// ---- whole model -------------------------------------------------------------------

TEST(Model, SelfMatchingRecoversIdentityWhenDiagonalDominates) {
  ModelConfig cfg;
  cfg.theta_c = 1e-6;
  Model model(cfg, 3);
  model.set_text(synth_embeddings(expanded_categories(), cfg.d_text, 0));
  int dominated = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const PairSample pair = gen_sample(s, 0, SynthConfig{});
    NoGradScope ng;
    const Tensor img = image_to_tensor(pair.optical);
    const CoarseForward f = model.forward_coarse(img, img, model.text_context());
    const std::size_t n = f.grid_w * f.grid_h;
    const auto S = f.confidence.S.data();
    bool dominant = true;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j && !(S[i * n + i] > S[i * n + j] && S[i * n + i] > S[j * n + i])) dominant = false;
    if (!dominant) continue;
    ++dominated;
    const auto m = select_coarse(f.confidence.P.data(), n, n, cfg.theta_c);
    ASSERT_EQ(m.size(), n);
    for (const auto& c : m) EXPECT_EQ(c.i, c.j);
  }
  EXPECT_GT(dominated, 0);
}

TEST(Model, MatchOutputsRespectThreshold) {
  ModelConfig cfg;
  cfg.theta_c = 0.01;
  Model model(cfg, 4);
  model.set_text(synth_embeddings(expanded_categories(), cfg.d_text, 0));
  const PairSample pair = gen_sample(9, 0, SynthConfig{});
  const MatchResult m = model.match(pair.optical, pair.sar);
  EXPECT_LE(m.fine.size(), m.coarse.size());
  for (const auto& c : m.coarse) EXPECT_GE(c.confidence, static_cast<float>(0.01));
  for (const auto& f : m.fine) {
    EXPECT_GT(f.weight, 0.0);
    EXPECT_LE(f.weight, 1.0);
  }
}

TEST(Model, TextStageNoneRunsWithoutLibrary) {
  ModelConfig cfg;
  cfg.text_stage = TextStage::none;
  Model model(cfg, 5);
  EXPECT_FALSE(model.params().contains("tafe.text_proj.w"));
  const PairSample pair = gen_sample(1, 0, SynthConfig{});
  EXPECT_NO_THROW(model.match(pair.optical, pair.sar));
  cfg.text_stage = TextStage::coarse;
  Model needs_text(cfg, 5);
  EXPECT_THROW(needs_text.match(pair.optical, pair.sar), ConfigError);
}

TEST(Model, FineTextStageRuns) {
  ModelConfig cfg;
  cfg.text_stage = TextStage::both;
  cfg.theta_c = 0.01;
  Model model(cfg, 6);
  model.set_text(synth_embeddings(basic_categories(), cfg.d_text, 0));
  EXPECT_TRUE(model.params().contains("fine.text_proj.w"));
  const PairSample pair = gen_sample(2, 0, SynthConfig{});
  EXPECT_NO_THROW(model.match(pair.optical, pair.sar));
  EXPECT_THROW(model.set_text(synth_embeddings(basic_categories(), 32, 0)), ConfigError);
}

}  // namespace
}  // namespace tar

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tar/errors.hpp"
#include "tar/gradcheck.hpp"
#include "tar/rng.hpp"
#include "tar/tensor.hpp"

namespace tar {
namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

// Plain triple loop, independent of the kernels used by matmul.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a.value(i * k + p) * b.value(p * n + j);
  return c;
}

class TensorTest : public ::testing::Test {
 protected:
  PrecisionScope f64_{Precision::f64};
};

TEST_F(TensorTest, MatmulIdentity) {
  Rng rng(1);
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor b = random_tensor(rng, {3, 4});
  Tensor c = matmul(eye, b);
  for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_EQ(c.value(i), b.value(i));
}

TEST_F(TensorTest, MatmulScalar) {
  Tensor c = matmul(Tensor::from_data({1, 1}, {2}), Tensor::from_data({1, 1}, {3}));
  EXPECT_EQ(c.item(), 6.0);
}

TEST_F(TensorTest, MatmulMatchesTripleLoop) {
  Rng rng(2);
  Tensor a = random_tensor(rng, {2, 3});
  Tensor b = random_tensor(rng, {3, 2});
  const auto ref = naive_matmul(a, b);
  Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c.value(i), ref[i], 1e-14);
}

TEST_F(TensorTest, MatmulExactOnSmallIntegers) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = rng.integer(1, 7), k = rng.integer(1, 7), n = rng.integer(1, 7);
    std::vector<double> av(m * k), bv(k * n);
    for (double& v : av) v = static_cast<double>(rng.integer(-(1 << 20), 1 << 20));
    for (double& v : bv) v = static_cast<double>(rng.integer(-(1 << 20), 1 << 20));
    Tensor a = Tensor::from_data({m, k}, av), b = Tensor::from_data({k, n}, bv);
    const auto ref = naive_matmul(a, b);
    Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(c.value(i), ref[i]);
  }
}

TEST_F(TensorTest, MatmulShapeMismatch) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_F(TensorTest, SoftmaxExamples) {
  Tensor c = softmax(Tensor::from_data({3}, {0.7, 0.7, 0.7}), 0);
  for (double v : c.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  Tensor s = softmax(Tensor::from_data({2}, {0.0, std::log(2.0)}), 0);
  EXPECT_NEAR(s.value(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.value(1), 2.0 / 3.0, 1e-15);
}

TEST_F(TensorTest, SoftmaxShiftInvarianceAndNormalisation) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor(rng, {4, 5}, -30.0, 30.0);
    const double c = rng.uniform(-500.0, 500.0);
    for (std::size_t axis : {0u, 1u}) {
      Tensor y = softmax(x, axis);
      std::vector<double> shifted(x.data().begin(), x.data().end());
      for (double& v : shifted) v += c;
      Tensor ys = softmax(Tensor::from_data({4, 5}, shifted), axis);
      for (std::size_t i = 0; i < y.numel(); ++i) {
        EXPECT_NEAR(y.value(i), ys.value(i), 1e-12);
        EXPECT_GT(y.value(i), 0.0);
      }
      const std::size_t outer = axis == 0 ? 5 : 4, len = axis == 0 ? 4 : 5;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0.0;
        for (std::size_t l = 0; l < len; ++l)
          total += axis == 0 ? y.value(l * 5 + o) : y.value(o * 5 + l);
        EXPECT_NEAR(total, 1.0, 1e-6);
      }
    }
  }
}

TEST_F(TensorTest, SoftmaxLargeLogitsStayFinite) {
  Tensor y = softmax(Tensor::from_data({3}, {1000.0, 999.0, -1000.0}), 0);
  EXPECT_NEAR(y.value(0) + y.value(1) + y.value(2), 1.0, 1e-12);
}

TEST_F(TensorTest, Conv2dIdentityKernel) {
  Rng rng(5);
  Tensor x = random_tensor(rng, {1, 5, 6});
  Tensor y = conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.value(i), x.value(i));
}

TEST_F(TensorTest, Conv2dOneHotAllOnes) {
  std::vector<double> img(25, 0.0);
  img[2 * 5 + 2] = 1.0;
  Tensor y = conv2d(Tensor::from_data({1, 5, 5}, img), Tensor::full({1, 1, 3, 3}, 1.0),
                    Tensor(), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 5, 5}));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      const bool inside = r >= 1 && r <= 3 && c >= 1 && c <= 3;
      EXPECT_EQ(y.value(r * 5 + c), inside ? 1.0 : 0.0) << r << "," << c;
    }
}

TEST_F(TensorTest, Conv2dStrideShape) {
  Tensor y = conv2d(Tensor::zeros({2, 8, 8}), Tensor::zeros({3, 2, 3, 3}), Tensor(), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 4, 4}));
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor(), 1, 0),
               DimensionError);
}

TEST_F(TensorTest, ElementwiseExamples) {
  Tensor r = relu(Tensor::from_data({2}, {-1, 2}));
  EXPECT_EQ(r.value(0), 0.0);
  EXPECT_EQ(r.value(1), 2.0);
  Tensor n = l2_normalize(Tensor::from_data({2}, {3, 4}), 0);
  EXPECT_NEAR(n.value(0), 0.6, 1e-15);
  EXPECT_NEAR(n.value(1), 0.8, 1e-15);
  Tensor z = l2_normalize(Tensor::zeros({3}), 0);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  Tensor cat = concat_channels(Tensor::zeros({4, 2, 2}), Tensor::zeros({4, 2, 2}));
  EXPECT_EQ(cat.shape(), (Shape{8, 2, 2}));
  Tensor flat = concat_channels(Tensor::zeros({5, 3}), Tensor::zeros({5, 3}));
  EXPECT_EQ(flat.shape(), (Shape{5, 6}));
  EXPECT_THROW(concat_channels(Tensor::zeros({4, 2, 2}), Tensor::zeros({4, 3, 2})),
               DimensionError);
}

TEST_F(TensorTest, SliceWindowAndFlatten) {
  std::vector<double> v(2 * 4 * 4);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  Tensor x = Tensor::from_data({2, 4, 4}, v);
  Tensor w = slice_window(x, 1, 2, 3);
  ASSERT_EQ(w.shape(), (Shape{2, 3, 3}));
  EXPECT_EQ(w.value(0), 1.0);             // channel 0, row 0, col 1
  EXPECT_EQ(w.value(9 + 8), 16.0 + 11.0);  // channel 1, row 2, col 3
  Tensor f = flatten_chw(x);
  ASSERT_EQ(f.shape(), (Shape{16, 2}));
  EXPECT_EQ(f.value(10 * 2 + 1), 16.0 + 10.0);
  EXPECT_THROW(slice_window(x, 0, 1, 3), DimensionError);
}

TEST_F(TensorTest, BackwardSquare) {
  Tensor x = Tensor::from_data({3}, {1.5, -2.0, 0.25}, true);
  Tensor loss = sum(mul(x, x));
  loss.backward();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 2.0 * x.value(i));
}

TEST_F(TensorTest, ConstantLeafGetsNoGradient) {
  Tensor c = Tensor::from_data({2}, {1.0, 2.0});
  Tensor x = Tensor::from_data({2}, {3.0, 4.0}, true);
  sum(mul(c, x)).backward();
  EXPECT_FALSE(c.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST_F(TensorTest, BackwardContract) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  EXPECT_THROW(mul(x, x).backward(), ContractError);
  Tensor loss = sum(mul(x, x));
  loss.backward();
  EXPECT_THROW(loss.backward(), ContractError);
  EXPECT_THROW(sum(Tensor::zeros({2})).backward(), ContractError);
}

TEST_F(TensorTest, GradientsAccumulateUntilZeroed) {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  EXPECT_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST_F(TensorTest, SoftmaxMatmulChainMatchesFiniteDifferences) {
  Rng rng(6);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {4, 5});
  Tensor r = random_tensor(rng, {3, 5});
  auto fn = [&](const std::vector<Tensor>& in) {
    return sum(mul(softmax(matmul(in[0], in[1]), 1), r));
  };
  EXPECT_LT(check_gradients(fn, {a, b}).max_rel_error, 1e-6);
}

TEST_F(TensorTest, NoGradScopeRecordsNothing) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  NoGradScope guard;
  Tensor y = sum(mul(x, x));
  EXPECT_FALSE(y.requires_grad());
}

TEST(TensorPrecision, F32RoundsResults) {
  PrecisionScope f32(Precision::f32);
  Tensor x = Tensor::from_data({1}, {0.1});
  EXPECT_EQ(x.item(), static_cast<double>(0.1f));
  Tensor y = scale(x, 3.0);
  EXPECT_EQ(y.item(), static_cast<double>(static_cast<float>(3.0 * static_cast<double>(0.1f))));
}

TEST_F(TensorTest, NonFiniteIsAnError) {
  EXPECT_THROW(scale(Tensor::from_data({1}, {1e308}), 10.0), NumericalError);
}

TEST_F(TensorTest, DeterministicForward) {
  auto run = [] {
    Rng rng(42);
    Tensor x = random_tensor(rng, {3, 8, 8});
    Tensor k = random_tensor(rng, {4, 3, 3, 3});
    return conv2d(x, k, Tensor(), 2, 1);
  };
  Tensor a = run(), b = run();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.value(i), b.value(i));
}

}  // namespace
}  // namespace tar

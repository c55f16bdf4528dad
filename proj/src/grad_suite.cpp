#include <cmath>

#include "tar/gradcheck.hpp"
#include "tar/losses.hpp"
#include "tar/params.hpp"
#include "tar/rng.hpp"
#include "tar/tafe.hpp"

namespace tar {

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Keeps entries clear of zero so relu kinks stay outside the probe step.
Tensor off_zero(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) {
    const double m = rng.uniform(0.05, 1.0);
    v = rng.uniform01() < 0.5 ? -m : m;
  }
  return t;
}

// Every case reduces through fixed random weights: a plain sum would hide
// errors in ops whose outputs sum to a constant (softmax).
std::vector<std::size_t> all_of(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

GradCheckResult run_case(std::vector<Tensor> inputs, const ScalarFn& fn, double scale) {
  const std::size_t n = inputs.size();
  return check_gradients(fn, inputs, all_of(n), 1e-5, scale);
}

std::vector<GradCheckCase> build_registry() {
  std::vector<GradCheckCase> r;
  r.push_back({"matmul", [](std::uint64_t seed, double s) {
                 Rng rng(seed);
                 std::vector<Tensor> in{random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)};
                 Tensor w = random_tensor({3, 5}, rng);
                 return run_case(in, [w](const std::vector<Tensor>& x) {
                   return sum(mul(matmul(x[0], x[1]), w));
                 }, s);
               }});
  r.push_back({"conv2d", [](std::uint64_t seed, double s) {
                 Rng rng(seed + 1);
                 std::vector<Tensor> in{random_tensor({2, 5, 6}, rng),
                                        random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)};
                 Tensor w = random_tensor({3, 3, 3}, rng);
                 return run_case(in, [w](const std::vector<Tensor>& x) {
                   return sum(mul(conv2d(x[0], x[1], x[2], 2, 1), w));
                 }, s);
               }});
  r.push_back({"softmax", [](std::uint64_t seed, double s) {
                 Rng rng(seed + 2);
                 std::vector<Tensor> in{random_tensor({4, 5}, rng)};
                 Tensor w0 = random_tensor({4, 5}, rng), w1 = random_tensor({4, 5}, rng);
                 return run_case(in, [w0, w1](const std::vector<Tensor>& x) {
                   return add(sum(mul(softmax(x[0], 0), w0)), sum(mul(softmax(x[0], 1), w1)));
                 }, s);
               }});
  r.push_back({"elementwise", [](std::uint64_t seed, double s) {
                 Rng rng(seed + 3);
                 std::vector<Tensor> in{off_zero({3, 4}, rng), random_tensor({3, 4}, rng),
                                        random_tensor({4}, rng)};
                 Tensor w = random_tensor({3, 4}, rng);
                 return run_case(in, [w](const std::vector<Tensor>& x) {
                   const Tensor a = add_bias(mul(x[0], x[1]), x[2]);
                   return sum(mul(add(relu(x[0]), sub(scale(a, 0.5), x[1])), w));
                 }, s);
               }});
  r.push_back({"attention_block", [](std::uint64_t seed, double s) {
                 Rng rng(seed + 4);
                 auto params = std::make_shared<ParamStore>();
                 init_attention(*params, "a", 8, 2, rng);
                 std::vector<Tensor> in{random_tensor({5, 8}, rng), random_tensor({6, 8}, rng)};
                 Tensor w = random_tensor({5, 8}, rng);
                 return run_case(in, [params, w](const std::vector<Tensor>& x) {
                   return sum(mul(attention_block(x[0], x[1], *params, "a", 2), w));
                 }, s);
               }});
  r.push_back({"mlp_fusion", [](std::uint64_t seed, double s) {
                 Rng rng(seed + 5);
                 auto params = std::make_shared<ParamStore>();
                 init_fusion(*params, "f", 6, rng);
                 std::vector<Tensor> in{random_tensor({4, 6}, rng), random_tensor({4, 6}, rng)};
                 Tensor w = random_tensor({4, 6}, rng);
                 return run_case(in, [params, w](const std::vector<Tensor>& x) {
                   return sum(mul(fuse(x[0], x[1], *params, "f"), w));
                 }, s);
               }});
  r.push_back({"focal_loss", [](std::uint64_t seed, double s) {
                 Rng rng(seed + 6);
                 Tensor P = Tensor::zeros({4, 4});
                 for (double& v : P.mutable_data()) v = rng.uniform(0.05, 0.95);
                 const std::vector<CellPair> pos{{0, 1}, {2, 2}, {3, 0}};
                 const std::vector<CellPair> neg{{0, 0}, {1, 3}, {2, 1}, {3, 3}};
                 return run_case({P}, [pos, neg](const std::vector<Tensor>& x) {
                   return focal_loss(x[0], pos, neg, LossConfig{});
                 }, s);
               }});
  r.push_back({"fine_loss", [](std::uint64_t seed, double s) {
                 Rng rng(seed + 7);
                 std::vector<Point2> targets;
                 std::vector<double> weights;
                 for (int k = 0; k < 4; ++k) {
                   targets.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
                   weights.push_back(rng.uniform(0.3, 1.0));
                 }
                 const std::vector<bool> valid{true, true, false, true};
                 return run_case({random_tensor({4, 2}, rng)},
                                 [targets, weights, valid](const std::vector<Tensor>& x) {
                                   return fine_loss(x[0], targets, weights, valid);
                                 }, s);
               }});
  return r;
}

}  // namespace

const std::vector<GradCheckCase>& gradcheck_registry() {
  static const std::vector<GradCheckCase> registry = build_registry();
  return registry;
}

}  // namespace tar

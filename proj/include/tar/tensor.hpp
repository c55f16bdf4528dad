#pragma once

// Dense row-major tensor with tape-free reverse-mode differentiation.
//
// Every Tensor is a handle onto a graph node. Operations on tensors that
// require gradients record their inputs and a backward closure on the result;
// backward() walks the recorded graph in reverse topological order and
// accumulates into the grad buffers of all requires_grad leaves. The graph
// reachable from a root is released once backward has run through it.
//
// Values are stored as double. In f32 precision mode every forward result is
// rounded to the nearest float, so a model run in f32 only ever holds
// float-representable activations and parameters.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tar {

enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);
const char* precision_name(Precision p);
Precision parse_precision(const std::string& s);

// Sets the thread's precision mode for the lifetime of the scope.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision previous_;
};

double round_to_precision(double v);

// Disables graph recording on this thread for the lifetime of the scope.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool released = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access, intended for parameter updates and initialisation.
  std::span<double> mutable_data();
  double item() const;
  double value(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse-mode sweep from this scalar. Throws ContractError for non-scalar
  // roots, roots without a recorded graph, or a graph that was already
  // consumed by a previous backward.
  void backward() const;

  // Same values, no graph, no gradient.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                            std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

// Building block for operations: rounds `data` to the active precision,
// rejects non-finite values, and records `backward` when any input requires
// gradients. `backward` receives the result node, whose grad is populated.
Tensor make_result(Shape shape, std::vector<double> data,
                   const std::vector<Tensor>& inputs,
                   std::function<void(detail::Node&)> backward);

// ---- linear algebra -------------------------------------------------------

// [m x k] . [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., k] . w[k x n] (+ bias[n]) -> [..., n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor());
// Batched product: a[B x m x k] . b[B x k x n], or b[B x n x k] transposed.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
Tensor transpose(const Tensor& a);

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
// Broadcast add of bias[n] over the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor sum(const Tensor& a);

// ---- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
// Channel concatenation: axis 0 for [C x H x W] maps, last axis otherwise.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// [C x H x W] -> [(H*W) x C], row-major over cells.
Tensor flatten_chw(const Tensor& x);
// [C x H x W] window of size w x w centered at (cy, cx) -> [C x w x w].
Tensor slice_window(const Tensor& x, std::size_t cy, std::size_t cx, std::size_t w);
// Stack of windows [B x (w*w) x C] for centers given as (row, col).
Tensor gather_windows(const Tensor& x,
                      const std::vector<std::pair<std::size_t, std::size_t>>& centers,
                      std::size_t w);
// x[B x n x d] -> x[:, position, :] as [B x d].
Tensor select_position(const Tensor& x, std::size_t position);

// ---- normalisation --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor l2_normalize(const Tensor& x, std::size_t axis, double eps = 1e-12);
// Per-channel normalisation over spatial dims of [C x H x W].
Tensor instance_norm(const Tensor& x, double eps = 1e-5);

// ---- convolution ----------------------------------------------------------

// Cross-correlation of x[C_in x H x W] with k[C_out x C_in x kh x kw].
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias,
              std::size_t stride, std::size_t pad);
Tensor upsample_nearest2x(const Tensor& x);

// ---- attention ------------------------------------------------------------

// Multi-head scaled dot-product attention on already projected Q, K, V.
// Q[(B x) nq x d], K/V[(B x) nk x d]; head h uses columns [h*d/H, (h+1)*d/H)
// and logits scaled by 1/sqrt(d/H).
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                      std::size_t heads);

}  // namespace tar

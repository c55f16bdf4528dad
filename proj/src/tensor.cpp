#include "tar/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tar/errors.hpp"

namespace tar {

namespace {
thread_local Precision g_precision = Precision::f32;
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradScope::NoGradScope() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + s + "' (expected f32 or f64)");
}

PrecisionScope::PrecisionScope(Precision p) : previous_(g_precision) { g_precision = p; }
PrecisionScope::~PrecisionScope() { g_precision = previous_; }

double round_to_precision(double v) {
  return g_precision == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor needs at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in " + shape_str(shape));
  }
}

void round_in_place(std::vector<double>& data) {
  if (g_precision != Precision::f32) return;
  for (double& v : data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  std::vector<double> data(shape_numel(shape), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  check_shape(shape);
  if (data.size() != shape_numel(shape)) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  round_in_place(data);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) return {};
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape();
  node->data = node_->data;
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() requires a scalar root, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) {
    throw ContractError("backward() on a tensor without a recorded graph");
  }
  if (node_->released) {
    throw ContractError("backward() through a graph that was already consumed");
  }

  // Iterative post-order DFS over nodes that take part in differentiation.
  // Holds owning references: releasing a node's closure drops its parents.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(node_, 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      std::shared_ptr<detail::Node> p = n->parents[next++];
      if (!p->requires_grad || visited.count(p.get())) continue;
      if (p->released) {
        throw ContractError("backward() through a graph that was already consumed");
      }
      visited.insert(p.get());
      stack.emplace_back(std::move(p), 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = it->get();
    if (!n->backward) continue;  // leaf
    if (!n->grad.empty()) n->backward(*n);
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->released = true;
  }
}

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                   std::function<void(detail::Node&)> backward) {
  round_in_place(data);
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericalError("non-finite value produced in tensor of shape " +
                           shape_str(shape));
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) node->parents.push_back(t.node());
    }
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace tar

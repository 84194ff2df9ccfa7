// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A BasicTensor is a cheap handle onto a shared graph node. Every op records
// its parents and a backward rule when any input requires a gradient and
// gradient recording is enabled (see NoGradGuard). `backward(loss)` walks the
// recorded graph once in reverse topological order.
//
// Gradients of leaves accumulate across backward calls until `zero_grad()`.
// Gradients of interior nodes are reset at the start of each backward call,
// so calling backward twice on the same loss doubles the leaf gradients.
//
// One graph is single-threaded. Separate graphs on separate threads are fine
// as long as shared parameters are only read.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace turbo {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class OpKind : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  scale,
  neg,
  gelu,
  exp,
  log,
  sqrt,
  matmul,
  softmax,
  log_softmax,
  layernorm,
  gather_rows,
  reshape,
  permute,
  concat,
  narrow,
  sum,
  mean,
  pick,
  l2_normalize,
};

std::string_view op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);

/// Debug hook: negate the upstream gradient seen by every backward rule of
/// `op`. Used to prove the gradient checker catches a broken rule.
void inject_backward_fault(std::optional<OpKind> op);
std::optional<OpKind> injected_backward_fault();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first written
  bool requires_grad = false;
  OpKind op = OpKind::leaf;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  T* grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

template <typename T>
class BasicTensor {
 public:
  using Scalar = T;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  /// Writable view of the storage. Only meaningful for leaves; writing into an
  /// interior node does not re-run its consumers.
  std::span<T> mutable_data() { return node_->value; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return {node_->grad_buffer(), node_->value.size()}; }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  OpKind op() const { return node_->op; }

  T item() const;
  /// True when no NaN or Inf is present in the value or gradient buffers.
  bool finite_check() const;
  /// A new leaf holding a copy of the values, outside any graph.
  BasicTensor detach() const;

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Elementwise. Binary ops accept equal shapes, a single-element operand, or an
// operand whose shape is a trailing suffix of the other (bias / table
// broadcast).
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& a, T factor);
template <typename T> BasicTensor<T> neg(const BasicTensor<T>& a);
/// tanh approximation.
template <typename T> BasicTensor<T> gelu(const BasicTensor<T>& a);
template <typename T> BasicTensor<T> exp(const BasicTensor<T>& a);
template <typename T> BasicTensor<T> log(const BasicTensor<T>& a);
template <typename T> BasicTensor<T> sqrt(const BasicTensor<T>& a);

/// a[..., M, K] x b[K, N] or a[..., M, K] x b[..., K, N] with equal leading
/// extents.
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);
template <typename T> BasicTensor<T> log_softmax(const BasicTensor<T>& x, std::size_t axis);
/// Normalizes over the last axis; gain and bias have the last extent.
template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                         const BasicTensor<T>& bias, T eps);

/// x[N, D] -> rows idx of x, in idx order.
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> idx);
/// x[B, N, D] -> [B, K, D] with a separate index list (all of length K) per
/// batch entry.
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x,
                           const std::vector<std::vector<std::size_t>>& idx);

template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<std::size_t>& axes);
/// Swap the last two axes.
template <typename T> BasicTensor<T> transpose(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis);
template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, std::size_t axis, std::size_t start,
                      std::size_t length);

template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);
/// x[B, C] -> [B] with out[i] = x[i, labels[i]].
template <typename T>
BasicTensor<T> pick(const BasicTensor<T>& x, std::span<const std::size_t> labels);
/// Divides each last-axis row by its Euclidean norm.
template <typename T> BasicTensor<T> l2_normalize(const BasicTensor<T>& x, T eps = T(1e-12));

/// Populates gradients of every leaf reachable from `loss` that requires one.
template <typename T> void backward(const BasicTensor<T>& loss);

/// Value-level conversion between precisions; the result is a fresh leaf.
template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& x) {
  std::vector<To> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(x.data()[i]);
  return BasicTensor<To>::from(x.shape(), std::move(out), x.requires_grad());
}

}  // namespace turbo

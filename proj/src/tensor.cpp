// SPDX-License-Identifier: Apache-2.0
#include "turbo/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "turbo/errors.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace turbo {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

constexpr std::string_view kOpNames[] = {
    "leaf", "add",       "sub",         "mul",       "scale",       "neg",
    "gelu", "exp",       "log",         "sqrt",      "matmul",      "softmax",
    "log_softmax",       "layernorm",   "gather_rows", "reshape",   "permute",
    "concat", "narrow",  "sum",         "mean",      "pick",        "l2_normalize",
};

std::atomic<int> g_fault{-1};
thread_local bool t_grad_enabled = true;

#if defined(__GLIBC__)
// Activation buffers are freed and reallocated every step. With the default
// thresholds glibc serves them with fresh mmaps, and the page faults cost
// more than the arithmetic; keep them on the heap instead.
const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

}  // namespace

std::string_view op_name(OpKind op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<OpKind> op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kOpNames); ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

void inject_backward_fault(std::optional<OpKind> op) {
  g_fault.store(op ? static_cast<int>(*op) : -1);
}

std::optional<OpKind> injected_backward_fault() {
  const int f = g_fault.load();
  if (f < 0) return std::nullopt;
  return static_cast<OpKind>(f);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---------------------------------------------------------------------------
// BasicTensor members

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

template <typename T>
bool BasicTensor<T>::finite_check() const {
  auto finite = [](T v) { return std::isfinite(v); };
  return std::all_of(node_->value.begin(), node_->value.end(), finite) &&
         std::all_of(node_->grad.begin(), node_->grad.end(), finite);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from(shape(), node_->value, false);
}

// ---------------------------------------------------------------------------
// Graph construction helpers

namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
struct Result {
  NodePtr<T> node;
  bool tracked;
};

/// Allocates an output node. When recording, parents and the op tag are
/// attached; the caller installs `backward` only when `tracked` is true.
template <typename T>
Result<T> make_result(Shape shape, OpKind op, std::initializer_list<const BasicTensor<T>*> inputs) {
  auto node = std::make_shared<Node<T>>();
  node->value.assign(shape_numel(shape), T(0));
  node->shape = std::move(shape);
  node->op = op;
  bool tracked = false;
  if (t_grad_enabled) {
    for (const auto* in : inputs) tracked = tracked || in->requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->parents.push_back(in->node_ptr());
  }
  return {std::move(node), tracked};
}

template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  Node<T>& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer() : nullptr;
}

struct Broadcast {
  std::size_t out_numel;
  std::size_t a_numel;
  std::size_t b_numel;
};

/// Shape rule for binary elementwise ops.
Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return a;
  const std::size_t na = shape_numel(a);
  const std::size_t nb = shape_numel(b);
  if (nb == 1) return a;
  if (na == 1) return b;
  auto is_suffix = [](const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
  };
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
}

template <typename T, typename Fwd>
BasicTensor<T> unary(const BasicTensor<T>& a, OpKind op, Fwd fwd) {
  auto r = make_result<T>(a.shape(), op, {&a});
  const T* x = a.data().data();
  T* y = r.node->value.data();
  for (std::size_t i = 0; i < r.node->value.size(); ++i) y[i] = fwd(x[i]);
  return BasicTensor<T>(r.node);
}

/// Installs a backward rule of the form dx += dy * local(x, y).
template <typename T, typename Local>
void set_unary_backward(BasicTensor<T>& out, Local local) {
  Node<T>& node = out.node();
  if (!node.requires_grad || node.parents.empty()) return;
  node.backward = [local](Node<T>& self) {
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    const T* x = self.parents[0]->value.data();
    const T* y = self.value.data();
    const T* gy = self.grad.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += gy[i] * local(x[i], y[i]);
  };
}

enum class Binary { add, sub, mul };

template <typename T>
BasicTensor<T> binary(const BasicTensor<T>& a, const BasicTensor<T>& b, Binary kind) {
  static constexpr OpKind kinds[] = {OpKind::add, OpKind::sub, OpKind::mul};
  const OpKind op = kinds[static_cast<int>(kind)];
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), op_name(op));
  auto r = make_result<T>(std::move(out_shape), op, {&a, &b});
  const std::size_t n = r.node->value.size();
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const T* x = a.data().data();
  const T* z = b.data().data();
  T* y = r.node->value.data();
  // Operands are either full-size or repeat with period numel, so the output
  // splits into blocks of the smaller period.
  const std::size_t period = std::min(na, nb);
  for (std::size_t base = 0; period > 0 && base < n; base += period) {
    const T* xa = x + (na == n ? base : 0);
    const T* zb = z + (nb == n ? base : 0);
    T* yo = y + base;
    switch (kind) {
      case Binary::add: for (std::size_t j = 0; j < period; ++j) yo[j] = xa[j] + zb[j]; break;
      case Binary::sub: for (std::size_t j = 0; j < period; ++j) yo[j] = xa[j] - zb[j]; break;
      case Binary::mul: for (std::size_t j = 0; j < period; ++j) yo[j] = xa[j] * zb[j]; break;
    }
  }
  if (r.tracked) {
    r.node->backward = [kind](Node<T>& self) {
      const std::size_t n = self.value.size();
      const std::size_t na = self.parents[0]->value.size();
      const std::size_t nb = self.parents[1]->value.size();
      const std::size_t period = std::min(na, nb);
      const T* gy = self.grad.data();
      T* ga = parent_grad(self, 0);
      T* gb = parent_grad(self, 1);
      const T* x = self.parents[0]->value.data();
      const T* z = self.parents[1]->value.data();
      for (std::size_t base = 0; period > 0 && base < n; base += period) {
        const std::size_t oa = na == n ? base : 0;
        const std::size_t ob = nb == n ? base : 0;
        const T* g = gy + base;
        switch (kind) {
          case Binary::add:
            if (ga) for (std::size_t j = 0; j < period; ++j) ga[oa + j] += g[j];
            if (gb) for (std::size_t j = 0; j < period; ++j) gb[ob + j] += g[j];
            break;
          case Binary::sub:
            if (ga) for (std::size_t j = 0; j < period; ++j) ga[oa + j] += g[j];
            if (gb) for (std::size_t j = 0; j < period; ++j) gb[ob + j] -= g[j];
            break;
          case Binary::mul:
            if (ga) for (std::size_t j = 0; j < period; ++j) ga[oa + j] += g[j] * z[ob + j];
            if (gb) for (std::size_t j = 0; j < period; ++j) gb[ob + j] += g[j] * x[oa + j];
            break;
        }
      }
    };
  }
  return BasicTensor<T>(r.node);
}

/// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, std::string_view op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::add);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::sub);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return binary(a, b, Binary::mul);
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  auto out = unary(a, OpKind::scale, [factor](T x) { return x * factor; });
  set_unary_backward(out, [factor](T, T) { return factor; });
  return out;
}

template <typename T>
BasicTensor<T> neg(const BasicTensor<T>& a) {
  auto out = unary(a, OpKind::neg, [](T x) { return -x; });
  set_unary_backward(out, [](T, T) { return T(-1); });
  return out;
}

namespace {
template <typename T>
constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2 / pi)
template <typename T>
constexpr T kGeluA = T(0.044715);
}  // namespace

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& a) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  auto r = make_result<T>(a.shape(), OpKind::gelu, {&a});
  const auto n = static_cast<Eigen::Index>(a.numel());
  {
    Eigen::Map<const Arr> x(a.data().data(), n);
    Eigen::Map<Arr> y(r.node->value.data(), n);
    y = T(0.5) * x * (T(1) + (kGeluC<T> * (x + kGeluA<T> * x.cube())).tanh());
  }
  if (r.tracked) {
    r.node->backward = [n](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      Eigen::Map<const Arr> x(self.parents[0]->value.data(), n);
      Eigen::Map<const Arr> gy(self.grad.data(), n);
      const Arr th = (kGeluC<T> * (x + kGeluA<T> * x.cube())).tanh();
      const Arr du = kGeluC<T> * (T(1) + T(3) * kGeluA<T> * x.square());
      Eigen::Map<Arr>(gx, n) += gy * (T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th.square()) * du);
    };
  }
  return BasicTensor<T>(r.node);
}

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& a) {
  auto out = unary(a, OpKind::exp, [](T x) { return std::exp(x); });
  set_unary_backward(out, [](T, T y) { return y; });
  return out;
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a) {
  for (T v : a.data()) {
    if (v < T(0)) throw DomainError("log of negative value " + std::to_string(v));
  }
  auto out = unary(a, OpKind::log, [](T x) { return std::log(x); });
  set_unary_backward(out, [](T x, T) { return T(1) / x; });
  return out;
}

template <typename T>
BasicTensor<T> sqrt(const BasicTensor<T>& a) {
  for (T v : a.data()) {
    if (v < T(0)) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  auto out = unary(a, OpKind::sqrt, [](T x) { return std::sqrt(x); });
  set_unary_backward(out, [](T, T y) { return T(0.5) / y; });
  return out;
}

// ---------------------------------------------------------------------------
// matmul

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(sa) + " and " +
                         shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t kb = sb[sb.size() - 2];
  const std::size_t n = sb.back();
  const bool shared_rhs = sb.size() == 2;
  const bool batch_ok =
      shared_rhs || (sa.size() == sb.size() && std::equal(sa.begin(), sa.end() - 2, sb.begin()));
  if (k != kb || !batch_ok) {
    throw DimensionError("matmul shape mismatch: " + shape_str(sa) + " x " + shape_str(sb));
  }
  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

  auto r = make_result<T>(std::move(out_shape), OpKind::matmul, {&a, &b});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* pc = r.node->value.data();
  const auto M = static_cast<Eigen::Index>(m);
  const auto K = static_cast<Eigen::Index>(k);
  const auto N = static_cast<Eigen::Index>(n);
  if (shared_rhs) {
    // Fold the batch into the row dimension: one GEMM.
    const auto rows = static_cast<Eigen::Index>(batch * m);
    MapM<T>(pc, rows, N).noalias() = MapC<T>(pa, rows, K) * MapC<T>(pb, K, N);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      MapM<T>(pc + i * m * n, M, N).noalias() =
          MapC<T>(pa + i * m * k, M, K) * MapC<T>(pb + i * k * n, K, N);
    }
  }
  if (r.tracked) {
    r.node->backward = [batch, m, k, n, shared_rhs](Node<T>& self) {
      const T* gc = self.grad.data();
      const T* pa = self.parents[0]->value.data();
      const T* pb = self.parents[1]->value.data();
      T* ga = parent_grad(self, 0);
      T* gb = parent_grad(self, 1);
      const auto M = static_cast<Eigen::Index>(m);
      const auto K = static_cast<Eigen::Index>(k);
      const auto N = static_cast<Eigen::Index>(n);
      if (shared_rhs) {
        const auto rows = static_cast<Eigen::Index>(batch * m);
        if (ga) MapM<T>(ga, rows, K).noalias() += MapC<T>(gc, rows, N) * MapC<T>(pb, K, N).transpose();
        if (gb) MapM<T>(gb, K, N).noalias() += MapC<T>(pa, rows, K).transpose() * MapC<T>(gc, rows, N);
        return;
      }
      for (std::size_t i = 0; i < batch; ++i) {
        const T* gci = gc + i * m * n;
        if (ga) {
          MapM<T>(ga + i * m * k, M, K).noalias() +=
              MapC<T>(gci, M, N) * MapC<T>(pb + i * k * n, K, N).transpose();
        }
        if (gb) {
          MapM<T>(gb + i * k * n, K, N).noalias() +=
              MapC<T>(pa + i * m * k, M, K).transpose() * MapC<T>(gci, M, N);
        }
      }
    };
  }
  return BasicTensor<T>(r.node);
}

// ---------------------------------------------------------------------------
// softmax family

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  auto r = make_result<T>(x.shape(), OpKind::softmax, {&x});
  const T* in = x.data().data();
  T* out = r.node->value.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      const std::size_t base = o * s.extent * s.inner + j;
      T mx = in[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, in[base + e * s.inner]);
      T total = 0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = std::exp(in[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  if (r.tracked) {
    r.node->backward = [s](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      const T* y = self.value.data();
      const T* gy = self.grad.data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
          const std::size_t base = o * s.extent * s.inner + j;
          T dot = 0;
          for (std::size_t e = 0; e < s.extent; ++e) {
            dot += gy[base + e * s.inner] * y[base + e * s.inner];
          }
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t i = base + e * s.inner;
            gx[i] += y[i] * (gy[i] - dot);
          }
        }
      }
    };
  }
  return BasicTensor<T>(r.node);
}

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "log_softmax");
  auto r = make_result<T>(x.shape(), OpKind::log_softmax, {&x});
  const T* in = x.data().data();
  T* out = r.node->value.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      const std::size_t base = o * s.extent * s.inner + j;
      T mx = in[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, in[base + e * s.inner]);
      T total = 0;
      for (std::size_t e = 0; e < s.extent; ++e) total += std::exp(in[base + e * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t e = 0; e < s.extent; ++e) {
        out[base + e * s.inner] = in[base + e * s.inner] - lse;
      }
    }
  }
  if (r.tracked) {
    r.node->backward = [s](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      const T* y = self.value.data();
      const T* gy = self.grad.data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
          const std::size_t base = o * s.extent * s.inner + j;
          T total = 0;
          for (std::size_t e = 0; e < s.extent; ++e) total += gy[base + e * s.inner];
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t i = base + e * s.inner;
            gx[i] += gy[i] - std::exp(y[i]) * total;
          }
        }
      }
    };
  }
  return BasicTensor<T>(r.node);
}

// ---------------------------------------------------------------------------
// layernorm

template <typename T>
BasicTensor<T> layernorm(const BasicTensor<T>& x, const BasicTensor<T>& gain,
                         const BasicTensor<T>& bias, T eps) {
  if (x.rank() == 0) throw DimensionError("layernorm on a scalar");
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layernorm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  }
  if (!(eps > T(0))) throw ContractError("layernorm eps must be positive");
  const std::size_t rows = x.numel() / d;
  auto r = make_result<T>(x.shape(), OpKind::layernorm, {&x, &gain, &bias});
  auto rstd = std::make_shared<std::vector<T>>(rows);
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  const T* in = x.data().data();
  const T* g = gain.data().data();
  const T* b = bias.data().data();
  T* out = r.node->value.data();
  for (std::size_t row = 0; row < rows; ++row) {
    const T* xr = in + row * d;
    T mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= T(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= T(d);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[row] = rs;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (xr[i] - mu) * rs;
      (*xhat)[row * d + i] = h;
      out[row * d + i] = h * g[i] + b[i];
    }
  }
  if (r.tracked) {
    r.node->backward = [rows, d, rstd, xhat](Node<T>& self) {
      const T* gy = self.grad.data();
      const T* g = self.parents[1]->value.data();
      T* gx = parent_grad(self, 0);
      T* gg = parent_grad(self, 1);
      T* gb = parent_grad(self, 2);
      for (std::size_t row = 0; row < rows; ++row) {
        const T* gyr = gy + row * d;
        const T* hr = xhat->data() + row * d;
        if (gg || gb) {
          for (std::size_t i = 0; i < d; ++i) {
            if (gg) gg[i] += gyr[i] * hr[i];
            if (gb) gb[i] += gyr[i];
          }
        }
        if (!gx) continue;
        T mean_dh = 0;
        T mean_dh_h = 0;
        for (std::size_t i = 0; i < d; ++i) {
          const T dh = gyr[i] * g[i];
          mean_dh += dh;
          mean_dh_h += dh * hr[i];
        }
        mean_dh /= T(d);
        mean_dh_h /= T(d);
        const T rs = (*rstd)[row];
        for (std::size_t i = 0; i < d; ++i) {
          const T dh = gyr[i] * g[i];
          gx[row * d + i] += rs * (dh - mean_dh - hr[i] * mean_dh_h);
        }
      }
    };
  }
  return BasicTensor<T>(r.node);
}

// ---------------------------------------------------------------------------
// Indexing and layout

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::size_t> idx) {
  if (x.rank() != 2) {
    throw DimensionError("gather_rows expects [N, D], got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t d = x.dim(1);
  for (std::size_t i : idx) {
    if (i >= n) {
      throw IndexError("gather_rows index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(n) + ")");
    }
  }
  auto r = make_result<T>({idx.size(), d}, OpKind::gather_rows, {&x});
  const T* in = x.data().data();
  T* out = r.node->value.data();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(in + idx[k] * d, d, out + k * d);
  }
  if (r.tracked) {
    std::vector<std::size_t> rows(idx.begin(), idx.end());
    r.node->backward = [rows = std::move(rows), d](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      const T* gy = self.grad.data();
      for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t j = 0; j < d; ++j) gx[rows[k] * d + j] += gy[k * d + j];
      }
    };
  }
  return BasicTensor<T>(r.node);
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x,
                           const std::vector<std::vector<std::size_t>>& idx) {
  if (x.rank() != 3 || x.dim(0) != idx.size()) {
    throw DimensionError("batched gather_rows expects [B, N, D] with B = " +
                         std::to_string(idx.size()) + ", got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t n = x.dim(1);
  const std::size_t d = x.dim(2);
  const std::size_t kept = idx.empty() ? 0 : idx[0].size();
  for (const auto& list : idx) {
    if (list.size() != kept) throw DimensionError("batched gather_rows: ragged index lists");
    for (std::size_t i : list) {
      if (i >= n) {
        throw IndexError("gather_rows index " + std::to_string(i) + " out of range [0, " +
                         std::to_string(n) + ")");
      }
    }
  }
  auto r = make_result<T>({batch, kept, d}, OpKind::gather_rows, {&x});
  const T* in = x.data().data();
  T* out = r.node->value.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < kept; ++k) {
      std::copy_n(in + (b * n + idx[b][k]) * d, d, out + (b * kept + k) * d);
    }
  }
  if (r.tracked) {
    r.node->backward = [idx, n, d, kept](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      const T* gy = self.grad.data();
      for (std::size_t b = 0; b < idx.size(); ++b) {
        for (std::size_t k = 0; k < kept; ++k) {
          T* dst = gx + (b * n + idx[b][k]) * d;
          const T* src = gy + (b * kept + k) * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      }
    };
  }
  return BasicTensor<T>(r.node);
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  auto r = make_result<T>(std::move(shape), OpKind::reshape, {&x});
  std::copy(x.data().begin(), x.data().end(), r.node->value.begin());
  if (r.tracked) {
    r.node->backward = [](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    };
  }
  return BasicTensor<T>(r.node);
}

namespace {

/// For each output flat index, the matching input flat index.
std::vector<std::size_t> permutation_map(const Shape& in, const std::vector<std::size_t>& axes) {
  const std::size_t rank = in.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) out[i] = in[axes[i]];
  const std::size_t total = shape_numel(in);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    map[flat] = src;
    // Odometer increment over the output index, tracking the source offset.
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      src += in_stride[axes[ax]];
      if (counter[ax] < out[ax]) break;
      src -= counter[ax] * in_stride[axes[ax]];
      counter[ax] = 0;
    }
  }
  return map;
}

}  // namespace

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  std::vector<std::size_t> sorted = axes;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> expected(rank);
  std::iota(expected.begin(), expected.end(), std::size_t{0});
  if (sorted != expected) {
    throw DimensionError("permute: axes are not a permutation of rank " + std::to_string(rank));
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.shape()[axes[i]];
  // When the last axis stays in place, whole rows move together: map rows
  // and copy runs.
  std::size_t run = 1;
  std::shared_ptr<std::vector<std::size_t>> map;
  if (rank >= 2 && axes.back() == rank - 1) {
    run = x.shape().back();
    const Shape rows(x.shape().begin(), x.shape().end() - 1);
    const std::vector<std::size_t> row_axes(axes.begin(), axes.end() - 1);
    map = std::make_shared<std::vector<std::size_t>>(permutation_map(rows, row_axes));
  } else {
    map = std::make_shared<std::vector<std::size_t>>(permutation_map(x.shape(), axes));
  }
  auto r = make_result<T>(std::move(out_shape), OpKind::permute, {&x});
  const T* in = x.data().data();
  T* out = r.node->value.data();
  for (std::size_t i = 0; i < map->size(); ++i) {
    std::copy_n(in + (*map)[i] * run, run, out + i * run);
  }
  if (r.tracked) {
    r.node->backward = [map, run](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      const T* gy = self.grad.data();
      for (std::size_t i = 0; i < map->size(); ++i) {
        T* dst = gx + (*map)[i] * run;
        const T* src = gy + i * run;
        for (std::size_t j = 0; j < run; ++j) dst[j] += src[j];
      }
    };
  }
  return BasicTensor<T>(r.node);
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.size()) throw DimensionError("concat: rank mismatch");
    probe[axis] = first[axis];
    if (probe != first) {
      throw DimensionError("concat: " + shape_str(p.shape()) + " vs " + shape_str(first));
    }
    out_shape[axis] += p.shape()[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_extent = out_shape[axis];

  auto node = std::make_shared<Node<T>>();
  node->shape = out_shape;
  node->value.assign(shape_numel(out_shape), T(0));
  node->op = OpKind::concat;
  bool tracked = false;
  if (t_grad_enabled) {
    for (const auto& p : parts) tracked = tracked || p.requires_grad();
  }
  std::vector<std::size_t> extents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t ext = p.shape()[axis];
    const T* in = p.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(in + o * ext * inner, ext * inner,
                  node->value.data() + (o * out_extent + offset) * inner);
    }
    extents.push_back(ext);
    offset += ext;
    if (tracked) node->parents.push_back(p.node_ptr());
  }
  if (tracked) {
    node->requires_grad = true;
    node->backward = [extents, outer, inner, out_extent](Node<T>& self) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < extents.size(); ++k) {
        const std::size_t ext = extents[k];
        if (T* g = parent_grad(self, k)) {
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = self.grad.data() + (o * out_extent + offset) * inner;
            T* dst = g + o * ext * inner;
            for (std::size_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
          }
        }
        offset += ext;
      }
    };
  }
  return BasicTensor<T>(node);
}

template <typename T>
BasicTensor<T> narrow(const BasicTensor<T>& x, std::size_t axis, std::size_t start,
                      std::size_t length) {
  const AxisSplit s = split_axis(x.shape(), axis, "narrow");
  if (start + length > s.extent) {
    throw IndexError("narrow [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds extent " + std::to_string(s.extent));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  auto r = make_result<T>(std::move(out_shape), OpKind::narrow, {&x});
  const T* in = x.data().data();
  T* out = r.node->value.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(in + (o * s.extent + start) * s.inner, length * s.inner,
                out + o * length * s.inner);
  }
  if (r.tracked) {
    r.node->backward = [s, start, length](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* src = self.grad.data() + o * length * s.inner;
        T* dst = gx + (o * s.extent + start) * s.inner;
        for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
      }
    };
  }
  return BasicTensor<T>(r.node);
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

// Halving recursion: a power-of-two count of equal values sums exactly.
template <typename T>
T pairwise_sum(std::span<const T> v) {
  if (v.empty()) return T(0);
  if (v.size() == 1) return v[0];
  const std::size_t h = v.size() / 2;
  return pairwise_sum<T>(v.first(h)) + pairwise_sum<T>(v.subspan(h));
}

}  // namespace

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  auto r = make_result<T>({}, OpKind::sum, {&x});
  r.node->value[0] = pairwise_sum<T>(x.data());
  if (r.tracked) {
    r.node->backward = [](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      const T g = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) gx[i] += g;
    };
  }
  return BasicTensor<T>(r.node);
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  if (x.numel() == 0) throw ContractError("mean of an empty tensor");
  auto r = make_result<T>({}, OpKind::mean, {&x});
  r.node->value[0] = pairwise_sum<T>(x.data()) / T(x.numel());
  if (r.tracked) {
    r.node->backward = [](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      const std::size_t n = self.parents[0]->value.size();
      const T g = self.grad[0] / T(n);
      for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    };
  }
  return BasicTensor<T>(r.node);
}

template <typename T>
BasicTensor<T> pick(const BasicTensor<T>& x, std::span<const std::size_t> labels) {
  if (x.rank() != 2 || x.dim(0) != labels.size()) {
    throw DimensionError("pick expects [B, C] with B = " + std::to_string(labels.size()) +
                         ", got " + shape_str(x.shape()));
  }
  const std::size_t c = x.dim(1);
  for (std::size_t l : labels) {
    if (l >= c) {
      throw IndexError("pick label " + std::to_string(l) + " out of range [0, " +
                       std::to_string(c) + ")");
    }
  }
  auto r = make_result<T>({labels.size()}, OpKind::pick, {&x});
  for (std::size_t i = 0; i < labels.size(); ++i) r.node->value[i] = x.data()[i * c + labels[i]];
  if (r.tracked) {
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    r.node->backward = [lab = std::move(lab), c](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      for (std::size_t i = 0; i < lab.size(); ++i) gx[i * c + lab[i]] += self.grad[i];
    };
  }
  return BasicTensor<T>(r.node);
}

template <typename T>
BasicTensor<T> l2_normalize(const BasicTensor<T>& x, T eps) {
  if (x.rank() == 0) throw DimensionError("l2_normalize on a scalar");
  const std::size_t d = x.shape().back();
  const std::size_t rows = d == 0 ? 0 : x.numel() / d;
  auto r = make_result<T>(x.shape(), OpKind::l2_normalize, {&x});
  auto norms = std::make_shared<std::vector<T>>(rows);
  const T* in = x.data().data();
  T* out = r.node->value.data();
  for (std::size_t row = 0; row < rows; ++row) {
    T sq = 0;
    for (std::size_t i = 0; i < d; ++i) sq += in[row * d + i] * in[row * d + i];
    const T norm = std::sqrt(sq + eps);
    (*norms)[row] = norm;
    for (std::size_t i = 0; i < d; ++i) out[row * d + i] = in[row * d + i] / norm;
  }
  if (r.tracked) {
    r.node->backward = [rows, d, norms](Node<T>& self) {
      T* gx = parent_grad(self, 0);
      if (!gx) return;
      const T* y = self.value.data();
      const T* gy = self.grad.data();
      for (std::size_t row = 0; row < rows; ++row) {
        T dot = 0;
        for (std::size_t i = 0; i < d; ++i) dot += gy[row * d + i] * y[row * d + i];
        const T inv = T(1) / (*norms)[row];
        for (std::size_t i = 0; i < d; ++i) {
          gx[row * d + i] += (gy[row * d + i] - y[row * d + i] * dot) * inv;
        }
      }
    };
  }
  return BasicTensor<T>(r.node);
}

// ---------------------------------------------------------------------------
// backward

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward on a loss that does not require grad");
  }
  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* node : order) {
    if (node->backward) node->grad.assign(node->value.size(), T(0));
  }
  loss.node().grad_buffer()[0] += T(1);
  const std::optional<OpKind> fault = injected_backward_fault();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& node = **it;
    if (!node.backward) continue;
    const bool flip = fault && *fault == node.op;
    if (flip) {
      for (T& g : node.grad) g = -g;
    }
    node.backward(node);
    if (flip) {
      for (T& g : node.grad) g = -g;
    }
  }
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define TURBO_INSTANTIATE(T)                                                                 \
  template class BasicTensor<T>;                                                             \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                   \
  template BasicTensor<T> neg(const BasicTensor<T>&);                                        \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                       \
  template BasicTensor<T> exp(const BasicTensor<T>&);                                        \
  template BasicTensor<T> log(const BasicTensor<T>&);                                        \
  template BasicTensor<T> sqrt(const BasicTensor<T>&);                                       \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                       \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&, std::size_t);                   \
  template BasicTensor<T> layernorm(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                    const BasicTensor<T>&, T);                               \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&, std::span<const std::size_t>);  \
  template BasicTensor<T> gather_rows(const BasicTensor<T>&,                                 \
                                      const std::vector<std::vector<std::size_t>>&);         \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                             \
  template BasicTensor<T> permute(const BasicTensor<T>&, const std::vector<std::size_t>&);   \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                  \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);           \
  template BasicTensor<T> narrow(const BasicTensor<T>&, std::size_t, std::size_t,            \
                                 std::size_t);                                               \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                        \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                       \
  template BasicTensor<T> pick(const BasicTensor<T>&, std::span<const std::size_t>);         \
  template BasicTensor<T> l2_normalize(const BasicTensor<T>&, T);                            \
  template void backward(const BasicTensor<T>&);

TURBO_INSTANTIATE(float)
TURBO_INSTANTIATE(double)

#undef TURBO_INSTANTIATE

}  // namespace turbo

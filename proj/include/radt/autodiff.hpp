#pragma once

// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Tape records every operation whose inputs require gradients. Var is a
// lightweight handle (tape pointer + node id). Tapes are meant to live for a
// single training step: build the graph, call backward(), read gradients,
// drop the tape.

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "radt/tensor.hpp"

namespace radt {

template <class T>
class Tape;
template <class T>
class Gradients;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Tensor<T>& value() const { return tape->value(id); }
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] bool requires_grad() const { return tape->requires_grad(id); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape().at(i); }
};

/// Per-node gradient accumulators used while running backward.
template <class T>
class GradSink {
 public:
  explicit GradSink(const Tape<T>& tape) : tape_(tape), grads_(tape.size()) {}

  /// Accumulator for node `id`, or nullptr when that node needs no gradient.
  Tensor<T>* acc(std::size_t id) {
    if (!tape_.requires_grad(id)) return nullptr;
    auto& g = grads_[id];
    if (g.empty()) g = Tensor<T>::zeros(tape_.value(id).shape());
    return &g;
  }

  std::vector<Tensor<T>>& raw() { return grads_; }

 private:
  const Tape<T>& tape_;
  std::vector<Tensor<T>> grads_;
};

template <class T>
class Tape {
 public:
  // Called with the node's own value, its incoming gradient and the sink.
  using Backward =
      std::function<void(const Tensor<T>& out, const Tensor<T>& grad_out, GradSink<T>& sink)>;

  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> parents;
    Backward backward;
    bool requires_grad = false;
    bool leaf = true;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, {}, requires_grad, true});
    return {this, nodes_.size() - 1};
  }
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Records a derived node. The backward closure is dropped when no parent
  /// requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, Backward bw) {
    return record(std::move(value), std::vector<Var<T>>(parents), std::move(bw));
  }
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& parents, Backward bw) {
    Node n;
    n.value = std::move(value);
    n.leaf = false;
    for (const auto& p : parents) {
      if (p.tape != this) throw Error("autodiff: operands belong to different tapes");
      n.parents.push_back(p.id);
      n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  [[nodiscard]] const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  [[nodiscard]] const std::vector<std::size_t>& parents(std::size_t id) const {
    return nodes_.at(id).parents;
  }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Runs reverse accumulation from a scalar node. The tape is not modified,
  /// so repeated calls give identical results.
  Gradients<T> backward(Var<T> loss) const;

 private:
  std::vector<Node> nodes_;
};

template <class T>
class Gradients {
 public:
  Gradients(const Tape<T>& tape, std::vector<Tensor<T>> g) : tape_(&tape), grads_(std::move(g)) {}

  /// Gradient for `v`; zeros when `v` was not reached from the loss.
  [[nodiscard]] Tensor<T> of(Var<T> v) const {
    const auto& g = grads_.at(v.id);
    if (g.empty()) return Tensor<T>::zeros(tape_->value(v.id).shape());
    return g;
  }
  [[nodiscard]] bool reached(Var<T> v) const { return !grads_.at(v.id).empty(); }

 private:
  const Tape<T>* tape_;
  std::vector<Tensor<T>> grads_;
};

template <class T>
Gradients<T> Tape<T>::backward(Var<T> loss) const {
  if (loss.tape != this) throw Error("backward: loss node is not on this tape");
  const auto& lv = value(loss.id);
  if (lv.size() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(lv.shape()));
  GradSink<T> sink(*this);
  if (!requires_grad(loss.id)) return Gradients<T>(*this, std::move(sink.raw()));
  sink.acc(loss.id)->fill(T{1});
  auto& grads = sink.raw();
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (grads[id].empty() || !n.backward) continue;
    n.backward(n.value, grads[id], sink);
    if (!n.leaf) grads[id] = Tensor<T>{};  // intermediate gradient no longer needed
  }
  return Gradients<T>(*this, std::move(grads));
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<long>(tail.size()));
}

template <class T>
void accumulate(Tensor<T>* acc, const Tensor<T>& g, T factor = T{1}) {
  if (!acc) return;
  for (std::size_t i = 0; i < g.size(); ++i) (*acc)[i] += factor * g[i];
}

// Adds `g` (full shape) folded onto a suffix-shaped accumulator.
template <class T>
void accumulate_folded(Tensor<T>* acc, const Tensor<T>& g, T factor = T{1}) {
  if (!acc) return;
  const std::size_t m = acc->size();
  for (std::size_t i = 0; i < g.size(); ++i) (*acc)[i % m] += factor * g[i];
}

}  // namespace detail

/// Elementwise a + b. `b` may have a shape equal to a trailing suffix of
/// `a`'s shape, in which case it is broadcast over the leading axes.
template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape() && detail::is_suffix(b.shape(), a.shape())) std::swap(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!detail::is_suffix(av.shape(), bv.shape())) shape_fail("add", av.shape(), bv.shape());
  Tensor<T> out = av;
  const std::size_t m = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % m];
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    detail::accumulate(s.acc(a.id), g);
    detail::accumulate_folded(s.acc(b.id), g);
  });
}

/// Elementwise a - b with the same broadcasting rule as add (b may be a suffix).
template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!detail::is_suffix(av.shape(), bv.shape())) shape_fail("sub", av.shape(), bv.shape());
  Tensor<T> out = av;
  const std::size_t m = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i % m];
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    detail::accumulate(s.acc(a.id), g);
    detail::accumulate_folded(s.acc(b.id), g, T{-1});
  });
}

/// Elementwise product; b may be a suffix-shaped broadcast operand.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape() && detail::is_suffix(b.shape(), a.shape())) std::swap(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!detail::is_suffix(av.shape(), bv.shape())) shape_fail("mul", av.shape(), bv.shape());
  Tensor<T> out = av;
  const std::size_t m = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i % m];
  return a.tape->record(std::move(out), {a, b}, [a, b](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    const auto& av = a.value();
    const auto& bv = b.value();
    const std::size_t m = bv.size();
    if (auto* ga = s.acc(a.id))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i % m];
    if (auto* gb = s.acc(b.id))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % m] += g[i] * av[i];
  });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x *= factor;
  return a.tape->record(std::move(out), {a}, [a, factor](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    detail::accumulate(s.acc(a.id), g, factor);
  });
}

template <class T>
Var<T> add_scalar(Var<T> a, T c) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x += c;
  return a.tape->record(std::move(out), {a}, [a](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    detail::accumulate(s.acc(a.id), g);
  });
}

template <class T>
Var<T> square(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x *= x;
  return a.tape->record(std::move(out), {a}, [a](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    if (auto* ga = s.acc(a.id)) {
      const auto& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += T{2} * av[i] * g[i];
    }
  });
}

/// Copy of the value with no gradient path.
template <class T>
Var<T> detach(Var<T> a) {
  return a.tape->constant(a.value());
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape->record(std::move(out), {a}, [a](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    detail::accumulate(s.acc(a.id), g);
  });
}

template <class T>
Var<T> permute(Var<T> a, std::vector<std::size_t> perm) {
  Tensor<T> out = kernel::permute(a.value(), perm);
  return a.tape->record(std::move(out), {a}, [a, perm](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    if (auto* ga = s.acc(a.id)) detail::accumulate(ga, kernel::permute(g, kernel::inverse_permutation(perm)));
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  if (a.value().rank() != 2) throw ShapeError("transpose: expects a matrix, got " + to_string(a.shape()));
  return permute(a, {1, 0});
}

/// Matrix product of (M,K) and (K,N).
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    shape_fail("matmul", av.shape(), bv.shape());
  const std::size_t M = av.dim(0), K = av.dim(1), N = bv.dim(1);
  Tensor<T> out({M, N});
  kernel::gemm_nn(M, N, K, av.data(), bv.data(), out.data());
  return a.tape->record(std::move(out), {a, b}, [a, b, M, N, K](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    if (auto* ga = s.acc(a.id)) kernel::gemm_nt(M, K, N, g.data(), b.value().data(), ga->data());
    if (auto* gb = s.acc(b.id)) kernel::gemm_tn(K, N, M, a.value().data(), g.data(), gb->data());
  });
}

/// x (..., K) times W (K, N) -> (..., N).
template <class T>
Var<T> linear(Var<T> x, Var<T> w) {
  const auto& xs = x.shape();
  if (w.value().rank() != 2 || xs.empty() || xs.back() != w.dim(0)) shape_fail("linear", xs, w.shape());
  const std::size_t rows = x.value().size() / xs.back();
  Shape os = xs;
  os.back() = w.dim(1);
  return reshape(matmul(reshape(x, {rows, xs.back()}), w), os);
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  return add(linear(x, w), bias);
}

namespace detail {
inline std::size_t batch_count(const Shape& a, const Shape& b, const char* op) {
  if (a.size() < 2 || a.size() != b.size() ||
      !std::equal(a.begin(), a.end() - 2, b.begin()))
    shape_fail(op, a, b);
  std::size_t n = 1;
  for (std::size_t i = 0; i + 2 < a.size(); ++i) n *= a[i];
  return n;
}
}  // namespace detail

/// Batched product: (..., M, K) x (..., K, N) -> (..., M, N).
template <class T>
Var<T> bmm(Var<T> a, Var<T> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const std::size_t nb = detail::batch_count(as, bs, "bmm");
  const std::size_t M = as[as.size() - 2], K = as.back(), N = bs.back();
  if (bs[bs.size() - 2] != K) shape_fail("bmm", as, bs);
  Shape os = as;
  os.back() = N;
  Tensor<T> out(os);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < nb; ++i)
    kernel::gemm_nn(M, N, K, av.data() + i * M * K, bv.data() + i * K * N, out.data() + i * M * N);
  return a.tape->record(std::move(out), {a, b}, [a, b, nb, M, N, K](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    auto* ga = s.acc(a.id);
    auto* gb = s.acc(b.id);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < nb; ++i) {
      if (ga) kernel::gemm_nt(M, K, N, g.data() + i * M * N, bv.data() + i * K * N, ga->data() + i * M * K);
      if (gb) kernel::gemm_tn(K, N, M, av.data() + i * M * K, g.data() + i * M * N, gb->data() + i * K * N);
    }
  });
}

/// Batched a * b^T: (..., M, K) x (..., N, K) -> (..., M, N).
template <class T>
Var<T> bmm_nt(Var<T> a, Var<T> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const std::size_t nb = detail::batch_count(as, bs, "bmm_nt");
  const std::size_t M = as[as.size() - 2], K = as.back(), N = bs[bs.size() - 2];
  if (bs.back() != K) shape_fail("bmm_nt", as, bs);
  Shape os = as;
  os.back() = N;
  Tensor<T> out(os);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < nb; ++i)
    kernel::gemm_nt(M, N, K, av.data() + i * M * K, bv.data() + i * N * K, out.data() + i * M * N);
  return a.tape->record(std::move(out), {a, b}, [a, b, nb, M, N, K](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    auto* ga = s.acc(a.id);
    auto* gb = s.acc(b.id);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < nb; ++i) {
      // dA = G B, dB = G^T A
      if (ga) kernel::gemm_nn(M, K, N, g.data() + i * M * N, bv.data() + i * N * K, ga->data() + i * M * K);
      if (gb) kernel::gemm_tn(N, K, M, g.data() + i * M * N, av.data() + i * M * K, gb->data() + i * N * K);
    }
  });
}

/// Sum of all elements, shape {1}.
template <class T>
Var<T> sum(Var<T> a) {
  T acc{0};
  for (auto x : a.value().values()) acc += x;
  return a.tape->record(Tensor<T>::scalar(acc), {a}, [a](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    if (auto* ga = s.acc(a.id))
      for (auto& x : ga->values()) x += g[0];
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T{1} / static_cast<T>(a.value().size()));
}

/// Sum over one axis; the axis is removed from the shape (rank-1 input gives {1}).
template <class T>
Var<T> sum_axis(Var<T> a, std::size_t axis) {
  const auto& as = a.shape();
  if (axis >= as.size())
    throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for " + to_string(as));
  const auto sp = kernel::split_at(as, axis);
  Shape os;
  for (std::size_t i = 0; i < as.size(); ++i)
    if (i != axis) os.push_back(as[i]);
  if (os.empty()) os.push_back(1);
  Tensor<T> out(os);
  const auto& av = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.extent; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += av[(o * sp.extent + k) * sp.inner + i];
  return a.tape->record(std::move(out), {a}, [a, sp](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    if (auto* ga = s.acc(a.id))
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t k = 0; k < sp.extent; ++k)
          for (std::size_t i = 0; i < sp.inner; ++i)
            (*ga)[(o * sp.extent + k) * sp.inner + i] += g[o * sp.inner + i];
  });
}

template <class T>
Var<T> mean_axis(Var<T> a, std::size_t axis) {
  if (axis >= a.shape().size()) throw ShapeError("mean_axis: axis out of range for " + to_string(a.shape()));
  return scale(sum_axis(a, axis), T{1} / static_cast<T>(a.shape()[axis]));
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Shape os = parts[0].shape();
  if (axis >= os.size()) throw ShapeError("concat: axis out of range for " + to_string(os));
  std::vector<std::size_t> extents;
  os[axis] = 0;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    Shape ref = parts[0].shape();
    if (ps.size() != ref.size()) shape_fail("concat", ref, ps);
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (i != axis && ps[i] != ref[i]) shape_fail("concat", ref, ps);
    extents.push_back(ps[axis]);
    os[axis] += ps[axis];
  }
  const auto sp = kernel::split_at(os, axis);
  Tensor<T> out(os);
  std::size_t base = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& pv = parts[p].value();
    const std::size_t e = extents[p];
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(pv.data() + o * e * sp.inner, e * sp.inner, out.data() + (o * sp.extent + base) * sp.inner);
    base += e;
  }
  return parts[0].tape->record(std::move(out), parts, [parts, extents, sp](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    std::size_t base = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::size_t e = extents[p];
      if (auto* gp = s.acc(parts[p].id))
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t j = 0; j < e * sp.inner; ++j)
            (*gp)[o * e * sp.inner + j] += g[(o * sp.extent + base) * sp.inner + j];
      base += e;
    }
  });
}

/// Elements [begin, end) along `axis`.
template <class T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& as = a.shape();
  if (axis >= as.size() || begin >= end || end > as[axis])
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid on axis " + std::to_string(axis) + " of " + to_string(as));
  const auto sp = kernel::split_at(as, axis);
  Shape os = as;
  os[axis] = end - begin;
  const std::size_t e = end - begin;
  Tensor<T> out(os);
  const auto& av = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(av.data() + (o * sp.extent + begin) * sp.inner, e * sp.inner, out.data() + o * e * sp.inner);
  return a.tape->record(std::move(out), {a}, [a, sp, begin, e](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    if (auto* ga = s.acc(a.id))
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t j = 0; j < e * sp.inner; ++j)
          (*ga)[(o * sp.extent + begin) * sp.inner + j] += g[o * e * sp.inner + j];
  });
}

/// Gathers rows of `x` viewed as (rows, inner): out[r] = x[index[r]].
/// Rows may repeat; the backward pass scatter-adds.
template <class T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> index, Shape out_shape) {
  const auto& xv = x.value();
  const std::size_t rows = xv.dim(0);
  const std::size_t inner = xv.size() / rows;
  if (numel(out_shape) != index.size() * inner)
    throw ShapeError("gather_rows: output shape " + to_string(out_shape) + " does not hold " +
                     std::to_string(index.size()) + " rows of " + std::to_string(inner));
  Tensor<T> out(out_shape);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(xv.data() + index[r] * inner, inner, out.data() + r * inner);
  }
  return x.tape->record(std::move(out), {x}, [x, index, inner](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    if (auto* gx = s.acc(x.id))
      for (std::size_t r = 0; r < index.size(); ++r)
        for (std::size_t j = 0; j < inner; ++j) (*gx)[index[r] * inner + j] += g[r * inner + j];
  });
}

/// Numerically stable softmax along `axis` (max-subtracted).
template <class T>
Var<T> softmax(Var<T> a, std::size_t axis) {
  const auto& as = a.shape();
  if (axis >= as.size())
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + to_string(as));
  const auto sp = kernel::split_at(as, axis);
  const auto& av = a.value();
  Tensor<T> out(as);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < sp.extent; ++k) mx = std::max(mx, av[base + k * sp.inner]);
      T z{0};
      for (std::size_t k = 0; k < sp.extent; ++k) {
        const T e = std::exp(av[base + k * sp.inner] - mx);
        out[base + k * sp.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < sp.extent; ++k) out[base + k * sp.inner] /= z;
    }
  return a.tape->record(std::move(out), {a}, [a, sp](const Tensor<T>& y, const Tensor<T>& g, GradSink<T>& s) {
    auto* ga = s.acc(a.id);
    if (!ga) return;
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.extent * sp.inner + i;
        T dot{0};
        for (std::size_t k = 0; k < sp.extent; ++k) dot += g[base + k * sp.inner] * y[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.extent; ++k) {
          const std::size_t j = base + k * sp.inner;
          (*ga)[j] += y[j] * (g[j] - dot);
        }
      }
  });
}

}  // namespace radt

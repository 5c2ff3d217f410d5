#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "radt/autodiff.hpp"

namespace radt {

/// Layer normalization over the last axis with affine gamma/beta.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  if (!(eps > T{0})) throw Error("layer_norm: eps must be positive");
  const auto& xs = x.shape();
  const std::size_t D = xs.back();
  if (gamma.shape() != Shape{D} || beta.shape() != Shape{D})
    shape_fail("layer_norm", xs, gamma.shape() != Shape{D} ? gamma.shape() : beta.shape());
  const std::size_t rows = x.value().size() / D;
  auto xhat = std::make_shared<std::vector<T>>(x.value().size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> out(xs);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * D;
    T mu{0};
    for (std::size_t j = 0; j < D; ++j) mu += row[j];
    mu /= static_cast<T>(D);
    T var{0};
    for (std::size_t j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(D);
    const T rs = T{1} / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < D; ++j) {
      const T h = (row[j] - mu) * rs;
      (*xhat)[r * D + j] = h;
      out[r * D + j] = gv[j] * h + bv[j];
    }
  }
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, rstd, rows, D](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
        const auto& gv = gamma.value();
        auto* gx = s.acc(x.id);
        auto* gg = s.acc(gamma.id);
        auto* gb = s.acc(beta.id);
        const auto& h = *xhat;
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g.data() + r * D;
          const T* hr = h.data() + r * D;
          if (gg)
            for (std::size_t j = 0; j < D; ++j) (*gg)[j] += gr[j] * hr[j];
          if (gb)
            for (std::size_t j = 0; j < D; ++j) (*gb)[j] += gr[j];
          if (gx) {
            T mean_dh{0}, mean_dh_h{0};
            for (std::size_t j = 0; j < D; ++j) {
              const T dh = gr[j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * hr[j];
            }
            mean_dh /= static_cast<T>(D);
            mean_dh_h /= static_cast<T>(D);
            const T rs = (*rstd)[r];
            for (std::size_t j = 0; j < D; ++j)
              (*gx)[r * D + j] += rs * (gr[j] * gv[j] - mean_dh - hr[j] * mean_dh_h);
          }
        }
      });
}

// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
inline constexpr double kGeluCubic = 0.044715;

template <class T>
T gelu_value(T x) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  return T{0.5} * x * (T{1} + std::tanh(c * (x + static_cast<T>(kGeluCubic) * x * x * x)));
}

template <class T>
Var<T> gelu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = gelu_value(v);
  return a.tape->record(std::move(out), {a}, [a](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
    auto* ga = s.acc(a.id);
    if (!ga) return;
    const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    const T k = static_cast<T>(kGeluCubic);
    const auto& av = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = av[i];
      const T u = c * (x + k * x * x * x);
      const T t = std::tanh(u);
      const T du = c * (T{1} + T{3} * k * x * x);
      (*ga)[i] += g[i] * (T{0.5} * (T{1} + t) + T{0.5} * x * (T{1} - t * t) * du);
    }
  });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values())
    v = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  return a.tape->record(std::move(out), {a}, [a](const Tensor<T>& y, const Tensor<T>& g, GradSink<T>& s) {
    if (auto* ga = s.acc(a.id))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (T{1} - y[i]);
  });
}

/// log(softmax(x)) along the last axis.
template <class T>
Var<T> log_softmax(Var<T> a) {
  const auto& as = a.shape();
  const std::size_t n = as.back();
  const std::size_t rows = a.value().size() / n;
  const auto& av = a.value();
  Tensor<T> out(as);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * n;
    T mx = *std::max_element(x, x + n);
    T z{0};
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const T lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[j] - lz;
  }
  return a.tape->record(std::move(out), {a}, [a, rows, n](const Tensor<T>& y, const Tensor<T>& g, GradSink<T>& s) {
    auto* ga = s.acc(a.id);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      T gs{0};
      for (std::size_t j = 0; j < n; ++j) gs += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) (*ga)[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * gs;
    }
  });
}

/// Mean categorical cross-entropy of logits (B, n) against class indices.
template <class T>
Var<T> cross_entropy(Var<T> logits, const std::vector<std::size_t>& labels) {
  const auto& ls = logits.shape();
  if (ls.size() != 2 || ls[0] != labels.size())
    throw ShapeError("cross_entropy: logits " + to_string(ls) + " vs " + std::to_string(labels.size()) +
                     " labels");
  Tensor<T> onehot({ls[0], ls[1]});
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] >= ls[1]) throw Error("cross_entropy: label index out of range");
    onehot.at(b, labels[b]) = T{1};
  }
  auto picked = sum(mul(log_softmax(logits), logits.tape->constant(std::move(onehot))));
  return scale(picked, T{-1} / static_cast<T>(labels.size()));
}

}  // namespace radt

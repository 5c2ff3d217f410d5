#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "radt/tensor.hpp"

namespace radt {

/// Bias-corrected Adam moments for a list of parameters.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor<float>> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-7;
};

/// One Adam update over `params` in place. State moments are lazily sized on
/// the first call.
template <class T>
void adam_step(std::vector<Tensor<T>*> params, const std::vector<Tensor<T>>& grads, AdamState& st,
               double lr) {
  if (!(lr > 0.0)) throw Error("adam_step: learning rate must be positive");
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.push_back(Tensor<float>::zeros(p->shape()));
      st.v.push_back(Tensor<float>::zeros(p->shape()));
    }
  }
  if (st.m.size() != params.size()) throw ShapeError("adam_step: state tracks a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) shape_fail("adam_step", params[i]->shape(), grads[i].shape());
    if (st.m[i].shape() != params[i]->shape()) shape_fail("adam_step(state)", st.m[i].shape(), params[i]->shape());
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = st.beta1 * m[k] + (1.0 - st.beta1) * gk;
      const double vk = st.beta2 * v[k] + (1.0 - st.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double mhat = mk / c1;
      const double vhat = vk / c2;
      p[k] = static_cast<T>(static_cast<double>(p[k]) - lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

/// lr(step) = initial_lr * decay_rate^(step / decay_steps), continuous exponent.
struct LrSchedule {
  double initial_lr = 1e-2;
  std::uint64_t decay_steps = 100000;
  double decay_rate = 0.2;

  void validate() const {
    if (!(initial_lr > 0.0)) throw Error("LrSchedule: initial_lr must be positive");
    if (decay_steps == 0) throw Error("LrSchedule: decay_steps must be positive");
    if (!(decay_rate > 0.0 && decay_rate < 1.0)) throw Error("LrSchedule: decay_rate must lie in (0,1)");
  }
};

inline double lr_at(const LrSchedule& s, std::uint64_t step) {
  const double lr =
      s.initial_lr * std::pow(s.decay_rate, static_cast<double>(step) / static_cast<double>(s.decay_steps));
  return std::max(lr, std::numeric_limits<double>::min());  // stays positive past underflow
}

}  // namespace radt

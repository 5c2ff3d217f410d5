#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "radt/autodiff.hpp"
#include "radt/rng.hpp"

namespace radt {

/// Puts parameter tensors on a tape, once each. Parameters are identified by
/// address, so a module's tensors must outlive the binder.
template <class T>
class Binder {
 public:
  Binder(Tape<T>& tape, bool trainable) : tape_(&tape), trainable_(trainable) {}

  Var<T> operator()(const Tensor<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    Var<T> v = tape_->leaf(p, trainable_);
    bound_.emplace(&p, v);
    return v;
  }

  /// Gradient of a bound parameter (zeros when never bound or unreached).
  [[nodiscard]] Tensor<T> grad(const Gradients<T>& g, const Tensor<T>& p) const {
    auto it = bound_.find(&p);
    if (it == bound_.end()) return Tensor<T>::zeros(p.shape());
    return g.of(it->second);
  }

  [[nodiscard]] Tape<T>& tape() const { return *tape_; }
  [[nodiscard]] bool trainable() const { return trainable_; }

 private:
  Tape<T>* tape_;
  bool trainable_;
  std::unordered_map<const Tensor<T>*, Var<T>> bound_;
};

/// Named reference to a parameter tensor, as produced by a module's visit().
template <class T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
};

template <class T, class Module>
std::vector<NamedParam<T>> collect_params(Module& m, const std::string& prefix) {
  std::vector<NamedParam<T>> out;
  m.visit(prefix, [&](const std::string& name, Tensor<T>& t) { out.push_back({name, &t}); });
  return out;
}

template <class T>
Tensor<T> init_truncated_normal(Shape s, CounterRng& rng, double stddev = 0.02) {
  Tensor<T> t(std::move(s));
  for (auto& x : t.values()) x = static_cast<T>(rng.truncated_normal(stddev));
  return t;
}

}  // namespace radt

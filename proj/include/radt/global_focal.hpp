#pragma once

// Global-focal network: a 4-block focal pathway and a 2-block global pathway
// run side by side and are fused twice by weighted addition (TWL), each fused
// output optionally smoothed by a running batch-mean (SEMA).
//
//   z_in  = l_in.g  * g0(x_g)    + l_in.f  * f1(f0(x_f))
//   z_out = l_out.g * g1(z_in)   + l_out.f * f3(f2(z_in))

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "radt/attention.hpp"

namespace radt {

/// Fusion weights for one TWL connection: global term first, focal second.
struct TwlWeights {
  double global = 0.5;
  double focal = 0.5;
  friend bool operator==(const TwlWeights&, const TwlWeights&) = default;
};

struct GlobalFocalConfig {
  std::size_t dim = 32;
  std::size_t window = 4;
  std::size_t patch = 8;
  std::size_t channels = 1;
  std::array<BlockConfig, 4> focal{};
  std::array<BlockConfig, 2> global{};
  TwlWeights lambda_in{};
  TwlWeights lambda_out{};

  /// Block schedule of the architecture: focal shifts {0,1,2,3}, heads
  /// {2,4,4,8}, MLP widths {64,128,128,256}; global shifts {0,1}, heads
  /// {4,8}, MLP widths {128,256}.
  static GlobalFocalConfig standard(std::size_t dim = 32, std::size_t window = 4, std::size_t patch = 8,
                                    std::size_t channels = 1) {
    GlobalFocalConfig c;
    c.dim = dim;
    c.window = window;
    c.patch = patch;
    c.channels = channels;
    constexpr std::array<std::size_t, 4> fh{2, 4, 4, 8}, fm{64, 128, 128, 256};
    constexpr std::array<std::size_t, 2> gh{4, 8}, gm{128, 256};
    for (std::size_t i = 0; i < 4; ++i) c.focal[i] = BlockConfig{dim, fh[i], fm[i], window, i};
    for (std::size_t j = 0; j < 2; ++j) c.global[j] = BlockConfig{dim, gh[j], gm[j], window, j};
    return c;
  }

  void validate() const {
    for (std::size_t i = 0; i < 4; ++i) {
      if (focal[i].shift != i) throw Error("GlobalFocalConfig: focal shift schedule must be {0,1,2,3}");
      if (focal[i].dim != dim || focal[i].window != window)
        throw Error("GlobalFocalConfig: focal block " + std::to_string(i) + " disagrees on dim/window");
      focal[i].validate();
    }
    for (std::size_t j = 0; j < 2; ++j) {
      if (global[j].shift != j) throw Error("GlobalFocalConfig: global shift schedule must be {0,1}");
      if (global[j].dim != dim || global[j].window != window)
        throw Error("GlobalFocalConfig: global block " + std::to_string(j) + " disagrees on dim/window");
      global[j].validate();
    }
    for (double l : {lambda_in.global, lambda_in.focal, lambda_out.global, lambda_out.focal})
      if (!std::isfinite(l)) throw Error("GlobalFocalConfig: TWL weights must be finite");
    if (patch == 0 || channels == 0) throw Error("GlobalFocalConfig: patch and channels must be positive");
  }
};

// ---------------------------------------------------------------------------
// TWL and SEMA
// ---------------------------------------------------------------------------

/// l1 * g + l2 * f, elementwise.
template <class T>
TokenGrid<T> twl_combine(const TokenGrid<T>& g, const TokenGrid<T>& f, double l1, double l2) {
  if (g.tokens.shape() != f.tokens.shape() || g.height != f.height || g.width != f.width)
    shape_fail("twl_combine", g.tokens.shape(), f.tokens.shape());
  return {add(scale(g.tokens, static_cast<T>(l1)), scale(f.tokens, static_cast<T>(l2))), g.height, g.width};
}

/// Smoothing decay for a batch of N samples: 1 - 1/N.
inline double sema_decay(std::size_t n) {
  if (n < 1) throw Error("sema_decay: batch size must be at least 1");
  return 1.0 - 1.0 / static_cast<double>(n);
}

template <class T>
struct SemaState {
  Tensor<T> smoothed;  // running smoothed batch mean, (tokens, D)
  bool initialized = false;
};

/// Replaces the batch mean of z with its running smoothed value:
///   v = mean_batch(z);  s = d * s_prev + (1 - d) * v;  out = z - v + s
/// s_prev is a constant on the tape. The first call seeds s_prev = v.
template <class T>
TokenGrid<T> sema_update_decay(SemaState<T>& state, const TokenGrid<T>& z, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw Error("sema_update: decay must lie in [0,1)");
  auto& tape = *z.tokens.tape;
  auto v = mean_axis(z.tokens, 0);
  if (!state.initialized) {
    state.smoothed = v.value();
    state.initialized = true;
  } else if (state.smoothed.shape() != v.shape()) {
    shape_fail("sema_update", state.smoothed.shape(), v.shape());
  }
  const auto d = static_cast<T>(decay);
  auto s = add(scale(tape.constant(state.smoothed), d), scale(v, T{1} - d));
  state.smoothed = s.value();
  return {add(sub(z.tokens, v), s), z.height, z.width};
}

template <class T>
TokenGrid<T> sema_update(SemaState<T>& state, const TokenGrid<T>& z, std::size_t n) {
  return sema_update_decay(state, z, sema_decay(n));
}

template <class T>
TokenGrid<T> sema_update(SemaState<T>& state, const TokenGrid<T>& z) {
  return sema_update(state, z, z.batch());
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

template <class T>
struct FocalTaps {
  TokenGrid<T> f1, f3;
};
template <class T>
struct GlobalTaps {
  TokenGrid<T> g0, g1;
};
template <class T>
struct NetworkOutput {
  TokenGrid<T> z_in, z_out;
};

template <class T>
class GlobalFocalNet {
 public:
  GlobalFocalNet() = default;
  GlobalFocalNet(const GlobalFocalConfig& cfg, CounterRng rng) : cfg_(cfg) {
    cfg_.validate();
    embed_ = PatchEmbedParams<T>(cfg.patch, cfg.channels, cfg.dim, rng);
    for (std::size_t i = 0; i < 4; ++i) focal_[i] = SwinBlockParams<T>(cfg.focal[i], rng);
    for (std::size_t j = 0; j < 2; ++j) global_[j] = SwinBlockParams<T>(cfg.global[j], rng);
  }

  [[nodiscard]] const GlobalFocalConfig& config() const { return cfg_; }
  GlobalFocalConfig& mutable_config() { return cfg_; }

  TokenGrid<T> embed(Binder<T>& bind, const Tensor<T>& images) const {
    return patch_embed(bind, embed_, images);
  }

  TokenGrid<T> focal_block(Binder<T>& bind, std::size_t i, const TokenGrid<T>& x) const {
    return swin_block(bind, focal_[i], x, cfg_.focal[i]);
  }
  TokenGrid<T> global_block(Binder<T>& bind, std::size_t j, const TokenGrid<T>& x) const {
    return swin_block(bind, global_[j], x, cfg_.global[j]);
  }

  /// Focal blocks in series f0 -> f1 -> f2 -> f3, tapped after f1 and f3.
  FocalTaps<T> focal_forward(Binder<T>& bind, const TokenGrid<T>& x) const {
    auto f1 = focal_block(bind, 1, focal_block(bind, 0, x));
    auto f3 = focal_block(bind, 3, focal_block(bind, 2, f1));
    return {f1, f3};
  }

  /// Global blocks in series g0 -> g1.
  GlobalTaps<T> global_forward(Binder<T>& bind, const TokenGrid<T>& x) const {
    auto g0 = global_block(bind, 0, x);
    return {g0, global_block(bind, 1, g0)};
  }

  /// Intermediate fusion; `x_global` / `x_focal` may be different views of the
  /// same images. SEMA is applied and its state advanced only when `train`.
  TokenGrid<T> stage_in(Binder<T>& bind, const TokenGrid<T>& x_global, const TokenGrid<T>& x_focal, bool train) {
    auto z = fuse(
        bind, cfg_.lambda_in, [&] { return global_block(bind, 0, x_global); },
        [&] { return focal_block(bind, 1, focal_block(bind, 0, x_focal)); });
    return train ? sema_update(sema_in_, z) : z;
  }

  TokenGrid<T> stage_out(Binder<T>& bind, const TokenGrid<T>& z_in, bool train) {
    auto z = fuse(
        bind, cfg_.lambda_out, [&] { return global_block(bind, 1, z_in); },
        [&] { return focal_block(bind, 3, focal_block(bind, 2, z_in)); });
    return train ? sema_update(sema_out_, z) : z;
  }

  NetworkOutput<T> forward(Binder<T>& bind, const TokenGrid<T>& x_global, const TokenGrid<T>& x_focal,
                           bool train) {
    auto z_in = stage_in(bind, x_global, x_focal, train);
    return {z_in, stage_out(bind, z_in, train)};
  }

  NetworkOutput<T> forward(Binder<T>& bind, const TokenGrid<T>& x, bool train) {
    return forward(bind, x, x, train);
  }

  /// Eval-mode forward; const because no state is touched.
  NetworkOutput<T> evaluate(Binder<T>& bind, const TokenGrid<T>& x) const {
    return const_cast<GlobalFocalNet&>(*this).forward(bind, x, x, false);
  }

  SwinBlockParams<T>& focal_params(std::size_t i) { return focal_.at(i); }
  SwinBlockParams<T>& global_params(std::size_t j) { return global_.at(j); }

  [[nodiscard]] const SemaState<T>& sema_in() const { return sema_in_; }
  [[nodiscard]] const SemaState<T>& sema_out() const { return sema_out_; }
  SemaState<T>& sema_in() { return sema_in_; }
  SemaState<T>& sema_out() { return sema_out_; }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    embed_.visit(prefix + ".embed", f);
    for (std::size_t i = 0; i < 4; ++i) focal_[i].visit(prefix + ".focal." + std::to_string(i), f);
    for (std::size_t j = 0; j < 2; ++j) global_[j].visit(prefix + ".global." + std::to_string(j), f);
  }

  template <class F>
  void visit_buffers(const std::string& prefix, F&& f) {
    f(prefix + ".sema_in", sema_in_);
    f(prefix + ".sema_out", sema_out_);
  }

 private:
  // A pathway whose weight is exactly zero is not evaluated at all.
  template <class G, class Fo>
  TokenGrid<T> fuse(Binder<T>&, const TwlWeights& l, G&& global_path, Fo&& focal_path) const {
    if (l.focal == 0.0 && l.global == 0.0)
      throw Error("GlobalFocalNet: both TWL weights are zero");
    if (l.focal == 0.0) {
      auto g = global_path();
      return {scale(g.tokens, static_cast<T>(l.global)), g.height, g.width};
    }
    if (l.global == 0.0) {
      auto f = focal_path();
      return {scale(f.tokens, static_cast<T>(l.focal)), f.height, f.width};
    }
    return twl_combine(global_path(), focal_path(), l.global, l.focal);
  }

  GlobalFocalConfig cfg_{};
  PatchEmbedParams<T> embed_{};
  std::array<SwinBlockParams<T>, 4> focal_{};
  std::array<SwinBlockParams<T>, 2> global_{};
  SemaState<T> sema_in_{}, sema_out_{};
};

}  // namespace radt

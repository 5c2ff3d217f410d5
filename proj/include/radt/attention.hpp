#pragma once

// Shifting-window transformer building blocks.
//
// Token grids are stored as (B, H_t * W_t, D) tensors in raster order. Window
// partitioning and cyclic shifts are row permutations of that layout, so both
// are expressed as gathers on the tape.

#include <cmath>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "radt/functional.hpp"
#include "radt/params.hpp"

namespace radt {

struct BlockConfig {
  std::size_t dim = 32;
  std::size_t att_heads = 2;
  std::size_t mlp_hidden = 64;
  std::size_t window = 4;
  std::size_t shift = 0;

  void validate() const {
    if (dim == 0 || att_heads == 0 || mlp_hidden == 0 || window == 0)
      throw Error("BlockConfig: dim, heads, mlp width and window must be positive");
    if (dim % att_heads != 0)
      throw Error("BlockConfig: dim " + std::to_string(dim) + " is not divisible by " +
                  std::to_string(att_heads) + " attention heads");
    if (shift >= window)
      throw Error("BlockConfig: shift " + std::to_string(shift) + " must be smaller than window " +
                  std::to_string(window));
  }
};

template <class T>
struct TokenGrid {
  Var<T> tokens;  // (B, height * width, D)
  std::size_t height = 0;
  std::size_t width = 0;

  [[nodiscard]] std::size_t batch() const { return tokens.dim(0); }
  [[nodiscard]] std::size_t channels() const { return tokens.dim(2); }
};

// ---------------------------------------------------------------------------
// Index maps
// ---------------------------------------------------------------------------

/// For each row of the window-major layout, the raster token index it holds.
/// Row r = window * w^2 + (i % w) * w + (j % w) with window = (i / w) * (W / w) + j / w.
inline std::vector<std::size_t> partition_index(std::size_t H, std::size_t W, std::size_t w) {
  if (w == 0 || H % w != 0 || W % w != 0)
    throw ShapeError("window_partition: grid " + std::to_string(H) + "x" + std::to_string(W) +
                     " is not divisible by window " + std::to_string(w));
  std::vector<std::size_t> idx(H * W);
  const std::size_t per_row = W / w;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t win = (i / w) * per_row + j / w;
      idx[win * w * w + (i % w) * w + (j % w)] = i * W + j;
    }
  return idx;
}

inline std::size_t wrap(long v, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

/// Source token for each output token of a toroidal roll by (-s, -s):
/// out(i, j) = in((i + s) mod H, (j + s) mod W).
inline std::vector<std::size_t> shift_index(std::size_t H, std::size_t W, long s) {
  std::vector<std::size_t> idx(H * W);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      idx[i * W + j] = wrap(static_cast<long>(i) + s, H) * W + wrap(static_cast<long>(j) + s, W);
  return idx;
}

namespace detail {
// Expands per-image token indices to (batch * tokens) rows.
inline std::vector<std::size_t> batched(const std::vector<std::size_t>& per_image, std::size_t B,
                                        std::size_t tokens) {
  std::vector<std::size_t> out;
  out.reserve(per_image.size() * B);
  for (std::size_t b = 0; b < B; ++b)
    for (auto t : per_image) out.push_back(b * tokens + t);
  return out;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Grid operations
// ---------------------------------------------------------------------------

/// (B, H*W, D) grid -> (B * nW, w*w, D) windows.
template <class T>
Var<T> window_partition(const TokenGrid<T>& g, std::size_t w) {
  const auto idx = partition_index(g.height, g.width, w);
  const std::size_t B = g.batch(), T_ = g.height * g.width, D = g.channels();
  return gather_rows(reshape(g.tokens, {B * T_, D}), detail::batched(idx, B, T_),
                     {B * T_ / (w * w), w * w, D});
}

template <class T>
TokenGrid<T> window_reverse(Var<T> windows, std::size_t H, std::size_t W) {
  const std::size_t L = windows.dim(1), D = windows.dim(2);
  const auto w = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(L))));
  if (w * w != L) throw ShapeError("window_reverse: window length " + std::to_string(L) + " is not square");
  const auto inv = kernel::inverse_permutation(partition_index(H, W, w));
  const std::size_t T_ = H * W;
  const std::size_t rows = windows.dim(0) * L;
  if (rows % T_ != 0) throw ShapeError("window_reverse: window count does not tile the grid");
  const std::size_t B = rows / T_;
  return {gather_rows(reshape(windows, {rows, D}), detail::batched(inv, B, T_), {B, T_, D}), H, W};
}

/// Toroidal roll by (-s, -s); a negative s rolls the other way.
template <class T>
TokenGrid<T> cyclic_shift(const TokenGrid<T>& g, long s) {
  if (s == 0) return g;
  const std::size_t B = g.batch(), T_ = g.height * g.width, D = g.channels();
  const auto idx = shift_index(g.height, g.width, s);
  return {gather_rows(reshape(g.tokens, {B * T_, D}), detail::batched(idx, B, T_), {B, T_, D}), g.height,
          g.width};
}

inline constexpr double kMaskedLogit = -1e9;

/// Additive attention mask, shape (nW, w*w, w*w). Two tokens of a window may
/// attend to each other only if they were neighbours before the roll, i.e.
/// both or neither wrapped around each axis. All zeros when s == 0.
template <class T = float>
Tensor<T> attention_mask(std::size_t H, std::size_t W, std::size_t w, std::size_t s) {
  const auto idx = partition_index(H, W, w);
  const std::size_t L = w * w, nW = H * W / L;
  Tensor<T> mask({nW, L, L});
  if (s == 0) return mask;
  auto region = [&](std::size_t token) {
    const std::size_t i = token / W, j = token % W;
    return (i >= H - s ? 2u : 0u) + (j >= W - s ? 1u : 0u);
  };
  for (std::size_t win = 0; win < nW; ++win)
    for (std::size_t a = 0; a < L; ++a)
      for (std::size_t b = 0; b < L; ++b)
        if (region(idx[win * L + a]) != region(idx[win * L + b]))
          mask.at(win, a, b) = static_cast<T>(kMaskedLogit);
  return mask;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class T>
struct LinearParams {
  Tensor<T> weight;  // (in, out)
  Tensor<T> bias;    // (out)

  LinearParams() = default;
  LinearParams(std::size_t in, std::size_t out, CounterRng& rng)
      : weight(init_truncated_normal<T>({in, out}, rng)), bias(Tensor<T>::zeros({out})) {}

  Var<T> operator()(Binder<T>& bind, Var<T> x) const { return linear(x, bind(weight), bind(bias)); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <class T>
struct LayerNormParams {
  Tensor<T> gamma, beta;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t d) : gamma(Tensor<T>::ones({d})), beta(Tensor<T>::zeros({d})) {}

  Var<T> operator()(Binder<T>& bind, Var<T> x) const {
    return layer_norm(x, bind(gamma), bind(beta), static_cast<T>(1e-5));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

template <class T>
struct AttentionParams {
  LinearParams<T> qkv, proj;

  AttentionParams() = default;
  AttentionParams(std::size_t d, CounterRng& rng) : qkv(d, 3 * d, rng), proj(d, d, rng) {}

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    qkv.visit(prefix + ".qkv", f);
    proj.visit(prefix + ".proj", f);
  }
};

template <class T>
struct SwinBlockParams {
  LayerNormParams<T> norm1;
  AttentionParams<T> attn;
  LayerNormParams<T> norm2;
  LinearParams<T> fc1, fc2;

  SwinBlockParams() = default;
  SwinBlockParams(const BlockConfig& cfg, CounterRng& rng)
      : norm1(cfg.dim),
        attn(cfg.dim, rng),
        norm2(cfg.dim),
        fc1(cfg.dim, cfg.mlp_hidden, rng),
        fc2(cfg.mlp_hidden, cfg.dim, rng) {
    cfg.validate();
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    norm1.visit(prefix + ".norm1", f);
    attn.visit(prefix + ".attn", f);
    norm2.visit(prefix + ".norm2", f);
    fc1.visit(prefix + ".mlp.fc1", f);
    fc2.visit(prefix + ".mlp.fc2", f);
  }
};

template <class T>
struct PatchEmbedParams {
  std::size_t patch = 8;
  LinearParams<T> proj;

  PatchEmbedParams() = default;
  PatchEmbedParams(std::size_t patch_size, std::size_t channels, std::size_t dim, CounterRng& rng)
      : patch(patch_size), proj(patch_size * patch_size * channels, dim, rng) {}

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    proj.visit(prefix + ".proj", f);
  }
};

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

/// Images (B, H, W, C) -> flattened non-overlapping patches (B, H/p * W/p, p*p*C).
template <class T>
Tensor<T> patchify(const Tensor<T>& images, std::size_t p) {
  if (images.rank() != 4) throw ShapeError("patchify: expected (B,H,W,C), got " + to_string(images.shape()));
  const std::size_t B = images.dim(0), H = images.dim(1), W = images.dim(2), C = images.dim(3);
  if (p == 0 || H % p != 0 || W % p != 0)
    throw ShapeError("patch_embed: image " + std::to_string(H) + "x" + std::to_string(W) +
                     " is not divisible by patch " + std::to_string(p));
  const std::size_t Ht = H / p, Wt = W / p, P = p * p * C;
  Tensor<T> out({B, Ht * Wt, P});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t ti = 0; ti < Ht; ++ti)
      for (std::size_t tj = 0; tj < Wt; ++tj) {
        T* dst = out.data() + ((b * Ht + ti) * Wt + tj) * P;
        for (std::size_t di = 0; di < p; ++di)
          for (std::size_t dj = 0; dj < p; ++dj)
            for (std::size_t c = 0; c < C; ++c)
              *dst++ = images[((b * H + ti * p + di) * W + tj * p + dj) * C + c];
      }
  return out;
}

template <class T>
TokenGrid<T> patch_embed(Binder<T>& bind, const PatchEmbedParams<T>& params, const Tensor<T>& images) {
  auto patches = bind.tape().constant(patchify(images, params.patch));
  return {params.proj(bind, patches), images.dim(1) / params.patch, images.dim(2) / params.patch};
}

/// Multi-head scaled dot-product attention inside each window.
/// windows: (N, L, D). mask: (nW, L, L) with N a multiple of nW, or none.
template <class T>
Var<T> window_attention(Binder<T>& bind, const AttentionParams<T>& params, Var<T> windows,
                        const BlockConfig& cfg, const std::type_identity_t<Tensor<T>>* mask = nullptr) {
  const std::size_t N = windows.dim(0), L = windows.dim(1), D = windows.dim(2);
  if (D % cfg.att_heads != 0)
    throw Error("window_attention: dim " + std::to_string(D) + " not divisible by " +
                std::to_string(cfg.att_heads) + " heads");
  const std::size_t h = cfg.att_heads, hd = D / h;
  auto qkv = params.qkv(bind, windows);                                // (N, L, 3D)
  qkv = permute(reshape(qkv, {N, L, 3, h, hd}), {2, 0, 3, 1, 4});      // (3, N, h, L, hd)
  auto q = reshape(slice(qkv, 0, 0, 1), {N, h, L, hd});
  auto k = reshape(slice(qkv, 0, 1, 2), {N, h, L, hd});
  auto v = reshape(slice(qkv, 0, 2, 3), {N, h, L, hd});
  auto scores = scale(bmm_nt(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
  if (mask) {
    const std::size_t nW = mask->dim(0);
    if (mask->dim(1) != L || mask->dim(2) != L || N % nW != 0)
      shape_fail("window_attention(mask)", windows.shape(), mask->shape());
    Tensor<T> full({N, h, L, L});
    const std::size_t LL = L * L;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t hh = 0; hh < h; ++hh)
        std::copy_n(mask->data() + (n % nW) * LL, LL, full.data() + (n * h + hh) * LL);
    scores = add(scores, bind.tape().constant(std::move(full)));
  }
  auto attn = softmax(scores, 3);
  auto out = permute(bmm(attn, v), {0, 2, 1, 3});  // (N, L, h, hd)
  return params.proj(bind, reshape(out, {N, L, D}));
}

/// Pre-norm block: x + Att(LN(x)) on shifted windows, then + MLP(LN(.)).
template <class T>
TokenGrid<T> swin_block(Binder<T>& bind, const SwinBlockParams<T>& params, const TokenGrid<T>& g,
                        const BlockConfig& cfg) {
  cfg.validate();
  if (g.channels() != cfg.dim)
    throw ShapeError("swin_block: grid has " + std::to_string(g.channels()) + " channels, block expects " +
                     std::to_string(cfg.dim));
  const auto s = static_cast<long>(cfg.shift);
  TokenGrid<T> normed{params.norm1(bind, g.tokens), g.height, g.width};
  auto shifted = cyclic_shift(normed, s);
  auto windows = window_partition(shifted, cfg.window);
  std::optional<Tensor<T>> mask;
  if (cfg.shift > 0) mask = attention_mask<T>(g.height, g.width, cfg.window, cfg.shift);
  auto attended = window_attention(bind, params.attn, windows, cfg, mask ? &*mask : nullptr);
  auto merged = cyclic_shift(window_reverse(attended, g.height, g.width), -s);
  auto x = add(g.tokens, merged.tokens);
  auto hidden = gelu(params.fc1(bind, params.norm2(bind, x)));
  x = add(x, params.fc2(bind, hidden));
  return {x, g.height, g.width};
}

}  // namespace radt

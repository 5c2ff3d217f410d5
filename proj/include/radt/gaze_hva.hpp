#pragma once

// Gaze samples -> attention heatmap -> bounding region:
// count samples per pixel, blur with a Gaussian, rescale to 0..255, threshold,
// and box the largest connected component.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "radt/losses.hpp"
#include "radt/tensor.hpp"

namespace radt {

struct GazeRecord {
  std::string image_id;
  long x = 0, y = 0;
  std::optional<double> timestamp;
};

struct HvaConfig {
  double sigma = 64.0;
  int threshold = 140;
  int connectivity = 8;

  void validate() const {
    if (!(sigma > 0)) throw Error("HvaConfig: sigma must be positive");
    if (threshold < 0 || threshold > 255) throw Error("HvaConfig: threshold must lie in [0,255]");
    if (connectivity != 4 && connectivity != 8) throw Error("HvaConfig: connectivity must be 4 or 8");
  }
};

struct Heatmap {
  std::size_t height = 0, width = 0;
  std::vector<double> values;  // row-major
  bool quantized = false;

  Heatmap() = default;
  Heatmap(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0.0) {
    if (h == 0 || w == 0) throw ShapeError("Heatmap: extents must be positive");
  }
  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  [[nodiscard]] double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Per-pixel count of gaze samples.
inline Heatmap accumulate(const std::vector<GazeRecord>& points, std::size_t H, std::size_t W) {
  Heatmap h(H, W);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.x < 0 || p.y < 0 || std::size_t(p.x) >= W || std::size_t(p.y) >= H)
      throw Error("gaze point " + std::to_string(i) + " at (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                  ") lies outside the " + std::to_string(W) + "x" + std::to_string(H) + " image");
    h.at(std::size_t(p.y), std::size_t(p.x)) += 1.0;
  }
  return h;
}

/// Normalized 1-D Gaussian taps for offsets -r..r with r = ceil(4 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw Error("gaussian_kernel: sigma must be positive");
  const long r = static_cast<long>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0;
  for (long i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
  for (auto& v : k) v /= total;
  return k;
}

/// Half-sample symmetric reflection (d c b a | a b c d | d c b a), valid for
/// any offset.
inline std::size_t reflect_index(long i, std::size_t n) {
  const long period = 2 * long(n);
  long m = i % period;
  if (m < 0) m += period;
  return m < long(n) ? std::size_t(m) : std::size_t(period - 1 - m);
}

/// Separable Gaussian blur with reflected borders.
inline Heatmap gaussian_filter(const Heatmap& in, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const long r = long(k.size() / 2);
  const std::size_t H = in.height, W = in.width;
  Heatmap tmp(H, W), out(H, W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double acc = 0;
      for (long d = -r; d <= r; ++d) acc += k[d + r] * in.at(y, reflect_index(long(x) + d, W));
      tmp.at(y, x) = acc;
    }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double acc = 0;
      for (long d = -r; d <= r; ++d) acc += k[d + r] * tmp.at(reflect_index(long(y) + d, H), x);
      out.at(y, x) = acc;
    }
  return out;
}

/// Min-max rescale to integers 0..255. A constant map becomes all 255 unless
/// it is all zero.
inline Heatmap quantize(const Heatmap& in) {
  Heatmap out = in;
  out.quantized = true;
  const auto [lo_it, hi_it] = std::minmax_element(in.values.begin(), in.values.end());
  const double lo = *lo_it, hi = *hi_it;
  for (auto& v : out.values) {
    if (hi > lo) v = std::round((v - lo) / (hi - lo) * 255.0);
    else v = hi != 0.0 ? 255.0 : 0.0;
  }
  return out;
}

/// Inclusive pixel bounds of one connected component.
struct PixelBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t area = 0;  // pixels in the component, not the box
};

/// Largest 4- or 8-connected component of pixels with value >= threshold.
/// Ties go to the component found first in raster order.
inline PixelBox largest_component(const Heatmap& h, double threshold, int connectivity = 8) {
  if (connectivity != 4 && connectivity != 8) throw Error("largest_component: connectivity must be 4 or 8");
  const std::size_t H = h.height, W = h.width;
  std::vector<std::uint8_t> seen(H * W, 0);
  std::vector<std::size_t> stack;
  std::optional<PixelBox> best;
  for (std::size_t start = 0; start < H * W; ++start) {
    if (seen[start] || h.values[start] < threshold) continue;
    PixelBox box{start % W, start / W, start % W, start / W, 0};
    seen[start] = 1;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const long py = long(p / W), px = long(p % W);
      ++box.area;
      box.x0 = std::min(box.x0, std::size_t(px));
      box.x1 = std::max(box.x1, std::size_t(px));
      box.y0 = std::min(box.y0, std::size_t(py));
      box.y1 = std::max(box.y1, std::size_t(py));
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || (connectivity == 4 && dx != 0 && dy != 0)) continue;
          const long ny = py + dy, nx = px + dx;
          if (ny < 0 || nx < 0 || ny >= long(H) || nx >= long(W)) continue;
          const std::size_t q = std::size_t(ny) * W + std::size_t(nx);
          if (seen[q] || h.values[q] < threshold) continue;
          seen[q] = 1;
          stack.push_back(q);
        }
    }
    if (!best || box.area > best->area) best = box;
  }
  if (!best) throw Error("no attention region above threshold");
  return *best;
}

/// Pixel box to normalized (cx, cy, h, w); pixel i spans [i, i+1).
inline AttentionRegion to_region(const PixelBox& b, std::size_t H, std::size_t W) {
  return AttentionRegion::from_corners(double(b.x0) / double(W), double(b.y0) / double(H), double(b.x1 + 1) / double(W),
                                       double(b.y1 + 1) / double(H));
}

inline AttentionRegion largest_component_bbox(const Heatmap& h, int threshold, int connectivity = 8) {
  return to_region(largest_component(h, threshold, connectivity), h.height, h.width);
}

/// The blurred, quantized heatmap and the region derived from it.
struct HvaResult {
  Heatmap heatmap;
  AttentionRegion region;
};

inline HvaResult hva_run(const std::vector<GazeRecord>& points, std::size_t H, std::size_t W, const HvaConfig& cfg = {}) {
  cfg.validate();
  if (points.empty()) throw Error("hva_pipeline: no gaze points");
  auto q = quantize(gaussian_filter(accumulate(points, H, W), cfg.sigma));
  auto region = largest_component_bbox(q, cfg.threshold, cfg.connectivity);
  return {std::move(q), region};
}

inline AttentionRegion hva_pipeline(const std::vector<GazeRecord>& points, std::size_t H, std::size_t W,
                                    const HvaConfig& cfg = {}) {
  return hva_run(points, H, W, cfg).region;
}

}  // namespace radt

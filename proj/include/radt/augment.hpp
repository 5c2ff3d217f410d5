#pragma once

// Photometric augmentation: random contrast, brightness, hue and saturation,
// drawn from per-pathway profiles. Hue and saturation only act on 3-channel
// images.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "radt/rng.hpp"
#include "radt/tensor.hpp"

namespace radt {

struct AugmentProfile {
  double contrast_lower = 1.0, contrast_upper = 1.0;
  double brightness_max_delta = 0.0;
  double hue_max_delta = 0.0;
  double saturation_lower = 1.0, saturation_upper = 1.0;

  void validate() const {
    if (!(contrast_lower <= contrast_upper) || !(saturation_lower <= saturation_upper))
      throw Error("AugmentProfile: lower bound exceeds upper bound");
    if (!(brightness_max_delta >= 0) || !(hue_max_delta >= 0))
      throw Error("AugmentProfile: max deltas must be non-negative");
    if (contrast_lower < 0 || saturation_lower < 0) throw Error("AugmentProfile: factors must be non-negative");
  }
  friend bool operator==(const AugmentProfile&, const AugmentProfile&) = default;
};

namespace profiles {
// Hard augmentation for the teacher, soft for the student; focal inputs get
// more contrast than global ones.
inline constexpr AugmentProfile teacher_global{2.0, 2.2, 0.8, 0.8, 2.0, 2.5};
inline constexpr AugmentProfile teacher_focal{2.8, 3.0, 0.8, 0.8, 2.0, 2.5};
inline constexpr AugmentProfile student_global{0.5, 1.0, 0.5, 0.5, 1.5, 2.0};
inline constexpr AugmentProfile student_focal{1.0, 1.5, 0.5, 0.5, 1.5, 2.0};
inline constexpr AugmentProfile identity{};
}  // namespace profiles

/// The factors actually applied to one image.
struct AugmentDraw {
  double contrast = 1.0, brightness = 0.0, hue = 0.0, saturation = 1.0;
};

inline AugmentDraw draw_augment(const AugmentProfile& p, CounterRng& rng) {
  AugmentDraw d;
  d.contrast = rng.uniform(p.contrast_lower, p.contrast_upper);
  d.brightness = rng.uniform(-p.brightness_max_delta, p.brightness_max_delta);
  d.hue = rng.uniform(-p.hue_max_delta, p.hue_max_delta);
  d.saturation = rng.uniform(p.saturation_lower, p.saturation_upper);
  return d;
}

namespace detail {

inline std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), c = mx - mn;
  double h = 0;
  if (c > 0) {
    if (mx == r) h = std::fmod((g - b) / c, 6.0);
    else if (mx == g) h = (b - r) / c + 2.0;
    else h = (r - g) / c + 4.0;
    h /= 6.0;
    if (h < 0) h += 1.0;
  }
  return {h, mx > 0 ? c / mx : 0.0, mx};
}

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = (h - std::floor(h)) * 6.0;
  const double c = v * s, x = c * (1 - std::abs(std::fmod(h, 2.0) - 1)), m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  return {r + m, g + m, b + m};
}

}  // namespace detail

/// Applies a fixed draw to one (H, W, C) image: contrast about the
/// per-channel mean, brightness offset, hue rotation and saturation scale
/// (C == 3 only), then clipping to [0, 1].
template <class T>
Tensor<T> apply_augment(const Tensor<T>& image, const AugmentDraw& d) {
  if (image.rank() != 3) throw ShapeError("augment: expected (H,W,C), got " + to_string(image.shape()));
  const std::size_t HW = image.dim(0) * image.dim(1), C = image.dim(2);
  Tensor<T> out = image;
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0;
    for (std::size_t i = 0; i < HW; ++i) mean += image[i * C + c];
    mean /= double(HW);
    // (x - mean) * contrast + mean + brightness, arranged to be exact at contrast 1
    const double offset = mean * (1.0 - d.contrast) + d.brightness;
    for (std::size_t i = 0; i < HW; ++i) {
      auto& x = out[i * C + c];
      x = static_cast<T>(double(x) * d.contrast + offset);
    }
  }
  if (C == 3 && (d.hue != 0.0 || d.saturation != 1.0)) {
    for (std::size_t i = 0; i < HW; ++i) {
      T* px = &out[i * 3];
      auto hsv = detail::rgb_to_hsv(std::clamp<double>(px[0], 0, 1), std::clamp<double>(px[1], 0, 1),
                                    std::clamp<double>(px[2], 0, 1));
      auto rgb = detail::hsv_to_rgb(hsv[0] + d.hue, std::clamp(hsv[1] * d.saturation, 0.0, 1.0), hsv[2]);
      for (int k = 0; k < 3; ++k) px[k] = static_cast<T>(rgb[k]);
    }
  }
  for (auto& x : out.values()) x = std::clamp(x, T{0}, T{1});
  return out;
}

template <class T>
Tensor<T> augment(const Tensor<T>& image, const AugmentProfile& p, CounterRng rng) {
  p.validate();
  return apply_augment(image, draw_augment(p, rng));
}

/// Batch (B, H, W, C); image b uses stream b of `rng`.
template <class T>
Tensor<T> augment_batch(const Tensor<T>& images, const AugmentProfile& p, const CounterRng& rng) {
  if (images.rank() != 4) throw ShapeError("augment_batch: expected (B,H,W,C), got " + to_string(images.shape()));
  p.validate();
  const std::size_t B = images.dim(0), per = images.size() / B;
  const Shape one{images.dim(1), images.dim(2), images.dim(3)};
  Tensor<T> out(images.shape());
  for (std::size_t b = 0; b < B; ++b) {
    Tensor<T> img(one, std::vector<T>(images.data() + b * per, images.data() + (b + 1) * per));
    auto r = rng.split(b);
    auto a = apply_augment(img, draw_augment(p, r));
    std::copy(a.data(), a.data() + per, out.data() + b * per);
  }
  return out;
}

}  // namespace radt

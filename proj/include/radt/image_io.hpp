#pragma once

// PNG decode/encode through libpng's simplified API, plus bilinear resize.
// Images are float tensors (H, W, C) with values in [0, 1].

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "radt/tensor.hpp"

namespace radt {

struct ImageError : Error {
  using Error::Error;
};

/// Decodes a PNG to (H, W, channels); channels 1 converts colour to gray.
inline Tensor<float> read_png(const std::string& path, std::size_t channels = 1) {
  if (channels != 1 && channels != 3) throw ImageError("read_png: channels must be 1 or 3");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageError("cannot decode image '" + path + "': " + img.message);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageError("cannot decode image '" + path + "': " + img.message);
  }
  Tensor<float> out({img.height, img.width, channels});
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = float(buf[i]) / 255.0f;
  return out;
}

/// Encodes (H, W, C) with C in {1, 3} as 8-bit PNG, rounding after clipping.
inline void write_png(const std::string& path, const Tensor<float>& image) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3))
    throw ShapeError("write_png: expected (H,W,1) or (H,W,3), got " + to_string(image.shape()));
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(1));
  img.height = static_cast<png_uint_32>(image.dim(0));
  img.format = image.dim(2) == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(image.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0f, 1.0f) * 255.0f));
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw ImageError("cannot write image '" + path + "': " + img.message);
}

/// Bilinear resize with half-pixel centers and edge clamping (no antialias).
inline Tensor<float> resize_bilinear(const Tensor<float>& in, std::size_t out_h, std::size_t out_w) {
  if (in.rank() != 3) throw ShapeError("resize_bilinear: expected (H,W,C), got " + to_string(in.shape()));
  const std::size_t H = in.dim(0), W = in.dim(1), C = in.dim(2);
  if (H == out_h && W == out_w) return in;
  Tensor<float> out({out_h, out_w, C});
  auto coord = [](std::size_t o, std::size_t n_in, std::size_t n_out, std::size_t& i0, std::size_t& i1, double& t) {
    double s = (double(o) + 0.5) * double(n_in) / double(n_out) - 0.5;
    s = std::clamp(s, 0.0, double(n_in - 1));
    i0 = std::size_t(std::floor(s));
    i1 = std::min(i0 + 1, n_in - 1);
    t = s - double(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double ty;
    coord(y, H, out_h, y0, y1, ty);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double tx;
      coord(x, W, out_w, x0, x1, tx);
      for (std::size_t c = 0; c < C; ++c) {
        const double a = in[(y0 * W + x0) * C + c], b = in[(y0 * W + x1) * C + c];
        const double d = in[(y1 * W + x0) * C + c], e = in[(y1 * W + x1) * C + c];
        const double top = a + (b - a) * tx, bot = d + (e - d) * tx;
        out[(y * out_w + x) * C + c] = float(top + (bot - top) * ty);
      }
    }
  }
  return out;
}

}  // namespace radt

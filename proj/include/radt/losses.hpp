#pragma once

// Region losses: generalized IoU between attention boxes, keypoint MSE, and
// their weighted sum used to align student and teacher attention.

#include <algorithm>
#include <array>
#include <memory>
#include <vector>

#include "radt/autodiff.hpp"

namespace radt {

/// Axis-aligned box in normalized image coordinates, stored as center and
/// extent. Tensor layout is (cx, cy, h, w).
struct AttentionRegion {
  double cx = 0.5, cy = 0.5, h = 0.0, w = 0.0;

  [[nodiscard]] double x0() const { return cx - w / 2; }
  [[nodiscard]] double x1() const { return cx + w / 2; }
  [[nodiscard]] double y0() const { return cy - h / 2; }
  [[nodiscard]] double y1() const { return cy + h / 2; }
  [[nodiscard]] double area() const { return std::max(0.0, w) * std::max(0.0, h); }

  static AttentionRegion from_corners(double x0, double y0, double x1, double y1) {
    return {(x0 + x1) / 2, (y0 + y1) / 2, y1 - y0, x1 - x0};
  }
  friend bool operator==(const AttentionRegion&, const AttentionRegion&) = default;
};

template <class T>
Tensor<T> regions_to_tensor(const std::vector<AttentionRegion>& rs) {
  if (rs.empty()) throw ShapeError("regions_to_tensor: empty batch");
  Tensor<T> t({rs.size(), 4});
  for (std::size_t i = 0; i < rs.size(); ++i) {
    t[4 * i + 0] = static_cast<T>(rs[i].cx);
    t[4 * i + 1] = static_cast<T>(rs[i].cy);
    t[4 * i + 2] = static_cast<T>(rs[i].h);
    t[4 * i + 3] = static_cast<T>(rs[i].w);
  }
  return t;
}

template <class T>
std::vector<AttentionRegion> tensor_to_regions(const Tensor<T>& t) {
  if (t.rank() != 2 || t.dim(1) != 4) throw ShapeError("tensor_to_regions: expected (B,4), got " + to_string(t.shape()));
  std::vector<AttentionRegion> rs(t.dim(0));
  for (std::size_t i = 0; i < rs.size(); ++i)
    rs[i] = {double(t[4 * i]), double(t[4 * i + 1]), double(t[4 * i + 2]), double(t[4 * i + 3])};
  return rs;
}

struct GiouResult {
  double loss = 0.0;         // 1 - GIoU, in [0, 2]
  bool degenerate = false;   // both boxes had zero area
  std::array<double, 4> grad{};  // d loss / d (cx, cy, h, w) of the prediction
};

/// 1 - GIoU with GIoU = IoU - |C \ (A u B)| / |C|, C the enclosing box.
/// Gradients are one-sided at ties between edges.
inline GiouResult giou(const AttentionRegion& a, const AttentionRegion& b) {
  const double ax0 = a.x0(), ax1 = a.x1(), ay0 = a.y0(), ay1 = a.y1();
  const double bx0 = b.x0(), bx1 = b.x1(), by0 = b.y0(), by1 = b.y1();
  const double wa = std::max(0.0, ax1 - ax0), ha = std::max(0.0, ay1 - ay0);

  const double ix = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double iy = std::min(ay1, by1) - std::max(ay0, by0);
  const bool overlap = ix > 0 && iy > 0;
  const double inter = overlap ? ix * iy : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0)) return {1.0, true, {}};

  const double cw = std::max(ax1, bx1) - std::min(ax0, bx0);
  const double ch = std::max(ay1, by1) - std::min(ay0, by0);
  const double hull = cw * ch;

  GiouResult r;
  r.loss = 2.0 - inter / uni - uni / hull;

  // edge order: x0, x1, y0, y1
  std::array<double, 4> d_inter{}, d_area{}, d_hull{};
  if (overlap) {
    d_inter[0] = ax0 > bx0 ? -iy : 0.0;
    d_inter[1] = ax1 < bx1 ? iy : 0.0;
    d_inter[2] = ay0 > by0 ? -ix : 0.0;
    d_inter[3] = ay1 < by1 ? ix : 0.0;
  }
  if (a.w > 0 && a.h > 0) d_area = {-ha, ha, -wa, wa};
  d_hull[0] = ax0 <= bx0 ? -ch : 0.0;
  d_hull[1] = ax1 >= bx1 ? ch : 0.0;
  d_hull[2] = ay0 <= by0 ? -cw : 0.0;
  d_hull[3] = ay1 >= by1 ? cw : 0.0;

  std::array<double, 4> g{};
  for (int k = 0; k < 4; ++k) {
    const double du = d_area[k] - d_inter[k];
    g[k] = -(d_inter[k] * uni - inter * du) / (uni * uni) - (du * hull - uni * d_hull[k]) / (hull * hull);
  }
  // x0 = cx - w/2, x1 = cx + w/2 (and likewise in y)
  r.grad = {g[0] + g[1], g[2] + g[3], (g[3] - g[2]) / 2, (g[1] - g[0]) / 2};
  return r;
}

inline double giou_loss(const AttentionRegion& pred, const AttentionRegion& target) {
  return giou(pred, target).loss;
}

/// Batch-mean GIoU loss for predictions (B,4) against a constant target
/// (B,4). `degenerate`, when given, receives the number of zero-area pairs.
template <class T>
Var<T> giou_loss(Var<T> pred, const Tensor<T>& target, std::size_t* degenerate = nullptr) {
  if (pred.shape().size() != 2 || pred.shape()[1] != 4 || pred.shape() != target.shape())
    shape_fail("giou_loss", pred.shape(), target.shape());
  const auto pr = tensor_to_regions(pred.value());
  const auto tr = tensor_to_regions(target);
  const std::size_t n = pr.size();
  double total = 0;
  std::size_t degen = 0;
  auto grad = std::make_shared<Tensor<T>>(Shape{n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = giou(pr[i], tr[i]);
    total += r.loss;
    degen += r.degenerate ? 1 : 0;
    for (int k = 0; k < 4; ++k) (*grad)[4 * i + k] = static_cast<T>(r.grad[k] / double(n));
  }
  if (degenerate) *degenerate = degen;
  return pred.tape->record(Tensor<T>::scalar(static_cast<T>(total / double(n))), {pred},
                           [pred, grad](const Tensor<T>&, const Tensor<T>& g, GradSink<T>& s) {
                             if (auto* gp = s.acc(pred.id))
                               for (std::size_t i = 0; i < gp->size(); ++i) (*gp)[i] += g[0] * (*grad)[i];
                           });
}

/// Mean over the batch of the squared L2 distance between keypoint vectors.
inline double keypoint_mse(const std::vector<AttentionRegion>& pred, const std::vector<AttentionRegion>& target) {
  if (pred.empty()) throw Error("keypoint_mse: empty batch");
  if (pred.size() != target.size())
    throw ShapeError("keypoint_mse: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(target.size()) + " targets");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d[] = {pred[i].cx - target[i].cx, pred[i].cy - target[i].cy, pred[i].h - target[i].h,
                        pred[i].w - target[i].w};
    for (double x : d) acc += x * x;
  }
  return acc / double(pred.size());
}

template <class T>
Var<T> keypoint_mse(Var<T> pred, Var<T> target) {
  if (pred.shape().size() != 2 || pred.shape()[1] != 4 || pred.shape() != target.shape())
    shape_fail("keypoint_mse", pred.shape(), target.shape());
  return scale(sum(square(sub(pred, target))), T{1} / static_cast<T>(pred.shape()[0]));
}

/// l_giou * GIoU + l_mse * MSE. The target carries no gradient.
template <class T>
Var<T> val_loss(Var<T> pred, Var<T> target, double l_giou, double l_mse, std::size_t* degenerate = nullptr) {
  if (!(l_giou >= 0 && l_mse >= 0)) throw Error("val_loss: loss weights must be non-negative");
  auto t = detach(target);
  auto g = scale(giou_loss(pred, t.value(), degenerate), static_cast<T>(l_giou));
  return add(g, scale(keypoint_mse(pred, t), static_cast<T>(l_mse)));
}

}  // namespace radt

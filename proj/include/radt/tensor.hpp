#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace radt {

using Shape = std::vector<std::size_t>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

[[noreturn]] inline void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                   to_string(b));
}

/// Dense row-major array. Value type; copies are deep.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(numel(shape_), fill) {
    check_extents();
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != numel(shape_))
      throw ShapeError("Tensor: shape " + to_string(shape_) + " needs " +
                       std::to_string(numel(shape_)) + " values, got " +
                       std::to_string(data_.size()));
  }
  Tensor(Shape shape, std::initializer_list<T> data)
      : Tensor(std::move(shape), std::vector<T>(data)) {}

  static Tensor zeros(Shape s) { return Tensor(std::move(s), T{0}); }
  static Tensor ones(Shape s) { return Tensor(std::move(s), T{1}); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  template <class U>
  [[nodiscard]] Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::vector<T>& values() noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  template <class... I>
  T& at(I... idx) {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <class... I>
  const T& at(I... idx) const {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  [[nodiscard]] Tensor reshaped(Shape s) const {
    if (numel(s) != data_.size()) shape_fail("reshape", shape_, s);
    return Tensor(std::move(s), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_extents() const {
    for (auto e : shape_)
      if (e == 0) throw ShapeError("Tensor: zero extent in shape " + to_string(shape_));
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size())
      throw ShapeError("Tensor::at: rank " + std::to_string(shape_.size()) + " indexed with " +
                       std::to_string(idx.size()) + " indices");
    std::size_t off = 0, k = 0;
    for (auto i : idx) {
      if (i >= shape_[k]) throw std::out_of_range("Tensor::at: index out of range");
      off = off * shape_[k++] + i;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

namespace kernel {

// C[M,N] (+)= A[M,K] * B[K,N]
template <class T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <class T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    for (std::size_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T acc{0};
      for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
      C[i * N + j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <class T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t k = 0; k < K; ++k) {
    const T* a = A + k * M;
    const T* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const T av = a[i];
      T* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

/// out[perm-order] = in; out.shape[i] = in.shape[perm[i]].
template <class T>
Tensor<T> permute(const Tensor<T>& in, const std::vector<std::size_t>& perm) {
  const auto& s = in.shape();
  const std::size_t r = s.size();
  if (perm.size() != r) throw ShapeError("permute: rank mismatch");
  Shape os(r);
  std::vector<bool> seen(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    if (perm[i] >= r || seen[perm[i]]) throw ShapeError("permute: invalid axis permutation");
    seen[perm[i]] = true;
    os[i] = s[perm[i]];
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) step[i] = in_stride[perm[i]];

  Tensor<T> out(os);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  const std::size_t n = in.size();
  const std::size_t inner = r ? os[r - 1] : 1;
  const std::size_t inner_step = r ? step[r - 1] : 0;
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) out[o + j] = in[src + j * inner_step];
    // advance the multi-index over all but the last axis
    for (std::size_t ax = r - 1; ax-- > 0;) {
      src += step[ax];
      if (++idx[ax] < os[ax]) break;
      src -= step[ax] * os[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

inline std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

// View a shape as (outer, axis, inner) around `axis`.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace kernel
}  // namespace radt

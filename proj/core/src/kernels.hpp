#pragma once

// Internal compute kernels shared by the primitive ops.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "transiam/tensor.hpp"

namespace transiam::kernels {

namespace detail = transiam::detail;

/// C[m x n] (+)= op(A) . op(B), all row-major. op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool transpose_a, bool transpose_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const T* a, const T* b, T* c, bool accumulate);

struct ConvGeometry {
  std::int64_t channels, height, width;
  std::int64_t kh, kw;
  int stride, pad;
  std::int64_t out_h, out_w;

  std::int64_t rows() const { return channels * kh * kw; }
  std::int64_t positions() const { return out_h * out_w; }
};

/// Unfolds one image (channels x height x width) into the column block
/// col[row * col_stride + col_offset + position].
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col, std::int64_t col_stride,
            std::int64_t col_offset);

/// Adjoint of im2col: accumulates columns back into the image.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image, std::int64_t col_stride,
            std::int64_t col_offset);

/// Row-wise softmax of a contiguous [rows x len] block, max-subtracted.
template <typename T>
void softmax_rows(const T* x, T* y, std::int64_t rows, std::int64_t len);

// Reductions with a fixed lane layout: vectorizable without fast-math and
// independent of pointer alignment.
constexpr int kLanes = 16;

template <typename T>
T sum(const T* x, std::int64_t n) {
  T acc[kLanes] = {};
  std::int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (int j = 0; j < kLanes; ++j) acc[j] += x[i + j];
  }
  for (int j = 0; i < n; ++i, ++j) acc[j] += x[i];
  T total{0};
  for (T a : acc) total += a;
  return total;
}

template <typename T>
T dot(const T* x, const T* y, std::int64_t n) {
  T acc[kLanes] = {};
  std::int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (int j = 0; j < kLanes; ++j) acc[j] += x[i + j] * y[i + j];
  }
  for (int j = 0; i < n; ++i, ++j) acc[j] += x[i] * y[i];
  T total{0};
  for (T a : acc) total += a;
  return total;
}

/// sum((x - mean)^2)
template <typename T>
T sum_sq_dev(const T* x, std::int64_t n, T mean) {
  T acc[kLanes] = {};
  std::int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (int j = 0; j < kLanes; ++j) {
      const T d = x[i + j] - mean;
      acc[j] += d * d;
    }
  }
  for (int j = 0; i < n; ++i, ++j) {
    const T d = x[i] - mean;
    acc[j] += d * d;
  }
  T total{0};
  for (T a : acc) total += a;
  return total;
}

/// Per-thread scratch buffer `slot`, grown on demand and never shrunk, so hot
/// loops do not pay for fresh pages. Contents are unspecified on return.
template <typename T>
T* scratch(int slot, std::size_t n) {
  thread_local std::vector<T, detail::AlignedAllocator<T>> buffers[4];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b.data();
}

}  // namespace transiam::kernels

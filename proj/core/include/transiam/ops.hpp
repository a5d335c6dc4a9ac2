#pragma once

#include <cstdint>

#include "transiam/tape.hpp"
#include "transiam/tensor.hpp"

// Differentiable primitives. Every function computes its forward result
// eagerly and, when a tape is active and an input requires grad, records its
// backward on that tape. Feature maps are (batch, channel, height, width).

namespace transiam {

/// a[m x k] . b[k x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Batched product a[B x m x k] . b[B x k x n], or . b^T when b is [B x n x k]
/// and transpose_b is set.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

/// Zero-padded cross-correlation. w is [out_c, in_c, kh, kw]; bias may be
/// undefined. Output extent per axis: floor((H + 2 pad - k) / stride) + 1.
template <typename T>
FeatureMap<T> conv2d(const FeatureMap<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                     int stride, int pad);

/// One [kh, kw] kernel per channel, w is [c, 1, kh, kw]; channels never mix.
template <typename T>
FeatureMap<T> depthwise_conv2d(const FeatureMap<T>& x, const Tensor<T>& w, int stride, int pad);

/// Adjoint of conv2d with zero padding. w is [in_c, out_c, kh, kw] (the same
/// storage a conv2d from out_c to in_c channels would use); bias may be undefined.
/// Output extent per axis: (H - 1) stride + k.
template <typename T>
FeatureMap<T> conv_transpose2d(const FeatureMap<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                               int stride);

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// While alive, every relu on this thread folds its on/off pattern into a
/// running fingerprint. Finite-difference checks use it to tell whether a
/// perturbation moved any relu across its kink.
class KinkWatch {
 public:
  KinkWatch();
  ~KinkWatch();
  KinkWatch(const KinkWatch&) = delete;
  KinkWatch& operator=(const KinkWatch&) = delete;

  void reset() { fingerprint_ = kSeed; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  void fold(std::uint64_t word) {
    // splitmix64 finalizer: every input bit reaches every output bit
    std::uint64_t z = fingerprint_ + word + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    fingerprint_ = z ^ (z >> 31);
  }

  /// The watch active on this thread, or nullptr.
  static KinkWatch* current();

 private:
  static constexpr std::uint64_t kSeed = 0xcbf29ce484222325ULL;
  std::uint64_t fingerprint_ = kSeed;
  KinkWatch* previous_;
};
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

enum class PointwiseKind { relu, add, scale };

/// Dispatcher over the elementwise primitives. `other` is used by add,
/// `factor` by scale.
template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, PointwiseKind kind, const Tensor<T>& other = {},
                    T factor = T{1});

/// Normalizes over the channel axis at every (batch, position); gamma and beta are [C].
template <typename T>
FeatureMap<T> layer_norm(const FeatureMap<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         T eps = T(1e-5));

/// Normalizes over (channels of one group, height, width) per sample.
template <typename T>
FeatureMap<T> group_norm(const FeatureMap<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         int groups, T eps = T(1e-5));

enum class NormKind { layer_norm, group_norm };

template <typename T>
FeatureMap<T> normalize(const FeatureMap<T>& x, NormKind kind, const Tensor<T>& gamma,
                        const Tensor<T>& beta, int groups = 8, T eps = T(1e-5));

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Channel concatenation of two maps with equal batch and spatial extents.
template <typename T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b);

/// x[N, C, H, W] * g[N, 1, H, W], g broadcast over channels.
template <typename T>
FeatureMap<T> channel_broadcast_mul(const FeatureMap<T>& x, const FeatureMap<T>& g);

/// [N, C, H, W] -> [N * heads, H * W, C / heads]; channel c = head * d + j.
template <typename T>
Tensor<T> to_heads(const FeatureMap<T>& x, int heads);

/// Inverse of to_heads.
template <typename T>
FeatureMap<T> from_heads(const Tensor<T>& x, int heads, std::int64_t height, std::int64_t width);

/// [N, K, H, W] -> [N * H * W, K]: one row per pixel.
template <typename T>
Tensor<T> nchw_to_rows(const FeatureMap<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Throws NumericalError naming `op` when x holds NaN or Inf.
template <typename T>
void ensure_finite(const Tensor<T>& x, const char* op);

}  // namespace transiam

#include "transiam/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "transiam/parallel.hpp"

namespace transiam {
namespace {

using kernels::ConvGeometry;

template <typename T>
void expect_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

template <typename T>
std::vector<Tensor<T>> with_optional(std::vector<Tensor<T>> inputs, const Tensor<T>& maybe) {
  if (maybe.defined()) inputs.push_back(maybe);
  return inputs;
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::int64_t channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw DimensionError(std::string(op) + ": bias shape " + shape_string(bias.shape()) +
                         " does not match " + std::to_string(channels) + " output channels");
  }
}

template <typename T>
void check_affine(const Tensor<T>& gamma, const Tensor<T>& beta, std::int64_t channels,
                  const char* op) {
  if (gamma.rank() != 1 || gamma.dim(0) != channels || beta.rank() != 1 || beta.dim(0) != channels) {
    throw DimensionError(std::string(op) + ": affine parameters " + shape_string(gamma.shape()) +
                         "/" + shape_string(beta.shape()) + " do not match " +
                         std::to_string(channels) + " channels");
  }
}

/// Elementwise unary op whose derivative is a function of (input, output).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* name, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x.shape());
  const T* xs = x.data();
  T* ys = out.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) ys[i] = fwd(xs[i]);
  ensure_finite(out, name);
  record_op<T>(name, {x}, out, [deriv](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    Tensor<T>& a = in[0];
    if (!a.requires_grad()) return;
    auto ga = a.ensure_grad();
    const auto go = o.grad();
    const T* av = a.data();
    const T* ov = o.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * deriv(av[i], ov[i]);
  });
  return out;
}

}  // namespace

template <typename T>
void ensure_finite(const Tensor<T>& x, const char* op) {
  // Branch-free scan so the loop vectorizes; NaN fails the comparison.
  bool ok = true;
  const T limit = std::numeric_limits<T>::max();
  for (T v : x.values()) ok &= std::abs(v) <= limit;
  if (!ok) {
    throw NumericalError(std::string(op) + " produced a non-finite value (shape " +
                         shape_string(x.shape()) + ")");
  }
}

// ---------------------------------------------------------------------------
// Products

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm<T>(false, false, m, n, k, a.data(), b.data(), out.data(), false);
  ensure_finite(out, "matmul");
  record_op<T>("matmul", {a, b}, out, [m, n, k](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    const T* dy = o.grad().data();
    if (in[0].requires_grad()) {
      kernels::gemm<T>(false, true, m, k, n, dy, in[1].data(), in[0].ensure_grad().data(), true);
    }
    if (in[1].requires_grad()) {
      kernels::gemm<T>(true, false, k, n, m, in[0].data(), dy, in[1].ensure_grad().data(), true);
    }
  });
  return out;
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const bool ok = a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) &&
                  a.dim(2) == (transpose_b ? b.dim(2) : b.dim(1));
  if (!ok) {
    throw DimensionError(std::string("bmm: cannot multiply ") + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()) + (transpose_b ? "^T" : ""));
  }
  const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const auto n = transpose_b ? b.dim(1) : b.dim(2);
  Tensor<T> out({batch, m, n});
  for (std::int64_t i = 0; i < batch; ++i) {
    kernels::gemm<T>(false, transpose_b, m, n, k, a.data() + i * m * k, b.data() + i * k * n,
                     out.data() + i * m * n, false);
  }
  ensure_finite(out, "bmm");
  record_op<T>("bmm", {a, b}, out,
               [batch, m, n, k, transpose_b](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 const T* dy = o.grad().data();
                 Tensor<T>& ta = in[0];
                 Tensor<T>& tb = in[1];
                 for (std::int64_t i = 0; i < batch; ++i) {
                   const T* dyi = dy + i * m * n;
                   const T* ai = ta.data() + i * m * k;
                   const T* bi = tb.data() + i * k * n;
                   if (ta.requires_grad()) {
                     // y = a b  -> da = dy b^T ; y = a b^T -> da = dy b
                     kernels::gemm<T>(false, !transpose_b, m, k, n, dyi, bi,
                                      ta.ensure_grad().data() + i * m * k, true);
                   }
                   if (tb.requires_grad()) {
                     if (transpose_b) {
                       kernels::gemm<T>(true, false, n, k, m, dyi, ai,
                                        tb.ensure_grad().data() + i * k * n, true);
                     } else {
                       kernels::gemm<T>(true, false, k, n, m, ai, dyi,
                                        tb.ensure_grad().data() + i * k * n, true);
                     }
                   }
                 }
               });
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions

template <typename T>
FeatureMap<T> conv2d(const FeatureMap<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                     int pad) {
  expect_feature_map(x, "conv2d");
  if (w.rank() != 4 || w.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: input " + shape_string(x.shape()) + " does not match kernel " +
                         shape_string(w.shape()));
  }
  if (stride < 1 || pad < 0) {
    throw DimensionError("conv2d: stride must be >= 1 and pad >= 0, got stride " +
                         std::to_string(stride) + ", pad " + std::to_string(pad));
  }
  const auto batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const auto out_c = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (height + 2 * pad < kh || width + 2 * pad < kw) {
    throw DimensionError("conv2d: kernel " + shape_string(w.shape()) + " larger than padded input " +
                         shape_string(x.shape()) + " with pad " + std::to_string(pad));
  }
  check_bias(bias, out_c, "conv2d");
  const ConvGeometry g{channels, height, width, kh, kw, stride, pad,
                       (height + 2 * pad - kh) / stride + 1, (width + 2 * pad - kw) / stride + 1};
  const auto positions = g.positions();
  const auto rows = g.rows();
  const auto image = channels * height * width;
  // Samples are unfolded in groups so each GEMM sees about kGroupColumns
  // columns: wide enough to run at full speed, small enough to stay in cache.
  constexpr std::int64_t kGroupColumns = 4096;
  const std::int64_t group = std::clamp<std::int64_t>(kGroupColumns / positions, 1, batch);
  // 1x1, stride 1, unpadded: a lone image already is its column block
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;
  const std::size_t block = static_cast<std::size_t>(rows * group * positions);
  const std::size_t out_block = static_cast<std::size_t>(out_c * group * positions);

  // Column block of samples [n0, n0 + gs).
  auto columns = [=](const T* xs, std::int64_t n0, std::int64_t gs, T* col) -> const T* {
    if (pointwise && gs == 1) return xs + n0 * image;
    for (std::int64_t j = 0; j < gs; ++j) {
      kernels::im2col(xs + (n0 + j) * image, g, col, gs * positions, j * positions);
    }
    return col;
  };

  Tensor<T> out({batch, out_c, g.out_h, g.out_w});
  T* ys = out.data();
  T* col = kernels::scratch<T>(0, block);
  T* ybuf = group > 1 ? kernels::scratch<T>(2, out_block) : nullptr;
  for (std::int64_t n0 = 0; n0 < batch; n0 += group) {
    const std::int64_t gs = std::min(group, batch - n0);
    const std::int64_t cols = gs * positions;
    const T* cn = columns(x.data(), n0, gs, col);
    T* dst = gs == 1 ? ys + n0 * out_c * positions : ybuf;
    kernels::gemm<T>(false, false, out_c, cols, rows, w.data(), cn, dst, false);
    for (std::int64_t j = 0; j < gs; ++j) {
      for (std::int64_t co = 0; co < out_c; ++co) {
        T* yrow = ys + ((n0 + j) * out_c + co) * positions;
        if (gs > 1) std::copy_n(ybuf + co * cols + j * positions, positions, yrow);
        if (bias.defined()) {
          const T b = bias[co];
          for (std::int64_t p = 0; p < positions; ++p) yrow[p] += b;
        }
      }
    }
  }
  ensure_finite(out, "conv2d");

  const bool has_bias = bias.defined();
  record_op<T>("conv2d", with_optional<T>({x, w}, bias), out,
               [=](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 Tensor<T>& tx = in[0];
                 Tensor<T>& tw = in[1];
                 const T* dy = o.grad().data();
                 if (has_bias && in[2].requires_grad()) {
                   auto db = in[2].ensure_grad();
                   for (std::int64_t n = 0; n < batch; ++n) {
                     for (std::int64_t co = 0; co < out_c; ++co) {
                       const T* row = dy + (n * out_c + co) * positions;
                       T s{0};
                       for (std::int64_t p = 0; p < positions; ++p) s += row[p];
                       db[static_cast<std::size_t>(co)] += s;
                     }
                   }
                 }
                 T* dw = tw.requires_grad() ? tw.ensure_grad().data() : nullptr;
                 T* dx = tx.requires_grad() ? tx.ensure_grad().data() : nullptr;
                 T* colb = kernels::scratch<T>(0, block);
                 T* dcol = kernels::scratch<T>(1, block);
                 T* dybuf = group > 1 ? kernels::scratch<T>(2, out_block) : nullptr;
                 for (std::int64_t n0 = 0; n0 < batch; n0 += group) {
                   const std::int64_t gs = std::min(group, batch - n0);
                   const std::int64_t cols = gs * positions;
                   const T* dyg = dy + n0 * out_c * positions;
                   if (gs > 1) {
                     for (std::int64_t j = 0; j < gs; ++j) {
                       for (std::int64_t co = 0; co < out_c; ++co) {
                         std::copy_n(dy + ((n0 + j) * out_c + co) * positions, positions,
                                     dybuf + co * cols + j * positions);
                       }
                     }
                     dyg = dybuf;
                   }
                   if (dw) {
                     const T* cn = columns(tx.data(), n0, gs, colb);
                     kernels::gemm<T>(false, true, out_c, rows, cols, dyg, cn, dw, true);
                   }
                   if (dx) {
                     if (pointwise && gs == 1) {
                       kernels::gemm<T>(true, false, rows, cols, out_c, tw.data(), dyg,
                                        dx + n0 * image, true);
                     } else {
                       kernels::gemm<T>(true, false, rows, cols, out_c, tw.data(), dyg, dcol, false);
                       for (std::int64_t j = 0; j < gs; ++j) {
                         kernels::col2im(dcol, g, dx + (n0 + j) * image, cols, j * positions);
                       }
                     }
                   }
                 }
               });
  return out;
}

template <typename T>
FeatureMap<T> depthwise_conv2d(const FeatureMap<T>& x, const Tensor<T>& w, int stride, int pad) {
  expect_feature_map(x, "depthwise_conv2d");
  if (w.rank() != 4 || w.dim(1) != 1 || w.dim(0) != x.dim(1)) {
    throw DimensionError("depthwise_conv2d: input " + shape_string(x.shape()) +
                         " needs one [1, kh, kw] kernel per channel, got " + shape_string(w.shape()));
  }
  if (stride < 1 || pad < 0) {
    throw DimensionError("depthwise_conv2d: stride must be >= 1 and pad >= 0");
  }
  const auto batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
  const auto kh = w.dim(2), kw = w.dim(3);
  if (height + 2 * pad < kh || width + 2 * pad < kw) {
    throw DimensionError("depthwise_conv2d: kernel larger than padded input");
  }
  const auto out_h = (height + 2 * pad - kh) / stride + 1;
  const auto out_w = (width + 2 * pad - kw) / stride + 1;
  Tensor<T> out({batch, channels, out_h, out_w});
  const T* xs = x.data();
  const T* ws = w.data();
  T* ys = out.data();
  parallel_for(batch * channels, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t nc = begin; nc < end; ++nc) {
      const std::int64_t c = nc % channels;
      const T* plane = xs + nc * height * width;
      const T* k = ws + c * kh * kw;
      T* dst = ys + nc * out_h * out_w;
      for (std::int64_t oy = 0; oy < out_h; ++oy) {
        for (std::int64_t ox = 0; ox < out_w; ++ox) {
          T acc{0};
          for (std::int64_t i = 0; i < kh; ++i) {
            const std::int64_t iy = oy * stride - pad + i;
            if (iy < 0 || iy >= height) continue;
            for (std::int64_t j = 0; j < kw; ++j) {
              const std::int64_t ix = ox * stride - pad + j;
              if (ix < 0 || ix >= width) continue;
              acc += plane[iy * width + ix] * k[i * kw + j];
            }
          }
          dst[oy * out_w + ox] = acc;
        }
      }
    }
  });
  ensure_finite(out, "depthwise_conv2d");

  record_op<T>("depthwise_conv2d", {x, w}, out,
               [=](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 Tensor<T>& tx = in[0];
                 Tensor<T>& tw = in[1];
                 const T* dy = o.grad().data();
                 const T* xv = tx.data();
                 const T* wv = tw.data();
                 T* dx = tx.requires_grad() ? tx.ensure_grad().data() : nullptr;
                 T* dw = tw.requires_grad() ? tw.ensure_grad().data() : nullptr;
                 parallel_for(channels, [&](std::int64_t begin, std::int64_t end) {
                   for (std::int64_t c = begin; c < end; ++c) {
                     for (std::int64_t n = 0; n < batch; ++n) {
                       const std::int64_t nc = n * channels + c;
                       const T* plane = xv + nc * height * width;
                       const T* g = dy + nc * out_h * out_w;
                       for (std::int64_t oy = 0; oy < out_h; ++oy) {
                         for (std::int64_t ox = 0; ox < out_w; ++ox) {
                           const T go = g[oy * out_w + ox];
                           for (std::int64_t i = 0; i < kh; ++i) {
                             const std::int64_t iy = oy * stride - pad + i;
                             if (iy < 0 || iy >= height) continue;
                             for (std::int64_t j = 0; j < kw; ++j) {
                               const std::int64_t ix = ox * stride - pad + j;
                               if (ix < 0 || ix >= width) continue;
                               if (dw) dw[c * kh * kw + i * kw + j] += go * plane[iy * width + ix];
                               if (dx) dx[nc * height * width + iy * width + ix] += go * wv[c * kh * kw + i * kw + j];
                             }
                           }
                         }
                       }
                     }
                   }
                 });
               });
  return out;
}

template <typename T>
FeatureMap<T> conv_transpose2d(const FeatureMap<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                               int stride) {
  expect_feature_map(x, "conv_transpose2d");
  if (stride < 1) {
    throw DimensionError("conv_transpose2d: stride must be >= 1, got " + std::to_string(stride));
  }
  if (w.rank() != 4 || w.dim(0) != x.dim(1)) {
    throw DimensionError("conv_transpose2d: input " + shape_string(x.shape()) +
                         " does not match kernel " + shape_string(w.shape()));
  }
  const auto batch = x.dim(0), in_c = x.dim(1), height = x.dim(2), width = x.dim(3);
  const auto out_c = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  check_bias(bias, out_c, "conv_transpose2d");
  const auto out_h = (height - 1) * stride + kh;
  const auto out_w = (width - 1) * stride + kw;
  // Geometry of the equivalent forward convolution, viewed from the output image.
  const ConvGeometry g{out_c, out_h, out_w, kh, kw, stride, 0, height, width};
  const auto positions = height * width;
  const auto rows = g.rows();
  const auto out_image = out_c * out_h * out_w;
  const std::size_t block = static_cast<std::size_t>(rows * positions);

  Tensor<T> out({batch, out_c, out_h, out_w});
  T* col = kernels::scratch<T>(0, block);
  for (std::int64_t n = 0; n < batch; ++n) {
    kernels::gemm<T>(true, false, rows, positions, in_c, w.data(), x.data() + n * in_c * positions,
                     col, false);
    kernels::col2im(col, g, out.data() + n * out_image, positions, 0);
  }
  if (bias.defined()) {
    T* ys = out.data();
    for (std::int64_t n = 0; n < batch; ++n) {
      for (std::int64_t co = 0; co < out_c; ++co) {
        T* dst = ys + (n * out_c + co) * out_h * out_w;
        for (std::int64_t p = 0; p < out_h * out_w; ++p) dst[p] += bias[co];
      }
    }
  }
  ensure_finite(out, "conv_transpose2d");

  const bool has_bias = bias.defined();
  record_op<T>("conv_transpose2d", with_optional<T>({x, w}, bias), out,
               [=](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 Tensor<T>& tx = in[0];
                 Tensor<T>& tw = in[1];
                 const T* dy = o.grad().data();
                 if (has_bias && in[2].requires_grad()) {
                   auto db = in[2].ensure_grad();
                   for (std::int64_t n = 0; n < batch; ++n) {
                     for (std::int64_t co = 0; co < out_c; ++co) {
                       const T* src = dy + (n * out_c + co) * out_h * out_w;
                       T s{0};
                       for (std::int64_t p = 0; p < out_h * out_w; ++p) s += src[p];
                       db[static_cast<std::size_t>(co)] += s;
                     }
                   }
                 }
                 if (!tx.requires_grad() && !tw.requires_grad()) return;
                 T* dx = tx.requires_grad() ? tx.ensure_grad().data() : nullptr;
                 T* dw = tw.requires_grad() ? tw.ensure_grad().data() : nullptr;
                 T* dcol = kernels::scratch<T>(1, block);
                 for (std::int64_t n = 0; n < batch; ++n) {
                   kernels::im2col(dy + n * out_image, g, dcol, positions, 0);
                   if (dx) {
                     kernels::gemm<T>(false, false, in_c, positions, rows, tw.data(), dcol,
                                      dx + n * in_c * positions, true);
                   }
                   if (dw) {
                     kernels::gemm<T>(false, true, in_c, rows, positions,
                                      tx.data() + n * in_c * positions, dcol, dw, true);
                   }
                 }
               });
  return out;
}

// ---------------------------------------------------------------------------
// Softmax and elementwise

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int r = x.rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(x.shape()));
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < a; ++i) outer *= x.dim(i);
  for (int i = a + 1; i < r; ++i) inner *= x.dim(i);
  const std::int64_t len = x.dim(a);
  Tensor<T> out(x.shape());
  const T* xs = x.data();
  T* ys = out.data();
  if (inner == 1) {
    kernels::softmax_rows(xs, ys, outer, len);
  } else {
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t i = 0; i < inner; ++i) {
        const std::int64_t base = o * len * inner + i;
        T mx = xs[base];
        for (std::int64_t l = 1; l < len; ++l) mx = std::max(mx, xs[base + l * inner]);
        T s{0};
        for (std::int64_t l = 0; l < len; ++l) {
          const T e = std::exp(xs[base + l * inner] - mx);
          ys[base + l * inner] = e;
          s += e;
        }
        const T invs = T{1} / s;
        for (std::int64_t l = 0; l < len; ++l) ys[base + l * inner] *= invs;
      }
    }
  }
  ensure_finite(out, "softmax");
  record_op<T>("softmax", {x}, out, [outer, inner, len](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    if (!in[0].requires_grad()) return;
    const T* y = o.data();
    const T* dy = o.grad().data();
    T* dx = in[0].ensure_grad().data();
    if (inner == 1) {
      for (std::int64_t oo = 0; oo < outer; ++oo) {
        const T* yr = y + oo * len;
        const T* dyr = dy + oo * len;
        T* dxr = dx + oo * len;
        T dot{0};
        for (std::int64_t l = 0; l < len; ++l) dot += dyr[l] * yr[l];
        for (std::int64_t l = 0; l < len; ++l) dxr[l] += yr[l] * (dyr[l] - dot);
      }
      return;
    }
    for (std::int64_t oo = 0; oo < outer; ++oo) {
      for (std::int64_t i = 0; i < inner; ++i) {
        const std::int64_t base = oo * len * inner + i;
        T dot{0};
        for (std::int64_t l = 0; l < len; ++l) dot += dy[base + l * inner] * y[base + l * inner];
        for (std::int64_t l = 0; l < len; ++l) {
          const std::int64_t idx = base + l * inner;
          dx[idx] += y[idx] * (dy[idx] - dot);
        }
      }
    }
  });
  return out;
}

namespace {
thread_local KinkWatch* active_watch = nullptr;
}  // namespace

KinkWatch::KinkWatch() : previous_(active_watch) { active_watch = this; }
KinkWatch::~KinkWatch() { active_watch = previous_; }
KinkWatch* KinkWatch::current() { return active_watch; }

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  if (KinkWatch* w = active_watch) {
    std::uint64_t word = 0;
    int bits = 0;
    for (T v : x.values()) {
      word = (word << 1) | (v > T{0} ? 1u : 0u);
      if (++bits == 64) {
        w->fold(word);
        word = 0;
        bits = 0;
      }
    }
    w->fold(word);
  }
  return unary<T>(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T in, T) { return in > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T out) { return out * (T{1} - out); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  ensure_finite(out, "add");
  record_op<T>("add", {a, b}, out, [](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    const auto go = o.grad();
    for (auto& t : in) {
      if (!t.requires_grad()) continue;
      auto g = t.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  ensure_finite(out, "sub");
  record_op<T>("sub", {a, b}, out, [](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    const auto go = o.grad();
    if (in[0].requires_grad()) {
      auto g = in[0].ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
    if (in[1].requires_grad()) {
      auto g = in[1].ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= go[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  ensure_finite(out, "mul");
  record_op<T>("mul", {a, b}, out, [](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    const auto go = o.grad();
    if (in[0].requires_grad()) {
      auto g = in[0].ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * in[1].values()[i];
    }
    if (in[1].requires_grad()) {
      auto g = in[1].ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * in[0].values()[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, PointwiseKind kind, const Tensor<T>& other, T factor) {
  switch (kind) {
    case PointwiseKind::relu:
      return relu(x);
    case PointwiseKind::add:
      return add(x, other);
    case PointwiseKind::scale:
      return scale(x, factor);
  }
  throw DomainError("pointwise: unknown kind");
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
FeatureMap<T> layer_norm(const FeatureMap<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         T eps) {
  expect_feature_map(x, "layer_norm");
  const auto batch = x.dim(0), channels = x.dim(1), positions = x.dim(2) * x.dim(3);
  check_affine(gamma, beta, channels, "layer_norm");
  Tensor<T> out(x.shape());
  std::vector<T> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<T> rstd(static_cast<std::size_t>(batch * positions));
  std::vector<T> mean(static_cast<std::size_t>(positions));
  const T* xs = x.data();
  T* ys = out.data();
  const T inv_c = T{1} / static_cast<T>(channels);
  // Statistics run across channel planes so every inner loop is contiguous.
  for (std::int64_t n = 0; n < batch; ++n) {
    const T* xn = xs + n * channels * positions;
    T* m = mean.data();
    T* r = rstd.data() + n * positions;
    std::fill(m, m + positions, T{0});
    std::fill(r, r + positions, T{0});
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* xc = xn + c * positions;
      for (std::int64_t p = 0; p < positions; ++p) m[p] += xc[p];
    }
    for (std::int64_t p = 0; p < positions; ++p) m[p] *= inv_c;
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* xc = xn + c * positions;
      for (std::int64_t p = 0; p < positions; ++p) {
        const T d = xc[p] - m[p];
        r[p] += d * d;
      }
    }
    for (std::int64_t p = 0; p < positions; ++p) r[p] = T{1} / std::sqrt(r[p] * inv_c + eps);
    for (std::int64_t c = 0; c < channels; ++c) {
      const std::int64_t off = (n * channels + c) * positions;
      const T g = gamma[c], b = beta[c];
      const T* xc = xs + off;
      T* hc = xhat.data() + off;
      T* yc = ys + off;
      for (std::int64_t p = 0; p < positions; ++p) {
        const T h = (xc[p] - m[p]) * r[p];
        hc[p] = h;
        yc[p] = g * h + b;
      }
    }
  }
  ensure_finite(out, "layer_norm");
  record_op<T>("layer_norm", {x, gamma, beta}, out,
               [batch, channels, positions, xhat = std::move(xhat), rstd = std::move(rstd)](
                   Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 const T* dy = o.grad().data();
                 const T* gm = in[1].data();
                 if (in[1].requires_grad() || in[2].requires_grad()) {
                   T* dg = in[1].requires_grad() ? in[1].ensure_grad().data() : nullptr;
                   T* db = in[2].requires_grad() ? in[2].ensure_grad().data() : nullptr;
                   for (std::int64_t c = 0; c < channels; ++c) {
                     T sg{0}, sb{0};
                     for (std::int64_t n = 0; n < batch; ++n) {
                       const std::int64_t off = (n * channels + c) * positions;
                       sg += kernels::dot(dy + off, xhat.data() + off, positions);
                       sb += kernels::sum(dy + off, positions);
                     }
                     if (dg) dg[c] += sg;
                     if (db) db[c] += sb;
                   }
                 }
                 if (!in[0].requires_grad()) return;
                 T* dx = in[0].ensure_grad().data();
                 const T inv_c = T{1} / static_cast<T>(channels);
                 std::vector<T> s1(static_cast<std::size_t>(positions)), s2(s1.size());
                 for (std::int64_t n = 0; n < batch; ++n) {
                   std::fill(s1.begin(), s1.end(), T{0});
                   std::fill(s2.begin(), s2.end(), T{0});
                   for (std::int64_t c = 0; c < channels; ++c) {
                     const std::int64_t off = (n * channels + c) * positions;
                     const T g = gm[c];
                     const T* dc = dy + off;
                     const T* hc = xhat.data() + off;
                     for (std::int64_t p = 0; p < positions; ++p) {
                       const T dh = dc[p] * g;
                       s1[p] += dh;
                       s2[p] += dh * hc[p];
                     }
                   }
                   const T* r = rstd.data() + n * positions;
                   for (std::int64_t c = 0; c < channels; ++c) {
                     const std::int64_t off = (n * channels + c) * positions;
                     const T g = gm[c];
                     const T* dc = dy + off;
                     const T* hc = xhat.data() + off;
                     T* xc = dx + off;
                     for (std::int64_t p = 0; p < positions; ++p) {
                       xc[p] += r[p] * (dc[p] * g - inv_c * s1[p] - hc[p] * inv_c * s2[p]);
                     }
                   }
                 }
               });
  return out;
}

template <typename T>
FeatureMap<T> group_norm(const FeatureMap<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         int groups, T eps) {
  expect_feature_map(x, "group_norm");
  const auto batch = x.dim(0), channels = x.dim(1), positions = x.dim(2) * x.dim(3);
  check_affine(gamma, beta, channels, "group_norm");
  if (groups < 1 || channels % groups != 0) {
    throw DimensionError("group_norm: " + std::to_string(channels) +
                         " channels are not divisible into " + std::to_string(groups) + " groups");
  }
  const std::int64_t per_group = channels / groups;
  const std::int64_t span = per_group * positions;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<T> rstd(static_cast<std::size_t>(batch * groups));
  const T* xs = x.data();
  T* ys = out.data();
  const T inv_m = T{1} / static_cast<T>(span);
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t gi = 0; gi < groups; ++gi) {
      const std::int64_t base = (n * channels + gi * per_group) * positions;
      const T m = kernels::sum(xs + base, span) * inv_m;
      const T r = T{1} / std::sqrt(kernels::sum_sq_dev(xs + base, span, m) * inv_m + eps);
      rstd[static_cast<std::size_t>(n * groups + gi)] = r;
      for (std::int64_t k = 0; k < per_group; ++k) {
        const std::int64_t c = gi * per_group + k;
        const std::int64_t off = base + k * positions;
        const T g = gamma[c], b = beta[c];
        const T* xc = xs + off;
        T* hc = xhat.data() + off;
        T* yc = ys + off;
        for (std::int64_t p = 0; p < positions; ++p) {
          const T h = (xc[p] - m) * r;
          hc[p] = h;
          yc[p] = g * h + b;
        }
      }
    }
  }
  ensure_finite(out, "group_norm");
  record_op<T>("group_norm", {x, gamma, beta}, out,
               [batch, channels, positions, groups, per_group, span, xhat = std::move(xhat),
                rstd = std::move(rstd)](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 const T* dy = o.grad().data();
                 const T* gm = in[1].data();
                 // Per (sample, channel): sum(dy) and sum(dy * xhat).
                 std::vector<T> sb(static_cast<std::size_t>(batch * channels)), sg(sb.size());
                 for (std::int64_t i = 0; i < batch * channels; ++i) {
                   sb[static_cast<std::size_t>(i)] = kernels::sum(dy + i * positions, positions);
                   sg[static_cast<std::size_t>(i)] =
                       kernels::dot(dy + i * positions, xhat.data() + i * positions, positions);
                 }
                 if (in[1].requires_grad() || in[2].requires_grad()) {
                   T* dg = in[1].requires_grad() ? in[1].ensure_grad().data() : nullptr;
                   T* db = in[2].requires_grad() ? in[2].ensure_grad().data() : nullptr;
                   for (std::int64_t c = 0; c < channels; ++c) {
                     T tg{0}, tb{0};
                     for (std::int64_t n = 0; n < batch; ++n) {
                       tg += sg[static_cast<std::size_t>(n * channels + c)];
                       tb += sb[static_cast<std::size_t>(n * channels + c)];
                     }
                     if (dg) dg[c] += tg;
                     if (db) db[c] += tb;
                   }
                 }
                 if (!in[0].requires_grad()) return;
                 T* dx = in[0].ensure_grad().data();
                 const T inv_m = T{1} / static_cast<T>(span);
                 for (std::int64_t n = 0; n < batch; ++n) {
                   for (std::int64_t gi = 0; gi < groups; ++gi) {
                     T s1{0}, s2{0};
                     for (std::int64_t k = 0; k < per_group; ++k) {
                       const std::int64_t c = gi * per_group + k;
                       s1 += gm[c] * sb[static_cast<std::size_t>(n * channels + c)];
                       s2 += gm[c] * sg[static_cast<std::size_t>(n * channels + c)];
                     }
                     const T r = rstd[static_cast<std::size_t>(n * groups + gi)];
                     const T a1 = inv_m * s1, a2 = inv_m * s2;
                     for (std::int64_t k = 0; k < per_group; ++k) {
                       const std::int64_t c = gi * per_group + k;
                       const std::int64_t off = (n * channels + c) * positions;
                       const T g = gm[c];
                       const T* dc = dy + off;
                       const T* hc = xhat.data() + off;
                       T* xc = dx + off;
                       for (std::int64_t p = 0; p < positions; ++p) {
                         xc[p] += r * (dc[p] * g - a1 - hc[p] * a2);
                       }
                     }
                   }
                 }
               });
  return out;
}

template <typename T>
FeatureMap<T> normalize(const FeatureMap<T>& x, NormKind kind, const Tensor<T>& gamma,
                        const Tensor<T>& beta, int groups, T eps) {
  return kind == NormKind::layer_norm ? layer_norm(x, gamma, beta, eps)
                                      : group_norm(x, gamma, beta, groups, eps);
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
  record_op<T>("reshape", {x}, out, [](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    if (!in[0].requires_grad()) return;
    auto g = in[0].ensure_grad();
    const auto go = o.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
  });
  return out;
}

template <typename T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b) {
  expect_feature_map(a, "concat_channels");
  expect_feature_map(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ outside the channel axis");
  }
  const auto batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), positions = a.dim(2) * a.dim(3);
  Tensor<T> out({batch, ca + cb, a.dim(2), a.dim(3)});
  for (std::int64_t n = 0; n < batch; ++n) {
    std::copy_n(a.data() + n * ca * positions, ca * positions, out.data() + n * (ca + cb) * positions);
    std::copy_n(b.data() + n * cb * positions, cb * positions,
                out.data() + (n * (ca + cb) + ca) * positions);
  }
  record_op<T>("concat_channels", {a, b}, out,
               [batch, ca, cb, positions](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 const T* go = o.grad().data();
                 for (std::int64_t n = 0; n < batch; ++n) {
                   if (in[0].requires_grad()) {
                     T* g = in[0].ensure_grad().data() + n * ca * positions;
                     const T* src = go + n * (ca + cb) * positions;
                     for (std::int64_t i = 0; i < ca * positions; ++i) g[i] += src[i];
                   }
                   if (in[1].requires_grad()) {
                     T* g = in[1].ensure_grad().data() + n * cb * positions;
                     const T* src = go + (n * (ca + cb) + ca) * positions;
                     for (std::int64_t i = 0; i < cb * positions; ++i) g[i] += src[i];
                   }
                 }
               });
  return out;
}

template <typename T>
FeatureMap<T> channel_broadcast_mul(const FeatureMap<T>& x, const FeatureMap<T>& g) {
  expect_feature_map(x, "channel_broadcast_mul");
  expect_feature_map(g, "channel_broadcast_mul");
  if (g.dim(1) != 1 || g.dim(0) != x.dim(0) || g.dim(2) != x.dim(2) || g.dim(3) != x.dim(3)) {
    throw DimensionError("channel_broadcast_mul: gate " + shape_string(g.shape()) +
                         " cannot broadcast over " + shape_string(x.shape()));
  }
  const auto batch = x.dim(0), channels = x.dim(1), positions = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t c = 0; c < channels; ++c) {
      for (std::int64_t p = 0; p < positions; ++p) {
        const std::int64_t idx = (n * channels + c) * positions + p;
        out[idx] = x[idx] * g[n * positions + p];
      }
    }
  }
  ensure_finite(out, "channel_broadcast_mul");
  record_op<T>("channel_broadcast_mul", {x, g}, out,
               [batch, channels, positions](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 const T* go = o.grad().data();
                 Tensor<T>& tx = in[0];
                 Tensor<T>& tg = in[1];
                 T* dx = tx.requires_grad() ? tx.ensure_grad().data() : nullptr;
                 T* dg = tg.requires_grad() ? tg.ensure_grad().data() : nullptr;
                 for (std::int64_t n = 0; n < batch; ++n) {
                   for (std::int64_t c = 0; c < channels; ++c) {
                     for (std::int64_t p = 0; p < positions; ++p) {
                       const std::int64_t idx = (n * channels + c) * positions + p;
                       if (dx) dx[idx] += go[idx] * tg[n * positions + p];
                       if (dg) dg[n * positions + p] += go[idx] * tx[idx];
                     }
                   }
                 }
               });
  return out;
}

template <typename T>
Tensor<T> to_heads(const FeatureMap<T>& x, int heads) {
  expect_feature_map(x, "to_heads");
  const auto batch = x.dim(0), channels = x.dim(1), positions = x.dim(2) * x.dim(3);
  if (heads < 1 || channels % heads != 0) {
    throw DimensionError("attention: " + std::to_string(channels) +
                         " channels are not divisible by " + std::to_string(heads) + " heads");
  }
  const std::int64_t d = channels / heads;
  Tensor<T> out({batch * heads, positions, d});
  const T* xs = x.data();
  T* ys = out.data();
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t j = 0; j < d; ++j) {
        const T* src = xs + (n * channels + h * d + j) * positions;
        T* dst = ys + (n * heads + h) * positions * d + j;
        for (std::int64_t p = 0; p < positions; ++p) dst[p * d] = src[p];
      }
    }
  }
  record_op<T>("to_heads", {x}, out,
               [batch, channels, positions, heads, d](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 if (!in[0].requires_grad()) return;
                 const T* go = o.grad().data();
                 T* gx = in[0].ensure_grad().data();
                 for (std::int64_t n = 0; n < batch; ++n) {
                   for (std::int64_t h = 0; h < heads; ++h) {
                     for (std::int64_t j = 0; j < d; ++j) {
                       T* dst = gx + (n * channels + h * d + j) * positions;
                       const T* src = go + (n * heads + h) * positions * d + j;
                       for (std::int64_t p = 0; p < positions; ++p) dst[p] += src[p * d];
                     }
                   }
                 }
               });
  return out;
}

template <typename T>
FeatureMap<T> from_heads(const Tensor<T>& x, int heads, std::int64_t height, std::int64_t width) {
  if (x.rank() != 3 || heads < 1 || x.dim(0) % heads != 0 || x.dim(1) != height * width) {
    throw DimensionError("from_heads: " + shape_string(x.shape()) + " is not a (batch*" +
                         std::to_string(heads) + ", " + std::to_string(height * width) +
                         ", head_dim) tensor");
  }
  const std::int64_t batch = x.dim(0) / heads, d = x.dim(2), positions = height * width;
  const std::int64_t channels = d * heads;
  Tensor<T> out({batch, channels, height, width});
  const T* xs = x.data();
  T* ys = out.data();
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t j = 0; j < d; ++j) {
        T* dst = ys + (n * channels + h * d + j) * positions;
        const T* src = xs + (n * heads + h) * positions * d + j;
        for (std::int64_t p = 0; p < positions; ++p) dst[p] = src[p * d];
      }
    }
  }
  record_op<T>("from_heads", {x}, out,
               [batch, channels, positions, heads, d](Tensor<T>& o, std::vector<Tensor<T>>& in) {
                 if (!in[0].requires_grad()) return;
                 const T* go = o.grad().data();
                 T* gx = in[0].ensure_grad().data();
                 for (std::int64_t n = 0; n < batch; ++n) {
                   for (std::int64_t h = 0; h < heads; ++h) {
                     for (std::int64_t j = 0; j < d; ++j) {
                       const T* src = go + (n * channels + h * d + j) * positions;
                       T* dst = gx + (n * heads + h) * positions * d + j;
                       for (std::int64_t p = 0; p < positions; ++p) dst[p * d] += src[p];
                     }
                   }
                 }
               });
  return out;
}

template <typename T>
Tensor<T> nchw_to_rows(const FeatureMap<T>& x) {
  expect_feature_map(x, "nchw_to_rows");
  const auto batch = x.dim(0), k = x.dim(1), positions = x.dim(2) * x.dim(3);
  Tensor<T> out({batch * positions, k});
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t c = 0; c < k; ++c) {
      for (std::int64_t p = 0; p < positions; ++p) {
        out[(n * positions + p) * k + c] = x[(n * k + c) * positions + p];
      }
    }
  }
  record_op<T>("nchw_to_rows", {x}, out, [batch, k, positions](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    if (!in[0].requires_grad()) return;
    const T* go = o.grad().data();
    T* gx = in[0].ensure_grad().data();
    for (std::int64_t n = 0; n < batch; ++n) {
      for (std::int64_t c = 0; c < k; ++c) {
        for (std::int64_t p = 0; p < positions; ++p) {
          gx[(n * k + c) * positions + p] += go[(n * positions + p) * k + c];
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s{0};
  for (T v : x.values()) s += v;
  Tensor<T> out = Tensor<T>::scalar(s);
  ensure_finite(out, "sum");
  record_op<T>("sum", {x}, out, [](Tensor<T>& o, std::vector<Tensor<T>>& in) {
    if (!in[0].requires_grad()) return;
    const T go = o.grad()[0];
    for (T& g : in[0].ensure_grad()) g += go;
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

#define TRANSIAM_INSTANTIATE(T)                                                                  \
  template void ensure_finite<T>(const Tensor<T>&, const char*);                                \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> bmm<T>(const Tensor<T>&, const Tensor<T>&, bool);                          \
  template FeatureMap<T> conv2d<T>(const FeatureMap<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                                   int);                                                         \
  template FeatureMap<T> depthwise_conv2d<T>(const FeatureMap<T>&, const Tensor<T>&, int, int); \
  template FeatureMap<T> conv_transpose2d<T>(const FeatureMap<T>&, const Tensor<T>&,            \
                                             const Tensor<T>&, int);                             \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                         \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                              \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                             \
  template Tensor<T> pointwise<T>(const Tensor<T>&, PointwiseKind, const Tensor<T>&, T);        \
  template FeatureMap<T> layer_norm<T>(const FeatureMap<T>&, const Tensor<T>&, const Tensor<T>&, \
                                       T);                                                       \
  template FeatureMap<T> group_norm<T>(const FeatureMap<T>&, const Tensor<T>&, const Tensor<T>&, \
                                       int, T);                                                  \
  template FeatureMap<T> normalize<T>(const FeatureMap<T>&, NormKind, const Tensor<T>&,         \
                                      const Tensor<T>&, int, T);                                 \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                       \
  template FeatureMap<T> concat_channels<T>(const FeatureMap<T>&, const FeatureMap<T>&);        \
  template FeatureMap<T> channel_broadcast_mul<T>(const FeatureMap<T>&, const FeatureMap<T>&);  \
  template Tensor<T> to_heads<T>(const FeatureMap<T>&, int);                                    \
  template FeatureMap<T> from_heads<T>(const Tensor<T>&, int, std::int64_t, std::int64_t);      \
  template Tensor<T> nchw_to_rows<T>(const FeatureMap<T>&);                                     \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                  \
  template Tensor<T> mean<T>(const Tensor<T>&);

TRANSIAM_INSTANTIATE(float)
TRANSIAM_INSTANTIATE(double)
#undef TRANSIAM_INSTANTIATE

}  // namespace transiam

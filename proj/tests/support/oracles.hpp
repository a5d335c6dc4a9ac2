#pragma once

// Reference implementations written directly from the textbook definitions.
// They share no code with the library kernels and exist only to produce
// expected values for tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "transiam/rng.hpp"
#include "transiam/tensor.hpp"

namespace transiam::oracle {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m * n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

/// Direct sliding-window cross-correlation, NCHW, w [co, ci, kh, kw].
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>& bias, int n, int ci, int h, int wd,
                                  int co, int kh, int kw, int stride, int pad, int& oh, int& ow) {
  oh = (h + 2 * pad - kh) / stride + 1;
  ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> y(static_cast<std::size_t>(n * co * oh * ow), 0.0);
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < co; ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (int c = 0; c < ci; ++c)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int iy = oy * stride - pad + i;
                const int ix = ox * stride - pad + j;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x[((b * ci + c) * h + iy) * wd + ix] * w[((o * ci + c) * kh + i) * kw + j];
              }
          y[((b * co + o) * oh + oy) * ow + ox] = acc;
        }
  return y;
}

/// Per-channel sliding window, w [c, 1, kh, kw].
inline std::vector<double> depthwise(const std::vector<double>& x, const std::vector<double>& w,
                                     int n, int c, int h, int wd, int kh, int kw, int stride,
                                     int pad, int& oh, int& ow) {
  oh = (h + 2 * pad - kh) / stride + 1;
  ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> y(static_cast<std::size_t>(n * c * oh * ow), 0.0);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
              const int iy = oy * stride - pad + i;
              const int ix = ox * stride - pad + j;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += x[((b * c + ch) * h + iy) * wd + ix] * w[(ch * kh + i) * kw + j];
            }
          y[((b * c + ch) * oh + oy) * ow + ox] = acc;
        }
  return y;
}

/// Scatter form of the transposed convolution: every input pixel stamps the
/// kernel, scaled by its value, at stride-spaced output locations.
/// w [ci, co, kh, kw].
inline std::vector<double> conv_transpose(const std::vector<double>& x, const std::vector<double>& w,
                                          int n, int ci, int h, int wd, int co, int kh, int kw,
                                          int stride, int& oh, int& ow) {
  oh = (h - 1) * stride + kh;
  ow = (wd - 1) * stride + kw;
  std::vector<double> y(static_cast<std::size_t>(n * co * oh * ow), 0.0);
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < ci; ++c)
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < wd; ++ix) {
          const double v = x[((b * ci + c) * h + iy) * wd + ix];
          for (int o = 0; o < co; ++o)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j)
                y[((b * co + o) * oh + iy * stride + i) * ow + ix * stride + j] +=
                    v * w[((c * co + o) * kh + i) * kw + j];
        }
  return y;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  std::vector<double> e(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(x[i]);
    s += e[i];
  }
  for (double& v : e) v /= s;
  return e;
}

/// Single-head attention over rows: softmax(q k^T / sqrt(d)) v, q/k/v [P x d].
inline std::vector<double> attention(const std::vector<double>& q, const std::vector<double>& k,
                                     const std::vector<double>& v, int positions, int d) {
  std::vector<double> out(static_cast<std::size_t>(positions * d), 0.0);
  for (int i = 0; i < positions; ++i) {
    std::vector<double> scores(static_cast<std::size_t>(positions));
    for (int j = 0; j < positions; ++j) {
      double s = 0.0;
      for (int t = 0; t < d; ++t) s += q[i * d + t] * k[j * d + t];
      scores[j] = s / std::sqrt(static_cast<double>(d));
    }
    const auto p = softmax(scores);
    for (int j = 0; j < positions; ++j)
      for (int t = 0; t < d; ++t) out[i * d + t] += p[j] * v[j * d + t];
  }
  return out;
}

/// Per-position normalization over channels of a single [C x P] map.
inline std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gamma,
                                      const std::vector<double>& beta, int c, int positions,
                                      double eps = 1e-5) {
  std::vector<double> y(x.size());
  for (int p = 0; p < positions; ++p) {
    double m = 0.0;
    for (int ch = 0; ch < c; ++ch) m += x[ch * positions + p];
    m /= c;
    double var = 0.0;
    for (int ch = 0; ch < c; ++ch) var += (x[ch * positions + p] - m) * (x[ch * positions + p] - m);
    var /= c;
    for (int ch = 0; ch < c; ++ch) {
      y[ch * positions + p] = gamma[ch] * (x[ch * positions + p] - m) / std::sqrt(var + eps) + beta[ch];
    }
  }
  return y;
}

/// Multi-head attention on [C x P] maps: channels [h*d, (h+1)*d) form head h.
/// Returns the concatenated [C x P] result.
inline std::vector<double> multi_head(const std::vector<double>& q, const std::vector<double>& k,
                                      const std::vector<double>& v, int c, int positions, int heads) {
  const int d = c / heads;
  std::vector<double> out(static_cast<std::size_t>(c * positions));
  for (int h = 0; h < heads; ++h) {
    std::vector<double> qh(static_cast<std::size_t>(positions * d)), kh(qh.size()), vh(qh.size());
    for (int p = 0; p < positions; ++p)
      for (int j = 0; j < d; ++j) {
        qh[p * d + j] = q[(h * d + j) * positions + p];
        kh[p * d + j] = k[(h * d + j) * positions + p];
        vh[p * d + j] = v[(h * d + j) * positions + p];
      }
    const auto oh = attention(qh, kh, vh, positions, d);
    for (int p = 0; p < positions; ++p)
      for (int j = 0; j < d; ++j) out[(h * d + j) * positions + p] = oh[p * d + j];
  }
  return out;
}

}  // namespace transiam::oracle

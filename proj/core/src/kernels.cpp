#include "kernels.hpp"

#include <Eigen/Core>

namespace transiam::kernels {

template <typename T>
void gemm(bool transpose_a, bool transpose_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const T* a, const T* b, T* c, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> cm(c, m, n);
  if (k == 0) {
    if (!accumulate) cm.setZero();
    return;
  }
  ConstMap am(a, transpose_a ? k : m, transpose_a ? m : k);
  ConstMap bm(b, transpose_b ? n : k, transpose_b ? k : n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      cm.noalias() += lhs * rhs;
    } else {
      cm.noalias() = lhs * rhs;
    }
  };
  if (!transpose_a && !transpose_b) {
    run(am, bm);
  } else if (transpose_a && !transpose_b) {
    run(am.transpose(), bm);
  } else if (!transpose_a && transpose_b) {
    run(am, bm.transpose());
  } else {
    run(am.transpose(), bm.transpose());
  }
}

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col, std::int64_t col_stride,
            std::int64_t col_offset) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const std::int64_t row = (c * g.kh + i) * g.kw + j;
        T* dst = col + row * col_stride + col_offset;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + i;
          T* line = dst + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            for (std::int64_t ox = 0; ox < g.out_w; ++ox) line[ox] = T{0};
            continue;
          }
          const T* src = plane + iy * g.width;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + j;
            line[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image, std::int64_t col_stride,
            std::int64_t col_offset) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const std::int64_t row = (c * g.kh + i) * g.kw + j;
        const T* src = col + row * col_stride + col_offset;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + i;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = plane + iy * g.width;
          const T* line = src + oy * g.out_w;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + j;
            if (ix >= 0 && ix < g.width) dst[ix] += line[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void softmax_rows(const T* x, T* y, std::int64_t rows, std::int64_t len) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  for (std::int64_t r = 0; r < rows; ++r) {
    Eigen::Map<const Arr> in(x + r * len, len);
    Eigen::Map<Arr> out(y + r * len, len);
    out = (in - in.maxCoeff()).exp();
    out *= T{1} / out.sum();
  }
}

#define TRANSIAM_INSTANTIATE(T)                                                              \
  template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, const T*,     \
                        const T*, T*, bool);                                                 \
  template void im2col<T>(const T*, const ConvGeometry&, T*, std::int64_t, std::int64_t);   \
  template void col2im<T>(const T*, const ConvGeometry&, T*, std::int64_t, std::int64_t);  \
  template void softmax_rows<T>(const T*, T*, std::int64_t, std::int64_t);

TRANSIAM_INSTANTIATE(float)
TRANSIAM_INSTANTIATE(double)
#undef TRANSIAM_INSTANTIATE

}  // namespace transiam::kernels

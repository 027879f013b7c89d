#include "dualglob/kernels.hpp"

#include <Eigen/Core>
#include <omp.h>

#include <algorithm>
#include <vector>

namespace dualglob::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;

inline std::ptrdiff_t sz(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

// cols[(ci * K + k), (b * Lout + t)] = x[b, ci, t * stride + k - pad]
template <typename T>
void im2col(const Conv1dGeometry& g, const T* x, T* cols) {
  const std::size_t lout = g.out_length();
  const std::size_t pad = g.pad_left();
  const std::size_t width = g.batch * lout;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < sz(g.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      const T* xr = x + (b * g.in_channels + ci) * g.length;
      for (std::size_t k = 0; k < g.kernel; ++k) {
        T* row = cols + (ci * g.kernel + k) * width + b * lout;
        for (std::size_t t = 0; t < lout; ++t) {
          const std::ptrdiff_t src = sz(t * g.stride + k) - sz(pad);
          row[t] = (src >= 0 && src < sz(g.length)) ? xr[src] : T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const Conv1dGeometry& g, const T* cols, T* dx) {
  const std::size_t lout = g.out_length();
  const std::size_t pad = g.pad_left();
  const std::size_t width = g.batch * lout;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < sz(g.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      T* dxr = dx + (b * g.in_channels + ci) * g.length;
      for (std::size_t k = 0; k < g.kernel; ++k) {
        const T* row = cols + (ci * g.kernel + k) * width + b * lout;
        for (std::size_t t = 0; t < lout; ++t) {
          const std::ptrdiff_t src = sz(t * g.stride + k) - sz(pad);
          if (src >= 0 && src < sz(g.length)) dxr[src] += row[t];
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> buffers[3];
  return buffers[slot];
}

}  // namespace

namespace reference {

template <typename T>
void conv1d_forward(const Conv1dGeometry& g, const T* x, const T* w, const T* b, T* y) {
  const std::size_t lout = g.out_length();
  const std::ptrdiff_t pad = sz(g.pad_left());
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      for (std::size_t t = 0; t < lout; ++t) {
        T acc = b ? b[co] : T(0);
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          for (std::size_t k = 0; k < g.kernel; ++k) {
            const std::ptrdiff_t src = sz(t * g.stride + k) - pad;
            if (src < 0 || src >= sz(g.length)) continue;
            acc += w[(co * g.in_channels + ci) * g.kernel + k] *
                   x[(n * g.in_channels + ci) * g.length + static_cast<std::size_t>(src)];
          }
        }
        y[(n * g.out_channels + co) * lout + t] = acc;
      }
    }
  }
}

template <typename T>
void conv1d_backward(const Conv1dGeometry& g, const T* x, const T* w, const T* dy, T* dx,
                     T* dw, T* db) {
  const std::size_t lout = g.out_length();
  const std::ptrdiff_t pad = sz(g.pad_left());
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      for (std::size_t t = 0; t < lout; ++t) {
        const T gy = dy[(n * g.out_channels + co) * lout + t];
        if (db) db[co] += gy;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          for (std::size_t k = 0; k < g.kernel; ++k) {
            const std::ptrdiff_t src = sz(t * g.stride + k) - pad;
            if (src < 0 || src >= sz(g.length)) continue;
            const std::size_t xi = (n * g.in_channels + ci) * g.length + static_cast<std::size_t>(src);
            const std::size_t wi = (co * g.in_channels + ci) * g.kernel + k;
            if (dw) dw[wi] += gy * x[xi];
            if (dx) dx[xi] += gy * w[wi];
          }
        }
      }
    }
  }
}

template <typename T>
void masked_gap_forward(std::size_t batch, std::size_t channels, std::size_t length,
                        const T* x, const std::uint8_t* mask, T* y) {
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < length; ++t) count += mask[b * length + t] ? 1 : 0;
    for (std::size_t c = 0; c < channels; ++c) {
      T acc = 0;
      for (std::size_t t = 0; t < length; ++t)
        if (mask[b * length + t]) acc += x[(b * channels + c) * length + t];
      y[b * channels + c] = count ? acc / static_cast<T>(count) : T(0);
    }
  }
}

template <typename T>
void masked_gap_backward(std::size_t batch, std::size_t channels, std::size_t length,
                         const std::uint8_t* mask, const T* dy, T* dx) {
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < length; ++t) count += mask[b * length + t] ? 1 : 0;
    if (!count) continue;
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < length; ++t)
        if (mask[b * length + t])
          dx[(b * channels + c) * length + t] += dy[b * channels + c] / static_cast<T>(count);
  }
}

template <typename T>
void linear_forward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,
                    const T* b, T* y) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      T acc = b ? b[o] : T(0);
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[n * in + i];
      y[n * out + o] = acc;
    }
}

template <typename T>
void linear_backward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* db) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      const T g = dy[n * out + o];
      if (db) db[o] += g;
      for (std::size_t i = 0; i < in; ++i) {
        if (dw) dw[o * in + i] += g * x[n * in + i];
        if (dx) dx[n * in + i] += g * w[o * in + i];
      }
    }
}

}  // namespace reference

namespace parallel {

template <typename T>
void conv1d_forward(const Conv1dGeometry& g, const T* x, const T* w, const T* b, T* y) {
  const std::size_t lout = g.out_length();
  const std::size_t rows = g.in_channels * g.kernel;
  const std::size_t width = g.batch * lout;
  auto& cols = scratch<T>(0);
  auto& prod = scratch<T>(1);
  cols.resize(rows * width);
  prod.resize(g.out_channels * width);
  im2col(g, x, cols.data());

  CMap<T> W(w, sz(g.out_channels), sz(rows));
  CMap<T> C(cols.data(), sz(rows), sz(width));
  Map<T> Y(prod.data(), sz(g.out_channels), sz(width));
  Y.noalias() = W * C;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ni = 0; ni < sz(g.batch); ++ni) {
    const auto n = static_cast<std::size_t>(ni);
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T bias = b ? b[co] : T(0);
      const T* src = prod.data() + co * width + n * lout;
      T* dst = y + (n * g.out_channels + co) * lout;
      for (std::size_t t = 0; t < lout; ++t) dst[t] = src[t] + bias;
    }
  }
}

template <typename T>
void conv1d_backward(const Conv1dGeometry& g, const T* x, const T* w, const T* dy, T* dx,
                     T* dw, T* db) {
  const std::size_t lout = g.out_length();
  const std::size_t rows = g.in_channels * g.kernel;
  const std::size_t width = g.batch * lout;
  auto& dyf = scratch<T>(1);
  dyf.resize(g.out_channels * width);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ni = 0; ni < sz(g.batch); ++ni) {
    const auto n = static_cast<std::size_t>(ni);
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T* src = dy + (n * g.out_channels + co) * lout;
      std::copy(src, src + lout, dyf.data() + co * width + n * lout);
    }
  }
  Map<T> DY(dyf.data(), sz(g.out_channels), sz(width));
  if (db) {
    // plain loop: Eigen's vectorized sum peels by address, so its order would
    // depend on where the scratch buffer landed
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T* row = dyf.data() + co * width;
      T acc = 0;
      for (std::size_t i = 0; i < width; ++i) acc += row[i];
      db[co] += acc;
    }
  }
  if (dw) {
    auto& cols = scratch<T>(0);
    cols.resize(rows * width);
    im2col(g, x, cols.data());
    CMap<T> C(cols.data(), sz(rows), sz(width));
    Map<T> DW(dw, sz(g.out_channels), sz(rows));
    DW.noalias() += DY * C.transpose();
  }
  if (dx) {
    auto& dcols = scratch<T>(2);
    dcols.resize(rows * width);
    CMap<T> W(w, sz(g.out_channels), sz(rows));
    Map<T> DC(dcols.data(), sz(rows), sz(width));
    DC.noalias() = W.transpose() * DY;
    col2im_add(g, dcols.data(), dx);
  }
}

template <typename T>
void masked_gap_forward(std::size_t batch, std::size_t channels, std::size_t length,
                        const T* x, const std::uint8_t* mask, T* y) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < sz(batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    const std::uint8_t* m = mask + b * length;
    std::size_t count = 0;
    for (std::size_t t = 0; t < length; ++t) count += m[t] ? 1 : 0;
    for (std::size_t c = 0; c < channels; ++c) {
      const T* xr = x + (b * channels + c) * length;
      T acc = 0;
      for (std::size_t t = 0; t < length; ++t) acc += m[t] ? xr[t] : T(0);
      y[b * channels + c] = count ? acc / static_cast<T>(count) : T(0);
    }
  }
}

template <typename T>
void masked_gap_backward(std::size_t batch, std::size_t channels, std::size_t length,
                         const std::uint8_t* mask, const T* dy, T* dx) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < sz(batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    const std::uint8_t* m = mask + b * length;
    std::size_t count = 0;
    for (std::size_t t = 0; t < length; ++t) count += m[t] ? 1 : 0;
    if (!count) continue;
    const T inv = T(1) / static_cast<T>(count);
    for (std::size_t c = 0; c < channels; ++c) {
      const T g = dy[b * channels + c] * inv;
      T* dxr = dx + (b * channels + c) * length;
      for (std::size_t t = 0; t < length; ++t)
        if (m[t]) dxr[t] += g;
    }
  }
}

template <typename T>
void linear_forward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,
                    const T* b, T* y) {
  CMap<T> X(x, sz(batch), sz(in));
  CMap<T> W(w, sz(out), sz(in));
  Map<T> Y(y, sz(batch), sz(out));
  Y.noalias() = X * W.transpose();
  if (b) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(b, sz(out));
    Y.rowwise() += B;
  }
}

template <typename T>
void linear_backward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,
                     const T* dy, T* dx, T* dw, T* db) {
  CMap<T> X(x, sz(batch), sz(in));
  CMap<T> W(w, sz(out), sz(in));
  CMap<T> DY(dy, sz(batch), sz(out));
  if (dx) {
    Map<T> DX(dx, sz(batch), sz(in));
    DX.noalias() += DY * W;
  }
  if (dw) {
    Map<T> DW(dw, sz(out), sz(in));
    DW.noalias() += DY.transpose() * X;
  }
  if (db) {
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t o = 0; o < out; ++o) db[o] += dy[n * out + o];
  }
}

}  // namespace parallel

void downsample_mask(std::size_t batch, std::size_t length, std::size_t stride,
                     const std::uint8_t* in, std::uint8_t* out) {
  const std::size_t lout = (length + stride - 1) / stride;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < lout; ++j) {
      std::uint8_t any = 0;
      const std::size_t end = std::min(length, (j + 1) * stride);
      for (std::size_t t = j * stride; t < end; ++t) any |= in[b * length + t] ? 1 : 0;
      out[b * lout + j] = any;
    }
  }
}

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }

int num_threads() { return omp_get_max_threads(); }

#define DUALGLOB_INSTANTIATE_KERNELS(NS, T)                                                    \
  template void NS::conv1d_forward<T>(const Conv1dGeometry&, const T*, const T*, const T*, T*); \
  template void NS::conv1d_backward<T>(const Conv1dGeometry&, const T*, const T*, const T*, T*, \
                                       T*, T*);                                                 \
  template void NS::masked_gap_forward<T>(std::size_t, std::size_t, std::size_t, const T*,      \
                                          const std::uint8_t*, T*);                             \
  template void NS::masked_gap_backward<T>(std::size_t, std::size_t, std::size_t,               \
                                           const std::uint8_t*, const T*, T*);                  \
  template void NS::linear_forward<T>(std::size_t, std::size_t, std::size_t, const T*,          \
                                      const T*, const T*, T*);                                  \
  template void NS::linear_backward<T>(std::size_t, std::size_t, std::size_t, const T*,         \
                                       const T*, const T*, T*, T*, T*);

DUALGLOB_INSTANTIATE_KERNELS(reference, float)
DUALGLOB_INSTANTIATE_KERNELS(reference, double)
DUALGLOB_INSTANTIATE_KERNELS(parallel, float)
DUALGLOB_INSTANTIATE_KERNELS(parallel, double)

#undef DUALGLOB_INSTANTIATE_KERNELS

}  // namespace dualglob::kernels

#pragma once

// Numeric kernels behind the autograd ops. `reference` holds direct loop
// implementations kept as the test oracle; `parallel` holds the
// im2col + GEMM versions with OpenMP over the batch that training uses.
// Backward kernels accumulate into their outputs; pass nullptr to skip one.

#include <cstddef>
#include <cstdint>

namespace dualglob::kernels {

struct Conv1dGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t length = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;

  // "same" padding: ceil(length / stride) outputs.
  std::size_t out_length() const { return (length + stride - 1) / stride; }
  std::size_t pad_left() const {
    const std::size_t span = (out_length() - 1) * stride + kernel;
    return span > length ? (span - length) / 2 : 0;
  }
};

namespace reference {

template <typename T>
void conv1d_forward(const Conv1dGeometry& g, const T* x, const T* w, const T* b, T* y);
template <typename T>
void conv1d_backward(const Conv1dGeometry& g, const T* x, const T* w, const T* dy, T* dx,
                     T* dw, T* db);

template <typename T>
void masked_gap_forward(std::size_t batch, std::size_t channels, std::size_t length,
                        const T* x, const std::uint8_t* mask, T* y);
template <typename T>
void masked_gap_backward(std::size_t batch, std::size_t channels, std::size_t length,
                         const std::uint8_t* mask, const T* dy, T* dx);

template <typename T>
void linear_forward(std::size_t batch, std::size_t in, std::size_t out, const T* x,
                    const T* w, const T* b, T* y);
template <typename T>
void linear_backward(std::size_t batch, std::size_t in, std::size_t out, const T* x,
                     const T* w, const T* dy, T* dx, T* dw, T* db);

}  // namespace reference

namespace parallel {

template <typename T>
void conv1d_forward(const Conv1dGeometry& g, const T* x, const T* w, const T* b, T* y);
template <typename T>
void conv1d_backward(const Conv1dGeometry& g, const T* x, const T* w, const T* dy, T* dx,
                     T* dw, T* db);

template <typename T>
void masked_gap_forward(std::size_t batch, std::size_t channels, std::size_t length,
                        const T* x, const std::uint8_t* mask, T* y);
template <typename T>
void masked_gap_backward(std::size_t batch, std::size_t channels, std::size_t length,
                         const std::uint8_t* mask, const T* dy, T* dx);

template <typename T>
void linear_forward(std::size_t batch, std::size_t in, std::size_t out, const T* x,
                    const T* w, const T* b, T* y);
template <typename T>
void linear_backward(std::size_t batch, std::size_t in, std::size_t out, const T* x,
                     const T* w, const T* dy, T* dx, T* dw, T* db);

}  // namespace parallel

// Logical OR over consecutive windows of `stride` frames; output length is
// ceil(length / stride), matching the conv output length.
void downsample_mask(std::size_t batch, std::size_t length, std::size_t stride,
                     const std::uint8_t* in, std::uint8_t* out);

// Thread count used by the parallel kernels (wraps omp_set_num_threads).
void set_num_threads(int n);
int num_threads();

}  // namespace dualglob::kernels

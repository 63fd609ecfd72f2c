#pragma once

// Compute kernels behind the differentiable ops. The gcnet::kernels versions
// are OpenMP-parallel over output coordinates; gcnet::reference holds the
// serial textbook loops they are tested and benchmarked against.
//
// Every kernel accumulates each output element in a fixed sequential order,
// so results do not depend on the thread count.

#include <array>
#include <cstddef>

namespace gcnet {

/// Geometry of a forward (down-sampling) convolution over NDHWC data with a
/// single batch. 2-D convolutions are lifted to depth 1 and kernel depth 1.
/// For a transposed convolution, `in` is the large output side and `out` the
/// small input side, so the same geometry describes both directions.
struct ConvGeometry {
  std::array<std::size_t, 3> in{1, 1, 1};
  std::array<std::size_t, 3> out{1, 1, 1};
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  std::size_t in_voxels() const { return in[0] * in[1] * in[2]; }
  std::size_t out_voxels() const { return out[0] * out[1] * out[2]; }
  std::size_t taps() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::size_t weight_size() const { return taps() * in_channels * out_channels; }
};

/// "Same" zero padding: stride 1 preserves the extent, stride s yields ceil(n/s).
ConvGeometry make_conv_geometry(std::array<std::size_t, 3> in, std::array<std::size_t, 3> kernel,
                                std::array<std::size_t, 3> stride, std::size_t in_channels,
                                std::size_t out_channels);

namespace kernels {

/// y[out, Cout] = bias + sum_{tap, ci} x[in(out, tap), ci] * w[tap, ci, co]
template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

/// Adjoint of conv_forward in x: x[in, Cin] = sum_{out, tap -> in} w[tap, ci, co] * y[out, co].
template <typename T>
void conv_transpose(const ConvGeometry& g, const T* y, const T* w, T* x);

/// dw[tap, ci, co] = sum_out x[in(out, tap), ci] * dy[out, co]  (overwrites dw)
template <typename T>
void conv_weight_grad(const ConvGeometry& g, const T* x, const T* dy, T* dw);

/// db[co] = sum_voxels dy[voxel, co]  (overwrites db)
template <typename T>
void channel_sum(std::size_t voxels, std::size_t channels, const T* dy, T* db);

/// Left-referenced concatenation volume: vol[d, y, x] = [left[y, x], right[y, x - d]],
/// zero where x - d < 0.
template <typename T>
void cost_volume_forward(std::size_t disparities, std::size_t height, std::size_t width,
                         std::size_t features, const T* left, const T* right, T* vol);

template <typename T>
void cost_volume_backward(std::size_t disparities, std::size_t height, std::size_t width,
                          std::size_t features, const T* dvol, T* dleft, T* dright);

}  // namespace kernels

namespace reference {

template <typename T>
void conv_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

/// Scatter formulation of the transposed convolution.
template <typename T>
void conv_transpose(const ConvGeometry& g, const T* y, const T* w, T* x);

template <typename T>
void conv_weight_grad(const ConvGeometry& g, const T* x, const T* dy, T* dw);

template <typename T>
void cost_volume_forward(std::size_t disparities, std::size_t height, std::size_t width,
                         std::size_t features, const T* left, const T* right, T* vol);

}  // namespace reference

}  // namespace gcnet

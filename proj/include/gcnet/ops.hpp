#pragma once

// Differentiable operations. Spatial tensors are channels-innermost with a
// single implicit batch: 2-D maps are [H, W, C], volumes are [D, H, W, C].

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "gcnet/autograd.hpp"
#include "gcnet/kernels.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

struct ConvSpec {
  std::vector<std::size_t> kernel;  // one extent per spatial axis (2 or 3)
  std::vector<std::size_t> stride;
  std::size_t out_channels = 1;
  bool transposed = false;

  std::size_t spatial_rank() const { return kernel.size(); }
};

/// Weight shape for a layer with `in_channels` inputs: [k..., Cin, Cout] for a
/// forward conv and [k..., Cout, Cin] for a transposed conv (it shares its
/// weights with the forward conv it is the adjoint of).
Shape conv_weight_shape(const ConvSpec& spec, std::size_t in_channels);

/// Output spatial extents: ceil(n/s) forward, n*s transposed.
std::vector<std::size_t> conv_output_extents(const ConvSpec& spec,
                                             const std::vector<std::size_t>& in_extents);

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec);

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec);

/// `out_extents` defaults to n*s per axis; any other request must satisfy
/// ceil(out/s) == n or it is rejected.
template <typename T>
Var<T> conv3d_transposed(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                         const ConvSpec& spec,
                         std::optional<std::array<std::size_t, 3>> out_extents = std::nullopt);

/// Dispatches on spec rank and transposed flag. `bias` may be empty.
template <typename T>
Var<T> conv(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const ConvSpec& spec);

template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;

  explicit RunningStats(std::size_t channels = 1)
      : mean(Shape{channels}, T(0)), var(Shape{channels}, T(1)) {}
};

struct BatchNormOptions {
  bool training = true;
  double epsilon = 1e-5;
  double momentum = 0.9;  // running <- momentum * running + (1 - momentum) * batch
};

/// Per-channel normalisation over every other axis. In training mode batch
/// statistics are used and `running` (if given) is updated; otherwise the
/// stored running statistics are used.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  RunningStats<T>* running, const BatchNormOptions& options = {});

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

/// Numerically stable softmax along `axis`.
template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

/// Concatenation cost volume from [H, W, F] feature maps:
/// [disparities, H, W, 2F], left-referenced, zero fill where x - d < 0.
template <typename T>
Var<T> cost_volume(const Var<T>& left, const Var<T>& right, std::size_t disparities);

/// sum_d d * softmax(-c)_d over axis 0 of [D, H, W] (or [D, H, W, 1]) costs.
template <typename T>
Var<T> soft_argmin(const Var<T>& costs);

/// Mean absolute error over pixels where mask is nonzero.
template <typename T>
Var<T> l1_loss(const Var<T>& pred, const Tensor<T>& gt, const Tensor<std::uint8_t>& mask);

/// Mean over masked pixels of -sum_d target_d * log softmax(-c)_d for [D, H, W] costs.
template <typename T>
Var<T> cross_entropy(const Var<T>& costs, const Tensor<T>& target,
                     const Tensor<std::uint8_t>& mask);

/// Linear 2x upsampling along one axis (half-pixel centres, edge clamped).
template <typename T>
Var<T> upsample2x(const Var<T>& x, std::size_t axis);

}  // namespace gcnet

#pragma once

// Disparity error metrics and the occlusion saliency probe.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gcnet/data_io.hpp"
#include "gcnet/model.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

struct Metrics {
  std::vector<double> thresholds;  // px
  std::vector<double> bad_rates;   // fraction of valid pixels with |error| > threshold
  double mae = 0.0;
  double rms = 0.0;
  std::size_t count = 0;
  bool has_d1 = false;
  double d1 = 0.0;  // |error| > 3 and |error| > 5% of gt

  /// Rate for a threshold present in `thresholds`; throws otherwise.
  double bad(double threshold) const;
};

inline const std::vector<double> kDefaultThresholds{1.0, 3.0, 5.0};

/// Throws ShapeError on mismatched shapes and std::invalid_argument on an empty mask.
template <typename T>
Metrics compute_metrics(const Tensor<T>& pred, const Tensor<T>& gt, const Mask& mask,
                        const std::vector<double>& thresholds = kDefaultThresholds,
                        bool d1 = false);

std::string format_metrics_table(const Metrics& m);
std::string format_metrics_kv(const Metrics& m);

struct SaliencyOptions {
  std::size_t patch = 16;
  std::size_t stride = 8;
};

struct SaliencyResult {
  Tensor<float> map;         // [H, W] in [0, 1]
  double base_disparity = 0.0;  // prediction at the probe point without occlusion
  std::size_t positions = 0;    // occluder placements evaluated
};

/// Occluder centres (row, col) on the stride grid, starting at the image corner.
std::vector<std::pair<long, long>> occluder_grid(std::size_t height, std::size_t width,
                                                 const SaliencyOptions& options);

/// Fills the part of a patch centred at (cy, cx) lying inside the image with
/// `value`; returns the number of pixels touched.
std::size_t paint_patch(Tensor<float>& image, long cy, long cx, std::size_t patch, float value);

/// For each occluder position, gray-patch both views (the right patch shifted
/// left by the rounded base disparity at the probe), re-run the model in
/// inference mode and record |change of disparity at the probe|. Responses are
/// averaged over the pixels each patch covers and scaled to a peak of 1.
/// Images are raw [0, 1] views; normalisation happens inside.
SaliencyResult occlusion_saliency(ModelParams<float>& params, const Tensor<float>& left,
                                  const Tensor<float>& right, std::size_t x, std::size_t y,
                                  const SaliencyOptions& options = {});

/// Maps [lo, hi] through a blue-to-red ramp into an [H, W, 3] image in [0, 1].
Tensor<float> colormap(const Tensor<float>& values, float lo, float hi);

}  // namespace gcnet

#pragma once

// RMSProp training over cropped, normalised stereo samples.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcnet/data_io.hpp"
#include "gcnet/eval.hpp"
#include "gcnet/model.hpp"

namespace gcnet {

// ---- image normalisation ----

enum class PixelRange { Undeclared, Unit, Byte };  // Unit = [0, 1], Byte = [0, 255]

PixelRange parse_pixel_range(const std::string& s);
std::string to_string(PixelRange r);

/// Affine map of the declared range onto [-1, 1]; Undeclared is rejected.
template <typename T>
Tensor<T> normalize_image(const Tensor<T>& raw, PixelRange range);

template <typename T>
Tensor<T> denormalize_image(const Tensor<T>& normalized, PixelRange range);

// ---- optimiser ----

struct RmsPropOptions {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& tensor)
      : std::runtime_error("non-finite gradient in " + tensor), tensor_(tensor) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

/// acc <- decay * acc + (1 - decay) * g^2;  p <- p - lr * g / (sqrt(acc) + eps)
template <typename T>
void rmsprop_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& acc,
                    const RmsPropOptions& options);

struct OptimState {
  RmsPropOptions options;
  std::size_t steps = 0;
  std::map<std::string, Tensor<float>> accumulators;  // keyed by tensor name
};

/// Applies one update from the gradients stored on the learnable leaves. Every
/// gradient is checked first; a non-finite one aborts the whole step without
/// touching any parameter and names the tensor (and so the layer) at fault.
/// Leaves that received no gradient are treated as zero gradient.
void rmsprop_step(ModelParams<float>& params, OptimState& state);

void zero_grads(ModelParams<float>& params);

// ---- crops ----

/// Uniform top-left corner; the same window is cut from both views, gt and mask.
StereoSample sample_crop(const StereoSample& sample, std::size_t crop_height,
                         std::size_t crop_width, std::mt19937_64& rng);

StereoSample crop_at(const StereoSample& sample, std::size_t top, std::size_t left,
                     std::size_t crop_height, std::size_t crop_width);

// ---- fit ----

struct TrainConfig {
  ModelConfig model{.features = 8, .max_disparity = 32, .height = 64, .width = 128, .channels = 1};
  std::size_t iterations = 2000;
  std::uint64_t seed = 1;
  std::size_t val_every = 250;
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  RmsPropOptions rmsprop;
  PixelRange pixel_range = PixelRange::Unit;

  std::size_t crop_height() const { return model.height; }
  std::size_t crop_width() const { return model.width; }

  void validate() const;
  /// Applies one key=value pair; unknown keys are rejected.
  void set(const std::string& key, const std::string& value);
  std::string format() const;
};

/// Flat key=value text with '#' comments.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

struct LogRecord {
  std::size_t step = 0;
  double loss = 0.0;
  std::optional<double> val_mae;
  std::optional<double> val_bad1;

  std::string to_json() const;
};

struct FitOptions {
  std::filesystem::path out_dir;    // empty: write no files
  std::ostream* log = nullptr;      // receives JSON lines as they are produced
  /// Called after each validation; returning true ends training early.
  std::function<bool(const LogRecord&)> stop;
};

struct FitResult {
  std::vector<LogRecord> log;
  std::size_t steps = 0;
  bool halted = false;  // non-finite loss or gradient
  std::string halt_reason;
  std::optional<Metrics> final_validation;
};

/// Validation metrics pooled over every pixel of every sample, inference mode.
Metrics validate_model(ModelParams<float>& params, const std::vector<StereoSample>& samples,
                       PixelRange range);

/// Trains in place. Images are raw samples in `config.pixel_range`. When a
/// step produces a non-finite loss or gradient, training halts and the
/// parameters from before that step are restored (and saved as last_good.gcn
/// when out_dir is set).
FitResult fit(ModelParams<float>& params, const std::vector<StereoSample>& train,
              const std::vector<StereoSample>& validation, const TrainConfig& config,
              OptimState& state, const FitOptions& options = {});

}  // namespace gcnet

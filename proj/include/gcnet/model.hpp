#pragma once

// GC-Net: shared 2-D unary towers, a concatenation cost volume, a 3-D
// encoder-decoder regularizer and a soft argmin disparity readout.
//
// Layer ids run 1..37 through the network. Id 38 is the learned
// 1x1x1 projection used only by the unary-only ablation head.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gcnet/ops.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

enum class Variant { Hierarchical, SingleScale, UnaryOnly };
enum class LossKind { L1, HardClassification, SoftClassification };

std::string to_string(Variant v);
std::string to_string(LossKind k);
Variant parse_variant(const std::string& s);
LossKind parse_loss_kind(const std::string& s);

struct ModelConfig {
  std::size_t features = 32;        // F
  std::size_t max_disparity = 192;  // D, exclusive upper bound on disparity index
  std::size_t height = 256;
  std::size_t width = 512;
  std::size_t channels = 3;
  Variant variant = Variant::Hierarchical;
  LossKind loss = LossKind::L1;

  /// Extent multiple required of H, W and D by the variant.
  std::size_t extent_multiple() const { return variant == Variant::Hierarchical ? 32 : 2; }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  void validate_input(std::size_t h, std::size_t w) const;

  bool operator==(const ModelConfig&) const = default;
};

enum class LayerKind { Conv2d, Conv3d, Conv3dTransposed };

/// Static description of one learned layer.
struct LayerDef {
  int id = 0;
  LayerKind kind = LayerKind::Conv2d;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  bool batch_norm = true;  // followed by BN + ReLU (BN only for the second conv of a unary block)
  std::string description;

  ConvSpec spec() const;
};

/// Layers instantiated for a configuration, in id order.
std::vector<LayerDef> layer_table(const ModelConfig& config);

template <typename T>
struct LayerParams {
  LayerDef def;
  Var<T> weight;
  Var<T> bias;
  Var<T> gamma;  // empty when the layer has no batch norm
  Var<T> beta;
  RunningStats<T> stats;
};

template <typename T>
class ModelParams {
 public:
  ModelParams() = default;

  /// Fan-in scaled normal weights (gain 2), zero bias, gamma 1, beta 0.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  /// Same layers with every learnable tensor and running statistic set to zero.
  static ModelParams zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  bool has_layer(int id) const { return layers_.count(id) != 0; }
  LayerParams<T>& layer(int id);
  const LayerParams<T>& layer(int id) const;
  std::vector<int> layer_ids() const;

  /// Learnable tensors (weights, biases, gammas, betas) paired with stable names.
  std::vector<std::pair<std::string, Var<T>>> learnable() const;

  /// Every stored tensor, learnable and running statistics, in checkpoint order.
  std::vector<std::pair<std::string, Tensor<T>>> named_tensors() const;

  /// Overwrites the tensor with the given checkpoint name; shapes must agree.
  void assign(const std::string& name, const Tensor<T>& value);

  std::size_t parameter_count() const;

  /// Deep copy into another scalar type (graph-free).
  template <typename U>
  ModelParams<U> cast() const;

  /// Deep copy with fresh leaf nodes.
  ModelParams clone() const { return cast<T>(); }

 private:
  template <typename U>
  friend class ModelParams;

  ModelConfig config_;
  std::map<int, LayerParams<T>> layers_;
};

std::string layer_name(int id);

/// Learned-parameter count implied by a configuration, without allocating.
std::size_t count_parameters(const ModelConfig& config);

// ---- graph pieces ----

template <typename T>
Var<T> unary_tower(const Var<T>& image, ModelParams<T>& params, bool training);

/// Left-referenced volume with max_disparity/2 levels at half resolution.
template <typename T>
Var<T> build_cost_volume(const Var<T>& left_features, const Var<T>& right_features,
                         std::size_t max_disparity);

/// Cost volume -> [D, H, W] matching costs at full resolution.
template <typename T>
Var<T> regularize(const Var<T>& volume, ModelParams<T>& params, bool training);

template <typename T>
struct ForwardResult {
  Var<T> disparity;  // [H, W], soft argmin of costs
  Var<T> costs;      // [D, H, W]
};

/// Images are [H, W, C] normalised to [-1, 1].
template <typename T>
ForwardResult<T> forward(const Tensor<T>& left, const Tensor<T>& right, ModelParams<T>& params,
                         bool training);

template <typename T>
struct ClassificationTargets {
  Tensor<T> target;             // [D, H, W] distribution per pixel
  Tensor<std::uint8_t> mask;    // input mask minus excluded pixels
  std::size_t excluded = 0;     // masked-in pixels whose bin fell outside [0, D)
};

/// One-hot (hard) or unit-sigma discretised Gaussian (soft) targets centred on
/// the nearest integer bin of each ground-truth disparity.
template <typename T>
ClassificationTargets<T> classification_targets(const Tensor<T>& gt,
                                                const Tensor<std::uint8_t>& mask,
                                                std::size_t max_disparity, LossKind kind,
                                                double sigma = 1.0);

template <typename T>
struct ClassificationLoss {
  Var<T> loss;
  std::size_t excluded = 0;
};

template <typename T>
ClassificationLoss<T> classification_loss(const Var<T>& costs, const Tensor<T>& gt,
                                          const Tensor<std::uint8_t>& mask, LossKind kind);

/// Loss selected by params.config().loss for a forward result.
template <typename T>
Var<T> model_loss(const ForwardResult<T>& result, const Tensor<T>& gt,
                  const Tensor<std::uint8_t>& mask, LossKind kind);

/// Disparity estimate for reporting: soft argmin for regression models, the
/// most probable bin for classification models.
template <typename T>
Tensor<T> decode_disparity(const ForwardResult<T>& result, LossKind kind);

// ---- architecture audit ----

struct AuditRow {
  std::string layer;        // "1".."37", or a label for parameter-free stages
  std::string description;
  Shape output;             // symbolic shape evaluated at the configured extents
  std::size_t parameters = 0;
};

/// Walks the graph for `config` on shapes only.
std::vector<AuditRow> audit(const ModelConfig& config);

std::string format_audit(const ModelConfig& config, const std::vector<AuditRow>& rows);

}  // namespace gcnet

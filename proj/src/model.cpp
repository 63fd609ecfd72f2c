#include "gcnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gcnet {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Hierarchical: return "hierarchical";
    case Variant::SingleScale: return "single-scale";
    case Variant::UnaryOnly: return "unary-only";
  }
  return "?";
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::L1: return "l1";
    case LossKind::HardClassification: return "hard-classification";
    case LossKind::SoftClassification: return "soft-classification";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "hierarchical" || s == "full" || s == "full-hierarchical") return Variant::Hierarchical;
  if (s == "single-scale" || s == "single") return Variant::SingleScale;
  if (s == "unary-only" || s == "unary") return Variant::UnaryOnly;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "l1" || s == "l1-regression" || s == "regression") return LossKind::L1;
  if (s == "hard" || s == "hard-classification") return LossKind::HardClassification;
  if (s == "soft" || s == "soft-classification") return LossKind::SoftClassification;
  throw std::invalid_argument("unknown loss kind '" + s + "'");
}

void ModelConfig::validate() const {
  if (features == 0) throw std::invalid_argument("features must be positive");
  if (channels == 0) throw std::invalid_argument("channels must be positive");
  const std::size_t m = extent_multiple();
  auto check = [m, this](const char* name, std::size_t v) {
    if (v == 0 || v % m != 0)
      throw std::invalid_argument(std::string(name) + " = " + std::to_string(v) +
                                  " must be a positive multiple of " + std::to_string(m) +
                                  " for the " + to_string(variant) + " variant");
  };
  check("height", height);
  check("width", width);
  check("max_disparity", max_disparity);
  if (max_disparity > width)
    throw std::invalid_argument("max_disparity " + std::to_string(max_disparity) +
                                " exceeds width " + std::to_string(width));
}

void ModelConfig::validate_input(std::size_t h, std::size_t w) const {
  ModelConfig c = *this;
  c.height = h;
  c.width = w;
  c.validate();
}

ConvSpec LayerDef::spec() const {
  ConvSpec s;
  const std::size_t rank = kind == LayerKind::Conv2d ? 2 : 3;
  s.kernel.assign(rank, kernel);
  s.stride.assign(rank, stride);
  s.out_channels = out_channels;
  s.transposed = kind == LayerKind::Conv3dTransposed;
  return s;
}

std::string layer_name(int id) {
  std::ostringstream os;
  os << "layer" << std::setw(2) << std::setfill('0') << id;
  return os.str();
}

std::vector<LayerDef> layer_table(const ModelConfig& c) {
  const std::size_t F = c.features;
  std::vector<LayerDef> t;
  auto push = [&t](int id, LayerKind kind, std::size_t k, std::size_t s, std::size_t in,
                   std::size_t out, bool bn, std::string desc) {
    t.push_back(LayerDef{id, kind, k, s, in, out, bn, std::move(desc)});
  };
  push(1, LayerKind::Conv2d, 5, 2, c.channels, F, true, "5x5 conv, stride 2");
  for (int id = 2; id <= 17; ++id)
    push(id, LayerKind::Conv2d, 3, 1, F, F, true,
         id % 2 == 0 ? "3x3 conv (residual block, first)" : "3x3 conv (residual block, second)");
  push(18, LayerKind::Conv2d, 3, 1, F, F, false, "3x3 conv, no ReLU or BN");

  if (c.variant == Variant::UnaryOnly) {
    push(38, LayerKind::Conv3d, 1, 1, 2 * F, 1, false, "1x1x1 projection to one feature");
    return t;
  }
  push(19, LayerKind::Conv3d, 3, 1, 2 * F, F, true, "3-D conv");
  push(20, LayerKind::Conv3d, 3, 1, F, F, true, "3-D conv");
  if (c.variant == Variant::Hierarchical) {
    push(21, LayerKind::Conv3d, 3, 2, 2 * F, 2 * F, true, "from cost volume: 3-D conv, stride 2");
    push(22, LayerKind::Conv3d, 3, 1, 2 * F, 2 * F, true, "3-D conv");
    push(23, LayerKind::Conv3d, 3, 1, 2 * F, 2 * F, true, "3-D conv");
    push(24, LayerKind::Conv3d, 3, 2, 2 * F, 2 * F, true, "from 21: 3-D conv, stride 2");
    push(25, LayerKind::Conv3d, 3, 1, 2 * F, 2 * F, true, "3-D conv");
    push(26, LayerKind::Conv3d, 3, 1, 2 * F, 2 * F, true, "3-D conv");
    push(27, LayerKind::Conv3d, 3, 2, 2 * F, 2 * F, true, "from 24: 3-D conv, stride 2");
    push(28, LayerKind::Conv3d, 3, 1, 2 * F, 2 * F, true, "3-D conv");
    push(29, LayerKind::Conv3d, 3, 1, 2 * F, 2 * F, true, "3-D conv");
    push(30, LayerKind::Conv3d, 3, 2, 2 * F, 4 * F, true, "from 27: 3-D conv, stride 2");
    push(31, LayerKind::Conv3d, 3, 1, 4 * F, 4 * F, true, "3-D conv");
    push(32, LayerKind::Conv3d, 3, 1, 4 * F, 4 * F, true, "3-D conv");
    push(33, LayerKind::Conv3dTransposed, 3, 2, 4 * F, 2 * F, true, "3-D transposed conv, stride 2");
    push(34, LayerKind::Conv3dTransposed, 3, 2, 2 * F, 2 * F, true, "3-D transposed conv, stride 2");
    push(35, LayerKind::Conv3dTransposed, 3, 2, 2 * F, 2 * F, true, "3-D transposed conv, stride 2");
    push(36, LayerKind::Conv3dTransposed, 3, 2, 2 * F, F, true, "3-D transposed conv, stride 2");
  }
  push(37, LayerKind::Conv3dTransposed, 3, 2, F, 1, false,
       "3-D transposed conv, 1 feature, no ReLU or BN");
  return t;
}

namespace {

std::size_t layer_parameter_count(const LayerDef& d) {
  const std::size_t taps = d.kind == LayerKind::Conv2d ? d.kernel * d.kernel
                                                       : d.kernel * d.kernel * d.kernel;
  std::size_t n = taps * d.in_channels * d.out_channels + d.out_channels;
  if (d.batch_norm) n += 2 * d.out_channels;
  return n;
}

// Second conv of each unary residual block: BN without ReLU before the skip add.
bool applies_relu(const LayerDef& d) {
  if (!d.batch_norm) return false;
  if (d.id >= 2 && d.id <= 17) return d.id % 2 == 0;
  return true;
}

}  // namespace

std::size_t count_parameters(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& d : layer_table(config)) n += layer_parameter_count(d);
  return n;
}

template <typename T>
ModelParams<T> ModelParams<T>::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config_ = config;
  std::mt19937_64 rng(seed);
  for (const auto& d : layer_table(config)) {
    LayerParams<T> lp;
    lp.def = d;
    const ConvSpec spec = d.spec();
    const Shape ws = conv_weight_shape(spec, d.in_channels);
    std::size_t fan_in = d.in_channels;
    for (std::size_t k : spec.kernel) fan_in *= k;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / double(fan_in)));
    Tensor<T> w(ws);
    for (auto& v : w.storage()) v = T(normal(rng));
    lp.weight = Var<T>(std::move(w), true);
    lp.bias = Var<T>(Tensor<T>(Shape{d.out_channels}), true);
    if (d.batch_norm) {
      lp.gamma = Var<T>(Tensor<T>(Shape{d.out_channels}, T(1)), true);
      lp.beta = Var<T>(Tensor<T>(Shape{d.out_channels}), true);
      lp.stats = RunningStats<T>(d.out_channels);
    }
    p.layers_.emplace(d.id, std::move(lp));
  }
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config) {
  ModelParams p = initialize(config, 0);
  for (auto& [id, lp] : p.layers_) {
    lp.weight.mutable_value().fill(T(0));
    lp.bias.mutable_value().fill(T(0));
    if (lp.gamma) {
      lp.gamma.mutable_value().fill(T(0));
      lp.beta.mutable_value().fill(T(0));
      lp.stats.mean.fill(T(0));
      lp.stats.var.fill(T(0));
    }
  }
  return p;
}

template <typename T>
LayerParams<T>& ModelParams<T>::layer(int id) {
  auto it = layers_.find(id);
  if (it == layers_.end()) throw std::out_of_range("no layer " + std::to_string(id));
  return it->second;
}

template <typename T>
const LayerParams<T>& ModelParams<T>::layer(int id) const {
  auto it = layers_.find(id);
  if (it == layers_.end()) throw std::out_of_range("no layer " + std::to_string(id));
  return it->second;
}

template <typename T>
std::vector<int> ModelParams<T>::layer_ids() const {
  std::vector<int> ids;
  for (const auto& [id, lp] : layers_) ids.push_back(id);
  return ids;
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> ModelParams<T>::learnable() const {
  std::vector<std::pair<std::string, Var<T>>> out;
  for (const auto& [id, lp] : layers_) {
    const std::string base = layer_name(id);
    out.emplace_back(base + ".weight", lp.weight);
    out.emplace_back(base + ".bias", lp.bias);
    if (lp.gamma) {
      out.emplace_back(base + ".gamma", lp.gamma);
      out.emplace_back(base + ".beta", lp.beta);
    }
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ModelParams<T>::named_tensors() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& [id, lp] : layers_) {
    const std::string base = layer_name(id);
    out.emplace_back(base + ".weight", lp.weight.value());
    out.emplace_back(base + ".bias", lp.bias.value());
    if (lp.gamma) {
      out.emplace_back(base + ".gamma", lp.gamma.value());
      out.emplace_back(base + ".beta", lp.beta.value());
      out.emplace_back(base + ".running_mean", lp.stats.mean);
      out.emplace_back(base + ".running_var", lp.stats.var);
    }
  }
  return out;
}

template <typename T>
void ModelParams<T>::assign(const std::string& name, const Tensor<T>& value) {
  const auto dot = name.find('.');
  if (dot == std::string::npos || name.rfind("layer", 0) != 0)
    throw std::invalid_argument("malformed tensor name '" + name + "'");
  const int id = std::stoi(name.substr(5, dot - 5));
  const std::string field = name.substr(dot + 1);
  LayerParams<T>& lp = layer(id);
  Tensor<T>* dst = nullptr;
  if (field == "weight") dst = &lp.weight.mutable_value();
  else if (field == "bias") dst = &lp.bias.mutable_value();
  else if (lp.gamma && field == "gamma") dst = &lp.gamma.mutable_value();
  else if (lp.gamma && field == "beta") dst = &lp.beta.mutable_value();
  else if (lp.gamma && field == "running_mean") dst = &lp.stats.mean;
  else if (lp.gamma && field == "running_var") dst = &lp.stats.var;
  if (!dst) throw std::invalid_argument("unknown tensor '" + name + "'");
  if (dst->shape() != value.shape())
    throw ShapeError("tensor '" + name + "' has shape " + shape_str(value.shape()) +
                     ", expected " + shape_str(dst->shape()));
  *dst = value;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : learnable()) n += v.value().size();
  return n;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> p;
  p.config_ = config_;
  for (const auto& [id, lp] : layers_) {
    LayerParams<U> q;
    q.def = lp.def;
    q.weight = Var<U>(lp.weight.value().template cast<U>(), true);
    q.bias = Var<U>(lp.bias.value().template cast<U>(), true);
    if (lp.gamma) {
      q.gamma = Var<U>(lp.gamma.value().template cast<U>(), true);
      q.beta = Var<U>(lp.beta.value().template cast<U>(), true);
      q.stats.mean = lp.stats.mean.template cast<U>();
      q.stats.var = lp.stats.var.template cast<U>();
    }
    p.layers_.emplace(id, std::move(q));
  }
  return p;
}

namespace {

template <typename T>
Var<T> apply_layer(const Var<T>& x, LayerParams<T>& lp, bool training) {
  Var<T> y = conv(x, lp.weight, lp.bias, lp.def.spec());
  if (!lp.def.batch_norm) return y;
  BatchNormOptions opt;
  opt.training = training;
  y = batch_norm(y, lp.gamma, lp.beta, &lp.stats, opt);
  return applies_relu(lp.def) ? relu(y) : y;
}

}  // namespace

template <typename T>
Var<T> unary_tower(const Var<T>& image, ModelParams<T>& params, bool training) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("unary_tower: image must be [H, W, C], got " + shape_str(s));
  if (s[0] % 2 || s[1] % 2)
    throw ShapeError("unary_tower: image extents " + shape_str(s) + " must be even");
  if (s[2] != params.config().channels)
    throw ShapeError("unary_tower: image has " + std::to_string(s[2]) + " channels, model expects " +
                     std::to_string(params.config().channels));
  Var<T> x = apply_layer(image, params.layer(1), training);
  for (int id = 2; id <= 16; id += 2) {
    Var<T> a = apply_layer(x, params.layer(id), training);
    Var<T> b = apply_layer(a, params.layer(id + 1), training);
    x = add(x, b);
  }
  return apply_layer(x, params.layer(18), training);
}

template <typename T>
Var<T> build_cost_volume(const Var<T>& left_features, const Var<T>& right_features,
                         std::size_t max_disparity) {
  if (max_disparity % 2)
    throw ShapeError("build_cost_volume: max disparity " + std::to_string(max_disparity) +
                     " must be even");
  if (left_features.shape().size() == 3 && max_disparity / 2 > left_features.shape()[1])
    throw ShapeError("build_cost_volume: disparity range " + std::to_string(max_disparity / 2) +
                     " exceeds feature width " + std::to_string(left_features.shape()[1]));
  return cost_volume(left_features, right_features, max_disparity / 2);
}

template <typename T>
Var<T> regularize(const Var<T>& volume, ModelParams<T>& params, bool training) {
  const ModelConfig& c = params.config();
  const Shape& s = volume.shape();
  if (s.size() != 4) throw ShapeError("regularize: volume must be 4-D, got " + shape_str(s));
  const std::size_t m = c.extent_multiple() / 2;
  for (std::size_t a = 0; a < 3; ++a)
    if (s[a] % m)
      throw ShapeError("regularize: volume extents " + shape_str(s) + " must be divisible by " +
                       std::to_string(m) + " for the " + to_string(c.variant) + " variant");

  auto L = [&](int id) -> LayerParams<T>& { return params.layer(id); };
  Var<T> out;
  switch (c.variant) {
    case Variant::UnaryOnly: {
      Var<T> v = apply_layer(volume, L(38), training);
      for (std::size_t axis = 0; axis < 3; ++axis) v = upsample2x(v, axis);
      out = v;
      break;
    }
    case Variant::SingleScale: {
      Var<T> l20 = apply_layer(apply_layer(volume, L(19), training), L(20), training);
      out = apply_layer(l20, L(37), training);
      break;
    }
    case Variant::Hierarchical: {
      Var<T> l20 = apply_layer(apply_layer(volume, L(19), training), L(20), training);
      Var<T> l21 = apply_layer(volume, L(21), training);
      Var<T> l23 = apply_layer(apply_layer(l21, L(22), training), L(23), training);
      Var<T> l24 = apply_layer(l21, L(24), training);
      Var<T> l26 = apply_layer(apply_layer(l24, L(25), training), L(26), training);
      Var<T> l27 = apply_layer(l24, L(27), training);
      Var<T> l29 = apply_layer(apply_layer(l27, L(28), training), L(29), training);
      Var<T> l30 = apply_layer(l27, L(30), training);
      Var<T> l32 = apply_layer(apply_layer(l30, L(31), training), L(32), training);
      Var<T> u = add(apply_layer(l32, L(33), training), l29);
      u = add(apply_layer(u, L(34), training), l26);
      u = add(apply_layer(u, L(35), training), l23);
      u = add(apply_layer(u, L(36), training), l20);
      out = apply_layer(u, L(37), training);
      break;
    }
  }
  const Shape& os = out.shape();
  return reshape(out, Shape{os[0], os[1], os[2]});
}

template <typename T>
ForwardResult<T> forward(const Tensor<T>& left, const Tensor<T>& right, ModelParams<T>& params,
                         bool training) {
  const ModelConfig& c = params.config();
  if (left.shape() != right.shape())
    throw ShapeError("forward: left " + shape_str(left.shape()) + " and right " +
                     shape_str(right.shape()) + " images differ in shape");
  if (left.rank() != 3) throw ShapeError("forward: images must be [H, W, C]");
  c.validate_input(left.dim(0), left.dim(1));
  Var<T> l(left), r(right);
  Var<T> fl = unary_tower(l, params, training);
  Var<T> fr = unary_tower(r, params, training);
  Var<T> volume = build_cost_volume(fl, fr, c.max_disparity);
  Var<T> costs = regularize(volume, params, training);
  return {soft_argmin(costs), costs};
}

template <typename T>
ClassificationTargets<T> classification_targets(const Tensor<T>& gt,
                                                const Tensor<std::uint8_t>& mask,
                                                std::size_t max_disparity, LossKind kind,
                                                double sigma) {
  if (gt.rank() != 2 || mask.shape() != gt.shape())
    throw ShapeError("classification_targets: gt and mask must be matching [H, W] maps");
  if (kind == LossKind::L1)
    throw std::invalid_argument("classification_targets: loss kind must be a classification kind");
  const std::size_t H = gt.dim(0), W = gt.dim(1), plane = H * W;
  ClassificationTargets<T> out{Tensor<T>(Shape{max_disparity, H, W}), mask, 0};
  for (std::size_t p = 0; p < plane; ++p) {
    if (!mask[p]) continue;
    const double g = gt[p];
    const double bin = std::round(g);
    if (!std::isfinite(g) || bin < 0.0 || bin >= double(max_disparity)) {
      out.mask[p] = 0;
      ++out.excluded;
      continue;
    }
    const auto b = static_cast<std::size_t>(bin);
    if (kind == LossKind::HardClassification) {
      out.target[b * plane + p] = T(1);
      continue;
    }
    double z = 0.0;
    for (std::size_t d = 0; d < max_disparity; ++d) {
      const double diff = double(d) - bin;
      z += std::exp(-diff * diff / (2.0 * sigma * sigma));
    }
    for (std::size_t d = 0; d < max_disparity; ++d) {
      const double diff = double(d) - bin;
      out.target[d * plane + p] = T(std::exp(-diff * diff / (2.0 * sigma * sigma)) / z);
    }
  }
  return out;
}

template <typename T>
ClassificationLoss<T> classification_loss(const Var<T>& costs, const Tensor<T>& gt,
                                          const Tensor<std::uint8_t>& mask, LossKind kind) {
  const Shape& s = costs.shape();
  if (s.size() != 3) throw ShapeError("classification_loss: costs must be [D, H, W]");
  auto targets = classification_targets(gt, mask, s[0], kind);
  return {cross_entropy(costs, targets.target, targets.mask), targets.excluded};
}

template <typename T>
Var<T> model_loss(const ForwardResult<T>& result, const Tensor<T>& gt,
                  const Tensor<std::uint8_t>& mask, LossKind kind) {
  if (kind == LossKind::L1) return l1_loss(result.disparity, gt, mask);
  return classification_loss(result.costs, gt, mask, kind).loss;
}

template <typename T>
Tensor<T> decode_disparity(const ForwardResult<T>& result, LossKind kind) {
  if (kind == LossKind::L1) return result.disparity.value();
  const Tensor<T>& c = result.costs.value();
  const std::size_t D = c.dim(0), H = c.dim(1), W = c.dim(2), plane = H * W;
  Tensor<T> out(Shape{H, W});
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    for (std::size_t d = 1; d < D; ++d)
      if (c[d * plane + p] < c[best * plane + p]) best = d;
    out[p] = T(best);
  }
  return out;
}

// ---- audit ----

std::vector<AuditRow> audit(const ModelConfig& c) {
  c.validate();
  std::vector<AuditRow> rows;
  std::map<int, LayerDef> defs;
  for (const auto& d : layer_table(c)) defs.emplace(d.id, d);

  const std::size_t F = c.features, H = c.height, W = c.width, D = c.max_disparity;
  auto add_row = [&rows](std::string layer, std::string desc, Shape s, std::size_t n = 0) {
    rows.push_back(AuditRow{std::move(layer), std::move(desc), std::move(s), n});
  };
  auto layer_row = [&](int id, const Shape& in) {
    const LayerDef& d = defs.at(id);
    const ConvSpec spec = d.spec();
    std::vector<std::size_t> ext(in.begin(), in.end() - 1);
    auto out_ext = conv_output_extents(spec, ext);
    Shape out(out_ext.begin(), out_ext.end());
    out.push_back(d.out_channels);
    add_row(std::to_string(id), d.description, out, layer_parameter_count(d));
    return out;
  };

  add_row("input", "input image", {H, W, c.channels});
  Shape x = layer_row(1, {H, W, c.channels});
  for (int id = 2; id <= 16; id += 2) {
    Shape a = layer_row(id, x);
    Shape b = layer_row(id + 1, a);
    if (b != x) throw ShapeError("audit: residual shape mismatch in unary block");
    add_row("add", "add layer " + std::to_string(id - 1) + " and " +
                       std::to_string(id + 1) + " (residual)",
            b);
  }
  Shape unary = layer_row(18, x);
  Shape vol{D / 2, unary[0], unary[1], 2 * F};
  add_row("cost", "cost volume", vol);

  Shape costs;
  switch (c.variant) {
    case Variant::UnaryOnly: {
      Shape p = layer_row(38, vol);
      costs = {p[0] * 2, p[1] * 2, p[2] * 2, 1};
      add_row("upsample", "trilinear 2x upsampling", costs);
      break;
    }
    case Variant::SingleScale: {
      Shape l20 = layer_row(20, layer_row(19, vol));
      costs = layer_row(37, l20);
      break;
    }
    case Variant::Hierarchical: {
      Shape l20 = layer_row(20, layer_row(19, vol));
      Shape l21 = layer_row(21, vol);
      Shape l23 = layer_row(23, layer_row(22, l21));
      Shape l24 = layer_row(24, l21);
      Shape l26 = layer_row(26, layer_row(25, l24));
      Shape l27 = layer_row(27, l24);
      Shape l29 = layer_row(29, layer_row(28, l27));
      Shape l30 = layer_row(30, l27);
      Shape l32 = layer_row(32, layer_row(31, l30));
      const std::pair<int, const Shape*> ups[] = {{29, &l29}, {26, &l26}, {23, &l23}, {20, &l20}};
      Shape u = l32;
      int id = 33;
      for (const auto& [skip, skip_shape] : ups) {
        u = layer_row(id, u);
        if (u != *skip_shape) throw ShapeError("audit: decoder residual shape mismatch");
        add_row("add", "add layer " + std::to_string(id) + " and " + std::to_string(skip) +
                           " (residual)",
                u);
        ++id;
      }
      costs = layer_row(37, u);
      break;
    }
  }
  add_row("soft-argmin", "soft argmin", {costs[1], costs[2]});
  return rows;
}

std::string format_audit(const ModelConfig& c, const std::vector<AuditRow>& rows) {
  std::ostringstream os;
  os << "variant=" << to_string(c.variant) << " F=" << c.features << " D=" << c.max_disparity
     << " H=" << c.height << " W=" << c.width << " C=" << c.channels << "\n";
  os << std::left << std::setw(12) << "layer" << std::setw(48) << "description" << std::setw(22)
     << "output" << std::right << std::setw(12) << "params" << "\n";
  std::size_t total = 0;
  for (const auto& r : rows) {
    os << std::left << std::setw(12) << r.layer << std::setw(48) << r.description
       << std::setw(22) << shape_str(r.output) << std::right << std::setw(12) << r.parameters
       << "\n";
    total += r.parameters;
  }
  os << "total_parameters=" << total << " (" << std::fixed << std::setprecision(2)
     << double(total) / 1e6 << "M)\n";
  return os.str();
}

#define GCNET_INSTANTIATE(T)                                                                      \
  template class ModelParams<T>;                                                                 \
  template Var<T> unary_tower(const Var<T>&, ModelParams<T>&, bool);                             \
  template Var<T> build_cost_volume(const Var<T>&, const Var<T>&, std::size_t);                  \
  template Var<T> regularize(const Var<T>&, ModelParams<T>&, bool);                              \
  template ForwardResult<T> forward(const Tensor<T>&, const Tensor<T>&, ModelParams<T>&, bool);  \
  template ClassificationTargets<T> classification_targets(                                      \
      const Tensor<T>&, const Tensor<std::uint8_t>&, std::size_t, LossKind, double);             \
  template ClassificationLoss<T> classification_loss(const Var<T>&, const Tensor<T>&,            \
                                                     const Tensor<std::uint8_t>&, LossKind);     \
  template Var<T> model_loss(const ForwardResult<T>&, const Tensor<T>&,                          \
                             const Tensor<std::uint8_t>&, LossKind);                             \
  template Tensor<T> decode_disparity(const ForwardResult<T>&, LossKind);
GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)
#undef GCNET_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace gcnet

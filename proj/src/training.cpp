#include "gcnet/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gcnet/checkpoint.hpp"
#include "json.hpp"

namespace gcnet {

PixelRange parse_pixel_range(const std::string& s) {
  if (s == "unit") return PixelRange::Unit;
  if (s == "byte") return PixelRange::Byte;
  throw std::invalid_argument("unknown pixel range '" + s + "' (expected unit or byte)");
}

std::string to_string(PixelRange r) {
  switch (r) {
    case PixelRange::Unit: return "unit";
    case PixelRange::Byte: return "byte";
    case PixelRange::Undeclared: break;
  }
  return "undeclared";
}

namespace {

double range_max(PixelRange range) {
  switch (range) {
    case PixelRange::Unit: return 1.0;
    case PixelRange::Byte: return 255.0;
    case PixelRange::Undeclared: break;
  }
  throw std::invalid_argument("image pixel range was not declared");
}

}  // namespace

template <typename T>
Tensor<T> normalize_image(const Tensor<T>& raw, PixelRange range) {
  const double top = range_max(range);
  Tensor<T> out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = T(2.0 * double(raw[i]) / top - 1.0);
  return out;
}

template <typename T>
Tensor<T> denormalize_image(const Tensor<T>& normalized, PixelRange range) {
  const double top = range_max(range);
  Tensor<T> out(normalized.shape());
  for (std::size_t i = 0; i < normalized.size(); ++i)
    out[i] = T((double(normalized[i]) + 1.0) * 0.5 * top);
  return out;
}

template Tensor<float> normalize_image(const Tensor<float>&, PixelRange);
template Tensor<double> normalize_image(const Tensor<double>&, PixelRange);
template Tensor<float> denormalize_image(const Tensor<float>&, PixelRange);
template Tensor<double> denormalize_image(const Tensor<double>&, PixelRange);

// ---- optimiser ----

template <typename T>
void rmsprop_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& acc,
                    const RmsPropOptions& o) {
  if (grad.shape() != param.shape() || acc.shape() != param.shape())
    throw ShapeError("rmsprop: parameter " + shape_str(param.shape()) + ", gradient " +
                     shape_str(grad.shape()) + " and accumulator " + shape_str(acc.shape()) +
                     " must agree");
  const T decay = T(o.decay), lr = T(o.learning_rate), eps = T(o.epsilon);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    acc[i] = decay * acc[i] + (T(1) - decay) * g * g;
    param[i] -= lr * g / (std::sqrt(acc[i]) + eps);
  }
}

template void rmsprop_update(Tensor<float>&, const Tensor<float>&, Tensor<float>&,
                             const RmsPropOptions&);
template void rmsprop_update(Tensor<double>&, const Tensor<double>&, Tensor<double>&,
                             const RmsPropOptions&);

void rmsprop_step(ModelParams<float>& params, OptimState& state) {
  auto learnable = params.learnable();
  for (const auto& [name, var] : learnable)
    for (float g : var.grad().values())
      if (!std::isfinite(g)) throw NonFiniteGradient(name);
  for (auto& [name, var] : learnable) {
    if (var.grad().empty()) continue;
    auto it = state.accumulators.find(name);
    if (it == state.accumulators.end())
      it = state.accumulators.emplace(name, Tensor<float>(var.shape())).first;
    rmsprop_update(var.mutable_value(), var.grad(), it->second, state.options);
  }
  ++state.steps;
}

void zero_grads(ModelParams<float>& params) {
  for (auto& [name, var] : params.learnable()) var.zero_grad();
}

// ---- crops ----

StereoSample crop_at(const StereoSample& s, std::size_t top, std::size_t left, std::size_t ch,
                     std::size_t cw) {
  const std::size_t H = s.height(), W = s.width(), C = s.left.dim(2);
  if (ch == 0 || cw == 0 || top + ch > H || left + cw > W)
    throw std::invalid_argument("crop " + std::to_string(ch) + "x" + std::to_string(cw) + " at (" +
                                std::to_string(top) + ", " + std::to_string(left) +
                                ") does not fit a " + std::to_string(H) + "x" + std::to_string(W) +
                                " image");
  StereoSample out;
  out.left = Tensor<float>(Shape{ch, cw, C});
  out.right = Tensor<float>(Shape{ch, cw, C});
  out.gt = Tensor<float>(Shape{ch, cw});
  out.mask = Mask(Shape{ch, cw});
  for (std::size_t y = 0; y < ch; ++y)
    for (std::size_t x = 0; x < cw; ++x) {
      const std::size_t src = (top + y) * W + left + x, dst = y * cw + x;
      for (std::size_t c = 0; c < C; ++c) {
        out.left[dst * C + c] = s.left[src * C + c];
        out.right[dst * C + c] = s.right[src * C + c];
      }
      out.gt[dst] = s.gt[src];
      out.mask[dst] = s.mask[src];
    }
  return out;
}

StereoSample sample_crop(const StereoSample& s, std::size_t ch, std::size_t cw,
                         std::mt19937_64& rng) {
  if (ch > s.height() || cw > s.width())
    throw std::invalid_argument("crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                                " is larger than the " + std::to_string(s.height()) + "x" +
                                std::to_string(s.width()) + " image");
  std::uniform_int_distribution<std::size_t> dy(0, s.height() - ch), dx(0, s.width() - cw);
  const std::size_t top = dy(rng);
  const std::size_t left = dx(rng);
  return crop_at(s, top, left, ch, cw);
}

// ---- config ----

void TrainConfig::validate() const {
  model.validate();
  if (val_every == 0) throw std::invalid_argument("val_every must be positive");
  if (log_every == 0) throw std::invalid_argument("log_every must be positive");
  if (!(rmsprop.learning_rate >= 0) || !(rmsprop.decay >= 0 && rmsprop.decay < 1) ||
      !(rmsprop.epsilon > 0))
    throw std::invalid_argument("rmsprop needs lr >= 0, 0 <= decay < 1, epsilon > 0");
  range_max(pixel_range);
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  auto bad = [&] { return std::invalid_argument("bad value for " + key + ": '" + value + "'"); };
  auto size = [&] {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) throw bad();
    try {
      return std::size_t(std::stoull(value));
    } catch (const std::out_of_range&) {
      throw bad();
    }
  };
  auto real = [&] {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::logic_error&) {
      throw bad();
    }
    if (used != value.size()) throw bad();
    return v;
  };
  if (key == "features") model.features = size();
  else if (key == "max_disparity") model.max_disparity = size();
  else if (key == "crop_height" || key == "height") model.height = size();
  else if (key == "crop_width" || key == "width") model.width = size();
  else if (key == "channels") model.channels = size();
  else if (key == "variant") model.variant = parse_variant(value);
  else if (key == "loss") model.loss = parse_loss_kind(value);
  else if (key == "iterations") iterations = size();
  else if (key == "seed") seed = size();
  else if (key == "val_every") val_every = size();
  else if (key == "log_every") log_every = size();
  else if (key == "checkpoint_every") checkpoint_every = size();
  else if (key == "learning_rate") rmsprop.learning_rate = real();
  else if (key == "rms_decay") rmsprop.decay = real();
  else if (key == "rms_epsilon") rmsprop.epsilon = real();
  else if (key == "pixel_range") pixel_range = parse_pixel_range(value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

std::string TrainConfig::format() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "features=" << model.features << "\nmax_disparity=" << model.max_disparity
     << "\ncrop_height=" << model.height << "\ncrop_width=" << model.width
     << "\nchannels=" << model.channels << "\nvariant=" << to_string(model.variant)
     << "\nloss=" << to_string(model.loss) << "\niterations=" << iterations << "\nseed=" << seed
     << "\nval_every=" << val_every << "\nlog_every=" << log_every
     << "\ncheckpoint_every=" << checkpoint_every << "\nlearning_rate=" << rmsprop.learning_rate
     << "\nrms_decay=" << rmsprop.decay << "\nrms_epsilon=" << rmsprop.epsilon
     << "\npixel_range=" << to_string(pixel_range) << "\n";
  return os.str();
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](const std::string& v) {
    const auto b = v.find_first_not_of(" \t\r");
    const auto e = v.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    try {
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), std::move(base));
}

// ---- fit ----

std::string LogRecord::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(nullptr);
  j["val_mae"] = val_mae ? nlohmann::json(*val_mae) : nlohmann::json(nullptr);
  j["val_bad1"] = val_bad1 ? nlohmann::json(*val_bad1) : nlohmann::json(nullptr);
  return j.dump();
}

Metrics validate_model(ModelParams<float>& params, const std::vector<StereoSample>& samples,
                       PixelRange range) {
  if (samples.empty()) throw std::invalid_argument("validation set is empty");
  std::vector<float> pred, gt;
  std::vector<std::uint8_t> mask;
  for (const auto& s : samples) {
    NoGradGuard guard;
    const auto result = forward(normalize_image(s.left, range), normalize_image(s.right, range),
                                params, false);
    const Tensor<float> d = decode_disparity(result, params.config().loss);
    pred.insert(pred.end(), d.values().begin(), d.values().end());
    gt.insert(gt.end(), s.gt.values().begin(), s.gt.values().end());
    mask.insert(mask.end(), s.mask.values().begin(), s.mask.values().end());
  }
  const Shape shape{pred.size()};
  return compute_metrics(Tensor<float>(shape, std::move(pred)), Tensor<float>(shape, std::move(gt)),
                         Mask(shape, std::move(mask)));
}

namespace {

std::string checkpoint_name(std::size_t step) {
  std::ostringstream os;
  os << "checkpoint_" << std::setw(6) << std::setfill('0') << step << ".gcn";
  return os.str();
}

}  // namespace

FitResult fit(ModelParams<float>& params, const std::vector<StereoSample>& train,
              const std::vector<StereoSample>& validation, const TrainConfig& config,
              OptimState& state, const FitOptions& options) {
  config.validate();
  if (config.model != params.config()) {
    ModelConfig a = config.model, b = params.config();
    a.height = b.height = a.width = b.width = 0;
    if (!(a == b)) throw std::invalid_argument("training config and model parameters disagree");
  }
  if (train.empty()) throw std::invalid_argument("training set is empty");
  for (const auto& s : train) {
    s.validate();
    if (s.left.dim(2) != config.model.channels)
      throw ShapeError("training image has " + std::to_string(s.left.dim(2)) +
                       " channels, model expects " + std::to_string(config.model.channels));
  }
  state.options = config.rmsprop;

  FitResult result;
  if (config.iterations == 0) return result;

  std::ofstream file_log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    file_log.open(options.out_dir / "train_log.jsonl", std::ios::app);
  }
  auto emit = [&](const LogRecord& r) {
    result.log.push_back(r);
    const std::string line = r.to_json();
    if (options.log) *options.log << line << "\n" << std::flush;
    if (file_log) file_log << line << "\n" << std::flush;
  };

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  const auto train_config = params.config();

  for (std::size_t step = 1; step <= config.iterations; ++step) {
    const StereoSample& s = train[train.size() == 1 ? 0 : pick(rng)];
    const StereoSample crop = sample_crop(s, config.crop_height(), config.crop_width(), rng);
    const Tensor<float> l = normalize_image(crop.left, config.pixel_range);
    const Tensor<float> r = normalize_image(crop.right, config.pixel_range);

    ModelParams<float> last_good = params.clone();
    zero_grads(params);
    double loss_value;
    try {
      const auto out = forward(l, r, params, true);
      const Var<float> loss = model_loss(out, crop.gt, crop.mask, train_config.loss);
      loss_value = loss.value()[0];
      if (!std::isfinite(loss_value)) throw std::runtime_error("non-finite loss at step " + std::to_string(step));
      backward(loss);
      rmsprop_step(params, state);
    } catch (const std::runtime_error& e) {
      params = std::move(last_good);
      result.halted = true;
      result.halt_reason = e.what();
      LogRecord rec{step, std::nan(""), {}, {}};
      emit(rec);
      if (!options.out_dir.empty()) save_checkpoint(params, options.out_dir / "last_good.gcn");
      return result;
    }
    zero_grads(params);
    result.steps = step;

    const bool do_val = !validation.empty() &&
                        (step % config.val_every == 0 || step == config.iterations);
    if (do_val || step % config.log_every == 0 || step == 1) {
      LogRecord rec{step, loss_value, {}, {}};
      if (do_val) {
        const Metrics m = validate_model(params, validation, config.pixel_range);
        rec.val_mae = m.mae;
        rec.val_bad1 = m.bad(1.0);
        result.final_validation = m;
      }
      emit(rec);
      if (do_val && options.stop && options.stop(rec)) break;
    }
    if (!options.out_dir.empty() && config.checkpoint_every && step % config.checkpoint_every == 0)
      save_checkpoint(params, options.out_dir / checkpoint_name(step));
  }
  if (!options.out_dir.empty()) save_checkpoint(params, options.out_dir / "final.gcn");
  return result;
}

}  // namespace gcnet

#include "gcnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gcnet/training.hpp"

namespace gcnet {

double Metrics::bad(double threshold) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (thresholds[i] == threshold) return bad_rates[i];
  throw std::out_of_range("no bad-pixel rate for threshold " + std::to_string(threshold));
}

template <typename T>
Metrics compute_metrics(const Tensor<T>& pred, const Tensor<T>& gt, const Mask& mask,
                        const std::vector<double>& thresholds, bool d1) {
  if (pred.shape() != gt.shape() || mask.shape() != gt.shape())
    throw ShapeError("compute_metrics: pred " + shape_str(pred.shape()) + ", gt " +
                     shape_str(gt.shape()) + " and mask " + shape_str(mask.shape()) +
                     " must agree");
  Metrics m;
  m.thresholds = thresholds;
  m.has_d1 = d1;
  std::vector<std::size_t> bad(thresholds.size(), 0);
  std::size_t d1_bad = 0;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    const double e = std::abs(double(pred[i]) - double(gt[i]));
    ++m.count;
    abs_sum += e;
    sq_sum += e * e;
    for (std::size_t t = 0; t < thresholds.size(); ++t) bad[t] += e > thresholds[t];
    d1_bad += e > 3.0 && e > 0.05 * std::abs(double(gt[i]));
  }
  if (m.count == 0) throw std::invalid_argument("compute_metrics: mask selects no pixels");
  const double n = double(m.count);
  for (std::size_t b : bad) m.bad_rates.push_back(double(b) / n);
  m.mae = abs_sum / n;
  m.rms = std::sqrt(sq_sum / n);
  if (d1) m.d1 = double(d1_bad) / n;
  return m;
}

template Metrics compute_metrics<float>(const Tensor<float>&, const Tensor<float>&, const Mask&,
                                        const std::vector<double>&, bool);
template Metrics compute_metrics<double>(const Tensor<double>&, const Tensor<double>&,
                                         const Mask&, const std::vector<double>&, bool);

std::string format_metrics_table(const Metrics& m) {
  std::ostringstream os;
  os << std::fixed;
  os << "metric        value\n";
  for (std::size_t i = 0; i < m.thresholds.size(); ++i) {
    std::ostringstream label;
    label << ">" << std::defaultfloat << m.thresholds[i] << "px";
    os << std::left << std::setw(14) << label.str() << std::setprecision(2)
       << 100.0 * m.bad_rates[i] << "%\n";
  }
  if (m.has_d1) os << std::setw(14) << "D1" << std::setprecision(2) << 100.0 * m.d1 << "%\n";
  os << std::setw(14) << "MAE (px)" << std::setprecision(3) << m.mae << "\n";
  os << std::setw(14) << "RMS (px)" << std::setprecision(3) << m.rms << "\n";
  os << std::setw(14) << "pixels" << m.count << "\n";
  return os.str();
}

std::string format_metrics_kv(const Metrics& m) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (std::size_t i = 0; i < m.thresholds.size(); ++i)
    os << "bad_" << m.thresholds[i] << "=" << m.bad_rates[i] << "\n";
  if (m.has_d1) os << "d1=" << m.d1 << "\n";
  os << "mae=" << m.mae << "\nrms=" << m.rms << "\ncount=" << m.count << "\n";
  return os.str();
}

// ---- saliency ----

std::vector<std::pair<long, long>> occluder_grid(std::size_t height, std::size_t width,
                                                 const SaliencyOptions& options) {
  if (options.patch == 0 || options.stride == 0)
    throw std::invalid_argument("saliency: patch and stride must be positive");
  std::vector<std::pair<long, long>> out;
  for (std::size_t y = 0; y < height; y += options.stride)
    for (std::size_t x = 0; x < width; x += options.stride) out.emplace_back(long(y), long(x));
  return out;
}

std::size_t paint_patch(Tensor<float>& image, long cy, long cx, std::size_t patch, float value) {
  const long H = long(image.dim(0)), W = long(image.dim(1));
  const long C = image.rank() == 3 ? long(image.dim(2)) : 1;
  const long y0 = cy - long(patch / 2), x0 = cx - long(patch / 2);
  const long y1 = std::min(y0 + long(patch), H), x1 = std::min(x0 + long(patch), W);
  std::size_t touched = 0;
  for (long y = std::max(y0, 0L); y < y1; ++y)
    for (long x = std::max(x0, 0L); x < x1; ++x) {
      for (long c = 0; c < C; ++c) image[std::size_t((y * W + x) * C + c)] = value;
      ++touched;
    }
  return touched;
}

namespace {

float mean_value(const Tensor<float>& t) {
  double s = 0.0;
  for (float v : t.values()) s += v;
  return float(s / double(t.size()));
}

double probe(ModelParams<float>& params, const Tensor<float>& left, const Tensor<float>& right,
             std::size_t x, std::size_t y) {
  NoGradGuard guard;
  const auto result = forward(normalize_image(left, PixelRange::Unit),
                              normalize_image(right, PixelRange::Unit), params, false);
  const Tensor<float> d = decode_disparity(result, params.config().loss);
  return d.at(y, x);
}

}  // namespace

SaliencyResult occlusion_saliency(ModelParams<float>& params, const Tensor<float>& left,
                                  const Tensor<float>& right, std::size_t x, std::size_t y,
                                  const SaliencyOptions& options) {
  if (left.rank() != 3 || left.shape() != right.shape())
    throw ShapeError("saliency: views must be matching [H, W, C] images");
  const std::size_t H = left.dim(0), W = left.dim(1);
  if (x >= W || y >= H)
    throw std::invalid_argument("saliency: probe point (" + std::to_string(x) + ", " +
                                std::to_string(y) + ") lies outside the " + std::to_string(W) +
                                "x" + std::to_string(H) + " image");
  SaliencyResult out;
  out.base_disparity = probe(params, left, right, x, y);
  const long shift = std::lround(out.base_disparity);
  const float gray_l = mean_value(left), gray_r = mean_value(right);

  std::vector<double> acc(H * W, 0.0), cover(H * W, 0.0);
  for (const auto& [cy, cx] : occluder_grid(H, W, options)) {
    Tensor<float> l = left, r = right;
    const std::size_t hit_l = paint_patch(l, cy, cx, options.patch, gray_l);
    const std::size_t hit_r = paint_patch(r, cy, cx - shift, options.patch, gray_r);
    if (hit_l == 0 && hit_r == 0) continue;
    ++out.positions;
    const double response = std::abs(probe(params, l, r, x, y) - out.base_disparity);
    const long y0 = cy - long(options.patch / 2), x0 = cx - long(options.patch / 2);
    for (long yy = std::max(y0, 0L); yy < std::min(y0 + long(options.patch), long(H)); ++yy)
      for (long xx = std::max(x0, 0L); xx < std::min(x0 + long(options.patch), long(W)); ++xx) {
        acc[std::size_t(yy) * W + std::size_t(xx)] += response;
        cover[std::size_t(yy) * W + std::size_t(xx)] += 1.0;
      }
  }
  double peak = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (cover[i] > 0) acc[i] /= cover[i];
    peak = std::max(peak, acc[i]);
  }
  out.map = Tensor<float>(Shape{H, W});
  for (std::size_t i = 0; i < acc.size(); ++i)
    out.map[i] = peak > 0 ? float(acc[i] / peak) : 0.0f;
  return out;
}

Tensor<float> colormap(const Tensor<float>& values, float lo, float hi) {
  if (values.rank() != 2) throw ShapeError("colormap: expected [H, W], got " + shape_str(values.shape()));
  Tensor<float> out(Shape{values.dim(0), values.dim(1), 3});
  const float span = hi > lo ? hi - lo : 1.0f;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    const float t = std::isfinite(v) ? std::clamp((v - lo) / span, 0.0f, 1.0f) : 0.0f;
    out[3 * i] = t;
    out[3 * i + 1] = 1.0f - std::abs(2.0f * t - 1.0f);
    out[3 * i + 2] = 1.0f - t;
  }
  return out;
}

}  // namespace gcnet

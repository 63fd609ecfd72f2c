// Acceptance checks: one PASS/FAIL line per criterion item; exit status 0 iff
// every item of the selected criterion passes.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "gcnet/checkpoint.hpp"
#include "gcnet/data_io.hpp"
#include "gcnet/eval.hpp"
#include "gcnet/gradcheck.hpp"
#include "gcnet/model.hpp"
#include "gcnet/ops.hpp"
#include "gcnet/training.hpp"

namespace fs = std::filesystem;
using namespace gcnet;
using D = double;

namespace {

int failures = 0;

void report(bool ok, const std::string& id, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << id << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

Tensor<D> uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<D> t(std::move(shape));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double max_abs_diff(const Tensor<D>& a, const Tensor<D>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gcnet_accept_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------- criterion 1

// One row of the reference layer table; extents are fractions of the symbols.
struct TableRow {
  std::string layer;
  int d_den;  // 0: no disparity axis
  int h_den;
  int w_den;
  int f_mul;  // channels as multiple of F; -1 = C, 0 = absent, -2 = literal 1
};

std::vector<TableRow> reference_table() {
  std::vector<TableRow> rows = {{"input", 0, 1, 1, -1}, {"1", 0, 2, 2, 1}, {"2", 0, 2, 2, 1},
                                {"3", 0, 2, 2, 1},      {"add", 0, 2, 2, 1}};
  // seven more residual blocks, layers 4-17
  for (int i = 4; i <= 17; i += 2) {
    rows.push_back({std::to_string(i), 0, 2, 2, 1});
    rows.push_back({std::to_string(i + 1), 0, 2, 2, 1});
    rows.push_back({"add", 0, 2, 2, 1});
  }
  const std::vector<TableRow> rest = {
      {"18", 0, 2, 2, 1},  {"cost", 2, 2, 2, 2},  {"19", 2, 2, 2, 1},  {"20", 2, 2, 2, 1},
      {"21", 4, 4, 4, 2},  {"22", 4, 4, 4, 2},    {"23", 4, 4, 4, 2},  {"24", 8, 8, 8, 2},
      {"25", 8, 8, 8, 2},  {"26", 8, 8, 8, 2},    {"27", 16, 16, 16, 2}, {"28", 16, 16, 16, 2},
      {"29", 16, 16, 16, 2}, {"30", 32, 32, 32, 4}, {"31", 32, 32, 32, 4}, {"32", 32, 32, 32, 4},
      {"33", 16, 16, 16, 2}, {"add", 16, 16, 16, 2}, {"34", 8, 8, 8, 2},  {"add", 8, 8, 8, 2},
      {"35", 4, 4, 4, 2},  {"add", 4, 4, 4, 2},   {"36", 2, 2, 2, 1},  {"add", 2, 2, 2, 1},
      {"37", 1, 1, 1, -2}, {"soft-argmin", 0, 1, 1, 0}};
  rows.insert(rows.end(), rest.begin(), rest.end());
  return rows;
}

Shape evaluate(const TableRow& r, const ModelConfig& c) {
  Shape s;
  if (r.d_den) s.push_back(c.max_disparity / std::size_t(r.d_den));
  s.push_back(c.height / std::size_t(r.h_den));
  s.push_back(c.width / std::size_t(r.w_den));
  if (r.f_mul == -1) s.push_back(c.channels);
  if (r.f_mul == -2) s.push_back(1);
  if (r.f_mul > 0) s.push_back(c.features * std::size_t(r.f_mul));
  return s;
}

void criterion1() {
  const auto table = reference_table();
  const std::vector<ModelConfig> scales = {
      {.features = 32, .max_disparity = 192, .height = 256, .width = 512, .channels = 3},
      {.features = 16, .max_disparity = 64, .height = 96, .width = 160, .channels = 1}};
  for (const auto& c : scales) {
    const auto rows = audit(c);
    std::size_t matched = 0;
    std::string first_bad;
    for (std::size_t i = 0; i < std::max(rows.size(), table.size()); ++i) {
      const bool ok = i < rows.size() && i < table.size() && rows[i].layer == table[i].layer &&
                      rows[i].output == evaluate(table[i], c);
      if (ok)
        ++matched;
      else if (first_bad.empty())
        first_bad = " first mismatch at row " + std::to_string(i);
    }
    std::ostringstream id;
    id << "1.table F=" << c.features << " D=" << c.max_disparity << " " << c.height << "x" << c.width;
    report(matched == table.size() && rows.size() == table.size(), id.str(),
           std::to_string(matched) + "/" + std::to_string(table.size()) + " output-dim rows match" + first_bad);
  }

  struct Expect {
    Variant v;
    double target;
    const char* label;
  };
  for (const auto& e : {Expect{Variant::Hierarchical, 3.5e6, "3.5M"}, Expect{Variant::SingleScale, 0.24e6, "0.24M"},
                        Expect{Variant::UnaryOnly, 0.16e6, "0.16M"}}) {
    ModelConfig c;
    c.variant = e.v;
    const double n = double(ModelParams<float>::initialize(c, 1).parameter_count());
    const double rel = (n - e.target) / e.target;
    report(std::abs(rel) <= 0.10, "1.params " + to_string(e.v),
           num(n, 8) + " vs target " + e.label + " (" + num(100 * rel, 3) + "%, tolerance 10%)");
  }
}

// ---------------------------------------------------------------- criterion 2

Tensor<D> naive_conv2d(const Tensor<D>& x, const Tensor<D>& w, const Tensor<D>& b, std::size_t s) {
  const long H = long(x.dim(0)), W = long(x.dim(1)), Ci = long(x.dim(2));
  const long k = long(w.dim(0)), Co = long(w.dim(3)), p = (k - 1) / 2;
  const long Ho = (H + long(s) - 1) / long(s), Wo = (W + long(s) - 1) / long(s);
  Tensor<D> y(Shape{std::size_t(Ho), std::size_t(Wo), std::size_t(Co)});
  for (long oy = 0; oy < Ho; ++oy)
    for (long ox = 0; ox < Wo; ++ox)
      for (long co = 0; co < Co; ++co) {
        double acc = b[co];
        for (long ky = 0; ky < k; ++ky)
          for (long kx = 0; kx < k; ++kx)
            for (long ci = 0; ci < Ci; ++ci) {
              const long iy = oy * long(s) + ky - p, ix = ox * long(s) + kx - p;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x[(iy * W + ix) * Ci + ci] * w[((ky * k + kx) * Ci + ci) * Co + co];
            }
        y[(oy * Wo + ox) * Co + co] = acc;
      }
  return y;
}

Tensor<D> naive_conv3d(const Tensor<D>& x, const Tensor<D>& w, const Tensor<D>& b, std::size_t s) {
  const long Dd = long(x.dim(0)), H = long(x.dim(1)), W = long(x.dim(2)), Ci = long(x.dim(3));
  const long k = long(w.dim(0)), Co = long(w.dim(4)), p = (k - 1) / 2, S = long(s);
  const long Do = (Dd + S - 1) / S, Ho = (H + S - 1) / S, Wo = (W + S - 1) / S;
  Tensor<D> y(Shape{std::size_t(Do), std::size_t(Ho), std::size_t(Wo), std::size_t(Co)});
  for (long od = 0; od < Do; ++od)
    for (long oy = 0; oy < Ho; ++oy)
      for (long ox = 0; ox < Wo; ++ox)
        for (long co = 0; co < Co; ++co) {
          double acc = b[co];
          for (long kd = 0; kd < k; ++kd)
            for (long ky = 0; ky < k; ++ky)
              for (long kx = 0; kx < k; ++kx)
                for (long ci = 0; ci < Ci; ++ci) {
                  const long id = od * S + kd - p, iy = oy * S + ky - p, ix = ox * S + kx - p;
                  if (id < 0 || id >= Dd || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  acc += x[((id * H + iy) * W + ix) * Ci + ci] * w[(((kd * k + ky) * k + kx) * Ci + ci) * Co + co];
                }
          y[((od * Ho + oy) * Wo + ox) * Co + co] = acc;
        }
  return y;
}

// Scatter form: every input voxel spreads through every tap onto the s-times larger grid.
Tensor<D> naive_conv3d_transposed(const Tensor<D>& x, const Tensor<D>& w, const Tensor<D>& b, std::size_t s) {
  const long Di = long(x.dim(0)), Hi = long(x.dim(1)), Wi = long(x.dim(2)), Ci = long(x.dim(3));
  const long k = long(w.dim(0)), Co = long(w.dim(3)), p = (k - 1) / 2, S = long(s);
  const long Do = Di * S, Ho = Hi * S, Wo = Wi * S;
  Tensor<D> y(Shape{std::size_t(Do), std::size_t(Ho), std::size_t(Wo), std::size_t(Co)});
  for (long v = 0; v < Do * Ho * Wo; ++v)
    for (long co = 0; co < Co; ++co) y[v * Co + co] = b[co];
  for (long id = 0; id < Di; ++id)
    for (long iy = 0; iy < Hi; ++iy)
      for (long ix = 0; ix < Wi; ++ix)
        for (long kd = 0; kd < k; ++kd)
          for (long ky = 0; ky < k; ++ky)
            for (long kx = 0; kx < k; ++kx) {
              const long od = id * S + kd - p, oy = iy * S + ky - p, ox = ix * S + kx - p;
              if (od < 0 || od >= Do || oy < 0 || oy >= Ho || ox < 0 || ox >= Wo) continue;
              for (long co = 0; co < Co; ++co)
                for (long ci = 0; ci < Ci; ++ci)
                  y[((od * Ho + oy) * Wo + ox) * Co + co] +=
                      w[(((kd * k + ky) * k + kx) * Co + co) * Ci + ci] * x[((id * Hi + iy) * Wi + ix) * Ci + ci];
            }
  return y;
}

Tensor<D> naive_cost_volume(const Tensor<D>& l, const Tensor<D>& r, std::size_t disp) {
  const std::size_t H = l.dim(0), W = l.dim(1), F = l.dim(2);
  Tensor<D> v(Shape{disp, H, W, 2 * F});
  for (std::size_t d = 0; d < disp; ++d)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t f = 0; f < F; ++f) {
          v[((d * H + y) * W + x) * 2 * F + f] = l[(y * W + x) * F + f];
          v[((d * H + y) * W + x) * 2 * F + F + f] = x >= d ? r[(y * W + x - d) * F + f] : 0.0;
        }
  return v;
}

void criterion2() {
  constexpr int kTrials = 100;
  constexpr double kTol = 1e-12;
  std::mt19937_64 rng(2024);
  auto run = [&](const std::string& name, const std::function<double()>& trial) {
    double worst = 0.0;
    for (int t = 0; t < kTrials; ++t) worst = std::max(worst, trial());
    report(worst <= kTol, "2." + name,
           std::to_string(kTrials) + " random instances, max |diff| " + num(worst, 3) + " (tolerance 1e-12)");
  };
  run("conv2d", [&] {
    const std::size_t k = pick(rng, 0, 2) * 2 + 1, s = pick(rng, 1, 2);
    const std::size_t ci = pick(rng, 1, 4), co = pick(rng, 1, 4);
    const auto x = uniform(Shape{pick(rng, 1, 9), pick(rng, 1, 9), ci}, rng);
    const auto w = uniform(Shape{k, k, ci, co}, rng), b = uniform(Shape{co}, rng);
    const auto y = conv2d(Var<D>(x), Var<D>(w), Var<D>(b), ConvSpec{{k, k}, {s, s}, co, false}).value();
    return max_abs_diff(y, naive_conv2d(x, w, b, s));
  });
  run("conv3d", [&] {
    const std::size_t k = pick(rng, 0, 1) * 2 + 1, s = pick(rng, 1, 2);
    const std::size_t ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
    const auto x = uniform(Shape{pick(rng, 1, 6), pick(rng, 1, 6), pick(rng, 1, 6), ci}, rng);
    const auto w = uniform(Shape{k, k, k, ci, co}, rng), b = uniform(Shape{co}, rng);
    const auto y = conv3d(Var<D>(x), Var<D>(w), Var<D>(b), ConvSpec{{k, k, k}, {s, s, s}, co, false}).value();
    return max_abs_diff(y, naive_conv3d(x, w, b, s));
  });
  run("conv3d_transposed", [&] {
    const std::size_t k = pick(rng, 0, 1) * 2 + 1, s = pick(rng, 1, 2);
    const std::size_t ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
    const auto x = uniform(Shape{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4), ci}, rng);
    const auto w = uniform(Shape{k, k, k, co, ci}, rng), b = uniform(Shape{co}, rng);
    const auto y =
        conv3d_transposed(Var<D>(x), Var<D>(w), Var<D>(b), ConvSpec{{k, k, k}, {s, s, s}, co, true}).value();
    return max_abs_diff(y, naive_conv3d_transposed(x, w, b, s));
  });
  run("cost_volume", [&] {
    const std::size_t H = pick(rng, 1, 6), W = pick(rng, 1, 10), F = pick(rng, 1, 4), disp = pick(rng, 1, W);
    const auto l = uniform(Shape{H, W, F}, rng), r = uniform(Shape{H, W, F}, rng);
    return max_abs_diff(cost_volume(Var<D>(l), Var<D>(r), disp).value(), naive_cost_volume(l, r, disp));
  });
  run("metrics", [&] {
    const std::size_t n = pick(rng, 1, 300);
    const auto pred = uniform(Shape{n}, rng, 0, 40), gt = uniform(Shape{n}, rng, 0.5, 40);
    Mask mask(Shape{n});
    for (auto& m : mask.values()) m = rng() % 5 != 0;
    mask[0] = 1;
    const auto m = compute_metrics(pred, gt, mask, kDefaultThresholds, true);
    double cnt = 0, abs_sum = 0, sq = 0, b1 = 0, b3 = 0, b5 = 0, d1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      const double e = std::abs(pred[i] - gt[i]);
      cnt += 1;
      abs_sum += e;
      sq += e * e;
      b1 += e > 1;
      b3 += e > 3;
      b5 += e > 5;
      d1 += e > 3 && e > 0.05 * gt[i];
    }
    return std::max({std::abs(m.mae - abs_sum / cnt), std::abs(m.rms - std::sqrt(sq / cnt)),
                     std::abs(m.bad(1) - b1 / cnt), std::abs(m.bad(3) - b3 / cnt), std::abs(m.bad(5) - b5 / cnt),
                     std::abs(m.d1 - d1 / cnt), std::abs(double(m.count) - cnt)});
  });
}

// ---------------------------------------------------------------- criterion 3

void criterion3() {
  for (const auto& r : run_gradcheck_suite()) {
    std::string detail = std::to_string(r.report.checked) + " coordinates, max relative error " +
                         num(r.report.max_rel_error, 3) + " (tolerance " + num(r.tolerance, 1) + ")";
    if (!r.report.failure.empty()) detail += ", " + r.report.failure;
    report(r.pass(), "3." + r.op, detail);
  }
}

// ---------------------------------------------------------------- criterion 4

double direct_soft_argmin(const std::vector<long double>& c) {
  long double num_ = 0, den = 0;
  for (std::size_t d = 0; d < c.size(); ++d) {
    const long double e = std::exp(-c[d]);
    num_ += (long double)d * e;
    den += e;
  }
  return double(num_ / den);
}

void criterion4() {
  std::mt19937_64 rng(44);
  double worst_direct = 0.0, worst_shift = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t Dn = pick(rng, 2, 48), H = pick(rng, 1, 4), W = pick(rng, 1, 4);
    const auto c = uniform(Shape{Dn, H, W}, rng, -6, 6);
    const auto y = soft_argmin(Var<D>(c)).value();
    for (std::size_t p = 0; p < H * W; ++p) {
      std::vector<long double> col(Dn);
      for (std::size_t d = 0; d < Dn; ++d) col[d] = c[d * H * W + p];
      worst_direct = std::max(worst_direct, std::abs(y[p] - direct_soft_argmin(col)));
    }
    Tensor<D> shifted = c;
    const double k = std::uniform_real_distribution<double>(-50, 50)(rng);
    for (auto& v : shifted.values()) v += k;
    worst_shift = std::max(worst_shift, max_abs_diff(soft_argmin(Var<D>(shifted)).value(), y));
  }
  report(worst_direct <= 1e-6, "4.direct", "max |diff| to the direct formula " + num(worst_direct, 3) + " (tolerance 1e-6)");
  report(worst_shift <= 1e-9, "4.shift", "max |diff| under constant cost shifts " + num(worst_shift, 3) + " (tolerance 1e-9)");

  // unique-minimum inputs: the minimum is at least 0.5 below every other cost
  std::vector<double> worst_by_alpha;
  const std::vector<double> alphas = {1, 10, 100, 1000};
  std::vector<std::pair<Tensor<D>, std::size_t>> inputs;
  for (int t = 0; t < 50; ++t) {
    const std::size_t Dn = pick(rng, 2, 40);
    auto c = uniform(Shape{Dn, 1, 1}, rng, 0.5, 5);
    const std::size_t m = pick(rng, 0, Dn - 1);
    c[m] = 0.0;
    inputs.emplace_back(c, m);
  }
  for (double a : alphas) {
    double worst = 0.0;
    for (const auto& [c, m] : inputs) {
      Tensor<D> scaled = c;
      for (auto& v : scaled.values()) v *= a;
      worst = std::max(worst, std::abs(soft_argmin(Var<D>(scaled)).value()[0] - double(m)));
    }
    worst_by_alpha.push_back(worst);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < worst_by_alpha.size(); ++i) monotone = monotone && worst_by_alpha[i] <= worst_by_alpha[i - 1];
  std::string trace;
  for (std::size_t i = 0; i < alphas.size(); ++i)
    trace += (i ? ", " : "") + std::string("alpha=") + num(alphas[i]) + ": " + num(worst_by_alpha[i], 3);
  report(monotone && worst_by_alpha.back() <= 1e-6, "4.scaling",
         "max |soft argmin - argmin| over 50 inputs: " + trace + " (final tolerance 1e-6)");

  double worst_bimodal = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t half = pick(rng, 2, 15), Dn = 2 * half + 1, gap = pick(rng, 1, half);
    auto c = uniform(Shape{Dn, 1, 1}, rng, 0, 1);
    for (std::size_t d = 0; d < half; ++d) c[Dn - 1 - d] = c[d];
    c[half - gap] = c[half + gap] = -8.0;
    worst_bimodal = std::max(worst_bimodal, std::abs(soft_argmin(Var<D>(c)).value()[0] - double(half)));
  }
  const double classic = soft_argmin(Var<D>(Tensor<D>(Shape{5, 1, 1}, std::vector<D>{0, -5, 0, -5, 0}))).value()[0];
  report(worst_bimodal <= 1e-9 && std::abs(classic - 2.0) <= 1e-9, "4.bimodal",
         "two equal modes at 1 and 3 give " + num(classic, 12) + "; 50 symmetric inputs max |est - midpoint| " +
             num(worst_bimodal, 3));
}

// ---------------------------------------------------------------- training helpers

struct RunOutcome {
  Metrics metrics;
  std::size_t steps = 0;
  double seconds = 0.0;
  double last_loss = 0.0;
  bool halted = false;
};

RunOutcome train_and_score(TrainConfig tc, const std::vector<StereoSample>& train,
                           const std::vector<StereoSample>& validation,
                           std::function<bool(const LogRecord&)> stop = {}) {
  auto params = ModelParams<float>::initialize(tc.model, tc.seed);
  OptimState st;
  FitOptions fo;
  fo.stop = std::move(stop);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = fit(params, train, validation, tc, st, fo);
  RunOutcome out;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.steps = r.steps;
  out.halted = r.halted;
  for (const auto& rec : r.log)
    if (std::isfinite(rec.loss)) out.last_loss = rec.loss;
  out.metrics = validate_model(params, validation, tc.pixel_range);
  return out;
}

TrainConfig desk_config() {
  TrainConfig tc;  // F=8, D=32, 64x128 crops, RMSProp lr 1e-3
  tc.val_every = 50;
  tc.log_every = 50;
  return tc;
}

std::string describe(const RunOutcome& o) {
  return "MAE " + num(o.metrics.mae) + " px, >1px " + num(100 * o.metrics.bad(1), 3) + "% after " +
         std::to_string(o.steps) + " steps (" + num(o.seconds, 3) + " s)";
}

// ---------------------------------------------------------------- criterion 5

void criterion5() {
  SynthSpec s;
  s.height = 64;
  s.width = 128;
  s.texture = Texture::RandomDot;
  s.field = DisparityField::Constant;
  s.disparity = 2.5;
  const auto pair = gen_synthetic_pair(s);

  auto tc = desk_config();
  tc.iterations = 2000;
  const auto reg = train_and_score(tc, {pair}, {pair}, [](const LogRecord& r) { return r.val_mae && *r.val_mae < 0.25; });
  report(!reg.halted && reg.metrics.mae < 0.25, "5.regression", "L1 soft-argmin model: " + describe(reg) + " (threshold 0.25)");

  tc.iterations = 300;
  tc.model.loss = LossKind::HardClassification;
  const auto hard = train_and_score(tc, {pair}, {pair});
  report(!hard.halted && hard.metrics.mae >= 0.25, "5.hard-classification",
         "hard classification head: " + describe(hard) + ", final loss " + num(hard.last_loss, 3) +
             " (must not beat the 0.25 px quantisation floor)");
}

// ---------------------------------------------------------------- criterion 6

void criterion6() {
  SynthSpec s;
  s.height = 64;
  s.width = 128;
  s.field = DisparityField::TwoPlane;
  s.disparity = 4.0;
  s.disparity_far = 12.0;
  const auto pair = gen_synthetic_pair(s);
  auto tc = desk_config();
  tc.iterations = 2000;
  const auto o = train_and_score(tc, {pair}, {pair}, [](const LogRecord& r) {
    return r.val_mae && *r.val_mae < 0.5 && *r.val_bad1 < 0.05;
  });
  report(!o.halted && o.metrics.mae < 0.5 && o.metrics.bad(1) < 0.05 && o.steps <= 2000, "6.overfit",
         "two-plane sample, F=8 D=32: " + describe(o) + " (thresholds MAE < 0.5, >1px < 5%, <= 2000 steps)");
}

// ---------------------------------------------------------------- criterion 7

void criterion7(std::size_t iterations) {
  std::vector<StereoSample> train, held_out;
  for (std::uint64_t i = 0; i < 200; ++i) train.push_back(gen_synthetic_pair(random_synth_spec(64, 128, 32, 100 + i)));
  for (std::uint64_t i = 0; i < 20; ++i)
    held_out.push_back(gen_synthetic_pair(random_synth_spec(64, 128, 32, 900000 + i)));

  auto run = [&](Variant v, LossKind k) {
    auto tc = desk_config();
    tc.iterations = iterations;
    tc.val_every = iterations;
    tc.model.variant = v;
    tc.model.loss = k;
    const auto o = train_and_score(tc, train, held_out);
    std::cout << "INFO 7." << to_string(v) << "/" << to_string(k) << ": " << describe(o) << std::endl;
    return o.metrics.mae;
  };
  const double hier = run(Variant::Hierarchical, LossKind::L1);
  const double single = run(Variant::SingleScale, LossKind::L1);
  const double unary = run(Variant::UnaryOnly, LossKind::L1);
  const double soft = run(Variant::Hierarchical, LossKind::SoftClassification);
  report(hier < single && single < unary, "7.architecture",
         "held-out MAE hierarchical " + num(hier) + " < single-scale " + num(single) + " < unary-only " + num(unary));
  report(hier < soft, "7.loss", "held-out MAE L1 regression " + num(hier) + " < soft classification " + num(soft));
}

// ---------------------------------------------------------------- criterion 8

void criterion8() {
  std::vector<StereoSample> train;
  for (std::uint64_t i = 0; i < 4; ++i) train.push_back(gen_synthetic_pair(random_synth_spec(96, 160, 32, 7 + i)));
  auto tc = desk_config();
  tc.iterations = 100;
  tc.seed = 1234;
  std::vector<std::vector<std::uint8_t>> blobs;
  for (int run = 0; run < 2; ++run) {
    const auto dir = scratch_dir("determinism_" + std::to_string(run));
    auto params = ModelParams<float>::initialize(tc.model, tc.seed);
    OptimState st;
    FitOptions fo;
    fo.out_dir = dir;
    fit(params, train, {}, tc, st, fo);
    blobs.push_back(read_file_bytes(dir / "final.gcn"));
  }
  report(!blobs[0].empty() && blobs[0] == blobs[1], "8.determinism",
         "two 100-step runs with seed 1234 wrote " + std::to_string(blobs[0].size()) + "-byte checkpoints, " +
             (blobs[0] == blobs[1] ? "bitwise identical" : "different"));
}

// ---------------------------------------------------------------- criterion 9

void criterion9() {
  std::mt19937_64 rng(99);
  std::size_t ok[2] = {0, 0};
  for (int t = 0; t < 1000; ++t) {
    const std::size_t H = pick(rng, 1, 24), W = pick(rng, 1, 24);
    Tensor<float> img(rng() % 2 ? Shape{H, W} : Shape{H, W, 3});
    for (auto& v : img.values()) v = std::bit_cast<float>(std::uint32_t(rng()));
    for (int le = 0; le < 2; ++le) {
      const auto back = decode_pfm(encode_pfm(img, le == 1)).data;
      if (back.shape() == img.shape() && std::memcmp(back.data(), img.data(), img.size() * sizeof(float)) == 0)
        ++ok[le];
    }
  }
  report(ok[0] == 1000 && ok[1] == 1000, "9.pfm",
         "random bit-pattern maps round-tripped exactly: " + std::to_string(ok[1]) + "/1000 little-endian, " +
             std::to_string(ok[0]) + "/1000 big-endian");

  const auto dir = scratch_dir("checkpoint");
  bool all = true;
  for (auto v : {Variant::Hierarchical, Variant::SingleScale, Variant::UnaryOnly}) {
    ModelConfig c{.features = 8, .max_disparity = 32, .height = 64, .width = 128, .channels = 1};
    c.variant = v;
    auto p = ModelParams<float>::initialize(c, 77);
    for (const auto& [name, t] : p.named_tensors()) {
      Tensor<float> r = t;
      for (auto& x : r.values()) x = std::uniform_real_distribution<float>(0.1f, 2.0f)(rng);
      p.assign(name, r);
    }
    const auto path = dir / (to_string(v) + ".gcn");
    save_checkpoint(p, path);
    const auto q = load_checkpoint(path);
    const auto a = p.named_tensors(), b = q.named_tensors();
    bool same = q.config() == c && a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i)
      same = a[i].first == b[i].first && a[i].second.shape() == b[i].second.shape() &&
             std::memcmp(a[i].second.data(), b[i].second.data(), a[i].second.size() * sizeof(float)) == 0;
    same = same && encode_checkpoint(q) == read_file_bytes(path);
    all = all && same;
  }
  report(all, "9.checkpoint", std::string("save/load of all three variants ") + (all ? "bit exact" : "differs"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int criterion = 0;
  std::size_t ablation_iterations = 800;
  app.add_option("--criterion", criterion, "criterion number (1-9); 0 runs all")->check(CLI::Range(0, 9));
  app.add_option("--ablation-iterations", ablation_iterations, "training steps per model for criterion 7");
  CLI11_PARSE(app, argc, argv);

  const std::map<int, std::function<void()>> checks = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, [&] { criterion7(ablation_iterations); }},     {8, criterion8}, {9, criterion9}};
  try {
    for (const auto& [id, fn] : checks)
      if (criterion == 0 || criterion == id) fn();
  } catch (const std::exception& e) {
    report(false, "criterion " + std::to_string(criterion), std::string("exception: ") + e.what());
  }
  fs::remove_all(fs::temp_directory_path() / ("gcnet_accept_" + std::to_string(::getpid())));
  return failures == 0 ? 0 : 1;
}

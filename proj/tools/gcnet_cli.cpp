#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gcnet/checkpoint.hpp"
#include "gcnet/data_io.hpp"
#include "gcnet/eval.hpp"
#include "gcnet/gradcheck.hpp"
#include "gcnet/model.hpp"
#include "gcnet/training.hpp"

namespace fs = std::filesystem;
using namespace gcnet;

namespace {

fs::path default_out_dir() {
  if (const char* env = std::getenv("GCNET_OUT_DIR"); env && *env) return env;
  return "gcnet_out";
}

// Resolves an output path: relative paths land in the default output directory
// unless the user gave one explicitly.
fs::path resolve_out(const std::string& given, const std::string& fallback_name) {
  if (given.empty()) return default_out_dir() / fallback_name;
  return given;
}

void echo(const std::string& command, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cout << "# gcnet " << command << "\n";
  for (const auto& [k, v] : kv) std::cout << "# " << k << " = " << v << "\n";
}

void echo_config(const std::string& command, const std::string& formatted) {
  std::cout << "# gcnet " << command << "\n";
  std::istringstream in(formatted);
  for (std::string line; std::getline(in, line);) std::cout << "# " << line << "\n";
}

fs::path raster_path(fs::path p) { return p.replace_extension(".ppm"); }

Tensor<float> to_rgb_map(const Tensor<float>& values, float lo, float hi) {
  return colormap(values, lo, hi);
}

void apply_sets(TrainConfig& tc, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects KEY=VALUE, got '" + s + "'");
    tc.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

struct ModelFlags {
  std::string config;
  std::vector<std::string> sets;

  void add(CLI::App* app) {
    app->add_option("--config", config, "key=value configuration file");
    app->add_option("--set", sets, "override one configuration entry (KEY=VALUE), repeatable");
  }

  TrainConfig resolve(const TrainConfig& base, std::optional<std::uint64_t> seed) const {
    TrainConfig tc = config.empty() ? base : load_train_config(config, base);
    apply_sets(tc, sets);
    if (seed) tc.seed = *seed;
    tc.validate();
    return tc;
  }
};

Tensor<float> load_view(const fs::path& path, const ModelConfig& c) {
  auto img = load_image_any(path);
  if (img.dim(2) != c.channels)
    throw std::invalid_argument(path.string() + ": " + std::to_string(img.dim(2)) +
                                " channels, model expects " + std::to_string(c.channels));
  return img;
}

int cmd_train(const ModelFlags& mf, const std::string& data, const std::string& val,
              std::size_t synth_count, const std::string& out, std::optional<std::uint64_t> seed) {
  const TrainConfig tc = mf.resolve(TrainConfig{}, seed);
  const fs::path dir = resolve_out(out, "train");
  echo_config("train", tc.format() + "data=" + (data.empty() ? "synthetic" : data) +
                           "\nvalidation=" + (val.empty() ? "none" : val) + "\nout=" + dir.string() + "\n");

  std::vector<StereoSample> train, validation;
  if (!data.empty()) {
    train = load_dataset(data);
  } else {
    if (synth_count == 0) throw std::invalid_argument("train needs --data or --synth N");
    const double dmax = double(tc.model.max_disparity);
    for (std::size_t i = 0; i < synth_count; ++i)
      train.push_back(gen_synthetic_pair(random_synth_spec(tc.model.height, tc.model.width, dmax, tc.seed + i)));
    for (std::size_t i = 0; i < std::max<std::size_t>(1, synth_count / 5); ++i)
      validation.push_back(
          gen_synthetic_pair(random_synth_spec(tc.model.height, tc.model.width, dmax, tc.seed + 1000003 + i)));
  }
  if (!val.empty()) validation = load_dataset(val);
  for (const auto& s : train) {
    if (s.left.dim(2) != tc.model.channels)
      throw std::invalid_argument("training images have " + std::to_string(s.left.dim(2)) +
                                  " channels, config expects " + std::to_string(tc.model.channels));
    if (s.height() < tc.crop_height() || s.width() < tc.crop_width())
      throw std::invalid_argument("training image smaller than the crop");
  }

  auto params = ModelParams<float>::initialize(tc.model, tc.seed);
  OptimState state;
  FitOptions opt;
  opt.out_dir = dir;
  opt.log = &std::cout;
  const auto result = fit(params, train, validation, tc, state, opt);
  if (result.halted) {
    std::cerr << "error: training halted: " << result.halt_reason << "\n";
    return 2;
  }
  std::cout << "# steps = " << result.steps << "\n# checkpoint = " << (dir / "final.gcn").string() << "\n";
  if (result.final_validation) std::cout << format_metrics_kv(*result.final_validation);
  return 0;
}

int cmd_predict(const std::string& left, const std::string& right, const std::string& ckpt,
                const std::string& out, const std::string& range) {
  auto params = load_checkpoint(ckpt);
  const auto& c = params.config();
  const fs::path out_path = resolve_out(out, "disparity.pfm");
  echo("predict", {{"left", left},
                   {"right", right},
                   {"checkpoint", ckpt},
                   {"variant", to_string(c.variant)},
                   {"loss", to_string(c.loss)},
                   {"max_disparity", std::to_string(c.max_disparity)},
                   {"pixel_range", range},
                   {"out", out_path.string()}});
  const PixelRange pr = parse_pixel_range(range);
  const auto l = load_view(left, c), r = load_view(right, c);
  if (l.shape() != r.shape()) throw ShapeError("left and right images differ in shape");
  c.validate_input(l.dim(0), l.dim(1));
  NoGradGuard guard;
  const auto res = forward(normalize_image(l, pr), normalize_image(r, pr), params, false);
  const auto disp = decode_disparity(res, c.loss);
  const auto rgb = to_rgb_map(disp, 0.0f, float(c.max_disparity - 1));
  write_pfm(disp, out_path);
  write_pnm(rgb, raster_path(out_path));
  std::cout << "wrote " << out_path.string() << " and " << raster_path(out_path).string() << "\n";
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& gt, bool d1, bool lidar) {
  echo("eval", {{"pred", pred}, {"gt", gt}, {"d1", d1 ? "true" : "false"},
                {"invalid", lidar ? "non-positive" : "non-finite"}});
  const auto p = read_pfm(pred).data;
  const auto g = read_pfm(gt).data;
  if (p.shape() != g.shape()) throw ShapeError("prediction and ground truth differ in shape");
  const auto mask = sparse_mask_from_gt(g, lidar ? InvalidPolicy::NonPositive : InvalidPolicy::NonFinite);
  if (!mask.usable()) throw std::invalid_argument("ground truth has no valid pixels");
  const auto m = compute_metrics(p, g, mask.mask, kDefaultThresholds, d1);
  std::cout << format_metrics_table(m) << format_metrics_kv(m);
  return 0;
}

int cmd_gradcheck(const std::string& op, bool all, std::uint64_t seed) {
  if (all == !op.empty()) throw std::invalid_argument("gradcheck needs exactly one of --op NAME or --all");
  echo("gradcheck", {{"ops", all ? "all" : op}, {"seed", std::to_string(seed)}});
  std::vector<OpCheckResult> results;
  if (all)
    results = run_gradcheck_suite(seed);
  else
    results.push_back(run_op_gradcheck(op, seed));
  bool ok = true;
  std::cout << std::left << std::setw(22) << "op" << std::setw(10) << "checked" << std::setw(14) << "max_rel"
            << std::setw(10) << "tol" << "result\n";
  for (const auto& r : results) {
    std::cout << std::left << std::setw(22) << r.op << std::setw(10) << r.report.checked << std::setw(14)
              << std::setprecision(3) << std::scientific << r.report.max_rel_error << std::setw(10)
              << r.tolerance << std::defaultfloat << (r.pass() ? "PASS" : "FAIL");
    if (!r.report.failure.empty()) std::cout << "  " << r.report.failure;
    std::cout << "\n";
    ok = ok && r.pass();
  }
  return ok ? 0 : 1;
}

int cmd_audit(const ModelFlags& mf) {
  TrainConfig base;
  base.model = ModelConfig{};
  const TrainConfig tc = mf.resolve(base, std::nullopt);
  echo_config("audit", tc.format());
  std::cout << format_audit(tc.model, audit(tc.model));
  return 0;
}

int cmd_synth(const std::string& spec_path, std::size_t count, const std::string& out,
              std::optional<std::uint64_t> seed, std::size_t height, std::size_t width, double max_disp) {
  if (count == 0) throw std::invalid_argument("--count must be positive");
  const fs::path dir = resolve_out(out, "synth");
  std::optional<SynthSpec> base;
  if (!spec_path.empty()) {
    const auto bytes = read_file_bytes(spec_path);
    base = parse_synth_spec(std::string(bytes.begin(), bytes.end()));
    if (seed) base->seed = *seed;
    base->validate();
    echo_config("synth", format_synth_spec(*base) + "count=" + std::to_string(count) + "\nout=" + dir.string() + "\n");
  } else {
    echo("synth", {{"mode", "random"},
                   {"height", std::to_string(height)},
                   {"width", std::to_string(width)},
                   {"max_disparity", std::to_string(max_disp)},
                   {"seed", std::to_string(seed.value_or(1))},
                   {"count", std::to_string(count)},
                   {"out", dir.string()}});
  }

  // Generate everything before touching the filesystem.
  std::vector<StereoSample> samples;
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec s;
    if (base) {
      s = *base;
      s.seed = base->seed + i;
    } else {
      s = random_synth_spec(height, width, max_disp, seed.value_or(1) + i);
    }
    samples.push_back(gen_synthetic_pair(s));
  }
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    std::ostringstream stem;
    stem << std::setw(4) << std::setfill('0') << i;
    ManifestEntry e{stem.str() + "_left.pgm", stem.str() + "_right.pgm", stem.str() + "_gt.pfm"};
    Tensor<float> gt = samples[i].gt;
    for (std::size_t k = 0; k < gt.size(); ++k)
      if (!samples[i].mask[k]) gt[k] = std::numeric_limits<float>::infinity();
    write_pnm(samples[i].left, dir / e.left);
    write_pnm(samples[i].right, dir / e.right);
    write_pfm(gt, dir / e.gt);
    entries.push_back(e);
  }
  write_manifest(entries, dir / "manifest.jsonl");
  std::cout << "wrote " << count << " pairs and " << (dir / "manifest.jsonl").string() << "\n";
  return 0;
}

int cmd_saliency(const std::string& ckpt, const std::string& left, const std::string& right, long x, long y,
                 const std::string& out, const SaliencyOptions& so) {
  auto params = load_checkpoint(ckpt);
  const fs::path out_path = resolve_out(out, "saliency.pfm");
  echo("saliency", {{"checkpoint", ckpt},
                    {"left", left},
                    {"right", right},
                    {"x", std::to_string(x)},
                    {"y", std::to_string(y)},
                    {"patch", std::to_string(so.patch)},
                    {"stride", std::to_string(so.stride)},
                    {"out", out_path.string()}});
  const auto l = load_view(left, params.config()), r = load_view(right, params.config());
  if (l.shape() != r.shape()) throw ShapeError("left and right images differ in shape");
  const auto res = occlusion_saliency(params, l, r, x, y, so);
  write_pfm(res.map, out_path);
  write_pnm(to_rgb_map(res.map, 0.0f, 1.0f), raster_path(out_path));
  std::cout << "base_disparity=" << res.base_disparity << "\npositions=" << res.positions << "\n"
            << "wrote " << out_path.string() << " and " << raster_path(out_path).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GC-Net stereo disparity estimation"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "seed for every random choice")->expected(1);

  ModelFlags train_flags, audit_flags;
  std::string data, val, out, left, right, ckpt, pred, gt, op, spec, range = "unit";
  std::size_t synth_n = 0, count = 0, height = 64, width = 128;
  double max_disp = 32.0;
  bool d1 = false, lidar = false, all = false;
  long px = 0, py = 0;
  SaliencyOptions so;

  auto* train = app.add_subcommand("train", "train a model");
  train_flags.add(train);
  train->add_option("--data", data, "training manifest (JSON lines)")->check(CLI::ExistingFile);
  train->add_option("--val", val, "validation manifest")->check(CLI::ExistingFile);
  train->add_option("--synth", synth_n, "train on N generated scenes instead of --data");
  train->add_option("--out", out, "output directory");

  auto* predict = app.add_subcommand("predict", "estimate disparity for one pair");
  predict->add_option("--left", left)->required()->check(CLI::ExistingFile);
  predict->add_option("--right", right)->required()->check(CLI::ExistingFile);
  predict->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  predict->add_option("--out", out, "output PFM");
  predict->add_option("--pixel-range", range, "unit or byte");

  auto* eval = app.add_subcommand("eval", "score a disparity map");
  eval->add_option("--pred", pred)->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt)->required()->check(CLI::ExistingFile);
  eval->add_flag("--d1", d1, "also report the D1 outlier rate");
  eval->add_flag("--lidar", lidar, "treat non-positive ground truth as missing");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--op", op, "one operator");
  gradcheck->add_flag("--all", all, "every operator");

  auto* audit_cmd = app.add_subcommand("audit", "print the layer table");
  audit_flags.add(audit_cmd);

  auto* synth = app.add_subcommand("synth", "write synthetic stereo pairs");
  synth->add_option("--spec", spec, "scene spec file (key=value); omitted: random scenes")->check(CLI::ExistingFile);
  synth->add_option("--count", count)->required();
  synth->add_option("--out", out, "output directory");
  synth->add_option("--height", height);
  synth->add_option("--width", width);
  synth->add_option("--max-disparity", max_disp);

  auto* saliency = app.add_subcommand("saliency", "occlusion saliency for one pixel");
  saliency->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  saliency->add_option("--left", left)->required()->check(CLI::ExistingFile);
  saliency->add_option("--right", right)->required()->check(CLI::ExistingFile);
  saliency->add_option("--x", px)->required();
  saliency->add_option("--y", py)->required();
  saliency->add_option("--out", out, "output PFM");
  saliency->add_option("--patch", so.patch);
  saliency->add_option("--stride", so.stride);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_flags, data, val, synth_n, out, seed);
    if (*predict) return cmd_predict(left, right, ckpt, out, range);
    if (*eval) return cmd_eval(pred, gt, d1, lidar);
    if (*gradcheck) return cmd_gradcheck(op, all, seed.value_or(27));
    if (*audit_cmd) return cmd_audit(audit_flags);
    if (*synth) return cmd_synth(spec, count, out, seed, height, width, max_disp);
    if (*saliency) return cmd_saliency(ckpt, left, right, px, py, out, so);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

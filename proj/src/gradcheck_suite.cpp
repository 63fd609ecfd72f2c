#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>

#include "gcnet/gradcheck.hpp"
#include "gcnet/model.hpp"
#include "gcnet/ops.hpp"

namespace gcnet {

namespace {

using D = double;
using Inputs = std::vector<Tensor<D>>;

Tensor<D> uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<D> t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// Values bounded away from zero so finite differences never straddle a kink.
Tensor<D> off_zero(Shape shape, std::mt19937_64& rng) {
  auto t = uniform(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.values())
    if (sign(rng)) v = -v;
  return t;
}

Var<D> weighted_sum(const Var<D>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, Var<D>(uniform(y.shape(), rng))));
}

ConvSpec spec2(std::size_t k, std::size_t s, std::size_t cout) { return {{k, k}, {s, s}, cout, false}; }
ConvSpec spec3(std::size_t k, std::size_t s, std::size_t cout, bool t = false) {
  return {{k, k, k}, {s, s, s}, cout, t};
}

OpCheckResult check(const std::string& name, const ScalarFunction<D>& f, const Inputs& in,
                    GradCheckOptions opt = {}) {
  OpCheckResult r;
  r.op = name;
  r.tolerance = opt.tolerance;
  r.report = grad_check<D>(f, in, opt);
  return r;
}

OpCheckResult end_to_end(std::mt19937_64& rng) {
  ModelConfig c;
  c.features = 4;
  c.max_disparity = 32;
  c.height = 32;
  c.width = 32;
  c.channels = 1;
  auto params = ModelParams<D>::initialize(c, rng());
  const auto left = uniform(Shape{32, 32, 1}, rng), right = uniform(Shape{32, 32, 1}, rng);
  const auto gt = uniform(Shape{32, 32}, rng, 0.0, 31.0);
  const Tensor<std::uint8_t> mask(Shape{32, 32}, 1);

  OpCheckResult total;
  total.op = "end_to_end";
  total.tolerance = 1e-3;
  for (int id : {1, 5, 18, 19, 21, 27, 30, 33, 36, 37}) {
    const Tensor<D> w0 = params.layer(id).weight.value();
    GradCheckOptions opt;
    opt.step = 1e-6;
    opt.samples_per_input = 4;
    opt.seed = std::uint64_t(id);
    const auto rep = grad_check<D>(
        [&](const std::vector<Var<D>>& v) {
          params.layer(id).weight = v[0];
          return l1_loss(forward(left, right, params, true).disparity, gt, mask);
        },
        {w0}, opt);
    params.layer(id).weight = Var<D>(w0, true);
    total.report.checked += rep.checked;
    if (!rep.failure.empty() && total.report.failure.empty())
      total.report.failure = layer_name(id) + ": " + rep.failure;
    if (rep.max_rel_error >= total.report.max_rel_error) {
      total.report.max_rel_error = rep.max_rel_error;
      total.report.worst = layer_name(id) + " " + rep.worst;
    }
  }
  total.report.pass = total.pass();
  return total;
}

using Builder = std::function<OpCheckResult(std::mt19937_64&)>;

const std::vector<std::pair<std::string, Builder>>& suite() {
  static const std::vector<std::pair<std::string, Builder>> ops = {
      {"conv2d",
       [](std::mt19937_64& rng) {
         return check("conv2d",
                      [](const std::vector<Var<D>>& v) { return weighted_sum(conv2d(v[0], v[1], v[2], spec2(3, 2, 3)), 1); },
                      {uniform(Shape{5, 6, 2}, rng), uniform(Shape{3, 3, 2, 3}, rng), uniform(Shape{3}, rng)});
       }},
      {"conv3d",
       [](std::mt19937_64& rng) {
         return check("conv3d",
                      [](const std::vector<Var<D>>& v) { return weighted_sum(conv3d(v[0], v[1], v[2], spec3(3, 2, 2)), 2); },
                      {uniform(Shape{3, 4, 4, 2}, rng), uniform(Shape{3, 3, 3, 2, 2}, rng), uniform(Shape{2}, rng)});
       }},
      {"conv3d_transposed",
       [](std::mt19937_64& rng) {
         return check("conv3d_transposed",
                      [](const std::vector<Var<D>>& v) {
                        return weighted_sum(conv3d_transposed(v[0], v[1], v[2], spec3(3, 2, 2, true)), 3);
                      },
                      {uniform(Shape{2, 2, 3, 3}, rng), uniform(Shape{3, 3, 3, 2, 3}, rng), uniform(Shape{2}, rng)});
       }},
      {"batch_norm",
       [](std::mt19937_64& rng) {
         return check("batch_norm",
                      [](const std::vector<Var<D>>& v) {
                        return weighted_sum(batch_norm(v[0], v[1], v[2], static_cast<RunningStats<D>*>(nullptr)), 4);
                      },
                      {uniform(Shape{3, 4, 2}, rng), uniform(Shape{2}, rng, 0.5, 1.5), uniform(Shape{2}, rng)});
       }},
      {"batch_norm_inference",
       [](std::mt19937_64& rng) {
         return check("batch_norm_inference",
                      [](const std::vector<Var<D>>& v) {
                        RunningStats<D> st(2);
                        st.mean[0] = 0.3;
                        st.var[1] = 2.0;
                        BatchNormOptions o;
                        o.training = false;
                        return weighted_sum(batch_norm(v[0], v[1], v[2], &st, o), 5);
                      },
                      {uniform(Shape{3, 4, 2}, rng), uniform(Shape{2}, rng), uniform(Shape{2}, rng)});
       }},
      {"relu",
       [](std::mt19937_64& rng) {
         return check("relu", [](const std::vector<Var<D>>& v) { return weighted_sum(relu(v[0]), 6); },
                      {off_zero(Shape{4, 5}, rng)});
       }},
      {"add",
       [](std::mt19937_64& rng) {
         return check("add", [](const std::vector<Var<D>>& v) { return weighted_sum(add(v[0], v[1]), 7); },
                      {uniform(Shape{3, 2}, rng), uniform(Shape{3, 2}, rng)});
       }},
      {"mul",
       [](std::mt19937_64& rng) {
         return check("mul", [](const std::vector<Var<D>>& v) { return weighted_sum(mul(v[0], v[1]), 8); },
                      {uniform(Shape{3, 2}, rng), uniform(Shape{3, 2}, rng)});
       }},
      {"scale",
       [](std::mt19937_64& rng) {
         return check("scale", [](const std::vector<Var<D>>& v) { return weighted_sum(scale(v[0], -1.75), 9); },
                      {uniform(Shape{3, 2}, rng)});
       }},
      {"reshape",
       [](std::mt19937_64& rng) {
         return check("reshape", [](const std::vector<Var<D>>& v) { return weighted_sum(reshape(v[0], Shape{6}), 10); },
                      {uniform(Shape{3, 2}, rng)});
       }},
      {"softmax",
       [](std::mt19937_64& rng) {
         return check("softmax", [](const std::vector<Var<D>>& v) { return weighted_sum(softmax(v[0], 1), 11); },
                      {uniform(Shape{3, 4, 2}, rng, -2, 2)});
       }},
      {"cost_volume",
       [](std::mt19937_64& rng) {
         return check("cost_volume",
                      [](const std::vector<Var<D>>& v) { return weighted_sum(cost_volume(v[0], v[1], 3), 12); },
                      {uniform(Shape{2, 4, 3}, rng), uniform(Shape{2, 4, 3}, rng)});
       }},
      {"soft_argmin",
       [](std::mt19937_64& rng) {
         return check("soft_argmin", [](const std::vector<Var<D>>& v) { return weighted_sum(soft_argmin(v[0]), 13); },
                      {uniform(Shape{5, 2, 3}, rng, -2, 2)});
       }},
      {"upsample2x",
       [](std::mt19937_64& rng) {
         return check("upsample2x",
                      [](const std::vector<Var<D>>& v) {
                        return add(weighted_sum(upsample2x(v[0], 0), 14), weighted_sum(upsample2x(v[0], 2), 15));
                      },
                      {uniform(Shape{3, 2, 2}, rng)});
       }},
      {"l1_loss",
       [](std::mt19937_64& rng) {
         const auto pred = uniform(Shape{3, 4}, rng, 0, 3);
         Tensor<D> gt(Shape{3, 4});
         for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = pred[i] + (i % 2 ? 0.5 : -0.5);
         Tensor<std::uint8_t> mask(Shape{3, 4}, 1);
         mask[5] = 0;
         return check("l1_loss", [gt, mask](const std::vector<Var<D>>& v) { return l1_loss(v[0], gt, mask); },
                      {pred});
       }},
      {"cross_entropy",
       [](std::mt19937_64& rng) {
         auto target = uniform(Shape{4, 3, 4}, rng, 0.0, 1.0);
         for (std::size_t p = 0; p < 12; ++p) {
           double s = 0.0;
           for (std::size_t d = 0; d < 4; ++d) s += target[d * 12 + p];
           for (std::size_t d = 0; d < 4; ++d) target[d * 12 + p] /= s;
         }
         Tensor<std::uint8_t> mask(Shape{3, 4}, 1);
         mask[2] = 0;
         return check("cross_entropy",
                      [target, mask](const std::vector<Var<D>>& v) { return cross_entropy(v[0], target, mask); },
                      {uniform(Shape{4, 3, 4}, rng)});
       }},
      {"end_to_end", [](std::mt19937_64& rng) { return end_to_end(rng); }},
  };
  return ops;
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : suite()) names.push_back(name);
  return names;
}

OpCheckResult run_op_gradcheck(const std::string& op, std::uint64_t seed) {
  for (const auto& [name, fn] : suite()) {
    if (name != op) continue;
    std::mt19937_64 rng(seed);
    auto r = fn(rng);
    r.report.pass = r.pass();
    return r;
  }
  throw std::invalid_argument("unknown op '" + op + "'");
}

std::vector<OpCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<OpCheckResult> out;
  for (const auto& name : gradcheck_op_names()) out.push_back(run_op_gradcheck(name, seed));
  return out;
}

}  // namespace gcnet

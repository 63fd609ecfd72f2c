#include "gcnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gcnet {

template <typename T>
GradCheckReport grad_check(const ScalarFunction<T>& f, const std::vector<Tensor<T>>& inputs,
                           const GradCheckOptions& options) {
  GradCheckReport report;

  std::vector<Var<T>> vars;
  for (const auto& t : inputs) vars.emplace_back(t, true);
  Var<T> loss = f(vars);
  if (loss.value().size() != 1) throw std::invalid_argument("grad_check: function must be scalar");
  if (!std::isfinite(double(loss.value()[0]))) {
    report.pass = false;
    report.failure = "non-finite loss at the base point";
    return report;
  }
  backward(loss);

  auto evaluate = [&](std::size_t which, std::size_t coord, T delta) {
    NoGradGuard guard;
    std::vector<Var<T>> probe;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor<T> t = inputs[i];
      if (i == which) t[coord] += delta;
      probe.emplace_back(std::move(t));
    }
    return double(f(probe).value()[0]);
  };

  std::mt19937_64 rng(options.seed);
  const T h = T(options.step);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<T> analytic = vars[i].grad_or_zero();
    std::vector<std::size_t> coords(inputs[i].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.samples_per_input && options.samples_per_input < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.samples_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t j : coords) {
      const double plus = evaluate(i, j, h);
      const double minus = evaluate(i, j, -h);
      const double a = analytic[j];
      const std::string where = "input " + std::to_string(i) + ", coordinate " + std::to_string(j);
      if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(a)) {
        report.pass = false;
        report.failure = "non-finite value at " + where;
        return report;
      }
      // (x+h) - (x-h) as actually represented, not 2h
      const double span = double(inputs[i][j] + h) - double(inputs[i][j] - h);
      const double numeric = (plus - minus) / span;
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = where;
      }
    }
  }
  report.pass = report.max_rel_error <= options.tolerance;
  return report;
}

template GradCheckReport grad_check<float>(const ScalarFunction<float>&,
                                           const std::vector<Tensor<float>>&,
                                           const GradCheckOptions&);
template GradCheckReport grad_check<double>(const ScalarFunction<double>&,
                                            const std::vector<Tensor<double>>&,
                                            const GradCheckOptions&);

}  // namespace gcnet

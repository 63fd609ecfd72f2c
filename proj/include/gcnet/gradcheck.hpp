#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gcnet/autograd.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Coordinates probed per input; 0 probes every coordinate.
  std::size_t samples_per_input = 0;
  std::uint64_t seed = 7;
};

/// Default tolerance by precision: finite differences are noise-dominated in
/// single precision.
template <typename T>
constexpr double default_gradcheck_tolerance() {
  return sizeof(T) >= 8 ? 1e-4 : 1e-2;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = true;
  std::size_t checked = 0;
  std::string worst;    // "input i, coordinate j" of the largest error
  std::string failure;  // non-empty when a non-finite value was met
};

template <typename T>
using ScalarFunction = std::function<Var<T>(const std::vector<Var<T>>&)>;

/// Compares analytic gradients of a scalar function against central
/// differences (f(x+h) - f(x-h)) / 2h with relative error
/// |a - n| / max(|a|, |n|, 1e-8).
template <typename T>
GradCheckReport grad_check(const ScalarFunction<T>& f, const std::vector<Tensor<T>>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace gcnet

namespace gcnet {

struct OpCheckResult {
  std::string op;
  GradCheckReport report;
  double tolerance = 1e-4;
  bool pass() const { return report.failure.empty() && report.max_rel_error <= tolerance; }
};

/// Names accepted by run_op_gradcheck, in suite order. "end_to_end" probes a
/// tiny full model through sampled coordinates of selected layers.
std::vector<std::string> gradcheck_op_names();

/// Double-precision check of one operator on small random inputs.
OpCheckResult run_op_gradcheck(const std::string& op, std::uint64_t seed = 27);

std::vector<OpCheckResult> run_gradcheck_suite(std::uint64_t seed = 27);

}  // namespace gcnet

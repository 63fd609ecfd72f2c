#pragma once

#include <cmath>
#include <random>

#include "gcnet/tensor.hpp"

namespace testing {

template <typename T = double>
gcnet::Tensor<T> random_tensor(const gcnet::Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  gcnet::Tensor<T> t(shape);
  for (auto& v : t.values()) v = T(u(rng));
  return t;
}

template <typename T>
double max_abs_diff(const gcnet::Tensor<T>& a, const gcnet::Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <typename T>
double dot(const gcnet::Tensor<T>& a, const gcnet::Tensor<T>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

}  // namespace testing

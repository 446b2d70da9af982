#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "aceseg/tensor.hpp"

namespace testutil {

template <typename T>
aceseg::Tensor<T> random_tensor(aceseg::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(d(rng));
  return aceseg::Tensor<T>::from(s, std::move(v), requires_grad);
}

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

template <typename T>
double max_rel_diff(const aceseg::Tensor<T>& a, const aceseg::Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, rel_err(a.data()[i], b.data()[i]));
  return m;
}

template <typename T>
double max_abs_diff(const aceseg::Tensor<T>& a, const aceseg::Tensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

}  // namespace testutil

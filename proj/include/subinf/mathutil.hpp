#pragma once

#include <cmath>

namespace subinf {

inline constexpr double ln_2pi = 1.8378770664093454836;

// log(1 + e^x), safe against overflow for large |x|.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Inverse of softplus: y = log(1 + e^x)  =>  x = log(e^y - 1).
inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_normal_density(double y, double mean, double variance) {
  const double r = y - mean;
  return -0.5 * (ln_2pi + std::log(variance) + r * r / variance);
}

}  // namespace subinf

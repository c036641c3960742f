#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace subinf {

using Rng = std::mt19937_64;

// Derives an independent stream seed from (master, index) with a splitmix64
// finalizer, so per-trial / per-chain generators never share state.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Eigen::VectorXd normal_vector(Rng& rng, Eigen::Index n, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline double uniform_real(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace subinf

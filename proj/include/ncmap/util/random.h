#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace ncmap {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream, substream), so that work split
// across views or trials never depends on evaluation order.
inline Rng MakeRng(uint64_t seed, uint64_t stream = 0, uint64_t substream = 0) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32),
                    static_cast<uint32_t>(substream),
                    static_cast<uint32_t>(substream >> 32)};
  return Rng(seq);
}

inline double Uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double Gaussian(Rng& rng, double sigma) {
  if (sigma == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

inline Eigen::VectorXd GaussianVector(Rng& rng, Eigen::Index n, double sigma) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = Gaussian(rng, sigma);
  return v;
}

inline Eigen::Vector3d UnitVector3(Rng& rng) {
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(Gaussian(rng, 1.0), Gaussian(rng, 1.0),
                        Gaussian(rng, 1.0));
  } while (v.norm() < 1e-9);
  return v.normalized();
}

}  // namespace ncmap

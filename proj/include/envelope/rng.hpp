#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace envelope {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed for a named stream. Used to hand disjoint RNG
/// streams to chains, EM iterations and experiment replicates so that
/// parallel execution order cannot change the draws.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

inline double draw_normal(Rng& rng) {
  std::normal_distribution<double> d;
  return d(rng);
}

/// i.i.d. standard normal entries, filled row by row.
inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  std::normal_distribution<double> d;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}

inline double draw_chi_squared(Rng& rng, double dof) {
  std::chi_squared_distribution<double> d(dof);
  return d(rng);
}

}  // namespace envelope

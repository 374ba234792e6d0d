#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mvfh/adjacency.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/rng.hpp"

namespace mvfh {

inline constexpr std::uint64_t kMoranDefaultSeed = 8191;
inline constexpr int kMoranDefaultPermutations = 9999;

struct MoransResult {
  double statistic;
  double p_value;  // one-sided (upper tail), Monte Carlo permutation
  int permutations;
};

namespace detail {

// I = (n/S0) * sum_{ij} w_ij z_i z_j / sum_i z_i^2 over binary weights.
inline double moran_statistic(const Eigen::VectorXd& z, const Adjacency& adj, double s0) {
  double cross = 0.0;
  for (int i = 0; i < adj.n; ++i) {
    double acc = 0.0;
    for (int j : adj.neighbors[i]) acc += z[j];
    cross += z[i] * acc;
  }
  return (static_cast<double>(adj.n) / s0) * cross / z.squaredNorm();
}

}  // namespace detail

// Moran's I with a first-order binary weight matrix. The p-value is by Monte
// Carlo permutation with a fixed default seed: valid on small lattices where
// the normal approximation is not, and exactly reproducible. p lands on the
// grid {k/(permutations+1)}.
inline MoransResult morans_i(const Eigen::VectorXd& values, const Adjacency& adj,
                             int permutations = kMoranDefaultPermutations,
                             std::uint64_t seed = kMoranDefaultSeed) {
  if (values.size() != adj.n) {
    throw ValidationError("morans_i: values length does not match lattice size");
  }
  Eigen::VectorXd z = values.array() - values.mean();
  if (z.squaredNorm() <= 0.0) {
    throw ValidationError("morans_i: input has zero sample variance");
  }
  const double s0 = 2.0 * static_cast<double>(adj.num_edges());
  const double observed = detail::moran_statistic(z, adj, s0);

  RngStream rng(seed);
  std::vector<int> perm(adj.n);
  std::iota(perm.begin(), perm.end(), 0);
  Eigen::VectorXd zp(adj.n);
  int at_least = 0;
  for (int b = 0; b < permutations; ++b) {
    // Fisher-Yates with our own stream, so results do not depend on
    // std::shuffle implementation details.
    for (int i = adj.n - 1; i > 0; --i) {
      int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
      std::swap(perm[i], perm[j]);
    }
    for (int i = 0; i < adj.n; ++i) zp[i] = z[perm[i]];
    if (detail::moran_statistic(zp, adj, s0) >= observed) ++at_least;
  }
  double p = (1.0 + at_least) / (1.0 + permutations);
  return MoransResult{observed, p, permutations};
}

}  // namespace mvfh

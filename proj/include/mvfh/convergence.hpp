#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "mvfh/errors.hpp"

namespace mvfh {

namespace detail {

inline double chain_mean(const Eigen::VectorXd& c) { return c.mean(); }

inline double chain_var(const Eigen::VectorXd& c) {
  if (c.size() < 2) return 0.0;
  return (c.array() - c.mean()).square().sum() / static_cast<double>(c.size() - 1);
}

// Splits every chain in half so a single wandering chain still registers.
inline std::vector<Eigen::VectorXd> split_chains(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw ValidationError("convergence: no chains");
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) {
    const Eigen::Index half = c.size() / 2;
    if (half < 2) throw ValidationError("convergence: chain too short to split");
    out.push_back(c.head(half));
    out.push_back(c.tail(half));
  }
  return out;
}

inline double autocovariance(const Eigen::VectorXd& c, Eigen::Index lag) {
  const Eigen::Index n = c.size();
  const double mean = c.mean();
  double acc = 0.0;
  for (Eigen::Index t = 0; t < n - lag; ++t) acc += (c[t] - mean) * (c[t + lag] - mean);
  return acc / static_cast<double>(n);
}

}  // namespace detail

// Potential scale reduction on split chains. 1 at convergence; > ~1.05 is the
// warning threshold used by the reporting layer.
inline double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  auto split = detail::split_chains(chains);
  const auto m = static_cast<double>(split.size());
  const auto n = static_cast<double>(split.front().size());
  for (const auto& c : split) {
    if (c.size() != split.front().size()) {
      throw ValidationError("split_rhat: chains must share a length");
    }
  }
  double grand = 0.0;
  for (const auto& c : split) grand += c.mean();
  grand /= m;
  double b = 0.0, w = 0.0;
  for (const auto& c : split) {
    const double mu = c.mean();
    b += (mu - grand) * (mu - grand);
    w += detail::chain_var(c);
  }
  b *= n / (m - 1.0);
  w /= m;
  if (w <= 0.0) return 1.0;  // constant chains
  const double var_plus = w * (n - 1.0) / n + b / n;
  return std::sqrt(var_plus / w);
}

// Effective sample size across chains, using split chains and the paired
// initial-monotone truncation of the combined autocorrelation sequence.
inline double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  auto split = detail::split_chains(chains);
  const auto m = static_cast<double>(split.size());
  const Eigen::Index n = split.front().size();
  double w = 0.0, b = 0.0, grand = 0.0;
  for (const auto& c : split) grand += c.mean();
  grand /= m;
  for (const auto& c : split) {
    w += detail::chain_var(c);
    b += (c.mean() - grand) * (c.mean() - grand);
  }
  w /= m;
  b *= static_cast<double>(n) / (m - 1.0);
  if (w <= 0.0) return m * static_cast<double>(n);  // constant chains: nominal size
  const double var_plus = w * (n - 1.0) / n + (m > 1 ? b / n : 0.0);

  std::vector<double> rho;
  for (Eigen::Index lag = 1; lag < n; ++lag) {
    double acov = 0.0;
    for (const auto& c : split) acov += detail::autocovariance(c, lag);
    acov /= m;
    rho.push_back(1.0 - (w - acov) / var_plus);
    if (lag > 3 && rho.size() >= 2) {
      // stop once a paired sum goes nonpositive
      double pair = rho[rho.size() - 1] + rho[rho.size() - 2];
      if (pair < 0.0) {
        rho.pop_back();
        rho.pop_back();
        break;
      }
    }
  }
  // enforce monotone nonincreasing paired sums
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < rho.size(); k += 2) {
    double pair = rho[k] + (k + 1 < rho.size() ? rho[k + 1] : 0.0);
    pair = std::min(pair, prev_pair);
    if (pair < 0.0) break;
    sum += pair;
    prev_pair = pair;
  }
  double ess = m * static_cast<double>(n) / (1.0 + 2.0 * sum);
  return std::min(ess, m * static_cast<double>(n));
}

// Monte-Carlo standard error of the chain mean by nonoverlapping batch means.
inline double mcse_batch_means(const Eigen::VectorXd& chain) {
  const Eigen::Index n = chain.size();
  if (n < 16) throw ValidationError("mcse_batch_means: chain too short");
  const auto nb = static_cast<Eigen::Index>(std::floor(std::sqrt(static_cast<double>(n))));
  const Eigen::Index len = n / nb;
  const double mean = chain.head(nb * len).mean();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < nb; ++k) {
    const double bm = chain.segment(k * len, len).mean();
    acc += (bm - mean) * (bm - mean);
  }
  const double var_bm = acc / static_cast<double>(nb - 1);
  return std::sqrt(static_cast<double>(len) * var_bm / static_cast<double>(nb * len));
}

// Kolmogorov-Smirnov distance between a sample and a reference CDF.
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw ValidationError("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  return d;
}

}  // namespace mvfh

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "mvfh/errors.hpp"

namespace mvfh {

// Variance of log(pre_scale * estimate) when the estimate ships with a margin
// of error at confidence z-value moe_z. The pre-scale cancels under the log
// (kept in the signature so call sites mirror the ingestion pipeline).
inline double delta_log_variance(double estimate, double moe, double moe_z,
                                 double pre_scale = 100.0) {
  (void)pre_scale;
  if (!(estimate > 0.0)) {
    throw ValidationError("delta_log_variance: estimate must be positive");
  }
  if (!(moe > 0.0) || !(moe_z > 0.0)) {
    throw ValidationError("delta_log_variance: moe and moe_z must be positive");
  }
  const double sd = moe / moe_z;
  return (sd * sd) / (estimate * estimate);
}

// Symmetric per-location comparison: (a - b) / (a/2 + b/2), positive when the
// comparator b improves on the baseline a. Bounded in [-2, 2].
inline double relative_reduction(double mse_a, double mse_b) {
  if (mse_a < 0.0 || mse_b < 0.0) {
    throw ValidationError("relative_reduction: squared errors must be nonnegative");
  }
  if (mse_a == 0.0 && mse_b == 0.0) {
    throw ValidationError("relative_reduction: both errors are zero");
  }
  return (mse_a - mse_b) / (0.5 * mse_a + 0.5 * mse_b);
}

inline Eigen::VectorXd relative_reduction(const Eigen::VectorXd& mse_a,
                                          const Eigen::VectorXd& mse_b) {
  if (mse_a.size() != mse_b.size()) {
    throw ValidationError("relative_reduction: length mismatch");
  }
  Eigen::VectorXd out(mse_a.size());
  for (Eigen::Index i = 0; i < mse_a.size(); ++i) out[i] = relative_reduction(mse_a[i], mse_b[i]);
  return out;
}

struct PercentBetter {
  double pct_a_better = 0.0;
  double pct_b_better = 0.0;
  double pct_tied = 0.0;
};

// Share of locations where error A is strictly below error B; ties reported
// separately so the three percentages always sum to 100.
inline PercentBetter percent_better(const Eigen::VectorXd& err_a, const Eigen::VectorXd& err_b) {
  if (err_a.size() != err_b.size()) throw ValidationError("percent_better: length mismatch");
  if (err_a.size() == 0) throw ValidationError("percent_better: empty input");
  int a = 0, b = 0, t = 0;
  for (Eigen::Index i = 0; i < err_a.size(); ++i) {
    if (err_a[i] < err_b[i])
      ++a;
    else if (err_b[i] < err_a[i])
      ++b;
    else
      ++t;
  }
  const double n = static_cast<double>(err_a.size());
  return {100.0 * a / n, 100.0 * b / n, 100.0 * t / n};
}

struct MseResult {
  Eigen::VectorXd overall;                  // per outcome
  Eigen::MatrixXd per_location;             // n x m squared errors of the point estimate
  Eigen::MatrixXd point_estimate;           // n x m posterior means
  // Optional alternative reading: posterior-expected squared error E[(theta -
  // truth)^2 | Y], averaged per outcome. Filled only when requested.
  Eigen::VectorXd expected_overall;
  bool has_expected = false;
};

// theta_draws: retained draws in rows, area-major columns (area i, outcome j at
// column i*m + j). truth: n x m.
inline MseResult posterior_mse(const Eigen::MatrixXd& theta_draws, const Eigen::MatrixXd& truth,
                               bool include_expected = false) {
  const Eigen::Index n = truth.rows();
  const Eigen::Index m = truth.cols();
  if (theta_draws.rows() == 0) throw ValidationError("posterior_mse: empty chain");
  if (theta_draws.cols() != n * m) throw ValidationError("posterior_mse: dimension mismatch");
  MseResult r;
  r.point_estimate.resize(n, m);
  r.per_location.resize(n, m);
  Eigen::VectorXd col_mean = theta_draws.colwise().mean();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double est = col_mean[i * m + j];
      r.point_estimate(i, j) = est;
      const double d = est - truth(i, j);
      r.per_location(i, j) = d * d;
    }
  }
  r.overall = r.per_location.colwise().mean();
  if (include_expected) {
    r.expected_overall = Eigen::VectorXd::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        r.expected_overall[j] +=
            (theta_draws.col(i * m + j).array() - truth(i, j)).square().mean();
      }
    }
    r.expected_overall /= static_cast<double>(n);
    r.has_expected = true;
  }
  return r;
}

}  // namespace mvfh

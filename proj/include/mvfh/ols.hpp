#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

#include "mvfh/dataset.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/morans.hpp"

namespace mvfh {

struct OlsOutcome {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;
  double residual_sd = 0.0;
  MoransResult moran;
};

struct OlsDiagnostics {
  std::vector<OlsOutcome> outcomes;
  Eigen::MatrixXd residual_correlation;  // m x m Pearson
  Eigen::MatrixXd correlation_p_value;   // two-sided, t test with n-2 df
};

// Per-outcome least squares plus the two spatial-structure screens: Pearson
// correlation between outcome residual vectors and Moran's I of each residual
// vector on the data's lattice.
inline OlsDiagnostics ols_diagnostics(const SurveyDataset& data,
                                      int moran_permutations = kMoranDefaultPermutations,
                                      std::uint64_t moran_seed = kMoranDefaultSeed) {
  data.validate();
  const int n = data.n();
  const int m = data.m;
  OlsDiagnostics out;
  out.outcomes.reserve(m);
  for (int j = 0; j < m; ++j) {
    const Eigen::MatrixXd& x = data.X[j];
    const auto p = x.cols();
    if (n <= p) {
      throw ValidationError("ols_diagnostics: need more areas than coefficients for outcome " +
                            std::to_string(j + 1));
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < p) {
      throw ValidationError("ols_diagnostics: design matrix is rank deficient for outcome " +
                            std::to_string(j + 1));
    }
    OlsOutcome oc;
    oc.coefficients = qr.solve(data.y.col(j));
    oc.residuals = data.y.col(j) - x * oc.coefficients;
    oc.residual_sd = std::sqrt(oc.residuals.squaredNorm() / static_cast<double>(n - p));
    const double y_scale = 1.0 + data.y.col(j).cwiseAbs().maxCoeff();
    if (oc.residuals.cwiseAbs().maxCoeff() < 1e-10 * y_scale) {
      throw ValidationError("ols_diagnostics: outcome " + std::to_string(j + 1) +
                            " fits exactly; residual diagnostics are undefined");
    }
    if ((oc.residuals.array() - oc.residuals.mean()).matrix().norm() < 1e-10 * y_scale) {
      throw ValidationError("ols_diagnostics: outcome " + std::to_string(j + 1) +
                            " has constant residuals; residual diagnostics are undefined");
    }
    oc.moran = morans_i(oc.residuals, data.adj, moran_permutations, moran_seed);
    out.outcomes.push_back(std::move(oc));
  }

  out.residual_correlation = Eigen::MatrixXd::Identity(m, m);
  out.correlation_p_value = Eigen::MatrixXd::Zero(m, m);
  boost::math::students_t_distribution<double> tdist(n - 2);
  for (int a = 0; a < m; ++a) {
    for (int b = a + 1; b < m; ++b) {
      const Eigen::VectorXd& ra = out.outcomes[a].residuals;
      const Eigen::VectorXd& rb = out.outcomes[b].residuals;
      Eigen::VectorXd za = ra.array() - ra.mean();
      Eigen::VectorXd zb = rb.array() - rb.mean();
      double denom = std::sqrt(za.squaredNorm() * zb.squaredNorm());
      if (denom == 0.0) {
        throw ValidationError("ols_diagnostics: zero-variance residuals");
      }
      double r = za.dot(zb) / denom;
      out.residual_correlation(a, b) = out.residual_correlation(b, a) = r;
      double t = r * std::sqrt(static_cast<double>(n - 2) / std::max(1.0 - r * r, 1e-300));
      double p = 2.0 * boost::math::cdf(tdist, -std::abs(t));
      out.correlation_p_value(a, b) = out.correlation_p_value(b, a) = p;
    }
  }
  return out;
}

}  // namespace mvfh

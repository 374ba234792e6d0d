#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "mvfh/linalg.hpp"
#include "mvfh/rng.hpp"

namespace mvfh {

inline constexpr double kLog2Pi = 1.8378770664093453;

// Draw from N(mean, cov), dense covariance.
inline Eigen::VectorXd rmvn_cov(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                RngStream& rng) {
  auto llt = checked_llt(cov, "rmvn_cov");
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + llt.matrixL() * z;
}

// Draw from N(prec^{-1} b, prec^{-1}), dense precision.
inline Eigen::VectorXd rmvn_prec(const Eigen::VectorXd& b, const Eigen::MatrixXd& prec,
                                 RngStream& rng) {
  auto llt = checked_llt(prec, "rmvn_prec");
  Eigen::VectorXd mean = llt.solve(b);
  Eigen::VectorXd z(b.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + llt.matrixU().solve(z);
}

inline double mvn_logdensity_cov(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& cov) {
  auto llt = checked_llt(cov, "mvn_logdensity_cov");
  Eigen::VectorXd d = x - mean;
  double quad = llt.matrixL().solve(d).squaredNorm();
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + logdet_from_llt(llt) + quad);
}

// Wishart(df, scale) via the Bartlett decomposition: W = L A A' L' with
// scale = L L', A lower triangular, A_ii^2 ~ chi^2(df - i), A_ij ~ N(0,1).
inline Eigen::MatrixXd rwishart(double df, const Eigen::MatrixXd& scale, RngStream& rng) {
  const Eigen::Index m = scale.rows();
  auto llt = checked_llt(scale, "rwishart scale");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  Eigen::MatrixXd la = llt.matrixL() * a;
  return la * la.transpose();
}

// Inverse-Wishart draw under the convention
//   p(S | scale, df) ∝ |S|^{-(df+m+1)/2} exp(-tr(scale S^{-1})/2),
// so E[S] = scale / (df - m - 1) for df > m + 1.
inline Eigen::MatrixXd rinvwishart(double df, const Eigen::MatrixXd& scale, RngStream& rng) {
  auto llt = checked_llt(scale, "rinvwishart scale");
  Eigen::MatrixXd scale_inv =
      llt.solve(Eigen::MatrixXd::Identity(scale.rows(), scale.cols()));
  Eigen::MatrixXd w = rwishart(df, scale_inv, rng);
  auto wllt = checked_llt(w, "rinvwishart draw");
  Eigen::MatrixXd s = wllt.solve(Eigen::MatrixXd::Identity(w.rows(), w.cols()));
  // symmetrize against round-off
  return 0.5 * (s + s.transpose());
}

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

}  // namespace mvfh

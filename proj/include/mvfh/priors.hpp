#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "mvfh/distributions.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/linalg.hpp"

namespace mvfh {

// Hyperpriors. Defaults: IW(I_m, m) on the outcome covariance, Unif(0,1) on
// spatial smoothing parameters, Unif(0.001, 100) on the conditional sd scales
// tau, N(0, 10^2) on the linking coefficients, and a flat improper prior on
// beta (a proper N(0, beta_sd^2) is available via beta_proper).
//
// The *_fixed members clamp a parameter to a point mass; the corresponding
// update is skipped. They exist for calibration tests and degenerate-model
// diagnostics, not routine fitting.
struct PriorSpec {
  Eigen::MatrixXd sigma_iw_scale;  // empty => I_m
  double sigma_iw_df = 0.0;        // <= 0 => m
  double tau_lo = 0.001;           // bounds on the sd scale
  double tau_hi = 100.0;
  double eta_mean = 0.0;
  double eta_sd = 10.0;
  bool beta_proper = false;
  double beta_sd = 100.0;

  std::optional<Eigen::MatrixXd> sigma_iw_fixed;
  std::optional<std::vector<Eigen::VectorXd>> beta_fixed;  // per outcome
  std::optional<double> rho_fixed;   // separable
  std::optional<double> rho1_fixed;  // gmcar
  std::optional<double> rho2_fixed;
  std::optional<double> tau1_fixed;  // sd scale
  std::optional<double> tau2_fixed;
  std::optional<double> eta0_fixed;
  std::optional<double> eta1_fixed;

  Eigen::MatrixXd resolved_scale(int m) const {
    if (sigma_iw_scale.size() == 0) return Eigen::MatrixXd::Identity(m, m);
    return sigma_iw_scale;
  }
  double resolved_df(int m) const { return sigma_iw_df > 0.0 ? sigma_iw_df : m; }

  void validate(int m) const {
    Eigen::MatrixXd s = resolved_scale(m);
    if (s.rows() != m || s.cols() != m || !is_spd(s)) {
      throw ValidationError("PriorSpec: inverse-Wishart scale must be m x m SPD");
    }
    if (resolved_df(m) < m) {
      throw ValidationError("PriorSpec: inverse-Wishart degrees of freedom must be >= m");
    }
    if (!(tau_lo > 0.0) || !(tau_hi > tau_lo)) {
      throw ValidationError("PriorSpec: tau bounds must satisfy 0 < lo < hi");
    }
    if (!(eta_sd > 0.0)) throw ValidationError("PriorSpec: eta sd must be positive");
    if (beta_proper && !(beta_sd > 0.0)) {
      throw ValidationError("PriorSpec: beta sd must be positive");
    }
    if (sigma_iw_fixed && !is_spd(*sigma_iw_fixed)) {
      throw ValidationError("PriorSpec: fixed sigma must be SPD");
    }
    for (auto rho : {rho_fixed, rho1_fixed, rho2_fixed}) {
      if (rho && !(*rho > 0.0 && *rho < 1.0)) {
        throw ValidationError("PriorSpec: fixed rho must lie in (0,1)");
      }
    }
    for (auto tau : {tau1_fixed, tau2_fixed}) {
      if (tau && !(*tau > 0.0)) throw ValidationError("PriorSpec: fixed tau must be positive");
    }
  }

  // Log densities (unnormalized where a constant suffices).
  double log_prior_rho(double rho) const {
    return (rho > 0.0 && rho < 1.0) ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  double log_prior_tau_sd(double tau) const {
    return (tau >= tau_lo && tau <= tau_hi) ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  double log_prior_eta(double eta) const {
    double z = (eta - eta_mean) / eta_sd;
    return -0.5 * z * z - std::log(eta_sd) - 0.5 * kLog2Pi;
  }
};

}  // namespace mvfh

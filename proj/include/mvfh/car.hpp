#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <string>

#include "mvfh/adjacency.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/linalg.hpp"

namespace mvfh {

// CAR parameters. rho is restricted to (0,1): negative spatial dependence is
// rejected at validation (Wall 2004 pathologies), and rho = 0 / rho = 1 are
// excluded to keep the joint distribution proper and identifiable.
struct CarParams {
  double rho;
  double tau2;

  CarParams(double rho_, double tau2_) : rho(rho_), tau2(tau2_) { validate(); }

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) {
      throw ValidationError("CAR rho must lie in (0,1), got " + std::to_string(rho));
    }
    if (!(tau2 > 0.0)) {
      throw ValidationError("CAR tau2 must be positive, got " + std::to_string(tau2));
    }
  }
};

// Scaled CAR structure matrix D - rho*W (binary W). SPD for rho in (0,1) on a
// connected lattice; only diagonal and adjacency entries are nonzero.
inline SparseMat car_structure(const Adjacency& adj, double rho) {
  SparseMat q(adj.n, adj.n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(adj.n + 2 * adj.num_edges());
  for (int i = 0; i < adj.n; ++i) {
    trips.emplace_back(i, i, static_cast<double>(adj.degrees[i]));
    for (int j : adj.neighbors[i]) trips.emplace_back(i, j, -rho);
  }
  q.setFromTriplets(trips.begin(), trips.end());
  q.makeCompressed();
  return q;
}

// Joint CAR precision tau^{-2} (D - rho*W).
inline SparseMat car_precision(const Adjacency& adj, const CarParams& p) {
  p.validate();
  return SparseMat((1.0 / p.tau2) * car_structure(adj, p.rho));
}

// Precomputed eigenvalues of D^{-1/2} W D^{-1/2}, giving
//   log det(D - rho*W) = sum_i log d_i + sum_k log(1 - rho*lambda_k)
// in O(n) per rho. Used by the Metropolis updates for the spatial parameters.
class CarSpectrum {
 public:
  explicit CarSpectrum(const Adjacency& adj) {
    Eigen::VectorXd d = adj.degree_vector();
    Eigen::VectorXd dinv_sqrt = d.array().rsqrt();
    Eigen::MatrixXd scaled = dinv_sqrt.asDiagonal() * Eigen::MatrixXd(adj.W) *
                             dinv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
    if (es.info() != Eigen::Success) {
      throw NumericError("eigendecomposition of scaled adjacency failed");
    }
    lambda_ = es.eigenvalues();
    sum_log_deg_ = d.array().log().sum();
  }

  // log det(D - rho*W)
  double logdet_structure(double rho) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < lambda_.size(); ++k) s += std::log1p(-rho * lambda_[k]);
    return sum_log_deg_ + s;
  }

  // log det(tau^{-2} (D - rho*W))
  double logdet_precision(double rho, double tau2, int n) const {
    return logdet_structure(rho) - static_cast<double>(n) * std::log(tau2);
  }

  const Eigen::VectorXd& eigenvalues() const { return lambda_; }

 private:
  Eigen::VectorXd lambda_;
  double sum_log_deg_ = 0.0;
};

}  // namespace mvfh

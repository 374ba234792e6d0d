#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <string>
#include <vector>

#include "mvfh/adjacency.hpp"
#include "mvfh/car.hpp"
#include "mvfh/distributions.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/linalg.hpp"

namespace mvfh {

// ---------------------------------------------------------------------------
// Latent covariance structures for the three model variants.
//
// Ordering conventions for the stacked latent vector u (n areas, m outcomes):
//   IW, Separable : area-major,   u = (u_11..u_1m, u_21..u_2m, ...)
//   GMCAR         : outcome-major, u = (u_1', u_2')' with u_j over areas
// area_to_outcome_major() in linalg.hpp converts between the two.
// ---------------------------------------------------------------------------

// Exchangeable-areas structure: cov(u) = I_n ⊗ Sigma_IW.
struct IwStructure {
  Eigen::MatrixXd sigma_iw;

  explicit IwStructure(Eigen::MatrixXd s) : sigma_iw(std::move(s)) { validate(); }

  void validate() const {
    if (!is_spd(sigma_iw)) {
      throw ValidationError("IwStructure: sigma_iw must be symmetric positive definite");
    }
  }
};

// Separable structure: cov(u) = (D - rho*W)^{-1} ⊗ Sigma_IW. No tau2 scale:
// it is absorbed by Sigma_IW and would not be identifiable.
struct SeparableStructure {
  double rho;
  Eigen::MatrixXd sigma_iw;

  SeparableStructure(double rho_, Eigen::MatrixXd s) : rho(rho_), sigma_iw(std::move(s)) {
    validate();
  }

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) {
      throw ValidationError("SeparableStructure: rho must lie in (0,1)");
    }
    if (!is_spd(sigma_iw)) {
      throw ValidationError("SeparableStructure: sigma_iw must be symmetric positive definite");
    }
  }
};

// GMCAR parameters for a bivariate outcome:
//   u_2       ~ N(0, Q_2^{-1}),            Q_k = tau_k^{-2} (D - rho_k W)
//   u_1 | u_2 ~ N(A u_2, Q_1^{-1}),        A   = eta0*I + eta1*W
// tau1_sq/tau2_sq are the conditional variance scales (tau_k^2).
struct GmcarParams {
  double tau1_sq = 1.0;
  double tau2_sq = 1.0;
  double rho1 = 0.5;
  double rho2 = 0.5;
  double eta0 = 0.0;
  double eta1 = 0.0;

  GmcarParams() = default;
  GmcarParams(double tau1_sq_, double tau2_sq_, double rho1_, double rho2_, double eta0_,
              double eta1_)
      : tau1_sq(tau1_sq_), tau2_sq(tau2_sq_), rho1(rho1_), rho2(rho2_), eta0(eta0_),
        eta1(eta1_) {
    validate();
  }

  void validate() const {
    if (!(tau1_sq > 0.0) || !(tau2_sq > 0.0)) {
      throw ValidationError("GmcarParams: tau1_sq and tau2_sq must be positive");
    }
    if (!(rho1 > 0.0 && rho1 < 1.0) || !(rho2 > 0.0 && rho2 < 1.0)) {
      throw ValidationError("GmcarParams: rho1 and rho2 must lie in (0,1)");
    }
    if (!std::isfinite(eta0) || !std::isfinite(eta1)) {
      throw ValidationError("GmcarParams: eta0 and eta1 must be finite");
    }
  }
};

// I_n ⊗ Sigma_IW, area-major.
inline Eigen::MatrixXd iw_covariance(const IwStructure& s, int n_areas) {
  const Eigen::Index m = s.sigma_iw.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_areas * m, n_areas * m);
  for (int i = 0; i < n_areas; ++i) out.block(i * m, i * m, m, m) = s.sigma_iw;
  return out;
}

// (D - rho*W) ⊗ Sigma_IW^{-1}, area-major.
inline SparseMat separable_precision(const SeparableStructure& s, const Adjacency& adj) {
  const Eigen::Index m = s.sigma_iw.rows();
  auto llt = checked_llt(s.sigma_iw, "separable_precision: sigma_iw");
  Eigen::MatrixXd sigma_inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  sigma_inv = 0.5 * (sigma_inv + sigma_inv.transpose());
  SparseMat qs = car_structure(adj, s.rho);

  SparseMat out(adj.n * m, adj.n * m);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(qs.nonZeros()) * m * m);
  for (int col = 0; col < qs.outerSize(); ++col) {
    for (SparseMat::InnerIterator it(qs, col); it; ++it) {
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
          // keep exact zeros so the sparsity pattern is structural, not
          // value-dependent (cached symbolic factorizations rely on this)
          trips.emplace_back(it.row() * m + a, it.col() * m + b,
                             it.value() * sigma_inv(a, b));
        }
      }
    }
  }
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

namespace detail {

struct GmcarBlocks {
  SparseMat q1;  // tau1^{-2} (D - rho1 W)
  SparseMat q2;  // tau2^{-2} (D - rho2 W)
  SparseMat a;   // eta0*I + eta1*W
};

inline GmcarBlocks gmcar_blocks(const GmcarParams& g, const Adjacency& adj) {
  GmcarBlocks b;
  b.q1 = car_precision(adj, CarParams(g.rho1, g.tau1_sq));
  b.q2 = car_precision(adj, CarParams(g.rho2, g.tau2_sq));
  SparseMat eye(adj.n, adj.n);
  eye.setIdentity();
  b.a = SparseMat(g.eta0 * eye + g.eta1 * adj.W);
  return b;
}

inline void insert_block(std::vector<Eigen::Triplet<double>>& trips, const SparseMat& block,
                         int row0, int col0) {
  for (int col = 0; col < block.outerSize(); ++col) {
    for (SparseMat::InnerIterator it(block, col); it; ++it) {
      trips.emplace_back(row0 + static_cast<int>(it.row()), col0 + static_cast<int>(it.col()),
                         it.value());
    }
  }
}

}  // namespace detail

// Joint covariance of (u_1', u_2')', outcome-major:
//   [ Q1^{-1} + A' Q2^{-1} A    A' Q2^{-1} ]
//   [ Q2^{-1} A                 Q2^{-1}    ]
inline Eigen::MatrixXd gmcar_covariance(const GmcarParams& g, const Adjacency& adj) {
  const int n = adj.n;
  auto blocks = detail::gmcar_blocks(g, adj);
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd q1_inv = checked_llt(Eigen::MatrixXd(blocks.q1), "gmcar q1").solve(eye);
  Eigen::MatrixXd q2_inv = checked_llt(Eigen::MatrixXd(blocks.q2), "gmcar q2").solve(eye);
  Eigen::MatrixXd a = Eigen::MatrixXd(blocks.a);

  Eigen::MatrixXd out(2 * n, 2 * n);
  out.topLeftCorner(n, n) = q1_inv + a.transpose() * q2_inv * a;
  out.topRightCorner(n, n) = a.transpose() * q2_inv;
  out.bottomLeftCorner(n, n) = q2_inv * a;
  out.bottomRightCorner(n, n) = q2_inv;
  return 0.5 * (out + out.transpose());
}

// Joint precision of (u_1', u_2')', outcome-major:
//   [ Q1        -Q1 A          ]
//   [ -A' Q1    Q2 + A' Q1 A   ]
inline SparseMat gmcar_precision(const GmcarParams& g, const Adjacency& adj) {
  const int n = adj.n;
  auto blocks = detail::gmcar_blocks(g, adj);
  SparseMat q1a = blocks.q1 * blocks.a;
  SparseMat atq1a = SparseMat(blocks.a.transpose()) * q1a;
  SparseMat lower_right = blocks.q2 + atq1a;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(blocks.q1.nonZeros()) + 2 * q1a.nonZeros() +
                lower_right.nonZeros());
  detail::insert_block(trips, blocks.q1, 0, 0);
  detail::insert_block(trips, SparseMat(-q1a), 0, n);
  detail::insert_block(trips, SparseMat(SparseMat(-q1a).transpose()), n, 0);
  detail::insert_block(trips, lower_right, n, n);

  SparseMat out(2 * n, 2 * n);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

// ---------------------------------------------------------------------------
// Latent log-densities, full normalizing constants included (the Metropolis
// updates for rho, tau and eta need them).
// ---------------------------------------------------------------------------

// u area-major, cov I_n ⊗ Sigma_IW.
inline double latent_logdensity(const Eigen::VectorXd& u, const IwStructure& s,
                                const Adjacency& adj) {
  const Eigen::Index m = s.sigma_iw.rows();
  if (u.size() != adj.n * m) throw ValidationError("latent_logdensity: dimension mismatch");
  auto llt = checked_llt(s.sigma_iw, "latent_logdensity iw");
  double logdet = logdet_from_llt(llt);
  double quad = 0.0;
  for (int i = 0; i < adj.n; ++i) {
    quad += llt.matrixL().solve(u.segment(i * m, m)).squaredNorm();
  }
  return -0.5 * (static_cast<double>(adj.n * m) * kLog2Pi +
                 static_cast<double>(adj.n) * logdet + quad);
}

// u area-major, precision (D - rho W) ⊗ Sigma_IW^{-1}.
inline double latent_logdensity(const Eigen::VectorXd& u, const SeparableStructure& s,
                                const Adjacency& adj) {
  const Eigen::Index m = s.sigma_iw.rows();
  const int n = adj.n;
  if (u.size() != n * m) throw ValidationError("latent_logdensity: dimension mismatch");
  SparseMat q = separable_precision(s, adj);
  double quad = u.dot(q * u);
  double logdet_q = static_cast<double>(m) * sparse_logdet_spd(car_structure(adj, s.rho),
                                                               "separable structure") -
                    static_cast<double>(n) *
                        dense_logdet_spd(s.sigma_iw, "latent_logdensity sigma_iw");
  return -0.5 * (static_cast<double>(n * m) * kLog2Pi - logdet_q + quad);
}

// u outcome-major, (u_1', u_2')'.
inline double latent_logdensity(const Eigen::VectorXd& u, const GmcarParams& g,
                                const Adjacency& adj) {
  const int n = adj.n;
  if (u.size() != 2 * n) throw ValidationError("latent_logdensity: dimension mismatch");
  auto blocks = detail::gmcar_blocks(g, adj);
  Eigen::VectorXd u1 = u.head(n);
  Eigen::VectorXd u2 = u.tail(n);
  Eigen::VectorXd resid = u1 - blocks.a * u2;
  double quad = resid.dot(blocks.q1 * resid) + u2.dot(blocks.q2 * u2);
  double logdet = sparse_logdet_spd(blocks.q1, "gmcar q1") +
                  sparse_logdet_spd(blocks.q2, "gmcar q2");
  return -0.5 * (2.0 * n * kLog2Pi - logdet + quad);
}

}  // namespace mvfh

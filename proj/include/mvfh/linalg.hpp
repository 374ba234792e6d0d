#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <string>
#include <vector>

#include "mvfh/errors.hpp"
#include "mvfh/rng.hpp"

namespace mvfh {

using SparseMat = Eigen::SparseMatrix<double>;

// Cholesky with failure reporting; `context` names the caller for error messages.
inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& a,
                                               const std::string& context) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NumericError("Cholesky factorization failed: " + context);
  }
  return llt;
}

inline bool is_spd(const Eigen::MatrixXd& a, double sym_tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > sym_tol * (1.0 + a.cwiseAbs().maxCoeff()))
    return false;
  return Eigen::LLT<Eigen::MatrixXd>(a).info() == Eigen::Success;
}

inline double logdet_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline double dense_logdet_spd(const Eigen::MatrixXd& a, const std::string& context) {
  return logdet_from_llt(checked_llt(a, context));
}

// Sparse SPD factorization wrapper used by the samplers. Supports repeated
// factorizations with a fixed sparsity pattern (symbolic analysis cached).
class SparseChol {
 public:
  void factorize(const SparseMat& a, const std::string& context) {
    if (!same_pattern(a)) {
      solver_.analyzePattern(a);
      remember_pattern(a);
    }
    solver_.factorize(a);
    if (solver_.info() != Eigen::Success) {
      analyzed_ = false;
      throw NumericError("sparse Cholesky factorization failed: " + context);
    }
  }

  double log_determinant() const {
    return 2.0 * solver_.matrixL().nestedExpression().diagonal().array().log().sum();
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return solver_.solve(b); }

  // Draw x ~ N(mean, A^{-1}) where A = P' L L' P is the factored precision and
  // mean = A^{-1} b. Uses x = mean + P^{-1} L^{-T} z with z ~ N(0, I).
  Eigen::VectorXd sample_gaussian(const Eigen::VectorXd& b, RngStream& rng) const {
    Eigen::VectorXd mean = solver_.solve(b);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    Eigen::VectorXd w = solver_.matrixU().solve(z);
    return mean + solver_.permutationPinv() * w;
  }

 private:
  // The symbolic analysis is only reusable for an identical sparsity pattern;
  // factorizing a matrix with extra nonzeros against a stale analysis corrupts
  // memory inside Eigen. Track the pattern and re-analyze whenever it changes.
  bool same_pattern(const SparseMat& a) const {
    if (!analyzed_ || !a.isCompressed()) return false;
    const std::size_t osz = static_cast<std::size_t>(a.outerSize()) + 1;
    const std::size_t isz = static_cast<std::size_t>(a.nonZeros());
    return pattern_outer_.size() == osz && pattern_inner_.size() == isz &&
           std::equal(pattern_outer_.begin(), pattern_outer_.end(), a.outerIndexPtr()) &&
           std::equal(pattern_inner_.begin(), pattern_inner_.end(), a.innerIndexPtr());
  }

  void remember_pattern(const SparseMat& a) {
    analyzed_ = true;
    if (!a.isCompressed()) {  // pattern pointers not contiguous; force re-analysis next time
      analyzed_ = false;
      pattern_outer_.clear();
      pattern_inner_.clear();
      return;
    }
    pattern_outer_.assign(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1);
    pattern_inner_.assign(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros());
  }

  Eigen::SimplicialLLT<SparseMat> solver_;
  bool analyzed_ = false;
  std::vector<int> pattern_outer_, pattern_inner_;
};

inline double sparse_logdet_spd(const SparseMat& a, const std::string& context) {
  SparseChol chol;
  chol.factorize(a, context);
  return chol.log_determinant();
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Latent vectors are indexed two ways: area-major (u grouped by area,
// position i*m + j) and outcome-major (u grouped by outcome, position j*n + i).
// Returns the permutation p with p[area_major_pos] = outcome_major_pos, so
// x_outcome = P * x_area with P(outcome_pos, area_pos) = 1.
inline Eigen::PermutationMatrix<Eigen::Dynamic> area_to_outcome_major(int n, int m) {
  Eigen::VectorXi idx(n * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) idx[i * m + j] = j * n + i;
  // PermutationMatrix maps entry k of the source to entry indices[k] of the
  // destination when applied on the left.
  return Eigen::PermutationMatrix<Eigen::Dynamic>(idx);
}

}  // namespace mvfh

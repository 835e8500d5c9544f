#pragma once

// Per-subject influence rows of the supervised estimator and of the two
// working-model estimators, and the covariance blocks built from them.

#include <Eigen/Dense>

#include "dcssl/composite.hpp"
#include "dcssl/em_npmle.hpp"

namespace dcssl {

struct InfluenceOptions {
  double rel_step = 1e-4;      // h_j = rel_step * max(1, |beta_j|)
  double profile_tol = 1e-8;   // inner lambda-profile tolerance
  int profile_max_iter = 20000;
};

/// Pieces of the profile-score linearization of an NPMLE fit.
struct ProfileInfluence {
  Eigen::MatrixXd psi;       // n x p per-subject profile score
  Eigen::MatrixXd a_matrix;  // -n^{-1} d(sum psi)/d beta'
  Eigen::MatrixXd dlambda;   // K x p, d lambda_k / d beta
  Eigen::MatrixXd rows;      // n x p, psi_i A^{-1}
};

ProfileInfluence profile_influence(const EmFit& fit, const SurvivalData& data,
                                   const InfluenceOptions& opts = {});

/// Influence rows of the NPMLE regression estimate (true outcome).
Eigen::MatrixXd xi_rows(const EmFit& fit, const SurvivalData& data,
                        const InfluenceOptions& opts = {});

/// Same construction for the NPMLE fit of the surrogate outcome.
Eigen::MatrixXd eta1_rows(const EmFit& surrogate_fit, const SurvivalData& surrogate_data,
                          const InfluenceOptions& opts = {});

/// Influence rows of gamma from the composite logistic + Cox fit.
Eigen::MatrixXd eta2_rows(const CompositeFit& fit, const SurvivalData& data,
                          const DesignV& design);

/// Per-subject composite score rows (logistic residual part plus the
/// martingale integral for the Cox part); sums to the total score.
Eigen::MatrixXd composite_score_rows(const CompositeFit& fit, const SurvivalData& data,
                                     const DesignV& design);

struct InfluenceRows {
  Eigen::MatrixXd xi;
  Eigen::MatrixXd eta1;
  Eigen::MatrixXd eta2;
  Eigen::MatrixXd eta3;  // [eta1 | eta2]
};

Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& eta1, const Eigen::MatrixXd& eta2);

struct CovBlocks {
  Eigen::MatrixXd sigma;        // p x p
  Eigen::MatrixXd sigma_gamma;  // d x d
  Eigen::MatrixXd omega;        // p x d
  double rho = 1.0;
  int n = 0;
  int n_unlabeled = 0;
};

/// sigma = n^{-1} sum xi xi'; sigma_gamma = N/(n(n+N)) sum eta eta';
/// omega = N/(n(n+N)) sum xi eta'.
CovBlocks covariance_blocks(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& eta, int n,
                            int n_unlabeled);

}  // namespace dcssl

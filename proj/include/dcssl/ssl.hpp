#pragma once

// Semi-supervised augmentation of the supervised NPMLE estimate with the
// labeled-versus-full discrepancy of working-model estimates.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcssl/composite.hpp"
#include "dcssl/core_data.hpp"
#include "dcssl/em_npmle.hpp"
#include "dcssl/influence.hpp"

namespace dcssl {

enum class Method { SL, SSL1, SSL2, SSL3 };

std::string to_string(Method m);

inline constexpr double kNormalQuantile975 = 1.959964;

struct AugmentedEstimate {
  Method method = Method::SL;
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
  Eigen::VectorXd se;
  std::vector<std::pair<double, double>> ci95;
  Eigen::VectorXd re_vs_sl;  // SE(SL) / SE(method)
  bool ridge_applied = false;
};

/// beta_sl - omega sigma_gamma^{-1} (gamma_hat - gamma_bar) with covariance
/// (sigma - omega sigma_gamma^{-1} omega') / n.
AugmentedEstimate augment(Method method, const Eigen::VectorXd& beta_sl,
                          const Eigen::VectorXd& gamma_hat, const Eigen::VectorXd& gamma_bar,
                          const CovBlocks& blocks);

/// The supervised estimate with covariance sigma / n.
AugmentedEstimate supervised_estimate(const Eigen::VectorXd& beta_sl, const Eigen::MatrixXd& sigma,
                                      int n);

struct SslConfig {
  TransformParam r{0.0};
  bool use_model4 = true;
  bool use_model5 = true;
  HTransform h = HTransform::Log;
  EmOptions em;
  CompositeOptions composite;
  InfluenceOptions influence;
};

struct StageDiagnostics {
  std::string stage;
  int iterations = 0;
  bool converged = false;
  int grid_size = 0;        // K_n for NPMLE fits
  double score_norm = 0.0;  // composite fits
  double loglik = 0.0;
};

struct SslResult {
  std::vector<AugmentedEstimate> estimates;
  std::vector<StageDiagnostics> diagnostics;
  int n = 0;
  int n_unlabeled = 0;
  std::optional<Eigen::VectorXd> gamma1_hat, gamma1_bar, gamma2_hat, gamma2_bar;

  const AugmentedEstimate* find(Method m) const;
};

/// Full pipeline. With no unlabeled subjects only the SL estimate is returned.
SslResult run_ssl(const Cohort& labeled, const Cohort& unlabeled, const SslConfig& config);

}  // namespace dcssl

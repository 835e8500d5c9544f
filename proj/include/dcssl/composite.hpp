#pragma once

// Working model for the surrogate outcome: a logistic model for the
// probability of left censoring with linear predictor theta' v_i,
// v_i = (1, H(L_i), z_i), combined with a Cox partial likelihood over the
// subjects that are not left censored. The joint log-likelihood is concave.

#include <Eigen/Dense>
#include <string>

#include "dcssl/core_data.hpp"

namespace dcssl {

enum class HTransform { Log, Identity };

HTransform parse_h_transform(const std::string& name);
std::string to_string(HTransform h);

struct DesignV {
  Eigen::MatrixXd rows;  // n x (p + 2)
  HTransform h = HTransform::Log;
};

DesignV build_design(const SurvivalData& data, HTransform h = HTransform::Log);

/// Value, gradient and Hessian of the composite log-likelihood l1n + l2n.
struct CompositeEval {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
};

CompositeEval composite_eval(const Eigen::VectorXd& theta, const SurvivalData& data,
                             const DesignV& design, bool with_hessian = true);

double composite_negloglik(const Eigen::VectorXd& theta, const SurvivalData& data,
                           const DesignV& design);
/// Gradient of the log-likelihood (the score; minus the gradient of the negative).
Eigen::VectorXd composite_score(const Eigen::VectorXd& theta, const SurvivalData& data,
                                const DesignV& design);
/// Hessian of the log-likelihood; negative semidefinite.
Eigen::MatrixXd composite_hessian(const Eigen::VectorXd& theta, const SurvivalData& data,
                                  const DesignV& design);

struct CompositeOptions {
  int max_iter = 100;
  double tol = 1e-8;             // score sup-norm, or Newton decrement at rounding level
  double separation_bound = 30;  // |alpha| beyond this flags separation
  double armijo_c = 1e-4;
  double backtrack = 0.5;
};

struct CompositeFit {
  Eigen::VectorXd theta;  // (alpha0, alpha1, gamma')
  double neg_loglik = 0.0;
  double score_norm = 0.0;
  Eigen::MatrixXd hessian;
  bool converged = false;
  int iterations = 0;
  std::string diagnostic;

  Eigen::VectorXd gamma() const { return theta.tail(theta.size() - 2); }
};

CompositeFit fit_composite(const SurvivalData& data, const DesignV& design,
                           const CompositeOptions& opts = {});

}  // namespace dcssl

#pragma once

// Nonparametric maximum likelihood for the semiparametric transformation
// model with doubly censored data. The baseline cumulative hazard is a step
// function with jumps at the distinct exact event times; the EM algorithm
// augments each subject with a gamma frailty mu_i and independent Poisson
// counts N_ik with mean lambda_k exp(z_i' beta) mu_i.

#include <Eigen/Dense>
#include <vector>

#include "dcssl/core_data.hpp"
#include "dcssl/transform.hpp"

namespace dcssl {

struct JumpGrid {
  Eigen::VectorXd times;  // strictly increasing exact event times
  Eigen::VectorXd jumps;  // lambda_k >= 0

  Eigen::Index size() const { return times.size(); }
  /// Lambda(t) = sum of jumps at times <= t.
  double cumulative(double t) const;
};

struct EmOptions {
  int max_iter = 20000;  // accepted updates
  double tol = 1e-8;    // sup |d beta| + sup |d lambda| of one EM step
  /// SQUAREM extrapolation between EM steps in (beta, log lambda), with a
  /// monotone log-likelihood safeguard. Plain EM when false.
  bool accelerate = true;
  /// Add a support point at the smallest left-censoring time below the first
  /// exact time. Without it those subjects have zero likelihood.
  bool left_support = true;
};

struct EmFit {
  Eigen::VectorXd beta;
  JumpGrid grid;
  std::vector<double> loglik_trace;  // one entry per iterate, starting point first
  int iterations = 0;   // accepted updates
  int evaluations = 0;  // EM map evaluations
  bool converged = false;
  TransformParam r;

  double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

/// Conditional expectations of the latent (mu_i, N_ik) at the current
/// parameters. E(N_ik) is kept in factored form; `en(i, k)` evaluates an entry
/// and `en_dense()` materializes the n x K matrix.
struct EStepCache {
  Eigen::VectorXd emu;        // E(mu_i)
  Eigen::VectorXd v;          // V_i = Lambda(X_i) exp(z_i' beta)
  Eigen::VectorXd risk;       // exp(z_i' beta)
  Eigen::VectorXd left_rate;  // 1 / (1 - m0(V_i)) for left censored, else 0
  Eigen::VectorXd en_row;     // sum_k E(N_ik)
  Eigen::VectorXd en_col;     // sum_i E(N_ik)
  std::vector<int> index;     // number of grid times <= X_i
  std::vector<Censoring> code;
  Eigen::VectorXd jumps;
  double loglik = 0.0;        // observed-data log-likelihood at these parameters

  double en(Eigen::Index i, Eigen::Index k) const;
  Eigen::MatrixXd en_dense() const;
};

/// Sorted distinct exact event times with jumps initialized to 1/K.
JumpGrid event_grid(const SurvivalData& data, bool left_support = true);

EStepCache e_step(const SurvivalData& data, const Eigen::VectorXd& beta, const JumpGrid& grid,
                  TransformParam r);

/// lambda_k = sum_i E(N_ik) / sum_i E(mu_i) exp(z_i' beta).
Eigen::VectorXd m_step_lambda(const EStepCache& cache, const SurvivalData& data,
                              const Eigen::VectorXd& beta);

/// Damped Newton root of the profiled score with expectations held fixed.
Eigen::VectorXd m_step_beta(const EStepCache& cache, const SurvivalData& data,
                            const Eigen::VectorXd& beta_init);

double observed_loglik(const SurvivalData& data, const Eigen::VectorXd& beta,
                       const JumpGrid& grid, TransformParam r);

/// Per-subject observed-data log-likelihood terms.
Eigen::VectorXd observed_loglik_terms(const SurvivalData& data, const Eigen::VectorXd& beta,
                                      const JumpGrid& grid, TransformParam r);

EmFit fit_em(const SurvivalData& data, TransformParam r, const EmOptions& opts = {});

/// EM in lambda alone with beta held fixed, warm-started from `start`.
/// Converges when the sup-norm change in lambda drops below `tol`.
JumpGrid profile_lambda(const SurvivalData& data, const Eigen::VectorXd& beta,
                        const JumpGrid& start, TransformParam r, double tol = 1e-8,
                        int max_iter = 20000, bool accelerate = true);

}  // namespace dcssl

#include "dcssl/ssl.hpp"

#include <cmath>
#include <stdexcept>

#include "dcssl/errors.hpp"

namespace dcssl {

std::string to_string(Method m) {
  switch (m) {
    case Method::SL: return "SL";
    case Method::SSL1: return "SSL1";
    case Method::SSL2: return "SSL2";
    case Method::SSL3: return "SSL3";
  }
  return "?";
}

namespace {

void finish(AugmentedEstimate& est, const Eigen::VectorXd& se_sl) {
  est.cov = 0.5 * (est.cov + est.cov.transpose()).eval();
  const Eigen::Index p = est.beta.size();
  est.se.resize(p);
  est.re_vs_sl.resize(p);
  est.ci95.clear();
  for (Eigen::Index j = 0; j < p; ++j) {
    est.se[j] = std::sqrt(std::max(est.cov(j, j), 0.0));
    est.ci95.emplace_back(est.beta[j] - kNormalQuantile975 * est.se[j],
                          est.beta[j] + kNormalQuantile975 * est.se[j]);
    est.re_vs_sl[j] = se_sl[j] / est.se[j];
  }
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

AugmentedEstimate supervised_estimate(const Eigen::VectorXd& beta_sl, const Eigen::MatrixXd& sigma,
                                      int n) {
  AugmentedEstimate est;
  est.method = Method::SL;
  est.beta = beta_sl;
  est.cov = sigma / static_cast<double>(n);
  const Eigen::VectorXd se = est.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  finish(est, se);
  return est;
}

AugmentedEstimate augment(Method method, const Eigen::VectorXd& beta_sl,
                          const Eigen::VectorXd& gamma_hat, const Eigen::VectorXd& gamma_bar,
                          const CovBlocks& blocks) {
  const Eigen::Index p = beta_sl.size();
  const Eigen::Index d = gamma_hat.size();
  if (gamma_bar.size() != d || blocks.sigma_gamma.rows() != d || blocks.sigma_gamma.cols() != d ||
      blocks.omega.rows() != p || blocks.omega.cols() != d || blocks.sigma.rows() != p)
    throw std::invalid_argument("augment: dimension mismatch");
  if (!all_finite(beta_sl) || !all_finite(gamma_hat) || !all_finite(gamma_bar) ||
      !all_finite(blocks.sigma) || !all_finite(blocks.sigma_gamma) || !all_finite(blocks.omega))
    throw std::invalid_argument("augment: non-finite input");

  AugmentedEstimate est;
  est.method = method;
  Eigen::MatrixXd sg = 0.5 * (blocks.sigma_gamma + blocks.sigma_gamma.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sg, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e10) {
    sg.diagonal().array() += 1e-8 * sg.trace() / static_cast<double>(d);
    est.ridge_applied = true;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sg);
  if (ldlt.info() != Eigen::Success) throw FitError("augment", "cannot factor sigma_gamma");
  const Eigen::MatrixXd weight = ldlt.solve(blocks.omega.transpose()).transpose();  // p x d
  const double n = static_cast<double>(blocks.n);
  est.beta = beta_sl - weight * (gamma_hat - gamma_bar);
  est.cov = (blocks.sigma - weight * blocks.omega.transpose()) / n;
  const Eigen::VectorXd se_sl = (blocks.sigma.diagonal() / n).cwiseMax(0.0).cwiseSqrt();
  finish(est, se_sl);
  return est;
}

const AugmentedEstimate* SslResult::find(Method m) const {
  for (const auto& e : estimates)
    if (e.method == m) return &e;
  return nullptr;
}

namespace {

template <class F>
auto staged(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const FitError& e) {
    if (e.stage() == stage) throw;
    throw FitError(stage, e.what());
  } catch (const std::exception& e) {
    throw FitError(stage, e.what());
  }
}

StageDiagnostics em_diag(const std::string& stage, const EmFit& fit) {
  return {stage, fit.iterations, fit.converged, static_cast<int>(fit.grid.size()), 0.0, fit.loglik()};
}

StageDiagnostics comp_diag(const std::string& stage, const CompositeFit& fit) {
  return {stage, fit.iterations, fit.converged, 0, fit.score_norm, -fit.neg_loglik};
}

EmFit checked_em(const std::string& stage, const SurvivalData& data, const SslConfig& cfg) {
  return staged(stage, [&] {
    EmFit fit = fit_em(data, cfg.r, cfg.em);
    if (!fit.converged)
      throw FitError(stage, "EM did not converge in " + std::to_string(fit.iterations) + " iterations");
    return fit;
  });
}

CompositeFit checked_composite(const std::string& stage, const SurvivalData& data,
                               const DesignV& design, const SslConfig& cfg) {
  return staged(stage, [&] {
    CompositeFit fit = fit_composite(data, design, cfg.composite);
    if (!fit.converged)
      throw FitError(stage, "composite fit did not converge (score norm " +
                                std::to_string(fit.score_norm) + ")" +
                                (fit.diagnostic.empty() ? "" : ": " + fit.diagnostic));
    return fit;
  });
}

}  // namespace

SslResult run_ssl(const Cohort& labeled, const Cohort& unlabeled, const SslConfig& config) {
  SslResult res;
  res.n = static_cast<int>(labeled.size());
  res.n_unlabeled = static_cast<int>(unlabeled.size());
  const int p = labeled.p();
  if (res.n < p + 2) throw FitError("SL", "need at least p + 2 labeled subjects");
  if (labeled.n_unlabeled() != 0) throw FitError("SL", "labeled cohort contains unlabeled records");
  if (res.n_unlabeled > 0 && unlabeled.p() != p) throw FitError("SL", "covariate dimensions differ");

  const SurvivalData truth = survival_view(labeled, Outcome::True);
  staged("SL", [&] { check_design_rank(truth.z); return 0; });
  const EmFit sl = checked_em("SL", truth, config);
  res.diagnostics.push_back(em_diag("SL", sl));
  const Eigen::MatrixXd xi = staged("SL-influence", [&] { return xi_rows(sl, truth, config.influence); });

  const Eigen::MatrixXd sigma = xi.transpose() * xi / static_cast<double>(res.n);
  res.estimates.push_back(supervised_estimate(sl.beta, sigma, res.n));
  if (res.n_unlabeled == 0) return res;

  const SurvivalData surr_lab = survival_view(labeled, Outcome::Surrogate);
  const SurvivalData surr_all = survival_view(concat(labeled, unlabeled), Outcome::Surrogate);

  Eigen::MatrixXd eta1, eta2;
  if (config.use_model4) {
    const EmFit hat = checked_em("model4-labeled", surr_lab, config);
    const EmFit bar = checked_em("model4-all", surr_all, config);
    res.diagnostics.push_back(em_diag("model4-labeled", hat));
    res.diagnostics.push_back(em_diag("model4-all", bar));
    eta1 = staged("model4-influence", [&] { return eta1_rows(hat, surr_lab, config.influence); });
    res.gamma1_hat = hat.beta;
    res.gamma1_bar = bar.beta;
    const CovBlocks blocks = covariance_blocks(xi, eta1, res.n, res.n_unlabeled);
    res.estimates.push_back(augment(Method::SSL1, sl.beta, hat.beta, bar.beta, blocks));
  }
  if (config.use_model5) {
    const DesignV design_lab = staged("model5-labeled", [&] { return build_design(surr_lab, config.h); });
    const DesignV design_all = staged("model5-all", [&] { return build_design(surr_all, config.h); });
    const CompositeFit hat = checked_composite("model5-labeled", surr_lab, design_lab, config);
    const CompositeFit bar = checked_composite("model5-all", surr_all, design_all, config);
    res.diagnostics.push_back(comp_diag("model5-labeled", hat));
    res.diagnostics.push_back(comp_diag("model5-all", bar));
    eta2 = staged("model5-influence", [&] { return eta2_rows(hat, surr_lab, design_lab); });
    res.gamma2_hat = hat.gamma();
    res.gamma2_bar = bar.gamma();
    const CovBlocks blocks = covariance_blocks(xi, eta2, res.n, res.n_unlabeled);
    res.estimates.push_back(augment(Method::SSL2, sl.beta, hat.gamma(), bar.gamma(), blocks));
  }
  if (config.use_model4 && config.use_model5) {
    Eigen::VectorXd hat3(2 * p), bar3(2 * p);
    hat3 << *res.gamma1_hat, *res.gamma2_hat;
    bar3 << *res.gamma1_bar, *res.gamma2_bar;
    const CovBlocks blocks = covariance_blocks(xi, stack_rows(eta1, eta2), res.n, res.n_unlabeled);
    res.estimates.push_back(augment(Method::SSL3, sl.beta, hat3, bar3, blocks));
  }
  return res;
}

}  // namespace dcssl

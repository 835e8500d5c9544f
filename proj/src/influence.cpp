#include "dcssl/influence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dcssl/errors.hpp"

namespace dcssl {

namespace {

// Gradient of the observed log-likelihood in beta with lambda held at the
// profile maximizer; equals sum_i psi_i(beta, beta).
Eigen::VectorXd profile_score(const SurvivalData& data, const EStepCache& cache) {
  const double total = cache.jumps.sum();
  const Eigen::VectorXd weight =
      cache.en_row - total * cache.risk.cwiseProduct(cache.emu);
  return data.z.transpose() * weight;
}

double condition_number(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  return s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : INFINITY;
}

}  // namespace

ProfileInfluence profile_influence(const EmFit& fit, const SurvivalData& data,
                                   const InfluenceOptions& opts) {
  if (!fit.converged) throw FitError("influence", "NPMLE fit did not converge");
  const int p = data.p();
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index K = fit.grid.size();
  const TransformParam r = fit.r;

  const JumpGrid grid0 = profile_lambda(data, fit.beta, fit.grid, r, opts.profile_tol,
                                        opts.profile_max_iter);
  const EStepCache cache = e_step(data, fit.beta, grid0, r);

  ProfileInfluence out;
  out.dlambda.resize(K, p);
  Eigen::MatrixXd dscore(p, p);
  for (int j = 0; j < p; ++j) {
    const double h = opts.rel_step * std::max(1.0, std::abs(fit.beta[j]));
    Eigen::VectorXd bp = fit.beta, bm = fit.beta;
    bp[j] += h;
    bm[j] -= h;
    const JumpGrid gp = profile_lambda(data, bp, grid0, r, opts.profile_tol, opts.profile_max_iter);
    const JumpGrid gm = profile_lambda(data, bm, grid0, r, opts.profile_tol, opts.profile_max_iter);
    out.dlambda.col(j) = (gp.jumps - gm.jumps) / (2.0 * h);
    dscore.col(j) = (profile_score(data, e_step(data, bp, gp, r)) -
                     profile_score(data, e_step(data, bm, gm, r))) / (2.0 * h);
  }
  out.a_matrix = -dscore / static_cast<double>(n);
  out.a_matrix = 0.5 * (out.a_matrix + out.a_matrix.transpose()).eval();

  // prefix[k] = sum_{m < k} d lambda_m / d beta
  Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(K + 1, p);
  for (Eigen::Index k = 0; k < K; ++k) prefix.row(k + 1) = prefix.row(k) + out.dlambda.row(k);
  const Eigen::RowVectorXd dtotal = prefix.row(K);
  const double total = grid0.jumps.sum();

  out.psi.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int idx = cache.index[i];
    const double e = cache.risk[i];
    const double emu = cache.emu[i];
    const Eigen::RowVectorXd zi = data.z.row(i);
    // sum_k (d lambda_k / lambda_k) E(N_ik)
    Eigen::RowVectorXd rel = e * emu * (dtotal - prefix.row(idx));
    if (data.code[i] == Censoring::Exact) rel += out.dlambda.row(idx - 1) / grid0.jumps[idx - 1];
    if (data.code[i] == Censoring::Left) rel += e * cache.left_rate[i] * prefix.row(idx);
    out.psi.row(i) = zi * cache.en_row[i] + rel - (total * zi + dtotal) * e * emu;
  }

  const double cond = condition_number(out.a_matrix);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(out.a_matrix);
  if (p > 0 && (cond > 1e12 || ldlt.info() != Eigen::Success || !ldlt.isPositive())) {
    std::ostringstream msg;
    msg << "information matrix is singular or indefinite (condition number " << cond << ")";
    throw FitError("influence", msg.str());
  }
  out.rows = p > 0 ? Eigen::MatrixXd(ldlt.solve(out.psi.transpose()).transpose())
                   : Eigen::MatrixXd(n, 0);
  return out;
}

Eigen::MatrixXd xi_rows(const EmFit& fit, const SurvivalData& data, const InfluenceOptions& opts) {
  return profile_influence(fit, data, opts).rows;
}

Eigen::MatrixXd eta1_rows(const EmFit& surrogate_fit, const SurvivalData& surrogate_data,
                          const InfluenceOptions& opts) {
  return profile_influence(surrogate_fit, surrogate_data, opts).rows;
}

Eigen::MatrixXd composite_score_rows(const CompositeFit& fit, const SurvivalData& data,
                                     const DesignV& design) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const int p = data.p();
  const Eigen::VectorXd& theta = fit.theta;
  Eigen::MatrixXd rows(n, p + 2);

  const Eigen::VectorXd eta = design.rows * theta;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = data.code[i] == Censoring::Left ? 1.0 : 0.0;
    const double prob = 1.0 / (1.0 + std::exp(-eta[i]));
    rows.row(i) = (y - prob) * design.rows.row(i);
  }
  if (p == 0) return rows;

  const Eigen::VectorXd gamma = theta.tail(p);
  const Eigen::VectorXd risk = (data.z * gamma).array().exp();

  // distinct exact event times, ascending
  std::vector<double> times;
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.code[i] == Censoring::Exact) times.push_back(data.time[i]);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  const std::size_t m = times.size();

  // risk-set sums over {j : not left censored, X_j >= t}
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.code[i] != Censoring::Left) order.push_back(i);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return data.time[a] > data.time[b]; });
  std::vector<double> s0(m, 0.0), deaths(m, 0.0);
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), p);
  {
    double run0 = 0.0;
    Eigen::RowVectorXd run1 = Eigen::RowVectorXd::Zero(p);
    std::size_t pos = 0;
    for (std::size_t q = m; q-- > 0;) {
      while (pos < order.size() && data.time[order[pos]] >= times[q]) {
        run0 += risk[order[pos]];
        run1 += risk[order[pos]] * data.z.row(order[pos]);
        ++pos;
      }
      s0[q] = run0;
      s1.row(static_cast<Eigen::Index>(q)) = run1;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.code[i] != Censoring::Exact) continue;
    const auto q = std::lower_bound(times.begin(), times.end(), data.time[i]) - times.begin();
    deaths[static_cast<std::size_t>(q)] += 1.0;
  }
  // cumulative dLambda and zbar dLambda over event times
  std::vector<double> cum_h(m + 1, 0.0);
  Eigen::MatrixXd cum_zh = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m + 1), p);
  Eigen::MatrixXd zbar(static_cast<Eigen::Index>(m), p);
  for (std::size_t q = 0; q < m; ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    zbar.row(qi) = s1.row(qi) / s0[q];
    const double dh = deaths[q] / s0[q];
    cum_h[q + 1] = cum_h[q] + dh;
    cum_zh.row(qi + 1) = cum_zh.row(qi) + dh * zbar.row(qi);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.code[i] == Censoring::Left) continue;
    const auto upto = static_cast<std::size_t>(
        std::upper_bound(times.begin(), times.end(), data.time[i]) - times.begin());
    Eigen::RowVectorXd mart = -risk[i] * (cum_h[upto] * data.z.row(i) -
                                          cum_zh.row(static_cast<Eigen::Index>(upto)));
    if (data.code[i] == Censoring::Exact)
      mart += data.z.row(i) - zbar.row(static_cast<Eigen::Index>(upto - 1));
    rows.row(i).tail(p) += mart;
  }
  return rows;
}

Eigen::MatrixXd eta2_rows(const CompositeFit& fit, const SurvivalData& data,
                          const DesignV& design) {
  const int p = data.p();
  const double n = static_cast<double>(data.n());
  const Eigen::MatrixXd tilde = composite_score_rows(fit, data, design);
  // -[Omega^{-1} tilde]_gamma with Omega = H / n, by eliminating the alpha block.
  // The alpha block can be tiny (few or no left-censored subjects) without the
  // gamma block being ill determined, so it is scaled to unit diagonal first.
  const Eigen::MatrixXd a = -fit.hessian / n;
  const Eigen::MatrixXd a_aa = a.topLeftCorner(2, 2);
  const Eigen::MatrixXd a_ga = a.bottomLeftCorner(p, 2);
  const Eigen::MatrixXd a_gg = a.bottomRightCorner(p, p);
  const Eigen::MatrixXd t_a = tilde.leftCols(2).transpose();
  const Eigen::MatrixXd t_g = tilde.rightCols(p).transpose();

  Eigen::MatrixXd schur = a_gg;
  Eigen::MatrixXd rhs = t_g;
  const Eigen::Vector2d diag = a_aa.diagonal();
  if ((diag.array() > 0.0).all()) {
    const Eigen::Vector2d scale = diag.cwiseSqrt().cwiseInverse();
    const Eigen::Matrix2d corr = scale.asDiagonal() * a_aa * scale.asDiagonal();
    // rank deficient when h(L) is constant; the generalized Schur complement
    // of a PSD block is still well defined
    Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix2d> cod(corr);
    cod.setThreshold(1e-12);
    const Eigen::Matrix2d inv = scale.asDiagonal() * cod.pseudoInverse() * scale.asDiagonal();
    schur -= a_ga * inv * a_ga.transpose();
    rhs -= a_ga * inv * t_a;
  }
  const double cond = condition_number(schur);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(0.5 * (schur + schur.transpose()));
  if (cond > 1e12 || ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    std::ostringstream msg;
    msg << "composite information matrix is singular (condition number " << cond << ")";
    throw FitError("influence", msg.str());
  }
  return ldlt.solve(rhs).transpose();
}

Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& eta1, const Eigen::MatrixXd& eta2) {
  if (eta1.rows() != eta2.rows()) throw std::invalid_argument("stack_rows: row counts differ");
  Eigen::MatrixXd out(eta1.rows(), eta1.cols() + eta2.cols());
  out << eta1, eta2;
  return out;
}

CovBlocks covariance_blocks(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& eta, int n,
                            int n_unlabeled) {
  if (xi.rows() != n || eta.rows() != n)
    throw std::invalid_argument("covariance_blocks: influence rows must have n rows");
  if (n < 1 || n_unlabeled < 0) throw std::invalid_argument("covariance_blocks: bad sample sizes");
  CovBlocks b;
  b.n = n;
  b.n_unlabeled = n_unlabeled;
  const double nn = n, big_n = n_unlabeled;
  b.rho = nn / (nn + big_n);
  const double c = big_n / (nn * (nn + big_n));
  b.sigma = xi.transpose() * xi / nn;
  b.sigma = 0.5 * (b.sigma + b.sigma.transpose()).eval();
  b.sigma_gamma = c * eta.transpose() * eta;
  b.sigma_gamma = 0.5 * (b.sigma_gamma + b.sigma_gamma.transpose()).eval();
  b.omega = c * xi.transpose() * eta;
  return b;
}

}  // namespace dcssl

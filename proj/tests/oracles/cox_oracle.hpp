#pragma once

// Right-censored Cox regression written from scratch in the plainest form:
// O(n^2) risk-set sums, Breslow ties, Newton to machine precision.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

struct CoxResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd info;        // observed information, sum over subjects
  std::vector<double> times;   // distinct event times
  std::vector<double> cumhaz;  // Breslow cumulative hazard at `times`
  Eigen::MatrixXd influence;   // n x p rows n * I^{-1} U_i
};

// event[i] = true for an observed event, false for right censoring
inline CoxResult cox_fit(const Eigen::VectorXd& time, const std::vector<bool>& event,
                         const Eigen::MatrixXd& z) {
  const int n = static_cast<int>(time.size());
  const int p = static_cast<int>(z.cols());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd info(p, p);
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(p);
    info.setZero();
    for (int i = 0; i < n; ++i) {
      if (!event[i]) continue;
      double s0 = 0;
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
      for (int j = 0; j < n; ++j) {
        if (time[j] < time[i]) continue;
        const double w = std::exp(z.row(j).dot(beta));
        s0 += w;
        s1 += w * z.row(j).transpose();
        s2 += w * z.row(j).transpose() * z.row(j);
      }
      const Eigen::VectorXd zbar = s1 / s0;
      score += z.row(i).transpose() - zbar;
      info += s2 / s0 - zbar * zbar.transpose();
    }
    const Eigen::VectorXd step = info.ldlt().solve(score);
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-13) break;
  }

  CoxResult out;
  out.beta = beta;
  out.info = info;
  std::vector<double> ev;
  for (int i = 0; i < n; ++i)
    if (event[i]) ev.push_back(time[i]);
  std::sort(ev.begin(), ev.end());
  ev.erase(std::unique(ev.begin(), ev.end()), ev.end());
  std::vector<double> dh(ev.size());
  std::vector<Eigen::VectorXd> zbar(ev.size());
  double cum = 0;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    double d = 0, s0 = 0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < n; ++j) {
      if (event[j] && time[j] == ev[k]) d += 1;
      if (time[j] >= ev[k]) {
        const double w = std::exp(z.row(j).dot(beta));
        s0 += w;
        s1 += w * z.row(j).transpose();
      }
    }
    dh[k] = d / s0;
    zbar[k] = s1 / s0;
    cum += dh[k];
    out.times.push_back(ev[k]);
    out.cumhaz.push_back(cum);
  }
  // martingale score residuals
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, p);
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(z.row(i).dot(beta));
    for (std::size_t k = 0; k < ev.size(); ++k) {
      if (ev[k] > time[i]) break;
      u.row(i) -= w * dh[k] * (z.row(i).transpose() - zbar[k]).transpose();
      if (event[i] && ev[k] == time[i]) u.row(i) += (z.row(i).transpose() - zbar[k]).transpose();
    }
  }
  out.influence = static_cast<double>(n) * info.inverse() * u.transpose();
  out.influence.transposeInPlace();
  return out;
}

}  // namespace oracle

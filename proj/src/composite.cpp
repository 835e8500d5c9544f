#include "dcssl/composite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dcssl/errors.hpp"

namespace dcssl {

HTransform parse_h_transform(const std::string& name) {
  if (name == "log") return HTransform::Log;
  if (name == "identity") return HTransform::Identity;
  throw std::invalid_argument("unknown H transform '" + name + "' (expected log or identity)");
}

std::string to_string(HTransform h) { return h == HTransform::Log ? "log" : "identity"; }

DesignV build_design(const SurvivalData& data, HTransform h) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const int p = data.p();
  DesignV design;
  design.h = h;
  design.rows.resize(n, p + 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double l = data.l[i];
    if (h == HTransform::Log && !(l > 0.0))
      throw DomainError("build_design: log transform needs l > 0, got " + std::to_string(l));
    design.rows(i, 0) = 1.0;
    design.rows(i, 1) = h == HTransform::Log ? std::log(l) : l;
    design.rows.row(i).tail(p) = data.z.row(i);
  }
  return design;
}

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

CompositeEval composite_eval(const Eigen::VectorXd& theta, const SurvivalData& data,
                             const DesignV& design, bool with_hessian) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const int p = data.p();
  const Eigen::Index d = p + 2;
  if (theta.size() != d || design.rows.rows() != n || design.rows.cols() != d)
    throw std::invalid_argument("composite_eval: inconsistent dimensions");

  CompositeEval out;
  out.score = Eigen::VectorXd::Zero(d);
  if (with_hessian) out.hessian = Eigen::MatrixXd::Zero(d, d);

  // logistic part for P(left censored)
  const Eigen::VectorXd eta = design.rows * theta;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = data.code[i] == Censoring::Left ? 1.0 : 0.0;
    const double prob = sigmoid(eta[i]);
    out.loglik += y * eta[i] - softplus(eta[i]);
    out.score += (y - prob) * design.rows.row(i).transpose();
    if (with_hessian)
      out.hessian.selfadjointView<Eigen::Lower>().rankUpdate(design.rows.row(i).transpose(),
                                                             -prob * (1.0 - prob));
  }

  // partial likelihood over the non-left-censored subjects, Breslow ties
  if (p > 0) {
    const Eigen::VectorXd gamma = theta.tail(p);
    std::vector<Eigen::Index> order;
    for (Eigen::Index i = 0; i < n; ++i)
      if (data.code[i] != Censoring::Left) order.push_back(i);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return data.time[a] > data.time[b]; });
    const Eigen::VectorXd lp = data.z * gamma;
    const double shift = order.empty() ? 0.0 : lp.maxCoeff();

    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd score_g = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd hess_g = Eigen::MatrixXd::Zero(p, p);
    std::size_t pos = 0;
    while (pos < order.size()) {
      const double t = data.time[order[pos]];
      std::size_t end = pos;
      while (end < order.size() && data.time[order[end]] == t) {
        const Eigen::Index j = order[end];
        const double w = std::exp(lp[j] - shift);
        s0 += w;
        s1 += w * data.z.row(j).transpose();
        if (with_hessian) s2.selfadjointView<Eigen::Lower>().rankUpdate(data.z.row(j).transpose(), w);
        ++end;
      }
      int events = 0;
      Eigen::VectorXd zsum = Eigen::VectorXd::Zero(p);
      double lpsum = 0.0;
      for (std::size_t q = pos; q < end; ++q) {
        const Eigen::Index i = order[q];
        if (data.code[i] != Censoring::Exact) continue;
        ++events;
        zsum += data.z.row(i).transpose();
        lpsum += lp[i];
      }
      if (events > 0) {
        if (!(s0 > 0.0)) {
          std::ostringstream msg;
          msg << "empty risk set at event time " << t;
          throw FitError("composite", msg.str());
        }
        const Eigen::VectorXd zbar = s1 / s0;
        out.loglik += lpsum - events * (std::log(s0) + shift);
        score_g += zsum - events * zbar;
        if (with_hessian) {
          const Eigen::MatrixXd s2full = s2.selfadjointView<Eigen::Lower>();
          hess_g -= events * (s2full / s0 - zbar * zbar.transpose());
        }
      }
      pos = end;
    }
    out.score.tail(p) += score_g;
    if (with_hessian) {
      Eigen::MatrixXd full = out.hessian.selfadjointView<Eigen::Lower>();
      full.bottomRightCorner(p, p) += hess_g;
      out.hessian = 0.5 * (full + full.transpose());
    }
  } else if (with_hessian) {
    out.hessian = Eigen::MatrixXd(out.hessian.selfadjointView<Eigen::Lower>());
  }
  return out;
}

double composite_negloglik(const Eigen::VectorXd& theta, const SurvivalData& data,
                           const DesignV& design) {
  return -composite_eval(theta, data, design, false).loglik;
}

Eigen::VectorXd composite_score(const Eigen::VectorXd& theta, const SurvivalData& data,
                                const DesignV& design) {
  return composite_eval(theta, data, design, false).score;
}

Eigen::MatrixXd composite_hessian(const Eigen::VectorXd& theta, const SurvivalData& data,
                                  const DesignV& design) {
  return composite_eval(theta, data, design, true).hessian;
}

CompositeFit fit_composite(const SurvivalData& data, const DesignV& design,
                           const CompositeOptions& opts) {
  const Eigen::Index d = data.p() + 2;
  CompositeFit fit;
  fit.theta = Eigen::VectorXd::Zero(d);

  const bool any_exact =
      std::any_of(data.code.begin(), data.code.end(), [](Censoring c) { return c == Censoring::Exact; });
  const bool any_left =
      std::any_of(data.code.begin(), data.code.end(), [](Censoring c) { return c == Censoring::Left; });
  const bool any_not_left =
      std::any_of(data.code.begin(), data.code.end(), [](Censoring c) { return c != Censoring::Left; });
  if (!any_exact && !(any_left && any_not_left))
    throw FitError("fit_composite", "degenerate data: no exact events and a single censoring class");

  std::vector<std::string> notes;
  if (!any_exact) notes.push_back("no exact surrogate events; gamma identified through the logistic part only");

  CompositeEval ev = composite_eval(fit.theta, data, design, true);
  bool separated = false;
  // Damped Newton over theta[first:]; the rest stays fixed.
  auto ascend = [&](Eigen::Index first, bool watch_alpha) {
    const Eigen::Index m = d - first;
    for (int it = 0; it < opts.max_iter; ++it) {
      const Eigen::VectorXd score = ev.score.tail(m);
      if (score.lpNorm<Eigen::Infinity>() < opts.tol) return true;
      if (watch_alpha && (std::abs(fit.theta[0]) > opts.separation_bound ||
                          std::abs(fit.theta[1]) > opts.separation_bound)) {
        separated = true;
        return false;
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(-ev.hessian.bottomRightCorner(m, m));
      const bool newton =
          ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0;
      Eigen::VectorXd dir = Eigen::VectorXd::Zero(d);
      dir.tail(m) = newton ? Eigen::VectorXd(ldlt.solve(score)) : score;
      const double slope = score.dot(dir.tail(m));
      ++fit.iterations;
      // Newton decrement below rounding of the objective: the line search cannot
      // see further progress, take the step and stop
      if (newton && slope < 1e-13 * std::max(1.0, std::abs(ev.loglik))) {
        fit.theta += dir;
        ev = composite_eval(fit.theta, data, design, true);
        return true;
      }
      const double f0 = -ev.loglik;
      double t = 1.0;
      Eigen::VectorXd next = fit.theta + dir;
      double f1 = composite_negloglik(next, data, design);
      int halvings = 0;
      while (!(f1 <= f0 - opts.armijo_c * t * slope) && halvings < 60) {
        t *= opts.backtrack;
        next = fit.theta + t * dir;
        f1 = composite_negloglik(next, data, design);
        ++halvings;
      }
      if (halvings == 60) return false;  // no further ascent possible at working precision
      fit.theta = next;
      ev = composite_eval(fit.theta, data, design, true);
    }
    return false;
  };
  fit.converged = ascend(0, true);
  // alpha ran off to infinity: the logistic term is flat there, finish gamma alone
  if (separated) ascend(2, false);
  // a constant logistic outcome has no finite alpha whatever the iterations did
  if (!any_left || !any_not_left)
    notes.push_back("logistic part separated: every subject is on one side of the left window");
  else if (separated)
    notes.push_back("logistic part separated: |alpha| exceeded " +
                    std::to_string(opts.separation_bound));
  fit.neg_loglik = -ev.loglik;
  fit.score_norm = ev.score.lpNorm<Eigen::Infinity>();
  fit.hessian = ev.hessian;
  if (!fit.converged && fit.score_norm < opts.tol && !separated) fit.converged = true;
  if (separated || !any_left || !any_not_left) fit.converged = false;
  for (std::size_t k = 0; k < notes.size(); ++k) fit.diagnostic += (k ? "; " : "") + notes[k];
  return fit;
}

}  // namespace dcssl

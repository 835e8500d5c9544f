#include "dcssl/em_npmle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dcssl/errors.hpp"

namespace dcssl {

namespace {

constexpr double kLogFloor = -745.0;

double floored_log(double x) { return x > 0.0 ? std::max(std::log(x), kLogFloor) : kLogFloor; }

std::vector<int> grid_index(const SurvivalData& data, const JumpGrid& grid) {
  const auto* begin = grid.times.data();
  const auto* end = begin + grid.times.size();
  std::vector<int> index(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    index[i] = static_cast<int>(std::upper_bound(begin, end, data.time[i]) - begin);
    if (data.code[i] == Censoring::Exact &&
        (index[i] == 0 || grid.times[index[i] - 1] != data.time[i])) {
      throw FitError("e_step", "exact time " + std::to_string(data.time[i]) +
                                   " is not a grid point");
    }
  }
  return index;
}

}  // namespace

double JumpGrid::cumulative(double t) const {
  double total = 0.0;
  for (Eigen::Index k = 0; k < times.size() && times[k] <= t; ++k) total += jumps[k];
  return total;
}

JumpGrid event_grid(const SurvivalData& data, bool left_support) {
  std::vector<double> exact;
  for (std::size_t i = 0; i < data.n(); ++i)
    if (data.code[i] == Censoring::Exact) exact.push_back(data.time[i]);
  if (exact.empty()) throw FitError("event_grid", "no exact event times");
  std::sort(exact.begin(), exact.end());
  exact.erase(std::unique(exact.begin(), exact.end()), exact.end());
  if (left_support) {
    // a left-censored L below t_1 would have zero likelihood; put one point at the
    // smallest such L (right end of the innermost interval (0, L])
    double first = exact.front();
    for (std::size_t i = 0; i < data.n(); ++i)
      if (data.code[i] == Censoring::Left && data.time[i] < first) first = data.time[i];
    if (first < exact.front()) exact.insert(exact.begin(), first);
  }
  JumpGrid grid;
  grid.times = Eigen::Map<Eigen::VectorXd>(exact.data(), static_cast<Eigen::Index>(exact.size()));
  grid.jumps = Eigen::VectorXd::Constant(grid.times.size(), 1.0 / static_cast<double>(exact.size()));
  return grid;
}

EStepCache e_step(const SurvivalData& data, const Eigen::VectorXd& beta, const JumpGrid& grid,
                  TransformParam r) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index K = grid.size();
  if (beta.size() != data.p()) throw FitError("e_step", "beta has wrong dimension");
  if (grid.jumps.size() != K || (K > 0 && grid.jumps.minCoeff() < 0.0))
    throw FitError("e_step", "jumps must be nonnegative");

  EStepCache c;
  c.index = grid_index(data, grid);
  c.code = data.code;
  c.jumps = grid.jumps;
  c.emu.resize(n);
  c.v.resize(n);
  c.risk.resize(n);
  c.left_rate.setZero(n);
  c.en_row.resize(n);
  c.en_col.setZero(K);

  // cum[k] = lambda_1 + ... + lambda_k, cum[0] = 0
  Eigen::VectorXd cum(K + 1);
  cum[0] = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) cum[k + 1] = cum[k] + grid.jumps[k];
  const double total = cum[K];

  const double rr = r.r();
  const Eigen::VectorXd lp = data.z * beta;
  // below[k]: mass entering E(N_ik) for subjects with index == k (t_k > X_i from k on)
  // left_above[k]: left-censored mass for subjects with index == k (t_j <= X_i for j < k)
  Eigen::VectorXd below = Eigen::VectorXd::Zero(K + 1);
  Eigen::VectorXd left_above = Eigen::VectorXd::Zero(K + 1);
  Eigen::VectorXd exact_count = Eigen::VectorXd::Zero(K);
  double loglik = 0.0;

  for (Eigen::Index i = 0; i < n; ++i) {
    const int idx = c.index[i];
    const double e = std::exp(lp[i]);
    const double v = cum[idx] * e;
    const double gv = transform::g(v, r);
    c.risk[i] = e;
    c.v[i] = v;
    double emu = 0.0;
    double extra = 0.0;
    switch (data.code[i]) {
      case Censoring::Right:
        emu = 1.0 / (1.0 + rr * v);
        loglik += std::max(-gv, kLogFloor);
        break;
      case Censoring::Exact:
        emu = (1.0 + rr) / (1.0 + rr * v);
        exact_count[idx - 1] += 1.0;
        extra = 1.0;
        loglik += std::max(floored_log(grid.jumps[idx - 1]) + lp[i] - (1.0 + rr) * gv, kLogFloor);
        break;
      case Censoring::Left: {
        const double om = transform::one_minus_m0(v, r);
        emu = transform::left_censored_mean(v, r);
        if (idx > 0 && om > 0.0) {
          c.left_rate[i] = 1.0 / om;
          left_above[idx] += e / om;
          extra = v / om;
        }
        loglik += floored_log(om);
        break;
      }
    }
    c.emu[i] = emu;
    below[idx] += e * emu;
    c.en_row[i] = extra + e * emu * (total - cum[idx]);
  }

  // sum_{i: index_i <= k} e_i E(mu_i) and sum_{left i: index_i > k} e_i / (1 - m0)
  double run_below = 0.0;
  double run_left = left_above.sum();
  for (Eigen::Index k = 0; k < K; ++k) {
    run_below += below[k];
    run_left -= left_above[k];
    c.en_col[k] = exact_count[k] + grid.jumps[k] * (run_below + std::max(run_left, 0.0));
  }
  c.loglik = loglik;
  return c;
}

double EStepCache::en(Eigen::Index i, Eigen::Index k) const {
  const int idx = index[i];
  if (k >= idx) return jumps[k] * risk[i] * emu[i];
  if (code[i] == Censoring::Exact && k == idx - 1) return 1.0;
  if (code[i] == Censoring::Left) return jumps[k] * risk[i] * left_rate[i];
  return 0.0;
}

Eigen::MatrixXd EStepCache::en_dense() const {
  const Eigen::Index n = emu.size();
  const Eigen::Index K = jumps.size();
  Eigen::MatrixXd out(n, K);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < K; ++k) out(i, k) = en(i, k);
  return out;
}

Eigen::VectorXd m_step_lambda(const EStepCache& cache, const SurvivalData& data,
                              const Eigen::VectorXd& beta) {
  const Eigen::VectorXd risk = (data.z * beta).array().exp();
  const double denom = cache.emu.dot(risk);
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw FitError("m_step_lambda", "nonpositive denominator");
  return cache.en_col / denom;
}

Eigen::VectorXd m_step_beta(const EStepCache& cache, const SurvivalData& data,
                            const Eigen::VectorXd& beta_init) {
  const int p = data.p();
  if (p == 0) return beta_init;
  const Eigen::MatrixXd& z = data.z;
  const Eigen::VectorXd& w = cache.emu;
  const Eigen::VectorXd& counts = cache.en_row;
  const double total = counts.sum();
  const Eigen::VectorXd target = z.transpose() * counts;

  // f(beta) = sum_i n_i z_i' beta - A log sum_j w_j exp(z_j' beta), concave
  auto objective = [&](const Eigen::VectorXd& b, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
    const Eigen::VectorXd lp = z * b;
    const double shift = lp.maxCoeff();
    const Eigen::VectorXd wt = w.array() * (lp.array() - shift).exp();
    const double s0 = wt.sum();
    const double value = target.dot(b) - total * (std::log(s0) + shift);
    if (grad) {
      const Eigen::VectorXd zbar = z.transpose() * wt / s0;
      *grad = target - total * zbar;
      if (hess) {
        const Eigen::MatrixXd zc = z.rowwise() - zbar.transpose();
        *hess = -total * (zc.transpose() * wt.asDiagonal() * zc) / s0;
      }
    }
    return value;
  };

  Eigen::VectorXd b = beta_init;
  Eigen::VectorXd grad(p);
  Eigen::MatrixXd hess(p, p);
  const double scale = std::max(1.0, total);
  for (int step = 0; step < 50; ++step) {
    const double f0 = objective(b, &grad, &hess);
    if (grad.lpNorm<Eigen::Infinity>() <= 1e-11 * scale) return b;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * scale) {
      if (grad.lpNorm<Eigen::Infinity>() <= 1e-8 * scale) return b;
      throw FitError("m_step_beta", "singular information in beta update");
    }
    const Eigen::VectorXd dir = ldlt.solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = b + dir;
    while (objective(next, nullptr, nullptr) < f0 - 1e-12 * std::abs(f0) && t > 1e-10) {
      t *= 0.5;
      next = b + t * dir;
    }
    const double change = (next - b).lpNorm<Eigen::Infinity>();
    b = next;
    if (change < 1e-13 * (1.0 + b.lpNorm<Eigen::Infinity>())) return b;
  }
  objective(b, &grad, nullptr);
  if (grad.lpNorm<Eigen::Infinity>() <= 1e-8 * scale) return b;
  std::ostringstream msg;
  msg << "Newton did not converge in 50 steps; last beta = " << b.transpose()
      << ", gradient norm = " << grad.norm();
  throw FitError("m_step_beta", msg.str());
}

double observed_loglik(const SurvivalData& data, const Eigen::VectorXd& beta,
                       const JumpGrid& grid, TransformParam r) {
  return e_step(data, beta, grid, r).loglik;
}

Eigen::VectorXd observed_loglik_terms(const SurvivalData& data, const Eigen::VectorXd& beta,
                                      const JumpGrid& grid, TransformParam r) {
  const auto cache = e_step(data, beta, grid, r);
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const double rr = r.r();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = cache.v[i];
    const double gv = transform::g(v, r);
    switch (data.code[i]) {
      case Censoring::Right: out[i] = std::max(-gv, kLogFloor); break;
      case Censoring::Exact:
        out[i] = std::max(floored_log(grid.jumps[cache.index[i] - 1]) + std::log(cache.risk[i]) -
                              (1.0 + rr) * gv, kLogFloor);
        break;
      case Censoring::Left: out[i] = floored_log(transform::one_minus_m0(v, r)); break;
    }
  }
  return out;
}

namespace {

struct EmState {
  Eigen::VectorXd beta;
  Eigen::VectorXd jumps;
};

double param_change(const EmState& a, const EmState& b) {
  const double db = a.beta.size() ? (a.beta - b.beta).lpNorm<Eigen::Infinity>() : 0.0;
  // jumps above 1 are compared relative to their size
  const Eigen::ArrayXd scale = a.jumps.array().abs().max(1.0);
  return db + ((a.jumps - b.jumps).array().abs() / scale).maxCoeff();
}

// One EM map from a state; also reports the log-likelihood at the input.
class EmMap {
 public:
  EmMap(const SurvivalData& data, TransformParam r, Eigen::VectorXd times, bool update_beta)
      : data_(data), r_(r), update_beta_(update_beta) {
    grid_.times = std::move(times);
  }

  std::pair<EmState, double> operator()(const EmState& s) {
    grid_.jumps = s.jumps;
    const EStepCache cache = e_step(data_, s.beta, grid_, r_);
    EmState next;
    next.beta = update_beta_ ? m_step_beta(cache, data_, s.beta) : s.beta;
    next.jumps = m_step_lambda(cache, data_, next.beta);
    return {std::move(next), cache.loglik};
  }

  // Extrapolation coordinates: (beta, log lambda) keeps the jumps positive.
  Eigen::VectorXd pack(const EmState& s) const {
    const Eigen::Index p = update_beta_ ? s.beta.size() : 0;
    Eigen::VectorXd x(p + s.jumps.size());
    if (p) x.head(p) = s.beta;
    x.tail(s.jumps.size()) = s.jumps.array().log().matrix();
    return x;
  }
  EmState unpack(const Eigen::VectorXd& x, const EmState& like) const {
    EmState s;
    const Eigen::Index p = update_beta_ ? like.beta.size() : 0;
    s.beta = update_beta_ ? Eigen::VectorXd(x.head(p)) : like.beta;
    s.jumps = x.tail(like.jumps.size()).array().exp().matrix();
    return s;
  }

 private:
  const SurvivalData& data_;
  TransformParam r_;
  JumpGrid grid_;
  bool update_beta_;
};

struct EmRun {
  EmState state;
  std::vector<double> trace;
  int cycles = 0;
  int evaluations = 0;
  bool converged = false;
};

// Each cycle is one accepted update: a plain EM step, or with acceleration
// two EM steps, an extrapolation and a stabilizing EM step.
EmRun run_em(EmMap& map, EmState start, double tol, int max_cycles, bool accelerate) {
  EmRun run;
  EmState s0 = std::move(start);
  double step_max = 1.0;
  while (run.cycles < max_cycles) {
    ++run.cycles;
    auto [s1, ll0] = map(s0);
    ++run.evaluations;
    run.trace.push_back(ll0);
    if (!std::isfinite(param_change(s0, s1))) throw FitError("fit_em", "non-finite parameter update");
    if (param_change(s0, s1) < tol) {
      s0 = std::move(s1);
      run.converged = true;
      break;
    }
    if (!accelerate) {
      s0 = std::move(s1);
      continue;
    }
    auto [s2, ll1] = map(s1);
    ++run.evaluations;
    if (param_change(s1, s2) < tol) {
      run.trace.push_back(ll1);
      s0 = std::move(s2);
      run.converged = true;
      break;
    }
    const Eigen::VectorXd x0 = map.pack(s0);
    const Eigen::VectorXd r = map.pack(s1) - x0;
    const Eigen::VectorXd v = map.pack(s2) - x0 - 2.0 * r;
    const double vnorm = v.norm();
    if (vnorm == 0.0) {
      run.trace.push_back(ll1);
      s0 = std::move(s2);
      continue;
    }
    const double alpha = std::clamp(-r.norm() / vnorm, -step_max, -1.0);
    bool accepted = false;
    if (alpha < -1.0) {
      const EmState sp = map.unpack(x0 - 2.0 * alpha * r + alpha * alpha * v, s0);
      try {
        auto [s3, llp] = map(sp);
        ++run.evaluations;
        if (std::isfinite(llp) && llp >= ll1) {
          s0 = std::move(s3);
          accepted = true;
          if (alpha == -step_max) step_max *= 4.0;
        }
      } catch (const FitError&) {
        ++run.evaluations;
      }
    } else {
      step_max = std::max(1.0, step_max);
    }
    if (!accepted) {
      run.trace.push_back(ll1);
      s0 = std::move(s2);
      if (alpha < -1.0) step_max = std::max(1.0, step_max / 4.0);
    }
    if (alpha == -1.0 && step_max == 1.0) step_max = 4.0;
  }
  run.state = std::move(s0);
  return run;
}

}  // namespace

EmFit fit_em(const SurvivalData& data, TransformParam r, const EmOptions& opts) {
  if (data.n() == 0) throw FitError("fit_em", "no subjects");
  EmFit fit;
  fit.r = r;
  fit.grid = event_grid(data, opts.left_support);
  EmMap map(data, r, fit.grid.times, true);
  EmRun run = run_em(map, {Eigen::VectorXd::Zero(data.p()), fit.grid.jumps}, opts.tol,
                     opts.max_iter, opts.accelerate);
  fit.beta = std::move(run.state.beta);
  fit.grid.jumps = std::move(run.state.jumps);
  fit.iterations = run.cycles;
  fit.evaluations = run.evaluations;
  fit.converged = run.converged;
  fit.loglik_trace = std::move(run.trace);
  fit.loglik_trace.push_back(observed_loglik(data, fit.beta, fit.grid, r));
  return fit;
}

JumpGrid profile_lambda(const SurvivalData& data, const Eigen::VectorXd& beta,
                        const JumpGrid& start, TransformParam r, double tol, int max_iter,
                        bool accelerate) {
  EmMap map(data, r, start.times, false);
  EmRun run = run_em(map, {beta, start.jumps}, tol, max_iter, accelerate);
  if (!run.converged) throw FitError("profile_lambda", "lambda profile did not converge");
  JumpGrid grid = start;
  grid.jumps = std::move(run.state.jumps);
  return grid;
}

}  // namespace dcssl

#include "dcssl/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dcssl/errors.hpp"

namespace dcssl {

namespace {

constexpr std::uint64_t kPilotStream = 0x7461755F70696C6FULL;  // "tau_pilo"

// -log Phi(w) without losing precision in either tail.
double neg_log_phi(double w) {
  const double half_erfc_pos = 0.5 * std::erfc(w / std::numbers::sqrt2);  // 1 - Phi(w)
  if (w > 0.0) return -std::log1p(-half_erfc_pos);
  return -std::log(0.5 * std::erfc(-w / std::numbers::sqrt2));
}

// Error draw log(G^{-1}(-log Phi(w), r)).
double eps_from_normal(double w, TransformParam r) {
  return std::log(transform::g_inv(neg_log_phi(w), r));
}

Eigen::MatrixXd covariate_factor(const SimConfig& cfg) {
  const int p = cfg.p();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(p, p, cfg.z_corr);
  cov.diagonal().setOnes();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("z_corr does not give a positive definite covariance");
  return llt.matrixL();
}

}  // namespace

int SimConfig::n_unlabeled() const {
  return static_cast<int>(std::llround(n_mult * static_cast<double>(n)));
}

void SimConfig::validate() const {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (!(n_mult >= 0.0)) throw std::invalid_argument("n_mult must be >= 0");
  if (!(cens_lo > 0.0 && cens_lo < cens_hi && cens_hi < 1.0))
    throw std::invalid_argument("censoring percentiles must satisfy 0 < cens_lo < cens_hi < 1");
  if (!(copula_rho > -1.0 && copula_rho < 1.0))
    throw std::invalid_argument("copula_rho must lie in (-1, 1)");
  if (beta_true.size() == 0 || beta_true.size() != gamma_true.size())
    throw std::invalid_argument("beta_true and gamma_true must be nonempty and of equal length");
  if (!(time_scale > 0.0)) throw std::invalid_argument("time_scale must be > 0");
  if (reps < 1) throw std::invalid_argument("reps must be >= 1");
  if (pilot_size < 100) throw std::invalid_argument("pilot_size must be >= 100");
  covariate_factor(*this);
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

TauPair percentiles_tau(const SimConfig& cfg) {
  static std::mutex mutex;
  static std::map<std::string, TauPair> cache;

  std::ostringstream key;
  key.precision(17);
  key << cfg.r.r() << '|' << cfg.beta_true.transpose() << '|' << cfg.z_corr << '|'
      << cfg.time_scale << '|' << cfg.cens_lo << '|' << cfg.cens_hi << '|' << cfg.seed << '|'
      << cfg.pilot_size;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key.str()); it != cache.end()) return it->second;
  }

  const Eigen::MatrixXd factor = covariate_factor(cfg);
  auto rng = make_stream(cfg.seed, kPilotStream);
  std::normal_distribution<double> normal;
  std::vector<double> times(cfg.pilot_size);
  Eigen::VectorXd e(cfg.p());
  for (auto& t : times) {
    for (int j = 0; j < cfg.p(); ++j) e[j] = normal(rng);
    const double lp = cfg.beta_true.dot(factor * e);
    t = cfg.time_scale * std::exp(-lp + eps_from_normal(normal(rng), cfg.r));
  }
  auto quantile = [&](double q) {
    const auto k = static_cast<std::size_t>(q * static_cast<double>(times.size() - 1));
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(k), times.end());
    return times[k];
  };
  const TauPair tau{quantile(cfg.cens_lo), quantile(cfg.cens_hi)};

  std::lock_guard lock(mutex);
  cache.emplace(key.str(), tau);
  return tau;
}

std::vector<LatentDraw> draw_latent(const SimConfig& cfg, std::uint64_t rep_index, int count,
                                    int* lu_resamples) {
  cfg.validate();
  const TauPair tau = percentiles_tau(cfg);
  const Eigen::MatrixXd factor = covariate_factor(cfg);
  const int p = cfg.p();
  const double rho = cfg.copula_rho;
  const double rho_c = std::sqrt(1.0 - rho * rho);

  auto rng = make_stream(cfg.seed, rep_index);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif_l(0.5 * tau.tau_l, 1.5 * tau.tau_l);
  std::uniform_real_distribution<double> unif_u(0.5 * tau.tau_r, 1.5 * tau.tau_r);

  std::vector<LatentDraw> out(static_cast<std::size_t>(count));
  Eigen::VectorXd e(p);
  int redraws = 0;
  for (auto& d : out) {
    for (int j = 0; j < p; ++j) e[j] = normal(rng);
    d.z = factor * e;
    d.w = normal(rng);
    d.w_star = rho * d.w + rho_c * normal(rng);
    d.eps = eps_from_normal(d.w, cfg.r);
    d.eps_star = eps_from_normal(d.w_star, cfg.r_star);
    d.t = cfg.time_scale * std::exp(-cfg.beta_true.dot(d.z) + d.eps);
    d.t_star = cfg.time_scale * std::exp(-cfg.gamma_true.dot(d.z) + d.eps_star);
    d.l = unif_l(rng);
    d.u = unif_u(rng);
    while (d.l >= d.u) {
      d.l = unif_l(rng);
      d.u = unif_u(rng);
      ++redraws;
    }
  }
  if (lu_resamples) *lu_resamples = redraws;
  return out;
}

GeneratedCohort gen_cohort(const SimConfig& cfg, std::uint64_t rep_index) {
  const int total = cfg.n + cfg.n_unlabeled();
  GeneratedCohort out;
  out.tau = percentiles_tau(cfg);
  const auto draws = draw_latent(cfg, rep_index, total, &out.lu_resamples);

  std::vector<SubjectRecord> records;
  records.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const LatentDraw& d = draws[static_cast<std::size_t>(i)];
    SubjectRecord rec;
    rec.id = std::to_string(i + 1);
    rec.labeled = i < cfg.n;
    rec.l = d.l;
    rec.u = d.u;
    rec.z = d.z;
    const Observation obs_star = derive_observation(d.t_star, d.l, d.u);
    rec.x_star = obs_star.x;
    rec.delta_star = obs_star.delta;
    if (rec.labeled) {
      const Observation obs = derive_observation(d.t, d.l, d.u);
      rec.x = obs.x;
      rec.delta = obs.delta;
    }
    records.push_back(std::move(rec));
  }
  out.cohort = Cohort(std::move(records), cfg.p());
  return out;
}

}  // namespace dcssl

namespace dcssl {

namespace {

bool dominance_holds(const SslResult& res) {
  const auto* s1 = res.find(Method::SSL1);
  const auto* s2 = res.find(Method::SSL2);
  const auto* s3 = res.find(Method::SSL3);
  if (!s3) return true;
  for (const auto* other : {s1, s2}) {
    if (!other) continue;
    const Eigen::MatrixXd diff = other->cov - s3->cov;
    if ((diff.diagonal().array() < -1e-10).any()) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (diff + diff.transpose()),
                                                       Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) return false;
  }
  return true;
}

}  // namespace

double MCSummary::failure_rate() const {
  return replications > 0 ? static_cast<double>(failures) / replications : 0.0;
}

const MethodSummary& MCSummary::at(Method m) const {
  for (const auto& ms : methods)
    if (ms.method == m) return ms;
  throw std::out_of_range("method " + to_string(m) + " not in summary");
}

ReplicationRecord run_replication(const SimConfig& cfg, std::uint64_t rep, const SslConfig& ssl) {
  ReplicationRecord rec;
  rec.rep = rep;
  try {
    const GeneratedCohort gen = gen_cohort(cfg, rep);
    auto [labeled, unlabeled] = split(gen.cohort);
    rec.censoring = censoring_fractions(survival_view(labeled, Outcome::True));
    SslConfig config = ssl;
    config.r = cfg.r;
    SslResult res = run_ssl(labeled, unlabeled, config);
    rec.dominance_ok = dominance_holds(res);
    rec.estimates = std::move(res.estimates);
    rec.diagnostics = std::move(res.diagnostics);
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

MCSummary summarize(const SimConfig& cfg, const std::vector<ReplicationRecord>& records) {
  MCSummary s;
  s.config = cfg;
  s.replications = static_cast<int>(records.size());
  std::vector<const ReplicationRecord*> ok;
  for (const auto& r : records) {
    if (r.ok) ok.push_back(&r);
    else ++s.failures;
  }
  if (ok.empty()) return s;

  const Eigen::Index p = cfg.beta_true.size();
  const double count = static_cast<double>(ok.size());
  std::vector<double> ese_sl(static_cast<std::size_t>(p), 0.0);
  for (const auto& est : ok.front()->estimates) {
    MethodSummary ms;
    ms.method = est.method;
    for (Eigen::Index j = 0; j < p; ++j) {
      double sum = 0.0, sum_se = 0.0, covered = 0.0;
      std::vector<double> values;
      for (const auto* r : ok) {
        const AugmentedEstimate* e = nullptr;
        for (const auto& cand : r->estimates)
          if (cand.method == est.method) e = &cand;
        if (!e) throw std::logic_error("replications report different methods");
        values.push_back(e->beta[j]);
        sum += e->beta[j];
        sum_se += e->se[j];
        const auto [lo, hi] = e->ci95[static_cast<std::size_t>(j)];
        if (lo <= cfg.beta_true[j] && cfg.beta_true[j] <= hi) covered += 1.0;
      }
      const double mean = sum / count;
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      CoefSummary c;
      c.bias = mean - cfg.beta_true[j];
      c.se = values.size() > 1 ? std::sqrt(ss / (count - 1.0)) : std::nan("");
      c.ese = sum_se / count;
      c.cp = covered / count;
      if (est.method == Method::SL) ese_sl[static_cast<std::size_t>(j)] = c.ese;
      c.re = ese_sl[static_cast<std::size_t>(j)] / c.ese;
      ms.coef.push_back(c);
    }
    s.methods.push_back(std::move(ms));
  }
  return s;
}

MCResult run_mc(const SimConfig& cfg, const McOptions& opts) {
  cfg.validate();
  percentiles_tau(cfg);  // fill the cache before the workers start
  const int reps = cfg.reps;
  std::vector<ReplicationRecord> records(static_cast<std::size_t>(reps));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next.fetch_add(1); k < reps; k = next.fetch_add(1))
      records[static_cast<std::size_t>(k)] = run_replication(cfg, static_cast<std::uint64_t>(k), opts.ssl);
  };
  const int threads = std::max(1, std::min(opts.threads, reps));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  MCResult out;
  out.summary = summarize(cfg, records);
  out.records = std::move(records);
  return out;
}

}  // namespace dcssl

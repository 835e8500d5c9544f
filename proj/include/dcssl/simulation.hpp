#pragma once

// Data-generating process of the simulation study and the Monte Carlo
// harness that summarizes repeated estimation into Bias/SE/ESE/CP/RE.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dcssl/core_data.hpp"
#include "dcssl/ssl.hpp"
#include "dcssl/transform.hpp"

namespace dcssl {

struct SimConfig {
  int n = 200;
  double n_mult = 5.0;
  TransformParam r{0.0};
  TransformParam r_star{0.0};
  Eigen::VectorXd beta_true = (Eigen::VectorXd(2) << 0.5, -0.3).finished();
  Eigen::VectorXd gamma_true = (Eigen::VectorXd(2) << -0.3, 0.7).finished();
  double copula_rho = 0.85;
  double z_corr = 0.3;
  double cens_lo = 0.20;
  double cens_hi = 0.80;
  double time_scale = 2.0;
  std::uint64_t seed = 20240601;
  int reps = 500;
  std::size_t pilot_size = 1'000'000;

  int p() const { return static_cast<int>(beta_true.size()); }
  int n_unlabeled() const;
  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Engine for substream `stream` of `seed`; reproducible in isolation.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream);

struct TauPair {
  double tau_l;
  double tau_r;
};

/// cens_lo / cens_hi quantiles of the marginal event-time distribution, from a
/// pilot sample with its own seed. Cached per configuration.
TauPair percentiles_tau(const SimConfig& cfg);

struct GeneratedCohort {
  Cohort cohort;
  TauPair tau;
  int lu_resamples = 0;  // (L, U) pairs redrawn because L >= U
};

/// Latent quantities of one simulated subject.
struct LatentDraw {
  Eigen::VectorXd z;
  double w = 0.0, w_star = 0.0;  // copula normals
  double eps = 0.0, eps_star = 0.0;
  double t = 0.0, t_star = 0.0;
  double l = 0.0, u = 0.0;
};

/// The first `count` subjects of replication `rep_index`; gen_cohort builds
/// its records from exactly these draws.
std::vector<LatentDraw> draw_latent(const SimConfig& cfg, std::uint64_t rep_index, int count,
                                    int* lu_resamples = nullptr);

/// Replication `rep_index` of the design: first n records labeled.
GeneratedCohort gen_cohort(const SimConfig& cfg, std::uint64_t rep_index);

struct CoefSummary {
  double bias = 0.0;
  double se = 0.0;   // Monte Carlo SD of the estimates
  double ese = 0.0;  // mean estimated SE
  double cp = 0.0;   // 95% CI coverage fraction
  double re = 0.0;   // mean ESE(SL) / mean ESE(method)
};

struct MethodSummary {
  Method method;
  std::vector<CoefSummary> coef;
};

struct ReplicationRecord {
  std::uint64_t rep = 0;
  bool ok = false;
  std::string error;
  std::vector<AugmentedEstimate> estimates;
  std::vector<StageDiagnostics> diagnostics;
  CensoringFractions censoring{0, 0, 0};
  bool dominance_ok = true;  // SSL3 covariance dominance on this replication
};

struct MCSummary {
  SimConfig config;
  std::vector<MethodSummary> methods;
  int replications = 0;
  int failures = 0;

  double failure_rate() const;
  bool failure_gate_ok() const { return failure_rate() <= 0.02; }
  const MethodSummary& at(Method m) const;
};

struct MCResult {
  MCSummary summary;
  std::vector<ReplicationRecord> records;  // sorted by rep
};

struct McOptions {
  int threads = 1;
  SslConfig ssl;
};

/// Runs cfg.reps replications (in parallel when threads > 1) and summarizes.
/// Output is identical for any thread count.
MCResult run_mc(const SimConfig& cfg, const McOptions& opts = {});

/// Runs one replication; failures are captured in the record.
ReplicationRecord run_replication(const SimConfig& cfg, std::uint64_t rep, const SslConfig& ssl);

MCSummary summarize(const SimConfig& cfg, const std::vector<ReplicationRecord>& records);

}  // namespace dcssl

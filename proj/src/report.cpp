#include "dcssl/report.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#ifndef DCSSL_VERSION
#define DCSSL_VERSION "unknown"
#endif

namespace dcssl {

using nlohmann::json;

namespace {

json vec(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(std::isfinite(v[i]) ? json(v[i]) : json());
  return out;
}

json mat(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec(m.row(i).transpose()));
  return out;
}

json num(double x) { return std::isfinite(x) ? json(x) : json(); }

Eigen::VectorXd to_vec(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& what) {
  if (!j.is_object()) throw std::invalid_argument(what + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown " + what + " key '" + key + "'");
}

constexpr Method kMethods[] = {Method::SL, Method::SSL1, Method::SSL2, Method::SSL3};

}  // namespace

std::string version() { return DCSSL_VERSION; }

json to_json(const SimConfig& cfg) {
  return {{"n", cfg.n},
          {"n_mult", cfg.n_mult},
          {"n_unlabeled", cfg.n_unlabeled()},
          {"r", cfg.r.r()},
          {"r_star", cfg.r_star.r()},
          {"beta", vec(cfg.beta_true)},
          {"gamma", vec(cfg.gamma_true)},
          {"copula_rho", cfg.copula_rho},
          {"z_corr", cfg.z_corr},
          {"cens_lo", cfg.cens_lo},
          {"cens_hi", cfg.cens_hi},
          {"time_scale", cfg.time_scale},
          {"seed", cfg.seed},
          {"reps", cfg.reps},
          {"pilot_size", cfg.pilot_size}};
}

json to_json(const SslConfig& cfg) {
  return {{"r", cfg.r.r()},
          {"model4", cfg.use_model4},
          {"model5", cfg.use_model5},
          {"h", to_string(cfg.h)},
          {"em", {{"tol", cfg.em.tol}, {"max_iter", cfg.em.max_iter},
                  {"accelerate", cfg.em.accelerate}, {"left_support", cfg.em.left_support}}},
          {"composite", {{"tol", cfg.composite.tol}, {"max_iter", cfg.composite.max_iter}}},
          {"influence", {{"rel_step", cfg.influence.rel_step},
                         {"profile_tol", cfg.influence.profile_tol}}}};
}

json to_json(const AugmentedEstimate& est) {
  json ci = json::array();
  for (const auto& [lo, hi] : est.ci95) ci.push_back({num(lo), num(hi)});
  return {{"available", true},
          {"beta", vec(est.beta)},
          {"se", vec(est.se)},
          {"ci95", ci},
          {"re", vec(est.re_vs_sl)},
          {"cov", mat(est.cov)},
          {"ridge_applied", est.ridge_applied}};
}

json to_json(const StageDiagnostics& diag) {
  json j = {{"stage", diag.stage}, {"iterations", diag.iterations}, {"converged", diag.converged}};
  if (diag.grid_size > 0) j["K_n"] = diag.grid_size;
  j["score_norm"] = num(diag.score_norm);
  j["loglik"] = num(diag.loglik);
  return j;
}

json to_json(const SslResult& res) {
  json j;
  j["n"] = res.n;
  j["n_unlabeled"] = res.n_unlabeled;
  json est = json::object();
  for (Method m : kMethods) {
    if (const auto* e = res.find(m))
      est[to_string(m)] = to_json(*e);
    else
      est[to_string(m)] = {{"available", false}};
  }
  j["estimates"] = est;
  json diags = json::array();
  for (const auto& d : res.diagnostics) diags.push_back(to_json(d));
  j["diagnostics"] = diags;
  if (res.gamma1_hat) j["gamma1_hat"] = vec(*res.gamma1_hat);
  if (res.gamma1_bar) j["gamma1_bar"] = vec(*res.gamma1_bar);
  if (res.gamma2_hat) j["gamma2_hat"] = vec(*res.gamma2_hat);
  if (res.gamma2_bar) j["gamma2_bar"] = vec(*res.gamma2_bar);
  return j;
}

json to_json(const ReplicationRecord& rec) {
  json j = {{"rep", rec.rep}, {"ok", rec.ok}};
  if (!rec.ok) {
    j["error"] = rec.error;
    return j;
  }
  json est = json::object();
  for (const auto& e : rec.estimates)
    est[to_string(e.method)] = {{"beta", vec(e.beta)}, {"se", vec(e.se)}};
  j["estimates"] = est;
  json diags = json::array();
  for (const auto& d : rec.diagnostics) diags.push_back(to_json(d));
  j["diagnostics"] = diags;
  j["censoring"] = {{"exact", rec.censoring.exact}, {"right", rec.censoring.right},
                    {"left", rec.censoring.left}};
  j["dominance_ok"] = rec.dominance_ok;
  return j;
}

json to_json(const MCSummary& s) {
  json methods = json::object();
  for (const auto& m : s.methods) {
    json coefs = json::array();
    for (const auto& c : m.coef)
      coefs.push_back({{"bias", num(c.bias)}, {"se", num(c.se)}, {"ese", num(c.ese)},
                       {"cp", num(c.cp)}, {"re", num(c.re)}});
    methods[to_string(m.method)] = coefs;
  }
  return {{"replications", s.replications},
          {"failures", s.failures},
          {"failure_rate", s.failure_rate()},
          {"failure_gate_ok", s.failure_gate_ok()},
          {"methods", methods}};
}

SimConfig sim_config_from_json(const json& j, SimConfig cfg) {
  reject_unknown(j, {"n", "n_mult", "n_unlabeled", "r", "r_star", "beta", "gamma", "copula_rho",
                     "z_corr", "cens_lo", "cens_hi", "time_scale", "seed", "reps", "pilot_size"},
                 "simulation");
  if (j.contains("n")) cfg.n = j["n"].get<int>();
  if (j.contains("n_mult")) cfg.n_mult = j["n_mult"].get<double>();
  if (j.contains("r")) cfg.r = TransformParam(j["r"].get<double>());
  if (j.contains("r_star")) cfg.r_star = TransformParam(j["r_star"].get<double>());
  if (j.contains("beta")) cfg.beta_true = to_vec(j["beta"]);
  if (j.contains("gamma")) cfg.gamma_true = to_vec(j["gamma"]);
  if (j.contains("copula_rho")) cfg.copula_rho = j["copula_rho"].get<double>();
  if (j.contains("z_corr")) cfg.z_corr = j["z_corr"].get<double>();
  if (j.contains("cens_lo")) cfg.cens_lo = j["cens_lo"].get<double>();
  if (j.contains("cens_hi")) cfg.cens_hi = j["cens_hi"].get<double>();
  if (j.contains("time_scale")) cfg.time_scale = j["time_scale"].get<double>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("reps")) cfg.reps = j["reps"].get<int>();
  if (j.contains("pilot_size")) cfg.pilot_size = j["pilot_size"].get<std::size_t>();
  return cfg;
}

SslConfig ssl_config_from_json(const json& j, SslConfig cfg) {
  reject_unknown(j, {"r", "model4", "model5", "h", "em", "composite", "influence"}, "fit");
  if (j.contains("r")) cfg.r = TransformParam(j["r"].get<double>());
  if (j.contains("model4")) cfg.use_model4 = j["model4"].get<bool>();
  if (j.contains("model5")) cfg.use_model5 = j["model5"].get<bool>();
  if (j.contains("h")) cfg.h = parse_h_transform(j["h"].get<std::string>());
  if (j.contains("em")) {
    const json& e = j["em"];
    reject_unknown(e, {"tol", "max_iter", "accelerate", "left_support"}, "em");
    if (e.contains("tol")) cfg.em.tol = e["tol"].get<double>();
    if (e.contains("max_iter")) cfg.em.max_iter = e["max_iter"].get<int>();
    if (e.contains("accelerate")) cfg.em.accelerate = e["accelerate"].get<bool>();
    if (e.contains("left_support")) cfg.em.left_support = e["left_support"].get<bool>();
  }
  if (j.contains("composite")) {
    const json& c = j["composite"];
    reject_unknown(c, {"tol", "max_iter"}, "composite");
    if (c.contains("tol")) cfg.composite.tol = c["tol"].get<double>();
    if (c.contains("max_iter")) cfg.composite.max_iter = c["max_iter"].get<int>();
  }
  if (j.contains("influence")) {
    const json& c = j["influence"];
    reject_unknown(c, {"rel_step", "profile_tol"}, "influence");
    if (c.contains("rel_step")) cfg.influence.rel_step = c["rel_step"].get<double>();
    if (c.contains("profile_tol")) cfg.influence.profile_tol = c["profile_tol"].get<double>();
  }
  return cfg;
}

void write_summary_csv(const MCSummary& s, const json& config, std::ostream& out) {
  out << "# version " << version() << "\n";
  out << "# config " << config.dump() << "\n";
  out << "# replications " << s.replications << " failures " << s.failures << "\n";
  out << "Method,coefficient,Bias,SE,ESE,CP,RE\n";
  auto field = [](double x, int digits) {
    if (!std::isfinite(x)) return std::string("NA");
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << x;
    return os.str();
  };
  for (const auto& m : s.methods) {
    for (std::size_t j = 0; j < m.coef.size(); ++j) {
      const auto& c = m.coef[j];
      out << to_string(m.method) << ",beta" << (j + 1) << ',' << field(c.bias, 4) << ','
          << field(c.se, 4) << ',' << field(c.ese, 4) << ',' << field(100.0 * c.cp, 1) << ','
          << field(c.re, 4) << "\n";
    }
  }
}

}  // namespace dcssl

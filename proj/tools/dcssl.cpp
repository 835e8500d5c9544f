// dcssl: simulate cohorts, fit the SL/SSL estimators, run Monte Carlo cells.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "dcssl/errors.hpp"
#include "dcssl/report.hpp"
#include "dcssl/simulation.hpp"
#include "dcssl/ssl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dcssl;

namespace {

enum Exit { kOk = 0, kGateFailed = 1, kUsage = 2, kFitFailed = 3, kIo = 4 };

struct Flags {
  std::string input, output, config;
  std::optional<std::uint64_t> seed;
  std::optional<double> r, r_star, n_mult, tol;
  std::optional<int> n, reps, max_iter;
  std::optional<bool> model4, model5;
  std::optional<std::string> h;
  int threads = std::max(1u, std::thread::hardware_concurrency());
  std::uint64_t rep = 0;
  bool grid = false;
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return json::parse(in);
}

// defaults < config file < flags
SimConfig resolve_sim(const Flags& f, const json& file) {
  SimConfig cfg = file.contains("simulation") ? sim_config_from_json(file["simulation"]) : SimConfig{};
  if (f.seed) cfg.seed = *f.seed;
  if (f.r) cfg.r = TransformParam(*f.r);
  if (f.r_star) cfg.r_star = TransformParam(*f.r_star);
  if (f.n) cfg.n = *f.n;
  if (f.n_mult) cfg.n_mult = *f.n_mult;
  if (f.reps) cfg.reps = *f.reps;
  cfg.validate();
  return cfg;
}

SslConfig resolve_fit(const Flags& f, const json& file) {
  SslConfig cfg = file.contains("fit") ? ssl_config_from_json(file["fit"]) : SslConfig{};
  if (f.r) cfg.r = TransformParam(*f.r);
  if (f.model4) cfg.use_model4 = *f.model4;
  if (f.model5) cfg.use_model5 = *f.model5;
  if (f.h) cfg.h = parse_h_transform(*f.h);
  if (f.tol) cfg.em.tol = *f.tol;
  if (f.max_iter) cfg.em.max_iter = *f.max_iter;
  return cfg;
}

// write to a temporary sibling first so a failed run leaves no partial file
template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    fn(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

void print_fractions(const char* label, const CensoringFractions& c) {
  std::printf("%-22s exact %.3f  right %.3f  left %.3f\n", label, c.exact, c.right, c.left);
}

int cmd_simulate(const Flags& f) {
  const json file = read_config(f.config);
  const SimConfig cfg = resolve_sim(f, file);
  const GeneratedCohort gen = gen_cohort(cfg, f.rep);
  json meta = {{"simulation", to_json(cfg)}, {"rep", f.rep},
               {"tau_l", gen.tau.tau_l}, {"tau_r", gen.tau.tau_r}};
  write_file(f.output, [&](std::ostream& out) {
    out << "# version " << version() << "\n# config " << meta.dump() << "\n";
    write_cohort(gen.cohort, out);
  });
  auto [labeled, unlabeled] = split(gen.cohort);
  std::printf("wrote %zu records (%zu labeled) to %s\n", gen.cohort.size(), labeled.size(),
              f.output.c_str());
  print_fractions("labeled T:", censoring_fractions(survival_view(labeled, Outcome::True)));
  print_fractions("all T*:", censoring_fractions(survival_view(gen.cohort, Outcome::Surrogate)));
  std::printf("tau_l %.6g  tau_r %.6g  (L,U) redraws %d\n", gen.tau.tau_l, gen.tau.tau_r,
              gen.lu_resamples);
  return kOk;
}

int cmd_fit(const Flags& f) {
  const json file = read_config(f.config);
  const SslConfig cfg = resolve_fit(f, file);
  const Cohort cohort = load_cohort(f.input);
  auto [labeled, unlabeled] = split(cohort);
  json doc = {{"version", version()},
              {"config", {{"input", f.input}, {"fit", to_json(cfg)}}}};
  int code = kOk;
  try {
    const SslResult res = run_ssl(labeled, unlabeled, cfg);
    doc["result"] = to_json(res);
    for (const auto& e : res.estimates) {
      std::printf("%-5s", to_string(e.method).c_str());
      for (Eigen::Index j = 0; j < e.beta.size(); ++j)
        std::printf("  b%ld %.4f (se %.4f, re %.3f)", static_cast<long>(j + 1), e.beta[j], e.se[j],
                    e.re_vs_sl[j]);
      std::printf("\n");
    }
  } catch (const FitError& e) {
    doc["error"] = {{"stage", e.stage()}, {"message", e.what()}};
    std::fprintf(stderr, "fit failed at stage %s: %s\n", e.stage().c_str(), e.what());
    code = kFitFailed;
  }
  write_file(f.output, [&](std::ostream& out) { out << doc.dump(2) << "\n"; });
  return code;
}

struct CellOutcome {
  bool gate_ok;
};

CellOutcome run_cell(const SimConfig& cfg, const SslConfig& ssl, int threads,
                     const std::string& prefix) {
  McOptions opts;
  opts.threads = threads;
  opts.ssl = ssl;
  const MCResult res = run_mc(cfg, opts);
  const json config = {{"simulation", to_json(cfg)}, {"fit", to_json(ssl)}};
  write_file(prefix + ".csv",
             [&](std::ostream& out) { write_summary_csv(res.summary, config, out); });
  write_file(prefix + ".json", [&](std::ostream& out) {
    json reps = json::array();
    for (const auto& r : res.records) reps.push_back(to_json(r));
    json doc = {{"version", version()}, {"config", config}, {"summary", to_json(res.summary)},
                {"replications", reps}};
    out << doc.dump(1) << "\n";
  });
  std::ostringstream table;
  write_summary_csv(res.summary, config, table);
  std::string line;
  std::istringstream lines(table.str());
  while (std::getline(lines, line))
    if (line.empty() || line[0] != '#') std::cout << line << "\n";
  std::printf("r=%g r*=%g n=%d: %d replications, %d failed (%.1f%%)%s\n", cfg.r.r(),
              cfg.r_star.r(), cfg.n, res.summary.replications, res.summary.failures,
              100.0 * res.summary.failure_rate(),
              res.summary.failure_gate_ok() ? "" : "  FAILURE GATE EXCEEDED");
  return {res.summary.failure_gate_ok()};
}

int cmd_mc(const Flags& f) {
  const json file = read_config(f.config);
  const SimConfig base = resolve_sim(f, file);
  SslConfig ssl = resolve_fit(f, file);
  bool ok = true;
  if (!f.grid) {
    ssl.r = base.r;
    ok = run_cell(base, ssl, f.threads, f.output).gate_ok;
  } else {
    for (double r : {0.0, 1.0})
      for (double rs : {0.0, 1.0})
        for (int n : {200, 400}) {
          SimConfig cfg = base;
          cfg.r = TransformParam(r);
          cfg.r_star = TransformParam(rs);
          cfg.n = n;
          ssl.r = cfg.r;
          std::ostringstream name;
          name << f.output << "_r" << r << "_rs" << rs << "_n" << n;
          ok = run_cell(cfg, ssl, f.threads, name.str()).gate_ok && ok;
        }
  }
  return ok ? kOk : kGateFailed;
}

void add_sim_flags(CLI::App* app, Flags& f) {
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--r", f.r, "transformation index r of the true outcome")->check(CLI::NonNegativeNumber);
  app->add_option("--r-star", f.r_star, "transformation index of the surrogate")->check(CLI::NonNegativeNumber);
  app->add_option("--n", f.n, "labeled sample size")->check(CLI::PositiveNumber);
  app->add_option("--n-mult", f.n_mult, "unlabeled size as a multiple of n")->check(CLI::NonNegativeNumber);
}

void add_fit_flags(CLI::App* app, Flags& f) {
  app->add_flag("--model4,!--no-model4", f.model4, "NPMLE working model for the surrogate");
  app->add_flag("--model5,!--no-model5", f.model5, "logistic + Cox composite working model");
  app->add_option("--h", f.h, "transform of L in the logistic part")
      ->check(CLI::IsMember({"log", "identity"}));
  app->add_option("--tol", f.tol, "EM tolerance")->check(CLI::PositiveNumber);
  app->add_option("--max-iter", f.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised estimation for doubly censored survival data"};
  app.set_version_flag("--version", version());
  // "-h" stays free for nothing: --h names the L transform
  app.set_help_flag("--help", "print this help message and exit");
  app.require_subcommand(1);
  Flags f;

  auto* sim = app.add_subcommand("simulate", "generate one cohort of the simulation design");
  sim->add_option("--output", f.output, "cohort CSV")->required();
  sim->add_option("--rep", f.rep, "replication index of the cohort");
  sim->add_option("--config", f.config, "JSON config file");
  add_sim_flags(sim, f);

  auto* fit = app.add_subcommand("fit", "fit SL and SSL estimators to a cohort CSV");
  fit->add_option("--input", f.input, "cohort CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--output", f.output, "result JSON")->required();
  fit->add_option("--config", f.config, "JSON config file");
  fit->add_option("--r", f.r, "transformation index r")->check(CLI::NonNegativeNumber);
  add_fit_flags(fit, f);

  auto* mc = app.add_subcommand("mc", "Monte Carlo study; writes <output>.csv and <output>.json");
  mc->add_option("--output", f.output, "output prefix")->required();
  mc->add_option("--reps", f.reps, "replications")->check(CLI::PositiveNumber);
  mc->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  mc->add_option("--config", f.config, "JSON config file");
  mc->add_flag("--grid", f.grid, "all (r, r*) in {0,1}^2 at n in {200, 400}");
  add_sim_flags(mc, f);
  add_fit_flags(mc, f);

  CLI11_PARSE(app, argc, argv);
  try {
    if (sim->parsed()) return cmd_simulate(f);
    if (fit->parsed()) return cmd_fit(f);
    if (mc->parsed()) return cmd_mc(f);
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kUsage;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kUsage;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  }
  return kUsage;
}

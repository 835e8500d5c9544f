#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>
#include <sstream>

#include "dcssl/composite.hpp"
#include "dcssl/em_npmle.hpp"
#include "dcssl/errors.hpp"
#include "dcssl/report.hpp"
#include "dcssl/simulation.hpp"
#include "dcssl/ssl.hpp"

namespace py = pybind11;
using namespace dcssl;
using nlohmann::json;

namespace {

SurvivalData make_data(const Eigen::VectorXd& time, const std::vector<int>& code,
                       const Eigen::VectorXd& l, const Eigen::MatrixXd& z) {
  const auto n = time.size();
  if (static_cast<Eigen::Index>(code.size()) != n || l.size() != n || z.rows() != n)
    throw DataError("time, code, l and z must have the same number of rows");
  SurvivalData d;
  d.time = time;
  d.l = l;
  d.z = z;
  d.code.reserve(code.size());
  for (int c : code) d.code.push_back(censoring_from_int(c));
  return d;
}

json parse_or_empty(const std::string& s) { return s.empty() ? json::object() : json::parse(s); }

}  // namespace

PYBIND11_MODULE(_dcssl, m) {
  m.doc() = "Semi-supervised estimation for doubly censored survival data";
  m.attr("__version__") = version();

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  m.def("g", [](double x, double r) { return transform::g(x, TransformParam(r)); }, py::arg("x"),
        py::arg("r"));
  m.def("g_inv", [](double y, double r) { return transform::g_inv(y, TransformParam(r)); },
        py::arg("y"), py::arg("r"));
  m.def("frailty_moments",
        [](double v, double r) {
          const auto fm = transform::frailty_moments(v, TransformParam(r));
          return py::make_tuple(fm.m0, fm.m1, fm.m2);
        },
        py::arg("v"), py::arg("r"));

  m.def("fit_em",
        [](const Eigen::VectorXd& time, const std::vector<int>& code, const Eigen::MatrixXd& z,
           double r, double tol, int max_iter) {
          SurvivalData d = make_data(time, code, Eigen::VectorXd::Zero(time.size()), z);
          EmOptions opts;
          opts.tol = tol;
          opts.max_iter = max_iter;
          EmFit fit;
          {
            py::gil_scoped_release release;
            fit = fit_em(d, TransformParam(r), opts);
          }
          py::dict out;
          out["beta"] = fit.beta;
          out["times"] = fit.grid.times;
          out["jumps"] = fit.grid.jumps;
          out["loglik"] = fit.loglik();
          out["loglik_trace"] = fit.loglik_trace;
          out["iterations"] = fit.iterations;
          out["converged"] = fit.converged;
          return out;
        },
        py::arg("time"), py::arg("code"), py::arg("z"), py::arg("r") = 0.0,
        py::arg("tol") = 1e-8, py::arg("max_iter") = 20000,
        "NPMLE of the transformation model; codes 1 exact, 2 right, 3 left.");

  m.def("fit_composite",
        [](const Eigen::VectorXd& time, const std::vector<int>& code, const Eigen::VectorXd& l,
           const Eigen::MatrixXd& z, const std::string& h) {
          SurvivalData d = make_data(time, code, l, z);
          const DesignV design = build_design(d, parse_h_transform(h));
          const CompositeFit fit = fit_composite(d, design);
          py::dict out;
          out["theta"] = fit.theta;
          out["gamma"] = fit.gamma();
          out["neg_loglik"] = fit.neg_loglik;
          out["score_norm"] = fit.score_norm;
          out["converged"] = fit.converged;
          out["diagnostic"] = fit.diagnostic;
          return out;
        },
        py::arg("time"), py::arg("code"), py::arg("l"), py::arg("z"), py::arg("h") = "log");

  m.def("simulate_csv",
        [](const std::string& path, const std::string& config, std::uint64_t rep) {
          const SimConfig cfg = sim_config_from_json(parse_or_empty(config));
          const GeneratedCohort gen = gen_cohort(cfg, rep);
          save_cohort(gen.cohort, path);
          return static_cast<int>(gen.cohort.size());
        },
        py::arg("path"), py::arg("config") = "", py::arg("rep") = 0,
        "Writes one simulated cohort; config is a JSON object of simulation fields.");

  m.def("fit_csv",
        [](const std::string& path, const std::string& config) {
          const SslConfig cfg = ssl_config_from_json(parse_or_empty(config));
          const Cohort cohort = load_cohort(path);
          auto [labeled, unlabeled] = split(cohort);
          SslResult res;
          {
            py::gil_scoped_release release;
            res = run_ssl(labeled, unlabeled, cfg);
          }
          return to_json(res).dump();
        },
        py::arg("path"), py::arg("config") = "", "Runs the SL/SSL pipeline; returns JSON text.");

  m.def("run_mc",
        [](const std::string& config, int threads) {
          const json j = parse_or_empty(config);
          const SimConfig cfg = sim_config_from_json(j);
          McOptions opts;
          opts.threads = threads;
          opts.ssl.r = cfg.r;
          MCResult res;
          {
            py::gil_scoped_release release;
            res = run_mc(cfg, opts);
          }
          return to_json(res.summary).dump();
        },
        py::arg("config") = "", py::arg("threads") = 1, "Monte Carlo summary as JSON text.");
}

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ccopf/errors.hpp"
#include "ccopf/estimation.hpp"
#include "ccopf/experiment.hpp"
#include "ccopf/normal.hpp"
#include "ccopf/pwl.hpp"

namespace py = pybind11;
using namespace ccopf;

namespace {

RunConfig parse_config(const std::string& text) {
  auto c = config_from_json(nlohmann::json::parse(text));
  c.validate();
  return c;
}

std::string outcome_json(const ApproachOutcome& o, const GridCase& grid) {
  nlohmann::json j;
  j["approach"] = to_string(o.approach);
  j["fit_failed"] = o.fit_failed;
  j["status"] = o.fit_failed ? "fit_failed" : to_string(o.solution.status);
  j["solution"] = solution_to_json(o.solution, grid, true);
  j["risk"] = risk_to_json(o.risk);
  j["omega_loglik"] = o.omega_loglik;
  j["audit_min"] = o.optimal() ? nlohmann::json(o.audit_min) : nlohmann::json(nullptr);
  j["mean_conditions_clean"] = o.mean_conditions.clean();
  j["fit_time"] = o.fit.fit_time;
  return j.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Chance-constrained DC-OPF core";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

  m.def("normal_cdf", &normal_cdf);

  m.def("build_pwl", [](double delta) { return pwl_to_json(build_pwl(delta)).dump(); }, py::arg("delta") = 0.002);

  m.def("ptdf", [](const std::string& case_path) { return compute_ptdf(load_case(case_path)).H; },
        py::arg("case_path"));

  m.def(
      "fit_gmm",
      [](const Eigen::MatrixXd& data, int components, const std::string& structure, int restarts, bool zero_mean,
         std::uint64_t seed) {
        EmOptions o;
        o.components = components;
        o.structure = covariance_structure_from_string(structure);
        o.restarts = restarts;
        o.zero_mean = zero_mean;
        o.seed = seed;
        py::gil_scoped_release release;
        const auto r = fit_gmm_em(data, o);
        nlohmann::json j{{"model", model_to_json(r.model)}, {"report", report_to_json(r.report)}};
        return j.dump();
      },
      py::arg("data"), py::arg("components") = 1, py::arg("structure") = "full", py::arg("restarts") = 10,
      py::arg("zero_mean") = false, py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const std::string& config, std::uint64_t seed) {
        const auto c = parse_config(config);
        py::gil_scoped_release release;
        const auto grid = load_case(c.case_path);
        const auto ptdf = compute_ptdf(grid);
        const auto data = make_dataset(grid, c.dataset);
        const auto run = run_single(grid, ptdf, data, c, seed);
        std::vector<std::string> out;
        for (const auto& o : run.outcomes) out.push_back(outcome_json(o, grid));
        return out;
      },
      py::arg("config"), py::arg("seed"));

  m.def(
      "experiment",
      [](const std::string& config, const std::string& output_dir) {
        auto c = parse_config(config);
        py::gil_scoped_release release;
        const auto grid = load_case(c.case_path);
        const auto r = run_experiment(c, grid);
        if (!output_dir.empty()) write_experiment(r, c, grid, output_dir);
        nlohmann::json j{{"loglik_wins", r.loglik_wins}, {"runs", r.runs.size()}};
        for (const auto& s : r.summary) {
          j["summary"].push_back({{"approach", to_string(s.approach)},
                                  {"runs", s.runs},
                                  {"optimal", s.optimal},
                                  {"infeasible", s.infeasible_count},
                                  {"failed", s.failed_count},
                                  {"mean_worst_case", s.mean_worst_case},
                                  {"var_worst_case", s.var_worst_case},
                                  {"mean_objective", s.mean_objective},
                                  {"mean_loglik", s.mean_loglik}});
        }
        return j.dump();
      },
      py::arg("config"), py::arg("output_dir") = "");
}

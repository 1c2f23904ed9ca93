// ccopf: command-line front end for the chance-constrained dispatch pipeline.
//
// Exit codes: 0 ok, 2 infeasible model, 3 invalid input, 4 backend failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ccopf/errors.hpp"
#include "ccopf/experiment.hpp"

namespace fs = std::filesystem;
using namespace ccopf;

namespace {

constexpr int kOk = 0;
constexpr int kInfeasible = 2;
constexpr int kInvalid = 3;
constexpr int kBackend = 4;

struct Overrides {
  std::string config;
  std::optional<std::string> case_path;
  std::optional<std::string> output;
  std::optional<double> epsilon;
  std::optional<int> K;
  std::optional<std::string> approach;
  std::optional<std::string> distribution;
  std::optional<std::string> dataset;
  std::optional<std::string> csv;
  std::optional<Eigen::Index> samples;
  std::optional<std::uint64_t> data_seed;
  std::vector<std::uint64_t> seeds;
  std::optional<double> delta;
  std::optional<int> restarts;
  std::optional<std::string> backend;
  bool zero_mean = false;
  bool verbose = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON run configuration");
  cmd->add_option("--case", o.case_path, "grid case JSON");
  cmd->add_option("-o,--output", o.output, "output directory");
  cmd->add_option("--epsilon", o.epsilon, "risk level in (0, 0.5)");
  cmd->add_option("-K,--components", o.K, "mixture components");
  cmd->add_option("--approach", o.approach, "classical, constraint-informed or both");
  cmd->add_option("--distribution", o.distribution, "gaussian or gmm");
  cmd->add_option("--dataset", o.dataset, "synthetic-G, synthetic-C or csv");
  cmd->add_option("--csv", o.csv, "CSV file for the csv dataset");
  cmd->add_option("--samples", o.samples, "synthetic sample count");
  cmd->add_option("--data-seed", o.data_seed, "seed of the synthetic dataset");
  cmd->add_option("--seeds", o.seeds, "split/fit seeds");
  cmd->add_option("--delta", o.delta, "PWL tolerance");
  cmd->add_option("--restarts", o.restarts, "EM restarts");
  cmd->add_option("--backend", o.backend, "solver backend (default: $CCOPF_SOLVER or ipm)");
  cmd->add_flag("--zero-mean", o.zero_mean, "fix all mixture means at zero");
  cmd->add_flag("-v,--verbose", o.verbose, "solver iteration log on stderr");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (const char* env = std::getenv("CCOPF_SOLVER"); env && *env && !o.backend) c.backend = env;
  if (o.case_path) c.case_path = *o.case_path;
  if (o.output) c.output_dir = *o.output;
  if (o.epsilon) c.epsilon = *o.epsilon;
  if (o.K) c.K = *o.K;
  if (o.approach) {
    c.approaches = *o.approach == "both" ? std::vector<Approach>{Approach::classical, Approach::constraint_informed}
                                         : std::vector<Approach>{approach_from_string(*o.approach)};
  }
  if (o.distribution) c.distribution = distribution_from_string(*o.distribution);
  if (o.dataset) c.dataset.kind = *o.dataset;
  if (o.csv) {
    c.dataset.kind = "csv";
    c.dataset.path = *o.csv;
  }
  if (o.samples) c.dataset.samples = *o.samples;
  if (o.data_seed) c.dataset.seed = *o.data_seed;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.delta) c.pwl_delta = *o.delta;
  if (o.restarts) c.restarts = *o.restarts;
  if (o.backend) c.backend = *o.backend;
  if (o.zero_mean) c.zero_mean = true;
  if (o.verbose) c.solver.verbose = true;
  if (c.case_path.empty()) throw ValidationError("no grid case given (--case or \"case\" in the config)");
  if (!fs::exists(c.case_path)) throw ValidationError("case file not found: " + c.case_path);
  if (c.dataset.kind == "csv" && !fs::exists(c.dataset.path)) {
    throw ValidationError("dataset file not found: " + c.dataset.path);
  }
  c.validate();
  make_solver(c.backend);
  return c;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path prepare_output(const RunConfig& c) {
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  write_json(dir / "effective_config.json", config_to_json(c));
  return dir;
}

std::string short_name(Approach a) { return a == Approach::classical ? "classical" : "ci"; }

// Dataset, split and PTDF for the first seed; shared by fit, solve and evaluate.
struct Prepared {
  GridCase grid;
  PtdfMatrix ptdf;
  ScenarioSet train;
  ScenarioSet holdout;
  std::uint64_t seed = 0;
};

Prepared prepare(const RunConfig& c) {
  Prepared p;
  p.grid = load_case(c.case_path);
  p.ptdf = compute_ptdf(p.grid);
  const auto data = make_dataset(p.grid, c.dataset);
  p.seed = c.seeds.front();
  std::tie(p.train, p.holdout) = split(data, {c.train_fraction, p.seed});
  return p;
}

void write_models(const FitOutcome& fit, Approach a, const GridCase& grid, const fs::path& dir) {
  const auto mdir = dir / "models" / short_name(a);
  fs::create_directories(mdir);
  auto reports = nlohmann::json::array();
  for (const auto& r : fit.reports) {
    auto j = report_to_json(r);
    reports.push_back(j);
  }
  if (a == Approach::classical) {
    write_json(mdir / "xi.json", model_to_json(*fit.inputs.xi_model));
    reports[0]["model"] = "xi.json";
  } else {
    write_json(mdir / "omega.json", model_to_json(fit.inputs.omega_model));
    reports[0]["model"] = "omega.json";
    for (std::size_t l = 0; l < grid.num_lines(); ++l) {
      const std::string name = "eta_" + std::to_string(grid.lines()[l].id) + ".json";
      write_json(mdir / name, model_to_json(fit.inputs.eta_models[l]));
      reports[l + 1]["model"] = name;
    }
  }
  write_json(mdir / "fit_reports.json", reports);
}

int status_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal:
      return kOk;
    case SolveStatus::infeasible:
      return kInfeasible;
    case SolveStatus::numerical_failure:
      return kBackend;
  }
  return kBackend;
}

int cmd_fit(const RunConfig& c) {
  const auto dir = prepare_output(c);
  const auto p = prepare(c);
  nlohmann::json timing;
  for (auto a : c.approaches) {
    const auto fit = fit_approach(p.grid, p.ptdf, p.train, a, c, p.seed);
    write_models(fit, a, p.grid, dir);
    timing[short_name(a)] = {{"fit_time", fit.fit_time}};
    std::cout << to_string(a) << ": " << fit.reports.size() << " model(s), " << fit.fit_time << " s\n";
  }
  write_json(dir / "timings.json", timing);
  return kOk;
}

// solve and evaluate share everything up to the risk report.
int cmd_solve(const RunConfig& c, bool evaluate, bool dump_program) {
  const auto dir = prepare_output(c);
  const auto p = prepare(c);
  nlohmann::json timing;
  int code = kOk;
  for (auto a : c.approaches) {
    const auto name = short_name(a);
    const auto fit = fit_approach(p.grid, p.ptdf, p.train, a, c, p.seed);
    write_models(fit, a, p.grid, dir);
    const auto mean = check_mean_conditions(p.grid, p.ptdf, fit.inputs);
    const auto built = build_model(p.grid, p.ptdf, fit.inputs, c.method(a));
    if (dump_program) write_json(dir / ("program_" + name + ".json"), program_to_json(built.program));
    const auto sol = solve(built, c.solver, c.backend);
    auto js = solution_to_json(sol, p.grid, false);
    js["approach"] = to_string(a);
    js["mean_conditions"] = {{"generator_pairs", mean.generator_pairs},
                             {"line_pairs", mean.line_pairs},
                             {"infeasible_a_priori", mean.infeasible_a_priori},
                             {"zero_mean_clears", mean.zero_mean_clears}};
    write_json(dir / ("solution_" + name + ".json"), js);
    timing[name] = {{"fit_time", fit.fit_time}, {"solve_time", sol.solve_time}, {"iterations", sol.iterations}};
    std::cout << to_string(a) << ": " << to_string(sol.status);
    if (sol.status == SolveStatus::optimal) std::cout << ", objective " << sol.objective;
    std::cout << ", " << sol.solve_time << " s\n";
    if (sol.status != SolveStatus::optimal) {
      if (!mean.clean()) std::cout << "  mean conditions flagged by the fitted parameters\n";
      code = std::max(code, status_code(sol.status));
      continue;
    }
    if (evaluate) {
      const auto risk = violation_rates(p.grid, p.ptdf, sol, p.holdout, c.epsilon);
      write_risk_csv(risk, dir / ("risk_" + name + ".csv"));
      write_json(dir / ("risk_" + name + ".json"), risk_to_json(risk));
      std::cout << "  worst-case violation " << risk.worst_case << " (epsilon " << c.epsilon << ", "
                << risk.holdout_size << " holdout samples)\n";
    }
  }
  write_json(dir / "timings.json", timing);
  return code;
}

int cmd_experiment(const RunConfig& c) {
  const auto dir = prepare_output(c);
  const auto grid = load_case(c.case_path);
  const auto result = run_experiment(c, grid);
  write_experiment(result, c, grid, dir);
  for (const auto& s : result.summary) {
    std::cout << to_string(s.approach) << ": " << s.optimal << "/" << s.runs << " optimal, " << s.infeasible_count
              << " infeasible, mean worst-case violation " << s.mean_worst_case << ", mean Omega log-likelihood "
              << s.mean_loglik << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained DC optimal power flow"};
  app.require_subcommand(1);

  Overrides fit_o, solve_o, eval_o, exp_o;
  auto* fit = app.add_subcommand("fit", "fit the uncertainty models and write them as JSON");
  add_overrides(fit, fit_o);
  auto* solve_cmd = app.add_subcommand("solve", "fit, build and solve the dispatch model");
  add_overrides(solve_cmd, solve_o);
  bool dump_program = false;
  solve_cmd->add_flag("--dump-program", dump_program, "also write the conic program as JSON");
  auto* eval = app.add_subcommand("evaluate", "solve and measure out-of-sample violation rates");
  add_overrides(eval, eval_o);
  auto* exp = app.add_subcommand("experiment", "run every seed of the config and aggregate");
  add_overrides(exp, exp_o);

  double delta = 0.002;
  std::string pwl_out;
  auto* pwl = app.add_subcommand("pwl", "print the piecewise-linear normal CDF bound");
  pwl->add_option("--delta", delta, "tolerance in (0, 0.5)");
  pwl->add_option("-o,--output", pwl_out, "write JSON here instead of stdout");

  std::string ptdf_case, ptdf_out;
  auto* ptdf = app.add_subcommand("ptdf", "print the PTDF matrix as CSV");
  ptdf->add_option("--case", ptdf_case, "grid case JSON")->required();
  ptdf->add_option("-o,--output", ptdf_out, "write CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*fit) return cmd_fit(resolve(fit_o));
    if (*solve_cmd) return cmd_solve(resolve(solve_o), false, dump_program);
    if (*eval) return cmd_solve(resolve(eval_o), true, false);
    if (*exp) return cmd_experiment(resolve(exp_o));
    if (*pwl) {
      const auto j = pwl_to_json(build_pwl(delta)).dump(2);
      if (pwl_out.empty()) {
        std::cout << j << '\n';
      } else {
        std::ofstream(pwl_out) << j << '\n';
      }
      return kOk;
    }
    if (*ptdf) {
      const auto grid = load_case(ptdf_case);
      const auto p = compute_ptdf(grid);
      std::ofstream file;
      if (!ptdf_out.empty()) file.open(ptdf_out);
      std::ostream& out = ptdf_out.empty() ? std::cout : file;
      out << "line";
      for (const auto& b : grid.buses()) out << ',' << b.id;
      out << '\n';
      char buf[40];
      for (std::size_t l = 0; l < grid.num_lines(); ++l) {
        out << grid.lines()[l].id;
        for (Eigen::Index i = 0; i < p.H.cols(); ++i) {
          std::snprintf(buf, sizeof buf, "%.12g", p.H(l, i));
          out << ',' << buf;
        }
        out << '\n';
      }
      return kOk;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kBackend;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBackend;
  }
  return kInvalid;
}

#include "ccopf/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "ccopf/errors.hpp"

namespace ccopf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string short_name(Approach a) { return a == Approach::classical ? "classical" : "ci"; }

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ParseError("config: unknown key '" + it.key() + "' in " + where);
  }
}

FitReport report_for(const GmmModel& model, const Eigen::MatrixXd& data, CovarianceStructure structure) {
  FitReport r;
  r.log_likelihood = gmm_loglik(model, data);
  r.bic = -2.0 * r.log_likelihood + free_parameters(model.dim, model.components(), structure, model.zero_mean) *
                                        std::log(static_cast<double>(data.rows()));
  r.iterations = 1;
  r.restarts_used = 1;
  r.converged = true;
  r.zero_mean = model.zero_mean;
  r.structure = structure;
  return r;
}

// Closed-form single Gaussian, or its zero-mean EM counterpart.
FitResult fit_gaussian(const Eigen::MatrixXd& data, bool zero_mean, std::uint64_t seed) {
  if (zero_mean) {
    EmOptions o;
    o.components = 1;
    o.restarts = 1;
    o.seed = seed;
    o.zero_mean = true;
    return fit_gmm_em(data, o);
  }
  FitResult r;
  r.model = fit_mle_gaussian(data);
  r.report = report_for(r.model, data, CovarianceStructure::full);
  return r;
}

}  // namespace

void RunConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ValidationError("epsilon must lie in (0, 0.5)");
  if (!(pwl_delta > 0.0 && pwl_delta < 0.5)) throw ValidationError("pwl_delta must lie in (0, 0.5)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must lie in (0, 1)");
  if (K < 1) throw ValidationError("K must be at least 1");
  if (distribution == Distribution::gaussian && K != 1) throw ValidationError("the gaussian method needs K = 1");
  if (restarts < 1) throw ValidationError("restarts must be at least 1");
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  if (approaches.empty()) throw ValidationError("at least one approach is required");
  if (eta_structures.empty()) throw ValidationError("eta_structures must not be empty");
  if (dataset.kind != "synthetic-G" && dataset.kind != "synthetic-C" && dataset.kind != "csv") {
    throw ValidationError("dataset kind must be synthetic-G, synthetic-C or csv");
  }
  if (dataset.kind != "csv" && dataset.samples < 2) throw ValidationError("dataset needs at least two samples");
  if (dataset.kind == "synthetic-G" && dataset.sigma < 0.0) throw ValidationError("sigma must be non-negative");
  if (dataset.kind == "synthetic-C" && !(dataset.gamma > 0.0)) throw ValidationError("gamma must be positive");
  if (dataset.kind == "csv" && dataset.path.empty()) throw ValidationError("csv dataset needs a path");
}

MethodSpec RunConfig::method(Approach a) const {
  MethodSpec m;
  m.approach = a;
  m.distribution = distribution;
  m.K = K;
  m.epsilon = epsilon;
  m.zero_mean = zero_mean;
  if (distribution == Distribution::gmm) m.pwl = build_pwl(pwl_delta);
  m.validate();
  return m;
}

RunConfig config_from_json(const nlohmann::json& j) {
  try {
    reject_unknown(j,
                   {"case", "dataset", "approach", "approaches", "distribution", "K", "epsilon", "pwl_delta",
                    "restarts", "seeds", "train_fraction", "zero_mean", "output_dir", "classical_structure",
                    "eta_structures", "solver"},
                   "config");
    RunConfig c;
    c.case_path = j.value("case", std::string());
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      reject_unknown(d, {"kind", "samples", "mu", "sigma", "x0", "gamma", "per_unit", "path", "normalize", "seed"},
                     "dataset");
      c.dataset.kind = d.value("kind", c.dataset.kind);
      c.dataset.samples = d.value("samples", c.dataset.samples);
      c.dataset.mu = d.value("mu", c.dataset.mu);
      c.dataset.sigma = d.value("sigma", c.dataset.sigma);
      c.dataset.x0 = d.value("x0", c.dataset.x0);
      c.dataset.gamma = d.value("gamma", c.dataset.gamma);
      c.dataset.per_unit = d.value("per_unit", c.dataset.per_unit);
      c.dataset.path = d.value("path", c.dataset.path);
      c.dataset.normalize = d.value("normalize", c.dataset.normalize);
      c.dataset.seed = d.value("seed", c.dataset.seed);
    }
    if (j.contains("approach")) {
      const auto a = j.at("approach").get<std::string>();
      c.approaches = a == "both" ? std::vector<Approach>{Approach::classical, Approach::constraint_informed}
                                 : std::vector<Approach>{approach_from_string(a)};
    }
    if (j.contains("approaches")) {
      c.approaches.clear();
      for (const auto& a : j.at("approaches")) c.approaches.push_back(approach_from_string(a.get<std::string>()));
    }
    if (j.contains("distribution")) c.distribution = distribution_from_string(j.at("distribution").get<std::string>());
    c.K = j.value("K", c.K);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.pwl_delta = j.value("pwl_delta", c.pwl_delta);
    c.restarts = j.value("restarts", c.restarts);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.zero_mean = j.value("zero_mean", c.zero_mean);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("classical_structure")) {
      c.classical_structure = covariance_structure_from_string(j.at("classical_structure").get<std::string>());
    }
    if (j.contains("eta_structures")) {
      c.eta_structures.clear();
      for (const auto& s : j.at("eta_structures")) c.eta_structures.push_back(covariance_structure_from_string(s));
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      reject_unknown(s, {"backend", "max_iterations", "tolerance", "time_limit", "verbose"}, "solver");
      c.backend = s.value("backend", c.backend);
      c.solver.max_iterations = s.value("max_iterations", c.solver.max_iterations);
      const double tol = s.value("tolerance", c.solver.tol_feasibility);
      c.solver.tol_feasibility = c.solver.tol_gap_abs = c.solver.tol_gap_rel = c.solver.tol_infeasibility = tol;
      c.solver.time_limit = s.value("time_limit", c.solver.time_limit);
      c.solver.verbose = s.value("verbose", c.solver.verbose);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["case"] = c.case_path;
  j["dataset"] = {{"kind", c.dataset.kind},         {"samples", c.dataset.samples}, {"mu", c.dataset.mu},
                  {"sigma", c.dataset.sigma},       {"x0", c.dataset.x0},           {"gamma", c.dataset.gamma},
                  {"per_unit", c.dataset.per_unit}, {"path", c.dataset.path},       {"normalize", c.dataset.normalize},
                  {"seed", c.dataset.seed}};
  auto approaches = nlohmann::json::array();
  for (auto a : c.approaches) approaches.push_back(to_string(a));
  j["approaches"] = approaches;
  j["distribution"] = to_string(c.distribution);
  j["K"] = c.K;
  j["epsilon"] = c.epsilon;
  j["pwl_delta"] = c.pwl_delta;
  j["restarts"] = c.restarts;
  j["seeds"] = c.seeds;
  j["train_fraction"] = c.train_fraction;
  j["zero_mean"] = c.zero_mean;
  j["output_dir"] = c.output_dir;
  j["classical_structure"] = to_string(c.classical_structure);
  auto eta = nlohmann::json::array();
  for (auto s : c.eta_structures) eta.push_back(to_string(s));
  j["eta_structures"] = eta;
  j["solver"] = {{"backend", c.backend},
                 {"max_iterations", c.solver.max_iterations},
                 {"tolerance", c.solver.tol_feasibility},
                 {"time_limit", c.solver.time_limit},
                 {"verbose", c.solver.verbose}};
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

ScenarioSet make_dataset(const GridCase& grid, const DatasetSpec& spec) {
  const auto layout = wind_layout(grid, spec.per_unit);
  if (layout.buses.empty()) throw ValidationError("the case has no wind buses");
  if (spec.kind == "synthetic-G") return generate_gaussian(spec.samples, layout, spec.mu, spec.sigma, spec.seed);
  if (spec.kind == "synthetic-C") return generate_cauchy(spec.samples, layout, spec.x0, spec.gamma, spec.seed);
  if (spec.kind == "csv") {
    const auto units = ingest_csv(spec.path, spec.normalize);
    return scenarios_from_units(units, layout, std::filesystem::path(spec.path).stem().string());
  }
  throw ValidationError("unknown dataset kind '" + spec.kind + "'");
}

Eigen::MatrixXd wind_columns(const GridCase& grid, const ScenarioSet& set) {
  const auto wind = grid.wind_bus_indices();
  if (wind.empty()) throw ValidationError("the case has no wind buses");
  Eigen::MatrixXd X(set.size(), static_cast<Eigen::Index>(wind.size()));
  for (std::size_t i = 0; i < wind.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = set.samples.col(wind[i]);
  return X;
}

FitOutcome fit_approach(const GridCase& grid, const PtdfMatrix& ptdf, const ScenarioSet& train, Approach approach,
                        const RunConfig& config, std::uint64_t seed) {
  const auto t0 = Clock::now();
  FitOutcome out;
  EmOptions opt;
  opt.components = config.K;
  opt.restarts = config.restarts;
  opt.zero_mean = config.zero_mean;
  const bool gaussian = config.distribution == Distribution::gaussian;
  // Distinct streams per fitted model: the low 32 bits carry the run seed, the
  // high bits the model index.
  auto stream = [seed](std::uint64_t model) { return (seed & 0xffffffffull) | (model << 32); };

  if (approach == Approach::classical) {
    const Eigen::MatrixXd X = wind_columns(grid, train);
    FitResult r;
    if (gaussian) {
      r = fit_gaussian(X, config.zero_mean, stream(0));
    } else {
      opt.structure = config.classical_structure;
      opt.seed = stream(0);
      r = fit_gmm_em(X, opt);
    }
    out.reports.push_back(r.report);
    out.inputs = classical_inputs(grid, ptdf, r.model);
  } else {
    const Eigen::MatrixXd omega = to_omega(train).values;
    FitResult r;
    if (gaussian) {
      r = fit_gaussian(omega, config.zero_mean, stream(0));
    } else {
      opt.structure = CovarianceStructure::full;
      opt.seed = stream(0);
      r = fit_gmm_em(omega, opt);
    }
    out.reports.push_back(r.report);
    out.inputs.omega_model = r.model;
    for (std::size_t l = 0; l < grid.num_lines(); ++l) {
      const Eigen::MatrixXd eta = to_eta(train, ptdf, l).values;
      FitResult e;
      if (gaussian) {
        e = fit_gaussian(eta, config.zero_mean, stream(l + 1));
      } else {
        opt.seed = stream(l + 1);
        e = fit_gmm_best(eta, opt, config.eta_structures);
      }
      out.reports.push_back(e.report);
      out.inputs.eta_models.push_back(std::move(e.model));
    }
  }
  out.fit_time = seconds_since(t0);
  return out;
}

const ApproachOutcome* RunResult::find(Approach a) const {
  for (const auto& o : outcomes) {
    if (o.approach == a) return &o;
  }
  return nullptr;
}

const ApproachSummary* ExperimentResult::find(Approach a) const {
  for (const auto& s : summary) {
    if (s.approach == a) return &s;
  }
  return nullptr;
}

RunResult run_single(const GridCase& grid, const PtdfMatrix& ptdf, const ScenarioSet& data, const RunConfig& config,
                     std::uint64_t seed) {
  RunResult run;
  run.seed = seed;
  const auto [train, holdout] = split(data, {config.train_fraction, seed});
  const Eigen::MatrixXd omega_train = to_omega(train).values;
  for (auto a : config.approaches) {
    ApproachOutcome o;
    o.approach = a;
    o.audit_min = std::numeric_limits<double>::quiet_NaN();
    o.omega_loglik = std::numeric_limits<double>::quiet_NaN();
    o.solution.objective = std::numeric_limits<double>::quiet_NaN();
    try {
      o.fit = fit_approach(grid, ptdf, train, a, config, seed);
      o.omega_loglik = gmm_loglik(o.fit.inputs.omega_model, omega_train);
      o.mean_conditions = check_mean_conditions(grid, ptdf, o.fit.inputs);
      const auto t0 = Clock::now();
      const auto built = build_model(grid, ptdf, o.fit.inputs, config.method(a));
      o.build_time = seconds_since(t0);
      o.pwl_cuts = built.pwl_cuts;
      o.solution = solve(built, config.solver, config.backend);
    } catch (const std::exception& e) {
      o.fit_failed = true;
      o.fit_message = e.what();
    }
    o.risk = violation_rates(grid, ptdf, o.solution, holdout, config.epsilon);
    if (o.optimal()) {
      o.audit_min = 1.0;
      for (const auto& p : audit_chance_constraints(grid, ptdf, o.fit.inputs, o.solution.pbar, o.solution.alpha)) {
        o.audit_min = std::min(o.audit_min, p.probability);
      }
    }
    run.outcomes.push_back(std::move(o));
  }
  return run;
}

ExperimentResult run_experiment(const RunConfig& config, const GridCase& grid) {
  config.validate();
  const auto ptdf = compute_ptdf(grid);
  const auto data = make_dataset(grid, config.dataset);
  ExperimentResult result;
  result.label = config.dataset.kind;
  for (auto seed : config.seeds) result.runs.push_back(run_single(grid, ptdf, data, config, seed));

  for (auto a : config.approaches) {
    ApproachSummary s;
    s.approach = a;
    std::vector<double> worst;
    double ll = 0.0;
    int ll_count = 0;
    for (const auto& run : result.runs) {
      const auto* o = run.find(a);
      ++s.runs;
      if (o->infeasible()) ++s.infeasible_count;
      if (!o->optimal() && !o->infeasible()) ++s.failed_count;
      if (std::isfinite(o->omega_loglik)) {
        ll += o->omega_loglik;
        ++ll_count;
      }
      s.mean_fit_time += o->fit.fit_time;
      s.mean_solve_time += o->solution.solve_time;
      if (o->optimal()) {
        ++s.optimal;
        worst.push_back(o->risk.worst_case);
        s.mean_objective += o->solution.objective;
      }
    }
    const double n_opt = static_cast<double>(s.optimal);
    if (s.optimal > 0) {
      s.mean_objective /= n_opt;
      for (double w : worst) s.mean_worst_case += w / n_opt;
      for (double w : worst) s.var_worst_case += (w - s.mean_worst_case) * (w - s.mean_worst_case) / n_opt;
    } else {
      s.mean_objective = s.mean_worst_case = s.var_worst_case = std::numeric_limits<double>::quiet_NaN();
    }
    s.mean_loglik = ll_count ? ll / ll_count : std::numeric_limits<double>::quiet_NaN();
    s.mean_fit_time /= s.runs;
    s.mean_solve_time /= s.runs;
    result.summary.push_back(s);
  }
  for (const auto& run : result.runs) {
    const auto* c = run.find(Approach::classical);
    const auto* i = run.find(Approach::constraint_informed);
    if (c && i && std::isfinite(i->omega_loglik) &&
        (!std::isfinite(c->omega_loglik) || i->omega_loglik > c->omega_loglik)) {
      ++result.loglik_wins;
    }
  }
  return result;
}

ExperimentResult run_experiment(const RunConfig& config) {
  return run_experiment(config, load_case(config.case_path));
}

nlohmann::json risk_to_json(const RiskReport& r) {
  nlohmann::json j;
  j["epsilon"] = r.epsilon;
  j["holdout_size"] = r.holdout_size;
  j["infeasible"] = r.infeasible;
  j["worst_case"] = r.worst_case;
  auto per = nlohmann::json::object();
  for (const auto& c : r.per_constraint) per[c.id] = c.rho;
  j["per_constraint"] = per;
  return j;
}

void write_risk_csv(const RiskReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "constraint,rho\n";
  for (const auto& c : report.per_constraint) out << c.id << ',' << fmt(c.rho) << '\n';
}

void write_experiment(const ExperimentResult& result, const RunConfig& config, const GridCase& grid,
                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  std::ofstream csv(dir / "experiment.csv");
  std::ofstream timing(dir / "timings.csv");
  if (!csv || !timing) throw ValidationError("cannot write experiment outputs under " + dir.string());
  csv << "run,seed,loglik_classical,loglik_ci";
  timing << "run,seed";
  for (auto a : config.approaches) {
    const auto p = short_name(a);
    csv << ',' << p << "_status," << p << "_infeasible," << p << "_objective," << p << "_worst_case," << p
        << "_audit_min," << p << "_mean_condition_flags";
    timing << ',' << p << "_fit_time," << p << "_build_time," << p << "_solve_time";
  }
  csv << '\n';
  timing << '\n';

  auto loglik_of = [](const RunResult& run, Approach a) {
    const auto* o = run.find(a);
    return o ? o->omega_loglik : std::numeric_limits<double>::quiet_NaN();
  };
  auto status_of = [](const ApproachOutcome& o) {
    return o.fit_failed ? std::string("fit-failed") : to_string(o.solution.status);
  };

  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    const auto& run = result.runs[r];
    csv << r << ',' << run.seed << ',' << fmt(loglik_of(run, Approach::classical)) << ','
        << fmt(loglik_of(run, Approach::constraint_informed));
    timing << r << ',' << run.seed;
    const auto run_dir = dir / "runs" / ("seed_" + std::to_string(run.seed));
    std::filesystem::create_directories(run_dir);
    nlohmann::json jrun{{"seed", run.seed}};
    for (const auto& o : run.outcomes) {
      const auto flags = o.mean_conditions.generator_pairs.size() + o.mean_conditions.line_pairs.size();
      csv << ',' << status_of(o) << ',' << (o.infeasible() ? 1 : 0) << ',' << fmt(o.solution.objective) << ','
          << (o.optimal() ? fmt(o.risk.worst_case) : "") << ',' << fmt(o.audit_min) << ',' << flags;
      timing << ',' << fmt(o.fit.fit_time) << ',' << fmt(o.build_time) << ',' << fmt(o.solution.solve_time);
      if (o.optimal()) write_risk_csv(o.risk, run_dir / ("risk_" + short_name(o.approach) + ".csv"));
      nlohmann::json jo{{"status", status_of(o)},
                        {"message", o.fit_failed ? o.fit_message : o.solution.message},
                        {"omega_loglik", std::isfinite(o.omega_loglik) ? nlohmann::json(o.omega_loglik) : nullptr},
                        {"mean_conditions",
                         {{"generator_pairs", o.mean_conditions.generator_pairs},
                          {"line_pairs", o.mean_conditions.line_pairs},
                          {"infeasible_a_priori", o.mean_conditions.infeasible_a_priori},
                          {"zero_mean_clears", o.mean_conditions.zero_mean_clears}}},
                        {"pwl_cuts", o.pwl_cuts}};
      if (o.optimal()) {
        jo["solution"] = solution_to_json(o.solution, grid, false);
        jo["worst_case"] = o.risk.worst_case;
        jo["audit_min"] = o.audit_min;
      }
      jrun[short_name(o.approach)] = jo;
    }
    csv << '\n';
    timing << '\n';
    runs.push_back(jrun);
  }

  // Aggregate row: means over optimal runs, counts of infeasible runs.
  double ll_c = 0.0;
  double ll_i = 0.0;
  if (const auto* s = result.find(Approach::classical)) ll_c = s->mean_loglik;
  if (const auto* s = result.find(Approach::constraint_informed)) ll_i = s->mean_loglik;
  csv << "aggregate,," << (result.find(Approach::classical) ? fmt(ll_c) : "") << ','
      << (result.find(Approach::constraint_informed) ? fmt(ll_i) : "");
  timing << "aggregate,";
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& s : result.summary) {
    double audit = std::numeric_limits<double>::quiet_NaN();
    std::size_t flagged = 0;
    for (const auto& run : result.runs) {
      const auto* o = run.find(s.approach);
      if (o->optimal()) audit = std::isnan(audit) ? o->audit_min : std::min(audit, o->audit_min);
      if (!o->mean_conditions.clean()) ++flagged;
    }
    csv << ",," << s.infeasible_count << ',' << fmt(s.mean_objective) << ',' << fmt(s.mean_worst_case) << ','
        << fmt(audit) << ',' << flagged;
    timing << ',' << fmt(s.mean_fit_time) << ",," << fmt(s.mean_solve_time);
    agg[short_name(s.approach)] = {{"runs", s.runs},
                                   {"optimal", s.optimal},
                                   {"infeasible_count", s.infeasible_count},
                                   {"failed_count", s.failed_count},
                                   {"mean_worst_case", std::isnan(s.mean_worst_case) ? nlohmann::json(nullptr)
                                                                                      : nlohmann::json(s.mean_worst_case)},
                                   {"var_worst_case", std::isnan(s.var_worst_case) ? nlohmann::json(nullptr)
                                                                                    : nlohmann::json(s.var_worst_case)},
                                   {"mean_objective", std::isnan(s.mean_objective) ? nlohmann::json(nullptr)
                                                                                    : nlohmann::json(s.mean_objective)},
                                   {"mean_omega_loglik", std::isnan(s.mean_loglik) ? nlohmann::json(nullptr)
                                                                                    : nlohmann::json(s.mean_loglik)},
                                   {"min_audit_probability",
                                    std::isnan(audit) ? nlohmann::json(nullptr) : nlohmann::json(audit)},
                                   {"runs_with_mean_condition_flags", flagged}};
  }
  csv << '\n';
  timing << '\n';

  nlohmann::json summary{{"label", result.label},
                         {"epsilon", config.epsilon},
                         {"loglik_wins_ci", result.loglik_wins},
                         {"aggregate", agg},
                         {"runs", runs}};
  std::ofstream js(dir / "summary.json");
  js << summary.dump(2) << '\n';
}

}  // namespace ccopf

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccopf/dispatch.hpp"
#include "ccopf/estimation.hpp"
#include "ccopf/grid.hpp"
#include "ccopf/reformulate.hpp"
#include "ccopf/risk.hpp"
#include "ccopf/scenarios.hpp"

namespace ccopf {

struct DatasetSpec {
  std::string kind = "synthetic-G";  // synthetic-G, synthetic-C, csv
  Eigen::Index samples = 10000;
  double mu = -0.024;
  double sigma = 0.036;
  double x0 = 0.0;
  double gamma = 0.02;
  /// Synthetic draws are fractions of each bus's wind forecast.
  bool per_unit = true;
  std::string path;  // csv only
  bool normalize = true;
  std::uint64_t seed = 1;
};

struct RunConfig {
  std::string case_path;
  DatasetSpec dataset;
  std::vector<Approach> approaches{Approach::classical, Approach::constraint_informed};
  Distribution distribution = Distribution::gaussian;
  int K = 1;
  double epsilon = 0.05;
  double pwl_delta = 0.002;
  int restarts = 10;
  std::vector<std::uint64_t> seeds{1};
  double train_fraction = 0.8;
  bool zero_mean = false;
  std::string output_dir = "out";
  /// Covariance structure of the wind-bus mixture in the classical approach.
  CovarianceStructure classical_structure = CovarianceStructure::tied_scaled;
  /// Candidates for the per-line 2-d mixtures, best BIC wins.
  std::vector<CovarianceStructure> eta_structures{CovarianceStructure::tied_scaled, CovarianceStructure::spherical};
  std::string backend = "ipm";
  SolverSettings solver;

  /// Throws ValidationError for out-of-range fields; does not touch the file system.
  void validate() const;
  MethodSpec method(Approach a) const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

/// Synthetic data from dataset.seed, or the CSV mapped onto the wind buses.
ScenarioSet make_dataset(const GridCase& grid, const DatasetSpec& spec);

struct FitOutcome {
  FittedInputs inputs;
  /// Report per fitted model: the wind-bus model (classical) or Omega then
  /// one per line (constraint-informed).
  std::vector<FitReport> reports;
  double fit_time = 0.0;
};

/// Fits the models one approach needs on the training set.
FitOutcome fit_approach(const GridCase& grid, const PtdfMatrix& ptdf, const ScenarioSet& train, Approach approach,
                        const RunConfig& config, std::uint64_t seed);

/// Training columns of the wind buses, in ascending bus order.
Eigen::MatrixXd wind_columns(const GridCase& grid, const ScenarioSet& set);

struct ApproachOutcome {
  Approach approach = Approach::constraint_informed;
  bool fit_failed = false;
  std::string fit_message;
  FitOutcome fit;
  MeanConditionReport mean_conditions;
  DispatchSolution solution;
  RiskReport risk;
  /// Smallest exact satisfaction probability over all constraints (NaN unless optimal).
  double audit_min = 0.0;
  double omega_loglik = 0.0;  // of the Omega model on the training Omega samples
  double build_time = 0.0;
  int pwl_cuts = 0;

  bool infeasible() const { return !fit_failed && solution.status == SolveStatus::infeasible; }
  bool optimal() const { return !fit_failed && solution.status == SolveStatus::optimal; }
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<ApproachOutcome> outcomes;

  const ApproachOutcome* find(Approach a) const;
};

/// split -> fit -> mean-condition check -> build -> solve -> holdout rates.
RunResult run_single(const GridCase& grid, const PtdfMatrix& ptdf, const ScenarioSet& data, const RunConfig& config,
                     std::uint64_t seed);

struct ApproachSummary {
  Approach approach = Approach::constraint_informed;
  int runs = 0;
  int optimal = 0;
  int infeasible_count = 0;
  int failed_count = 0;  // fit or backend failures
  double mean_worst_case = 0.0;
  double var_worst_case = 0.0;
  double mean_objective = 0.0;
  double mean_loglik = 0.0;
  double mean_fit_time = 0.0;
  double mean_solve_time = 0.0;
};

struct ExperimentResult {
  std::string label;
  std::vector<RunResult> runs;
  std::vector<ApproachSummary> summary;
  /// Runs where the constraint-informed Omega log-likelihood beats the classical one.
  int loglik_wins = 0;

  const ApproachSummary* find(Approach a) const;
};

ExperimentResult run_experiment(const RunConfig& config);
ExperimentResult run_experiment(const RunConfig& config, const GridCase& grid);

/// experiment.csv (one row per run plus an aggregate row), summary.json,
/// timings.csv and runs/seed_<s>/risk_<approach>.csv under `dir`. Everything
/// except timings.csv is a deterministic function of the config.
void write_experiment(const ExperimentResult& result, const RunConfig& config, const GridCase& grid,
                      const std::filesystem::path& dir);

void write_risk_csv(const RiskReport& report, const std::filesystem::path& path);
nlohmann::json risk_to_json(const RiskReport& report);

}  // namespace ccopf

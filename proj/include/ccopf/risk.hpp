#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccopf/dispatch.hpp"
#include "ccopf/grid.hpp"
#include "ccopf/reformulate.hpp"
#include "ccopf/scenarios.hpp"

namespace ccopf {

/// Realizations beyond a limit by more than this many MW count as violations.
inline constexpr double kViolationSlack = 1e-7;

struct ConstraintRate {
  std::string id;  // gen:<id>:max, gen:<id>:min, line:<id>:max, line:<id>:min
  double rho = 0.0;
};

struct RiskReport {
  std::vector<ConstraintRate> per_constraint;
  double worst_case = 0.0;
  double epsilon = 0.0;
  Eigen::Index holdout_size = 0;
  bool infeasible = false;
};

/// Ids of the 2|G| + 2|L| individual constraints in report order.
std::vector<std::string> constraint_ids(const GridCase& grid);

/// Empirical violation frequency of every generator and line limit over the
/// holdout. A solution that is not optimal gives an empty report flagged infeasible.
RiskReport violation_rates(const GridCase& grid, const PtdfMatrix& ptdf, const DispatchSolution& solution,
                           const ScenarioSet& holdout, double epsilon);

/// Same frequencies for an explicit (pbar, alpha).
RiskReport violation_rates(const GridCase& grid, const PtdfMatrix& ptdf, const Eigen::VectorXd& pbar,
                           const Eigen::VectorXd& alpha, const ScenarioSet& holdout, double epsilon);

struct ConstraintProbability {
  std::string id;
  double probability = 0.0;
};

/// Satisfaction probability of every constraint under the fitted mixtures,
/// evaluated with the exact normal CDF.
std::vector<ConstraintProbability> audit_chance_constraints(const GridCase& grid, const PtdfMatrix& ptdf,
                                                            const FittedInputs& inputs, const Eigen::VectorXd& pbar,
                                                            const Eigen::VectorXd& alpha);

}  // namespace ccopf

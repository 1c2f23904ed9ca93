#pragma once

#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "ccopf/reformulate.hpp"
#include "ccopf/solver.hpp"

namespace ccopf {

struct DispatchSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd pbar;   // MW
  Eigen::VectorXd alpha;  // participation factors
  Eigen::VectorXd delta;  // per-line standard-deviation bounds
  Eigen::VectorXd aux;    // full primal vector, layout of the built model
  double objective = 0.0;
  double solve_time = 0.0;
  int iterations = 0;
  bool reduced_accuracy = false;
  FeasibilityCheck feasibility;
  std::string message;
  std::string backend;
};

/// Tolerance of the adapter's own feasibility check on the original program.
inline constexpr double kFeasibilityTolerance = 1e-6;

/// Solves with the named backend and re-checks primal feasibility of every
/// optimal point on the unscaled program; a failed check turns the status
/// into numerical_failure.
DispatchSolution solve(const BuiltModel& model, const SolverSettings& settings,
                       const std::string& backend = default_solver_name());

/// Plain programs (no dispatch layout): returns the raw backend result after
/// the same re-verification.
SolverResult solve_program(const ConicProgram& program, const SolverSettings& settings,
                           const std::string& backend = default_solver_name());

/// Timing fields are left out unless `with_timing`.
nlohmann::json solution_to_json(const DispatchSolution& s, const GridCase& grid, bool with_timing);

}  // namespace ccopf

#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccopf/conic.hpp"

namespace ccopf {

enum class SolveStatus { optimal, infeasible, numerical_failure };

std::string to_string(SolveStatus s);

struct SolverSettings {
  int max_iterations = 200;
  double tol_feasibility = 1e-8;
  double tol_gap_abs = 1e-8;
  double tol_gap_rel = 1e-8;
  double tol_infeasibility = 1e-8;
  /// Tolerances accepted when the iteration stalls before full accuracy.
  double tol_reduced = 1e-5;
  double time_limit = 60.0;  // seconds
  bool equilibrate = true;
  double static_regularization = 1e-8;
  int refinement_steps = 3;
  bool verbose = false;
};

struct SolverResult {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd x;
  Eigen::VectorXd s;
  Eigen::VectorXd z;
  double objective = 0.0;
  int iterations = 0;
  double solve_time = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  bool reduced_accuracy = false;
  std::string message;
};

/// A backend able to solve convex quadratic programs over products of zero,
/// non-negative and second-order cones.
class ConicSolver {
 public:
  virtual ~ConicSolver() = default;
  virtual std::string name() const = 0;
  virtual SolverResult solve(const ConicProgram& program, const SolverSettings& settings) const = 0;
};

/// Backends known to make_solver().
std::vector<std::string> available_solvers();

/// Throws ValidationError for an unknown name.
std::unique_ptr<ConicSolver> make_solver(const std::string& name);

/// Backend named by the CCOPF_SOLVER environment variable, or "ipm".
std::string default_solver_name();

}  // namespace ccopf

#include "ccopf/dispatch.hpp"

#include <cmath>
#include <limits>

namespace ccopf {

SolverResult solve_program(const ConicProgram& program, const SolverSettings& settings, const std::string& backend) {
  auto result = make_solver(backend)->solve(program, settings);
  if (result.status == SolveStatus::optimal) {
    const auto check = check_feasibility(program, result.x);
    if (!check.feasible(kFeasibilityTolerance)) {
      result.status = SolveStatus::numerical_failure;
      result.message = "backend reported optimal but the point fails the feasibility check";
    }
  }
  return result;
}

DispatchSolution solve(const BuiltModel& model, const SolverSettings& settings, const std::string& backend) {
  const auto result = make_solver(backend)->solve(model.program, settings);
  DispatchSolution s;
  s.backend = backend;
  s.status = result.status;
  s.solve_time = result.solve_time;
  s.iterations = result.iterations;
  s.reduced_accuracy = result.reduced_accuracy;
  s.message = result.message;
  const auto& L = model.layout;
  if (result.status != SolveStatus::optimal) {
    s.objective = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.aux = result.x;
  s.pbar = result.x.segment(L.pbar(0), L.G);
  s.alpha = result.x.segment(L.alpha(0), L.G);
  s.delta = result.x.segment(L.delta(0), L.L);
  s.objective = result.objective;
  s.feasibility = check_feasibility(model.program, result.x);
  if (!s.feasibility.feasible(kFeasibilityTolerance)) {
    s.status = SolveStatus::numerical_failure;
    s.message = "backend reported optimal but the point fails the feasibility check";
  }
  return s;
}

nlohmann::json solution_to_json(const DispatchSolution& s, const GridCase& grid, bool with_timing) {
  nlohmann::json j;
  j["status"] = to_string(s.status);
  j["message"] = s.message;
  j["backend"] = s.backend;
  if (s.status == SolveStatus::optimal) {
    j["objective"] = s.objective;
    j["reduced_accuracy"] = s.reduced_accuracy;
    auto gens = nlohmann::json::array();
    for (std::size_t g = 0; g < grid.num_generators(); ++g) {
      gens.push_back({{"id", grid.generators()[g].id}, {"pbar", s.pbar[g]}, {"alpha", s.alpha[g]}});
    }
    j["generators"] = gens;
    auto lines = nlohmann::json::array();
    for (std::size_t l = 0; l < grid.num_lines(); ++l) {
      lines.push_back({{"id", grid.lines()[l].id}, {"delta", s.delta[l]}});
    }
    j["lines"] = lines;
    j["max_equality_violation"] = s.feasibility.max_equality_violation;
    j["max_cone_violation"] = s.feasibility.max_cone_violation;
  }
  if (with_timing) {
    j["solve_time"] = s.solve_time;
    j["iterations"] = s.iterations;
  }
  return j;
}

}  // namespace ccopf

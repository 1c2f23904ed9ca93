#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ccopf/conic.hpp"
#include "ccopf/estimation.hpp"
#include "ccopf/grid.hpp"
#include "ccopf/pwl.hpp"

namespace ccopf {

enum class Approach { classical, constraint_informed };
enum class Distribution { gaussian, gmm };

std::string to_string(Approach a);
std::string to_string(Distribution d);
Approach approach_from_string(const std::string& s);
Distribution distribution_from_string(const std::string& s);

struct MethodSpec {
  Approach approach = Approach::constraint_informed;
  Distribution distribution = Distribution::gmm;
  int K = 1;
  double epsilon = 0.05;
  PwlCdf pwl;
  bool zero_mean = false;

  /// Throws ValidationError on epsilon outside (0, 0.5), K < 1, or gaussian with K != 1.
  void validate() const;
};

/// Low-dimensional models entering the constraints: one model of Omega and a
/// 2-d model of (Omega, Lambda_l) per line. For the classical approach these
/// are images of `xi_model` (fitted over the wind buses, in ascending bus order).
struct FittedInputs {
  GmmModel omega_model;
  std::vector<GmmModel> eta_models;
  std::optional<GmmModel> xi_model;
};

/// Pushes a model of the wind-bus errors through Omega = 1'xi and
/// (Omega, h_wind_l' xi) for every line.
FittedInputs classical_inputs(const GridCase& grid, const PtdfMatrix& ptdf, const GmmModel& xi_model);

/// Variable positions in the built program.
struct VariableLayout {
  int G = 0;
  int L = 0;
  int K = 0;
  bool has_aux = false;  // M blocks present (piecewise-linear form)

  int pbar(int g) const { return g; }
  int alpha(int g) const { return G + g; }
  int delta(int l) const { return 2 * G + l; }
  int m1(int g, int k) const { return 2 * G + L + g * K + k; }
  int m2(int g, int k) const { return 2 * G + L + G * K + g * K + k; }
  int m3(int l, int k) const { return 2 * G + L + 2 * G * K + l * K + k; }
  int m4(int l, int k) const { return 2 * G + L + 2 * G * K + L * K + l * K + k; }
  int num_variables() const { return 2 * G + L + (has_aux ? 2 * G * K + 2 * L * K : 0); }
};

struct BuiltModel {
  ConicProgram program;
  VariableLayout layout;
  /// Number of rows that are piecewise-linear cuts.
  int pwl_cuts = 0;
};

struct MeanConditionReport {
  /// (generator position, component) pairs whose mean condition alone keeps
  /// alpha_g below 1 on the box p_min <= pbar <= p_max.
  std::vector<std::pair<int, int>> generator_pairs;
  /// (line position, component) pairs whose mean condition cannot hold
  /// anywhere on the box of dispatches and participation factors.
  std::vector<std::pair<int, int>> line_pairs;
  /// Largest alpha_g allowed by the generator mean conditions.
  std::vector<double> alpha_cap;
  /// No dispatch satisfies the mean conditions (sum of caps below one or a
  /// line pair flagged).
  bool infeasible_a_priori = false;
  /// Something is flagged, and the same check with all means set to zero is clean.
  bool zero_mean_clears = false;

  bool clean() const { return generator_pairs.empty() && line_pairs.empty() && !infeasible_a_priori; }
};

MeanConditionReport check_mean_conditions(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& inputs);

/// Quadratic cost of the recourse policy with E[Omega], V[Omega]; written into
/// the builder over the pbar and alpha variables of `layout`.
void build_objective(ProgramBuilder& builder, const VariableLayout& layout, const GridCase& grid, double mean,
                     double variance);

/// Evaluates the same cost directly.
double expected_cost(const GridCase& grid, const Eigen::VectorXd& pbar, const Eigen::VectorXd& alpha, double mean,
                     double variance);

/// Piecewise-linear mixture reformulation over Omega and eta_l models.
BuiltModel build_ci_model(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& inputs,
                          const MethodSpec& spec);

/// Transforms a wind-bus mixture and builds the same structure; K > 1 needs
/// a shared covariance base. A gaussian method builds the linear K = 1 form.
BuiltModel build_classical_model(const GridCase& grid, const PtdfMatrix& ptdf, const GmmModel& xi_model,
                                 const MethodSpec& spec);

/// Single-Gaussian form with the exact quantile Phi^-1(1 - epsilon).
BuiltModel build_gaussian_model(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& inputs,
                                const MethodSpec& spec);

/// Dispatches on spec.distribution and spec.approach.
BuiltModel build_model(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& inputs,
                       const MethodSpec& spec);

}  // namespace ccopf

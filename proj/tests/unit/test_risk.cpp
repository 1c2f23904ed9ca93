#include <cmath>

#include <gtest/gtest.h>

#include "ccopf/errors.hpp"
#include "ccopf/risk.hpp"
#include "fixtures.hpp"

using namespace ccopf;

namespace {

// Rebuilds each realization from bus injections, without the affine recourse shortcut.
std::vector<double> brute_force(const GridCase& grid, const PtdfMatrix& ptdf, const Eigen::VectorXd& pbar,
                                const Eigen::VectorXd& alpha, const ScenarioSet& set) {
  const auto G = grid.num_generators(), L = grid.num_lines();
  std::vector<double> hits(2 * G + 2 * L, 0.0);
  for (Eigen::Index n = 0; n < set.size(); ++n) {
    const Eigen::VectorXd xi = set.samples.row(n).transpose();
    Eigen::VectorXd inj = grid.wind_vector() + xi - grid.load_vector();
    for (std::size_t g = 0; g < G; ++g) {
      const auto& gen = grid.generators()[g];
      const double p = pbar[g] - alpha[g] * xi.sum();
      inj[grid.bus_index(gen.bus)] += p;
      hits[2 * g] += p > gen.p_max + kViolationSlack;
      hits[2 * g + 1] += p < gen.p_min - kViolationSlack;
    }
    const Eigen::VectorXd f = ptdf.H * inj;
    for (std::size_t l = 0; l < L; ++l) {
      hits[2 * G + 2 * l] += f[l] > grid.lines()[l].f_max + kViolationSlack;
      hits[2 * G + 2 * l + 1] += f[l] < -grid.lines()[l].f_max - kViolationSlack;
    }
  }
  for (auto& h : hits) h /= static_cast<double>(set.size());
  return hits;
}

}  // namespace

TEST(Rates, MatchBruteForce) {
  const auto grid = load_case(fixtures::case_path("case14_wind"));
  const auto ptdf = compute_ptdf(grid);
  const auto set = generate_cauchy(3000, wind_layout(grid), 0.0, 0.02, 17);
  Eigen::VectorXd pbar(5), alpha(5);
  pbar << 120, 40, 30, 10, 10;
  alpha << 0.4, 0.3, 0.1, 0.1, 0.1;
  const auto r = violation_rates(grid, ptdf, pbar, alpha, set, 0.05);
  const auto expected = brute_force(grid, ptdf, pbar, alpha, set);
  ASSERT_EQ(r.per_constraint.size(), expected.size());
  double worst = 0.0;
  for (std::size_t j = 0; j < expected.size(); ++j) {
    EXPECT_EQ(r.per_constraint[j].rho, expected[j]) << r.per_constraint[j].id;
    worst = std::max(worst, expected[j]);
  }
  EXPECT_EQ(r.worst_case, worst);
  EXPECT_GT(worst, 0.0);
}

TEST(Rates, IdsInReportOrder) {
  const auto ids = constraint_ids(fixtures::three_bus());
  ASSERT_EQ(ids.size(), 10u);
  EXPECT_EQ(ids[0], "gen:1:max");
  EXPECT_EQ(ids[3], "gen:2:min");
  EXPECT_EQ(ids[4], "line:1:max");
  EXPECT_EQ(ids[9], "line:3:min");
}

TEST(Rates, WideMarginNeverViolates) {
  const auto grid = fixtures::two_bus(100.0, 20.0);
  const auto ptdf = compute_ptdf(grid);
  ScenarioSet set;
  set.samples = Eigen::MatrixXd::Zero(200, 2);
  set.samples.col(1) = Eigen::VectorXd::LinSpaced(200, -10.0, 10.0);
  // Generation 80 +- 10 stays inside [0, 200]; the flow 80 +- 0 stays inside 150.
  const auto r = violation_rates(grid, ptdf, Eigen::VectorXd::Constant(1, 80.0), Eigen::VectorXd::Ones(1), set, 0.05);
  for (const auto& c : r.per_constraint) EXPECT_EQ(c.rho, 0.0) << c.id;
  EXPECT_EQ(r.worst_case, 0.0);
}

TEST(Rates, HalfTheSamplesViolate) {
  const auto grid = fixtures::two_bus(100.0, 20.0);
  const auto ptdf = compute_ptdf(grid);
  ScenarioSet set;
  set.samples = Eigen::MatrixXd::Zero(4, 2);
  set.samples.col(1) << -5.0, -5.0, 5.0, 5.0;
  // pbar = p_max: a shortfall (negative Omega) pushes the generator over its limit.
  const auto r = violation_rates(grid, ptdf, Eigen::VectorXd::Constant(1, 200.0), Eigen::VectorXd::Ones(1), set, 0.05);
  EXPECT_EQ(r.per_constraint[0].rho, 0.5);
  EXPECT_EQ(r.worst_case, 0.5);
  EXPECT_EQ(r.holdout_size, 4);
}

TEST(Rates, SlackAbsorbsRoundOff) {
  const auto grid = fixtures::two_bus(100.0, 20.0);
  const auto ptdf = compute_ptdf(grid);
  ScenarioSet set;
  set.samples = Eigen::MatrixXd::Zero(1, 2);
  const auto r = violation_rates(grid, ptdf, Eigen::VectorXd::Constant(1, 200.0 + 5e-8), Eigen::VectorXd::Ones(1), set,
                                 0.05);
  EXPECT_EQ(r.per_constraint[0].rho, 0.0);
}

TEST(Rates, EmptyHoldoutRejected) {
  const auto grid = fixtures::two_bus();
  const auto ptdf = compute_ptdf(grid);
  ScenarioSet empty;
  empty.samples.resize(0, 2);
  EXPECT_THROW(violation_rates(grid, ptdf, Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1), empty, 0.05),
               ValidationError);
}

TEST(Rates, NonOptimalSolutionFlaggedInfeasible) {
  const auto grid = fixtures::two_bus();
  const auto ptdf = compute_ptdf(grid);
  ScenarioSet set;
  set.samples = Eigen::MatrixXd::Zero(3, 2);
  DispatchSolution sol;
  sol.status = SolveStatus::infeasible;
  const auto r = violation_rates(grid, ptdf, sol, set, 0.05);
  EXPECT_TRUE(r.infeasible);
  EXPECT_TRUE(r.per_constraint.empty());
}

TEST(Rates, MonteCarloAgreesWithGaussianAudit) {
  const auto grid = fixtures::three_bus();
  const auto ptdf = compute_ptdf(grid);
  const auto data = generate_gaussian(20000, wind_layout(grid), -0.024, 0.2, 31);
  const auto [train, hold] = split(data, {0.5, 2});
  FittedInputs in;
  in.omega_model = fit_mle_gaussian(to_omega(train).values);
  for (std::size_t l = 0; l < grid.num_lines(); ++l) in.eta_models.push_back(fit_mle_gaussian(to_eta(train, ptdf, l).values));
  MethodSpec spec;
  spec.distribution = Distribution::gaussian;
  const auto sol = solve(build_gaussian_model(grid, ptdf, in, spec), SolverSettings{}, "ipm");
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  const auto r = violation_rates(grid, ptdf, sol, hold, spec.epsilon);
  const auto audit = audit_chance_constraints(grid, ptdf, in, sol.pbar, sol.alpha);
  ASSERT_EQ(audit.size(), r.per_constraint.size());
  const double band = 3.0 * std::sqrt(0.05 * 0.95 / static_cast<double>(hold.size()));
  int inside = 0;
  for (std::size_t j = 0; j < audit.size(); ++j) {
    EXPECT_EQ(audit[j].id, r.per_constraint[j].id);
    inside += std::abs(r.per_constraint[j].rho - (1.0 - audit[j].probability)) <= band;
  }
  EXPECT_GE(inside, static_cast<int>(std::ceil(0.95 * static_cast<double>(audit.size()))));
  EXPECT_GT(r.worst_case, 0.0);
}

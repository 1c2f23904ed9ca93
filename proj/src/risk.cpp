#include "ccopf/risk.hpp"

#include <algorithm>
#include <cmath>

#include "ccopf/errors.hpp"
#include "ccopf/normal.hpp"

namespace ccopf {

std::vector<std::string> constraint_ids(const GridCase& grid) {
  std::vector<std::string> ids;
  for (const auto& g : grid.generators()) {
    ids.push_back("gen:" + std::to_string(g.id) + ":max");
    ids.push_back("gen:" + std::to_string(g.id) + ":min");
  }
  for (const auto& l : grid.lines()) {
    ids.push_back("line:" + std::to_string(l.id) + ":max");
    ids.push_back("line:" + std::to_string(l.id) + ":min");
  }
  return ids;
}

RiskReport violation_rates(const GridCase& grid, const PtdfMatrix& ptdf, const Eigen::VectorXd& pbar,
                           const Eigen::VectorXd& alpha, const ScenarioSet& holdout, double epsilon) {
  if (holdout.size() == 0) throw ValidationError("violation rates need a non-empty holdout set");
  const auto G = grid.num_generators();
  const auto L = grid.num_lines();
  std::vector<long> count(2 * G + 2 * L, 0);
  for (Eigen::Index n = 0; n < holdout.size(); ++n) {
    const auto st = realized_state(grid, ptdf, pbar, alpha, holdout.samples.row(n).transpose());
    for (std::size_t g = 0; g < G; ++g) {
      const auto& gen = grid.generators()[g];
      if (st.generation[g] > gen.p_max + kViolationSlack) ++count[2 * g];
      if (st.generation[g] < gen.p_min - kViolationSlack) ++count[2 * g + 1];
    }
    for (std::size_t l = 0; l < L; ++l) {
      const double f_max = grid.lines()[l].f_max;
      if (st.flows[l] > f_max + kViolationSlack) ++count[2 * G + 2 * l];
      if (st.flows[l] < -f_max - kViolationSlack) ++count[2 * G + 2 * l + 1];
    }
  }
  RiskReport r;
  r.epsilon = epsilon;
  r.holdout_size = holdout.size();
  const auto ids = constraint_ids(grid);
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const double rho = static_cast<double>(count[j]) / static_cast<double>(holdout.size());
    r.per_constraint.push_back({ids[j], rho});
    r.worst_case = std::max(r.worst_case, rho);
  }
  return r;
}

RiskReport violation_rates(const GridCase& grid, const PtdfMatrix& ptdf, const DispatchSolution& solution,
                           const ScenarioSet& holdout, double epsilon) {
  if (solution.status != SolveStatus::optimal) {
    if (holdout.size() == 0) throw ValidationError("violation rates need a non-empty holdout set");
    RiskReport r;
    r.epsilon = epsilon;
    r.holdout_size = holdout.size();
    r.infeasible = true;
    return r;
  }
  return violation_rates(grid, ptdf, solution.pbar, solution.alpha, holdout, epsilon);
}

namespace {

// 1-d mixture of the scalar a + c' x when x follows `m`.
GmmModel project(const GmmModel& m, const Eigen::VectorXd& c, double a) {
  GmmModel out;
  out.dim = 1;
  out.weights = m.weights;
  out.means = (m.means * c).array() + a;
  for (const auto& cov : m.covariances) out.covariances.push_back(Eigen::MatrixXd::Constant(1, 1, c.dot(cov * c)));
  return out;
}

// P(X <= x + slack) or P(X >= x - slack), the same slack the empirical rates use.
double probability(const GmmModel& m, double x, bool upper) {
  double p = 0.0;
  for (int k = 0; k < m.components(); ++k) {
    const double mu = m.means(k, 0);
    const double sd = std::sqrt(std::max(m.covariances[k](0, 0), 0.0));
    double pk;
    if (sd > 0.0) {
      pk = normal_cdf(upper ? (x + kViolationSlack - mu) / sd : (mu - x + kViolationSlack) / sd);
    } else {
      pk = (upper ? mu <= x + kViolationSlack : mu >= x - kViolationSlack) ? 1.0 : 0.0;
    }
    p += m.weights[k] * pk;
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace

std::vector<ConstraintProbability> audit_chance_constraints(const GridCase& grid, const PtdfMatrix& ptdf,
                                                            const FittedInputs& inputs, const Eigen::VectorXd& pbar,
                                                            const Eigen::VectorXd& alpha) {
  const auto ids = constraint_ids(grid);
  std::vector<ConstraintProbability> out;
  const auto G = grid.num_generators();
  for (std::size_t g = 0; g < G; ++g) {
    const auto& gen = grid.generators()[g];
    // p_g = pbar - alpha Omega
    const GmmModel pg = project(inputs.omega_model, Eigen::VectorXd::Constant(1, -alpha[g]), pbar[g]);
    out.push_back({ids[2 * g], probability(pg, gen.p_max, true)});
    out.push_back({ids[2 * g + 1], probability(pg, gen.p_min, false)});
  }
  const auto nominal = nominal_state(grid, ptdf, pbar);
  const Eigen::VectorXd gamma = flow_response(ptdf, alpha);
  for (std::size_t l = 0; l < grid.num_lines(); ++l) {
    const double f_max = grid.lines()[l].f_max;
    const GmmModel fl = project(inputs.eta_models.at(l), Eigen::Vector2d(gamma[l], 1.0), nominal.flows[l]);
    out.push_back({ids[2 * G + 2 * l], probability(fl, f_max, true)});
    out.push_back({ids[2 * G + 2 * l + 1], probability(fl, -f_max, false)});
  }
  return out;
}

}  // namespace ccopf

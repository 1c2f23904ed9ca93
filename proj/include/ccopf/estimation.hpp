#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace ccopf {

enum class CovarianceStructure {
  full,
  tied_scaled,  // C_k = tau_k^2 C_0
  spherical,    // C_k = s_k^2 I
};

std::string to_string(CovarianceStructure s);
CovarianceStructure covariance_structure_from_string(const std::string& s);

/// Gaussian mixture in `dim` dimensions.
///
/// For tied-scaled and spherical models `base` and `scales` hold C_0 and
/// tau_k^2 with covariances[k] == scales[k] * base. Tied-scaled models are
/// normalized so that scales[0] == 1.
struct GmmModel {
  int dim = 0;
  CovarianceStructure structure = CovarianceStructure::full;
  bool zero_mean = false;
  Eigen::VectorXd weights;                  // K
  Eigen::MatrixXd means;                    // K x dim
  std::vector<Eigen::MatrixXd> covariances;  // K of dim x dim
  Eigen::MatrixXd base;
  Eigen::VectorXd scales;

  int components() const { return static_cast<int>(weights.size()); }
  bool has_shared_base() const { return base.size() > 0; }
};

struct FitReport {
  double log_likelihood = 0.0;
  double bic = 0.0;
  int iterations = 0;
  int restarts_used = 0;
  bool converged = false;
  bool zero_mean = false;
  /// Some covariance eigenvalue hit the floor in the returned model.
  bool degenerate = false;
  double covariance_floor = 0.0;
  CovarianceStructure structure = CovarianceStructure::full;
};

struct EmOptions {
  int components = 1;
  CovarianceStructure structure = CovarianceStructure::full;
  int restarts = 10;
  std::uint64_t seed = 0;
  bool zero_mean = false;
  int max_iterations = 500;
  double tolerance = 1e-7;  // relative log-likelihood improvement
  /// Log-likelihood after every iteration of the selected restart.
  bool record_trace = false;
};

struct FitResult {
  GmmModel model;
  FitReport report;
  std::vector<double> trace;
};

/// Sample mean and biased (1/N) covariance of the rows of `data`.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> sample_moments(const Eigen::MatrixXd& data);

/// Eigenvalue floor used for data with this covariance: 1e-10 times the mean
/// per-dimension variance (or 1e-10 for constant data).
double covariance_floor(const Eigen::MatrixXd& sample_covariance);

/// Closed-form single Gaussian fit; the covariance is floored.
GmmModel fit_mle_gaussian(const Eigen::MatrixXd& data);

/// Multi-start EM. Rows of `data` are observations. The returned model is the
/// restart with the lowest BIC.
FitResult fit_gmm_em(const Eigen::MatrixXd& data, const EmOptions& options);

/// Runs fit_gmm_em once per structure and keeps the lowest BIC.
FitResult fit_gmm_best(const Eigen::MatrixXd& data, EmOptions options,
                       const std::vector<CovarianceStructure>& structures);

/// Free parameters counted by the BIC.
int free_parameters(int dim, int components, CovarianceStructure structure, bool zero_mean);

/// Distribution of w' xi (1-d) or (1' xi, w' xi) (2-d) under a mixture over xi.
/// Without `line_weights` the result is the 1-d mixture of 1' xi.
GmmModel transform_classical(const GmmModel& model, const std::optional<Eigen::VectorXd>& line_weights = std::nullopt);

/// Sum over rows of log sum_k w_k N(x; mean_k, cov_k).
double gmm_loglik(const GmmModel& model, const Eigen::MatrixXd& data);

/// Mixture CDF of a 1-d model.
double gmm_cdf(const GmmModel& model, double x);

/// (E, V) of a 1-d mixture.
std::pair<double, double> gmm_moments(const GmmModel& model);

/// Recognizes C_k = tau_k^2 C_0 in a model with unstructured covariances and
/// fills base/scales; returns false when the covariances are not proportional.
bool detect_tied_scaled(GmmModel& model, double rel_tol = 1e-9);

void check_model(const GmmModel& model);

nlohmann::json model_to_json(const GmmModel& model);
GmmModel model_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const FitReport& report);

}  // namespace ccopf

#include "ccopf/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ccopf/errors.hpp"
#include "ccopf/normal.hpp"

namespace ccopf {

std::string to_string(CovarianceStructure s) {
  switch (s) {
    case CovarianceStructure::full:
      return "full";
    case CovarianceStructure::tied_scaled:
      return "tied-scaled";
    case CovarianceStructure::spherical:
      return "spherical";
  }
  return "full";
}

CovarianceStructure covariance_structure_from_string(const std::string& s) {
  if (s == "full") return CovarianceStructure::full;
  if (s == "tied-scaled" || s == "tied_scaled" || s == "tied") return CovarianceStructure::tied_scaled;
  if (s == "spherical") return CovarianceStructure::spherical;
  throw ValidationError("unknown covariance structure '" + s + "'");
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> sample_moments(const Eigen::MatrixXd& data) {
  const auto n = static_cast<double>(data.rows());
  Eigen::VectorXd mean = data.colwise().sum().transpose() / n;
  Eigen::MatrixXd centered = data.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / n;
  return {mean, cov};
}

double covariance_floor(const Eigen::MatrixXd& sample_covariance) {
  const double scale = sample_covariance.trace() / static_cast<double>(sample_covariance.rows());
  return 1e-10 * (scale > 0.0 && std::isfinite(scale) ? scale : 1.0);
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Clamps the eigenvalues of a symmetric matrix at `floor`. Returns true if
// anything changed; matrices already above the floor are left bit-identical.
bool floor_symmetric(Eigen::MatrixXd& m, double floor) {
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed while flooring covariance");
  if (es.eigenvalues().minCoeff() >= floor) return false;
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  m = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  m = 0.5 * (m + m.transpose());
  return true;
}

// Working parameters with means stored column-wise (dim x K).
struct Params {
  Eigen::VectorXd weights;
  Eigen::MatrixXd means;
  std::vector<Eigen::MatrixXd> covs;
  Eigen::MatrixXd base;
  Eigen::VectorXd scales;
  bool floored = false;
};

// Per-component log densities plus mixture log-likelihood. `resp` receives
// normalized responsibilities (K x N). Returns -inf if some covariance is not
// positive definite.
double e_step(const Params& p, const Eigen::MatrixXd& X, Eigen::MatrixXd& resp) {
  const auto K = p.weights.size();
  const auto d = X.rows();
  const auto N = X.cols();
  resp.resize(K, N);
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(p.covs[k]);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    Eigen::MatrixXd l_inv = Eigen::MatrixXd::Identity(d, d);
    llt.matrixL().solveInPlace(l_inv);
    const Eigen::MatrixXd z = l_inv * (X.colwise() - p.means.col(k));
    const double lw = p.weights[k] > 0.0 ? std::log(p.weights[k]) : -std::numeric_limits<double>::infinity();
    resp.row(k) = (lw - 0.5 * (static_cast<double>(d) * kLog2Pi + logdet)) -
                  0.5 * z.colwise().squaredNorm().array();
  }
  const Eigen::RowVectorXd m = resp.colwise().maxCoeff();
  if (!m.allFinite()) return -std::numeric_limits<double>::infinity();
  resp.array() = (resp.rowwise() - m).array().exp();
  const Eigen::RowVectorXd total = resp.colwise().sum();
  resp.array().rowwise() /= total.array();
  const double ll = (m.array() + total.array().log()).sum();
  return ll;
}

Eigen::MatrixXd scatter(const Eigen::MatrixXd& X, const Eigen::VectorXd& center, const Eigen::RowVectorXd& r) {
  Eigen::MatrixXd c = X.colwise() - center;
  Eigen::MatrixXd weighted = c.array().rowwise() * r.array();
  return weighted * c.transpose();
}

Params m_step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& resp, const EmOptions& opt, double floor,
              const Params* previous) {
  const auto K = resp.rows();
  const auto d = X.rows();
  const auto N = static_cast<double>(X.cols());
  Params p;
  Eigen::VectorXd nk = resp.rowwise().sum();
  // A component that lost all its mass keeps a vanishing weight and falls
  // back to the pooled data moments so the model stays well defined.
  const double tiny = 1e-12 * N;
  p.weights = nk / nk.sum();
  p.means = Eigen::MatrixXd::Zero(d, K);
  Eigen::VectorXd grand_mean = X.rowwise().mean();
  for (Eigen::Index k = 0; k < K; ++k) {
    if (opt.zero_mean) continue;
    p.means.col(k) = nk[k] > tiny ? Eigen::VectorXd((X * resp.row(k).transpose()) / nk[k]) : grand_mean;
  }
  std::vector<Eigen::MatrixXd> S(K);
  for (Eigen::Index k = 0; k < K; ++k) S[k] = scatter(X, p.means.col(k), resp.row(k));
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(d, d);
  for (const auto& s : S) pooled += s;
  pooled /= N;

  p.covs.resize(K);
  switch (opt.structure) {
    case CovarianceStructure::full:
      for (Eigen::Index k = 0; k < K; ++k) {
        p.covs[k] = nk[k] > tiny ? Eigen::MatrixXd(S[k] / nk[k]) : pooled;
        p.floored |= floor_symmetric(p.covs[k], floor);
      }
      break;
    case CovarianceStructure::spherical:
      p.base = Eigen::MatrixXd::Identity(d, d);
      p.scales.resize(K);
      for (Eigen::Index k = 0; k < K; ++k) {
        double s2 = nk[k] > tiny ? S[k].trace() / (static_cast<double>(d) * nk[k]) : pooled.trace() / d;
        if (!(s2 >= floor)) {
          s2 = floor;
          p.floored = true;
        }
        p.scales[k] = s2;
        p.covs[k] = s2 * p.base;
      }
      break;
    case CovarianceStructure::tied_scaled: {
      Eigen::VectorXd tau2 =
          previous && previous->scales.size() == K ? previous->scales : Eigen::VectorXd::Ones(K);
      // One conditional-maximization sweep: C_0 given tau, then tau given C_0.
      Eigen::MatrixXd c0 = Eigen::MatrixXd::Zero(d, d);
      for (Eigen::Index k = 0; k < K; ++k) c0 += S[k] / tau2[k];
      c0 /= N;
      Eigen::MatrixXd c0_floored = c0;
      floor_symmetric(c0_floored, floor);
      Eigen::LLT<Eigen::MatrixXd> llt(c0_floored);
      for (Eigen::Index k = 0; k < K; ++k) {
        if (nk[k] > tiny) tau2[k] = llt.solve(S[k]).trace() / (static_cast<double>(d) * nk[k]);
      }
      const double tmax = tau2.maxCoeff();
      for (Eigen::Index k = 0; k < K; ++k) {
        if (!(tau2[k] > 1e-12 * tmax)) {
          tau2[k] = 1e-12 * tmax;
          p.floored = true;
        }
      }
      const double norm = tau2[0];
      tau2 /= norm;
      c0 *= norm;
      p.floored |= floor_symmetric(c0, floor / tau2.minCoeff());
      p.base = c0;
      p.scales = tau2;
      for (Eigen::Index k = 0; k < K; ++k) p.covs[k] = tau2[k] * c0;
      break;
    }
  }
  return p;
}

// Distinct random data points as centers, then hard assignment to the
// nearest one. Distance-weighted seeding is avoided on purpose: with heavy
// tails it picks isolated outliers and leaves singleton components.
Eigen::MatrixXd seed_responsibilities(const Eigen::MatrixXd& X, int K, std::mt19937_64& rng) {
  const auto N = X.cols();
  auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  std::vector<Eigen::Index> centers;
  for (int attempt = 0; static_cast<int>(centers.size()) < K; ++attempt) {
    const auto pick = std::min<Eigen::Index>(N - 1, static_cast<Eigen::Index>(uniform() * static_cast<double>(N)));
    const bool repeated = std::any_of(centers.begin(), centers.end(),
                                      [&](Eigen::Index c) { return (X.col(c) - X.col(pick)).squaredNorm() == 0.0; });
    if (!repeated || attempt > 50 * K) centers.push_back(pick);
  }
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(K, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    Eigen::Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double dist = (X.col(n) - X.col(centers[k])).squaredNorm();
      if (dist < bd) {
        bd = dist;
        best = k;
      }
    }
    resp(best, n) = 1.0;
  }
  for (int k = 0; k < K; ++k) {
    resp.col(centers[k]).setZero();
    resp(k, centers[k]) = 1.0;
  }
  return resp;
}

GmmModel to_model(const Params& p, const EmOptions& opt) {
  GmmModel m;
  m.dim = static_cast<int>(p.means.rows());
  m.structure = opt.structure;
  m.zero_mean = opt.zero_mean;
  m.weights = p.weights;
  m.means = p.means.transpose();
  m.covariances = p.covs;
  m.base = p.base;
  m.scales = p.scales;
  return m;
}

Params to_params(const GmmModel& m) {
  Params p;
  p.weights = m.weights;
  p.means = m.means.transpose();
  p.covs = m.covariances;
  p.base = m.base;
  p.scales = m.scales;
  return p;
}

struct RestartOutcome {
  Params params;
  double ll = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

RestartOutcome run_restart(const Eigen::MatrixXd& X, const EmOptions& opt, double floor, std::mt19937_64& rng) {
  RestartOutcome out;
  Eigen::MatrixXd resp = seed_responsibilities(X, opt.components, rng);
  Params params = m_step(X, resp, opt, floor, nullptr);
  double prev = e_step(params, X, resp);
  out.iterations = 1;
  if (opt.record_trace) out.trace.push_back(prev);
  while (std::isfinite(prev) && out.iterations < opt.max_iterations) {
    Params next = m_step(X, resp, opt, floor, &params);
    Eigen::MatrixXd next_resp;
    const double ll = e_step(next, X, next_resp);
    ++out.iterations;
    if (!std::isfinite(ll)) break;
    if (opt.record_trace) out.trace.push_back(ll);
    const double gain = ll - prev;
    params = std::move(next);
    resp = std::move(next_resp);
    prev = ll;
    if (gain < opt.tolerance * std::abs(ll)) {
      out.converged = true;
      break;
    }
  }
  out.params = std::move(params);
  out.ll = prev;
  return out;
}

}  // namespace

int free_parameters(int dim, int components, CovarianceStructure structure, bool zero_mean) {
  const int d = dim;
  const int K = components;
  int count = (K - 1) + (zero_mean ? 0 : K * d);
  switch (structure) {
    case CovarianceStructure::full:
      count += K * d * (d + 1) / 2;
      break;
    case CovarianceStructure::tied_scaled:
      count += d * (d + 1) / 2 + (K - 1);
      break;
    case CovarianceStructure::spherical:
      count += K;
      break;
  }
  return count;
}

GmmModel fit_mle_gaussian(const Eigen::MatrixXd& data) {
  if (data.rows() < 2) throw ValidationError("gaussian fit needs at least two observations");
  auto [mean, cov] = sample_moments(data);
  floor_symmetric(cov, covariance_floor(cov));
  GmmModel m;
  m.dim = static_cast<int>(data.cols());
  m.weights = Eigen::VectorXd::Ones(1);
  m.means = mean.transpose();
  m.covariances = {cov};
  m.base = cov;
  m.scales = Eigen::VectorXd::Ones(1);
  return m;
}

FitResult fit_gmm_em(const Eigen::MatrixXd& data, const EmOptions& options) {
  if (options.components < 1) throw ValidationError("EM needs at least one component");
  if (data.rows() <= options.components) throw ValidationError("EM needs more observations than components");
  if (options.restarts < 1) throw ValidationError("EM needs at least one restart");
  const Eigen::MatrixXd X = data.transpose();
  const double floor = covariance_floor(sample_moments(data).second);
  const int p = free_parameters(static_cast<int>(data.cols()), options.components, options.structure,
                                options.zero_mean);
  const double log_n = std::log(static_cast<double>(data.rows()));

  FitResult best;
  double best_bic = std::numeric_limits<double>::infinity();
  RestartOutcome best_run;
  int used = 0;
  for (int r = 0; r < options.restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(options.seed >> 32), static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    auto run = run_restart(X, options, floor, rng);
    ++used;
    const double bic = -2.0 * run.ll + p * log_n;
    if (bic < best_bic) {
      best_bic = bic;
      best_run = std::move(run);
    }
  }
  if (!std::isfinite(best_bic)) throw NumericalError("EM produced no finite log-likelihood in any restart");
  best.model = to_model(best_run.params, options);
  best.report.log_likelihood = best_run.ll;
  best.report.bic = best_bic;
  best.report.iterations = best_run.iterations;
  best.report.restarts_used = used;
  best.report.converged = best_run.converged;
  best.report.zero_mean = options.zero_mean;
  best.report.degenerate = best_run.params.floored;
  best.report.covariance_floor = floor;
  best.report.structure = options.structure;
  best.trace = std::move(best_run.trace);
  return best;
}

FitResult fit_gmm_best(const Eigen::MatrixXd& data, EmOptions options,
                       const std::vector<CovarianceStructure>& structures) {
  if (structures.empty()) throw ValidationError("no covariance structure to fit");
  std::optional<FitResult> best;
  for (auto s : structures) {
    options.structure = s;
    auto r = fit_gmm_em(data, options);
    if (!best || r.report.bic < best->report.bic) best = std::move(r);
  }
  return std::move(*best);
}

GmmModel transform_classical(const GmmModel& model, const std::optional<Eigen::VectorXd>& line_weights) {
  check_model(model);
  const int d = model.dim;
  const int rows = line_weights ? 2 : 1;
  Eigen::MatrixXd A(rows, d);
  A.row(0).setOnes();
  if (line_weights) {
    if (line_weights->size() != d) throw ValidationError("transform: line weights do not match model dimension");
    A.row(1) = line_weights->transpose();
  }
  GmmModel out;
  out.dim = rows;
  out.zero_mean = model.zero_mean;
  out.weights = model.weights;
  out.means = model.means * A.transpose();
  out.structure = model.structure;
  // Images can be singular (a line whose flow moves in lockstep with Omega);
  // they get the same floor a direct fit would apply. An exactly zero
  // image stays deterministic.
  if (model.has_shared_base()) {
    // A shared base survives the linear map, so the image is tied-scaled.
    if (model.components() > 1) out.structure = CovarianceStructure::tied_scaled;
    out.base = A * model.base * A.transpose();
    if (out.base.trace() > 0.0) floor_symmetric(out.base, covariance_floor(out.base));
    out.scales = model.scales;
    for (int k = 0; k < model.components(); ++k) out.covariances.push_back(model.scales[k] * out.base);
  } else {
    for (const auto& c : model.covariances) {
      Eigen::MatrixXd image = A * c * A.transpose();
      if (image.trace() > 0.0) floor_symmetric(image, covariance_floor(image));
      out.covariances.push_back(std::move(image));
    }
  }
  return out;
}

double gmm_loglik(const GmmModel& model, const Eigen::MatrixXd& data) {
  if (data.cols() != model.dim) throw ValidationError("loglik: data dimension differs from model");
  Eigen::MatrixXd resp;
  const double ll = e_step(to_params(model), data.transpose(), resp);
  if (!std::isfinite(ll)) throw NumericalError("loglik: degenerate covariance gives a non-finite likelihood");
  return ll;
}

double gmm_cdf(const GmmModel& model, double x) {
  if (model.dim != 1) throw ValidationError("gmm_cdf needs a one-dimensional model");
  double p = 0.0;
  for (int k = 0; k < model.components(); ++k) {
    const double sd = std::sqrt(model.covariances[k](0, 0));
    const double m = model.means(k, 0);
    if (sd > 0.0) {
      p += model.weights[k] * normal_cdf((x - m) / sd);
    } else {
      p += model.weights[k] * (x >= m ? 1.0 : 0.0);
    }
  }
  return std::clamp(p, 0.0, 1.0);
}

std::pair<double, double> gmm_moments(const GmmModel& model) {
  if (model.dim != 1) throw ValidationError("gmm_moments needs a one-dimensional model");
  double e = 0.0;
  double second = 0.0;
  for (int k = 0; k < model.components(); ++k) {
    const double m = model.means(k, 0);
    e += model.weights[k] * m;
    second += model.weights[k] * (model.covariances[k](0, 0) + m * m);
  }
  return {e, second - e * e};
}

bool detect_tied_scaled(GmmModel& model, double rel_tol) {
  if (model.components() == 0) return false;
  const auto& c0 = model.covariances[0];
  const double t0 = c0.trace();
  if (!(t0 > 0.0)) return false;
  Eigen::VectorXd tau2(model.components());
  for (int k = 0; k < model.components(); ++k) {
    const auto& ck = model.covariances[k];
    tau2[k] = ck.trace() / t0;
    if ((ck - tau2[k] * c0).norm() > rel_tol * std::max(ck.norm(), 1e-300)) return false;
  }
  model.base = c0;
  model.scales = tau2;
  model.structure = CovarianceStructure::tied_scaled;
  return true;
}

void check_model(const GmmModel& model) {
  const int K = model.components();
  if (K < 1) throw ValidationError("mixture has no components");
  if (model.means.rows() != K || model.means.cols() != model.dim ||
      static_cast<int>(model.covariances.size()) != K) {
    throw ValidationError("mixture parameter shapes are inconsistent");
  }
  if ((model.weights.array() < 0.0).any() || std::abs(model.weights.sum() - 1.0) > 1e-12) {
    throw ValidationError("mixture weights are not on the simplex");
  }
  for (const auto& c : model.covariances) {
    if (c.rows() != model.dim || c.cols() != model.dim) throw ValidationError("covariance has wrong shape");
  }
}

namespace {

nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& rows, Eigen::Index nrows, Eigen::Index ncols) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != nrows) {
    throw ParseError("model: matrix has wrong number of rows");
  }
  Eigen::MatrixXd m(nrows, ncols);
  for (Eigen::Index r = 0; r < nrows; ++r) {
    const auto& row = rows[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != ncols) {
      throw ParseError("model: matrix has wrong number of columns");
    }
    for (Eigen::Index c = 0; c < ncols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

}  // namespace

nlohmann::json model_to_json(const GmmModel& model) {
  nlohmann::json j;
  j["dim"] = model.dim;
  j["K"] = model.components();
  j["structure"] = to_string(model.structure);
  j["zero_mean"] = model.zero_mean;
  j["weights"] = std::vector<double>(model.weights.data(), model.weights.data() + model.weights.size());
  j["means"] = matrix_rows(model.means);
  j["covariances"] = nlohmann::json::array();
  for (const auto& c : model.covariances) j["covariances"].push_back(matrix_rows(c));
  if (model.has_shared_base()) {
    j["base"] = matrix_rows(model.base);
    j["scales"] = std::vector<double>(model.scales.data(), model.scales.data() + model.scales.size());
  }
  return j;
}

GmmModel model_from_json(const nlohmann::json& j) {
  try {
    GmmModel m;
    m.dim = j.at("dim").get<int>();
    const int K = j.at("K").get<int>();
    m.structure = covariance_structure_from_string(j.value("structure", std::string("full")));
    m.zero_mean = j.value("zero_mean", false);
    auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != K) throw ParseError("model: weights length differs from K");
    m.weights = Eigen::Map<Eigen::VectorXd>(w.data(), K);
    m.means = matrix_from(j.at("means"), K, m.dim);
    const auto& covs = j.at("covariances");
    if (!covs.is_array() || static_cast<int>(covs.size()) != K) throw ParseError("model: need K covariances");
    for (const auto& c : covs) m.covariances.push_back(matrix_from(c, m.dim, m.dim));
    if (j.contains("base")) {
      m.base = matrix_from(j.at("base"), m.dim, m.dim);
      auto s = j.at("scales").get<std::vector<double>>();
      m.scales = Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    }
    check_model(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

nlohmann::json report_to_json(const FitReport& r) {
  return {{"log_likelihood", r.log_likelihood},
          {"bic", r.bic},
          {"iterations", r.iterations},
          {"restarts_used", r.restarts_used},
          {"converged", r.converged},
          {"zero_mean", r.zero_mean},
          {"degenerate", r.degenerate},
          {"covariance_floor", r.covariance_floor},
          {"structure", to_string(r.structure)}};
}

}  // namespace ccopf

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ccopf/errors.hpp"
#include "ccopf/estimation.hpp"
#include "ccopf/normal.hpp"

using namespace ccopf;

namespace {

GmmModel one_d(std::vector<double> w, std::vector<double> m, std::vector<double> v) {
  GmmModel g;
  g.dim = 1;
  const auto K = static_cast<Eigen::Index>(w.size());
  g.weights = Eigen::Map<Eigen::VectorXd>(w.data(), K);
  g.means = Eigen::Map<Eigen::VectorXd>(m.data(), K);
  for (double s : v) g.covariances.push_back(Eigen::MatrixXd::Constant(1, 1, s));
  return g;
}

Eigen::MatrixXd two_clusters(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = (i % 2 ? 10.0 : -10.0) + noise(rng);
  return x;
}

Eigen::MatrixXd heavy_2d(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::cauchy_distribution<double> c(0.0, 1.0);
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = c(rng);
    x(i, 1) = 0.4 * x(i, 0) + 0.3 * c(rng);
  }
  return x;
}

}  // namespace

TEST(Mle, TwoPointsOneDimension) {
  Eigen::MatrixXd d(2, 1);
  d << 1.0, 3.0;
  const auto m = fit_mle_gaussian(d);
  EXPECT_DOUBLE_EQ(m.means(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(m.covariances[0](0, 0), 1.0);
}

TEST(Mle, TwoPointsOuterProduct) {
  Eigen::MatrixXd d(2, 2);
  d << 0, 0, 2, 2;
  const auto m = fit_mle_gaussian(d);
  EXPECT_DOUBLE_EQ(m.means(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.means(0, 1), 1.0);
  // [[1,1],[1,1]] is singular; only its null direction is lifted to the floor.
  const Eigen::MatrixXd c = m.covariances[0];
  EXPECT_NEAR(c(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(c(0, 1), 1.0, 1e-9);
  EXPECT_GT(c.determinant(), 0.0);
}

TEST(Mle, ConstantDataIsFloored) {
  const auto m = fit_mle_gaussian(Eigen::MatrixXd::Constant(10, 1, 4.0));
  EXPECT_DOUBLE_EQ(m.means(0, 0), 4.0);
  EXPECT_GT(m.covariances[0](0, 0), 0.0);
  EXPECT_LE(m.covariances[0](0, 0), 1e-9);
}

TEST(Mle, NeedsTwoRows) { EXPECT_THROW(fit_mle_gaussian(Eigen::MatrixXd::Ones(1, 2)), ValidationError); }

TEST(Em, SingleComponentMatchesMle) {
  const auto x = heavy_2d(500, 1);
  EmOptions o;
  o.components = 1;
  o.restarts = 2;
  const auto fit = fit_gmm_em(x, o);
  const auto mle = fit_mle_gaussian(x);
  EXPECT_LT((fit.model.means - mle.means).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((fit.model.covariances[0] - mle.covariances[0]).cwiseAbs().maxCoeff(),
            1e-9 * mle.covariances[0].cwiseAbs().maxCoeff());
}

TEST(Em, RecoversSeparatedClusters) {
  EmOptions o;
  o.components = 2;
  o.seed = 4;
  const auto fit = fit_gmm_em(two_clusters(2000, 2), o);
  const double lo = fit.model.means.minCoeff(), hi = fit.model.means.maxCoeff();
  EXPECT_NEAR(lo, -10.0, 0.1);
  EXPECT_NEAR(hi, 10.0, 0.1);
  for (Eigen::Index k = 0; k < 2; ++k) EXPECT_NEAR(fit.model.weights[k], 0.5, 0.05);
  EXPECT_NEAR(fit.model.weights.sum(), 1.0, 1e-12);
}

TEST(Em, ZeroMeanFixesEveryMean) {
  EmOptions o;
  o.components = 3;
  o.zero_mean = true;
  for (auto s : {CovarianceStructure::full, CovarianceStructure::tied_scaled, CovarianceStructure::spherical}) {
    o.structure = s;
    const auto fit = fit_gmm_em(heavy_2d(800, 3), o);
    EXPECT_TRUE((fit.model.means.array() == 0.0).all()) << to_string(s);
    EXPECT_TRUE(fit.model.zero_mean);
  }
}

TEST(Em, LogLikelihoodNeverDecreases) {
  EmOptions o;
  o.components = 3;
  o.record_trace = true;
  for (auto s : {CovarianceStructure::full, CovarianceStructure::tied_scaled, CovarianceStructure::spherical}) {
    o.structure = s;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      o.seed = seed;
      const auto fit = fit_gmm_em(heavy_2d(1500, seed + 10), o);
      ASSERT_GE(fit.trace.size(), 2u);
      for (std::size_t i = 1; i < fit.trace.size(); ++i) {
        EXPECT_GE(fit.trace[i], fit.trace[i - 1] - 1e-8 * std::abs(fit.trace[i - 1])) << to_string(s) << " it " << i;
      }
    }
  }
}

TEST(Em, TiedScaledStructureHolds) {
  EmOptions o;
  o.components = 3;
  o.structure = CovarianceStructure::tied_scaled;
  const auto fit = fit_gmm_em(heavy_2d(2000, 5), o);
  const auto& m = fit.model;
  ASSERT_TRUE(m.has_shared_base());
  EXPECT_DOUBLE_EQ(m.scales[0], 1.0);
  for (int k = 0; k < m.components(); ++k) {
    EXPECT_LT((m.covariances[k] - m.scales[k] * m.base).norm(), 1e-9 * m.covariances[k].norm());
  }
  EXPECT_NO_THROW(check_model(m));
}

TEST(Em, TiedScaledAtLeastAsGoodAsSpherical) {
  // Spherical is the special case C_0 = s I.
  const auto x = heavy_2d(3000, 6);
  EmOptions o;
  o.components = 3;
  o.structure = CovarianceStructure::spherical;
  const double sph = fit_gmm_em(x, o).report.log_likelihood;
  o.structure = CovarianceStructure::tied_scaled;
  const double tied = fit_gmm_em(x, o).report.log_likelihood;
  EXPECT_GE(tied, sph - 1e-6 * std::abs(sph));
}

TEST(Em, ReportIsConsistentAndDeterministic) {
  const auto x = heavy_2d(1000, 7);
  EmOptions o;
  o.components = 2;
  o.seed = 99;
  const auto a = fit_gmm_em(x, o);
  const auto b = fit_gmm_em(x, o);
  EXPECT_EQ(model_to_json(a.model), model_to_json(b.model));
  const int p = free_parameters(2, 2, CovarianceStructure::full, false);
  EXPECT_EQ(p, 1 + 4 + 6);
  EXPECT_NEAR(a.report.bic, -2.0 * a.report.log_likelihood + p * std::log(1000.0), 1e-9);
  EXPECT_NEAR(gmm_loglik(a.model, x), a.report.log_likelihood, 1e-6 * std::abs(a.report.log_likelihood));
  EXPECT_EQ(a.report.restarts_used, 10);
}

TEST(Em, PreconditionsChecked) {
  EmOptions o;
  o.components = 3;
  EXPECT_THROW(fit_gmm_em(Eigen::MatrixXd::Ones(3, 1), o), ValidationError);
  o.components = 0;
  EXPECT_THROW(fit_gmm_em(Eigen::MatrixXd::Ones(30, 1), o), ValidationError);
}

TEST(Em, FreeParameterCounts) {
  EXPECT_EQ(free_parameters(2, 3, CovarianceStructure::tied_scaled, false), 2 + 6 + 3 + 2);
  EXPECT_EQ(free_parameters(2, 3, CovarianceStructure::spherical, true), 2 + 3);
  EXPECT_EQ(free_parameters(1, 1, CovarianceStructure::full, false), 2);
}

TEST(Loglik, StandardNormalAtZero) {
  const auto g = one_d({1.0}, {0.0}, {1.0});
  EXPECT_NEAR(gmm_loglik(g, Eigen::MatrixXd::Zero(1, 1)), -0.9189385332046727, 1e-14);
}

TEST(Loglik, IdenticalComponentsCollapse) {
  const auto one = one_d({1.0}, {0.3}, {2.0});
  const auto two = one_d({0.5, 0.5}, {0.3, 0.3}, {2.0, 2.0});
  const Eigen::MatrixXd x = Eigen::VectorXd::LinSpaced(17, -4.0, 5.0);
  EXPECT_NEAR(gmm_loglik(one, x), gmm_loglik(two, x), 1e-12);
}

TEST(Cdf, Examples) {
  EXPECT_DOUBLE_EQ(gmm_cdf(one_d({1.0}, {0.0}, {1.0}), 0.0), 0.5);
  EXPECT_NEAR(gmm_cdf(one_d({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0}), 0.0), 0.5, 1e-15);
  EXPECT_NEAR(gmm_cdf(one_d({1.0}, {0.0}, {4.0}), 2.0), normal_cdf(1.0), 1e-15);
}

TEST(Cdf, MonotoneWithLimits) {
  const auto g = one_d({0.2, 0.5, 0.3}, {-3.0, 0.0, 8.0}, {0.5, 4.0, 100.0});
  double prev = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double v = gmm_cdf(g, -60.0 + 0.3 * i);
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_LT(gmm_cdf(g, -1e7), 1e-12);
  EXPECT_GT(gmm_cdf(g, 1e7), 1.0 - 1e-12);
}

TEST(Moments, Examples) {
  auto [e1, v1] = gmm_moments(one_d({1.0}, {1.5}, {0.25}));
  EXPECT_DOUBLE_EQ(e1, 1.5);
  EXPECT_DOUBLE_EQ(v1, 0.25);
  auto [e2, v2] = gmm_moments(one_d({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0}));
  EXPECT_DOUBLE_EQ(e2, 0.0);
  EXPECT_DOUBLE_EQ(v2, 2.0);
}

TEST(Transform, IndependentUnitsAddVariances) {
  GmmModel xi;
  xi.dim = 2;
  xi.weights = Eigen::VectorXd::Ones(1);
  xi.means = Eigen::MatrixXd::Zero(1, 2);
  xi.covariances = {Eigen::MatrixXd::Identity(2, 2)};
  const auto omega = transform_classical(xi);
  EXPECT_EQ(omega.dim, 1);
  EXPECT_DOUBLE_EQ(omega.means(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(omega.covariances[0](0, 0), 2.0);
}

TEST(Transform, LineImageUsesBothRows) {
  GmmModel xi;
  xi.dim = 3;
  xi.weights = Eigen::Vector2d(0.4, 0.6);
  xi.means = Eigen::MatrixXd(2, 3);
  xi.means << 1, 2, 3, -1, 0, 1;
  Eigen::MatrixXd c0(3, 3);
  c0 << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 3;
  xi.covariances = {c0, 4.0 * c0};
  ASSERT_TRUE(detect_tied_scaled(xi));
  EXPECT_DOUBLE_EQ(xi.scales[1], 4.0);
  const Eigen::Vector3d h(0.5, -0.25, 0.0);
  const auto eta = transform_classical(xi, h);
  Eigen::MatrixXd A(2, 3);
  A.row(0).setOnes();
  A.row(1) = h.transpose();
  EXPECT_NEAR(eta.means(0, 0), 6.0, 1e-15);
  EXPECT_NEAR(eta.means(0, 1), 0.0, 1e-15);
  EXPECT_LT((eta.covariances[1] - A * (4.0 * c0) * A.transpose()).norm(), 1e-12);
  EXPECT_EQ(eta.structure, CovarianceStructure::tied_scaled);
  EXPECT_LT((eta.covariances[1] - eta.scales[1] * eta.base).norm(), 1e-12);
}

TEST(Transform, TiedDetectionRejectsFreeCovariances) {
  GmmModel xi;
  xi.dim = 2;
  xi.weights = Eigen::Vector2d(0.5, 0.5);
  xi.means = Eigen::MatrixXd::Zero(2, 2);
  xi.covariances = {Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(1.0, 3.0).asDiagonal()};
  EXPECT_FALSE(detect_tied_scaled(xi));
}

TEST(Transform, FitThenTransformEqualsTransformThenFit) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 2 + rep % 5;
    Eigen::MatrixXd x(300, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng) * (1.0 + rep) - 0.3 * rep;
    const auto via_xi = transform_classical(fit_mle_gaussian(x));
    const auto direct = fit_mle_gaussian(x.rowwise().sum());
    const double v = direct.covariances[0](0, 0);
    EXPECT_NEAR(via_xi.means(0, 0), direct.means(0, 0), 1e-10 * std::max(1.0, std::abs(direct.means(0, 0))));
    EXPECT_NEAR(via_xi.covariances[0](0, 0), v, 1e-10 * v);
  }
}

TEST(ModelIo, JsonRoundTrip) {
  EmOptions o;
  o.components = 2;
  o.structure = CovarianceStructure::tied_scaled;
  const auto m = fit_gmm_em(heavy_2d(400, 9), o).model;
  const auto back = model_from_json(model_to_json(m));
  EXPECT_EQ(model_to_json(back), model_to_json(m));
  EXPECT_EQ(back.structure, CovarianceStructure::tied_scaled);
  EXPECT_THROW(model_from_json({{"dim", 1}}), std::exception);
}

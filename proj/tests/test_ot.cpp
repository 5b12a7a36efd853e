#include <gtest/gtest.h>

#include "wormhole/ot.hpp"

using namespace wormhole;

namespace {

PointCloud make_cloud(std::initializer_list<std::initializer_list<double>> rows) {
  PointCloud c;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.begin()->size());
  c.points.resize(n, d);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (const double v : row) c.points(i, j++) = v;
    ++i;
  }
  return c;
}

PointCloud random_cloud(int n, int d, Rng& rng, double scale = 1.0) {
  PointCloud c;
  c.points.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) c.points(i, j) = scale * (2.0 * rng.uniform() - 1.0);
  return c;
}

OTConfig tight(double eps) {
  OTConfig cfg;
  cfg.epsilon = eps;
  cfg.tol = 1e-12;
  cfg.max_iters = 200000;
  return cfg;
}

}  // namespace

TEST(CostMatrix, SqEuclideanAndL1) {
  const PointCloud x = make_cloud({{0, 0}});
  const PointCloud y = make_cloud({{3, 4}});
  EXPECT_DOUBLE_EQ(cost_matrix(x, y, GroundMetric::sq_euclidean)(0, 0), 25.0);
  EXPECT_DOUBLE_EQ(cost_matrix(x, y, GroundMetric::l1)(0, 0), 7.0);
}

TEST(CostMatrix, ZeroDiagonalOnIdenticalClouds) {
  Rng rng(1);
  const PointCloud x = random_cloud(6, 3, rng);
  const Matrix c = cost_matrix(x, x, GroundMetric::sq_euclidean);
  EXPECT_DOUBLE_EQ(c.diagonal().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GE(c.minCoeff(), 0.0);
}

TEST(CostMatrix, DimensionMismatchThrows) {
  PointCloud x, y;
  x.points = Matrix::Zero(2, 2);
  y.points = Matrix::Zero(2, 3);
  EXPECT_THROW(cost_matrix(x, y, GroundMetric::sq_euclidean),
               std::invalid_argument);
}

TEST(Sinkhorn, SinglePointsHaveClosedForm) {
  const PointCloud x = make_cloud({{0.2, -0.4}});
  const PointCloud y = make_cloud({{1.0, 0.6}});
  OTConfig cfg;
  cfg.epsilon = 0.05;
  const auto res = sinkhorn(x, y, cfg);
  const double c = (x.points.row(0) - y.points.row(0)).squaredNorm();
  EXPECT_NEAR(res.value, c - cfg.epsilon, 1e-12);
  EXPECT_NEAR(res.plan.coupling(0, 0), 1.0, 1e-12);
}

TEST(Sinkhorn, SelfTransportIsNonzeroUnderRegularization) {
  // the regularized objective of a cloud against itself is biased away from
  // zero, which is exactly what the divergence subtracts off
  Rng rng(3);
  const PointCloud x = random_cloud(5, 2, rng);
  OTConfig cfg;
  cfg.epsilon = 0.1;
  EXPECT_GT(std::abs(sinkhorn(x, x, cfg).value), 1e-6);
}

TEST(Sinkhorn, TwoPointExampleNearExactCost) {
  const PointCloud x = make_cloud({{0, 0}, {1, 0}});
  const PointCloud y = make_cloud({{0, 1}, {1, 1}});
  const auto res = sinkhorn(x, y, tight(0.001));
  EXPECT_TRUE(res.plan.converged);
  EXPECT_NEAR(res.value, 1.0, 0.01);
  EXPECT_NEAR(exact_ot_small(x, y), 1.0, 1e-12);
}

TEST(Sinkhorn, ConvergedPlanSatisfiesMarginals) {
  Rng rng(5);
  const PointCloud x = random_cloud(7, 2, rng);
  const PointCloud y = random_cloud(4, 2, rng);
  OTConfig cfg;
  cfg.epsilon = 0.05;
  cfg.tol = 1e-9;
  cfg.max_iters = 100000;
  const auto res = sinkhorn(x, y, cfg);
  ASSERT_TRUE(res.plan.converged);
  const Vector rows = res.plan.coupling.rowwise().sum();
  const Vector cols = res.plan.coupling.colwise().sum().transpose();
  double viol = (rows.array() - 1.0 / 7).abs().sum() +
                (cols.array() - 1.0 / 4).abs().sum();
  EXPECT_LT(viol, 1e-8);
  EXPECT_GT(res.plan.coupling.minCoeff(), 0.0);
}

TEST(Sinkhorn, ReportsNonConvergenceWhenStarved) {
  Rng rng(6);
  const PointCloud x = random_cloud(6, 2, rng);
  const PointCloud y = random_cloud(6, 2, rng);
  OTConfig cfg;
  cfg.epsilon = 0.001;
  cfg.max_iters = 3;
  EXPECT_FALSE(sinkhorn(x, y, cfg).plan.converged);
}

TEST(Sinkhorn, PermutationInvariantInRowOrder) {
  Rng rng(7);
  const PointCloud x = random_cloud(5, 2, rng);
  PointCloud y = random_cloud(5, 2, rng);
  PointCloud y_perm;
  y_perm.points.resize(5, 2);
  const int perm[5] = {3, 0, 4, 1, 2};
  for (int i = 0; i < 5; ++i) y_perm.points.row(i) = y.points.row(perm[i]);
  OTConfig cfg;
  cfg.epsilon = 0.05;
  const double a = sinkhorn(x, y, cfg).value;
  const double b = sinkhorn(x, y_perm, cfg).value;
  EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, std::abs(a)));
}

TEST(Sinkhorn, ThrowsOnUnderflowNamingEpsilon) {
  const PointCloud x = make_cloud({{0, 0}, {0, 1e-9}});
  const PointCloud y = make_cloud({{2e6, 2e6}, {-2e6, 2e6}});
  OTConfig cfg;
  cfg.epsilon = 1e-300;  // pushes cost / epsilon past the double range
  try {
    sinkhorn(x, y, cfg);
    FAIL() << "expected divergence";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("epsilon"), std::string::npos);
  }
}

TEST(SinkhornDivergence, ZeroOnIdenticalClouds) {
  Rng rng(8);
  const PointCloud x = random_cloud(6, 2, rng);
  OTConfig cfg;
  cfg.epsilon = 0.1;
  EXPECT_NEAR(sinkhorn_divergence(x, x, cfg), 0.0, 1e-6);
}

TEST(SinkhornDivergence, SinglePointsGiveGroundCost) {
  const PointCloud x = make_cloud({{0.3, 0.9}});
  const PointCloud y = make_cloud({{-0.2, 0.1}});
  OTConfig cfg;
  cfg.epsilon = 0.07;
  const double expected = (x.points.row(0) - y.points.row(0)).squaredNorm();
  EXPECT_NEAR(sinkhorn_divergence(x, y, cfg), expected, 1e-12);
}

TEST(SinkhornDivergence, WithinFivePercentOfExactOnSmallClouds) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const PointCloud x = random_cloud(4, 2, rng);
    const PointCloud y = random_cloud(4, 2, rng);
    const double exact = exact_ot_small(x, y);
    const double s = sinkhorn_divergence(x, y, tight(0.01));
    EXPECT_NEAR(s, exact, 0.05 * std::max(std::abs(exact), 0.05));
  }
}

TEST(SinkhornDivergence, SymmetricInArguments) {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const PointCloud x = random_cloud(5, 3, rng);
    const PointCloud y = random_cloud(3, 3, rng);
    const OTConfig cfg = tight(0.05);
    EXPECT_NEAR(sinkhorn_divergence(x, y, cfg), sinkhorn_divergence(y, x, cfg),
                1e-8);
  }
}

TEST(SinkhornDivergence, ErrorShrinksWithEpsilon) {
  Rng rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    const PointCloud x = random_cloud(4, 2, rng);
    const PointCloud y = random_cloud(4, 2, rng);
    const double exact = exact_ot_small(x, y);
    double prev = std::numeric_limits<double>::infinity();
    for (const double eps : {0.1, 0.05, 0.01, 0.005}) {
      const double err = std::abs(sinkhorn_divergence(x, y, tight(eps)) - exact);
      // non-increasing down to the solver noise floor
      EXPECT_LE(err, std::max(prev * 1.05, 1e-6));
      prev = err;
    }
  }
}

TEST(ExactOtSmall, BasicCases) {
  const PointCloud x = make_cloud({{0.1, 0.2}, {0.7, -0.3}, {0.4, 0.5}});
  EXPECT_DOUBLE_EQ(exact_ot_small(x, x), 0.0);
  const PointCloud a = make_cloud({{0.5, 0.5}});
  const PointCloud b = make_cloud({{1.5, 0.5}});
  EXPECT_DOUBLE_EQ(exact_ot_small(a, b), 1.0);
}

TEST(ExactOtSmall, RejectsMismatchedOrLargeClouds) {
  PointCloud x, y;
  x.points = Matrix::Zero(3, 2);
  y.points = Matrix::Zero(4, 2);
  EXPECT_THROW(exact_ot_small(x, y), std::invalid_argument);
  x.points = Matrix::Zero(8, 2);
  y.points = Matrix::Zero(8, 2);
  EXPECT_THROW(exact_ot_small(x, y), std::invalid_argument);
}

TEST(DivergenceGrad, VanishesAtIdenticalClouds) {
  Rng rng(12);
  const PointCloud x = random_cloud(5, 2, rng);
  const Matrix g = sinkhorn_divergence_grad(x, x, tight(0.1));
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(DivergenceGrad, SinglePointClosedForm) {
  const PointCloud x = make_cloud({{0.4, -0.2}});
  const PointCloud y = make_cloud({{-0.1, 0.3}});
  const Matrix g = sinkhorn_divergence_grad(x, y, tight(0.05));
  EXPECT_NEAR(g(0, 0), 2.0 * (0.4 - (-0.1)), 1e-10);
  EXPECT_NEAR(g(0, 1), 2.0 * (-0.2 - 0.3), 1e-10);
}

TEST(DivergenceGrad, MatchesCentralFiniteDifferences) {
  Rng rng(13);
  const PointCloud x = random_cloud(3, 2, rng);
  const PointCloud y = random_cloud(3, 2, rng);
  const OTConfig cfg = tight(0.1);
  const Matrix analytic = sinkhorn_divergence_grad(x, y, cfg);
  const double h = 1e-4;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    for (Eigen::Index j = 0; j < x.dim(); ++j) {
      PointCloud xp = x, xm = x;
      xp.points(i, j) += h;
      xm.points(i, j) -= h;
      const double fd =
          (sinkhorn_divergence(xp, y, cfg) - sinkhorn_divergence(xm, y, cfg)) /
          (2 * h);
      EXPECT_NEAR(analytic(i, j), fd,
                  1e-3 * std::max(1.0, std::abs(fd)));
    }
}

TEST(PairwiseDivergence, SymmetricZeroDiagonalAndThreadInvariant) {
  Rng rng(14);
  std::vector<PointCloud> clouds;
  for (int i = 0; i < 5; ++i) clouds.push_back(random_cloud(4, 2, rng));
  OTConfig cfg;
  cfg.epsilon = 0.1;
  const Matrix d1 = pairwise_divergence_matrix(clouds, cfg, 1);
  const Matrix d2 = pairwise_divergence_matrix(clouds, cfg, 4);
  EXPECT_EQ(d1, d2);  // schedule independence is bitwise
  EXPECT_DOUBLE_EQ(d1.diagonal().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((d1 - d1.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

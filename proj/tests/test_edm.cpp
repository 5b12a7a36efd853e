#include <gtest/gtest.h>

#include "wormhole/edm.hpp"
#include "wormhole/rng.hpp"

using namespace wormhole;

namespace {

Matrix random_symmetric(int n, Rng& rng, double scale = 1.0) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      const double v = scale * (2.0 * rng.uniform() - 1.0);
      a(i, j) = v;
      a(j, i) = v;
    }
  return a;
}

// squared-distance matrix of random points: a genuine EDM
Matrix random_edm(int n, int d, Rng& rng) {
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
  return pairwise_sq_dists(x);
}

// random hollow symmetric non-negative matrix, redrawn until its criterion
// spectrum is genuinely indefinite
Matrix random_non_euclidean(int n, Rng& rng) {
  for (;;) {
    Matrix d(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        const double v = 2.0 * rng.uniform();
        d(i, j) = v;
        d(j, i) = v;
      }
    d.diagonal().setZero();
    const SpectralSummary s = criterion(d);
    if (s.eigenvalues.minCoeff() < -1e-2) return d;
  }
}

}  // namespace

TEST(Criterion, EuclideanInputHasNonNegativeSpectrum) {
  Matrix d(3, 3);
  d << 0, 1, 4, 1, 0, 1, 4, 1, 0;  // points 0, 1, 2 on a line, squared
  const SpectralSummary s = criterion(d);
  EXPECT_GE(s.eigenvalues.minCoeff(), -1e-10);
}

TEST(Criterion, ZeroMatrixGivesZero) {
  const SpectralSummary s = criterion(Matrix::Zero(4, 4));
  EXPECT_DOUBLE_EQ(s.eigenvalues.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Criterion, OnesVectorInNullSpace) {
  Rng rng(1);
  const Matrix d = random_non_euclidean(8, rng);
  const Matrix f = criterion_matrix(d);
  EXPECT_LT((f * Vector::Ones(8)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Criterion, EigenvectorsReconstructAndAreOrthonormal) {
  Rng rng(2);
  const Matrix d = random_non_euclidean(10, rng);
  const SpectralSummary s = criterion(d);
  const Matrix f = criterion_matrix(d);
  const Matrix recon = s.eigenvectors * s.eigenvalues.asDiagonal() *
                       s.eigenvectors.transpose();
  EXPECT_LT((recon - f).norm(), 1e-8);
  EXPECT_LT((s.eigenvectors.transpose() * s.eigenvectors -
             Matrix::Identity(10, 10))
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
  for (Eigen::Index i = 1; i < s.eigenvalues.size(); ++i)
    EXPECT_GE(s.eigenvalues[i - 1], s.eigenvalues[i]);
}

TEST(LowerBound, ZeroOnEuclideanInput) {
  Rng rng(3);
  EXPECT_LT(lower_bound(random_edm(9, 3, rng)), 1e-12);
}

TEST(LowerBound, QuadraticUnderScaling) {
  Rng rng(4);
  const Matrix d = random_non_euclidean(7, rng);
  const double base = lower_bound(d);
  ASSERT_GT(base, 0.0);
  EXPECT_NEAR(lower_bound(3.0 * d), 9.0 * base, 1e-8 * 9.0 * base);
}

TEST(UpperBound, ZeroOnEuclideanInput) {
  Rng rng(5);
  const BoundsReport r = upper_bound(random_edm(9, 3, rng));
  EXPECT_LT(r.upper, 1e-10);
  EXPECT_LT(r.delta_g.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(UpperBound, DominatesLowerBound) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const BoundsReport r = upper_bound(random_non_euclidean(8, rng));
    EXPECT_LE(r.lower, r.upper);
    EXPECT_DOUBLE_EQ(r.lower, r.neg_eigen_mass);
  }
}

TEST(UpperBound, EqualsStressOfConstructedFeasiblePoint) {
  // U is exactly the stress of D_A + hollow_completion(D_A), the feasible
  // matrix built in the bound's derivation; this pins the eigenvector index
  // convention in delta_g.
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix d = random_non_euclidean(9, rng);
    const BoundsReport r = upper_bound(d);
    const SpectralSummary s = criterion(d);
    const double thr = kEigenTruncation * s.eigenvalues.cwiseAbs().maxCoeff();
    Matrix da = Matrix::Zero(9, 9);
    for (Eigen::Index j = 0; j < 9; ++j)
      if (s.eigenvalues[j] > thr)
        da -= s.eigenvalues[j] * s.eigenvectors.col(j) *
              s.eigenvectors.col(j).transpose();
    const Matrix feasible = da + hollow_completion(da);
    EXPECT_NEAR(stress(d, feasible), r.upper, 1e-8 * std::max(1.0, r.upper));
  }
}

TEST(LowerBound, EqualsStressOfC1Projection) {
  Rng rng(8);
  const Matrix d = random_non_euclidean(9, rng);
  EXPECT_NEAR(stress(d, project_psd_centered(d)), lower_bound(d),
              1e-8 * std::max(1.0, lower_bound(d)));
}

TEST(HollowCompletion, HollowInputGivesZero) {
  Rng rng(9);
  Matrix a = random_symmetric(6, rng);
  a.diagonal().setZero();
  EXPECT_DOUBLE_EQ(hollow_completion(a).cwiseAbs().maxCoeff(), 0.0);
}

TEST(HollowCompletion, IdentityCase) {
  const Matrix g = hollow_completion(Matrix::Identity(2, 2));
  EXPECT_TRUE(g.isApprox(-Matrix::Ones(2, 2)));
}

TEST(HollowCompletion, SatisfiesLemmaOnRandomMatrices) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = random_symmetric(6, rng, 2.0);
    const Matrix g = hollow_completion(a);
    EXPECT_LT((a + g).diagonal().cwiseAbs().maxCoeff(), 1e-12);
    // JGJ = 0: G is centered away entirely
    const Matrix f = criterion_matrix(g);
    EXPECT_LT(f.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(HollowCompletion, NsdInputBecomesNonNegative) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix b(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) b(i, j) = rng.normal();
    const Matrix nsd = -b * b.transpose();
    const Matrix q = nsd + hollow_completion(nsd);
    EXPECT_GE(q.minCoeff(), -1e-10);
  }
}

TEST(ProjectPsdCentered, FixedPointOnFeasibleInput) {
  Rng rng(12);
  const Matrix d = random_edm(8, 3, rng);  // -JDJ is PSD for an EDM
  EXPECT_LT((project_psd_centered(d) - d).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ProjectPsdCentered, IdempotentAndMeanPreserving) {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix k = random_symmetric(7, rng);
    const Matrix once = project_psd_centered(k);
    const Matrix twice = project_psd_centered(once);
    EXPECT_LT((twice - once).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((once.rowwise().mean() - k.rowwise().mean()).cwiseAbs().maxCoeff(),
              1e-8);
    EXPECT_GE(min_criterion_eigenvalue(once), -1e-8);
  }
}

TEST(ProjectHollowAndNonneg, BasicBehavior) {
  Rng rng(14);
  Matrix k = random_symmetric(5, rng);
  const Matrix h = project_hollow(k);
  EXPECT_DOUBLE_EQ(h.diagonal().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(project_hollow(h), h);
  EXPECT_TRUE(project_nonneg(-Matrix::Identity(4, 4)).isZero());
  const Matrix nn = project_nonneg(k);
  EXPECT_GE(nn.minCoeff(), 0.0);
  EXPECT_EQ(project_nonneg(nn), nn);
}

TEST(Dykstra, FixedPointOnValidEdm) {
  Rng rng(15);
  const Matrix d = random_edm(8, 3, rng);
  const ProjectionState st = dykstra_project(d, 1e-9, 500);
  EXPECT_TRUE(st.converged);
  EXPECT_LT((st.result - d).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Dykstra, MatchesAlternatingProjectionsOnNegativeIdentity) {
  const Matrix k = -Matrix::Identity(5, 5);
  const ProjectionState st = dykstra_project(k, 1e-10, 2000);
  // oracle: plain cyclic projections (no corrections), which land on the
  // same point when the intersection projection is the zero matrix
  Matrix x = k;
  for (int cycle = 0; cycle < 2000; ++cycle)
    x = project_nonneg(project_hollow(project_psd_centered(x)));
  EXPECT_LT((st.result - x).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(st.result.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_DOUBLE_EQ(st.hollow_violation, 0.0);
  EXPECT_DOUBLE_EQ(st.nonneg_violation, 0.0);
}

TEST(Dykstra, ProducesFeasiblePointOnRandomInput) {
  Rng rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix k = random_non_euclidean(8, rng);
    const ProjectionState st = dykstra_project(k, 1e-8, 500);
    EXPECT_TRUE(st.converged);
    EXPECT_LE(st.psd_violation, 1e-8);
    EXPECT_LE(st.hollow_violation, 1e-8);
    EXPECT_LE(st.nonneg_violation, 1e-8);
  }
}

TEST(Dykstra, AgreesWithSingleSetProjectionWhenOthersHold) {
  // EDM plus a positive diagonal violates only hollowness, and removing the
  // diagonal is the nearest feasible point.
  Rng rng(17);
  const Matrix d = random_edm(7, 3, rng);
  Matrix k = d;
  k.diagonal().array() += 0.5;
  const ProjectionState st = dykstra_project(k, 1e-9, 500);
  EXPECT_LT((st.result - project_hollow(k)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Dykstra, ReportsViolationsWhenStarved) {
  Rng rng(18);
  const Matrix k = random_non_euclidean(8, rng);
  const ProjectionState st = dykstra_project(k, 1e-14, 2);
  EXPECT_FALSE(st.converged);
  EXPECT_GE(st.psd_violation + st.hollow_violation + st.nonneg_violation, 0.0);
}

TEST(Pgd, EuclideanInputIsAlreadyOptimal) {
  Rng rng(19);
  const Matrix d = random_edm(8, 3, rng);
  const PgdResult res = pgd_edm(d);
  EXPECT_LE(res.stress, 1e-6);
}

TEST(Pgd, StressLandsBetweenBounds) {
  Rng rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix d = random_non_euclidean(8, rng);
    const PgdResult res = pgd_edm(d);
    EXPECT_GE(res.stress, lower_bound(d) - 1e-6);
    EXPECT_LE(res.stress, upper_bound(d).upper + 1e-6);
    EXPECT_LE(std::abs(res.projected.diagonal().cwiseAbs().maxCoeff()), 1e-8);
    EXPECT_GE(res.projected.minCoeff(), -1e-8);
  }
}

TEST(Cmds, RecoversKnownConfiguration) {
  Matrix x(4, 2);
  x << 0, 0, 1, 0, 0, 1, 1, 1;
  const Matrix d = pairwise_sq_dists(x);
  const Matrix emb = cmds(d, 2);
  EXPECT_LT((pairwise_sq_dists(emb) - d).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Cmds, FullDimensionReproducesEdm) {
  Rng rng(21);
  const Matrix d = random_edm(9, 4, rng);
  const Matrix emb = cmds(d, 9);
  EXPECT_LE(stress(d, pairwise_sq_dists(emb)), 1e-6);
  EXPECT_LT(lower_bound(d), 1e-10);
  EXPECT_LT(upper_bound(d).upper, 1e-10);
}

TEST(Cmds, TruncationLosesStress) {
  Matrix x(4, 2);
  x << 0, 0, 2, 0, 0, 2, 2, 2;
  const Matrix d = pairwise_sq_dists(x);
  const Matrix emb = cmds(d, 1);
  EXPECT_GT(stress(d, pairwise_sq_dists(emb)), 0.1);
}

TEST(Stress, CountsBothTriangles) {
  Matrix d = Matrix::Zero(3, 3);
  Matrix dh = d;
  dh(0, 1) = dh(1, 0) = 0.5;
  EXPECT_DOUBLE_EQ(stress(d, dh), 2 * 0.25);
  EXPECT_DOUBLE_EQ(stress(d, d), 0.0);
  EXPECT_THROW(stress(d, Matrix::Zero(2, 2)), std::invalid_argument);
}

TEST(ValidateDistanceMatrix, RejectsBadInputs) {
  Matrix d = Matrix::Zero(3, 3);
  d(0, 1) = 1.0;  // asymmetric
  EXPECT_THROW(validate_distance_matrix(d), std::invalid_argument);
  Matrix h = Matrix::Identity(3, 3);
  EXPECT_THROW(validate_distance_matrix(h), std::invalid_argument);
  Matrix ok = Matrix::Zero(3, 3);
  ok(0, 1) = ok(1, 0) = 2.0;
  EXPECT_NO_THROW(validate_distance_matrix(ok));
}

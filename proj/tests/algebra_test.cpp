#include "hetcoef/algebra.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"

using namespace hetcoef;

namespace {

MomentMatrix gps_moment(std::vector<double> probs) {
  return moment_matrix_from_gps(GpsVector(std::move(probs)));
}

TEST(TreatmentProfile, DesignVectorHasInterceptFirst) {
  const TreatmentProfile x({1, 0, 1});
  const Vector p = x.design();
  ASSERT_EQ(p.size(), 4);
  EXPECT_EQ(p(0), 1.0);
  EXPECT_EQ(p(1), 1.0);
  EXPECT_EQ(p(2), 0.0);
  EXPECT_EQ(p(3), 1.0);
  EXPECT_FALSE(x.exclusive());
  EXPECT_TRUE(TreatmentProfile({0, 1, 0}).exclusive());
  EXPECT_TRUE(TreatmentProfile::none(3).exclusive());
}

TEST(TreatmentProfile, RejectsDegenerateInput) {
  EXPECT_THROW(TreatmentProfile({}), Error);
  EXPECT_THROW(TreatmentProfile({0, 2}), Error);
  EXPECT_THROW(TreatmentProfile::none(0), Error);
  EXPECT_THROW(TreatmentProfile::single(2, 2), Error);
}

TEST(GpsVector, ValidatesInvariants) {
  const GpsVector g({0.3, 0.2});
  EXPECT_DOUBLE_EQ(g.sum(), 0.5);
  EXPECT_DOUBLE_EQ(g.min(), 0.2);
  EXPECT_NO_THROW(GpsVector({1.0}));
  EXPECT_THROW(GpsVector({}), Error);
  EXPECT_THROW(GpsVector({-0.1, 0.2}), Error);
  EXPECT_THROW(GpsVector({0.5, 0.6}), Error);  // sum 1.1 > 1 + 1e-12
  EXPECT_THROW(GpsVector({1.2}), Error);
}

TEST(MomentMatrixFromGps, MatchesBlockFormula) {
  const MomentMatrix m = gps_moment({0.3, 0.2});
  Matrix expected(3, 3);
  expected << 1.0, 0.3, 0.2, 0.3, 0.3, 0.0, 0.2, 0.0, 0.2;
  EXPECT_EQ(m.values(), expected);  // exact arithmetic on inputs

  const MomentMatrix binary = gps_moment({0.5});
  Matrix expected2(2, 2);
  expected2 << 1.0, 0.5, 0.5, 0.5;
  EXPECT_EQ(binary.values(), expected2);
}

TEST(MomentMatrixFromGps, SumOneIsSingular) {
  const MomentMatrix m = gps_moment({0.5, 0.5});
  EXPECT_NEAR(oracle::gauss_det(m.values()), 0.0, 1e-15);
  EXPECT_LE(std::abs(smallest_eigenvalue(m)), 1e-12);
  EXPECT_TRUE(is_singular(m));
}

TEST(MomentMatrixFromJoint, MatchesEnumeratedOuterProducts) {
  // T=1, Pr[X=1] = 0.5 agrees with the exclusive block form.
  const JointDistribution binary(
      1, {{TreatmentProfile({1}), 0.5}, {TreatmentProfile({0}), 0.5}});
  EXPECT_EQ(moment_matrix_from_joint(binary).values(), gps_moment({0.5}).values());

  // Point mass on the all-off profile.
  const JointDistribution point(2, {{TreatmentProfile({0, 0}), 1.0}});
  Matrix expected = Matrix::Zero(3, 3);
  expected(0, 0) = 1.0;
  EXPECT_EQ(moment_matrix_from_joint(point).values(), expected);

  // Uniform over all four profiles.
  const JointDistribution uniform(2, {{TreatmentProfile({0, 0}), 0.25},
                                      {TreatmentProfile({0, 1}), 0.25},
                                      {TreatmentProfile({1, 0}), 0.25},
                                      {TreatmentProfile({1, 1}), 0.25}});
  Matrix u(3, 3);
  u << 1.0, 0.5, 0.5, 0.5, 0.5, 0.25, 0.5, 0.25, 0.5;
  EXPECT_EQ(moment_matrix_from_joint(uniform).values(), u);
}

TEST(MomentMatrixFromJoint, RejectsMalformedDistributions) {
  EXPECT_THROW(JointDistribution(2, {{TreatmentProfile({0, 0}), 0.5}}), Error);
  EXPECT_THROW(
      JointDistribution(2, {{TreatmentProfile({0}), 1.0}}), Error);  // wrong length
  EXPECT_THROW(JointDistribution(1, {{TreatmentProfile({0}), 1.5},
                                     {TreatmentProfile({1}), -0.5}}),
               Error);
}

TEST(MomentMatrix, RejectsInvalidMatrices) {
  Matrix asym(2, 2);
  asym << 1.0, 0.3, 0.2, 0.3;
  EXPECT_THROW(MomentMatrix::from_matrix(asym), Error);

  Matrix out_of_range(2, 2);
  out_of_range << 1.0, 0.5, 0.5, 1.5;
  EXPECT_THROW(MomentMatrix::from_matrix(out_of_range), Error);

  Matrix indefinite(2, 2);  // det < 0, so not psd
  indefinite << 1.0, 0.9, 0.9, 0.5;
  EXPECT_THROW(MomentMatrix::from_matrix(indefinite), Error);

  EXPECT_THROW(MomentMatrix::from_matrix(Matrix::Identity(1, 1)), Error);
}

TEST(SmallestEigenvalue, ClosedFormCases) {
  EXPECT_NEAR(smallest_eigenvalue(MomentMatrix::from_matrix(Matrix::Identity(3, 3))),
              1.0, 1e-12);
  // [[1, .5], [.5, .5]]: trace 1.5, det 0.25, lambda_min = (1.5 - sqrt(1.25))/2.
  EXPECT_NEAR(smallest_eigenvalue(gps_moment({0.5})),
              (1.5 - std::sqrt(1.25)) / 2.0, 1e-12);
  EXPECT_NEAR(smallest_eigenvalue(gps_moment({0.5, 0.5})), 0.0, 1e-12);
}

TEST(SmallestEigenvalue, AgreesWithBisectionOracle) {
  oracle::Rng rng(20240101);
  for (int trial = 0; trial < 100; ++trial) {
    const int T = 1 + static_cast<int>(rng.next() % 5);
    const MomentMatrix m =
        trial % 2 == 0
            ? moment_matrix_from_gps(
                  oracle::random_gps(rng, T, oracle::uniform(rng, 0.1, 1.0)))
            : moment_matrix_from_joint(oracle::random_joint(rng, std::min(T, 4), false));
    const double expected = oracle::bisect_min_eigenvalue(m.values());
    EXPECT_NEAR(smallest_eigenvalue(m), expected, 1e-10) << "trial " << trial;
  }
}

TEST(ConditionalVariance, SchurComplementOfIntercept) {
  // Binary case: var(X|V) = P(1-P).
  const Matrix binary = conditional_variance(gps_moment({0.5}));
  ASSERT_EQ(binary.rows(), 1);
  EXPECT_NEAR(binary(0, 0), 0.25, 1e-15);

  const Matrix v = conditional_variance(gps_moment({0.3, 0.2}));
  Matrix expected(2, 2);
  expected << 0.21, -0.06, -0.06, 0.16;
  EXPECT_LT((v - expected).cwiseAbs().maxCoeff(), 1e-15);

  const Matrix singular = conditional_variance(gps_moment({0.5, 0.5}));
  Matrix expected2(2, 2);
  expected2 << 0.25, -0.25, -0.25, 0.25;
  EXPECT_LT((singular - expected2).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(oracle::gauss_det(singular), 0.0, 1e-15);
}

TEST(ConditionalVariance, RequiresUnitIntercept) {
  Matrix m(2, 2);
  m << 0.9, 0.0, 0.0, 0.5;
  EXPECT_THROW(conditional_variance(MomentMatrix::from_matrix(m)), Error);
}

TEST(ConditionalVariance, BinaryGridMatchesPOneMinusP) {
  for (int i = 0; i <= 10; ++i) {
    const double p = 0.1 * i;
    const Matrix v = conditional_variance(gps_moment({p}));
    EXPECT_NEAR(v(0, 0), p * (1.0 - p), 1e-14) << "p = " << p;
  }
}

TEST(SchurComplementOfDiagBlock, EqualsOneMinusGpsSum) {
  EXPECT_NEAR(schur_complement_of_diag_block(gps_moment({0.3, 0.2})), 0.5, 1e-15);
  EXPECT_NEAR(schur_complement_of_diag_block(gps_moment({0.5, 0.5})), 0.0, 1e-15);
  EXPECT_NEAR(schur_complement_of_diag_block(gps_moment({0.1, 0.1, 0.1})), 0.7, 1e-15);
}

TEST(SchurComplementOfDiagBlock, MatchesExplicitBlockElimination) {
  oracle::Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 1 + static_cast<int>(rng.next() % 5);
    const GpsVector g = oracle::random_gps(rng, T, oracle::uniform(rng, 0.1, 1.0));
    const MomentMatrix m = moment_matrix_from_gps(g);
    // 1 - b' D^{-1} b with D the treatment diagonal block.
    double quad = 0.0;
    for (int t = 1; t <= T; ++t) quad += m(0, t) * m(0, t) / m(t, t);
    EXPECT_NEAR(schur_complement_of_diag_block(m), 1.0 - quad, 1e-12);
  }
}

TEST(SchurComplementOfDiagBlock, RejectsUnsupportedMatrices) {
  // Zero diagonal entry: the complement of diag(E[X|V]) is undefined.
  EXPECT_THROW(schur_complement_of_diag_block(gps_moment({0.0, 0.3})), Error);
  // Not an exclusive-treatments matrix (nonzero cross moment).
  const JointDistribution uniform(2, {{TreatmentProfile({0, 0}), 0.25},
                                      {TreatmentProfile({0, 1}), 0.25},
                                      {TreatmentProfile({1, 0}), 0.25},
                                      {TreatmentProfile({1, 1}), 0.25}});
  EXPECT_THROW(schur_complement_of_diag_block(moment_matrix_from_joint(uniform)), Error);
}

TEST(NullSpaceDirection, RecoverresKnownDirections) {
  // gps (0.5, 0.5): treatments exhaust the population, p(X)'(1,-1,-1) = 0 a.s.
  const auto delta = null_space_direction(gps_moment({0.5, 0.5}));
  ASSERT_TRUE(delta.has_value());
  Vector expected(3);
  expected << 1.0, -1.0, -1.0;
  expected /= std::sqrt(3.0);
  EXPECT_LT((*delta - expected).cwiseAbs().maxCoeff(), 1e-9);

  EXPECT_FALSE(null_space_direction(gps_moment({0.3, 0.2})).has_value());

  // Point mass on the all-off profile at T=1: X == 0, second coordinate free.
  const JointDistribution point(1, {{TreatmentProfile({0}), 1.0}});
  const auto e2 = null_space_direction(moment_matrix_from_joint(point));
  ASSERT_TRUE(e2.has_value());
  EXPECT_NEAR((*e2)(0), 0.0, 1e-12);
  EXPECT_NEAR((*e2)(1), 1.0, 1e-12);
}

TEST(NullSpaceDirection, ContractOnRandomMatrices) {
  oracle::Rng rng(99);
  int engaged = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const int T = 1 + static_cast<int>(rng.next() % 4);
    const bool force_singular = trial % 3 == 0;
    const MomentMatrix m =
        force_singular
            ? moment_matrix_from_gps(oracle::random_gps(rng, T, 1.0))
            : moment_matrix_from_joint(oracle::random_joint(rng, T, false));
    const auto [lmin, lmax] = eigenvalue_range(m);
    const auto delta = null_space_direction(m);
    if (delta.has_value()) {
      ++engaged;
      EXPECT_NEAR(delta->norm(), 1.0, 1e-12);
      EXPECT_LE((m.values() * *delta).norm(), kNullResidualRelTol * std::max(lmax, 0.0));
      // Sign convention: first meaningfully nonzero component is positive.
      for (int i = 0; i < delta->size(); ++i) {
        if (std::abs((*delta)(i)) > 1e-9) {
          EXPECT_GT((*delta)(i), 0.0);
          break;
        }
      }
    } else {
      EXPECT_GT(lmin, singularity_threshold(m.dim(), lmax));
    }
  }
  EXPECT_GT(engaged, 100);  // both branches exercised
}

TEST(Equivalences, GpsSumCriterionMatchesEigenvalueTest) {
  // Exclusive treatments: lambda_min(M) > 0 iff sum of scores < 1.
  oracle::Rng rng(424242);
  for (int trial = 0; trial < 1200; ++trial) {
    const int T = 1 + static_cast<int>(rng.next() % 5);
    const bool boundary = trial % 3 == 0;
    const double target = boundary ? 1.0 : oracle::uniform(rng, 0.05, 0.995);
    const GpsVector g = oracle::random_gps(rng, T, target);
    const MomentMatrix m = moment_matrix_from_gps(g);
    const auto [lmin, lmax] = eigenvalue_range(m);
    const bool eigen_ok = lmin > singularity_threshold(m.dim(), lmax);
    const bool sum_ok = g.sum() < 1.0;
    EXPECT_EQ(eigen_ok, sum_ok) << "sum = " << g.sum() << " lambda_min = " << lmin;
  }
}

TEST(Equivalences, VarianceNonsingularityMatchesMomentMatrix) {
  oracle::Rng rng(31337);
  for (int trial = 0; trial < 1200; ++trial) {
    const int T = 1 + static_cast<int>(rng.next() % 4);
    const MomentMatrix m =
        moment_matrix_from_joint(oracle::random_joint(rng, T, trial % 4 == 0));
    const auto [lmin, lmax] = eigenvalue_range(m);
    const bool moment_ok = lmin > singularity_threshold(m.dim(), lmax);
    const Matrix var = conditional_variance(m);
    const double vmin = smallest_eigenvalue_sym(var);
    const double vmax = largest_eigenvalue_sym(var);
    const bool var_ok = vmin > singularity_threshold(static_cast<int>(var.rows()), vmax);
    EXPECT_EQ(moment_ok, var_ok) << "trial " << trial;
  }
}

TEST(Equivalences, GpsMatrixEqualsInducedJointMatrix) {
  oracle::Rng rng(555);
  for (int trial = 0; trial < 500; ++trial) {
    const int T = 1 + static_cast<int>(rng.next() % 5);
    const GpsVector g = oracle::random_gps(rng, T, oracle::uniform(rng, 0.05, 1.0));
    const Matrix a = moment_matrix_from_gps(g).values();
    const Matrix b = moment_matrix_from_joint(JointDistribution::from_gps(g)).values();
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
  }
}

}  // namespace

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include "loradyn/numerics.hpp"

using namespace loradyn;

namespace {

double orthonormality_error(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm();
}

void expect_valid_svd(const Matrix& m, const SvdResult& d, double tol = 1e-10) {
  EXPECT_LE(orthonormality_error(d.U), tol);
  EXPECT_LE(orthonormality_error(d.V), tol);
  for (Eigen::Index i = 0; i < d.S.size(); ++i) {
    EXPECT_GE(d.S(i), 0.0);
    if (i > 0) {
      EXPECT_LE(d.S(i), d.S(i - 1));
    }
  }
  const Matrix rec = d.U * d.S.asDiagonal() * d.V.transpose();
  EXPECT_LE((rec - m).norm() / std::max(1.0, m.norm()), tol);
}

}  // namespace

TEST(Svd, DiagonalIsItsOwnDecomposition) {
  Matrix m(2, 2);
  m << 3, 0, 0, 1;
  const SvdResult d = svd(m);
  EXPECT_DOUBLE_EQ(d.S(0), 3.0);
  EXPECT_DOUBLE_EQ(d.S(1), 1.0);
  EXPECT_LE((d.U - Matrix::Identity(2, 2)).norm(), 1e-15);
  EXPECT_LE((d.V - Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(Svd, ZeroMatrix) {
  const SvdResult d = svd(Matrix::Zero(2, 2));
  EXPECT_EQ(d.S(0), 0.0);
  EXPECT_EQ(d.S(1), 0.0);
  expect_valid_svd(Matrix::Zero(2, 2), d);
}

TEST(Svd, RandomReconstruction) {
  const Matrix m = random_gaussian(5, 3, 1.0, 11);
  const SvdResult d = svd(m);
  EXPECT_LE((d.U * d.S.asDiagonal() * d.V.transpose() - m).norm(), 1e-12);
  expect_valid_svd(m, d);
}

TEST(Svd, WideAndTallShapes) {
  for (Eigen::Index rows = 1; rows <= 7; ++rows) {
    for (Eigen::Index cols = 1; cols <= 7; ++cols) {
      const Matrix m = random_gaussian(rows, cols, 1.0, static_cast<std::uint64_t>(rows * 31 + cols));
      const SvdResult d = svd(m);
      EXPECT_EQ(d.S.size(), std::min(rows, cols));
      expect_valid_svd(m, d);
    }
  }
}

TEST(Svd, MatchesEigenSingularValues) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix m = random_gaussian(8, 6, 1.0, seed);
    const Eigen::MatrixXd plain = m;
    const Eigen::BDCSVD<Eigen::MatrixXd> ref(plain);
    EXPECT_LE((svd(m).S - ref.singularValues()).norm(), 1e-12) << "seed " << seed;
  }
}

TEST(Svd, RankDeficientKeepsOrthonormalBasis) {
  const Vector a = random_gaussian(6, 1, 1.0, 3).col(0);
  const Vector b = random_gaussian(4, 1, 1.0, 4).col(0);
  const Matrix m = a * b.transpose();
  const SvdResult d = svd(m);
  EXPECT_NEAR(d.S(0), a.norm() * b.norm(), 1e-12);
  for (Eigen::Index i = 1; i < d.S.size(); ++i) EXPECT_LE(d.S(i), 1e-12);
  expect_valid_svd(m, d);
}

TEST(Svd, SignConventionLargestEntryPositive) {
  const SvdResult d = svd(random_gaussian(6, 4, 1.0, 5));
  for (Eigen::Index j = 0; j < d.U.cols(); ++j) {
    Eigen::Index arg = 0;
    d.U.col(j).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(d.U(arg, j), 0.0);
  }
}

TEST(Svd, ReportsNonConvergenceWithSweepCount) {
  const Matrix m = random_gaussian(6, 6, 1.0, 9);
  try {
    svd(m, 1);
    FAIL() << "expected SvdNotConverged";
  } catch (const SvdNotConverged& e) {
    EXPECT_EQ(e.sweeps(), 1u);
  }
}

TEST(RandomGaussian, ZeroStdGivesZeroMatrix) {
  EXPECT_EQ(random_gaussian(4, 3, 0.0, 1).norm(), 0.0);
}

TEST(RandomGaussian, SampleStdWithinFivePercent) {
  const Matrix m = random_gaussian(100, 100, 1e-3, 42);
  const double mean = m.mean();
  const double var = (m.array() - mean).square().sum() / static_cast<double>(m.size() - 1);
  EXPECT_NEAR(std::sqrt(var), 1e-3, 0.05e-3);
}

TEST(RandomGaussian, DeterministicPerSeed) {
  EXPECT_EQ(random_gaussian(7, 5, 1.0, 123), random_gaussian(7, 5, 1.0, 123));
  EXPECT_NE(random_gaussian(7, 5, 1.0, 123), random_gaussian(7, 5, 1.0, 124));
}

TEST(RandomGaussian, NegativeStdRejected) {
  EXPECT_THROW(random_gaussian(2, 2, -1.0, 0), PreconditionError);
}

TEST(RandomOrthogonal, OneByOneIsPlusOrMinusOne) {
  EXPECT_DOUBLE_EQ(std::abs(random_orthogonal(1, 3)(0, 0)), 1.0);
}

TEST(RandomOrthogonal, OrthogonalAndUnitDeterminant) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix q = random_orthogonal(10, seed);
    EXPECT_LE(orthonormality_error(q), 1e-12);
    EXPECT_NEAR(std::abs(q.determinant()), 1.0, 1e-10);
  }
  EXPECT_EQ(random_orthogonal(10, 8), random_orthogonal(10, 8));
}

TEST(OrthogonalComplement, UnitVectorInPlane) {
  Matrix e1(2, 1);
  e1 << 1, 0;
  const Matrix c = orthogonal_complement(e1);
  ASSERT_EQ(c.cols(), 1);
  EXPECT_NEAR(std::abs(c(1, 0)), 1.0, 1e-15);
  EXPECT_NEAR(c(0, 0), 0.0, 1e-15);
}

TEST(OrthogonalComplement, EmptyBasisGivesFullOrthogonalMatrix) {
  const Matrix c = orthogonal_complement(Matrix(3, 0), 3);
  ASSERT_EQ(c.rows(), 3);
  ASSERT_EQ(c.cols(), 3);
  EXPECT_LE(orthonormality_error(c), 1e-14);
}

TEST(OrthogonalComplement, CompletesRandomBasis) {
  const Matrix b = random_orthogonal(6, 2).leftCols(2);
  const Matrix c = orthogonal_complement(b);
  EXPECT_EQ(c.cols(), 4);
  EXPECT_LE((b.transpose() * c).norm(), 1e-12);
  Matrix full(6, 6);
  full << b, c;
  EXPECT_LE(orthonormality_error(full), 1e-12);
}

TEST(OrthogonalComplement, Errors) {
  EXPECT_THROW(orthogonal_complement(Matrix::Identity(3, 4), 3), DimensionError);
  EXPECT_THROW(orthogonal_complement(Matrix::Constant(3, 1, 1.0)), PreconditionError);
}

TEST(FitLine, ExactLine) {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  const LineFit f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-14);
}

TEST(Vstack, StacksMatricesAndVectors) {
  const Matrix a = Matrix::Constant(2, 3, 1.0), b = Matrix::Constant(1, 3, 2.0);
  const Matrix s = vstack(a, b);
  EXPECT_EQ(s.rows(), 3);
  EXPECT_EQ(s(2, 0), 2.0);
  Vector u(1), v(2);
  u << 1;
  v << 2, 3;
  EXPECT_EQ(vstack(u, v)(2), 3.0);
  EXPECT_THROW(vstack(a, Matrix::Zero(1, 2)), DimensionError);
}

#include <gtest/gtest.h>

#include "loradyn/problem.hpp"

using namespace loradyn;

TEST(BuildPretrained, DeskScaleImbalance) {
  const PretrainedFactorization pre = build_pretrained(10, 100, 10, 0, 1.05);
  EXPECT_EQ(pre.m(), 10);
  EXPECT_EQ(pre.h(), 100);
  EXPECT_EQ(pre.n(), 10);
  for (Eigen::Index i = 0; i < pre.k(); ++i) {
    EXPECT_NEAR(pre.delta_w(i), 0.9070, 1e-4);
    EXPECT_NEAR(pre.sigma_W1(i) / pre.sigma_W2(i), 1.0 / (1.05 * 1.05), 1e-14);
  }
}

TEST(BuildPretrained, FactorsReconstructYpre) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const PretrainedFactorization pre = build_pretrained(6, 9, 4, seed, 1.3);
    EXPECT_LE((pre.W2 * pre.W1 - pre.Y_pre).norm(), 1e-10);
    EXPECT_LE((pre.G.transpose() * pre.G - Matrix::Identity(9, 9)).norm(), 1e-12);
  }
}

TEST(BuildPretrained, BalancedWhenCIsOne) {
  const PretrainedFactorization pre = build_pretrained(5, 7, 5, 3, 1.0);
  EXPECT_LE((pre.sigma_W1 - pre.sigma_W2).norm(), 0.0);
}

TEST(BuildPretrained, SingularStructureIsShared) {
  const PretrainedFactorization pre = build_pretrained(5, 8, 6, 2, 1.1);
  const Matrix g = pre.G.leftCols(pre.k());
  EXPECT_LE((pre.W2 - pre.U_Y * pre.sigma_W2.asDiagonal() * g.transpose()).norm(), 1e-12);
  EXPECT_LE((pre.W1 - g * pre.sigma_W1.asDiagonal() * pre.V_Y.transpose()).norm(), 1e-12);
}

TEST(BuildPretrained, Errors) {
  EXPECT_THROW(build_pretrained(10, 5, 10, 0, 1.0), DimensionError);
  EXPECT_THROW(build_pretrained(3, 3, 3, 0, 0.0), PreconditionError);
  EXPECT_THROW(build_pretrained(0, 3, 3, 0, 1.0), DimensionError);
}

TEST(BuildFinetune, RankOneTopDirection) {
  const PretrainedFactorization pre = build_pretrained(10, 100, 10, 0, 1.05);
  const FineTuneTask task = build_finetune(pre, {5.0}, {0});
  ASSERT_EQ(task.rank_delta(), 1u);
  EXPECT_EQ(task.triples[0].sigma, 5.0);
  EXPECT_LE((task.DeltaY - 5.0 * pre.U_Y.col(0) * pre.V_Y.col(0).transpose()).norm(), 1e-14);
  EXPECT_LE((task.Y_ft - pre.Y_pre - task.DeltaY).norm(), 1e-14);
  EXPECT_LE((task.triples[0].g - pre.G.col(0)).norm(), 0.0);
}

TEST(BuildFinetune, EmptyTaskIsNull) {
  const PretrainedFactorization pre = build_pretrained(4, 6, 4, 1, 1.0);
  const FineTuneTask task = build_finetune(pre, {}, {});
  EXPECT_EQ(task.DeltaY.norm(), 0.0);
  EXPECT_EQ(task.Y_ft, pre.Y_pre);
}

TEST(BuildFinetune, BottomDirectionNorm) {
  const PretrainedFactorization pre = build_pretrained(10, 100, 10, 0, 1.05);
  const FineTuneTask task = build_finetune(pre, {5.0}, {9});
  EXPECT_NEAR(task.DeltaY.norm(), 5.0, 1e-12);
  EXPECT_DOUBLE_EQ(task.triples[0].sigma_W2, pre.sigma_W2(9));
}

TEST(BuildFinetune, Errors) {
  const PretrainedFactorization pre = build_pretrained(4, 6, 4, 1, 1.0);
  EXPECT_THROW(build_finetune(pre, {1.0}, {}), PreconditionError);
  EXPECT_THROW(build_finetune(pre, {1.0}, {4}), PreconditionError);
  EXPECT_THROW(build_finetune(pre, {1.0, 2.0}, {1, 1}), PreconditionError);
  EXPECT_THROW(build_finetune(pre, {-1.0}, {0}), PreconditionError);
  EXPECT_THROW(build_finetune(pre, {std::nan("")}, {0}), PreconditionError);
}

TEST(TwoDirectionFixture, Structure) {
  const TwoDirectionFixture fx = two_direction_fixture(std::sqrt(2.0));
  Matrix w(2, 2);
  w << 10, 0, 0, 1;
  EXPECT_LE((fx.pre.W1 - w).norm(), 1e-14);
  EXPECT_LE((fx.pre.W2 - w).norm(), 1e-14);
  Matrix y(2, 2);
  y << 100, 0, 0, 1;
  EXPECT_LE((fx.pre.W2 * fx.pre.W1 - y).norm(), 1e-12);
  EXPECT_NEAR(0.5 * fx.task.DeltaY.squaredNorm(), 1.0, 1e-15);
}

TEST(TwoDirectionFixture, ZeroDeltaIsEmpty) {
  const TwoDirectionFixture fx = two_direction_fixture(0.0);
  EXPECT_EQ(fx.task.rank_delta(), 0u);
  EXPECT_EQ(fx.task.DeltaY.norm(), 0.0);
  EXPECT_THROW(two_direction_fixture(-1.0), PreconditionError);
}

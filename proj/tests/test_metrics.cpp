#include <gtest/gtest.h>

#include "loradyn/metrics.hpp"

using namespace loradyn;

namespace {

FineTuneTask desk_task(std::uint64_t seed = 0) {
  return build_finetune(build_pretrained(10, 100, 10, seed, 1.05), {5.0}, {0});
}

LoraState random_state(const FineTuneTask& t, Eigen::Index r, std::uint64_t seed, double scale) {
  Rng rng(seed, 21);
  return {rng.gaussian(r, t.pre.n(), scale), rng.gaussian(t.pre.h(), r, scale), rng.gaussian(r, t.pre.h(), scale),
          rng.gaussian(t.pre.m(), r, scale)};
}

// State whose Z1 = [B1; A1^T] equals `z` (h + n rows).
LoraState with_z1(const Matrix& z, Eigen::Index h, Eigen::Index n) {
  LoraState s;
  s.B1 = z.topRows(h);
  s.A1 = z.bottomRows(n).transpose();
  return s;
}

GammaDirections simple_dirs(Eigen::Index h, Eigen::Index n) {
  SingularTriple t;
  t.g = Vector::Unit(h, 0);
  t.v = Vector::Unit(n, 0);
  t.u = Vector::Unit(2, 0);
  return GammaDirections::from(t);
}

}  // namespace

TEST(GammaDirections, UnitAndOrthogonal) {
  const FineTuneTask task = desk_task();
  const GammaDirections d = GammaDirections::from(task.triples[0]);
  EXPECT_NEAR(d.gamma1.norm(), 1.0, 1e-12);
  EXPECT_NEAR(d.gamma1_bar.norm(), 1.0, 1e-12);
  EXPECT_NEAR(d.gamma2.norm(), 1.0, 1e-12);
  EXPECT_NEAR(d.gamma1.dot(d.gamma1_bar), 0.0, 1e-12);
}

TEST(AlignmentCos2, ParallelAndOrthogonal) {
  const GammaDirections d = simple_dirs(3, 2);
  EXPECT_NEAR(*alignment_cos2(with_z1(-2.5 * d.gamma1, 3, 2), d), 1.0, 1e-12);
  EXPECT_NEAR(*alignment_cos2(with_z1(d.gamma1_bar, 3, 2), d), 0.0, 1e-12);
  EXPECT_FALSE(alignment_cos2(with_z1(Matrix::Zero(5, 1), 3, 2), d));
}

TEST(AlignmentCos2, ConstructedSvd) {
  const GammaDirections d = simple_dirs(3, 2);
  const Matrix u = random_orthogonal(5, 4).leftCols(2);
  const Matrix v = random_orthogonal(2, 5);
  Vector s(2);
  s << 3.0, 1.0;
  const Matrix z = u * s.asDiagonal() * v.transpose();
  const double expected = std::pow(d.gamma1.dot(u.col(0)), 2);
  EXPECT_NEAR(*alignment_cos2(with_z1(z, 3, 2), d), expected, 1e-12);
  EXPECT_NEAR(*alignment_sin2(with_z1(z, 3, 2), d), 1.0 - expected, 1e-12);
}

TEST(AlignmentCos2, InvariantToColumnSignsAndOrder) {
  const GammaDirections d = simple_dirs(3, 2);
  const Matrix z = random_gaussian(5, 3, 1.0, 8);
  Matrix flipped = z;
  flipped.col(0) *= -1.0;
  flipped.col(1).swap(flipped.col(2));
  EXPECT_NEAR(*alignment_cos2(with_z1(z, 3, 2), d), *alignment_cos2(with_z1(flipped, 3, 2), d), 1e-12);
}

TEST(SubspaceAlignment, IdenticalAndOrthogonal) {
  const Matrix q = random_orthogonal(6, 1);
  EXPECT_NEAR(subspace_alignment(q.leftCols(2) * Vector::Constant(2, 1.0).asDiagonal() * 3.0, q.leftCols(2)), 0.0,
              1e-12);
  EXPECT_NEAR(subspace_alignment(q.col(0), q.col(1)), 1.0, 1e-12);
}

TEST(SubspaceAlignment, MatchesProjectorFormula) {
  const Matrix z = random_gaussian(6, 3, 1.0, 2);
  const Matrix target = random_orthogonal(6, 3).leftCols(2);
  const Eigen::MatrixXd plain = z;
  Eigen::JacobiSVD<Eigen::MatrixXd> ref(plain, Eigen::ComputeThinU);
  const Eigen::MatrixXd ur = ref.matrixU().leftCols(2);
  const Eigen::MatrixXd t = target;
  const double expected = (ur * ur.transpose() - t * t.transpose()).norm() / 2.0;
  EXPECT_NEAR(subspace_alignment(z, target), expected, 1e-12);
  const Matrix rot = random_orthogonal(2, 9);
  EXPECT_NEAR(subspace_alignment(z, target * rot), expected, 1e-12);
}

TEST(SubspaceAlignment, RankDeficiencyNamesRank) {
  const Vector a = random_gaussian(6, 1, 1.0, 1).col(0);
  const Matrix z = a * Vector::Constant(3, 1.0).transpose();
  try {
    subspace_alignment(z, random_orthogonal(6, 2).leftCols(2));
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("rank 1"), std::string::npos);
  }
}

TEST(ImbalanceRatio, BasicValues) {
  const FineTuneTask task = desk_task();
  LoraState s = random_state(task, 2, 1, 1.0);
  LoraState twin = s;
  twin.B2 = Matrix::Zero(10, 2);
  twin.A2 = Matrix::Zero(2, 100);
  EXPECT_TRUE(std::isinf(imbalance_ratio(twin)));
  // Z2 with the same Frobenius mass as Z1.
  const double z1 = s.B1.squaredNorm() + s.A1.squaredNorm();
  const double z2 = s.B2.squaredNorm() + s.A2.squaredNorm();
  EXPECT_NEAR(imbalance_ratio(s), z1 / z2, 1e-14 * z1 / z2);
  s.B1 *= 2.0;
  s.A1 *= 2.0;
  EXPECT_NEAR(imbalance_ratio(s), 4.0 * z1 / z2, 1e-12);
}

TEST(SignalNoiseSplit, ZeroBAndZeroResidual) {
  const FineTuneTask task = desk_task();
  LoraState s = random_state(task, 4, 2, 0.1);
  s.B1.setZero();
  s.B2.setZero();
  const LossSplit a = signal_noise_split(s, task);
  EXPECT_NEAR(a.signal, 12.5, 1e-12);
  EXPECT_EQ(a.noise, 0.0);

  FineTuneTask exact = task;
  const LoraState r = random_state(task, 4, 3, 0.1);
  exact.DeltaY = derived(r, task).F;  // E = 0, but the split still uses u, v of the original triple
  exact.Y_ft = exact.pre.Y_pre + exact.DeltaY;
  exact.triples[0].sigma = task.triples[0].u.dot(exact.DeltaY * task.triples[0].v);
  const LossSplit b = signal_noise_split(r, exact);
  EXPECT_NEAR(b.signal, 0.0, 1e-24);
  EXPECT_GE(b.noise, 0.0);
}

TEST(SignalNoiseSplit, SumsToLoss) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FineTuneTask task = desk_task(seed);
    const LoraState s = random_state(task, 4, seed, 0.3);
    const LossSplit p = signal_noise_split(s, task);
    EXPECT_GE(p.signal, 0.0);
    EXPECT_GE(p.noise, 0.0);
    EXPECT_NEAR(p.signal + p.noise, loss(s, task), 1e-12 * std::max(1.0, loss(s, task)));
  }
}

TEST(SignalNoiseSplit, RankTwoUnsupported) {
  const FineTuneTask task = build_finetune(build_pretrained(5, 6, 5, 0, 1.05), {5.0, 1.0}, {0, 1});
  EXPECT_THROW(signal_noise_split(LoraState::zeros(5, 6, 5, 2), task), UnsupportedConfiguration);
}

TEST(ConserveDrift, ZeroAtStart) {
  const FineTuneTask task = desk_task();
  const LoraState s = random_state(task, 3, 4, 0.2);
  EXPECT_EQ(conserve_drift(s, s), 0.0);
  EXPECT_EQ(conserve_drift(s, s, Side::Two), 0.0);
}

TEST(ConserveDrift, ScalarGradientFlowClosedForm) {
  // For f = 1/2 (y - b a)^2, (a, b) = c (cosh s, sinh s) keeps a^2 - b^2 = c^2.
  const double c = 0.7;
  for (double s : {0.0, 0.3, 1.1}) {
    LoraState st = LoraState::zeros(1, 1, 1, 1);
    LoraState s0 = st;
    st.A1(0, 0) = c * std::cosh(s);
    st.B1(0, 0) = c * std::sinh(s);
    s0.A1(0, 0) = c;
    EXPECT_NEAR(conserve_drift(st, s0), 0.0, 1e-14);
  }
}

TEST(ConserveDrift, SmallAfterLongRun) {
  const FineTuneTask task = desk_task();
  const LoraState s0 = small_init(task, 4, 1e-3, 0);
  const LoraState s = gd_run(s0, task, GdOptions{1e-4, 100000, 100000, {}}).final_state;
  EXPECT_LE(conserve_drift(s, s0), 1e-5);
  EXPECT_LE(conserve_drift(s, s0, Side::Two), 1e-5);
}

TEST(PredictedTotalTime, LogArithmetic) {
  EXPECT_EQ(predicted_total_time(1.0, 5.0, 2.0, 1.0, 0.3, 0.7), 0.0);
  const double a = predicted_total_time(1e-3, 5.0, 2.0, 12.5, 0.3, 0.7);
  const double b = predicted_total_time(0.5e-3, 5.0, 2.0, 12.5, 0.3, 0.7);
  EXPECT_NEAR(b - a, (0.3 + 0.7) * std::log(2.0) / 10.0, 1e-14);
  EXPECT_THROW(predicted_total_time(0.0, 5.0, 2.0, 1.0, 1, 1), PreconditionError);
  EXPECT_THROW(predicted_total_time(2.0, 5.0, 2.0, 1.0, 1, 1), PreconditionError);
}

TEST(DetectAlignmentEnd, EmptyAndCrossing) {
  EXPECT_FALSE(detect_alignment_end({}, 0.1));
  std::vector<MetricRow> rows(4);
  rows[0].gBAv = 0.0;
  rows[1].gBAv = 0.05;
  rows[2].gBAv = 0.2;
  rows[3].gBAv = 0.4;
  EXPECT_EQ(detect_alignment_end(rows, 0.1), 2u);
  EXPECT_FALSE(detect_alignment_end(rows, 1.0));
}

TEST(DetectAlignmentEnd, SpectralInitCrosses) {
  const FineTuneTask task = desk_task();
  const LoraState s0 = spectral_init(task, 4, 1e-3, 0);
  const MetricRecorder rec(task, s0, 1e-4);
  std::vector<MetricRow> rows;
  const std::array<Observer, 1> obs{[&](std::size_t k, const LoraState& s, double l) { rows.push_back(rec.row(k, s, l)); }};
  gd_run(s0, task, GdOptions{1e-4, 30000, 100, {}}, obs);
  EXPECT_TRUE(detect_alignment_end(rows, default_alignment_threshold(task.triples[0])));
}

TEST(DetectAlignmentEnd, SmallerAlphaCrossesLater) {
  const FineTuneTask task = desk_task();
  std::vector<std::size_t> cross;
  for (double alpha : {1e-3, 1e-4, 1e-5}) {
    const LoraState s0 = small_init(task, 4, alpha, 0);
    const MetricRecorder rec(task, s0, 1e-4);
    std::vector<MetricRow> rows;
    const std::array<Observer, 1> obs{[&](std::size_t k, const LoraState& s, double l) { rows.push_back(rec.row(k, s, l)); }};
    gd_run(s0, task, GdOptions{1e-4, 30000, 100, {}}, obs);
    const auto at = detect_alignment_end(rows, default_alignment_threshold(task.triples[0]));
    ASSERT_TRUE(at);
    cross.push_back(rows[*at].step);
  }
  EXPECT_LT(cross[0], cross[1]);
  EXPECT_LT(cross[1], cross[2]);
}

TEST(MetricRecorder, RowInvariants) {
  const FineTuneTask task = desk_task(1);
  const LoraState s0 = small_init(task, 4, 1e-3, 1);
  const MetricRecorder rec(task, s0, 1e-4);
  const LoraState s = gd_run(s0, task, GdOptions{1e-4, 8000, 8000, {}}).final_state;
  const MetricRow row = rec.row(8000, s, loss(s, task));
  EXPECT_DOUBLE_EQ(row.t, 0.8);
  EXPECT_NEAR(row.L_S + row.L_N, row.loss, 1e-10);
  EXPECT_GE(row.align_cos2, 0.0);
  EXPECT_LE(row.align_cos2, 1.0 + 1e-12);
  EXPECT_GT(row.imbalance_ratio, 0.0);
  EXPECT_NEAR(row.gBAv, task.triples[0].g.dot(s.B1 * s.A1 * task.triples[0].v), 1e-14);
}

#pragma once

// Pre-trained factorizations with matched singular structure and the
// fine-tuning targets built on top of them.

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "loradyn/numerics.hpp"

namespace loradyn {

/// W2 (m x h) and W1 (h x n) factorizing Y_pre exactly, with
/// W2 = U_Y diag(sigma_W2) Gbar^T and W1 = Gbar diag(sigma_W1) V_Y^T where
/// Gbar holds the leading min(m, n) columns of the orthogonal G.
struct PretrainedFactorization {
  Matrix W2;
  Matrix W1;
  Matrix Y_pre;
  Matrix U_Y;      // m x k
  Matrix V_Y;      // n x k
  Vector Sigma_pre;
  Matrix G;        // h x h orthogonal
  Vector sigma_W1;
  Vector sigma_W2;
  Vector delta_w;  // sigma_W1 / sigma_W2, per direction

  Eigen::Index m() const { return W2.rows(); }
  Eigen::Index h() const { return W2.cols(); }
  Eigen::Index n() const { return W1.cols(); }
  Eigen::Index k() const { return Sigma_pre.size(); }
};

/// One active singular direction of Delta Y together with the matching
/// column of G and the pre-trained singular values along it.
struct SingularTriple {
  std::size_t index = 0;
  double sigma = 0.0;
  Vector u;
  Vector v;
  Vector g;
  double sigma_W1 = 0.0;
  double sigma_W2 = 0.0;

  double delta_w() const { return sigma_W1 / sigma_W2; }
};

struct FineTuneTask {
  PretrainedFactorization pre;
  Matrix Y_ft;
  Matrix DeltaY;
  std::vector<SingularTriple> triples;

  std::size_t rank_delta() const { return triples.size(); }
};

inline PretrainedFactorization make_factorization(Matrix Y_pre, Matrix U_Y, Vector Sigma_pre, Matrix V_Y,
                                                  Matrix G, double imbalance_c) {
  const Eigen::Index k = Sigma_pre.size();
  PretrainedFactorization pre;
  pre.Y_pre = std::move(Y_pre);
  pre.U_Y = std::move(U_Y);
  pre.V_Y = std::move(V_Y);
  pre.Sigma_pre = std::move(Sigma_pre);
  pre.G = std::move(G);
  const Vector root = pre.Sigma_pre.cwiseSqrt();
  pre.sigma_W2 = imbalance_c * root;
  pre.sigma_W1 = root / imbalance_c;
  pre.delta_w = Vector::Constant(k, 1.0 / (imbalance_c * imbalance_c));
  const Matrix g_lead = pre.G.leftCols(k);
  pre.W2 = pre.U_Y * pre.sigma_W2.asDiagonal() * g_lead.transpose();
  pre.W1 = g_lead * pre.sigma_W1.asDiagonal() * pre.V_Y.transpose();
  return pre;
}

/// Y_pre ~ N(0,1) entry-wise; W2 = c U_Y Sigma^{1/2} Gbar^T and
/// W1 = (1/c) Gbar Sigma^{1/2} V_Y^T for a random orthogonal G.
inline PretrainedFactorization build_pretrained(Eigen::Index m, Eigen::Index h, Eigen::Index n,
                                                std::uint64_t seed, double imbalance_c) {
  if (m < 1 || n < 1) throw DimensionError("build_pretrained: m and n must be >= 1");
  if (h < std::min(m, n)) {
    throw DimensionError("build_pretrained: h < min(m, n), Y_pre cannot be factorized exactly");
  }
  if (!(imbalance_c > 0.0)) throw PreconditionError("build_pretrained: imbalance_c must be > 0");
  Rng rng(seed, /*stream=*/1);
  Matrix y = rng.gaussian(m, n, 1.0);
  Matrix g = rng.orthogonal(h);
  SvdResult s = svd(y);
  return make_factorization(std::move(y), std::move(s.U), std::move(s.S), std::move(s.V), std::move(g),
                            imbalance_c);
}

/// Delta Y = sum_j magnitudes[j] u_{idx[j]} v_{idx[j]}^T.
inline FineTuneTask build_finetune(const PretrainedFactorization& pre, const std::vector<double>& magnitudes,
                                   const std::vector<std::size_t>& direction_indices) {
  if (magnitudes.size() != direction_indices.size()) {
    throw PreconditionError("build_finetune: magnitudes and direction_indices differ in length");
  }
  std::set<std::size_t> seen;
  FineTuneTask task;
  task.pre = pre;
  task.DeltaY = Matrix::Zero(pre.m(), pre.n());
  for (std::size_t j = 0; j < magnitudes.size(); ++j) {
    const std::size_t idx = direction_indices[j];
    if (idx >= static_cast<std::size_t>(pre.k())) {
      throw PreconditionError("build_finetune: direction index " + std::to_string(idx) + " out of range");
    }
    if (!seen.insert(idx).second) {
      throw PreconditionError("build_finetune: repeated direction index " + std::to_string(idx));
    }
    if (!(magnitudes[j] >= 0.0) || !std::isfinite(magnitudes[j])) {
      throw PreconditionError("build_finetune: magnitudes must be finite and >= 0");
    }
    const auto col = static_cast<Eigen::Index>(idx);
    SingularTriple t;
    t.index = idx;
    t.sigma = magnitudes[j];
    t.u = pre.U_Y.col(col);
    t.v = pre.V_Y.col(col);
    t.g = pre.G.col(col);
    t.sigma_W1 = pre.sigma_W1(col);
    t.sigma_W2 = pre.sigma_W2(col);
    task.DeltaY.noalias() += t.sigma * t.u * t.v.transpose();
    task.triples.push_back(std::move(t));
  }
  task.Y_ft = pre.Y_pre + task.DeltaY;
  return task;
}

struct TwoDirectionFixture {
  PretrainedFactorization pre;
  FineTuneTask task;
};

/// W2 = W1 = diag(10, 1), Y_pre = diag(100, 1) with Delta Y = sigma_delta
/// e_d e_d^T on coordinate direction `direction` (1 = the bottom pair, which a
/// top-1 initialization from the pre-trained weights never touches).
inline TwoDirectionFixture two_direction_fixture(double sigma_delta, std::size_t direction = 1) {
  if (!(sigma_delta >= 0.0)) throw PreconditionError("two_direction_fixture: sigma_delta must be >= 0");
  if (direction > 1) throw PreconditionError("two_direction_fixture: direction must be 0 or 1");
  Matrix y(2, 2);
  y << 100.0, 0.0, 0.0, 1.0;
  Vector s(2);
  s << 100.0, 1.0;
  TwoDirectionFixture fx;
  fx.pre = make_factorization(y, Matrix::Identity(2, 2), s, Matrix::Identity(2, 2), Matrix::Identity(2, 2), 1.0);
  if (sigma_delta > 0.0) {
    fx.task = build_finetune(fx.pre, {sigma_delta}, {direction});
  } else {
    fx.task = build_finetune(fx.pre, {}, {});
  }
  return fx;
}

}  // namespace loradyn

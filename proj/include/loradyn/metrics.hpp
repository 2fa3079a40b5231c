#pragma once

// Observables tracked along a trajectory: alignment of Z1 with gamma1,
// imbalance, the signal/noise split of the loss, perturbation norms, drift of
// the conserved imbalance, and phase-time helpers.

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "loradyn/init.hpp"

namespace loradyn {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Unit-normalized gamma1 = (g; v), gamma1_bar = (g; -v) in R^{h+n} and
/// gamma2 = (u; g) in R^{m+h}.
struct GammaDirections {
  Vector gamma1;
  Vector gamma1_bar;
  Vector gamma2;

  static GammaDirections from(const SingularTriple& t) {
    const double s = 1.0 / std::sqrt(2.0);
    return {s * vstack(t.g, t.v), s * vstack(t.g, Vector(-t.v)), s * vstack(t.u, t.g)};
  }
};

struct MetricRow {
  std::size_t step = 0;
  double t = 0.0;
  double loss = 0.0;
  double L_S = kMissing;
  double L_N = kMissing;
  double align_cos2 = kMissing;
  double imbalance_ratio = kMissing;
  double z1_fro = 0.0;
  double z2_fro = 0.0;
  double d1_norm = 0.0;
  double d2_norm = 0.0;
  double conserve_drift = 0.0;
  double gBAv = kMissing;
};

/// cos^2 between gamma1 and the top left singular vector of Z1;
/// nullopt when Z1 = 0.
inline std::optional<double> alignment_cos2(const LoraState& s, const GammaDirections& dirs) {
  const Matrix z = s.z1();
  if (z.norm() == 0.0) return std::nullopt;
  const SvdResult d = svd(z);
  const double c = dirs.gamma1.dot(d.U.col(0));
  return c * c;
}

/// 1 - cos^2 computed as ||u - (gamma1.u) gamma1||^2, which keeps relative
/// accuracy when the alignment is nearly perfect.
inline std::optional<double> alignment_sin2(const LoraState& s, const GammaDirections& dirs) {
  const Matrix z = s.z1();
  if (z.norm() == 0.0) return std::nullopt;
  const Vector u = svd(z).U.col(0);
  return (u - dirs.gamma1.dot(u) * dirs.gamma1).squaredNorm();
}

/// (1/sqrt(2r)) ||U_r U_r^T - U_t U_t^T||_F with U_r the top-r left singular
/// block of Z and r = U_target.cols().
inline double subspace_alignment(const Matrix& z, const Matrix& u_target) {
  const Eigen::Index r = u_target.cols();
  if (r < 1 || u_target.rows() != z.rows()) throw DimensionError("subspace_alignment: shape mismatch");
  if ((u_target.transpose() * u_target - Matrix::Identity(r, r)).norm() > 1e-10) {
    throw PreconditionError("subspace_alignment: target columns are not orthonormal");
  }
  const SvdResult d = svd(z);
  const double tol = d.S.size() ? d.S(0) * 1e-12 : 0.0;
  const auto rank = static_cast<Eigen::Index>((d.S.array() > tol).count());
  if (d.S.size() == 0 || d.S(0) == 0.0 || rank < r) {
    throw PreconditionError("subspace_alignment: Z has rank " + std::to_string(d.S(0) == 0.0 ? 0 : rank) +
                            " < r = " + std::to_string(r));
  }
  const Matrix ur = d.U.leftCols(r);
  const Matrix diff = ur * ur.transpose() - u_target * u_target.transpose();
  return diff.norm() / std::sqrt(2.0 * static_cast<double>(r));
}

/// Early-gradient target for side `side` (1 or 2): with dL/dW at
/// initialization = U_W S V_W^T, the growing subspace of Z is spanned by
/// (U_W; -V_W)/sqrt(2). Returns the top-k such columns.
inline Matrix early_gradient_target(const LoraState& s0, const FineTuneTask& task, int side, Eigen::Index k) {
  const DerivedQuantities d = derived(s0, task);
  const auto& pre = task.pre;
  Matrix grad;  // dL/d(effective weight)
  if (side == 1) {
    grad = -(pre.W2 + s0.B2 * s0.A2).transpose() * d.E;  // h x n
  } else if (side == 2) {
    grad = -d.E * (pre.W1 + s0.B1 * s0.A1).transpose();  // m x h
  } else {
    throw PreconditionError("early_gradient_target: side must be 1 or 2");
  }
  const SvdResult g = svd(grad);
  if (k > g.S.size()) throw DimensionError("early_gradient_target: k exceeds the gradient's rank bound");
  Matrix out(grad.rows() + grad.cols(), k);
  out.topRows(grad.rows()) = g.U.leftCols(k);
  out.bottomRows(grad.cols()) = -g.V.leftCols(k);
  return out / std::sqrt(2.0);
}

/// ||Z1||_F^2 / ||Z2||_F^2; +infinity when Z2 = 0.
inline double imbalance_ratio(const LoraState& s) {
  const double num = s.B1.squaredNorm() + s.A1.squaredNorm();
  const double den = s.B2.squaredNorm() + s.A2.squaredNorm();
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

struct LossSplit {
  double signal = 0.0;
  double noise = 0.0;
};

/// Signal part: the (u, v) block of the residual,
///   1/2 (sigma - sW2 g^T B1A1 v - sW1 u^T B2A2 g - u^T B2A2B1A1 v)^2.
/// Noise part: 1/2 ||u_perp u_perp^T F + u u^T F v_perp v_perp^T||_F^2.
inline LossSplit signal_noise_split(const LoraState& s, const FineTuneTask& task) {
  if (task.rank_delta() != 1) {
    throw UnsupportedConfiguration("signal_noise_split: defined only for rank(DeltaY) = 1");
  }
  check_shapes(s, task);
  const SingularTriple& t = task.triples.front();
  const auto& pre = task.pre;

  const Vector A1v = s.A1 * t.v;             // r
  const Vector B1A1v = s.B1 * A1v;           // h
  const Vector uB2 = s.B2.transpose() * t.u; // r
  const double gBAv = t.g.dot(B1A1v);
  const double uBAg = uB2.dot(s.A2 * t.g);
  const double quartic = uB2.dot(s.A2 * B1A1v);
  const double e = t.sigma - t.sigma_W2 * gBAv - t.sigma_W1 * uBAg - quartic;

  const Matrix F = pre.W2 * s.B1 * s.A1 + s.B2 * s.A2 * pre.W1 + s.B2 * (s.A2 * s.B1) * s.A1;
  const Eigen::RowVectorXd uF = t.u.transpose() * F;
  Matrix noise = F - t.u * uF;                                  // u_perp u_perp^T F
  noise.noalias() += t.u * (uF - uF.dot(t.v) * t.v.transpose());  // u u^T F v_perp v_perp^T
  return {0.5 * e * e, 0.5 * noise.squaredNorm()};
}

enum class Side { One, Two };

/// ||Lambda(t) - Lambda(0)||_F with Lambda = A A^T - B^T B on the given side.
inline double conserve_drift(const LoraState& s, const LoraState& s0, Side side = Side::One) {
  const auto lambda = [side](const LoraState& x) -> Matrix {
    if (side == Side::One) return x.A1 * x.A1.transpose() - x.B1.transpose() * x.B1;
    return x.A2 * x.A2.transpose() - x.B2.transpose() * x.B2;
  };
  const Matrix a = lambda(s);
  const Matrix b = lambda(s0);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("conserve_drift: rank mismatch");
  return (a - b).norm();
}

/// c1 log(1/alpha)/(sigma sW2) + c2 log(L0/alpha)/(sigma sW2) with
/// caller-supplied constants.
inline double predicted_total_time(double alpha, double sigma, double sigma_w2, double L0, double c1, double c2) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw PreconditionError("predicted_total_time: need 0 < alpha <= 1");
  if (!(sigma > 0.0 && sigma_w2 > 0.0 && L0 > 0.0)) {
    throw PreconditionError("predicted_total_time: sigma, sigma_w2 and L0 must be > 0");
  }
  const double rate = sigma * sigma_w2;
  return c1 * std::log(1.0 / alpha) / rate + c2 * std::log(L0 / alpha) / rate;
}

/// (1 - delta_w) sigma / (4 sW2): the value of g^T B1 A1 v that marks the
/// end of the alignment phase.
inline double default_alignment_threshold(const SingularTriple& t) {
  return (1.0 - t.delta_w()) * t.sigma / (4.0 * t.sigma_W2);
}

/// Position of the first row whose gBAv reaches `threshold`.
inline std::optional<std::size_t> detect_alignment_end(std::span<const MetricRow> rows, double threshold) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].gBAv >= threshold) return i;
  return std::nullopt;
}

/// ||gamma1 gamma1^T Z1||^2 and ||gamma2 gamma2^T Z2||^2.
struct ProjectedNorms {
  double gamma1_z1 = 0.0;
  double gamma2_z2 = 0.0;
};

inline ProjectedNorms projected_norms(const LoraState& s, const GammaDirections& dirs) {
  return {(dirs.gamma1.transpose() * s.z1()).squaredNorm(), (dirs.gamma2.transpose() * s.z2()).squaredNorm()};
}

/// Builds MetricRows for one trajectory. Keeps the initial state for the
/// drift column; alignment, gBAv and the loss split use the first active
/// direction of Delta Y and are left missing when they are undefined.
class MetricRecorder {
 public:
  MetricRecorder(const FineTuneTask& task, LoraState initial, double lr)
      : task_(&task), initial_(std::move(initial)), lr_(lr) {
    if (!task.triples.empty()) dirs_ = GammaDirections::from(task.triples.front());
  }

  MetricRow row(std::size_t step, const LoraState& s, double current_loss) const {
    MetricRow row;
    row.step = step;
    row.t = static_cast<double>(step) * lr_;
    row.loss = current_loss;
    if (task_->rank_delta() == 1) {
      const LossSplit split = signal_noise_split(s, *task_);
      row.L_S = split.signal;
      row.L_N = split.noise;
    }
    if (dirs_) {
      row.align_cos2 = alignment_cos2(s, *dirs_).value_or(kMissing);
      const SingularTriple& t = task_->triples.front();
      row.gBAv = t.g.dot(s.B1 * (s.A1 * t.v));
    }
    row.imbalance_ratio = imbalance_ratio(s);
    row.z1_fro = std::sqrt(s.B1.squaredNorm() + s.A1.squaredNorm());
    row.z2_fro = std::sqrt(s.B2.squaredNorm() + s.A2.squaredNorm());
    const DerivedQuantities d = derived(s, *task_);
    row.d1_norm = d.D1.norm();
    row.d2_norm = d.D2.norm();
    row.conserve_drift = conserve_drift(s, initial_);
    return row;
  }

  const std::optional<GammaDirections>& directions() const { return dirs_; }

 private:
  const FineTuneTask* task_;
  LoraState initial_;
  double lr_;
  std::optional<GammaDirections> dirs_;
};

}  // namespace loradyn

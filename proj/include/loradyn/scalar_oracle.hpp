#pragma once

// Decoupled per-direction dynamics under spectral initialization. Each active
// direction reduces to four scalars (the diagonal entries of the rotated
// adapters) driven by the residual e = sigma_dY - sigma_F.

#include <cmath>
#include <optional>
#include <vector>

#include "loradyn/init.hpp"

namespace loradyn {

struct ScalarDirectionState {
  double sA1 = 0.0;
  double sB1 = 0.0;
  double sA2 = 0.0;
  double sB2 = 0.0;
  double sigma_dY = 0.0;
  double sigma_w1 = 0.0;
  double sigma_w2 = 0.0;

  double z1() const { return sA1 * sA1 + sB1 * sB1; }
  double z2() const { return sA2 * sA2 + sB2 * sB2; }
  double p1() const { return sB1 * sA1; }
  double p2() const { return sB2 * sA2; }
  /// sigma_w1 / sigma_w2, the same convention as the rank-one analysis.
  double delta_w() const { return sigma_w1 / sigma_w2; }
};

/// e = sigma_dY - (sW2 p1 + sW1 p2 + p1 p2).
inline double scalar_residual(const ScalarDirectionState& s) {
  const double p1 = s.p1(), p2 = s.p2();
  return s.sigma_dY - (s.sigma_w2 * p1 + s.sigma_w1 * p2 + p1 * p2);
}

inline double scalar_loss(const ScalarDirectionState& s) {
  const double e = scalar_residual(s);
  return 0.5 * e * e;
}

struct ScalarTrajectory {
  std::vector<std::size_t> step;
  std::vector<double> t;
  std::vector<double> z1;
  std::vector<double> z2;
  std::vector<double> p1;
  std::vector<double> p2;
  std::vector<double> loss;
  std::vector<double> balance1;  // sA1^2 - sB1^2
  ScalarDirectionState final_state;
};

/// One explicit Euler step of
///   sA1' = sB1 (sW2 + p2) e,  sB1' = (sW2 + p2) e sA1,
///   sA2' = sB2 (sW1 + p1) e,  sB2' = (sW1 + p1) e sA2.
inline void scalar_euler_step(ScalarDirectionState& s, double lr) {
  const double e = scalar_residual(s);
  const double side1 = (s.sigma_w2 + s.p2()) * e;
  const double side2 = (s.sigma_w1 + s.p1()) * e;
  const double dA1 = s.sB1 * side1, dB1 = side1 * s.sA1;
  const double dA2 = s.sB2 * side2, dB2 = side2 * s.sA2;
  s.sA1 += lr * dA1;
  s.sB1 += lr * dB1;
  s.sA2 += lr * dA2;
  s.sB2 += lr * dB2;
}

/// Iterates scalar_euler_step, recording step 0, every `record_every`-th
/// step and the last step.
inline ScalarTrajectory scalar_gd_run(ScalarDirectionState s, double lr, std::size_t steps,
                                      std::size_t record_every = 1) {
  if (!(lr > 0.0)) throw PreconditionError("scalar_gd_run: lr must be > 0");
  if (record_every == 0) throw PreconditionError("scalar_gd_run: record_every must be >= 1");
  ScalarTrajectory out;
  for (std::size_t k = 0;; ++k) {
    const double e = scalar_residual(s);
    const double loss = 0.5 * e * e;
    if (!std::isfinite(loss)) throw DivergenceError(k, loss);
    if (k % record_every == 0 || k == steps) {
      out.step.push_back(k);
      out.t.push_back(static_cast<double>(k) * lr);
      out.z1.push_back(s.z1());
      out.z2.push_back(s.z2());
      out.p1.push_back(s.p1());
      out.p2.push_back(s.p2());
      out.loss.push_back(loss);
      out.balance1.push_back(s.sA1 * s.sA1 - s.sB1 * s.sB1);
    }
    if (k == steps) break;
    scalar_euler_step(s, lr);
  }
  out.final_state = s;
  return out;
}

/// Per-direction scalars read off the rotated adapters (direction j of the
/// spectral frame).
inline ScalarDirectionState extract_direction(const LoraState& s, const FineTuneTask& task, const SpectralFrame& f,
                                              std::size_t j) {
  const auto& pre = task.pre;
  const auto col = static_cast<Eigen::Index>(j);
  const auto src = static_cast<Eigen::Index>(f.perm.at(j));
  const Vector g11 = f.G11.col(col);
  const Vector g21 = f.G21.col(col);
  ScalarDirectionState d;
  d.sA1 = g11.dot(s.A1 * f.G12.col(col));
  d.sB1 = f.G22.col(col).dot(s.B1 * g11);
  d.sA2 = g21.dot(s.A2 * f.G22.col(col));
  d.sB2 = f.U.col(col).dot(s.B2 * g21);
  d.sigma_w1 = pre.sigma_W1(src);
  d.sigma_w2 = pre.sigma_W2(src);
  d.sigma_dY = j < task.triples.size() ? task.triples[j].sigma : 0.0;
  return d;
}

struct PredictedT1 {
  double short_form = 0.0;  // 2/((3+d) sigma sW2) log(sigma / (16 z1(0)))
  double long_form = 0.0;   // 2/((3+d) sigma sW2) log((1-d) sigma / (8 sW2 z1(0)))
};

/// Both end-of-growth-phase time predictors, d = sigma_w1/sigma_w2 < 1.
inline PredictedT1 predicted_t1(const ScalarDirectionState& s, double z1_initial) {
  if (!(z1_initial > 0.0)) throw PreconditionError("predicted_t1: z1_initial must be > 0");
  if (!(s.sigma_dY > 0.0 && s.sigma_w2 > 0.0)) throw PreconditionError("predicted_t1: sigmas must be > 0");
  const double d = s.delta_w();
  if (std::abs(d - 1.0) <= 1e-12) {
    throw UnsupportedConfiguration("predicted_t1: delta_w = 1 is excluded by the analysis (requires delta_w != 1)");
  }
  if (d > 1.0) {
    throw UnsupportedConfiguration("predicted_t1: delta_w > 1; swap the roles of sides 1 and 2");
  }
  const double pref = 2.0 / ((3.0 + d) * s.sigma_dY * s.sigma_w2);
  return {pref * std::log(s.sigma_dY / (16.0 * z1_initial)),
          pref * std::log((1.0 - d) * s.sigma_dY / (8.0 * s.sigma_w2 * z1_initial))};
}

/// z1 level at which the long-form growth-phase bound is stated to end.
inline double growth_phase_target(const ScalarDirectionState& s) {
  return (1.0 - s.delta_w()) * s.sigma_dY / (8.0 * s.sigma_w2);
}

/// (1 - delta_w) sigma_dY sW2 / 8, the guaranteed post-T1 decay rate of the loss.
inline double local_rate_bound(const ScalarDirectionState& s) {
  return (1.0 - s.delta_w()) * s.sigma_dY * s.sigma_w2 / 8.0;
}

struct RateFit {
  double rate = 0.0;       // -slope of log(loss) vs t
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Least-squares decay rate of log(loss) over the points from `t1_index` on
/// with loss > 1e-14; nullopt when fewer than 10 such points exist.
inline std::optional<RateFit> local_rate_check(std::span<const double> t, std::span<const double> loss,
                                               std::size_t t1_index) {
  if (t.size() != loss.size()) throw DimensionError("local_rate_check: series lengths differ");
  std::vector<double> x, y;
  for (std::size_t i = t1_index; i < t.size(); ++i) {
    if (loss[i] > 1e-14) {
      x.push_back(t[i]);
      y.push_back(std::log(loss[i]));
    }
  }
  if (x.size() < 10) return std::nullopt;
  const LineFit fit = fit_line(x, y);
  return RateFit{-fit.slope, fit.r_squared, x.size()};
}

}  // namespace loradyn

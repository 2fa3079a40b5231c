#pragma once

// The LoRA objective on a matrix-factorization fine-tuning task, its exact
// gradients, the residual/perturbation quantities of the early-phase
// decomposition, and a fixed-step gradient-descent integrator.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "loradyn/problem.hpp"

namespace loradyn {

/// Trainable adapters: the model is (W2 + B2 A2)(W1 + B1 A1).
struct LoraState {
  Matrix A1;  // r x n
  Matrix B1;  // h x r
  Matrix A2;  // r x h
  Matrix B2;  // m x r

  Eigen::Index r() const { return A1.rows(); }

  /// Z1 = [B1; A1^T], (h + n) x r.
  Matrix z1() const { return vstack(B1, Matrix(A1.transpose())); }
  /// Z2 = [B2; A2^T], (m + h) x r.
  Matrix z2() const { return vstack(B2, Matrix(A2.transpose())); }

  static LoraState zeros(Eigen::Index m, Eigen::Index h, Eigen::Index n, Eigen::Index r) {
    return {Matrix::Zero(r, n), Matrix::Zero(h, r), Matrix::Zero(r, h), Matrix::Zero(m, r)};
  }
};

/// dL/d(.) for each adapter; the integrator steps against these.
struct Gradients {
  Matrix dA1;
  Matrix dB1;
  Matrix dA2;
  Matrix dB2;
};

struct DerivedQuantities {
  Matrix F;   // W2 B1 A1 + B2 A2 W1 + B2 A2 B1 A1
  Matrix E;   // DeltaY - F
  Matrix D1;  // A2^T B2^T E - W2^T F
  Matrix D2;  // E A1^T B1^T - F W1^T
};

inline void check_shapes(const LoraState& s, const FineTuneTask& task) {
  const auto& pre = task.pre;
  const Eigen::Index m = pre.m(), h = pre.h(), n = pre.n(), r = s.A1.rows();
  const bool ok = s.A1.cols() == n && s.B1.rows() == h && s.B1.cols() == r && s.A2.rows() == r &&
                  s.A2.cols() == h && s.B2.rows() == m && s.B2.cols() == r;
  if (!ok) throw DimensionError("LoRA state shapes do not match the task (m, h, n) or rank r");
}

/// Preallocated buffers for one integration; reused every step so the hot
/// loop does not touch the allocator.
class Workspace {
 public:
  Workspace(const LoraState& s, const FineTuneTask& task) {
    const Eigen::Index m = task.pre.m(), h = task.pre.h(), n = task.pre.n(), r = s.r();
    W2B1.resize(m, r);
    A2W1.resize(r, n);
    A2B1.resize(r, r);
    A2B1A1.resize(r, n);
    F.resize(m, n);
    E.resize(m, n);
    EA1t.resize(m, r);
    B2tE.resize(r, n);
    B2tEA1t.resize(r, r);
    grad = {Matrix(r, n), Matrix(h, r), Matrix(r, h), Matrix(m, r)};
  }

  /// Fills F and E; returns the loss 1/2 ||E||_F^2.
  double residual(const LoraState& s, const FineTuneTask& task) {
    const auto& pre = task.pre;
    W2B1.noalias() = pre.W2 * s.B1;
    A2W1.noalias() = s.A2 * pre.W1;
    A2B1.noalias() = s.A2 * s.B1;
    A2B1A1.noalias() = A2B1 * s.A1;
    F.noalias() = W2B1 * s.A1;
    F.noalias() += s.B2 * A2W1;
    F.noalias() += s.B2 * A2B1A1;
    E = task.DeltaY - F;
    return 0.5 * E.squaredNorm();
  }

  /// Gradients at the state last passed to residual().
  const Gradients& gradients(const LoraState& s, const FineTuneTask& task) {
    const auto& pre = task.pre;
    EA1t.noalias() = E * s.A1.transpose();
    B2tE.noalias() = s.B2.transpose() * E;
    B2tEA1t.noalias() = s.B2.transpose() * EA1t;
    // dL/dA1 = -B1^T (W2 + B2 A2)^T E
    grad.dA1.noalias() = -W2B1.transpose() * E;
    grad.dA1.noalias() -= A2B1.transpose() * B2tE;
    // dL/dB1 = -(W2 + B2 A2)^T E A1^T
    grad.dB1.noalias() = -pre.W2.transpose() * EA1t;
    grad.dB1.noalias() -= s.A2.transpose() * B2tEA1t;
    // dL/dA2 = -B2^T E (W1 + B1 A1)^T
    grad.dA2.noalias() = -B2tE * pre.W1.transpose();
    grad.dA2.noalias() -= B2tEA1t * s.B1.transpose();
    // dL/dB2 = -E (W1 + B1 A1)^T A2^T
    grad.dB2.noalias() = -E * A2W1.transpose();
    grad.dB2.noalias() -= EA1t * A2B1.transpose();
    return grad;
  }

  Matrix W2B1, A2W1, A2B1, A2B1A1, F, E, EA1t, B2tE, B2tEA1t;
  Gradients grad;
};

/// 1/2 ||Y_ft - (W2 + B2 A2)(W1 + B1 A1)||_F^2, evaluated as 1/2 ||DeltaY - F||_F^2.
inline double loss(const LoraState& s, const FineTuneTask& task) {
  check_shapes(s, task);
  Workspace ws(s, task);
  return ws.residual(s, task);
}

inline DerivedQuantities derived(const LoraState& s, const FineTuneTask& task) {
  check_shapes(s, task);
  const auto& pre = task.pre;
  DerivedQuantities d;
  d.F = pre.W2 * s.B1 * s.A1 + s.B2 * s.A2 * pre.W1 + s.B2 * s.A2 * s.B1 * s.A1;
  d.E = task.DeltaY - d.F;
  d.D1 = s.A2.transpose() * s.B2.transpose() * d.E - pre.W2.transpose() * d.F;
  d.D2 = d.E * s.A1.transpose() * s.B1.transpose() - d.F * pre.W1.transpose();
  return d;
}

inline Gradients gradients(const LoraState& s, const FineTuneTask& task) {
  check_shapes(s, task);
  Workspace ws(s, task);
  ws.residual(s, task);
  return ws.gradients(s, task);
}

struct GdOptions {
  double lr = 1e-4;
  std::size_t steps = 0;
  std::size_t record_every = 1;
  /// Optional early exit, checked at recorded steps after observers run.
  std::function<bool(std::size_t step, double loss)> stop;
};

/// Called on recorded steps with a read-only snapshot.
using Observer = std::function<void(std::size_t step, const LoraState& state, double loss)>;

struct TrajectoryRecord {
  std::vector<std::size_t> steps;
  std::vector<double> loss;
  LoraState final_state;
};

/// Plain full-batch gradient descent, state <- state - lr * grad L(state).
/// Records step 0, every `record_every`-th step and the last step. Throws
/// DivergenceError when the loss is non-finite or exceeds 1e6 * L(0).
inline TrajectoryRecord gd_run(LoraState state, const FineTuneTask& task, const GdOptions& opts,
                               std::span<const Observer> observers = {}) {
  check_shapes(state, task);
  if (!(opts.lr > 0.0)) throw PreconditionError("gd_run: lr must be > 0");
  if (opts.record_every == 0) throw PreconditionError("gd_run: record_every must be >= 1");

  Workspace ws(state, task);
  TrajectoryRecord rec;
  double current = ws.residual(state, task);
  const double limit = 1e6 * std::max(current, std::numeric_limits<double>::min());
  if (!std::isfinite(current)) throw DivergenceError(0, current);

  for (std::size_t step = 0;; ++step) {
    const bool last = step == opts.steps;
    if (step % opts.record_every == 0 || last) {
      rec.steps.push_back(step);
      rec.loss.push_back(current);
      for (const auto& obs : observers) obs(step, state, current);
      if (opts.stop && opts.stop(step, current)) break;
    }
    if (last) break;
    const Gradients& g = ws.gradients(state, task);
    state.A1.noalias() -= opts.lr * g.dA1;
    state.B1.noalias() -= opts.lr * g.dB1;
    state.A2.noalias() -= opts.lr * g.dA2;
    state.B2.noalias() -= opts.lr * g.dB2;
    current = ws.residual(state, task);
    if (!std::isfinite(current) || current > limit) throw DivergenceError(step + 1, current);
  }
  rec.final_state = std::move(state);
  return rec;
}

}  // namespace loradyn

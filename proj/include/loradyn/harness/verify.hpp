#pragma once

// The acceptance battery. Each check reports a measured value, the bound it
// is held to, and a verdict; a check that throws is a controlled failure.

#include <cstdio>
#include <functional>
#include <random>

#include "loradyn/harness/sweep.hpp"
#include "loradyn/scalar_oracle.hpp"

namespace loradyn::harness {

enum class Verdict { Pass, Fail, Skip };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Skip: return "SKIP";
  }
  return "?";
}

struct CheckResult {
  int id = 0;
  std::string name;
  Verdict verdict = Verdict::Fail;
  std::string measured;
  std::string bound;
  std::string note;
};

inline std::string format_line(const CheckResult& r) {
  std::string s = std::string(to_string(r.verdict)) + " [" + std::to_string(r.id) + "] " + r.name;
  if (!r.measured.empty()) s += ": measured " + r.measured;
  if (!r.bound.empty()) s += "; bound " + r.bound;
  if (!r.note.empty()) s += " (" + r.note + ")";
  return s;
}

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (c.verdict == Verdict::Fail) return false;
    return true;
  }
};

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline Verdict verdict(bool ok) { return ok ? Verdict::Pass : Verdict::Fail; }

/// delta_w of the first active direction for the config's problem.
inline double config_delta_w(const ExperimentConfig& c) {
  const FineTuneTask task = make_task(c, c.base_seed);
  if (task.triples.empty()) return kMissing;
  return task.triples.front().delta_w();
}

inline std::optional<std::string> delta_w_exclusion(double delta) {
  if (std::isnan(delta)) return "no active direction in Delta Y";
  if (std::abs(delta - 1.0) <= 1e-12) return "excluded by the delta_w != 1 hypothesis of the analysis";
  if (delta > 1.0) return "delta_w > 1; swap the roles of sides 1 and 2";
  return std::nullopt;
}

inline double min_alpha(const ExperimentConfig& c) { return *std::min_element(c.alphas.begin(), c.alphas.end()); }
inline double max_alpha(const ExperimentConfig& c) { return *std::max_element(c.alphas.begin(), c.alphas.end()); }

}  // namespace detail

struct VerifyOptions {
  std::size_t workers = default_workers();
  /// Directory for the determinism check's scratch output.
  std::filesystem::path scratch = std::filesystem::temp_directory_path();
};

class Verifier {
 public:
  using Sink = std::function<void(const CheckResult&)>;

  Verifier(ExperimentConfig c, VerifyOptions opts = {}, Sink sink = {})
      : c_(std::move(c)), opts_(std::move(opts)), sink_(std::move(sink)) {}

  VerifyReport run() {
    report_ = {};
    delta_ = kMissing;
    try {
      c_.validate();
      delta_ = detail::config_delta_w(c_);
    } catch (const std::exception& e) {
      for (int id = 1; id <= 10; ++id) emit({id, "configuration", Verdict::Fail, "", "", e.what()});
      return report_;
    }
    guarded(1, "spectral-init convergence", [&] { main_sweep(); check_spectral_convergence(); });
    guarded(2, "small-init ordering in alpha", [&] { main_sweep(); check_small_ordering(); });
    guarded(3, "alignment precedes saddle escape", [&] { main_sweep(); check_phase_structure(); });
    guarded(4, "early-phase growth rates", [&] { check_rate_laws(); });
    guarded(5, "stationary counterexample init", [&] { check_counterexample(); });
    guarded(6, "scalar oracle equivalence and local rate", [&] { check_scalar_oracle(); });
    guarded(7, "gradient vs finite differences", [&] { check_gradients(); });
    guarded(8, "conserved imbalance drift", [&] { check_conservation(); });
    guarded(9, "loss split identity", [&] { main_sweep(); check_loss_split(); });
    guarded(10, "sweep determinism", [&] { check_determinism(); });
    return report_;
  }

 private:
  void emit(CheckResult r) {
    if (sink_) sink_(r);
    report_.checks.push_back(std::move(r));
  }

  template <class Fn>
  void guarded(int id, std::string name, Fn&& fn) {
    current_ = {id, std::move(name), Verdict::Fail, "", "", ""};
    try {
      fn();
    } catch (const std::exception& e) {
      current_.verdict = Verdict::Fail;
      current_.note = std::string("error: ") + e.what();
    }
    emit(current_);
  }

  void result(Verdict v, std::string measured, std::string bound, std::string note = {}) {
    current_.verdict = v;
    current_.measured = std::move(measured);
    current_.bound = std::move(bound);
    current_.note = std::move(note);
  }

  bool skip_scalar_phase() {
    if (auto why = detail::delta_w_exclusion(delta_)) {
      result(Verdict::Skip, "", "", "skipped: " + *why);
      return true;
    }
    return false;
  }

  // Small and spectral runs over every alpha and repeat, shared by 1, 2, 3, 9.
  const SweepSummary& main_sweep() {
    if (sweep_error_) std::rethrow_exception(sweep_error_);
    if (!sweep_) {
      ExperimentConfig c = c_;
      c.schemes = {InitScheme::Small, InitScheme::Spectral};
      c.random_rotations = false;
      try {
        sweep_ = run_sweep(c, opts_.workers);
      } catch (...) {
        sweep_error_ = std::current_exception();
        throw;
      }
    }
    return *sweep_;
  }

  void check_spectral_convergence() {
    double worst = 0.0;
    std::size_t runs = 0;
    for (const auto& r : sweep_->runs) {
      if (r.key.scheme != InitScheme::Spectral) continue;
      worst = std::max(worst, r.rows.back().loss);
      ++runs;
    }
    result(detail::verdict(worst <= 1e-12 && runs == c_.alphas.size() * c_.repeats),
           "max final loss " + detail::num(worst) + " over " + std::to_string(runs) + " runs", "<= 1e-12");
  }

  void check_small_ordering() {
    std::vector<double> alphas = c_.alphas;
    std::sort(alphas.begin(), alphas.end());
    std::size_t ok = 0;
    for (std::size_t i = 0; i < c_.repeats; ++i) {
      const std::uint64_t seed = c_.base_seed + i;
      const FineTuneTask task = make_task(c_, seed);
      const GammaDirections dirs = GammaDirections::from(task.triples.front());
      std::vector<double> loss, misalign;
      for (double a : alphas) {
        const RunResult* r = sweep_->find(InitScheme::Small, a, seed);
        if (!r) throw Error("missing small-init run");
        loss.push_back(r->rows.back().loss);
        misalign.push_back(alignment_sin2(r->final_state, dirs).value_or(kMissing));
      }
      bool inc = true;
      for (std::size_t k = 1; k < alphas.size(); ++k) inc = inc && loss[k] > loss[k - 1] && misalign[k] > misalign[k - 1];
      ok += inc ? 1 : 0;
    }
    const std::size_t need = c_.repeats - c_.repeats / 30;
    result(detail::verdict(ok >= need),
           std::to_string(ok) + "/" + std::to_string(c_.repeats) + " seeds strictly increasing in final loss and 1 - cos^2",
           ">= " + std::to_string(need) + "/" + std::to_string(c_.repeats));
  }

  void check_phase_structure() {
    if (skip_scalar_phase()) return;
    const double alpha = detail::min_alpha(c_);
    std::size_t ok = 0;
    double min_growth = INFINITY, min_gap = INFINITY;
    for (std::size_t i = 0; i < c_.repeats; ++i) {
      const std::uint64_t seed = c_.base_seed + i;
      const RunResult* r = sweep_->find(InitScheme::Small, alpha, seed);
      if (!r) throw Error("missing small-init run");
      const FineTuneTask task = make_task(c_, seed);
      const auto cross = detect_alignment_end(r->rows, default_alignment_threshold(task.triples.front()));
      std::optional<std::size_t> aligned;
      for (std::size_t k = 0; k < r->rows.size() && !aligned; ++k)
        if (r->rows[k].align_cos2 >= 0.99) aligned = k;
      if (!cross || !aligned) {
        min_growth = 0.0;
        continue;
      }
      const double growth = r->rows[*cross].z1_fro / r->rows.front().z1_fro;
      const double gap = r->rows[*cross].t - r->rows[*aligned].t;
      min_growth = std::min(min_growth, growth);
      min_gap = std::min(min_gap, gap);
      if (*cross > *aligned && growth > 10.0) ++ok;
    }
    result(detail::verdict(ok == c_.repeats),
           std::to_string(ok) + "/" + std::to_string(c_.repeats) + " seeds at alpha=" + format_alpha(alpha) +
               "; min t(cross) - t(cos^2>=0.99) = " + detail::num(min_gap) + ", min ||Z1|| growth = " +
               detail::num(min_growth),
           "gap > 0 and growth > 10 for every seed");
  }

  void check_rate_laws() {
    if (skip_scalar_phase()) return;
    const double alpha = detail::min_alpha(c_);
    const std::uint64_t seed = c_.base_seed;
    const FineTuneTask task = make_task(c_, seed);
    const SingularTriple& tr = task.triples.front();
    const GammaDirections dirs = GammaDirections::from(tr);
    const double window = 0.01 * tr.sigma * tr.sigma_W2;
    std::vector<double> t, proj1, ratio;
    bool outside = false;
    const std::array<Observer, 1> obs{[&](std::size_t step, const LoraState& s, double) {
      const DerivedQuantities d = derived(s, task);
      if (std::max(d.D1.norm(), d.D2.norm()) > window) {
        outside = true;
        return;
      }
      const ProjectedNorms p = projected_norms(s, dirs);
      t.push_back(static_cast<double>(step) * c_.lr);
      proj1.push_back(std::log(p.gamma1_z1));
      ratio.push_back(std::log(p.gamma1_z1 / p.gamma2_z2));
    }};
    GdOptions o{c_.lr, c_.steps, 10, [&](std::size_t, double) { return outside; }};
    gd_run(small_init(task, c_.r, alpha, seed), task, o, obs);
    if (t.size() < 3) throw Error("growth window holds fewer than 3 recorded points");
    const double s1 = fit_line(t, proj1).slope, s2 = fit_line(t, ratio).slope;
    const double p1 = 2.0 * tr.sigma * tr.sigma_W2, p2 = 2.0 * tr.sigma * (tr.sigma_W2 - tr.sigma_W1);
    const double e1 = std::abs(s1 / p1 - 1.0), e2 = std::abs(s2 / p2 - 1.0);
    result(detail::verdict(e1 <= 0.1 && e2 <= 0.1),
           "slopes " + detail::num(s1) + " vs " + detail::num(p1) + " and " + detail::num(s2) + " vs " +
               detail::num(p2) + " (rel. err " + detail::num(e1) + ", " + detail::num(e2) + ") over t <= " +
               detail::num(t.back()),
           "rel. err <= 0.1");
  }

  void check_counterexample() {
    double worst_grad = 0.0, worst_drift = 0.0;
    const double alpha = detail::max_alpha(c_) > 0.0 ? detail::max_alpha(c_) : 1e-3;
    for (const auto& [side, direction] : {std::pair{SvdSide::Top, std::size_t{1}}, std::pair{SvdSide::Bottom, std::size_t{0}}}) {
      const TwoDirectionFixture fx = two_direction_fixture(c_.sigma_delta > 0.0 ? c_.sigma_delta : 1.0, direction);
      const LoraState s0 = svd_init(fx.pre, 1, alpha, side, c_.base_seed);
      const Gradients g = gradients(s0, fx.task);
      for (const Matrix* m : {&g.dA1, &g.dB1, &g.dA2, &g.dB2}) worst_grad = std::max(worst_grad, m->cwiseAbs().maxCoeff());
      const TrajectoryRecord rec = gd_run(s0, fx.task, GdOptions{c_.lr, 10000, 1, {}});
      for (double l : rec.loss) worst_drift = std::max(worst_drift, std::abs(l - rec.loss.front()));
    }
    result(detail::verdict(worst_grad == 0.0 && worst_drift <= 1e-14),
           "max |grad| at init " + detail::num(worst_grad) + ", max loss drift over 1e4 steps " +
               detail::num(worst_drift),
           "grad == 0 exactly, drift <= 1e-14", "top-1 init vs bottom Delta Y, bottom-1 init vs top Delta Y");
  }

  void check_scalar_oracle() {
    if (skip_scalar_phase()) return;
    const double alpha = detail::min_alpha(c_);
    const std::uint64_t seed = c_.base_seed;
    const FineTuneTask task = make_task(c_, seed);
    const SpectralFrame frame = spectral_frame(task, c_.r, seed, false);
    const LoraState s0 = spectral_init(task, c_.r, alpha, seed, false);
    std::vector<ScalarDirectionState> scalars;
    for (Eigen::Index j = 0; j < c_.r; ++j) scalars.push_back(extract_direction(s0, task, frame, j));
    const ScalarDirectionState initial = scalars.front();

    double worst = 0.0;
    const std::array<Observer, 1> obs{[&](std::size_t, const LoraState& s, double) {
      for (std::size_t j = 0; j < scalars.size(); ++j) {
        const ScalarDirectionState full = extract_direction(s, task, frame, j);
        auto& sc = scalars[j];
        worst = std::max({worst, std::abs(full.sA1 - sc.sA1), std::abs(full.sB1 - sc.sB1),
                          std::abs(full.sA2 - sc.sA2), std::abs(full.sB2 - sc.sB2)});
        scalar_euler_step(sc, c_.lr);
      }
    }};
    gd_run(s0, task, GdOptions{c_.lr, c_.steps, 1, {}}, obs);

    const ScalarTrajectory traj = scalar_gd_run(initial, c_.lr, c_.steps, 10);
    const PredictedT1 t1 = predicted_t1(initial, initial.z1());
    const auto index_at = [&](double time) {
      return static_cast<std::size_t>(std::lower_bound(traj.t.begin(), traj.t.end(), time) - traj.t.begin());
    };
    const auto fit = local_rate_check(traj.t, traj.loss, index_at(t1.short_form));
    if (!fit) throw Error("fewer than 10 post-T1 points with loss > 1e-14");
    const double bound = local_rate_bound(initial);
    const auto alt = local_rate_check(traj.t, traj.loss, index_at(t1.long_form));
    result(detail::verdict(worst <= 1e-8 && fit->rate >= bound && fit->r_squared >= 0.99),
           "max per-step |full - scalar| " + detail::num(worst) + " over " + std::to_string(c_.steps) +
               " steps; decay rate " + detail::num(fit->rate) + " with R^2 " + detail::num(fit->r_squared) +
               " after T1 = " + detail::num(t1.short_form),
           "<= 1e-8; rate >= " + detail::num(bound) + "; R^2 >= 0.99",
           alt ? "with the alternative T1 = " + detail::num(t1.long_form) + ": rate " + detail::num(alt->rate) +
                     ", R^2 " + detail::num(alt->r_squared)
               : std::string{});
  }

  void check_gradients() {
    constexpr int kInstances = 24;
    constexpr double kStep = 1e-6;
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) {
      Rng rng(c_.base_seed + static_cast<std::uint64_t>(i), 7);
      std::uniform_int_distribution<int> dim(1, 5);
      std::mt19937_64 pick(c_.base_seed * 7919 + static_cast<std::uint64_t>(i));
      const Eigen::Index m = dim(pick), h = dim(pick), n = dim(pick), r = std::uniform_int_distribution<int>(1, 3)(pick);
      FineTuneTask task;
      task.pre.W2 = rng.gaussian(m, h, 1.0);
      task.pre.W1 = rng.gaussian(h, n, 1.0);
      task.DeltaY = rng.gaussian(m, n, 1.0);
      LoraState s{rng.gaussian(r, n, 0.5), rng.gaussian(h, r, 0.5), rng.gaussian(r, h, 0.5), rng.gaussian(m, r, 0.5)};
      const Gradients g = gradients(s, task);
      const auto probe = [&](Matrix& param, const Matrix& analytic) {
        for (Eigen::Index a = 0; a < param.rows(); ++a) {
          for (Eigen::Index b = 0; b < param.cols(); ++b) {
            const double keep = param(a, b);
            param(a, b) = keep + kStep;
            const double up = loss(s, task);
            param(a, b) = keep - kStep;
            const double down = loss(s, task);
            param(a, b) = keep;
            const double fd = (up - down) / (2.0 * kStep);
            worst = std::max(worst, std::abs(fd - analytic(a, b)) / std::max(1.0, std::abs(analytic(a, b))));
          }
        }
      };
      probe(s.A1, g.dA1);
      probe(s.B1, g.dB1);
      probe(s.A2, g.dA2);
      probe(s.B2, g.dB2);
    }
    result(detail::verdict(worst <= 1e-6),
           "max |fd - analytic| / max(1, |analytic|) = " + detail::num(worst) + " over " +
               std::to_string(kInstances) + " instances",
           "<= 1e-6");
  }

  void check_conservation() {
    const std::size_t steps = std::min<std::size_t>(c_.steps, 100000);
    const double alpha = detail::max_alpha(c_);
    const FineTuneTask task = make_task(c_, c_.base_seed);
    double worst1 = 0.0, worst2 = 0.0;
    for (InitScheme scheme : {InitScheme::Small, InitScheme::Spectral}) {
      const LoraState s0 = initialize(task, c_.r, InitSpec{scheme, alpha, c_.base_seed, false});
      const std::array<Observer, 1> obs{[&](std::size_t, const LoraState& s, double) {
        worst1 = std::max(worst1, conserve_drift(s, s0, Side::One));
        worst2 = std::max(worst2, conserve_drift(s, s0, Side::Two));
      }};
      gd_run(s0, task, GdOptions{c_.lr, steps, 1000, {}}, obs);
    }
    result(detail::verdict(worst1 <= 1e-5 && worst2 <= 1e-5),
           "max drift side 1 " + detail::num(worst1) + ", side 2 " + detail::num(worst2) + " over " +
               std::to_string(steps) + " steps at alpha=" + format_alpha(alpha),
           "<= 1e-5", "small and spectral init");
  }

  void check_loss_split() {
    if (std::isnan(delta_) || make_task(c_, c_.base_seed).rank_delta() != 1) {
      result(Verdict::Skip, "", "", "skipped: split is defined for rank(Delta Y) = 1 only");
      return;
    }
    double worst = 0.0;
    std::size_t rows = 0;
    for (const auto& r : sweep_->runs) {
      for (const auto& row : r.rows) {
        worst = std::max(worst, std::abs(row.L_S + row.L_N - row.loss));
        ++rows;
      }
    }
    result(detail::verdict(worst <= 1e-10),
           "max |L_S + L_N - L| " + detail::num(worst) + " over " + std::to_string(rows) + " recorded rows",
           "<= 1e-10");
  }

  void check_determinism() {
    ExperimentConfig c = c_;
    c.repeats = std::min<std::size_t>(c.repeats, 2);
    c.steps = std::min<std::size_t>(c.steps, 2000);
    c.record_every = std::max<std::size_t>(1, c.steps / 100);
    std::random_device rd;
    const auto base = opts_.scratch / ("loradyn_verify_" + std::to_string(rd()) + std::to_string(rd()));
    const auto a = base / "a", b = base / "b";
    struct Cleanup {
      std::filesystem::path p;
      ~Cleanup() {
        std::error_code ec;
        std::filesystem::remove_all(p, ec);
      }
    } cleanup{base};
    const auto fa = write_sweep(run_sweep(c, 1), a, true);
    const auto fb = write_sweep(run_sweep(c, opts_.workers), b, true);
    const auto slurp = [](const std::filesystem::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    std::size_t same = 0;
    for (std::size_t i = 0; i < fa.size() && i < fb.size(); ++i)
      if (fa[i].lexically_relative(a) == fb[i].lexically_relative(b) && slurp(fa[i]) == slurp(fb[i])) ++same;
    const bool ok = fa.size() == fb.size() && same == fa.size();
    result(detail::verdict(ok),
           std::to_string(same) + "/" + std::to_string(fa.size()) + " files byte-identical (CSV and SVG)",
           "all identical", "serial vs " + std::to_string(opts_.workers) + "-worker sweep");
  }

  ExperimentConfig c_;
  VerifyOptions opts_;
  Sink sink_;
  VerifyReport report_;
  CheckResult current_;
  double delta_ = kMissing;
  std::optional<SweepSummary> sweep_;
  std::exception_ptr sweep_error_;
};

inline VerifyReport verify(const ExperimentConfig& c, VerifyOptions opts = {}, Verifier::Sink sink = {}) {
  return Verifier(c, std::move(opts), std::move(sink)).run();
}

}  // namespace loradyn::harness

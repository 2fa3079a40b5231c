// lora_lab: run, sweep, verify and compare LoRA training dynamics on
// matrix-factorization fine-tuning tasks.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "loradyn/loradyn.hpp"

namespace lh = loradyn::harness;
using namespace loradyn;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  bool svg = false;
};

lh::ExperimentConfig load(const CommonArgs& a) {
  lh::ExperimentConfig c = a.config.empty() ? lh::ExperimentConfig{} : lh::load_config(a.config);
  if (!a.out.empty()) c.output_dir = a.out;
  if (a.svg) c.emit_svg = true;
  c.validate();
  return c;
}

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required) {
  auto* opt = cmd->add_option("--config", a.config, "key=value experiment file");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  else opt->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "output directory (overrides output_dir)");
  cmd->add_flag("--svg", a.svg, "also write SVG panels");
}

int cmd_run(const CommonArgs& a, std::optional<double> alpha, std::optional<std::uint64_t> seed,
            const std::string& scheme_name) {
  const lh::ExperimentConfig c = load(a);
  InitScheme scheme = c.schemes.front();
  if (!scheme_name.empty()) {
    const auto s = parse_scheme(scheme_name);
    if (!s) throw PreconditionError("unknown scheme '" + scheme_name + "'");
    scheme = *s;
  }
  lh::RunResult r = lh::run_single(c, scheme, alpha.value_or(c.alphas.front()), seed.value_or(c.base_seed));
  const std::filesystem::path dir = c.output_dir;
  const auto path = dir / lh::run_file_name(r.key);
  lh::write_file(path, lh::trajectory_csv(r.rows));
  std::printf("%s: final loss %.6e after %zu steps -> %s\n", lh::describe(r.key).c_str(), r.rows.back().loss,
              static_cast<std::size_t>(r.rows.back().step), path.string().c_str());
  if (c.emit_svg) {
    const auto groups = lh::aggregate({r});
    for (lh::Panel p : {lh::Panel::Loss, lh::Panel::Alignment}) {
      const auto svg_path = dir / (std::string(to_string(p)) + ".svg");
      lh::write_file(svg_path, lh::render_svg(lh::panel_title(p), "t", lh::panel_ylabel(p), lh::panel_series(groups, p)));
    }
  }
  return 0;
}

int cmd_sweep(const CommonArgs& a) {
  const lh::ExperimentConfig c = load(a);
  const lh::SweepSummary s = lh::run_sweep(c);
  const auto files = lh::write_sweep(s, c.output_dir, c.emit_svg);
  for (const auto& g : s.aggregates) {
    std::printf("%-10s alpha=%-8s final loss mean %.6e std %.3e\n", std::string(to_string(g.scheme)).c_str(),
                lh::format_alpha(g.alpha).c_str(), g.mean.back()[lh::kLossCol], g.stddev.back()[lh::kLossCol]);
  }
  std::printf("%zu runs, %zu files written under %s\n", s.runs.size(), files.size(), c.output_dir.c_str());
  return 0;
}

int cmd_verify(const CommonArgs& a) {
  const lh::ExperimentConfig c = load(a);
  const lh::VerifyReport rep = lh::verify(c, {}, [](const lh::CheckResult& r) {
    std::printf("%s\n", lh::format_line(r).c_str());
    std::fflush(stdout);
  });
  return rep.passed() ? 0 : 1;
}

/// Full-matrix spectral-init run next to the per-direction scalar dynamics.
int cmd_oracle(const CommonArgs& a) {
  const lh::ExperimentConfig c = load(a);
  std::string csv = "# schema: loradyn.oracle/1\nalpha,direction,step,t,z1_full,z1_scalar,loss_scalar\n";
  for (double alpha : c.alphas) {
    const FineTuneTask task = lh::make_task(c, c.base_seed);
    const SpectralFrame frame = spectral_frame(task, c.r, c.base_seed, false);
    const LoraState s0 = spectral_init(task, c.r, alpha, c.base_seed, false);
    std::vector<ScalarDirectionState> sc;
    for (Eigen::Index j = 0; j < c.r; ++j) sc.push_back(extract_direction(s0, task, frame, j));
    const ScalarDirectionState first = sc.front();
    double worst = 0.0;
    const std::array<Observer, 1> obs{[&](std::size_t step, const LoraState& s, double) {
      for (std::size_t j = 0; j < sc.size(); ++j) {
        const ScalarDirectionState full = extract_direction(s, task, frame, j);
        worst = std::max(worst, std::abs(full.z1() - sc[j].z1()));
        if (step % c.record_every == 0 || step == c.steps) {
          csv += lh::format_alpha(alpha) + "," + std::to_string(j) + "," + std::to_string(step) + ",";
          lh::put_number(csv, static_cast<double>(step) * c.lr);
          csv += ',';
          lh::put_number(csv, full.z1());
          csv += ',';
          lh::put_number(csv, sc[j].z1());
          csv += ',';
          lh::put_number(csv, scalar_loss(sc[j]));
          csv += '\n';
        }
        scalar_euler_step(sc[j], c.lr);
      }
    }};
    gd_run(s0, task, GdOptions{c.lr, c.steps, 1, {}}, obs);
    std::printf("alpha=%s  max per-step |z1 full - z1 scalar| = %.3e\n", lh::format_alpha(alpha).c_str(), worst);

    if (first.sigma_dY <= 0.0) continue;
    try {
      const PredictedT1 t1 = predicted_t1(first, first.z1());
      const ScalarTrajectory tr = scalar_gd_run(first, c.lr, c.steps, 10);
      const double target = growth_phase_target(first);
      const auto hit = std::find_if(tr.z1.begin(), tr.z1.end(), [&](double z) { return z >= target; });
      std::printf("  T1 predicted: %.4f (short form), %.4f (long form)", t1.short_form, t1.long_form);
      if (hit != tr.z1.end()) std::printf("; z1 reaches %.4g at t = %.4f", target, tr.t[hit - tr.z1.begin()]);
      std::printf("\n");
      const auto at = static_cast<std::size_t>(std::lower_bound(tr.t.begin(), tr.t.end(), t1.short_form) - tr.t.begin());
      if (const auto fit = local_rate_check(tr.t, tr.loss, at)) {
        std::printf("  post-T1 decay rate %.4g (bound %.4g), R^2 %.4f over %zu points\n", fit->rate,
                    local_rate_bound(first), fit->r_squared, fit->points);
      } else {
        std::printf("  post-T1 decay rate not computable (fewer than 10 points with loss > 1e-14)\n");
      }
    } catch (const UnsupportedConfiguration& e) {
      std::printf("  phase predictors skipped: %s\n", e.what());
    }
  }
  const auto path = std::filesystem::path(c.output_dir) / "oracle.csv";
  lh::write_file(path, csv);
  std::printf("trajectories -> %s\n", path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LoRA training-dynamics lab"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, verify_args, oracle_args;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::string scheme;

  auto* run = app.add_subcommand("run", "one trajectory");
  add_common(run, run_args, true);
  run->add_option("--alpha", alpha, "initialization scale (default: first of alphas)");
  run->add_option("--seed", seed, "seed (default: base_seed)");
  run->add_option("--scheme", scheme, "small|spectral|svd_top|svd_bottom (default: first of scheme)");

  auto* sweep = app.add_subcommand("sweep", "every (scheme, alpha, repeat) with aggregates");
  add_common(sweep, sweep_args, true);

  auto* verify = app.add_subcommand("verify", "acceptance battery; exit 1 on any failure");
  add_common(verify, verify_args, false);

  auto* oracle = app.add_subcommand("oracle", "full-matrix vs scalar dynamics under spectral init");
  add_common(oracle, oracle_args, true);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_args, alpha, seed, scheme);
    if (*sweep) return cmd_sweep(sweep_args);
    if (*verify) return cmd_verify(verify_args);
    if (*oracle) return cmd_oracle(oracle_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

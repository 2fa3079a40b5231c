#pragma once

// Seeded sweeps over (scheme, alpha, repeat). Runs are scheduled on a bounded
// worker pool and joined in run-index order, so outputs do not depend on the
// number of workers.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <thread>

#include "loradyn/harness/config.hpp"
#include "loradyn/harness/csv.hpp"
#include "loradyn/harness/svg.hpp"

namespace loradyn::harness {

struct RunKey {
  InitScheme scheme = InitScheme::Small;
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

inline std::string format_alpha(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", alpha);
  return buf;
}

inline std::string describe(const RunKey& k) {
  return "scheme=" + std::string(to_string(k.scheme)) + " alpha=" + format_alpha(k.alpha) +
         " seed=" + std::to_string(k.seed);
}

/// A run that threw; carries the failing (scheme, alpha, seed).
class RunFailed : public Error {
 public:
  RunFailed(RunKey key, const std::string& cause)
      : Error("run " + describe(key) + " failed: " + cause), key_(key) {}
  const RunKey& key() const { return key_; }

 private:
  RunKey key_;
};

struct RunResult {
  RunKey key;
  std::vector<MetricRow> rows;
  LoraState final_state;
};

/// One deterministic trajectory with a MetricRow per recorded step.
inline RunResult run_single(const ExperimentConfig& c, InitScheme scheme, double alpha, std::uint64_t seed) {
  const FineTuneTask task = make_task(c, seed);
  const LoraState s0 = initialize(task, c.r, InitSpec{scheme, alpha, seed, c.random_rotations});
  RunResult out;
  out.key = {scheme, alpha, seed};
  const MetricRecorder recorder(task, s0, c.lr);
  const std::array<Observer, 1> observers{
      [&](std::size_t step, const LoraState& s, double l) { out.rows.push_back(recorder.row(step, s, l)); }};
  out.final_state = gd_run(s0, task, GdOptions{c.lr, c.steps, c.record_every, {}}, observers).final_state;
  return out;
}

inline std::string run_file_name(const RunKey& k) {
  return std::string(to_string(k.scheme)) + "_a" + format_alpha(k.alpha) + "_s" + std::to_string(k.seed) + ".csv";
}

/// Mean and population standard deviation of every metric over the repeats
/// of one (scheme, alpha) group, per recorded step.
struct AggregateSeries {
  InitScheme scheme = InitScheme::Small;
  double alpha = 0.0;
  std::vector<std::size_t> step;
  std::vector<double> t;
  std::vector<std::array<double, kMetricCount>> mean;
  std::vector<std::array<double, kMetricCount>> stddev;

  std::vector<double> mean_of(std::size_t metric) const {
    std::vector<double> v;
    v.reserve(mean.size());
    for (const auto& row : mean) v.push_back(row[metric]);
    return v;
  }
};

inline constexpr std::size_t kLossCol = 0;
inline constexpr std::size_t kAlignCol = 3;
inline constexpr std::size_t kZ1Col = 5;

/// Loss: log10 mean loss per (scheme, alpha). Alignment: log10(1 - mean
/// cos^2) per (scheme, alpha). Phase: loss, 1 - cos^2 and ||Z1||_F for the
/// small-init group with the smallest alpha.
inline std::vector<Series> panel_series(const std::vector<AggregateSeries>& groups, Panel panel) {
  std::vector<Series> out;
  const auto transform = [](std::vector<double> v, bool one_minus) {
    for (auto& x : v) x = log10_floor(one_minus ? 1.0 - x : x);
    return v;
  };
  if (panel == Panel::Phase) {
    const AggregateSeries* g = nullptr;
    for (const auto& a : groups)
      if (a.scheme == InitScheme::Small && (!g || a.alpha < g->alpha)) g = &a;
    if (!g) return out;
    const std::string tag = " (alpha=" + format_alpha(g->alpha) + ")";
    out.push_back({"loss" + tag, g->t, transform(g->mean_of(kLossCol), false)});
    out.push_back({"1 - cos^2" + tag, g->t, transform(g->mean_of(kAlignCol), true)});
    out.push_back({"||Z1||_F" + tag, g->t, transform(g->mean_of(kZ1Col), false)});
    return out;
  }
  for (const auto& g : groups) {
    const std::string label = std::string(to_string(g.scheme)) + " alpha=" + format_alpha(g.alpha);
    if (panel == Panel::Loss) out.push_back({label, g.t, transform(g.mean_of(kLossCol), false)});
    else out.push_back({label, g.t, transform(g.mean_of(kAlignCol), true)});
  }
  return out;
}

struct SweepSummary {
  std::vector<RunResult> runs;  // run-index order
  std::vector<AggregateSeries> aggregates;

  const RunResult* find(InitScheme scheme, double alpha, std::uint64_t seed) const {
    for (const auto& r : runs)
      if (r.key.scheme == scheme && r.key.alpha == alpha && r.key.seed == seed) return &r;
    return nullptr;
  }
};

/// Run order: scheme, then alpha, then repeat; seed = base_seed + repeat.
inline std::vector<RunKey> sweep_schedule(const ExperimentConfig& c) {
  std::vector<RunKey> keys;
  for (InitScheme s : c.schemes)
    for (double a : c.alphas)
      for (std::size_t i = 0; i < c.repeats; ++i) keys.push_back({s, a, c.base_seed + i});
  return keys;
}

/// LORA_LAB_WORKERS if set to a positive integer, else the hardware
/// concurrency (at least 1).
inline std::size_t default_workers() {
  if (const char* env = std::getenv("LORA_LAB_WORKERS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline AggregateSeries aggregate_group(std::span<const RunResult* const> group) {
  AggregateSeries a;
  a.scheme = group.front()->key.scheme;
  a.alpha = group.front()->key.alpha;
  const std::size_t rows = group.front()->rows.size();
  for (const RunResult* r : group)
    if (r->rows.size() != rows) throw Error("aggregate: runs in a group recorded different step counts");
  const double count = static_cast<double>(group.size());
  for (std::size_t i = 0; i < rows; ++i) {
    std::array<double, kMetricCount> sum{}, mean{}, var{};
    for (const RunResult* r : group) {
      const auto v = metric_values(r->rows[i]);
      for (std::size_t j = 0; j < kMetricCount; ++j) sum[j] += v[j];
    }
    for (std::size_t j = 0; j < kMetricCount; ++j) mean[j] = sum[j] / count;
    for (const RunResult* r : group) {
      const auto v = metric_values(r->rows[i]);
      for (std::size_t j = 0; j < kMetricCount; ++j) var[j] += (v[j] - mean[j]) * (v[j] - mean[j]);
    }
    for (auto& x : var) x = std::sqrt(x / count);
    a.step.push_back(group.front()->rows[i].step);
    a.t.push_back(group.front()->rows[i].t);
    a.mean.push_back(mean);
    a.stddev.push_back(var);
  }
  return a;
}

inline std::vector<AggregateSeries> aggregate(const std::vector<RunResult>& runs) {
  std::vector<AggregateSeries> out;
  std::vector<bool> taken(runs.size(), false);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (taken[i]) continue;
    std::vector<const RunResult*> group;
    for (std::size_t j = i; j < runs.size(); ++j) {
      if (!taken[j] && runs[j].key.scheme == runs[i].key.scheme && runs[j].key.alpha == runs[i].key.alpha) {
        group.push_back(&runs[j]);
        taken[j] = true;
      }
    }
    out.push_back(aggregate_group(group));
  }
  return out;
}

/// Runs every scheduled trajectory. The first failure (in run-index order
/// among the runs attempted) is rethrown as RunFailed after all workers stop.
inline SweepSummary run_sweep(const ExperimentConfig& c, std::size_t workers = default_workers()) {
  c.validate();
  const std::vector<RunKey> keys = sweep_schedule(c);
  std::vector<RunResult> results(keys.size());
  std::vector<std::exception_ptr> errors(keys.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  const auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= keys.size() || abort.load()) return;
      try {
        results[i] = run_single(c, keys[i].scheme, keys[i].alpha, keys[i].seed);
      } catch (...) {
        errors[i] = std::current_exception();
        abort.store(true);
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, keys.size()));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw RunFailed(keys[i], e.what());
    }
  }
  SweepSummary s;
  s.runs = std::move(results);
  s.aggregates = aggregate(s.runs);
  return s;
}

inline std::string aggregate_csv(const std::vector<AggregateSeries>& groups) {
  std::string out = kAggregateSchema;
  out += "\nscheme,alpha,step,t";
  for (const char* c : kMetricColumns) {
    ((out += ',') += c) += "_mean";
    ((out += ',') += c) += "_std";
  }
  out += '\n';
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.step.size(); ++i) {
      out += to_string(g.scheme);
      out += ',';
      put_number(out, g.alpha);
      out += ',' + std::to_string(g.step[i]) + ',';
      put_number(out, g.t[i]);
      for (std::size_t j = 0; j < kMetricCount; ++j) {
        out += ',';
        put_number(out, g.mean[i][j]);
        out += ',';
        put_number(out, g.stddev[i][j]);
      }
      out += '\n';
    }
  }
  return out;
}

/// Final recorded row of every run.
inline std::string summary_csv(const std::vector<RunResult>& runs) {
  std::string out = kSummarySchema;
  out += "\nscheme,alpha,seed," + trajectory_header() + '\n';
  for (const auto& r : runs) {
    if (r.rows.empty()) continue;
    out += to_string(r.key.scheme);
    out += ',';
    put_number(out, r.key.alpha);
    out += ',' + std::to_string(r.key.seed) + ',';
    put_row(out, r.rows.back());
  }
  return out;
}

/// runs/<scheme>_a<alpha>_s<seed>.csv, aggregate.csv, summary.csv and, when
/// requested, the three SVG panels. Returns the written paths.
inline std::vector<std::filesystem::path> write_sweep(const SweepSummary& s, const std::filesystem::path& dir,
                                                      bool svg) {
  std::vector<std::filesystem::path> written;
  const auto put = [&](const std::filesystem::path& p, const std::string& content) {
    write_file(p, content);
    written.push_back(p);
  };
  for (const auto& r : s.runs) put(dir / "runs" / run_file_name(r.key), trajectory_csv(r.rows));
  put(dir / "aggregate.csv", aggregate_csv(s.aggregates));
  put(dir / "summary.csv", summary_csv(s.runs));
  if (svg) {
    for (Panel p : {Panel::Loss, Panel::Alignment, Panel::Phase}) {
      const auto series = panel_series(s.aggregates, p);
      if (series.empty()) continue;
      put(dir / (std::string(to_string(p)) + ".svg"), render_svg(panel_title(p), "t", panel_ylabel(p), series));
    }
  }
  return written;
}

}  // namespace loradyn::harness

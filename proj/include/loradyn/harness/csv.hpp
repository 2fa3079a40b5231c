#pragma once

// CSV output. Numbers are written as %.16e (17 significant digits), missing
// values as "nan", lines end in LF. The first line names the schema version.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>

#include "loradyn/metrics.hpp"

namespace loradyn::harness {

inline constexpr const char* kTrajectorySchema = "# schema: loradyn.trajectory/1";
inline constexpr const char* kAggregateSchema = "# schema: loradyn.aggregate/1";
inline constexpr const char* kSummarySchema = "# schema: loradyn.summary/1";

inline constexpr const char* kMetricColumns[] = {"loss",    "L_S",     "L_N",    "align_cos2",     "imbalance_ratio",
                                                 "z1_fro",  "z2_fro",  "d1_norm", "d2_norm",       "conserve_drift",
                                                 "gBAv"};
inline constexpr std::size_t kMetricCount = std::size(kMetricColumns);

/// The real-valued metric columns of a row, in CSV order.
inline std::array<double, kMetricCount> metric_values(const MetricRow& r) {
  return {r.loss, r.L_S, r.L_N, r.align_cos2, r.imbalance_ratio, r.z1_fro,
          r.z2_fro, r.d1_norm, r.d2_norm, r.conserve_drift, r.gBAv};
}

inline void put_number(std::string& out, double x) {
  if (std::isnan(x)) {
    out += "nan";
  } else if (std::isinf(x)) {
    out += x > 0 ? "inf" : "-inf";
  } else {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", x);
    out += buf;
  }
}

inline std::string trajectory_header() {
  std::string h = "step,t";
  for (const char* c : kMetricColumns) (h += ',') += c;
  return h;
}

inline void put_row(std::string& out, const MetricRow& r) {
  out += std::to_string(r.step);
  out += ',';
  put_number(out, r.t);
  for (double v : metric_values(r)) {
    out += ',';
    put_number(out, v);
  }
  out += '\n';
}

inline std::string trajectory_csv(std::span<const MetricRow> rows) {
  std::string out = kTrajectorySchema;
  out += '\n';
  out += trajectory_header();
  out += '\n';
  for (const auto& r : rows) put_row(out, r);
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace loradyn::harness

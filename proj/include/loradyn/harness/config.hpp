#pragma once

// Flat key=value experiment configuration. Lines starting with '#' and blank
// lines are ignored; list values are comma separated.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "loradyn/init.hpp"

namespace loradyn::harness {

enum class ProblemKind { Gaussian, TwoDirection };

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::Gaussian;
  Eigen::Index m = 10;
  Eigen::Index h = 100;
  Eigen::Index n = 10;
  Eigen::Index r = 4;
  double imbalance_c = 1.05;
  std::vector<double> delta_magnitudes{5.0};
  std::vector<std::size_t> delta_indices{0};
  double sigma_delta = std::sqrt(2.0);  // two_direction only
  std::vector<InitScheme> schemes{InitScheme::Small, InitScheme::Spectral};
  std::vector<double> alphas{1e-5, 1e-4, 1e-3};
  double lr = 1e-4;
  std::size_t steps = 200000;
  std::size_t record_every = 100;
  std::size_t repeats = 30;
  std::uint64_t base_seed = 0;
  bool random_rotations = false;
  std::string output_dir = "out";
  bool emit_svg = false;

  void validate() const {
    if (repeats < 1) throw PreconditionError("config: repeats must be >= 1");
    if (alphas.empty()) throw PreconditionError("config: alphas must be non-empty");
    if (schemes.empty()) throw PreconditionError("config: scheme must be non-empty");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw PreconditionError("config: lr must be > 0");
    if (record_every < 1) throw PreconditionError("config: record_every must be >= 1");
    if (r < 1) throw PreconditionError("config: r must be >= 1");
    for (double a : alphas)
      if (!(a >= 0.0) || !std::isfinite(a)) throw PreconditionError("config: alphas must be finite and >= 0");
    if (problem == ProblemKind::Gaussian) {
      if (m < 1 || n < 1) throw DimensionError("config: m and n must be >= 1");
      if (h < std::min(m, n)) throw DimensionError("config: h must be >= min(m, n)");
      if (!(imbalance_c > 0.0)) throw PreconditionError("config: imbalance_c must be > 0");
      if (delta_magnitudes.size() != delta_indices.size()) {
        throw PreconditionError("config: delta_magnitudes and delta_indices differ in length");
      }
    }
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw PreconditionError("config: key '" + key + "' expects a real, got '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw PreconditionError("config: key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return x;
}

inline bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw PreconditionError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

/// Applies one key=value assignment; unknown keys are rejected.
inline void apply(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  const auto idx = [&](const std::string& v) { return static_cast<Eigen::Index>(parse_count(key, v)); };
  if (key == "problem") {
    if (value == "gaussian") c.problem = ProblemKind::Gaussian;
    else if (value == "two_direction") c.problem = ProblemKind::TwoDirection;
    else throw PreconditionError("config: problem must be gaussian or two_direction, got '" + value + "'");
  } else if (key == "m") c.m = idx(value);
  else if (key == "h") c.h = idx(value);
  else if (key == "n") c.n = idx(value);
  else if (key == "r") c.r = idx(value);
  else if (key == "imbalance_c") c.imbalance_c = parse_real(key, value);
  else if (key == "sigma_delta") c.sigma_delta = parse_real(key, value);
  else if (key == "lr") c.lr = parse_real(key, value);
  else if (key == "steps") c.steps = parse_count(key, value);
  else if (key == "record_every") c.record_every = parse_count(key, value);
  else if (key == "repeats") c.repeats = parse_count(key, value);
  else if (key == "base_seed") c.base_seed = parse_count(key, value);
  else if (key == "random_rotations") c.random_rotations = parse_flag(key, value);
  else if (key == "emit_svg") c.emit_svg = parse_flag(key, value);
  else if (key == "output_dir") c.output_dir = value;
  else if (key == "delta_magnitudes") {
    c.delta_magnitudes.clear();
    for (const auto& v : split_list(value)) c.delta_magnitudes.push_back(parse_real(key, v));
  } else if (key == "delta_indices") {
    c.delta_indices.clear();
    for (const auto& v : split_list(value)) c.delta_indices.push_back(parse_count(key, v));
  } else if (key == "alphas") {
    c.alphas.clear();
    for (const auto& v : split_list(value)) c.alphas.push_back(parse_real(key, v));
  } else if (key == "scheme") {
    c.schemes.clear();
    for (const auto& v : split_list(value)) {
      const auto s = parse_scheme(v);
      if (!s) throw PreconditionError("config: unknown scheme '" + v + "'");
      c.schemes.push_back(*s);
    }
  } else {
    throw PreconditionError("config: unknown key '" + key + "'");
  }
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<input>") {
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw PreconditionError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      apply(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    } catch (const PreconditionError& e) {
      throw PreconditionError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

/// The fine-tuning task for one run; the Gaussian problem is drawn from `seed`.
inline FineTuneTask make_task(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.problem == ProblemKind::TwoDirection) return two_direction_fixture(c.sigma_delta).task;
  return build_finetune(build_pretrained(c.m, c.h, c.n, seed, c.imbalance_c), c.delta_magnitudes,
                        c.delta_indices);
}

}  // namespace loradyn::harness

#pragma once

// Initialization schemes for the adapters. Every scheme starts from
// B1 = B2 = 0, so the initial loss is always 1/2 ||DeltaY||_F^2.

#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>

#include "loradyn/dynamics.hpp"

namespace loradyn {

enum class InitScheme { Small, Spectral, SvdTop, SvdBottom };

inline std::string_view to_string(InitScheme s) {
  switch (s) {
    case InitScheme::Small: return "small";
    case InitScheme::Spectral: return "spectral";
    case InitScheme::SvdTop: return "svd_top";
    case InitScheme::SvdBottom: return "svd_bottom";
  }
  return "?";
}

inline std::optional<InitScheme> parse_scheme(std::string_view name) {
  if (name == "small") return InitScheme::Small;
  if (name == "spectral") return InitScheme::Spectral;
  if (name == "svd_top") return InitScheme::SvdTop;
  if (name == "svd_bottom") return InitScheme::SvdBottom;
  return std::nullopt;
}

struct InitSpec {
  InitScheme scheme = InitScheme::Small;
  double alpha = 1e-3;
  std::uint64_t seed = 0;
  bool random_rotations = false;  // spectral only
};

// Stream ids keep the adapter draws independent of the problem draws for the
// same seed.
inline constexpr std::uint64_t kInitStream = 2;
inline constexpr std::uint64_t kRotationStream = 3;

/// A1, A2 i.i.d. N(0, alpha^2); B1 = B2 = 0.
inline LoraState small_init(const FineTuneTask& task, Eigen::Index r, double alpha, std::uint64_t seed) {
  if (r < 1) throw PreconditionError("small_init: r must be >= 1");
  if (!(alpha >= 0.0)) throw PreconditionError("small_init: alpha must be >= 0");
  const auto& pre = task.pre;
  Rng rng(seed, kInitStream);
  LoraState s = LoraState::zeros(pre.m(), pre.h(), pre.n(), r);
  s.A1 = rng.gaussian(r, pre.n(), alpha);
  s.A2 = rng.gaussian(r, pre.h(), alpha);
  return s;
}

/// Orthogonal frames in which spectral initialization is diagonal. Direction
/// j < r of the rotated problem is singular pair perm[j] of Y_pre: the active
/// directions of Delta Y first, then the remaining pairs in order.
struct SpectralFrame {
  std::vector<std::size_t> perm;  // length min(m, n)
  Matrix U;    // m x min(m,n), permuted columns of U_Y
  Matrix G12;  // n x n, [V_Y^S, V_perp]
  Matrix G22;  // h x h, [G^S, G_perp]
  Matrix G11;  // r x r
  Matrix G21;  // r x r
};

inline SpectralFrame spectral_frame(const FineTuneTask& task, Eigen::Index r, std::uint64_t seed,
                                    bool random_rotations = false) {
  const auto& pre = task.pre;
  const auto k = static_cast<std::size_t>(pre.k());
  if (r < 1) throw PreconditionError("spectral_init: r must be >= 1");
  if (static_cast<std::size_t>(r) < task.rank_delta()) {
    throw PreconditionError("spectral_init: LoRA rank r = " + std::to_string(r) + " < rank(DeltaY) = " +
                            std::to_string(task.rank_delta()));
  }
  if (static_cast<std::size_t>(r) > k) {
    throw PreconditionError("spectral_init: r must be <= min(m, n)");
  }
  SpectralFrame f;
  std::vector<bool> used(k, false);
  for (const auto& t : task.triples) {
    f.perm.push_back(t.index);
    used[t.index] = true;
  }
  for (std::size_t i = 0; i < k; ++i)
    if (!used[i]) f.perm.push_back(i);

  f.U.resize(pre.m(), pre.k());
  Matrix v_lead(pre.n(), pre.k());
  Matrix g_lead(pre.h(), pre.k());
  for (std::size_t j = 0; j < k; ++j) {
    const auto src = static_cast<Eigen::Index>(f.perm[j]);
    const auto dst = static_cast<Eigen::Index>(j);
    f.U.col(dst) = pre.U_Y.col(src);
    v_lead.col(dst) = pre.V_Y.col(src);
    g_lead.col(dst) = pre.G.col(src);
  }
  f.G12.resize(pre.n(), pre.n());
  f.G12.leftCols(pre.k()) = v_lead;
  if (pre.n() > pre.k()) f.G12.rightCols(pre.n() - pre.k()) = orthogonal_complement(v_lead);
  f.G22 = pre.G;
  f.G22.leftCols(pre.k()) = g_lead;

  if (random_rotations) {
    Rng rng(seed, kRotationStream);
    f.G11 = rng.orthogonal(r);
    f.G21 = rng.orthogonal(r);
  } else {
    f.G11 = Matrix::Identity(r, r);
    f.G21 = Matrix::Identity(r, r);
  }
  return f;
}

/// A1 = G11 diag(a1) G12[:, :r]^T and A2 = G21 diag(a2) G22[:, :r]^T with
/// a1, a2 ~ N(0, alpha^2); B1 = B2 = 0.
inline LoraState spectral_init(const FineTuneTask& task, Eigen::Index r, double alpha, std::uint64_t seed,
                               bool random_rotations = false) {
  if (!(alpha >= 0.0)) throw PreconditionError("spectral_init: alpha must be >= 0");
  const SpectralFrame f = spectral_frame(task, r, seed, random_rotations);
  const auto& pre = task.pre;
  Rng rng(seed, kInitStream);
  Vector a1(r), a2(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    a1(i) = alpha * rng.normal();
    a2(i) = alpha * rng.normal();
  }
  LoraState s = LoraState::zeros(pre.m(), pre.h(), pre.n(), r);
  s.A1 = f.G11 * a1.asDiagonal() * f.G12.leftCols(r).transpose();
  s.A2 = f.G21 * a2.asDiagonal() * f.G22.leftCols(r).transpose();
  return s;
}

/// Adapters expressed in the spectral frame.
struct RotatedState {
  Matrix A1;  // G11^T A1 G12
  Matrix B1;  // G22^T B1 G11
  Matrix A2;  // G21^T A2 G22
  Matrix B2;  // U^T B2 G21
};

inline RotatedState rotate(const LoraState& s, const SpectralFrame& f) {
  return {f.G11.transpose() * s.A1 * f.G12, f.G22.transpose() * s.B1 * f.G11,
          f.G21.transpose() * s.A2 * f.G22, f.U.transpose() * s.B2 * f.G21};
}

/// Frobenius norm of everything off the main diagonal of a rectangular matrix.
inline double offdiag_norm(const Matrix& m) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) acc += m(i, j) * m(i, j);
  return std::sqrt(acc);
}

/// Largest off-diagonal mass over the four rotated adapters.
inline double rotated_offdiag_norm(const LoraState& s, const SpectralFrame& f) {
  const RotatedState rs = rotate(s, f);
  return std::max({offdiag_norm(rs.A1), offdiag_norm(rs.B1), offdiag_norm(rs.A2), offdiag_norm(rs.B2)});
}

enum class SvdSide { Top, Bottom };

/// Initialization from the singular spaces of the pre-trained weights alone:
/// row i of A1 is a_i times the chosen i-th right singular vector of W1 and
/// likewise for A2 with W2, a_i ~ N(0, alpha^2); B1 = B2 = 0.
inline LoraState svd_init(const PretrainedFactorization& pre, Eigen::Index r, double alpha, SvdSide which,
                          std::uint64_t seed) {
  if (r < 1) throw PreconditionError("svd_init: r must be >= 1");
  const SvdResult s1 = svd(pre.W1);
  const SvdResult s2 = svd(pre.W2);
  const auto rank_of = [](const Vector& sv) {
    const double tol = sv.size() ? sv(0) * 1e-12 : 0.0;
    return static_cast<Eigen::Index>((sv.array() > tol).count());
  };
  const Eigen::Index rank1 = rank_of(s1.S), rank2 = rank_of(s2.S);
  if (r > std::min(rank1, rank2)) throw PreconditionError("svd_init: r exceeds the rank of W1 or W2");
  Rng rng(seed, kInitStream);
  LoraState s = LoraState::zeros(pre.m(), pre.h(), pre.n(), r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Eigen::Index c1 = which == SvdSide::Top ? i : rank1 - 1 - i;
    const Eigen::Index c2 = which == SvdSide::Top ? i : rank2 - 1 - i;
    const double a1 = alpha * rng.normal();
    const double a2 = alpha * rng.normal();
    s.A1.row(i) = a1 * s1.V.col(c1).transpose();
    s.A2.row(i) = a2 * s2.V.col(c2).transpose();
  }
  return s;
}

inline LoraState initialize(const FineTuneTask& task, Eigen::Index r, const InitSpec& spec) {
  switch (spec.scheme) {
    case InitScheme::Small: return small_init(task, r, spec.alpha, spec.seed);
    case InitScheme::Spectral: return spectral_init(task, r, spec.alpha, spec.seed, spec.random_rotations);
    case InitScheme::SvdTop: return svd_init(task.pre, r, spec.alpha, SvdSide::Top, spec.seed);
    case InitScheme::SvdBottom: return svd_init(task.pre, r, spec.alpha, SvdSide::Bottom, spec.seed);
  }
  throw PreconditionError("initialize: unknown scheme");
}

}  // namespace loradyn

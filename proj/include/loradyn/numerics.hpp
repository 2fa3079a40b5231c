#pragma once

// Dense real-matrix substrate: storage, a one-sided Jacobi SVD, orthogonal
// completion and seeded Gaussian sampling. Everything is double precision.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "loradyn/errors.hpp"

namespace loradyn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct SvdResult {
  Matrix U;  // rows x k, orthonormal columns
  Vector S;  // k values, non-negative, non-increasing
  Matrix V;  // cols x k, orthonormal columns
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

namespace detail {

inline void flip_sign_convention(Matrix& U, Matrix& V) {
  // Largest-magnitude entry of every left singular vector is made positive.
  for (Eigen::Index j = 0; j < U.cols(); ++j) {
    Eigen::Index arg = 0;
    U.col(j).cwiseAbs().maxCoeff(&arg);
    if (U(arg, j) < 0.0) {
      U.col(j) *= -1.0;
      V.col(j) *= -1.0;
    }
  }
}

}  // namespace detail

/// Columns orthonormal to the k orthonormal columns of `basis` in R^n, so that
/// [basis | result] is square orthogonal.
inline Matrix orthogonal_complement(const Matrix& basis, Eigen::Index n) {
  const Eigen::Index k = basis.cols();
  if (k > n) throw DimensionError("orthogonal_complement: k > n");
  if (k > 0 && basis.rows() != n) throw DimensionError("orthogonal_complement: basis rows != n");
  if (k == 0) return Matrix::Identity(n, n);
  const Matrix gram = basis.transpose() * basis;
  if ((gram - Matrix::Identity(k, k)).norm() > 1e-10) {
    throw PreconditionError("orthogonal_complement: basis columns are not orthonormal");
  }
  Eigen::HouseholderQR<Matrix> qr(basis);
  Matrix q = qr.householderQ();
  return q.rightCols(n - k);
}

inline Matrix orthogonal_complement(const Matrix& basis) {
  return orthogonal_complement(basis, basis.rows());
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations. Singular values come
/// back sorted non-increasing; each left vector has its largest-magnitude
/// entry positive. Left vectors of exactly-zero singular values are filled in
/// with an orthogonal completion.
inline SvdResult svd(const Matrix& m, std::size_t max_sweeps = 80) {
  if (!all_finite(m)) throw PreconditionError("svd: matrix has non-finite entries");
  const bool transposed = m.rows() < m.cols();
  Matrix a = transposed ? Matrix(m.transpose()) : m;
  const Eigen::Index p = a.rows();
  const Eigen::Index q = a.cols();
  Matrix v = Matrix::Identity(q, q);

  const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max<Eigen::Index>(p, 1));
  bool converged = (q < 2);
  std::size_t sweep = 0;
  for (; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (Eigen::Index i = 0; i + 1 < q; ++i) {
      for (Eigen::Index j = i + 1; j < q; ++j) {
        const double alpha = a.col(i).squaredNorm();
        const double beta = a.col(j).squaredNorm();
        const double gamma = a.col(i).dot(a.col(j));
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index r = 0; r < p; ++r) {
          const double ai = a(r, i);
          const double aj = a(r, j);
          a(r, i) = c * ai - s * aj;
          a(r, j) = s * ai + c * aj;
        }
        for (Eigen::Index r = 0; r < q; ++r) {
          const double vi = v(r, i);
          const double vj = v(r, j);
          v(r, i) = c * vi - s * vj;
          v(r, j) = s * vi + c * vj;
        }
      }
    }
  }
  if (!converged) throw SvdNotConverged(sweep);

  Vector norms(q);
  for (Eigen::Index j = 0; j < q; ++j) norms(j) = a.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return norms(x) > norms(y); });

  SvdResult out;
  out.U = Matrix::Zero(p, q);
  out.S = Vector(q);
  out.V = Matrix(q, q);
  Eigen::Index nonzero = 0;
  for (Eigen::Index k = 0; k < q; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.S(k) = norms(src);
    out.V.col(k) = v.col(src);
    if (norms(src) > std::numeric_limits<double>::min()) {
      out.U.col(k) = a.col(src) / norms(src);
      ++nonzero;
    }
  }
  if (nonzero < q) {
    const Matrix fill = orthogonal_complement(Matrix(out.U.leftCols(nonzero)), p);
    out.U.rightCols(q - nonzero) = fill.leftCols(q - nonzero);
  }
  detail::flip_sign_convention(out.U, out.V);
  if (transposed) {
    std::swap(out.U, out.V);
    detail::flip_sign_convention(out.U, out.V);
  }
  return out;
}

/// Seeded normal sampler. Distinct `stream` values give independent
/// sequences for the same seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  double normal() { return dist_(engine_); }

  Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev) {
    if (!(stddev >= 0.0)) throw PreconditionError("gaussian: std must be >= 0");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * normal();
    return m;
  }

  /// Haar-distributed orthogonal matrix (QR of a Gaussian with R's diagonal
  /// made positive).
  Matrix orthogonal(Eigen::Index n) {
    if (n < 1) throw PreconditionError("random_orthogonal: n must be >= 1");
    const Matrix g = gaussian(n, n, 1.0);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix& r = qr.matrixQR();
    for (Eigen::Index j = 0; j < n; ++j)
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

inline Matrix random_gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::uint64_t seed) {
  return Rng(seed).gaussian(rows, cols, stddev);
}

inline Matrix random_orthogonal(Eigen::Index n, std::uint64_t seed) { return Rng(seed).orthogonal(n); }

/// Vertical concatenation [top; bottom].
inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) throw DimensionError("vstack: column counts differ");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

inline Vector vstack(const Vector& top, const Vector& bottom) {
  Vector out(top.size() + bottom.size());
  out.head(top.size()) = top;
  out.tail(bottom.size()) = bottom;
  return out;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y ~ slope*x + intercept. R^2 is 1 for a perfect
/// fit and 0 when y is constant.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw PreconditionError("fit_line: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw PreconditionError("fit_line: x values are all equal");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 0.0;
  return fit;
}

}  // namespace loradyn

#pragma once

// Clamped B-spline bases, their first derivatives, difference penalties and
// tensor-product designs.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rsl/error.hpp"

namespace rsl {

class KnotVector {
 public:
  KnotVector() = default;

  /// Clamped knot vector on [lo, hi]; boundary knots repeated degree+1 times.
  KnotVector(int degree, std::vector<double> interior, double lo, double hi)
      : degree_(degree), interior_(std::move(interior)), lo_(lo), hi_(hi) {
    if (degree < 1 || degree > 7) throw Error(ErrorKind::TooFewBasis, "degree must lie in [1, 7]");
    if (!(hi > lo)) throw Error(ErrorKind::DegenerateRange, "knot boundary must satisfy lo < hi");
    for (std::size_t i = 0; i < interior_.size(); ++i) {
      if (!(interior_[i] > lo && interior_[i] < hi))
        throw Error(ErrorKind::DegenerateRange, "interior knots must lie strictly inside the boundary");
      if (i && interior_[i] < interior_[i - 1])
        throw Error(ErrorKind::DegenerateRange, "interior knots must be nondecreasing");
    }
    full_.assign(static_cast<std::size_t>(degree + 1), lo);
    full_.insert(full_.end(), interior_.begin(), interior_.end());
    full_.insert(full_.end(), static_cast<std::size_t>(degree + 1), hi);
  }

  int degree() const { return degree_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& interior() const { return interior_; }
  const std::vector<double>& full() const { return full_; }
  int n_basis() const { return static_cast<int>(interior_.size()) + degree_ + 1; }

  // Index of the knot span containing t, in [degree, n_basis - 1].
  int span(double t) const {
    const int n = n_basis();
    if (t >= full_[static_cast<std::size_t>(n)]) return n - 1;
    auto first = full_.begin() + degree_;
    auto last = full_.begin() + n + 1;
    return static_cast<int>(std::upper_bound(first, last, t) - full_.begin()) - 1;
  }

 private:
  int degree_ = 3;
  std::vector<double> interior_;
  double lo_ = 0.0, hi_ = 1.0;
  std::vector<double> full_;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Nonzero basis values of the given degree on `span` (indices span-degree..span).
inline void basis_values(const std::vector<double>& U, int span, double t, int degree, double* out) {
  double left[8], right[8];
  out[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = t - U[static_cast<std::size_t>(span + 1 - j)];
    right[j] = U[static_cast<std::size_t>(span + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

inline double checked_point(const KnotVector& knots, double t) {
  const double tol = 1e-12 * (knots.hi() - knots.lo());
  if (!std::isfinite(t) || t < knots.lo() - tol || t > knots.hi() + tol)
    throw Error(ErrorKind::PointOutOfRange, "point " + std::to_string(t) + " outside [" +
                                                std::to_string(knots.lo()) + ", " + std::to_string(knots.hi()) + "]");
  return std::clamp(t, knots.lo(), knots.hi());
}

}  // namespace detail

/// Interior knots at equally spaced quantiles of `values`; boundaries at the
/// data extremes widened by 0.1% of the range on each side.
inline KnotVector make_knots(std::span<const double> values, int n_basis, int degree = 3) {
  if (n_basis < degree + 1)
    throw Error(ErrorKind::TooFewBasis, "need at least degree+1 = " + std::to_string(degree + 1) + " basis functions");
  if (values.empty()) throw Error(ErrorKind::DegenerateRange, "no values to place knots on");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double range = sorted.back() - sorted.front();
  if (!(range > 0.0)) throw Error(ErrorKind::DegenerateRange, "values have zero range");
  const int n_interior = n_basis - degree - 1;
  std::vector<double> interior;
  for (int k = 1; k <= n_interior; ++k)
    interior.push_back(detail::quantile_sorted(sorted, static_cast<double>(k) / (n_interior + 1)));
  const double pad = 1e-3 * range;
  return KnotVector(degree, std::move(interior), sorted.front() - pad, sorted.back() + pad);
}

inline Eigen::MatrixXd bspline_design(std::span<const double> points, const KnotVector& knots) {
  const int p = knots.degree();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), knots.n_basis());
  double vals[8];
  for (std::size_t r = 0; r < points.size(); ++r) {
    const double t = detail::checked_point(knots, points[r]);
    const int s = knots.span(t);
    detail::basis_values(knots.full(), s, t, p, vals);
    for (int k = 0; k <= p; ++k) B(static_cast<Eigen::Index>(r), s - p + k) = vals[k];
  }
  return B;
}

/// First derivative of each basis function with respect to the evaluation variable.
inline Eigen::MatrixXd bspline_derivative_design(std::span<const double> points, const KnotVector& knots) {
  const int p = knots.degree();
  const auto& U = knots.full();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), knots.n_basis());
  double lower[8];
  for (std::size_t r = 0; r < points.size(); ++r) {
    const double t = detail::checked_point(knots, points[r]);
    const int s = knots.span(t);
    detail::basis_values(U, s, t, p - 1, lower);  // indices s-p+1 .. s
    for (int k = 0; k <= p; ++k) {
      const int i = s - p + k;
      const double a = k >= 1 ? lower[k - 1] : 0.0;
      const double b = k <= p - 1 ? lower[k] : 0.0;
      const double da = U[static_cast<std::size_t>(i + p)] - U[static_cast<std::size_t>(i)];
      const double db = U[static_cast<std::size_t>(i + p + 1)] - U[static_cast<std::size_t>(i + 1)];
      double v = 0.0;
      if (da > 0.0) v += a / da;
      if (db > 0.0) v -= b / db;
      D(static_cast<Eigen::Index>(r), i) = p * v;
    }
  }
  return D;
}

/// (K - order) x K matrix of order-th differences.
inline Eigen::MatrixXd difference_matrix(int K, int order) {
  if (order < 1 || order >= K)
    throw Error(ErrorKind::OrderTooHigh, "difference order must satisfy 1 <= order < K");
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(K, K);
  for (int o = 0; o < order; ++o) {
    const auto rows = D.rows();
    D = (D.bottomRows(rows - 1) - D.topRows(rows - 1)).eval();
  }
  return D;
}

/// Row-wise product basis; column (h, i, j) is h*I*J + i*J + j.
inline Eigen::MatrixXd tensor_design(const Eigen::MatrixXd& Bt, const Eigen::MatrixXd& Blon,
                                     const Eigen::MatrixXd& Blat) {
  if (Bt.rows() != Blon.rows() || Bt.rows() != Blat.rows())
    throw Error(ErrorKind::RowCountMismatch, "tensor factors evaluated at different row counts");
  const auto H = Bt.cols(), I = Blon.cols(), J = Blat.cols();
  Eigen::MatrixXd T(Bt.rows(), H * I * J);
  for (Eigen::Index r = 0; r < Bt.rows(); ++r)
    for (Eigen::Index h = 0; h < H; ++h)
      for (Eigen::Index i = 0; i < I; ++i) {
        const double hi = Bt(r, h) * Blon(r, i);
        for (Eigen::Index j = 0; j < J; ++j) T(r, (h * I + i) * J + j) = hi * Blat(r, j);
      }
  return T;
}

}  // namespace rsl

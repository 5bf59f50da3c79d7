#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace rsl;

namespace {

// Direct Cox-de Boor recursion, independent of the library's triangular scheme.
double cox_de_boor(const std::vector<double>& U, int i, int p, double t) {
  if (p == 0) {
    const bool last = t == U.back() && U[static_cast<std::size_t>(i)] < U[static_cast<std::size_t>(i + 1)] &&
                      U[static_cast<std::size_t>(i + 1)] == U.back();
    return (U[static_cast<std::size_t>(i)] <= t && t < U[static_cast<std::size_t>(i + 1)]) || last ? 1.0 : 0.0;
  }
  double v = 0.0;
  const double a = U[static_cast<std::size_t>(i + p)] - U[static_cast<std::size_t>(i)];
  const double b = U[static_cast<std::size_t>(i + p + 1)] - U[static_cast<std::size_t>(i + 1)];
  if (a > 0) v += (t - U[static_cast<std::size_t>(i)]) / a * cox_de_boor(U, i, p - 1, t);
  if (b > 0) v += (U[static_cast<std::size_t>(i + p + 1)] - t) / b * cox_de_boor(U, i + 1, p - 1, t);
  return v;
}

KnotVector unit_cubic() { return KnotVector(3, {}, 0.0, 1.0); }

}  // namespace

TEST(Knots, OneInteriorAtMedian) {
  std::vector<double> v;
  for (int i = 0; i <= 100; ++i) v.push_back(i);
  const auto k = make_knots(v, 5, 3);
  ASSERT_EQ(k.interior().size(), 1u);
  EXPECT_NEAR(k.interior()[0], 50.0, 1e-12);
  EXPECT_EQ(k.n_basis(), 5);
  EXPECT_LT(k.lo(), 0.0);
  EXPECT_GT(k.hi(), 100.0);
}

TEST(Knots, Guards) {
  const std::vector<double> v = {1, 2, 3};
  try {
    make_knots(v, 3, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewBasis);
  }
  const std::vector<double> same = {2, 2, 2};
  try {
    make_knots(same, 6, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateRange);
  }
}

TEST(Design, SingleCubicSegment) {
  const std::vector<double> t = {0.5};
  const auto B = bspline_design(t, unit_cubic());
  const double expect[] = {0.125, 0.375, 0.375, 0.125};
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(B(0, j), expect[j], 1e-15);
}

TEST(Design, EndpointInterpolation) {
  std::vector<double> v;
  for (int i = 0; i <= 50; ++i) v.push_back(i * 2.0);
  const auto k = make_knots(v, 8);
  const std::vector<double> ends = {k.lo(), k.hi()};
  const auto B = bspline_design(ends, k);
  EXPECT_NEAR(B(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(B.row(0).tail(7).cwiseAbs().sum(), 0.0, 1e-14);
  EXPECT_NEAR(B(1, 7), 1.0, 1e-14);
}

TEST(Design, MatchesRecursion) {
  std::vector<double> v;
  for (int i = 0; i <= 40; ++i) v.push_back(std::pow(i / 40.0, 2) * 300.0);
  const auto k = make_knots(v, 9);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(k.lo(), k.hi());
  std::vector<double> pts(50);
  for (auto& p : pts) p = u(rng);
  pts.push_back(k.hi());
  const auto B = bspline_design(pts, k);
  for (std::size_t r = 0; r < pts.size(); ++r)
    for (int j = 0; j < k.n_basis(); ++j)
      EXPECT_NEAR(B(static_cast<Eigen::Index>(r), j), cox_de_boor(k.full(), j, 3, pts[r]), 1e-12);
}

TEST(Design, OutOfRange) {
  const std::vector<double> t = {1.5};
  try {
    bspline_design(t, unit_cubic());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PointOutOfRange);
  }
}

TEST(Derivative, SingleCubicSegment) {
  const std::vector<double> t = {0.5};
  const auto D = bspline_derivative_design(t, unit_cubic());
  const double expect[] = {-0.75, -0.75, 0.75, 0.75};
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(D(0, j), expect[j], 1e-14);
}

TEST(Derivative, FiniteDifference) {
  std::vector<double> v;
  for (int i = 0; i <= 60; ++i) v.push_back(-800.0 + i * 47.0);
  const auto k = make_knots(v, 12);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(k.lo() + 1.0, k.hi() - 1.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 40; ++trial) {
    const double t = u(rng);
    const std::vector<double> pts = {t}, lo = {t - h}, hi = {t + h};
    const auto D = bspline_derivative_design(pts, k);
    const Eigen::MatrixXd fd = (bspline_design(hi, k) - bspline_design(lo, k)) / (2 * h);
    EXPECT_LT((D - fd).cwiseAbs().maxCoeff(), 1e-4) << t;
    EXPECT_NEAR(D.sum(), 0.0, 1e-10);
  }
}

TEST(DifferenceMatrix, FirstAndSecondOrder) {
  Eigen::MatrixXd d1(2, 3);
  d1 << -1, 1, 0, 0, -1, 1;
  EXPECT_EQ(difference_matrix(3, 1), d1);
  Eigen::MatrixXd d2(2, 4);
  d2 << 1, -2, 1, 0, 0, 1, -2, 1;
  EXPECT_EQ(difference_matrix(4, 2), d2);
  EXPECT_EQ(difference_matrix(4, 2), difference_matrix(3, 1) * difference_matrix(4, 1));
  try {
    difference_matrix(3, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OrderTooHigh);
  }
}

TEST(Tensor, Trivial) {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(3, 1);
  const auto T = tensor_design(one, one, one);
  EXPECT_EQ(T.cols(), 1);
  EXPECT_EQ(T, one);
}

TEST(Tensor, BruteForce) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  const int n = 4;
  Eigen::MatrixXd Bt(n, 2), Blon(n, 2), Blat(n, 1);
  for (int r = 0; r < n; ++r) {
    Bt.row(r) << u(rng), u(rng);
    Blon.row(r) << u(rng), u(rng);
    Blat(r, 0) = u(rng);
  }
  const auto T = tensor_design(Bt, Blon, Blat);
  ASSERT_EQ(T.cols(), 4);
  int col = 0;
  for (int h = 0; h < 2; ++h)
    for (int i = 0; i < 2; ++i, ++col)
      for (int r = 0; r < n; ++r) EXPECT_EQ(T(r, col), Bt(r, h) * Blon(r, i) * Blat(r, 0));
  EXPECT_THROW(tensor_design(Bt, Blon.topRows(2), Blat), Error);
}

#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace rsl;

namespace {

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

std::vector<double> ar1(std::size_t n, double phi, std::uint64_t seed) {
  auto e = white_noise(n, seed);
  std::vector<double> v(n);
  v[0] = e[0] / std::sqrt(1 - phi * phi);
  for (std::size_t i = 1; i < n; ++i) v[i] = phi * v[i - 1] + e[i];
  return v;
}

PosteriorDraws draws_from(const std::vector<std::vector<double>>& cols, const std::vector<std::string>& names,
                          int chains) {
  PosteriorDraws d;
  for (const auto& n : names) d.parameters.push_back({n, Unit::None, false, true});
  const auto per = cols.front().size() / static_cast<std::size_t>(chains);
  for (int c = 0; c < chains; ++c) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(per), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t r = 0; r < per; ++r)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = cols[j][c * per + r];
    d.chains.push_back(m);
  }
  return d;
}

// B/W computation written out for two whole chains, without splitting.
double rhat_unsplit(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = a.size();
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  auto var = [&](const std::vector<double>& v) {
    double m = mean(v), s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
  };
  const double ma = mean(a), mb = mean(b), m = (ma + mb) / 2;
  const double B = n * ((ma - m) * (ma - m) + (mb - m) * (mb - m));
  const double W = (var(a) + var(b)) / 2;
  return std::sqrt(((n - 1) / n * W + B / n) / W);
}

}  // namespace

TEST(GelmanRubin, IdenticalStreamsNearOne) {
  const auto all = white_noise(8000, 1);
  const Chains chains = {{all.begin(), all.begin() + 2000}, {all.begin() + 2000, all.begin() + 4000},
                         {all.begin() + 4000, all.begin() + 6000}, {all.begin() + 6000, all.end()}};
  EXPECT_NEAR(gelman_rubin(chains), 1.0, 0.01);
}

TEST(GelmanRubin, SeparatedChains) {
  auto a = white_noise(500, 2), b = white_noise(500, 3);
  for (auto& x : a) x *= 1e-3;
  for (auto& x : b) x = 10.0 + 1e-3 * x;
  const double r = gelman_rubin({a, b});
  EXPECT_GT(r, 1.5);
  // Splitting does not change the between-chain separation much; compare to the hand formula.
  EXPECT_GT(r, 0.7 * rhat_unsplit(a, b));
  EXPECT_GT(rhat_unsplit(a, b), 1000.0);
}

TEST(GelmanRubin, MatchesHandFormulaOnSplitHalves) {
  const auto x = white_noise(40, 9);
  const std::vector<double> h1(x.begin(), x.begin() + 20), h2(x.begin() + 20, x.end());
  // One chain of 40 is split into exactly these two halves.
  EXPECT_NEAR(gelman_rubin({x}), rhat_unsplit(h1, h2), 1e-12);
}

TEST(GelmanRubin, Guards) {
  EXPECT_THROW(gelman_rubin({}), Error);
  EXPECT_THROW(gelman_rubin({{1, 2, 3, 4, 5, 6, 7}}), Error);
  EXPECT_NO_THROW(gelman_rubin({{1, 2, 3, 4, 5, 6, 7, 8}}));
  try {
    gelman_rubin({{1, 2, 3}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewDraws);
  }
}

TEST(Ess, IndependentDraws) {
  const auto x = white_noise(4000, 4);
  const double ess = effective_sample_size({{x.begin(), x.begin() + 2000}, {x.begin() + 2000, x.end()}});
  EXPECT_NEAR(ess / 4000.0, 1.0, 0.2);
}

TEST(Ess, Ar1) {
  const double phi = 0.9;
  const auto a = ar1(20000, phi, 5), b = ar1(20000, phi, 6);
  const double expect = 40000.0 * (1 - phi) / (1 + phi);
  EXPECT_NEAR(effective_sample_size({a, b}) / expect, 1.0, 0.3);
}

TEST(Ess, ConstantReturnsDrawCount) {
  EXPECT_EQ(effective_sample_size({std::vector<double>(50, 2.0)}), 50.0);
}

TEST(Quantile, LinearInterpolation) {
  std::vector<double> x(100);
  std::iota(x.begin(), x.end(), 1.0);
  EXPECT_NEAR(quantile(x, 0.05), 5.95, 1e-12);
  EXPECT_NEAR(quantile(x, 0.95), 95.05, 1e-12);
  EXPECT_EQ(quantile(x, 0.0), 1.0);
  EXPECT_EQ(quantile(x, 1.0), 100.0);
  EXPECT_THROW(quantile({}, 0.5), Error);
}

TEST(Mad, KnownValue) {
  // median 3, absolute deviations {2,1,0,1,2} -> median 1
  EXPECT_NEAR(median_absolute_deviation({1, 2, 3, 4, 5}), 1.4826, 1e-12);
}

TEST(Summary, ConstantDraws) {
  const auto d = draws_from({std::vector<double>(40, 2.5)}, {"c"}, 2);
  const auto s = summarize_draws(d);
  ASSERT_EQ(s.rows.size(), 1u);
  const auto& r = s.rows[0];
  EXPECT_EQ(r.variable, "c");
  EXPECT_EQ(r.mean, 2.5);
  EXPECT_EQ(r.sd, 0.0);
  EXPECT_EQ(r.mad, 0.0);
  EXPECT_EQ(r.q5, 2.5);
  EXPECT_EQ(r.q95, 2.5);
  EXPECT_EQ(s.verdict, "No convergence issues detected.");
}

TEST(Summary, VerdictStrings) {
  SummaryRow good, bad;
  good.rhat = 1.01;
  bad.rhat = 1.2;
  EXPECT_EQ(verdict_for({good}), "No convergence issues detected.");
  EXPECT_EQ(verdict_for({good, bad}), "Convergence issues detected, a longer run is necessary.");
  SummaryRow nan;
  nan.rhat = NAN;
  EXPECT_EQ(verdict_for({nan}), std::string(kNotConvergedVerdict));
}

TEST(Summary, ColumnOrder) {
  const std::vector<std::string> expect = {"variable", "mean", "sd", "mad", "q5", "q95", "rhat"};
  ASSERT_EQ(std::size(kSummaryColumns), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(kSummaryColumns[i], expect[i]);
}

TEST(Summary, FilterAndUnits) {
  auto d = draws_from({white_noise(400, 7), white_noise(400, 8)}, {"a", "b"}, 2);
  d.parameters[1].unit = Unit::LevelScale;
  d.transform.rsl_scale = 2.0;
  const auto s = summarize_draws(d, {"b"});
  ASSERT_EQ(s.rows.size(), 1u);
  const auto raw = summarize_draws(d, {"a"});
  auto v = white_noise(400, 8);
  EXPECT_NEAR(s.rows[0].mean, 2.0 * std::accumulate(v.begin(), v.end(), 0.0) / 400, 1e-12);
  EXPECT_THROW(summarize_draws(d, {"missing"}), Error);
  (void)raw;
}

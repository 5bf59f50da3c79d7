#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace rsl;
using rsl::test::obs;

namespace {

Dataset line_data(int n = 20) {
  Dataset d;
  for (int i = 0; i < n; ++i) d.observations.push_back(obs("S", 1000.0 + 50.0 * i, 0.001 * 50.0 * i, 5.0));
  d.sites = {{site_key("S", "Region"), 35, -76}};
  return validate_dataset(d);
}

double llt_logdet(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> f(m);
  EXPECT_EQ(f.info(), Eigen::Success);
  return 2.0 * f.matrixLLT().diagonal().array().log().sum();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::MissingData;
}

// Composite Simpson on a fine mesh, used as an independent integral oracle.
double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST(Standardize, ScalesAndRoundTrips) {
  const auto d = line_data();
  const auto grid = build_prediction_grid(d, 50);
  const auto s = standardize(d, grid);
  EXPECT_NEAR(s.age.mean(), 0.0, 1e-12);
  EXPECT_NEAR(s.rsl.mean(), 0.0, 1e-12);
  const double sd = std::sqrt((s.age.array() - s.age.mean()).square().sum() / (s.age.size() - 1));
  EXPECT_NEAR(sd, 1.0, 1e-12);
  const auto& tr = s.transform;
  for (double a : {-800.0, 1500.0, 2010.0}) EXPECT_NEAR(tr.age_out(tr.age_in(a)), a, 1e-9);
  // a unit slope in internal units maps to rsl_scale/age_scale m/yr
  EXPECT_NEAR(tr.rate_mm_per_yr(1.0), tr.rsl_scale / tr.age_scale * 1000.0, 1e-12);
  EXPECT_NEAR(tr.slope_out(tr.slope_in(0.0015)), 0.0015, 1e-15);
}

TEST(Standardize, Guards) {
  Dataset d;
  d.observations = {obs("S", 1000, 0.0), obs("S", 1000, 0.1)};
  d.sites = {{site_key("S", "Region"), 35, -76}};
  d = validate_dataset(d);
  EXPECT_EQ(kind_of([&] { standardize(d, {}); }), ErrorKind::DegenerateRange);
}

TEST(Quadrature, ExactForConstantsAndLinears) {
  const auto q = igp_quadrature(-2.0, 3.0, 37);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.0, 3.0);
  Eigen::VectorXd constant = Eigen::VectorXd::Constant(q.size(), 1.7);
  Eigen::VectorXd linear = (0.4 * q.nodes().array() - 0.9).matrix();
  for (int k = 0; k < 50; ++k) {
    const double t = u(rng);
    EXPECT_NEAR(q.integral_row(t).dot(constant), 1.7 * (t + 2.0), 1e-12);
    const double exact = 0.2 * (t * t - 4.0) - 0.9 * (t + 2.0);
    EXPECT_NEAR(q.integral_row(t).dot(linear), exact, 1e-12);
    EXPECT_NEAR(q.interpolation_row(t).dot(linear), 0.4 * t - 0.9, 1e-12);
  }
  EXPECT_NEAR(q.weights().sum(), 5.0, 1e-12);
}

TEST(Quadrature, SineIntegral) {
  const auto q = igp_quadrature(0.0, M_PI, 101);
  const Eigen::VectorXd p = q.nodes().array().sin();
  EXPECT_NEAR(q.integral_row(M_PI).dot(p), 2.0, 3e-4);
  EXPECT_NEAR(q.weights().dot(p), 2.0, 3e-4);
}

TEST(Quadrature, IntegralOfInterpolant) {
  const auto q = igp_quadrature(0.0, 10.0, 11);
  Eigen::VectorXd p(11);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  for (auto& v : p) v = z(rng);
  const auto interp = [&](double x) { return q.interpolation_row(x).dot(p); };
  for (double t : {0.0, 0.3, 4.5, 7.77, 10.0}) {
    // integrate hat-by-hat so the kinks at nodes fall on Simpson panel edges
    double ref = 0.0;
    for (int k = 0; k < 10 && k < t; ++k) ref += simpson(interp, k, std::min<double>(k + 1, t), 200);
    EXPECT_NEAR(q.integral_row(t).dot(p), ref, 1e-10) << t;
  }
}

TEST(Quadrature, Guards) {
  EXPECT_EQ(kind_of([] { igp_quadrature(0, 1, 1); }), ErrorKind::InvalidSpec);
  EXPECT_EQ(kind_of([] { igp_quadrature(1, 1, 5); }), ErrorKind::DegenerateRange);
  EXPECT_EQ(kind_of([] { igp_quadrature(0, 1, 5).integral_row(1.5); }), ErrorKind::PointOutOfRange);
}

TEST(Igp, CovarianceMatchesDoubleSum) {
  const auto q = igp_quadrature(-1.0, 1.0, 21);
  const auto K = igp_covariance(q.nodes(), 0.3, 0.5);
  EXPECT_NEAR(K(0, 20), 0.5 * std::pow(0.3, 4.0), 1e-15);
  Eigen::VectorXd t(3);
  t << -0.5, 0.1, 0.9;
  const Eigen::MatrixXd L = q.integral_operator(t);
  const Eigen::MatrixXd C = L * K * L.transpose();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int a = 0; a < 21; ++a)
        for (int b = 0; b < 21; ++b)
          s += L(i, a) * L(j, b) * 0.5 * std::pow(0.3, std::pow(q.nodes()[a] - q.nodes()[b], 2));
      EXPECT_NEAR(C(i, j), s, 1e-12);
    }
}

TEST(NoisyInput, Inflation) {
  Dataset d;
  d.observations = {obs("S", 1000, 0, 10.0), obs("S", 1100, 0, 0.0)};
  d.sites = {{site_key("S", "Region"), 35, -76}};
  d = validate_dataset(d);
  const std::vector<double> slope = {0.002, 0.002};
  const auto v = ni_variance_inflation(slope, d);
  EXPECT_NEAR(v[0], 4e-4, 1e-18);
  EXPECT_EQ(v[1], 0.0);
  const std::vector<double> flat = {0.0, 0.0};
  for (double x : ni_variance_inflation(flat, d)) EXPECT_EQ(x, 0.0);
  const std::vector<double> one = {0.0};
  EXPECT_EQ(kind_of([&] { ni_variance_inflation(one, d); }), ErrorKind::RowCountMismatch);
}

TEST(NoisyInput, GridRateInterpolation) {
  const auto d = line_data(5);
  const auto grid = build_prediction_grid(d, 100);  // 1000, 1100, 1200
  const std::vector<double> rate = {1.0, 2.0, 4.0};
  const auto r = grid_rate_at_observations(grid, rate, d);
  ASSERT_EQ(r.size(), 5u);
  EXPECT_NEAR(r[0], 0.001, 1e-15);
  EXPECT_NEAR(r[1], 0.0015, 1e-15);
  EXPECT_NEAR(r[4], 0.004, 1e-15);
  const std::vector<double> wrong = {1.0};
  EXPECT_EQ(kind_of([&] { grid_rate_at_observations(grid, wrong, d); }), ErrorKind::GridMismatch);
}

TEST(ChangePoint, DesignIsContinuous) {
  const std::vector<double> lambda = {-0.4, 0.7};
  const std::vector<double> beta = {0.5, 3.0, -1.0};
  const Eigen::Vector4d coef(0.2, 0.5, 3.0, -1.0);
  for (double l : lambda) {
    const double left = cp_design_row(l - 1e-9, lambda).dot(coef);
    const double right = cp_design_row(l + 1e-9, lambda).dot(coef);
    EXPECT_LT(std::abs(left - right), 1e-8);
  }
  EXPECT_NEAR(cp_design_row(lambda[0], lambda).dot(coef), 0.2, 1e-15);
  const auto a = cp_levels(0.2, lambda, beta);
  EXPECT_NEAR(cp_design_row(lambda[1], lambda).dot(coef), a[1], 1e-14);
  EXPECT_NEAR(a[1], 0.2 + 3.0 * 1.1, 1e-14);
  EXPECT_EQ(cp_rate(-1.0, lambda, beta), 0.5);
  EXPECT_EQ(cp_rate(0.0, lambda, beta), 3.0);
  EXPECT_EQ(cp_rate(1.0, lambda, beta), -1.0);
  const double h = 1e-6;
  for (double t : {-0.9, 0.1, 0.95})
    EXPECT_NEAR((cp_design_row(t + h, lambda).dot(coef) - cp_design_row(t - h, lambda).dot(coef)) / (2 * h),
                cp_rate(t, lambda, beta), 1e-6);
}

TEST(BuildModel, ChangePointParameterSet) {
  auto spec = rsl::test::quick_spec(ModelType::EivCpT);
  spec.n_cp = 2;
  const auto d = line_data();
  const auto g = build_model(spec, d, build_prediction_grid(d, 50));
  std::vector<std::string> names;
  for (const auto& p : g.parameters) names.push_back(p.name);
  const std::vector<std::string> head = {"alpha_1", "beta_1", "beta_2", "beta_3", "lambda_1", "lambda_2", "sigma_y"};
  ASSERT_EQ(names.size(), head.size() + d.observations.size());
  for (std::size_t i = 0; i < head.size(); ++i) EXPECT_EQ(names[i], head[i]);
  EXPECT_EQ(names[head.size()], "t[1]");
}

TEST(BuildModel, SlrOnTwoPoints) {
  Dataset d;
  d.observations = {obs("S", 1000, 0.0, 5), obs("S", 2000, 1.0, 5)};
  d.sites = {{site_key("S", "Region"), 35, -76}};
  d = validate_dataset(d);
  const auto g = build_model(rsl::test::quick_spec(ModelType::EivSlrT), d, build_prediction_grid(d, 50));
  EXPECT_TRUE(g.find("alpha").has_value());
  EXPECT_TRUE(g.find("beta").has_value());
  EXPECT_TRUE(g.find("sigma_y").has_value());
  EXPECT_EQ(g.size(), 5);
}

TEST(BuildModel, Errors) {
  const auto one = line_data();
  const auto grid = build_prediction_grid(one, 50);
  EXPECT_EQ(kind_of([&] { build_model(rsl::test::quick_spec(ModelType::NiSplineSt), one, grid); }),
            ErrorKind::ModelDataMismatch);
  const auto multi = rsl::test::synthetic_sites(3, 15, 4, false);
  try {
    build_model(rsl::test::quick_spec(ModelType::NiGamDecomp), multi, build_prediction_grid(multi, 50));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ModelDataMismatch);
    EXPECT_NE(std::string(e.what()).find("required for the ni_gam_decomp model"), std::string::npos);
  }
  BuildOptions bad;
  bad.fixed_sigma_y = 0.0;
  EXPECT_EQ(kind_of([&] { build_model(rsl::test::quick_spec(ModelType::EivSlrT), one, grid, bad); }),
            ErrorKind::InvalidSpec);
  BuildOptions mismatch;
  mismatch.ni_extra_var = {1.0};
  EXPECT_EQ(kind_of([&] { build_model(rsl::test::quick_spec(ModelType::NiSplineT), one, grid, mismatch); }),
            ErrorKind::RowCountMismatch);
}

TEST(BuildModel, PriorLogDetMatchesFactorization) {
  const auto one = line_data(40);
  const auto multi = rsl::test::synthetic_sites(3, 25, 5, true);
  std::mt19937_64 rng(9);
  for (auto m : {ModelType::NiSplineT, ModelType::NiSplineSt, ModelType::NiGamDecomp, ModelType::EivIgpT,
                 ModelType::EivSlrT}) {
    const auto& d = m == ModelType::NiSplineSt || m == ModelType::NiGamDecomp ? multi : one;
    const auto g = build_model(rsl::test::quick_spec(m), d, build_prediction_grid(d, 50));
    ASSERT_TRUE(g.linear.has_value());
    auto st = g.initial_state(rng);
    const auto c = g.linear->conditional(st);
    if (c.prior_log_det) EXPECT_NEAR(*c.prior_log_det, llt_logdet(c.prior_precision), 1e-8) << to_string(m);
  }
}

TEST(BuildModel, GamSiteEffectsSumToZero) {
  const auto multi = rsl::test::synthetic_sites(4, 20, 6, true);
  const auto g = build_model(rsl::test::quick_spec(ModelType::NiGamDecomp), multi, build_prediction_grid(multi, 50));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  Eigen::VectorXd st = g.initial_state(rng);
  for (int rep = 0; rep < 5; ++rep) {
    for (Eigen::Index i = 0; i < g.linear->size; ++i) st[g.linear->offset + i] = z(rng);
    g.finalize(st);
    double sum = 0.0;
    for (int j = 1; j <= 4; ++j) sum += st[*g.find("beta_h[" + std::to_string(j) + "]")];
    EXPECT_NEAR(sum, 0.0, 1e-12);
  }
}

TEST(BuildModel, GamSumToZeroBasisOrthonormal) {
  for (Eigen::Index S : {2, 3, 7}) {
    const auto Z = detail::sum_to_zero_basis(S);
    EXPECT_LT((Z.transpose() * Z - Eigen::MatrixXd::Identity(S - 1, S - 1)).norm(), 1e-12);
    EXPECT_LT(Z.colwise().sum().norm(), 1e-12);
  }
}

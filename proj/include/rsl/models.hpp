#pragma once

// The six sea-level models expressed as ModelGraphs, plus the pieces they
// share: standardization, the integrated-GP quadrature and the noisy-input
// variance correction.
//
// All models use y_i ~ N(f(x_i, t_i), sigma_y^2 + s_y,i^2 [+ ni_extra_i]) in
// standardized units (ages centred and scaled by their sd, levels likewise).

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "rsl/basis.hpp"
#include "rsl/core.hpp"
#include "rsl/graph.hpp"

namespace rsl {

// Weakly informative defaults, standardized units.
inline constexpr double kCoefficientPriorSd = 10.0;  // alpha, beta, CP slopes, first P-spline coefficient
inline constexpr double kScalePriorSd = 10.0;        // half-normal scale for every sd parameter
inline constexpr int kIgpNodes = 100;
inline constexpr double kIgpJitter = 1e-6;

// ---------------------------------------------------------------------------
// Standardization

struct StandardizedData {
  Standardization transform;
  Eigen::VectorXd age;      // observed ages, internal
  Eigen::VectorXd age_err;  // internal
  Eigen::VectorXd rsl;      // internal
  Eigen::VectorXd rsl_err;  // internal
  Eigen::VectorXd latitude, longitude;
  std::vector<std::size_t> site;  // site index per observation
  Eigen::VectorXd grid_age;       // internal
  Eigen::VectorXd grid_latitude, grid_longitude;
  std::vector<std::size_t> grid_site;
};

inline StandardizedData standardize(const Dataset& data, const PredictionGrid& grid) {
  const auto n = static_cast<Eigen::Index>(data.observations.size());
  if (n < 2) throw Error(ErrorKind::MissingData, "need at least 2 observations");
  double am = 0, rm = 0;
  for (const auto& o : data.observations) {
    am += o.age;
    rm += o.rsl;
  }
  am /= static_cast<double>(n);
  rm /= static_cast<double>(n);
  double av = 0, rv = 0;
  for (const auto& o : data.observations) {
    av += (o.age - am) * (o.age - am);
    rv += (o.rsl - rm) * (o.rsl - rm);
  }
  av /= static_cast<double>(n - 1);
  rv /= static_cast<double>(n - 1);
  if (!(av > 0.0)) throw Error(ErrorKind::DegenerateRange, "all observation ages are identical");

  StandardizedData s;
  s.transform = {am, std::sqrt(av), rm, rv > 0.0 ? std::sqrt(rv) : 1.0};
  const auto& tr = s.transform;
  s.age.resize(n);
  s.age_err.resize(n);
  s.rsl.resize(n);
  s.rsl_err.resize(n);
  s.latitude.resize(n);
  s.longitude.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = data.observations[static_cast<std::size_t>(i)];
    s.age[i] = tr.age_in(o.age);
    s.age_err[i] = o.age_err / tr.age_scale;
    s.rsl[i] = tr.level_in(o.rsl);
    s.rsl_err[i] = o.rsl_err / tr.rsl_scale;
    s.latitude[i] = o.latitude;
    s.longitude[i] = o.longitude;
    s.site.push_back(data.site_index(o.site_id));
  }
  const auto g = static_cast<Eigen::Index>(grid.rows.size());
  s.grid_age.resize(g);
  s.grid_latitude.resize(g);
  s.grid_longitude.resize(g);
  for (Eigen::Index r = 0; r < g; ++r) {
    const auto& row = grid.rows[static_cast<std::size_t>(r)];
    s.grid_age[r] = tr.age_in(row.age);
    s.grid_latitude[r] = row.latitude;
    s.grid_longitude[r] = row.longitude;
    s.grid_site.push_back(data.site_index(row.site_id));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Integrated GP quadrature

/// Equally spaced nodes with trapezoid weights. The rate p(u) is the linear
/// interpolant of its node values, so f(t) = alpha + sum_j L(t)_j p_j is the
/// exact integral of that interpolant from the first node to t.
class IgpQuadrature {
 public:
  IgpQuadrature(double lo, double hi, int n) {
    if (n < 2) throw Error(ErrorKind::InvalidSpec, "quadrature needs at least 2 nodes");
    if (!(hi > lo)) throw Error(ErrorKind::DegenerateRange, "quadrature range must satisfy lo < hi");
    nodes_ = Eigen::VectorXd::LinSpaced(n, lo, hi);
    h_ = (hi - lo) / (n - 1);
    weights_ = Eigen::VectorXd::Constant(n, h_);
    weights_[0] = weights_[n - 1] = h_ / 2.0;
  }

  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  double lo() const { return nodes_[0]; }
  double hi() const { return nodes_[nodes_.size() - 1]; }
  bool contains(double t) const { return t >= lo() - 1e-12 && t <= hi() + 1e-12; }

  /// Row of the cumulative integral operator for one time.
  Eigen::RowVectorXd integral_row(double t) const {
    check(t);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nodes_.size());
    const auto [k, s] = locate(t);
    for (Eigen::Index a = 0; a < k; ++a) {
      row[a] += h_ / 2.0;
      row[a + 1] += h_ / 2.0;
    }
    row[k] += s - s * s / (2.0 * h_);
    if (k + 1 < nodes_.size()) row[k + 1] += s * s / (2.0 * h_);
    return row;
  }

  /// Row of the linear interpolation operator (the rate at t).
  Eigen::RowVectorXd interpolation_row(double t) const {
    check(t);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nodes_.size());
    const auto [k, s] = locate(t);
    row[k] = 1.0 - s / h_;
    if (k + 1 < nodes_.size()) row[k + 1] = s / h_;
    return row;
  }

  Eigen::MatrixXd integral_operator(const Eigen::VectorXd& t) const {
    Eigen::MatrixXd L(t.size(), nodes_.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) L.row(i) = integral_row(t[i]);
    return L;
  }

  Eigen::MatrixXd interpolation_operator(const Eigen::VectorXd& t) const {
    Eigen::MatrixXd P(t.size(), nodes_.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) P.row(i) = interpolation_row(t[i]);
    return P;
  }

 private:
  void check(double t) const {
    if (!contains(t)) throw Error(ErrorKind::PointOutOfRange, "time outside the quadrature range");
  }
  std::pair<Eigen::Index, double> locate(double t) const {
    t = std::clamp(t, lo(), hi());
    auto k = static_cast<Eigen::Index>(std::floor((t - lo()) / h_));
    k = std::clamp<Eigen::Index>(k, 0, nodes_.size() - 2);
    return {k, t - nodes_[k]};
  }

  Eigen::VectorXd nodes_, weights_;
  double h_ = 1.0;
};

inline IgpQuadrature igp_quadrature(double lo, double hi, int n) { return IgpQuadrature(lo, hi, n); }

/// Rate covariance nu2 * rho^((u_a - u_b)^2) at the given nodes.
inline Eigen::MatrixXd igp_covariance(const Eigen::VectorXd& nodes, double rho, double nu2) {
  const auto n = nodes.size();
  Eigen::MatrixXd K(n, n);
  const double log_rho = std::log(rho);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      const double d = nodes[a] - nodes[b];
      K(a, b) = nu2 * std::exp(log_rho * d * d);
    }
  return K;
}

// ---------------------------------------------------------------------------
// Noisy-input correction

/// (f'(t_i))^2 * s_t,i^2 per observation; slopes in m/yr, result in m^2.
inline std::vector<double> ni_variance_inflation(std::span<const double> slope_m_per_yr, const Dataset& data) {
  if (slope_m_per_yr.size() != data.observations.size())
    throw Error(ErrorKind::RowCountMismatch, "one slope per observation required");
  std::vector<double> out(slope_m_per_yr.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double sd = slope_m_per_yr[i] * data.observations[i].age_err;
    out[i] = sd * sd;
  }
  return out;
}

/// Linear interpolation of a per-grid-row rate (mm/yr) to each observation's
/// age within its own site; ages beyond the site's grid take the end value.
inline std::vector<double> grid_rate_at_observations(const PredictionGrid& grid, std::span<const double> rate_mm,
                                                     const Dataset& data) {
  if (rate_mm.size() != grid.rows.size()) throw Error(ErrorKind::GridMismatch, "rate does not match the grid");
  std::vector<double> out;
  out.reserve(data.observations.size());
  for (const auto& o : data.observations) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t r = 0; r < grid.rows.size(); ++r)
      if (grid.rows[r].site_id == o.site_id) pts.emplace_back(grid.rows[r].age, rate_mm[r]);
    if (pts.empty()) throw Error(ErrorKind::GridMismatch, "site '" + o.site_id + "' missing from the grid");
    double v = pts.front().second;
    if (o.age >= pts.back().first) v = pts.back().second;
    else
      for (std::size_t k = 0; k + 1 < pts.size(); ++k)
        if (o.age >= pts[k].first && o.age <= pts[k + 1].first) {
          const double w = (o.age - pts[k].first) / (pts[k + 1].first - pts[k].first);
          v = (1.0 - w) * pts[k].second + w * pts[k + 1].second;
          break;
        }
    out.push_back(v / 1000.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model construction

struct BuildOptions {
  std::vector<double> ni_extra_var;   // m^2 per observation; empty means zero
  std::optional<double> fixed_sigma_y;  // metres; holds sigma_y constant
  int igp_nodes = kIgpNodes;
};

namespace detail {

inline double half_normal_logpdf(double x) {
  return x > 0.0 ? -0.5 * x * x / (kScalePriorSd * kScalePriorSd) : -INFINITY;
}

struct LikelihoodData {
  Eigen::VectorXd y;
  Eigen::VectorXd base_var;  // s_y^2 + ni_extra, internal units
  Eigen::VectorXd age, age_err;

  Eigen::VectorXd weights(double sigma_y) const {
    return (base_var.array() + sigma_y * sigma_y).inverse().matrix();
  }
};

inline LikelihoodData likelihood_data(const StandardizedData& s, const BuildOptions& opt) {
  const auto n = s.rsl.size();
  if (!opt.ni_extra_var.empty() && static_cast<Eigen::Index>(opt.ni_extra_var.size()) != n)
    throw Error(ErrorKind::RowCountMismatch, "ni_extra_var needs one value per observation");
  LikelihoodData d;
  d.y = s.rsl;
  d.age = s.age;
  d.age_err = s.age_err;
  d.base_var = s.rsl_err.array().square();
  const double r2 = s.transform.rsl_scale * s.transform.rsl_scale;
  for (std::size_t i = 0; i < opt.ni_extra_var.size(); ++i) {
    if (!(opt.ni_extra_var[i] >= 0.0)) throw Error(ErrorKind::NegativeError, "ni_extra_var must be non-negative");
    d.base_var[static_cast<Eigen::Index>(i)] += opt.ni_extra_var[i] / r2;
  }
  return d;
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline void add_params(std::vector<ParameterInfo>& ps, const std::string& stem, Eigen::Index count, Unit unit,
                       bool summary = false) {
  for (Eigen::Index k = 0; k < count; ++k)
    ps.push_back({stem + "[" + std::to_string(k + 1) + "]", unit, false, summary});
}

/// Orthonormal basis of the sum-to-zero subspace (Helmert contrasts), S x (S-1).
inline Eigen::MatrixXd sum_to_zero_basis(Eigen::Index S) {
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(S, S - 1);
  for (Eigen::Index k = 1; k < S; ++k) {
    const double norm = std::sqrt(static_cast<double>(k * (k + 1)));
    for (Eigen::Index r = 0; r < k; ++r) Z(r, k - 1) = 1.0 / norm;
    Z(k, k - 1) = -static_cast<double>(k) / norm;
  }
  return Z;
}

inline void require_sites(const Dataset& data, ModelType m, std::size_t n) {
  if (data.sites.size() < n)
    throw Error(ErrorKind::ModelDataMismatch, std::string(to_string(m)) + " needs at least " + std::to_string(n) +
                                                  " sites; the dataset has " + std::to_string(data.sites.size()));
}

// Latent-age block for the errors-in-variables models: one independent
// update per observation with a positive age error.
inline std::optional<MetropolisBlock> latent_age_block(
    Eigen::Index offset, const LikelihoodData& lik, Eigen::Index sigma_index,
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> mean_at) {
  MetropolisBlock b;
  b.name = "latent_ages";
  b.mode = BlockMode::Elementwise;
  std::vector<Eigen::Index> obs;
  for (Eigen::Index i = 0; i < lik.age.size(); ++i)
    if (lik.age_err[i] > 0.0) {
      obs.push_back(i);
      b.indices.push_back(offset + i);
      b.support.push_back(Support::Real);
      b.step.push_back(lik.age_err[i]);
    }
  if (obs.empty()) return std::nullopt;
  b.log_density_elements = [lik, obs, offset, sigma_index, mean_at](const Eigen::VectorXd& st) {
    const Eigen::VectorXd t = st.segment(offset, lik.age.size());
    const Eigen::VectorXd f = mean_at(st, t);
    const double s2 = st[sigma_index] * st[sigma_index];
    Eigen::VectorXd out(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t k = 0; k < obs.size(); ++k) {
      const auto i = obs[k];
      const double r = lik.y[i] - f[i];
      const double z = (t[i] - lik.age[i]) / lik.age_err[i];
      out[static_cast<Eigen::Index>(k)] = std::isfinite(f[i]) ? -0.5 * r * r / (lik.base_var[i] + s2) - 0.5 * z * z
                                                               : -INFINITY;
    }
    return out;
  };
  return b;
}

inline MetropolisBlock positive_scales_block(std::string name, std::vector<Eigen::Index> indices) {
  MetropolisBlock b;
  b.name = std::move(name);
  b.mode = BlockMode::Collapsed;
  b.support.assign(indices.size(), Support::Positive);
  b.step.assign(indices.size(), indices.size() == 1 ? 0.5 : 0.3);
  b.log_density = [indices](const Eigen::VectorXd& st) {
    double lp = 0.0;
    for (auto i : indices) lp += half_normal_logpdf(st[i]);
    return lp;
  };
  b.indices = std::move(indices);
  return b;
}

// ---- eiv_slr_t -------------------------------------------------------------

inline ModelGraph build_eiv_slr(const StandardizedData& s, const LikelihoodData& lik, const BuildOptions& opt) {
  const auto n = lik.y.size();
  ModelGraph g;
  g.parameters = {{"alpha", Unit::Level, false, true}, {"beta", Unit::Slope, false, true},
                  {"sigma_y", Unit::LevelScale, true, true}};
  add_params(g.parameters, "t", n, Unit::Age);
  constexpr Eigen::Index kSigma = 2, kAges = 3;

  auto design = [](const Eigen::VectorXd& t) {
    Eigen::MatrixXd X(t.size(), 2);
    X.col(0).setOnes();
    X.col(1) = t;
    return X;
  };
  g.linear = LinearBlock{"coefficients", 0, 2, [lik, n, design](const Eigen::VectorXd& st) {
                           LinearConditional c;
                           c.design = design(st.segment(kAges, n));
                           c.target = lik.y;
                           c.weights = lik.weights(st[kSigma]);
                           c.prior_precision = Eigen::MatrixXd::Identity(2, 2) / (kCoefficientPriorSd * kCoefficientPriorSd);
                           c.prior_mean = Eigen::VectorXd::Zero(2);
                           c.prior_log_det = -4.0 * std::log(kCoefficientPriorSd);
                           return c;
                         }};
  if (!opt.fixed_sigma_y) {
    g.metropolis.push_back(positive_scales_block("sigma_y", {kSigma}));
    g.schedule.push_back(0);
  }
  g.schedule.push_back(kLinearStep);
  auto mean_at = [](const Eigen::VectorXd& st, const Eigen::VectorXd& t) -> Eigen::VectorXd {
    return (st[0] + st[1] * t.array()).matrix();
  };
  if (auto lat = latent_age_block(kAges, lik, kSigma, mean_at)) {
    g.schedule.push_back(static_cast<int>(g.metropolis.size()));
    g.metropolis.push_back(std::move(*lat));
  }
  const double fixed = opt.fixed_sigma_y ? *opt.fixed_sigma_y / s.transform.rsl_scale : 0.0;
  g.initial_state = [lik, n, fixed](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.1, 0.5);
    Eigen::VectorXd st = Eigen::VectorXd::Zero(kAges + n);
    st[kSigma] = fixed > 0.0 ? fixed : u(rng);
    st.segment(kAges, n) = lik.age;
    return st;
  };
  const Eigen::VectorXd ga = s.grid_age;
  g.fields.push_back({Component::Total, true, [ga](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return (st[0] + st[1] * ga.array()).matrix();
                      }});
  g.fields.push_back({Component::RateTotal, false, [ga](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return Eigen::VectorXd::Constant(ga.size(), st[1]);
                      }});
  return g;
}


}  // namespace detail

// ---- change points ----------------------------------------------------------

/// Design row of the continuous piecewise-linear mean: columns are
/// (alpha_1, beta_1, ..., beta_{m+1}); alpha_1 is the level at lambda_1.
inline Eigen::RowVectorXd cp_design_row(double t, std::span<const double> lambda) {
  const auto m = static_cast<Eigen::Index>(lambda.size());
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m + 2);
  row[0] = 1.0;
  row[1] = std::min(t - lambda[0], 0.0);
  for (Eigen::Index k = 2; k <= m + 1; ++k) {
    const double lo = lambda[static_cast<std::size_t>(k - 2)];
    const double width = k <= m ? lambda[static_cast<std::size_t>(k - 1)] - lo : INFINITY;
    row[k] = std::clamp(t - lo, 0.0, width);
  }
  return row;
}

/// Slope in force at t.
inline double cp_rate(double t, std::span<const double> lambda, std::span<const double> beta) {
  std::size_t seg = 0;
  while (seg < lambda.size() && t >= lambda[seg]) ++seg;
  return beta[seg];
}

/// Level at each change point: alpha_1 followed by the alpha_j implied by continuity.
inline std::vector<double> cp_levels(double alpha1, std::span<const double> lambda, std::span<const double> beta) {
  std::vector<double> a{alpha1};
  for (std::size_t j = 1; j < lambda.size(); ++j) a.push_back(a.back() + beta[j] * (lambda[j] - lambda[j - 1]));
  return a;
}

namespace detail {

inline ModelGraph build_eiv_cp(const StandardizedData& s, const LikelihoodData& lik, const BuildOptions& opt, int m) {
  const auto n = lik.y.size();
  ModelGraph g;
  g.parameters.push_back({"alpha_1", Unit::Level, false, true});
  for (int j = 1; j <= m + 1; ++j) g.parameters.push_back({"beta_" + std::to_string(j), Unit::Slope, false, true});
  for (int j = 1; j <= m; ++j) g.parameters.push_back({"lambda_" + std::to_string(j), Unit::Age, false, true});
  g.parameters.push_back({"sigma_y", Unit::LevelScale, true, true});
  add_params(g.parameters, "t", n, Unit::Age);
  const Eigen::Index p = m + 2, kLambda = p, kSigma = p + m, kAges = kSigma + 1;

  auto lambdas = [m, kLambda](const Eigen::VectorXd& st) {
    std::vector<double> l(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) l[static_cast<std::size_t>(j)] = st[kLambda + j];
    return l;
  };
  auto mean_at = [p, lambdas](const Eigen::VectorXd& st, const Eigen::VectorXd& t) -> Eigen::VectorXd {
    const auto l = lambdas(st);
    Eigen::VectorXd f(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) f[i] = cp_design_row(t[i], l).dot(st.head(p));
    return f;
  };
  g.linear = LinearBlock{"coefficients", 0, p, [lik, n, p, kAges, kSigma, lambdas](const Eigen::VectorXd& st) {
                           const auto l = lambdas(st);
                           LinearConditional c;
                           c.design.resize(n, p);
                           for (Eigen::Index i = 0; i < n; ++i) c.design.row(i) = cp_design_row(st[kAges + i], l);
                           c.target = lik.y;
                           c.weights = lik.weights(st[kSigma]);
                           c.prior_precision =
                               Eigen::MatrixXd::Identity(p, p) / (kCoefficientPriorSd * kCoefficientPriorSd);
                           c.prior_mean = Eigen::VectorXd::Zero(p);
                           c.prior_log_det = -2.0 * static_cast<double>(p) * std::log(kCoefficientPriorSd);
                           return c;
                         }};

  const double lo = lik.age.minCoeff(), hi = lik.age.maxCoeff();
  MetropolisBlock cp;
  cp.name = "lambda";
  cp.mode = BlockMode::Collapsed;
  for (int j = 0; j < m; ++j) {
    cp.indices.push_back(kLambda + j);
    cp.support.push_back(Support::Real);
    cp.step.push_back(0.05 * (hi - lo));
  }
  cp.log_density = [m, kLambda, lo, hi](const Eigen::VectorXd& st) {
    double prev = lo;
    for (int j = 0; j < m; ++j) {
      const double l = st[kLambda + j];
      if (j == 0 ? l < lo : !(l > prev)) return -HUGE_VAL;
      prev = l;
    }
    return prev <= hi ? 0.0 : -HUGE_VAL;
  };
  g.metropolis.push_back(std::move(cp));
  g.schedule.push_back(0);
  if (!opt.fixed_sigma_y) {
    g.schedule.push_back(static_cast<int>(g.metropolis.size()));
    g.metropolis.push_back(positive_scales_block("sigma_y", {kSigma}));
  }
  g.schedule.push_back(kLinearStep);
  if (auto lat = latent_age_block(kAges, lik, kSigma, mean_at)) {
    g.schedule.push_back(static_cast<int>(g.metropolis.size()));
    g.metropolis.push_back(std::move(*lat));
  }

  const double fixed = opt.fixed_sigma_y ? *opt.fixed_sigma_y / s.transform.rsl_scale : 0.0;
  g.initial_state = [lik, n, m, kLambda, kSigma, kAges, lo, hi, fixed](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.1, 0.5);
    std::uniform_real_distribution<double> where(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
    Eigen::VectorXd st = Eigen::VectorXd::Zero(kAges + n);
    std::vector<double> l(static_cast<std::size_t>(m));
    for (auto& v : l) v = where(rng);
    std::sort(l.begin(), l.end());
    for (int j = 0; j < m; ++j) st[kLambda + j] = l[static_cast<std::size_t>(j)];
    st[kSigma] = fixed > 0.0 ? fixed : u(rng);
    st.segment(kAges, n) = lik.age;
    return st;
  };

  const Eigen::VectorXd ga = s.grid_age;
  g.fields.push_back({Component::Total, true, [ga, mean_at](const Eigen::VectorXd& st) { return mean_at(st, ga); }});
  g.fields.push_back({Component::RateTotal, false, [ga, m, lambdas](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        const auto l = lambdas(st);
                        std::vector<double> beta(static_cast<std::size_t>(m + 1));
                        for (int j = 0; j <= m; ++j) beta[static_cast<std::size_t>(j)] = st[1 + j];
                        Eigen::VectorXd r(ga.size());
                        for (Eigen::Index i = 0; i < ga.size(); ++i) r[i] = cp_rate(ga[i], l, beta);
                        return r;
                      }});
  return g;
}

// ---- eiv_igp_t ---------------------------------------------------------------

// Lower Cholesky factor of rho^(d^2) + jitter*I, memoized per thread on the
// last rho seen since one sweep asks for the same factor several times.
inline const Eigen::MatrixXd& igp_correlation_factor(const Eigen::VectorXd& nodes, double rho) {
  struct Cache {
    const double* owner = nullptr;
    Eigen::Index size = 0;
    double rho = NAN;
    Eigen::MatrixXd L;
  };
  thread_local Cache c;
  if (c.owner != nodes.data() || c.size != nodes.size() || c.rho != rho) {
    Eigen::MatrixXd R = igp_covariance(nodes, rho, 1.0);
    R.diagonal().array() += kIgpJitter;
    Eigen::LLT<Eigen::MatrixXd> llt(R);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::NumericalFailure, "rate covariance is not positive definite (rho = " + std::to_string(rho) + ")");
    c.L = llt.matrixL();
    c.owner = nodes.data();
    c.size = nodes.size();
    c.rho = rho;
  }
  return c.L;
}

inline ModelGraph build_eiv_igp(const StandardizedData& s, const LikelihoodData& lik, const BuildOptions& opt) {
  const auto n = lik.y.size();
  double pad = 3.0 * lik.age_err.maxCoeff();
  double lo = std::min(lik.age.minCoeff(), s.grid_age.size() ? s.grid_age.minCoeff() : INFINITY) - pad;
  double hi = std::max(lik.age.maxCoeff(), s.grid_age.size() ? s.grid_age.maxCoeff() : -INFINITY) + pad;
  auto quad = std::make_shared<const IgpQuadrature>(lo, hi, opt.igp_nodes);
  const Eigen::Index N = quad->size();

  ModelGraph g;
  g.parameters.push_back({"alpha", Unit::Level, false, false});
  add_params(g.parameters, "z", N, Unit::None);
  add_params(g.parameters, "p", N, Unit::Slope);
  g.parameters.push_back({"rho", Unit::None, false, true});
  g.parameters.push_back({"nu", Unit::Slope, true, true});
  g.parameters.push_back({"sigma_y", Unit::LevelScale, true, true});
  add_params(g.parameters, "t", n, Unit::Age);
  const Eigen::Index kZ = 1, kP = 1 + N, kRho = 1 + 2 * N, kNu = kRho + 1, kSigma = kRho + 2, kAges = kRho + 3;

  g.finalize = [quad, N, kZ, kP, kRho, kNu](Eigen::VectorXd& st) {
    const auto& L = igp_correlation_factor(quad->nodes(), st[kRho]);
    st.segment(kP, N) = st[kNu] * (L * st.segment(kZ, N));
  };
  g.linear = LinearBlock{"alpha_z", 0, N + 1, [quad, lik, n, N, kRho, kNu, kSigma, kAges](const Eigen::VectorXd& st) {
                           const auto& L = igp_correlation_factor(quad->nodes(), st[kRho]);
                           LinearConditional c;
                           c.design.resize(n, N + 1);
                           c.design.col(0).setOnes();
                           c.design.rightCols(N).noalias() =
                               st[kNu] * (quad->integral_operator(st.segment(kAges, n)) * L);
                           c.target = lik.y;
                           c.weights = lik.weights(st[kSigma]);
                           c.prior_precision = Eigen::MatrixXd::Identity(N + 1, N + 1);
                           c.prior_precision(0, 0) = 1.0 / (kCoefficientPriorSd * kCoefficientPriorSd);
                           c.prior_mean = Eigen::VectorXd::Zero(N + 1);
                           c.prior_log_det = -2.0 * std::log(kCoefficientPriorSd);
                           return c;
                         }};

  MetropolisBlock hyper;
  hyper.name = "rho_nu_sigma";
  hyper.mode = BlockMode::Collapsed;
  hyper.indices = {kRho, kNu};
  hyper.support = {Support::UnitInterval, Support::Positive};
  hyper.step = {0.3, 0.3};
  if (!opt.fixed_sigma_y) {
    hyper.indices.push_back(kSigma);
    hyper.support.push_back(Support::Positive);
    hyper.step.push_back(0.3);
  }
  const bool free_sigma = !opt.fixed_sigma_y;
  hyper.log_density = [kNu, kSigma, free_sigma](const Eigen::VectorXd& st) {
    return half_normal_logpdf(st[kNu]) + (free_sigma ? half_normal_logpdf(st[kSigma]) : 0.0);
  };
  g.metropolis.push_back(std::move(hyper));
  g.schedule = {0, kLinearStep};

  auto mean_at = [quad, kP, N](const Eigen::VectorXd& st, const Eigen::VectorXd& t) -> Eigen::VectorXd {
    Eigen::VectorXd f(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i)
      f[i] = quad->contains(t[i]) ? st[0] + quad->integral_row(t[i]).dot(st.segment(kP, N)) : NAN;
    return f;
  };
  if (auto lat = latent_age_block(kAges, lik, kSigma, mean_at)) {
    g.schedule.push_back(static_cast<int>(g.metropolis.size()));
    g.metropolis.push_back(std::move(*lat));
  }

  const double fixed = opt.fixed_sigma_y ? *opt.fixed_sigma_y / s.transform.rsl_scale : 0.0;
  g.initial_state = [lik, n, kRho, kNu, kSigma, kAges, fixed](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.1, 0.5), r(0.3, 0.7), v(0.5, 1.5);
    Eigen::VectorXd st = Eigen::VectorXd::Zero(kAges + n);
    st[kRho] = r(rng);
    st[kNu] = v(rng);
    st[kSigma] = fixed > 0.0 ? fixed : u(rng);
    st.segment(kAges, n) = lik.age;
    return st;
  };

  auto Lg = std::make_shared<const Eigen::MatrixXd>(quad->integral_operator(s.grid_age));
  auto Pg = std::make_shared<const Eigen::MatrixXd>(quad->interpolation_operator(s.grid_age));
  g.fields.push_back({Component::Total, true, [Lg, kP, N](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return (st[0] + (*Lg * st.segment(kP, N)).array()).matrix();
                      }});
  g.fields.push_back({Component::RateTotal, false, [Pg, kP, N](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return *Pg * st.segment(kP, N);
                      }});
  return g;
}

// ---- ni_spline_t / ni_spline_st -----------------------------------------------

using SharedMatrix = std::shared_ptr<const Eigen::MatrixXd>;

inline SharedMatrix share(Eigen::MatrixXd m) { return std::make_shared<const Eigen::MatrixXd>(std::move(m)); }

inline ModelGraph build_ni_spline_t(const StandardizedData& s, const LikelihoodData& lik, const ModelSpec& spec,
                                    const BuildOptions& opt) {
  const auto knots = make_knots(to_vector(s.age), spec.knots_time);
  const Eigen::Index K = knots.n_basis();
  const auto ga = to_vector(s.grid_age);
  auto X = share(bspline_design(to_vector(s.age), knots));
  auto Bg = share(bspline_design(ga, knots));
  auto dBg = share(bspline_derivative_design(ga, knots));
  const Eigen::MatrixXd D = difference_matrix(static_cast<int>(K), 1);
  auto DtD = share(D.transpose() * D);

  ModelGraph g;
  add_params(g.parameters, "beta", K, Unit::Level);
  g.parameters.push_back({"sigma_beta", Unit::LevelScale, true, true});
  g.parameters.push_back({"sigma_y", Unit::LevelScale, true, true});
  const Eigen::Index kSb = K, kSigma = K + 1;

  g.linear = LinearBlock{"beta", 0, K, [X, DtD, lik, K, kSb, kSigma](const Eigen::VectorXd& st) {
                           LinearConditional c;
                           c.design = *X;
                           c.target = lik.y;
                           c.weights = lik.weights(st[kSigma]);
                           c.prior_precision = *DtD / (st[kSb] * st[kSb]);
                           c.prior_precision(0, 0) += 1.0 / (kCoefficientPriorSd * kCoefficientPriorSd);
                           c.prior_mean = Eigen::VectorXd::Zero(K);
                           // unit-determinant change of variables to (beta_1, first differences)
                           c.prior_log_det = -2.0 * std::log(kCoefficientPriorSd) -
                                             2.0 * static_cast<double>(K - 1) * std::log(st[kSb]);
                           return c;
                         }};
  if (opt.fixed_sigma_y) g.metropolis.push_back(positive_scales_block("sigma_beta", {kSb}));
  else g.metropolis.push_back(positive_scales_block("sigmas", {kSb, kSigma}));
  g.schedule = {0, kLinearStep};
  const double fixed = opt.fixed_sigma_y ? *opt.fixed_sigma_y / s.transform.rsl_scale : 0.0;
  g.initial_state = [K, kSb, kSigma, fixed](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.1, 0.5), b(0.5, 1.5);
    Eigen::VectorXd st = Eigen::VectorXd::Zero(K + 2);
    st[kSb] = b(rng);
    st[kSigma] = fixed > 0.0 ? fixed : u(rng);
    return st;
  };
  g.fields.push_back({Component::Total, true, [Bg, K](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return *Bg * st.head(K);
                      }});
  g.fields.push_back({Component::RateTotal, false, [dBg, K](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return *dBg * st.head(K);
                      }});
  return g;
}

struct TensorBasis {
  SharedMatrix obs, grid, grid_rate;
  Eigen::Index size = 0;
};

inline TensorBasis tensor_basis(const StandardizedData& s, const ModelSpec& spec) {
  const auto kt = make_knots(to_vector(s.age), spec.knots_tensor_time);
  const auto klon = make_knots(to_vector(s.longitude), spec.knots_lon);
  const auto klat = make_knots(to_vector(s.latitude), spec.knots_lat);
  const auto ga = to_vector(s.grid_age), glon = to_vector(s.grid_longitude), glat = to_vector(s.grid_latitude);
  TensorBasis b;
  b.obs = share(tensor_design(bspline_design(to_vector(s.age), kt), bspline_design(to_vector(s.longitude), klon),
                              bspline_design(to_vector(s.latitude), klat)));
  const Eigen::MatrixXd Blon = bspline_design(glon, klon), Blat = bspline_design(glat, klat);
  b.grid = share(tensor_design(bspline_design(ga, kt), Blon, Blat));
  b.grid_rate = share(tensor_design(bspline_derivative_design(ga, kt), Blon, Blat));
  b.size = b.obs->cols();
  return b;
}

inline ModelGraph build_ni_spline_st(const StandardizedData& s, const LikelihoodData& lik, const ModelSpec& spec,
                                     const BuildOptions& opt) {
  const TensorBasis tb = tensor_basis(s, spec);
  const Eigen::Index K = tb.size;
  ModelGraph g;
  add_params(g.parameters, "beta", K, Unit::Level);
  g.parameters.push_back({"sigma_beta", Unit::LevelScale, true, true});
  g.parameters.push_back({"sigma_y", Unit::LevelScale, true, true});
  const Eigen::Index kSb = K, kSigma = K + 1;
  auto X = tb.obs;
  g.linear = LinearBlock{"beta", 0, K, [X, lik, K, kSb, kSigma](const Eigen::VectorXd& st) {
                           LinearConditional c;
                           c.design = *X;
                           c.target = lik.y;
                           c.weights = lik.weights(st[kSigma]);
                           c.prior_precision = Eigen::MatrixXd::Identity(K, K) / (st[kSb] * st[kSb]);
                           c.prior_mean = Eigen::VectorXd::Zero(K);
                           c.prior_log_det = -2.0 * static_cast<double>(K) * std::log(st[kSb]);
                           return c;
                         }};
  if (opt.fixed_sigma_y) g.metropolis.push_back(positive_scales_block("sigma_beta", {kSb}));
  else g.metropolis.push_back(positive_scales_block("sigmas", {kSb, kSigma}));
  g.schedule = {0, kLinearStep};
  const double fixed = opt.fixed_sigma_y ? *opt.fixed_sigma_y / s.transform.rsl_scale : 0.0;
  g.initial_state = [K, kSb, kSigma, fixed](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.1, 0.5), b(0.5, 1.5);
    Eigen::VectorXd st = Eigen::VectorXd::Zero(K + 2);
    st[kSb] = b(rng);
    st[kSigma] = fixed > 0.0 ? fixed : u(rng);
    return st;
  };
  auto Tg = tb.grid, dTg = tb.grid_rate;
  g.fields.push_back({Component::Total, true, [Tg, K](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return *Tg * st.head(K);
                      }});
  g.fields.push_back({Component::RateTotal, false, [dTg, K](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return *dTg * st.head(K);
                      }});
  return g;
}

// ---- ni_gam_decomp -------------------------------------------------------------

inline ModelGraph build_ni_gam(const Dataset& data, const StandardizedData& s, const LikelihoodData& lik,
                               const ModelSpec& spec, const BuildOptions& opt) {
  const auto n = lik.y.size();
  const auto S = static_cast<Eigen::Index>(data.sites.size());
  const auto kr = make_knots(to_vector(s.age), spec.knots_time);
  const Eigen::Index Kr = kr.n_basis();
  const TensorBasis tb = tensor_basis(s, spec);
  const Eigen::Index Kl = tb.size;
  const Eigen::MatrixXd Z = sum_to_zero_basis(S);

  // Linear block layout: beta_r | beta_g | eta | beta_l
  const Eigen::Index oR = 0, oG = Kr, oE = Kr + S, oL = oE + S - 1, P = oL + Kl;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, P);
  X.middleCols(oR, Kr) = bspline_design(to_vector(s.age), kr);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = static_cast<Eigen::Index>(s.site[static_cast<std::size_t>(i)]);
    X(i, oG + j) = s.age[i];
    X.block(i, oE, 1, S - 1) = Z.row(j);
  }
  X.middleCols(oL, Kl) = *tb.obs;
  auto Xs = share(std::move(X));

  Eigen::VectorXd mg(S), pg(S);
  for (Eigen::Index j = 0; j < S; ++j) {
    const auto& site = data.sites[static_cast<std::size_t>(j)];
    mg[j] = s.transform.slope_in(*site.linear_rate / 1000.0);
    const double sd = s.transform.slope_in(*site.linear_rate_err / 1000.0);
    pg[j] = 1.0 / (sd * sd);
  }

  ModelGraph g;
  add_params(g.parameters, "beta_r", Kr, Unit::Level);
  add_params(g.parameters, "beta_g", S, Unit::Slope);
  add_params(g.parameters, "eta", S - 1, Unit::LevelScale);
  add_params(g.parameters, "beta_l", Kl, Unit::LevelScale);
  add_params(g.parameters, "beta_h", S, Unit::LevelScale);
  for (const char* nm : {"sigma_beta_h", "sigma_beta_r", "sigma_beta_l", "sigma_y"})
    g.parameters.push_back({nm, Unit::LevelScale, true, true});
  const Eigen::Index oH = P, kSh = P + S, kSr = kSh + 1, kSl = kSh + 2, kSigma = kSh + 3;

  g.linear = LinearBlock{"coefficients", 0, P,
                         [Xs, lik, mg, pg, Kr, S, Kl, oR, oG, oE, oL, P, kSh, kSr, kSl, kSigma](const Eigen::VectorXd& st) {
                           LinearConditional c;
                           c.design = *Xs;
                           c.target = lik.y;
                           c.weights = lik.weights(st[kSigma]);
                           Eigen::VectorXd prec(P);
                           prec.segment(oR, Kr).setConstant(1.0 / (st[kSr] * st[kSr]));
                           prec.segment(oG, S) = pg;
                           prec.segment(oE, S - 1).setConstant(1.0 / (st[kSh] * st[kSh]));
                           prec.segment(oL, Kl).setConstant(1.0 / (st[kSl] * st[kSl]));
                           c.prior_precision = prec.asDiagonal();
                           c.prior_log_det = prec.array().log().sum();
                           c.prior_mean = Eigen::VectorXd::Zero(P);
                           c.prior_mean.segment(oG, S) = mg;
                           return c;
                         }};
  g.finalize = [Z, S, oE, oH](Eigen::VectorXd& st) { st.segment(oH, S) = Z * st.segment(oE, S - 1); };
  if (opt.fixed_sigma_y) g.metropolis.push_back(positive_scales_block("sigmas", {kSh, kSr, kSl}));
  else g.metropolis.push_back(positive_scales_block("sigmas", {kSh, kSr, kSl, kSigma}));
  g.schedule = {0, kLinearStep};

  const double fixed = opt.fixed_sigma_y ? *opt.fixed_sigma_y / s.transform.rsl_scale : 0.0;
  const Eigen::Index total = kSigma + 1;
  g.initial_state = [mg, oG, S, total, kSh, kSr, kSl, kSigma, fixed](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.1, 0.5), b(0.5, 1.5);
    Eigen::VectorXd st = Eigen::VectorXd::Zero(total);
    st.segment(oG, S) = mg;
    st[kSh] = b(rng);
    st[kSr] = b(rng);
    st[kSl] = b(rng);
    st[kSigma] = fixed > 0.0 ? fixed : u(rng);
    return st;
  };

  const auto ga = to_vector(s.grid_age);
  auto Br = share(bspline_design(ga, kr));
  auto dBr = share(bspline_derivative_design(ga, kr));
  auto Tg = tb.grid, dTg = tb.grid_rate;
  const Eigen::VectorXd gage = s.grid_age;
  std::vector<Eigen::Index> gsite;
  for (auto j : s.grid_site) gsite.push_back(static_cast<Eigen::Index>(j));

  auto regional = [Br, oR, Kr](const Eigen::VectorXd& st) -> Eigen::VectorXd { return *Br * st.segment(oR, Kr); };
  auto linear_local = [gage, gsite, oG](const Eigen::VectorXd& st) -> Eigen::VectorXd {
    Eigen::VectorXd v(gage.size());
    for (Eigen::Index r = 0; r < v.size(); ++r) v[r] = st[oG + gsite[static_cast<std::size_t>(r)]] * gage[r];
    return v;
  };
  auto offset = [gsite, oH](const Eigen::VectorXd& st) -> Eigen::VectorXd {
    Eigen::VectorXd v(static_cast<Eigen::Index>(gsite.size()));
    for (Eigen::Index r = 0; r < v.size(); ++r) v[r] = st[oH + gsite[static_cast<std::size_t>(r)]];
    return v;
  };
  auto nonlinear = [Tg, oL, Kl](const Eigen::VectorXd& st) -> Eigen::VectorXd { return *Tg * st.segment(oL, Kl); };
  auto rate_regional = [dBr, oR, Kr](const Eigen::VectorXd& st) -> Eigen::VectorXd {
    return *dBr * st.segment(oR, Kr);
  };
  auto rate_nonlinear = [dTg, oL, Kl](const Eigen::VectorXd& st) -> Eigen::VectorXd {
    return *dTg * st.segment(oL, Kl);
  };
  auto rate_linear = [gsite, oG](const Eigen::VectorXd& st) -> Eigen::VectorXd {
    Eigen::VectorXd v(static_cast<Eigen::Index>(gsite.size()));
    for (Eigen::Index r = 0; r < v.size(); ++r) v[r] = st[oG + gsite[static_cast<std::size_t>(r)]];
    return v;
  };
  g.fields.push_back({Component::Total, true, [=](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return regional(st) + linear_local(st) + offset(st) + nonlinear(st);
                      }});
  g.fields.push_back({Component::Regional, true, regional});
  g.fields.push_back({Component::LinearLocal, false, linear_local});
  g.fields.push_back({Component::Offset, false, offset});
  g.fields.push_back({Component::NonlinearLocal, false, nonlinear});
  g.fields.push_back({Component::RateTotal, false, [=](const Eigen::VectorXd& st) -> Eigen::VectorXd {
                        return rate_regional(st) + rate_linear(st) + rate_nonlinear(st);
                      }});
  g.fields.push_back({Component::RateRegional, false, rate_regional});
  g.fields.push_back({Component::RateNonlinearLocal, false, rate_nonlinear});
  return g;
}

}  // namespace detail

/// Builds the sampler graph for `spec.model_type` on standardized data.
/// Throws ModelDataMismatch when the data cannot support the model.
inline ModelGraph build_model(const ModelSpec& spec, const Dataset& data, const PredictionGrid& grid,
                              const BuildOptions& opt = {}) {
  validate_spec(spec);
  const ModelType m = spec.model_type;
  if (opt.fixed_sigma_y && !(*opt.fixed_sigma_y > 0.0))
    throw Error(ErrorKind::InvalidSpec, "fixed sigma_y must be positive");
  if (m == ModelType::NiSplineSt || m == ModelType::NiGamDecomp) detail::require_sites(data, m, 2);
  if (m == ModelType::NiGamDecomp && !data.has_linear_rates())
    throw Error(ErrorKind::ModelDataMismatch,
                "The linear_rate or linear_rate_err was not included. It is required for the ni_gam_decomp model.");
  if (m == ModelType::EivCpT && data.observations.size() < static_cast<std::size_t>(spec.n_cp + 3))
    throw Error(ErrorKind::ModelDataMismatch, "too few observations for " + std::to_string(spec.n_cp) + " change point(s)");

  const StandardizedData s = standardize(data, grid);
  const detail::LikelihoodData lik = detail::likelihood_data(s, opt);
  ModelGraph g;
  switch (m) {
    case ModelType::EivSlrT: g = detail::build_eiv_slr(s, lik, opt); break;
    case ModelType::EivCpT: g = detail::build_eiv_cp(s, lik, opt, spec.n_cp); break;
    case ModelType::EivIgpT: g = detail::build_eiv_igp(s, lik, opt); break;
    case ModelType::NiSplineT: g = detail::build_ni_spline_t(s, lik, spec, opt); break;
    case ModelType::NiSplineSt: g = detail::build_ni_spline_st(s, lik, spec, opt); break;
    case ModelType::NiGamDecomp: g = detail::build_ni_gam(data, s, lik, spec, opt); break;
  }
  g.model_type = m;
  g.transform = s.transform;
  g.grid = grid;
  g.data_fingerprint = fingerprint(data);
  return g;
}

}  // namespace rsl

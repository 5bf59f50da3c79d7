#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "rsl/rsl.hpp"

namespace rsl::test {

inline std::string fixture(const std::string& name) { return std::string(RSL_FIXTURE_DIR) + "/" + name; }

inline Observation obs(std::string site, double age, double rsl, double age_err = 0.0, double rsl_err = 0.05,
                       double lat = 35.0, double lon = -76.0, std::string region = "Region") {
  Observation o;
  o.site_id = site_key(site, region);
  o.region = std::move(region);
  o.latitude = lat;
  o.longitude = lon;
  o.age = age;
  o.rsl = rsl;
  o.age_err = age_err;
  o.rsl_err = rsl_err;
  return o;
}

struct SynthOptions {
  int n = 100;
  double start = 1000.0;
  double end = 2000.0;
  double sigma_y = 0.05;      // noise actually added
  double rsl_err = 0.05;      // reported error
  double age_err_lo = 0.0;    // reported age errors ~ U(lo, hi)
  double age_err_hi = 0.0;
  bool perturb_ages = true;   // observed age = true age + N(0, age_err)
  std::uint64_t seed = 1;
};

/// Single site with rsl = f(true age) + noise.
inline Dataset synthetic_site(const std::function<double(double)>& f, const SynthOptions& o,
                              const std::string& site = "Synthetic") {
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(o.age_err_lo, o.age_err_hi);
  Dataset d;
  for (int i = 0; i < o.n; ++i) {
    const double t = o.start + (o.end - o.start) * i / (o.n - 1);
    const double ae = o.age_err_hi > 0.0 ? u(rng) : 0.0;
    const double observed = o.perturb_ages ? t + ae * z(rng) : t;
    d.observations.push_back(obs(site, observed, f(t) + o.sigma_y * z(rng), ae, o.rsl_err));
  }
  SiteMeta m;
  m.site_id = d.observations.front().site_id;
  m.latitude = 35.0;
  m.longitude = -76.0;
  d.sites.push_back(m);
  return validate_dataset(d);
}

/// Several sites on a small lat/lon lattice, each rsl = f_site(age) + noise,
/// with linear rates attached when `rates` is set.
inline Dataset synthetic_sites(int sites, int per_site, std::uint64_t seed, bool rates = true,
                               double sigma = 0.02, double stagger = 20.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Dataset d;
  for (int s = 0; s < sites; ++s) {
    const std::string name = "Site" + std::to_string(s);
    const double lat = 34.0 + 1.5 * s, lon = -77.0 + 0.8 * ((s * 7) % 5);
    const double slope = 0.0008 + 0.0003 * s;
    for (int i = 0; i < per_site; ++i) {
      const double t = 1000.0 + s * stagger + (1000.0 - s * 2.0 * stagger) * i / (per_site - 1);
      const double y = slope * (t - 1500.0) + 0.05 * std::sin((t - 1000.0) / 160.0) + sigma * z(rng);
      d.observations.push_back(obs(name, t, y, 5.0, 0.03, lat, lon));
    }
    SiteMeta m;
    m.site_id = site_key(name, "Region");
    m.latitude = lat;
    m.longitude = lon;
    if (rates) {
      m.linear_rate = slope * 1000.0;
      m.linear_rate_err = 0.2;
    }
    d.sites.push_back(m);
  }
  return validate_dataset(d);
}

/// Random states: the graph's initial draw with the linear block replaced by
/// N(0, scale^2) values, then finalized.
inline PosteriorDraws random_draws(const ModelGraph& g, int count, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  PosteriorDraws d;
  d.parameters = g.parameters;
  d.transform = g.transform;
  d.data_fingerprint = g.data_fingerprint;
  Eigen::MatrixXd m(count, g.size());
  for (int r = 0; r < count; ++r) {
    Eigen::VectorXd st = g.initial_state(rng);
    if (g.linear)
      for (Eigen::Index i = 0; i < g.linear->size; ++i) st[g.linear->offset + i] = scale * z(rng);
    if (g.finalize) g.finalize(st);
    m.row(r) = st.transpose();
  }
  d.chains.push_back(m);
  return d;
}

inline ModelSpec quick_spec(ModelType m, int iterations = 2000, int burnin = 1000, int thin = 1, int chains = 2) {
  ModelSpec s;
  s.model_type = m;
  s.n_iterations = iterations;
  s.n_burnin = burnin;
  s.thin = thin;
  s.n_chains = chains;
  return s;
}

}  // namespace rsl::test

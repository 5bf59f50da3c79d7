#pragma once

// Multi-chain MCMC over a ModelGraph: exact Gaussian draws for the linear
// block, adaptive random-walk Metropolis for everything else.

#include <cmath>
#include <future>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "rsl/core.hpp"
#include "rsl/graph.hpp"

namespace rsl {

struct PosteriorDraws {
  std::vector<ParameterInfo> parameters;
  std::vector<Eigen::MatrixXd> chains;  // draws x parameters, internal units
  Standardization transform;
  ModelSpec spec;
  std::uint64_t data_fingerprint = 0;
  std::map<std::string, double> acceptance;  // post burn-in Metropolis acceptance per block

  Eigen::Index index_of(std::string_view name) const {
    for (std::size_t i = 0; i < parameters.size(); ++i)
      if (parameters[i].name == name) return static_cast<Eigen::Index>(i);
    throw Error(ErrorKind::GridMismatch, "no parameter named '" + std::string(name) + "'");
  }

  Eigen::Index draws_per_chain() const { return chains.empty() ? 0 : chains.front().rows(); }

  /// Draws of one parameter in reporting units, one vector per chain.
  std::vector<std::vector<double>> natural(Eigen::Index col) const {
    std::vector<std::vector<double>> out;
    const Unit u = parameters[static_cast<std::size_t>(col)].unit;
    for (const auto& c : chains) {
      std::vector<double> v(static_cast<std::size_t>(c.rows()));
      for (Eigen::Index r = 0; r < c.rows(); ++r) v[static_cast<std::size_t>(r)] = transform.to_natural(c(r, col), u);
      out.push_back(std::move(v));
    }
    return out;
  }
  std::vector<std::vector<double>> natural(std::string_view name) const { return natural(index_of(name)); }
};

// ---------------------------------------------------------------------------
// Gaussian-linear algebra

struct GaussianPosterior {
  Eigen::LLT<Eigen::MatrixXd> precision_factor;  // Q = L L^T
  Eigen::VectorXd mean;
  double log_marginal = 0.0;  // log density of the target with theta integrated out
};

/// Posterior of theta and the marginal likelihood of the target, in
/// information form: Q = P0 + X'WX, b = P0 m0 + X'W r.
inline GaussianPosterior gaussian_posterior(const LinearConditional& c) {
  const auto n = c.design.rows();
  const auto p = c.design.cols();
  Eigen::VectorXd sw = c.weights.array().sqrt();
  Eigen::MatrixXd Xw = c.design.array().colwise() * sw.array();
  Eigen::MatrixXd Q = c.prior_precision;
  Q.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
  Q.triangularView<Eigen::StrictlyUpper>() = Q.transpose().triangularView<Eigen::StrictlyUpper>();
  Eigen::VectorXd wr = c.weights.cwiseProduct(c.target);
  Eigen::VectorXd b = c.prior_precision * c.prior_mean + c.design.transpose() * wr;

  GaussianPosterior g;
  g.precision_factor.compute(Q);
  if (g.precision_factor.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalFailure, "posterior precision is not positive definite");
  g.mean = g.precision_factor.solve(b);

  auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& f) {
    return 2.0 * f.matrixLLT().diagonal().array().log().sum();
  };
  double prior_logdet = 0.0;
  if (c.prior_log_det) prior_logdet = *c.prior_log_det;
  else {
    Eigen::LLT<Eigen::MatrixXd> prior_factor(c.prior_precision);
    if (prior_factor.info() != Eigen::Success)
      throw Error(ErrorKind::NumericalFailure, "prior precision is not positive definite");
    prior_logdet = logdet(prior_factor);
  }
  const double quad_data = c.target.dot(wr);
  const double quad_prior = c.prior_mean.dot(c.prior_precision * c.prior_mean);
  g.log_marginal = -0.5 * static_cast<double>(n) * std::log(2.0 * M_PI) + 0.5 * c.weights.array().log().sum() -
                   0.5 * quad_data - 0.5 * quad_prior + 0.5 * b.dot(g.mean) + 0.5 * prior_logdet -
                   0.5 * logdet(g.precision_factor);
  (void)p;
  return g;
}

template <class Rng>
Eigen::VectorXd draw_gaussian(const GaussianPosterior& g, Rng& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd e(g.mean.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = z(rng);
  // L^T x = e gives x ~ N(0, Q^{-1})
  return g.mean + g.precision_factor.matrixU().solve(e);
}

// ---------------------------------------------------------------------------
// Metropolis machinery

namespace detail {

inline double to_unconstrained(double x, Support s) {
  switch (s) {
    case Support::Real: return x;
    case Support::Positive: return std::log(x);
    case Support::UnitInterval: return std::log(x / (1.0 - x));
  }
  return x;
}

inline double from_unconstrained(double u, Support s) {
  switch (s) {
    case Support::Real: return u;
    case Support::Positive: return std::exp(u);
    case Support::UnitInterval: return 1.0 / (1.0 + std::exp(-u));
  }
  return u;
}

// log |dx/du|
inline double log_jacobian(double x, Support s) {
  switch (s) {
    case Support::Real: return 0.0;
    case Support::Positive: return std::log(x);
    case Support::UnitInterval: return std::log(x) + std::log1p(-x);
  }
  return 0.0;
}

inline Error numerical_failure(int iteration, const std::string& block, const std::string& what) {
  return Error(ErrorKind::NumericalFailure,
               "iteration " + std::to_string(iteration) + ", block '" + block + "': " + what);
}

struct BlockState {
  std::vector<double> log_factor;  // one for Joint/Collapsed, one per index for Elementwise
  long accepted = 0;
  long proposed = 0;
};

inline double target_acceptance(const MetropolisBlock& b) {
  return (b.mode == BlockMode::Elementwise || b.indices.size() == 1) ? 0.44 : 0.234;
}

inline double adaptation_gain(int iteration) { return std::pow(static_cast<double>(iteration) + 1.0, -0.6); }

struct ChainResult {
  Eigen::MatrixXd draws;
  std::vector<BlockState> blocks;
};

inline ChainResult run_one_chain(const ModelGraph& graph, const ModelSpec& spec, int chain) {
  std::mt19937_64 rng(spec.rng_seed + static_cast<std::uint64_t>(chain));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;

  Eigen::VectorXd state = graph.initial_state(rng);
  if (state.size() != graph.size()) throw Error(ErrorKind::NumericalFailure, "initial state has the wrong size");
  if (graph.finalize) graph.finalize(state);

  std::vector<BlockState> blocks(graph.metropolis.size());
  for (std::size_t k = 0; k < graph.metropolis.size(); ++k) {
    const auto& b = graph.metropolis[k];
    blocks[k].log_factor.assign(b.mode == BlockMode::Elementwise ? b.indices.size() : 1, 0.0);
  }

  const int kept = spec.retained_per_chain();
  ChainResult result;
  result.draws.resize(kept, graph.size());
  int row = 0;

  // Posterior of the linear block given the current non-linear parameters;
  // reset whenever a Metropolis step changes them.
  std::optional<GaussianPosterior> current;

  for (int it = 0; it < spec.n_iterations; ++it) {
    const bool adapting = it < spec.n_burnin;
    for (int step : graph.schedule) {
      if (step == kLinearStep) {
        const auto& lin = *graph.linear;
        if (!current) current = gaussian_posterior(lin.conditional(state));
        const Eigen::VectorXd theta = draw_gaussian(*current, rng);
        if (!theta.allFinite()) throw numerical_failure(it, lin.name, "non-finite Gaussian draw");
        state.segment(lin.offset, lin.size) = theta;
        if (graph.finalize) graph.finalize(state);
        continue;
      }
      const auto& b = graph.metropolis[static_cast<std::size_t>(step)];
      auto& bs = blocks[static_cast<std::size_t>(step)];
      const double target = target_acceptance(b);
      const double gain = adaptation_gain(it);

      if (b.mode == BlockMode::Elementwise) {
        const Eigen::VectorXd cur = b.log_density_elements(state);
        Eigen::VectorXd proposal = state;
        std::vector<double> jac(b.indices.size());
        for (std::size_t k = 0; k < b.indices.size(); ++k) {
          const auto i = b.indices[k];
          const auto s = b.support[k];
          const double u = to_unconstrained(state[i], s) + b.step[k] * std::exp(bs.log_factor[k]) * normal(rng);
          proposal[i] = from_unconstrained(u, s);
          jac[k] = log_jacobian(proposal[i], s) - log_jacobian(state[i], s);
        }
        const Eigen::VectorXd prop = b.log_density_elements(proposal);
        for (std::size_t k = 0; k < b.indices.size(); ++k) {
          const auto kk = static_cast<Eigen::Index>(k);
          if (!std::isfinite(cur[kk]))
            throw numerical_failure(it, b.name, "non-finite log density at the current state");
          if (std::isnan(prop[kk])) throw numerical_failure(it, b.name, "NaN log density at a proposal");
          const double log_ratio = prop[kk] - cur[kk] + jac[k];
          const bool accept = std::log(unif(rng)) < log_ratio;
          if (accept) {
            state[b.indices[k]] = proposal[b.indices[k]];
            current.reset();
          }
          if (adapting) bs.log_factor[k] += gain * ((accept ? 1.0 : 0.0) - target);
          else {
            bs.proposed += 1;
            bs.accepted += accept ? 1 : 0;
          }
        }
        if (graph.finalize) graph.finalize(state);
        continue;
      }

      const bool collapsed = b.mode == BlockMode::Collapsed;
      std::optional<GaussianPosterior> g_cur, g_prop;
      double cur = b.log_density(state);
      if (collapsed) {
        g_cur = current ? std::move(current) : gaussian_posterior(graph.linear->conditional(state));
        cur += g_cur->log_marginal;
      }
      if (!std::isfinite(cur)) throw numerical_failure(it, b.name, "non-finite log density at the current state");

      Eigen::VectorXd proposal = state;
      double jac = 0.0;
      const double scale = std::exp(bs.log_factor[0]);
      for (std::size_t k = 0; k < b.indices.size(); ++k) {
        const auto i = b.indices[k];
        const auto s = b.support[k];
        proposal[i] = from_unconstrained(to_unconstrained(state[i], s) + b.step[k] * scale * normal(rng), s);
        jac += log_jacobian(proposal[i], s) - log_jacobian(state[i], s);
      }
      if (graph.finalize) graph.finalize(proposal);
      double prop = b.log_density(proposal);
      if (collapsed && std::isfinite(prop)) {
        g_prop = gaussian_posterior(graph.linear->conditional(proposal));
        prop += g_prop->log_marginal;
      }
      if (std::isnan(prop)) throw numerical_failure(it, b.name, "NaN log density at a proposal");
      const bool accept = std::log(unif(rng)) < prop - cur + jac;
      if (accept) state = proposal;
      if (collapsed) current = accept ? std::move(g_prop) : std::move(g_cur);
      else if (accept) current.reset();
      if (adapting) bs.log_factor[0] += gain * ((accept ? 1.0 : 0.0) - target);
      else {
        bs.proposed += 1;
        bs.accepted += accept ? 1 : 0;
      }
    }
    if (it >= spec.n_burnin && (it - spec.n_burnin + 1) % spec.thin == 0) result.draws.row(row++) = state.transpose();
  }
  result.blocks = std::move(blocks);
  return result;
}

}  // namespace detail

/// Runs spec.n_chains independent chains (chain c seeded rng_seed + c) and
/// collects the retained draws. Deterministic for a fixed graph, spec and seed.
inline PosteriorDraws run_chains(const ModelGraph& graph, const ModelSpec& spec) {
  validate_spec(spec);
  for (int s : graph.schedule)
    if ((s == kLinearStep && !graph.linear) || s >= static_cast<int>(graph.metropolis.size()))
      throw Error(ErrorKind::InvalidSpec, "graph schedule refers to a missing block");
  for (const auto& b : graph.metropolis)
    if (b.mode == BlockMode::Collapsed && !graph.linear)
      throw Error(ErrorKind::InvalidSpec, "collapsed block '" + b.name + "' needs a linear block");

  std::vector<std::future<detail::ChainResult>> jobs;
  for (int c = 0; c < spec.n_chains; ++c)
    jobs.push_back(std::async(std::launch::async, [&graph, &spec, c] { return detail::run_one_chain(graph, spec, c); }));

  PosteriorDraws out;
  out.parameters = graph.parameters;
  out.transform = graph.transform;
  out.spec = spec;
  out.data_fingerprint = graph.data_fingerprint;
  std::vector<long> acc(graph.metropolis.size(), 0), prop(graph.metropolis.size(), 0);
  for (auto& j : jobs) {
    auto r = j.get();
    for (std::size_t k = 0; k < r.blocks.size(); ++k) {
      acc[k] += r.blocks[k].accepted;
      prop[k] += r.blocks[k].proposed;
    }
    out.chains.push_back(std::move(r.draws));
  }
  for (std::size_t k = 0; k < graph.metropolis.size(); ++k)
    if (prop[k] > 0) out.acceptance[graph.metropolis[k].name] = static_cast<double>(acc[k]) / static_cast<double>(prop[k]);
  return out;
}

}  // namespace rsl

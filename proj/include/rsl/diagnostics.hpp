#pragma once

// Convergence diagnostics and posterior summary tables.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rsl/error.hpp"
#include "rsl/sampler.hpp"

namespace rsl {

inline constexpr double kRhatThreshold = 1.1;
inline constexpr double kMadConstant = 1.4826;
inline constexpr std::string_view kConvergedVerdict = "No convergence issues detected.";
inline constexpr std::string_view kNotConvergedVerdict = "Convergence issues detected, a longer run is necessary.";

using Chains = std::vector<std::vector<double>>;

namespace detail {

inline double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance_of(std::span<const double> x) {
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / (static_cast<double>(x.size()) - 1.0);
}

// Each chain cut into two halves of equal length (a middle draw is dropped for odd lengths).
inline Chains split_chains(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

}  // namespace detail

/// Linear interpolation between order statistics at h = (N-1)p.
inline double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw Error(ErrorKind::TooFewDraws, "quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double median_absolute_deviation(const std::vector<double>& x) {
  const double med = quantile(x, 0.5);
  std::vector<double> dev(x.size());
  std::transform(x.begin(), x.end(), dev.begin(), [med](double v) { return std::abs(v - med); });
  return kMadConstant * quantile(dev, 0.5);
}

/// Split-chain potential scale reduction factor. A single chain is accepted
/// when it has at least 8 draws (its two halves are compared).
inline double gelman_rubin(const Chains& chains) {
  if (chains.empty()) throw Error(ErrorKind::TooFewDraws, "no chains");
  const std::size_t len = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != len) throw Error(ErrorKind::TooFewDraws, "chains have different lengths");
  if (chains.size() == 1 && len < 8) throw Error(ErrorKind::TooFewDraws, "a single chain needs at least 8 draws");
  if (chains.size() >= 2 && len < 4) throw Error(ErrorKind::TooFewDraws, "each chain needs at least 4 draws");

  const Chains split = detail::split_chains(chains);
  const double n = static_cast<double>(split.front().size());
  std::vector<double> means, vars;
  for (const auto& c : split) {
    means.push_back(detail::mean_of(c));
    vars.push_back(detail::variance_of(c));
  }
  const double W = detail::mean_of(vars);
  const double B = n * detail::variance_of(means);
  if (!(W > 0.0)) return B > 0.0 ? INFINITY : 1.0;
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

/// Effective sample size from chain-combined autocorrelations, summed in
/// consecutive pairs until the first negative pair. Zero-variance input
/// returns the raw draw count.
inline double effective_sample_size(const Chains& chains) {
  if (chains.empty() || chains.front().size() < 8) throw Error(ErrorKind::TooFewDraws, "need at least 8 draws");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains)
    if (c.size() != n) throw Error(ErrorKind::TooFewDraws, "chains have different lengths");
  const double m = static_cast<double>(chains.size());
  const double total = m * static_cast<double>(n);

  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(detail::mean_of(c));
    vars.push_back(detail::variance_of(c));
  }
  const double W = detail::mean_of(vars);
  const double nn = static_cast<double>(n);
  const double B_over_n = chains.size() > 1 ? detail::variance_of(means) : 0.0;
  const double var_plus = (nn - 1.0) / nn * W + B_over_n;
  if (!(var_plus > 0.0)) return total;

  // Autocovariance at lag t averaged over chains (biased, divisor n).
  auto acov = [&](std::size_t t) {
    double s = 0.0;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const auto& x = chains[c];
      double a = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) a += (x[i] - means[c]) * (x[i + t] - means[c]);
      s += a / nn;
    }
    return s / m;
  };
  auto rho = [&](std::size_t t) { return 1.0 - (W - acov(t)) / var_plus; };

  double tau = -1.0;
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    const double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

struct SummaryRow {
  std::string variable;
  double mean = 0.0;
  double sd = 0.0;
  double mad = 0.0;
  double q5 = 0.0;
  double q95 = 0.0;
  double rhat = 1.0;
};

inline constexpr std::string_view kSummaryColumns[] = {"variable", "mean", "sd", "mad", "q5", "q95", "rhat"};

struct DrawSummary {
  std::vector<SummaryRow> rows;
  std::string verdict;
};

inline SummaryRow summarize_variable(std::string name, const Chains& chains) {
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  if (pooled.empty()) throw Error(ErrorKind::TooFewDraws, "no draws for '" + name + "'");
  SummaryRow r;
  r.variable = std::move(name);
  r.mean = detail::mean_of(pooled);
  r.sd = pooled.size() > 1 ? std::sqrt(detail::variance_of(pooled)) : 0.0;
  r.mad = median_absolute_deviation(pooled);
  r.q5 = quantile(pooled, 0.05);
  r.q95 = quantile(pooled, 0.95);
  const bool enough = chains.size() >= 2 ? chains.front().size() >= 4 : chains.front().size() >= 8;
  r.rhat = enough ? gelman_rubin(chains) : NAN;
  return r;
}

inline std::string verdict_for(const std::vector<SummaryRow>& rows) {
  for (const auto& r : rows)
    if (!(r.rhat < kRhatThreshold)) return std::string(kNotConvergedVerdict);
  return std::string(kConvergedVerdict);
}

/// Summary rows in reporting units. An empty filter selects the parameters
/// the model flags for the default table (its hyperparameters).
inline DrawSummary summarize_draws(const PosteriorDraws& draws, const std::vector<std::string>& variables = {}) {
  if (draws.chains.empty() || draws.draws_per_chain() == 0) throw Error(ErrorKind::TooFewDraws, "no draws");
  DrawSummary out;
  if (variables.empty()) {
    for (std::size_t i = 0; i < draws.parameters.size(); ++i)
      if (draws.parameters[i].summary)
        out.rows.push_back(summarize_variable(draws.parameters[i].name, draws.natural(static_cast<Eigen::Index>(i))));
  } else {
    for (const auto& v : variables) out.rows.push_back(summarize_variable(v, draws.natural(v)));
  }
  out.verdict = verdict_for(out.rows);
  return out;
}

}  // namespace rsl

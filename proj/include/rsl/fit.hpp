#pragma once

// Build-and-sample orchestration, including the two-pass noisy-input fit.

#include <vector>

#include "rsl/core.hpp"
#include "rsl/models.hpp"
#include "rsl/posterior.hpp"
#include "rsl/sampler.hpp"

namespace rsl {

struct FitResult {
  ModelGraph graph;
  PosteriorDraws draws;
  std::vector<double> ni_extra_var;  // m^2 per observation; empty for errors-in-variables models
  int passes = 1;
};

/// Fits `spec.model_type`. Noisy-input models are fitted once without the
/// correction, then refitted with (f'(t_i) s_t,i)^2 added to each
/// observation's variance, f' being the first-pass mean rate.
inline FitResult fit_model(const ModelSpec& spec, const Dataset& data, const PredictionGrid& grid,
                           BuildOptions options = {}) {
  FitResult out;
  out.graph = build_model(spec, data, grid, options);
  out.draws = run_chains(out.graph, spec);
  if (!is_noisy_input(spec.model_type) || !options.ni_extra_var.empty()) {
    out.ni_extra_var = options.ni_extra_var;
    return out;
  }
  const auto rate = mean_rate(out.draws, out.graph);
  const auto slopes = grid_rate_at_observations(grid, rate, data);
  options.ni_extra_var = ni_variance_inflation(slopes, data);
  out.graph = build_model(spec, data, grid, options);
  out.draws = run_chains(out.graph, spec);
  out.ni_extra_var = std::move(options.ni_extra_var);
  out.passes = 2;
  return out;
}

}  // namespace rsl

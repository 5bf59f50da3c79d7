#pragma once

// Posterior fields on the prediction grid: per-draw level and rate curves,
// GAM components, and pointwise credible bands.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsl/core.hpp"
#include "rsl/diagnostics.hpp"
#include "rsl/graph.hpp"
#include "rsl/sampler.hpp"

namespace rsl {

struct ComponentField {
  Component component = Component::Total;
  std::vector<std::string> site_id;  // one per grid row
  std::vector<double> age;           // one per grid row
  Eigen::MatrixXd draws;             // draws x grid rows; metres or mm/yr
};

namespace detail {

inline void check_alignment(const PosteriorDraws& draws, const ModelGraph& graph) {
  if (draws.parameters.size() != graph.parameters.size())
    throw Error(ErrorKind::GridMismatch, "draws have " + std::to_string(draws.parameters.size()) +
                                             " parameters but the model has " + std::to_string(graph.parameters.size()));
  for (std::size_t i = 0; i < graph.parameters.size(); ++i)
    if (draws.parameters[i].name != graph.parameters[i].name)
      throw Error(ErrorKind::GridMismatch, "parameter '" + draws.parameters[i].name + "' does not match the model");
  if (draws.data_fingerprint != graph.data_fingerprint)
    throw Error(ErrorKind::GridMismatch, "draws were produced from different data");
}

}  // namespace detail

/// Evaluates one component for every retained draw (chains stacked in order).
inline ComponentField evaluate_component(const PosteriorDraws& draws, const ModelGraph& graph, Component c) {
  detail::check_alignment(draws, graph);
  const FieldEvaluator* f = graph.field(c);
  if (!f)
    throw Error(ErrorKind::WrongModelType,
                std::string(to_string(c)) + " is not available for " + std::string(to_string(graph.model_type)));
  ComponentField out;
  out.component = c;
  for (const auto& r : graph.grid.rows) {
    out.site_id.push_back(r.site_id);
    out.age.push_back(r.age);
  }
  const auto rows = static_cast<Eigen::Index>(graph.grid.rows.size());
  Eigen::Index total = 0;
  for (const auto& ch : draws.chains) total += ch.rows();
  out.draws.resize(total, rows);
  const auto& tr = graph.transform;
  Eigen::Index d = 0;
  for (const auto& ch : draws.chains)
    for (Eigen::Index r = 0; r < ch.rows(); ++r, ++d) {
      const Eigen::VectorXd v = f->evaluate(ch.row(r).transpose());
      if (v.size() != rows) throw Error(ErrorKind::GridMismatch, "field length differs from the grid");
      if (is_rate(c)) out.draws.row(d) = (v.array() * (tr.rsl_scale / tr.age_scale * 1000.0)).matrix().transpose();
      else if (f->shifted) out.draws.row(d) = (v.array() * tr.rsl_scale + tr.rsl_center).matrix().transpose();
      else out.draws.row(d) = (v.array() * tr.rsl_scale).matrix().transpose();
    }
  return out;
}

inline ComponentField predict_field(const PosteriorDraws& draws, const ModelGraph& graph) {
  return evaluate_component(draws, graph, Component::Total);
}

inline ComponentField predict_rate(const PosteriorDraws& draws, const ModelGraph& graph) {
  return evaluate_component(draws, graph, Component::RateTotal);
}

/// The four additive GAM components and the two component rates.
inline std::vector<ComponentField> component_fields(const PosteriorDraws& draws, const ModelGraph& graph) {
  if (graph.model_type != ModelType::NiGamDecomp)
    throw Error(ErrorKind::WrongModelType, "component fields need ni_gam_decomp, not " +
                                               std::string(to_string(graph.model_type)));
  std::vector<ComponentField> out;
  for (auto c : {Component::Regional, Component::LinearLocal, Component::Offset, Component::NonlinearLocal,
                 Component::RateRegional, Component::RateNonlinearLocal})
    out.push_back(evaluate_component(draws, graph, c));
  return out;
}

/// Every component the model provides, total first.
inline std::vector<ComponentField> all_fields(const PosteriorDraws& draws, const ModelGraph& graph) {
  std::vector<ComponentField> out;
  for (const auto& f : graph.fields) out.push_back(evaluate_component(draws, graph, f.component));
  return out;
}

/// Pointwise mean with equal-tailed bands. Where the mean falls outside its
/// band the median becomes the centre line and the row is counted.
inline FieldSummary credible_bands(const ComponentField& field, double ci_level) {
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw Error(ErrorKind::InvalidSpec, "ci_level must lie in (0,1)");
  if (field.draws.rows() == 0 || field.draws.cols() == 0) throw Error(ErrorKind::EmptyField, "field has no draws");
  const double a = (1.0 - ci_level) / 2.0;
  FieldSummary s;
  for (Eigen::Index r = 0; r < field.draws.cols(); ++r) {
    std::vector<double> col(field.draws.col(r).data(), field.draws.col(r).data() + field.draws.rows());
    FieldRow row;
    row.site_id = field.site_id[static_cast<std::size_t>(r)];
    row.age = field.age[static_cast<std::size_t>(r)];
    row.component = field.component;
    row.mean = field.draws.col(r).mean();
    row.lower = quantile(col, a);
    row.upper = quantile(col, 1.0 - a);
    if (row.mean < row.lower || row.mean > row.upper) {
      row.mean = quantile(col, 0.5);
      ++s.median_fallback_rows;
    }
    s.rows.push_back(std::move(row));
  }
  return s;
}

/// Posterior-mean rate (mm/yr) per grid row.
inline std::vector<double> mean_rate(const PosteriorDraws& draws, const ModelGraph& graph) {
  const ComponentField f = predict_rate(draws, graph);
  const Eigen::VectorXd m = f.draws.colwise().mean().transpose();
  return {m.data(), m.data() + m.size()};
}

}  // namespace rsl

#pragma once

// The sampler-facing description of a model: a flat parameter vector, at most
// one Gaussian-linear block drawn exactly, Metropolis blocks for the rest, and
// field evaluators on the prediction grid.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsl/core.hpp"

namespace rsl {

enum class Support { Real, Positive, UnitInterval };

/// How an internal (standardized) parameter maps back to reporting units.
enum class Unit {
  None,        // dimensionless, unchanged
  Level,       // metres, shifted and scaled
  LevelScale,  // metres, scaled only (standard deviations, offsets)
  Slope,       // m/yr
  Age,         // years CE, shifted and scaled
  AgeScale,    // years, scaled only
};

/// Affine map between data units (metres, years CE) and the centred/scaled
/// units the models work in.
struct Standardization {
  double age_center = 0.0;
  double age_scale = 1.0;
  double rsl_center = 0.0;
  double rsl_scale = 1.0;

  double age_in(double age) const { return (age - age_center) / age_scale; }
  double age_out(double t) const { return t * age_scale + age_center; }
  double level_in(double rsl) const { return (rsl - rsl_center) / rsl_scale; }
  double level_out(double y) const { return y * rsl_scale + rsl_center; }
  double slope_out(double s) const { return s * rsl_scale / age_scale; }  // m/yr
  double slope_in(double m_per_yr) const { return m_per_yr * age_scale / rsl_scale; }
  double rate_mm_per_yr(double s) const { return slope_out(s) * 1000.0; }

  double to_natural(double v, Unit u) const {
    switch (u) {
      case Unit::None: return v;
      case Unit::Level: return level_out(v);
      case Unit::LevelScale: return v * rsl_scale;
      case Unit::Slope: return slope_out(v);
      case Unit::Age: return age_out(v);
      case Unit::AgeScale: return v * age_scale;
    }
    return v;
  }

  double to_internal(double v, Unit u) const {
    switch (u) {
      case Unit::None: return v;
      case Unit::Level: return level_in(v);
      case Unit::LevelScale: return v / rsl_scale;
      case Unit::Slope: return slope_in(v);
      case Unit::Age: return age_in(v);
      case Unit::AgeScale: return v / age_scale;
    }
    return v;
  }
};

struct ParameterInfo {
  std::string name;
  Unit unit = Unit::None;
  bool variance_type = false;  // standard deviations; strictly positive
  bool summary = false;        // shown in the default summary table
};

/// Gaussian-linear conditional: target ~ N(design * theta, diag(1/weights)),
/// theta ~ N(prior_mean, prior_precision^{-1}).
struct LinearConditional {
  Eigen::MatrixXd design;
  Eigen::VectorXd target;
  Eigen::VectorXd weights;
  Eigen::MatrixXd prior_precision;
  Eigen::VectorXd prior_mean;
  std::optional<double> prior_log_det;  // log|prior_precision| when cheaply known
};

struct LinearBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  std::function<LinearConditional(const Eigen::VectorXd&)> conditional;
};

enum class BlockMode {
  Joint,        // random-walk on all indices at once against `log_density`
  Collapsed,    // as Joint, with the linear block integrated out of the likelihood
  Elementwise,  // independent scalar updates; `log_density_elements` gives one term per index
};

struct MetropolisBlock {
  std::string name;
  std::vector<Eigen::Index> indices;
  std::vector<Support> support;  // one per index
  std::vector<double> step;      // initial proposal sd per index, on the transformed scale
  BlockMode mode = BlockMode::Joint;
  // Joint: every term of the log joint that involves these indices.
  // Collapsed: the same, minus the linear block's likelihood and prior.
  std::function<double(const Eigen::VectorXd&)> log_density;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> log_density_elements;
};

struct FieldEvaluator {
  Component component = Component::Total;
  bool shifted = false;  // level field that carries the rsl centre
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> evaluate;  // internal units, one value per grid row
};

inline constexpr int kLinearStep = -1;

struct ModelGraph {
  ModelType model_type = ModelType::NiSplineT;
  std::vector<ParameterInfo> parameters;
  std::optional<LinearBlock> linear;
  std::vector<MetropolisBlock> metropolis;
  std::vector<int> schedule;  // sweep order; kLinearStep or an index into `metropolis`
  std::function<Eigen::VectorXd(std::mt19937_64&)> initial_state;
  std::function<void(Eigen::VectorXd&)> finalize;  // recomputes derived parameters
  Standardization transform;
  std::vector<FieldEvaluator> fields;
  PredictionGrid grid;
  std::uint64_t data_fingerprint = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(parameters.size()); }

  std::optional<Eigen::Index> find(std::string_view name) const {
    for (std::size_t i = 0; i < parameters.size(); ++i)
      if (parameters[i].name == name) return static_cast<Eigen::Index>(i);
    return std::nullopt;
  }

  const FieldEvaluator* field(Component c) const {
    for (const auto& f : fields)
      if (f.component == c) return &f;
    return nullptr;
  }
};

}  // namespace rsl

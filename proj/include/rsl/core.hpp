#pragma once

// Domain types shared by every stage of the pipeline: observations, site
// metadata, the validated dataset, the prediction grid, model settings and
// field summaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rsl/error.hpp"

namespace rsl {

enum class DataType { ProxyRecord, TideGaugeData };

inline std::string_view to_string(DataType t) {
  return t == DataType::ProxyRecord ? "ProxyRecord" : "TideGaugeData";
}

inline DataType parse_data_type(std::string_view s) {
  if (s == "ProxyRecord") return DataType::ProxyRecord;
  if (s == "TideGaugeData") return DataType::TideGaugeData;
  throw Error(ErrorKind::ParseError, "unknown data type '" + std::string(s) + "'");
}

/// Site key used throughout: "Site, Region".
inline std::string site_key(std::string_view site, std::string_view region) {
  std::string key(site);
  key += ", ";
  key += region;
  return key;
}

/// One dated relative sea-level measurement. Levels in metres, ages in years
/// CE, both errors are 1 standard deviation.
struct Observation {
  std::string site_id;
  std::string region;
  double latitude = 0.0;
  double longitude = 0.0;
  double rsl = 0.0;
  double rsl_err = 0.0;
  double age = 0.0;
  double age_err = 0.0;
  DataType data_type = DataType::ProxyRecord;
};

/// Per-site metadata. Linear rates are in mm/yr.
struct SiteMeta {
  std::string site_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::optional<double> linear_rate;
  std::optional<double> linear_rate_err;
  DataType data_type = DataType::ProxyRecord;
};

struct Dataset {
  static constexpr std::string_view age_unit = "Common Era";

  std::vector<Observation> observations;
  std::vector<SiteMeta> sites;
  bool tide_gauges_averaged = false;

  const SiteMeta* find_site(std::string_view id) const {
    for (const auto& s : sites)
      if (s.site_id == id) return &s;
    return nullptr;
  }

  std::size_t site_index(std::string_view id) const {
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (sites[i].site_id == id) return i;
    throw Error(ErrorKind::UnknownSite, "site '" + std::string(id) + "' not in dataset");
  }

  std::size_t count_sites(DataType t) const {
    return static_cast<std::size_t>(
        std::count_if(sites.begin(), sites.end(), [t](const SiteMeta& s) { return s.data_type == t; }));
  }

  bool has_linear_rates() const {
    return !sites.empty() && std::all_of(sites.begin(), sites.end(), [](const SiteMeta& s) {
      return s.linear_rate.has_value() && s.linear_rate_err.has_value();
    });
  }
};

struct GridRow {
  std::string site_id;
  double latitude = 0.0;
  double longitude = 0.0;
  DataType data_type = DataType::ProxyRecord;
  double age = 0.0;
};

struct PredictionGrid {
  double resolution = 50.0;
  std::vector<GridRow> rows;
};

enum class ModelType { EivSlrT, EivCpT, EivIgpT, NiSplineT, NiSplineSt, NiGamDecomp };

inline std::string_view to_string(ModelType m) {
  switch (m) {
    case ModelType::EivSlrT: return "eiv_slr_t";
    case ModelType::EivCpT: return "eiv_cp_t";
    case ModelType::EivIgpT: return "eiv_igp_t";
    case ModelType::NiSplineT: return "ni_spline_t";
    case ModelType::NiSplineSt: return "ni_spline_st";
    case ModelType::NiGamDecomp: return "ni_gam_decomp";
  }
  return "";
}

inline std::string_view model_label(ModelType m) {
  switch (m) {
    case ModelType::EivSlrT: return "Errors in Variables Simple Linear Regression";
    case ModelType::EivCpT: return "Errors in Variables Change Point model";
    case ModelType::EivIgpT: return "Errors in Variables Integrated Gaussian Process model";
    case ModelType::NiSplineT: return "Noisy Input Spline in time model";
    case ModelType::NiSplineSt: return "Noisy Input Spline in space and time model";
    case ModelType::NiGamDecomp: return "Noisy Input Generalised Additive Model for decomposition";
  }
  return "";
}

inline ModelType parse_model_type(std::string_view s) {
  for (auto m : {ModelType::EivSlrT, ModelType::EivCpT, ModelType::EivIgpT, ModelType::NiSplineT,
                 ModelType::NiSplineSt, ModelType::NiGamDecomp})
    if (to_string(m) == s) return m;
  throw Error(ErrorKind::InvalidSpec,
              "unknown model type '" + std::string(s) +
                  "' (expected eiv_slr_t, eiv_cp_t, eiv_igp_t, ni_spline_t, ni_spline_st or ni_gam_decomp)");
}

inline bool is_noisy_input(ModelType m) {
  return m == ModelType::NiSplineT || m == ModelType::NiSplineSt || m == ModelType::NiGamDecomp;
}

struct ModelSpec {
  ModelType model_type = ModelType::NiSplineT;
  int n_cp = 1;
  int knots_time = 20;         // univariate time basis and the GAM regional spline
  int knots_tensor_time = 12;  // time margin of tensor-product bases
  int knots_lon = 4;
  int knots_lat = 4;
  int n_chains = 3;
  int n_iterations = 5000;
  int n_burnin = 1000;
  int thin = 4;
  double ci_level = 0.95;
  double grid_resolution_years = 50.0;
  std::uint64_t rng_seed = 1;

  int retained_per_chain() const { return (n_iterations - n_burnin) / thin; }
};

inline void validate_spec(const ModelSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidSpec, msg); };
  if (!(spec.ci_level > 0.0 && spec.ci_level < 1.0)) fail("ci_level must lie in (0,1)");
  if (!(spec.grid_resolution_years > 0.0)) fail("grid_resolution_years must be positive");
  if (spec.n_chains < 1) fail("n_chains must be at least 1");
  if (spec.thin < 1) fail("thin must be at least 1");
  if (spec.n_burnin < 0) fail("n_burnin must be non-negative");
  const int kept = spec.n_iterations - spec.n_burnin;
  if (kept <= 0 || kept % spec.thin != 0)
    fail("(n_iterations - n_burnin) / thin must be a positive integer");
  if (spec.model_type == ModelType::EivCpT && (spec.n_cp < 1 || spec.n_cp > 3))
    fail("n_cp must be 1, 2 or 3");
  for (int k : {spec.knots_time, spec.knots_tensor_time, spec.knots_lon, spec.knots_lat})
    if (k < 4) fail("basis sizes must be at least 4 for cubic splines");
}

enum class Component {
  Total,
  Regional,
  LinearLocal,
  Offset,
  NonlinearLocal,
  RateTotal,
  RateRegional,
  RateNonlinearLocal,
};

inline std::string_view to_string(Component c) {
  switch (c) {
    case Component::Total: return "total";
    case Component::Regional: return "regional";
    case Component::LinearLocal: return "linear_local";
    case Component::Offset: return "offset";
    case Component::NonlinearLocal: return "nonlinear_local";
    case Component::RateTotal: return "rate_total";
    case Component::RateRegional: return "rate_regional";
    case Component::RateNonlinearLocal: return "rate_nonlinear_local";
  }
  return "";
}

inline Component parse_component(std::string_view s) {
  for (auto c : {Component::Total, Component::Regional, Component::LinearLocal, Component::Offset,
                 Component::NonlinearLocal, Component::RateTotal, Component::RateRegional,
                 Component::RateNonlinearLocal})
    if (to_string(c) == s) return c;
  throw Error(ErrorKind::ParseError, "unknown component '" + std::string(s) + "'");
}

inline bool is_rate(Component c) {
  return c == Component::RateTotal || c == Component::RateRegional || c == Component::RateNonlinearLocal;
}

inline std::string_view unit_of(Component c) { return is_rate(c) ? "mm/yr" : "m"; }

struct FieldRow {
  std::string site_id;
  double age = 0.0;
  Component component = Component::Total;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct FieldSummary {
  std::vector<FieldRow> rows;
  std::size_t median_fallback_rows = 0;  // rows whose centre line is the median
};

// ---------------------------------------------------------------------------

namespace detail {

inline std::string row_label(std::size_t i) { return "row " + std::to_string(i + 1); }

}  // namespace detail

/// Checks every invariant and returns the canonical form: sites sorted by key,
/// observations sorted by site then age, sites without observations dropped.
inline Dataset validate_dataset(const Dataset& raw) {
  if (raw.observations.empty()) throw Error(ErrorKind::MissingData, "dataset has no observations");

  std::map<std::string, const SiteMeta*> by_id;
  for (const auto& s : raw.sites) {
    if (!by_id.emplace(s.site_id, &s).second)
      throw Error(ErrorKind::UnknownSite, "site '" + s.site_id + "' has duplicate metadata");
    if (!std::isfinite(s.latitude) || !std::isfinite(s.longitude))
      throw Error(ErrorKind::NonFiniteValue, "site '" + s.site_id + "' has non-finite coordinates");
    if (s.linear_rate.has_value() != s.linear_rate_err.has_value())
      throw Error(ErrorKind::MissingData, "site '" + s.site_id + "' has only one of linear_rate/linear_rate_err");
    if (s.linear_rate && (!std::isfinite(*s.linear_rate) || !std::isfinite(*s.linear_rate_err)))
      throw Error(ErrorKind::NonFiniteValue, "site '" + s.site_id + "' has a non-finite linear rate");
    if (s.linear_rate_err && !(*s.linear_rate_err > 0.0))
      throw Error(ErrorKind::NegativeError, "site '" + s.site_id + "' linear_rate_err must be positive");
  }

  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < raw.observations.size(); ++i) {
    const auto& o = raw.observations[i];
    const std::string where = detail::row_label(i) + " (site '" + o.site_id + "')";
    for (auto [name, v] : {std::pair{"RSL", o.rsl}, {"RSL_err", o.rsl_err}, {"Age", o.age},
                           {"Age_err", o.age_err}, {"Latitude", o.latitude}, {"Longitude", o.longitude}})
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteValue, where + ": " + name + " is not finite");
    if (o.rsl_err < 0.0) throw Error(ErrorKind::NegativeError, where + ": RSL_err is negative");
    if (o.age_err < 0.0) throw Error(ErrorKind::NegativeError, where + ": Age_err is negative");
    if (o.latitude < -90.0 || o.latitude > 90.0)
      throw Error(ErrorKind::InvalidCoordinate, where + ": latitude outside [-90, 90]");
    if (o.longitude < -180.0 || o.longitude > 180.0)
      throw Error(ErrorKind::InvalidCoordinate, where + ": longitude outside [-180, 180]");
    if (!by_id.count(o.site_id)) throw Error(ErrorKind::UnknownSite, where + ": no site metadata");
    ++counts[o.site_id];
  }
  for (const auto& [id, n] : counts)
    if (n < 2)
      throw Error(ErrorKind::InsufficientData, "site '" + id + "' has fewer than 2 observations");

  Dataset out;
  out.tide_gauges_averaged = raw.tide_gauges_averaged;
  out.observations = raw.observations;
  std::stable_sort(out.observations.begin(), out.observations.end(),
                   [](const Observation& a, const Observation& b) {
                     if (a.site_id != b.site_id) return a.site_id < b.site_id;
                     return a.age < b.age;
                   });
  for (const auto& [id, meta] : by_id)
    if (counts.count(id)) out.sites.push_back(*meta);
  return out;
}

/// Evenly spaced ages per site from the first to the last observed age. When
/// the span is not a multiple of the resolution the exact maximum is appended.
inline PredictionGrid build_prediction_grid(const Dataset& data, double resolution) {
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw Error(ErrorKind::NonPositiveResolution, "grid resolution must be positive");
  PredictionGrid grid;
  grid.resolution = resolution;
  for (const auto& site : data.sites) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& o : data.observations)
      if (o.site_id == site.site_id) {
        lo = std::min(lo, o.age);
        hi = std::max(hi, o.age);
      }
    if (!std::isfinite(lo)) continue;
    const auto steps = static_cast<long>(std::floor((hi - lo) / resolution + 1e-9));
    for (long k = 0; k <= steps; ++k)
      grid.rows.push_back({site.site_id, site.latitude, site.longitude, site.data_type,
                           lo + static_cast<double>(k) * resolution});
    const double last = lo + static_cast<double>(steps) * resolution;
    if (hi - last > 1e-9 * std::max(1.0, resolution))
      grid.rows.push_back({site.site_id, site.latitude, site.longitude, site.data_type, hi});
  }
  return grid;
}

/// Human-readable summary of a validated dataset.
inline std::string describe(const Dataset& data) {
  std::ostringstream os;
  os << "This is a valid input object with " << data.observations.size() << " observations and "
     << data.sites.size() << " site(s).\n";
  os << "There are " << data.count_sites(DataType::ProxyRecord) << " proxy site(s) and "
     << data.count_sites(DataType::TideGaugeData) << " tide gauge site(s).\n";
  os << "The age units are; " << Dataset::age_unit << ".\n";
  if (data.tide_gauges_averaged)
    os << "Decadally averaged tide gauge data included.\n";
  else
    os << "Decadally averaged tide gauge data was not included. It is recommended for the ni_gam_decomp model.\n";
  if (data.has_linear_rates())
    os << "The linear_rate and linear_rate_err has been included.\n";
  else
    os << "The linear_rate or linear_rate_err was not included. It is required for the ni_gam_decomp model.\n";
  return os.str();
}

/// FNV-1a over a canonical text rendering of the dataset.
inline std::uint64_t fingerprint(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g;", v);
    mix(buf);
  };
  for (const auto& o : data.observations) {
    mix(o.site_id);
    mix(to_string(o.data_type));
    for (double v : {o.latitude, o.longitude, o.rsl, o.rsl_err, o.age, o.age_err}) num(v);
  }
  for (const auto& s : data.sites) {
    mix(s.site_id);
    num(s.linear_rate.value_or(NAN));
    num(s.linear_rate_err.value_or(NAN));
  }
  return h;
}

}  // namespace rsl

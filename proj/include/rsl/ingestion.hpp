#pragma once

// Proxy CSV loading, PSMSL annual tide-gauge parsing, datum correction,
// window averaging, tide-gauge selection and per-site linear rates.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rsl/core.hpp"
#include "rsl/csv.hpp"

namespace rsl {

// ---------------------------------------------------------------------------
// Proxy records

inline constexpr std::string_view kProxyColumns[] = {"Region", "Site", "Latitude", "Longitude",
                                                     "RSL",    "RSL_err", "Age",   "Age_err"};

/// Parses proxy CSV text. Rows become ProxyRecord observations keyed by
/// "Site, Region"; optional linear_rate/linear_rate_err columns are attached
/// to the site metadata. The result is validated.
inline Dataset parse_proxy_csv(std::string_view text) {
  auto rows = csv::parse(text);
  if (rows.empty()) throw Error(ErrorKind::MissingColumn, "proxy file has no header row");
  const auto& header = rows.front();
  auto find = [&header](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (csv::trim(header[i]) == name) return i;
    return std::nullopt;
  };
  std::map<std::string_view, std::size_t> col;
  for (auto name : kProxyColumns) {
    auto idx = find(name);
    if (!idx) throw Error(ErrorKind::MissingColumn, "missing column \"" + std::string(name) + "\"");
    col[name] = *idx;
  }
  const auto rate_col = find("linear_rate");
  const auto rate_err_col = find("linear_rate_err");

  Dataset raw;
  std::map<std::string, SiteMeta> sites;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw Error(ErrorKind::ParseError, "row " + std::to_string(r) + ": expected " +
                                             std::to_string(header.size()) + " fields, found " +
                                             std::to_string(row.size()));
    auto number = [&](std::string_view name) {
      double v = 0.0;
      if (!csv::to_double(row[col[name]], v))
        throw Error(ErrorKind::ParseError, "row " + std::to_string(r) + ", column " + std::string(name) +
                                               ": cannot parse '" + row[col[name]] + "'");
      return v;
    };
    Observation o;
    o.region = std::string(csv::trim(row[col["Region"]]));
    o.site_id = site_key(csv::trim(row[col["Site"]]), o.region);
    o.latitude = number("Latitude");
    o.longitude = number("Longitude");
    o.rsl = number("RSL");
    o.rsl_err = number("RSL_err");
    o.age = number("Age");
    o.age_err = number("Age_err");
    o.data_type = DataType::ProxyRecord;

    auto [it, inserted] = sites.try_emplace(o.site_id);
    if (inserted) {
      it->second.site_id = o.site_id;
      it->second.latitude = o.latitude;
      it->second.longitude = o.longitude;
      it->second.data_type = DataType::ProxyRecord;
    }
    if (rate_col && rate_err_col && !it->second.linear_rate) {
      double rate = 0.0, err = 0.0;
      const bool has_rate = csv::to_double(row[*rate_col], rate);
      const bool has_err = csv::to_double(row[*rate_err_col], err);
      if (has_rate && has_err) {
        it->second.linear_rate = rate;
        it->second.linear_rate_err = err;
      }
    }
    raw.observations.push_back(std::move(o));
  }
  for (auto& [id, meta] : sites) raw.sites.push_back(std::move(meta));
  return validate_dataset(raw);
}

inline Dataset load_proxy_csv(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::FileNotFound, "no such file '" + path + "'");
  return parse_proxy_csv(csv::read_file(path));
}

/// Site part of a "Site, Region" key.
inline std::string site_name(const Observation& o) {
  const auto suffix = o.region.size() + 2;
  return o.site_id.size() > suffix ? o.site_id.substr(0, o.site_id.size() - suffix) : o.site_id;
}

/// Keeps the sites whose name or full key appears in `names`.
inline Dataset filter_sites(const Dataset& data, const std::vector<std::string>& names) {
  std::set<std::string> wanted(names.begin(), names.end());
  Dataset raw;
  raw.tide_gauges_averaged = data.tide_gauges_averaged;
  std::set<std::string> kept;
  for (const auto& o : data.observations)
    if (wanted.count(site_name(o)) || wanted.count(o.site_id)) {
      raw.observations.push_back(o);
      kept.insert(o.site_id);
    }
  for (const auto& s : data.sites)
    if (kept.count(s.site_id)) raw.sites.push_back(s);
  if (raw.observations.empty()) throw Error(ErrorKind::MissingData, "no observations match the requested sites");
  return validate_dataset(raw);
}

// ---------------------------------------------------------------------------
// PSMSL annual tide-gauge files

inline constexpr long kPsmslMissing = -99999;
inline constexpr double kRlrDatumOffsetMm = 7000.0;

struct StationMeta {
  std::string station_id;
  std::string name;
  double latitude = 0.0;
  double longitude = 0.0;
};

struct AnnualRow {
  int year = 0;
  std::optional<double> rlr_height_mm;  // empty when the file holds the missing sentinel
  int missing_days = 0;
  std::string quality_flag;
};

struct PsmslAnnualRecord {
  std::string station_id;
  std::string station_name;
  double latitude = 0.0;
  double longitude = 0.0;
  std::vector<AnnualRow> rows;

  std::size_t valid_years() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const AnnualRow& r) { return r.rlr_height_mm.has_value(); }));
  }
};

/// Where the public archive serves an annual RLR file. Nothing is downloaded;
/// files are read from a local directory laid out as `<dir>/<id>.rlrdata`.
inline std::string psmsl_annual_url(std::string_view station_id) {
  return "https://psmsl.org/data/obtaining/rlr.annual.data/" + std::string(station_id) + ".rlrdata";
}

/// Parses "year; rlr_mm; missing_days; flag" lines.
inline PsmslAnnualRecord parse_psmsl_annual_text(std::string_view text, const StationMeta& meta) {
  PsmslAnnualRecord rec{meta.station_id, meta.name, meta.latitude, meta.longitude, {}};
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (csv::trim(line).empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto semi = line.find(';', start);
      fields.push_back(line.substr(start, semi == std::string_view::npos ? std::string_view::npos : semi - start));
      if (semi == std::string_view::npos) break;
      start = semi + 1;
    }
    auto malformed = [&](const std::string& why) {
      return Error(ErrorKind::MalformedLine, "line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 4) throw malformed("expected 4 fields, found " + std::to_string(fields.size()));
    long year = 0, height = 0, missing = 0;
    if (!csv::to_long(fields[0], year)) throw malformed("bad year");
    if (!csv::to_long(fields[1], height)) throw malformed("bad height");
    if (!csv::to_long(fields[2], missing)) throw malformed("bad missing-days count");
    if (!rec.rows.empty() && year <= rec.rows.back().year) throw malformed("years must be strictly increasing");
    AnnualRow row;
    row.year = static_cast<int>(year);
    if (height != kPsmslMissing) row.rlr_height_mm = static_cast<double>(height);
    row.missing_days = static_cast<int>(missing);
    row.quality_flag = std::string(csv::trim(fields[3]));
    rec.rows.push_back(std::move(row));
  }
  if (rec.rows.empty()) throw Error(ErrorKind::EmptyFile, "tide-gauge file for '" + meta.name + "' has no data");
  return rec;
}

inline PsmslAnnualRecord parse_psmsl_annual(const std::string& path, const StationMeta& meta) {
  return parse_psmsl_annual_text(csv::read_file(path), meta);
}

/// Station catalogue: CSV with station_id, name, latitude, longitude.
inline std::vector<StationMeta> load_psmsl_catalogue(const std::string& path) {
  auto rows = csv::parse(csv::read_file(path));
  if (rows.empty()) throw Error(ErrorKind::EmptyFile, "catalogue '" + path + "' is empty");
  const auto& h = rows.front();
  auto idx = [&h](std::string_view name) {
    for (std::size_t i = 0; i < h.size(); ++i)
      if (csv::trim(h[i]) == name) return i;
    throw Error(ErrorKind::MissingColumn, "catalogue is missing column \"" + std::string(name) + "\"");
  };
  const auto c_id = idx("station_id"), c_name = idx("name"), c_lat = idx("latitude"), c_lon = idx("longitude");
  std::vector<StationMeta> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != h.size()) throw Error(ErrorKind::ParseError, "catalogue row " + std::to_string(r));
    StationMeta m;
    m.station_id = std::string(csv::trim(row[c_id]));
    m.name = std::string(csv::trim(row[c_name]));
    if (!csv::to_double(row[c_lat], m.latitude) || !csv::to_double(row[c_lon], m.longitude))
      throw Error(ErrorKind::ParseError, "catalogue row " + std::to_string(r) + ": bad coordinates");
    out.push_back(std::move(m));
  }
  return out;
}

/// Reads every catalogued station from a pre-downloaded directory.
inline std::vector<PsmslAnnualRecord> load_psmsl_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const auto catalogue = root / "catalogue.csv";
  if (!fs::exists(catalogue)) throw Error(ErrorKind::FileNotFound, "no catalogue.csv in '" + dir + "'");
  std::vector<PsmslAnnualRecord> out;
  for (const auto& meta : load_psmsl_catalogue(catalogue.string())) {
    const auto file = root / (meta.station_id + ".rlrdata");
    if (!fs::exists(file))
      throw Error(ErrorKind::FileNotFound, "missing '" + file.string() + "' (source: " +
                                               psmsl_annual_url(meta.station_id) + ")");
    out.push_back(parse_psmsl_annual(file.string(), meta));
  }
  return out;
}

struct YearLevel {
  int year = 0;
  double rsl = 0.0;  // metres
};

/// Removes the 7000 mm datum offset and converts to metres; missing years are dropped.
inline std::vector<YearLevel> rlr_to_rsl(const PsmslAnnualRecord& record) {
  std::vector<YearLevel> out;
  for (const auto& r : record.rows)
    if (r.rlr_height_mm) out.push_back({r.year, (*r.rlr_height_mm - kRlrDatumOffsetMm) / 1000.0});
  return out;
}

struct WindowMean {
  double age = 0.0;
  double rsl = 0.0;
  double age_err = 0.0;
  double rsl_err = 0.0;
};

inline constexpr double kTideGaugeRslErrFloor = 0.005;

/// Averages over disjoint calendar windows [k*w, (k+1)*w - 1]. Each non-empty
/// window gives one value at the window midpoint.
inline std::vector<WindowMean> decadal_average(const std::vector<YearLevel>& series, int window_years) {
  if (window_years < 1) throw Error(ErrorKind::InvalidSelection, "averaging window must be at least 1 year");
  if (series.empty()) throw Error(ErrorKind::EmptySeries, "no annual values to average");
  std::map<long, std::vector<double>> bins;
  for (const auto& p : series)
    bins[static_cast<long>(std::floor(static_cast<double>(p.year) / window_years))].push_back(p.rsl);
  std::vector<WindowMean> out;
  const double w = window_years;
  for (const auto& [k, values] : bins) {
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double sd = 0.0;
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      sd = std::sqrt(ss / (n - 1.0));
    }
    out.push_back({static_cast<double>(k) * w + (w - 1.0) / 2.0, mean, w / 4.0, std::max(sd, kTideGaugeRslErrFloor)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tide-gauge selection

struct GaugeSelection {
  std::vector<std::string> named_list;
  bool nearest_to_proxy = false;
  bool all_within_radius = false;
  int min_years = 20;
  double radius_deg = 1.0;
  int sediment_average_years = 10;

  bool any() const { return !named_list.empty() || nearest_to_proxy || all_within_radius; }
};

inline void validate_selection(const GaugeSelection& sel) {
  if (!sel.any()) throw Error(ErrorKind::InvalidSelection, "no tide-gauge selection mechanism enabled");
  if (sel.min_years < 1) throw Error(ErrorKind::InvalidSelection, "min_years must be at least 1");
  if (!(sel.radius_deg > 0.0)) throw Error(ErrorKind::InvalidSelection, "radius_deg must be positive");
  if (sel.sediment_average_years < 1)
    throw Error(ErrorKind::InvalidSelection, "sediment_average_years must be at least 1");
}

inline constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle separation in degrees of arc (haversine).
inline double arc_degrees(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = M_PI / 180.0;
  const double dlat = (lat2 - lat1) * rad, dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * std::asin(std::min(1.0, std::sqrt(a))) / rad;
}

inline double distance_km(double lat1, double lon1, double lat2, double lon2) {
  return arc_degrees(lat1, lon1, lat2, lon2) * M_PI / 180.0 * kEarthRadiusKm;
}

inline std::vector<PsmslAnnualRecord> select_tide_gauges(const std::vector<SiteMeta>& proxy_sites,
                                                         const std::vector<PsmslAnnualRecord>& gauges,
                                                         const GaugeSelection& sel) {
  validate_selection(sel);
  std::set<std::size_t> chosen;
  for (const auto& name : sel.named_list) {
    bool found = false;
    for (std::size_t g = 0; g < gauges.size(); ++g)
      if (gauges[g].station_name == name) {
        chosen.insert(g);
        found = true;
      }
    if (!found) throw Error(ErrorKind::UnknownGaugeName, "no tide gauge named '" + name + "'");
  }
  auto long_enough = [&sel](const PsmslAnnualRecord& g) {
    return g.valid_years() > static_cast<std::size_t>(sel.min_years);
  };
  for (const auto& site : proxy_sites) {
    if (site.data_type != DataType::ProxyRecord) continue;
    std::optional<std::size_t> nearest;
    double best = INFINITY;
    for (std::size_t g = 0; g < gauges.size(); ++g) {
      if (!long_enough(gauges[g])) continue;
      const double d = arc_degrees(site.latitude, site.longitude, gauges[g].latitude, gauges[g].longitude);
      if (sel.all_within_radius && d <= sel.radius_deg) chosen.insert(g);
      if (d < best) {
        best = d;
        nearest = g;
      }
    }
    if (sel.nearest_to_proxy && nearest) chosen.insert(*nearest);
  }
  std::vector<PsmslAnnualRecord> out;
  std::set<std::string> ids;
  for (auto g : chosen)
    if (ids.insert(gauges[g].station_id).second) out.push_back(gauges[g]);
  return out;
}

inline std::string tide_gauge_site_id(const PsmslAnnualRecord& g) {
  return site_key(g.station_name, "PSMSL " + g.station_id);
}

/// Adds window-averaged tide-gauge series to a dataset as TideGaugeData sites.
inline Dataset attach_tide_gauges(const Dataset& data, const std::vector<PsmslAnnualRecord>& gauges,
                                  int window_years) {
  Dataset raw = data;
  for (const auto& g : gauges) {
    const auto series = rlr_to_rsl(g);
    if (series.empty()) continue;
    const auto id = tide_gauge_site_id(g);
    for (const auto& w : decadal_average(series, window_years)) {
      Observation o;
      o.site_id = id;
      o.region = "PSMSL " + g.station_id;
      o.latitude = g.latitude;
      o.longitude = g.longitude;
      o.rsl = w.rsl;
      o.rsl_err = w.rsl_err;
      o.age = w.age;
      o.age_err = w.age_err;
      o.data_type = DataType::TideGaugeData;
      raw.observations.push_back(o);
    }
    SiteMeta meta;
    meta.site_id = id;
    meta.latitude = g.latitude;
    meta.longitude = g.longitude;
    meta.data_type = DataType::TideGaugeData;
    raw.sites.push_back(meta);
  }
  raw.tide_gauges_averaged = true;
  return validate_dataset(raw);
}

// ---------------------------------------------------------------------------
// Linear rates

inline constexpr double kGiaRateErr = 0.3;         // mm/yr, applied to tide-gauge GIA rates
inline constexpr double kPreIndustrialCutoff = 1800.0;

struct LinearFit {
  double slope = 0.0;     // m/yr
  double slope_se = 0.0;  // m/yr
};

/// Weighted least squares of rsl on age. The standard error is scaled by the
/// residual variance so exactly collinear data give zero.
inline LinearFit weighted_slope(const std::vector<const Observation*>& pts) {
  const bool weighted = std::all_of(pts.begin(), pts.end(), [](auto* o) { return o->rsl_err > 0.0; });
  double sw = 0, st = 0, sy = 0;
  for (auto* o : pts) {
    const double w = weighted ? 1.0 / (o->rsl_err * o->rsl_err) : 1.0;
    sw += w;
    st += w * o->age;
    sy += w * o->rsl;
  }
  const double tbar = st / sw, ybar = sy / sw;
  double stt = 0, sty = 0;
  for (auto* o : pts) {
    const double w = weighted ? 1.0 / (o->rsl_err * o->rsl_err) : 1.0;
    stt += w * (o->age - tbar) * (o->age - tbar);
    sty += w * (o->age - tbar) * (o->rsl - ybar);
  }
  if (!(stt > 0.0)) throw Error(ErrorKind::DegenerateRange, "all ages identical; slope undefined");
  LinearFit fit;
  fit.slope = sty / stt;
  double rss = 0.0;
  for (auto* o : pts) {
    const double w = weighted ? 1.0 / (o->rsl_err * o->rsl_err) : 1.0;
    const double r = o->rsl - ybar - fit.slope * (o->age - tbar);
    rss += w * r * r;
  }
  const double dof = static_cast<double>(pts.size()) - 2.0;
  fit.slope_se = dof > 0 ? std::sqrt(rss / dof / stt) : 0.0;
  return fit;
}

// Keeps the metadata invariant linear_rate_err > 0 for noise-free records.
inline constexpr double kMinRateErr = 1e-6;  // mm/yr

/// Fills missing per-site linear rates (mm/yr). Proxy sites use a weighted
/// slope over pre-1800 CE data when at least 3 such points exist; tide gauges
/// take the GIA table value with a fixed 0.3 mm/yr error.
inline Dataset estimate_linear_rates(const Dataset& data,
                                     const std::map<std::string, double>& gia_table = {}) {
  Dataset out = data;
  for (auto& site : out.sites) {
    if (site.linear_rate && site.linear_rate_err) continue;
    std::vector<const Observation*> all, early;
    for (const auto& o : data.observations)
      if (o.site_id == site.site_id) {
        all.push_back(&o);
        if (o.age <= kPreIndustrialCutoff) early.push_back(&o);
      }
    if (site.data_type == DataType::TideGaugeData) {
      if (auto it = gia_table.find(site.site_id); it != gia_table.end()) {
        site.linear_rate = it->second;
        site.linear_rate_err = kGiaRateErr;
        continue;
      }
      if (all.size() < 3)
        throw Error(ErrorKind::InsufficientData, "tide gauge '" + site.site_id + "' has no GIA rate and too few points");
      const auto fit = weighted_slope(all);
      site.linear_rate = fit.slope * 1000.0;
      site.linear_rate_err = std::max(fit.slope_se * 1000.0, kGiaRateErr);
      continue;
    }
    const auto& pts = early.size() >= 3 ? early : all;
    if (pts.size() < 3)
      throw Error(ErrorKind::InsufficientData, "site '" + site.site_id + "' needs at least 3 points for a linear rate");
    const auto fit = weighted_slope(pts);
    site.linear_rate = fit.slope * 1000.0;
    site.linear_rate_err = std::max(fit.slope_se * 1000.0, kMinRateErr);
  }
  return out;
}

}  // namespace rsl

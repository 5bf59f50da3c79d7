#pragma once

// Fit artifacts on disk: draws, field summaries, observation boxes and the
// run manifest, as RFC 4180 CSV or newline-delimited JSON.

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsl/core.hpp"
#include "rsl/csv.hpp"
#include "rsl/diagnostics.hpp"
#include "rsl/ingestion.hpp"
#include "rsl/sampler.hpp"

namespace rsl {

using json = nlohmann::json;

enum class Format { Csv, Json };

inline Format parse_format(std::string_view s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  throw Error(ErrorKind::InvalidSpec, "unknown format '" + std::string(s) + "' (expected csv or json)");
}

inline std::string extension(Format f) { return f == Format::Csv ? ".csv" : ".json"; }

namespace detail {

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Writes a table as CSV with a header row, or as one JSON object per row.
class TableWriter {
 public:
  TableWriter(std::ostream& os, Format f, std::vector<std::string> columns)
      : os_(os), format_(f), columns_(std::move(columns)) {
    if (format_ == Format::Csv) os_ << csv::join(columns_) << '\n';
  }

  struct Cell {
    std::string text;
    json value;
  };
  static Cell text(std::string s) { return {s, json(s)}; }
  static Cell num(double v) { return {csv::format(v), number(v)}; }
  static Cell integer(long v) { return {std::to_string(v), json(v)}; }

  void row(const std::vector<Cell>& cells) {
    if (format_ == Format::Csv) {
      std::vector<std::string> f;
      for (const auto& c : cells) f.push_back(c.text);
      os_ << csv::join(f) << '\n';
    } else {
      json obj = json::object();
      for (std::size_t i = 0; i < cells.size(); ++i) obj[columns_[i]] = cells[i].value;
      os_ << obj.dump() << '\n';
    }
  }

 private:
  std::ostream& os_;
  Format format_;
  std::vector<std::string> columns_;
};

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorKind::FileNotFound, "cannot write '" + p.string() + "'");
  return os;
}

}  // namespace detail

/// Retained draws in reporting units. Without `full` only the summary
/// parameters are written.
inline void write_draws(std::ostream& os, const PosteriorDraws& draws, Format f, bool full) {
  std::vector<Eigen::Index> cols;
  std::vector<std::string> header{"chain", "draw"};
  for (std::size_t i = 0; i < draws.parameters.size(); ++i)
    if (full || draws.parameters[i].summary) {
      cols.push_back(static_cast<Eigen::Index>(i));
      header.push_back(draws.parameters[i].name);
    }
  detail::TableWriter w(os, f, header);
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    const auto& m = draws.chains[c];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<detail::TableWriter::Cell> cells{detail::TableWriter::integer(static_cast<long>(c + 1)),
                                                   detail::TableWriter::integer(r + 1)};
      for (auto k : cols)
        cells.push_back(
            detail::TableWriter::num(draws.transform.to_natural(m(r, k), draws.parameters[static_cast<std::size_t>(k)].unit)));
      w.row(cells);
    }
  }
}

inline constexpr std::string_view kFieldColumns[] = {"SiteName", "Age", "component", "mean", "lower", "upper", "unit"};

inline void write_field_rows(std::ostream& os, const std::vector<FieldRow>& rows, Format f) {
  detail::TableWriter w(os, f, {std::begin(kFieldColumns), std::end(kFieldColumns)});
  using T = detail::TableWriter;
  for (const auto& r : rows)
    w.row({T::text(r.site_id), T::num(r.age), T::text(std::string(to_string(r.component))), T::num(r.mean),
           T::num(r.lower), T::num(r.upper), T::text(std::string(unit_of(r.component)))});
}

/// Observation uncertainty boxes: age +- age_err by rsl +- rsl_err.
inline void write_observations(std::ostream& os, const Dataset& data, Format f) {
  detail::TableWriter w(os, f,
                        {"SiteName", "data_type", "Age", "Age_err", "RSL", "RSL_err", "age_lower", "age_upper",
                         "rsl_lower", "rsl_upper"});
  using T = detail::TableWriter;
  for (const auto& o : data.observations)
    w.row({T::text(o.site_id), T::text(std::string(to_string(o.data_type))), T::num(o.age), T::num(o.age_err),
           T::num(o.rsl), T::num(o.rsl_err), T::num(o.age - o.age_err), T::num(o.age + o.age_err),
           T::num(o.rsl - o.rsl_err), T::num(o.rsl + o.rsl_err)});
}

inline void write_summary(std::ostream& os, const DrawSummary& s, Format f) {
  detail::TableWriter w(os, f, {std::begin(kSummaryColumns), std::end(kSummaryColumns)});
  using T = detail::TableWriter;
  for (const auto& r : s.rows)
    w.row({T::text(r.variable), T::num(r.mean), T::num(r.sd), T::num(r.mad), T::num(r.q5), T::num(r.q95),
           T::num(r.rhat)});
}

/// Fixed-width console table with the verdict on the last line.
inline void print_summary(std::ostream& os, const DrawSummary& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %12s %12s %12s %12s %12s %8s\n", "variable", "mean", "sd", "mad", "q5", "q95",
                "rhat");
  os << buf;
  for (const auto& r : s.rows) {
    std::snprintf(buf, sizeof buf, "%-16s %12.5g %12.5g %12.5g %12.5g %12.5g %8.4f\n", r.variable.c_str(), r.mean,
                  r.sd, r.mad, r.q5, r.q95, r.rhat);
    os << buf;
  }
  os << s.verdict << '\n';
}

inline std::vector<FieldRow> parse_field_rows(std::string_view text, Format f) {
  std::vector<FieldRow> out;
  auto make = [](const std::string& site, double age, const std::string& comp, double mean, double lo, double hi) {
    return FieldRow{site, age, parse_component(comp), mean, lo, hi};
  };
  if (f == Format::Csv) {
    const auto rows = csv::parse(text);
    if (rows.empty()) throw Error(ErrorKind::EmptyFile, "fields file is empty");
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[rows[0][i]] = i;
    for (auto c : kFieldColumns)
      if (!col.count(std::string(c))) throw Error(ErrorKind::MissingColumn, "missing column \"" + std::string(c) + "\"");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& x = rows[r];
      auto get = [&](const char* c) { return x.at(col.at(c)); };
      auto num = [&](const char* c) {
        double v = 0.0;
        const auto& t = get(c);
        if (t == "NaN") return static_cast<double>(NAN);
        if (t == "Inf" || t == "-Inf") return t[0] == '-' ? -HUGE_VAL : HUGE_VAL;
        if (!csv::to_double(t, v)) throw Error(ErrorKind::ParseError, "row " + std::to_string(r) + ", column " + c);
        return v;
      };
      out.push_back(make(get("SiteName"), num("Age"), get("component"), num("mean"), num("lower"), num("upper")));
    }
    return out;
  }
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (csv::trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      auto num = [&](const char* k) { return j.at(k).is_null() ? NAN : j.at(k).get<double>(); };
      out.push_back(make(j.at("SiteName").get<std::string>(), num("Age"), j.at("component").get<std::string>(),
                         num("mean"), num("lower"), num("upper")));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::MalformedLine, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::string read_text(const std::filesystem::path& p) { return csv::read_file(p.string()); }

// ---------------------------------------------------------------------------
// Run manifest

inline json spec_to_json(const ModelSpec& s) {
  return {{"model_type", to_string(s.model_type)},
          {"n_cp", s.n_cp},
          {"knots_time", s.knots_time},
          {"knots_tensor_time", s.knots_tensor_time},
          {"knots_lon", s.knots_lon},
          {"knots_lat", s.knots_lat},
          {"n_chains", s.n_chains},
          {"n_iterations", s.n_iterations},
          {"n_burnin", s.n_burnin},
          {"thin", s.thin},
          {"ci_level", s.ci_level},
          {"grid_resolution_years", s.grid_resolution_years},
          {"rng_seed", s.rng_seed}};
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.model_type = parse_model_type(j.at("model_type").get<std::string>());
  s.n_cp = j.at("n_cp").get<int>();
  s.knots_time = j.at("knots_time").get<int>();
  s.knots_tensor_time = j.at("knots_tensor_time").get<int>();
  s.knots_lon = j.at("knots_lon").get<int>();
  s.knots_lat = j.at("knots_lat").get<int>();
  s.n_chains = j.at("n_chains").get<int>();
  s.n_iterations = j.at("n_iterations").get<int>();
  s.n_burnin = j.at("n_burnin").get<int>();
  s.thin = j.at("thin").get<int>();
  s.ci_level = j.at("ci_level").get<double>();
  s.grid_resolution_years = j.at("grid_resolution_years").get<double>();
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return s;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct RunManifest {
  ModelSpec spec;
  std::uint64_t data_fingerprint = 0;
  double wall_time_seconds = 0.0;
  std::string format = "csv";
  std::map<std::string, std::string> config;  // every effective option, as given on the command line
  int noisy_input_passes = 1;
  std::size_t median_fallback_rows = 0;
  std::string verdict;
  std::map<std::string, double> acceptance;
};

inline json manifest_to_json(const RunManifest& m) {
  return {{"spec", spec_to_json(m.spec)},
          {"seed", m.spec.rng_seed},
          {"data_fingerprint", hex64(m.data_fingerprint)},
          {"wall_time_seconds", m.wall_time_seconds},
          {"format", m.format},
          {"config", m.config},
          {"noisy_input_passes", m.noisy_input_passes},
          {"median_fallback_rows", m.median_fallback_rows},
          {"verdict", m.verdict},
          {"acceptance", m.acceptance}};
}

inline RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.spec = spec_from_json(j.at("spec"));
  m.data_fingerprint = std::stoull(j.at("data_fingerprint").get<std::string>(), nullptr, 16);
  m.wall_time_seconds = j.at("wall_time_seconds").get<double>();
  m.format = j.at("format").get<std::string>();
  m.config = j.at("config").get<std::map<std::string, std::string>>();
  m.noisy_input_passes = j.value("noisy_input_passes", 1);
  m.median_fallback_rows = j.value("median_fallback_rows", std::size_t{0});
  m.verdict = j.value("verdict", std::string{});
  m.acceptance = j.value("acceptance", std::map<std::string, double>{});
  return m;
}

inline void write_manifest(const std::filesystem::path& p, const RunManifest& m) {
  auto os = detail::open_output(p);
  os << manifest_to_json(m).dump(2) << '\n';
}

inline RunManifest read_manifest(const std::filesystem::path& p) {
  try {
    return manifest_from_json(json::parse(read_text(p)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, "manifest '" + p.string() + "': " + e.what());
  }
}

}  // namespace rsl

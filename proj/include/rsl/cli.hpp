#pragma once

// The rsl-bayes command line: inspect, fit and export.
//
// Exit codes: 0 success, 1 usage, 2 data or model mismatch, 3 numerical failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsl/core.hpp"
#include "rsl/diagnostics.hpp"
#include "rsl/fit.hpp"
#include "rsl/ingestion.hpp"
#include "rsl/io.hpp"
#include "rsl/posterior.hpp"

namespace rsl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

inline constexpr const char* kSeedEnv = "RSL_BAYES_SEED";

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::NumericalFailure: return kExitNumeric;
    case ErrorKind::InvalidSpec:
    case ErrorKind::InvalidSelection:
    case ErrorKind::UnknownPlotType:
    case ErrorKind::NonPositiveResolution: return kExitUsage;
    default: return kExitData;
  }
}

// ---------------------------------------------------------------------------
// Plot types

struct PlotType {
  std::string_view name;
  Component component;
};

inline constexpr PlotType kPlotTypes[] = {
    {"model_fit_plot", Component::Total},
    {"rate_plot", Component::RateTotal},
    {"regional_plot", Component::Regional},
    {"regional_rate_plot", Component::RateRegional},
    {"linear_local_plot", Component::LinearLocal},
    {"offset_plot", Component::Offset},
    {"nonlinear_local_plot", Component::NonlinearLocal},
    {"nonlinear_local_rate_plot", Component::RateNonlinearLocal},
};

inline std::string plot_type_names() {
  std::string s;
  for (const auto& p : kPlotTypes) s += (s.empty() ? "" : ", ") + std::string(p.name);
  return s;
}

inline Component plot_component(std::string_view name) {
  for (const auto& p : kPlotTypes)
    if (p.name == name) return p.component;
  throw Error(ErrorKind::UnknownPlotType, "'" + std::string(name) + "' (valid: " + plot_type_names() + ")");
}

// ---------------------------------------------------------------------------

struct RunConfig {
  std::string subcommand;
  std::string proxy_csv;
  std::string psmsl_dir;
  std::vector<std::string> tide_gauges;  // nearest, within, within<R>deg
  std::vector<std::string> gauge_names;
  int gauge_min_years = 20;
  double gauge_radius_deg = 1.0;
  int average_years = 10;
  std::vector<std::string> sites;
  bool linear_rates = false;
  std::string gia_table;
  std::string model = "ni_spline_t";
  ModelSpec spec;
  std::optional<std::uint64_t> seed;
  std::string output_dir = "rsl_output";
  bool output_given = false;
  std::string fit_dir = "rsl_output";
  std::string format = "csv";
  bool format_given = false;
  bool full_draws = false;
  std::vector<std::string> plots;

  /// Effective settings as option-name -> value, recorded in the manifest.
  std::map<std::string, std::string> as_map() const {
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
      return s;
    };
    auto num = [](double v) { return csv::format(v); };
    return {{"proxy", proxy_csv},
            {"psmsl-dir", psmsl_dir},
            {"tide-gauges", list(tide_gauges)},
            {"gauge-names", list(gauge_names)},
            {"gauge-min-years", std::to_string(gauge_min_years)},
            {"gauge-radius", num(gauge_radius_deg)},
            {"average-years", std::to_string(average_years)},
            {"sites", list(sites)},
            {"linear-rates", linear_rates ? "true" : "false"},
            {"gia", gia_table},
            {"model", model},
            {"n-cp", std::to_string(spec.n_cp)},
            {"knots-time", std::to_string(spec.knots_time)},
            {"knots-tensor-time", std::to_string(spec.knots_tensor_time)},
            {"knots-lon", std::to_string(spec.knots_lon)},
            {"knots-lat", std::to_string(spec.knots_lat)},
            {"chains", std::to_string(spec.n_chains)},
            {"iterations", std::to_string(spec.n_iterations)},
            {"burnin", std::to_string(spec.n_burnin)},
            {"thin", std::to_string(spec.thin)},
            {"ci", num(spec.ci_level)},
            {"grid-resolution", num(spec.grid_resolution_years)},
            {"seed", std::to_string(spec.rng_seed)},
            {"format", format},
            {"full-draws", full_draws ? "true" : "false"}};
  }
};

inline GaugeSelection gauge_selection(const RunConfig& c) {
  GaugeSelection sel;
  sel.named_list = c.gauge_names;
  sel.min_years = c.gauge_min_years;
  sel.radius_deg = c.gauge_radius_deg;
  sel.sediment_average_years = c.average_years;
  for (const auto& t : c.tide_gauges) {
    if (t == "nearest") sel.nearest_to_proxy = true;
    else if (t == "within" || t == "all") sel.all_within_radius = true;
    else if (t.starts_with("within") && t.ends_with("deg")) {
      double r = 0.0;
      if (!csv::to_double(std::string_view(t).substr(6, t.size() - 9), r))
        throw Error(ErrorKind::InvalidSelection, "cannot read a radius from '" + t + "'");
      sel.all_within_radius = true;
      sel.radius_deg = r;
    } else
      throw Error(ErrorKind::InvalidSelection,
                  "unknown tide-gauge selection '" + t + "' (expected nearest, within or within<R>deg)");
  }
  return sel;
}

/// GIA table: CSV with columns station (name or PSMSL id) and rate (mm/yr).
inline std::map<std::string, double> load_gia_table(const std::string& path, const Dataset& data) {
  const auto rows = csv::parse(csv::read_file(path));
  if (rows.empty()) throw Error(ErrorKind::EmptyFile, "GIA table '" + path + "' is empty");
  std::optional<std::size_t> cs, cr;
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    if (rows[0][i] == "station") cs = i;
    if (rows[0][i] == "rate") cr = i;
  }
  if (!cs) throw Error(ErrorKind::MissingColumn, "missing column \"station\"");
  if (!cr) throw Error(ErrorKind::MissingColumn, "missing column \"rate\"");
  std::map<std::string, double> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::string station(csv::trim(rows[r].at(*cs)));
    double rate = 0.0;
    if (!csv::to_double(rows[r].at(*cr), rate))
      throw Error(ErrorKind::ParseError, "GIA table row " + std::to_string(r) + ", column rate");
    for (const auto& s : data.sites)
      if (s.data_type == DataType::TideGaugeData &&
          (s.site_id == station || s.site_id.starts_with(station + ", PSMSL ") || s.site_id.ends_with(", PSMSL " + station)))
        out[s.site_id] = rate;
  }
  return out;
}

inline Dataset load_data(const RunConfig& c) {
  if (c.proxy_csv.empty()) throw Error(ErrorKind::InvalidSpec, "--proxy is required");
  Dataset d = load_proxy_csv(c.proxy_csv);
  if (!c.sites.empty()) d = filter_sites(d, c.sites);
  if (!c.tide_gauges.empty() || !c.gauge_names.empty()) {
    if (c.psmsl_dir.empty()) throw Error(ErrorKind::InvalidSelection, "tide-gauge selection needs --psmsl-dir");
    const auto sel = gauge_selection(c);
    const auto all = load_psmsl_directory(c.psmsl_dir);
    d = attach_tide_gauges(d, select_tide_gauges(d.sites, all, sel), sel.sediment_average_years);
  }
  if (c.linear_rates) {
    const auto gia = c.gia_table.empty() ? std::map<std::string, double>{} : load_gia_table(c.gia_table, d);
    d = estimate_linear_rates(d, gia);
  }
  return d;
}

inline int cmd_inspect(const RunConfig& c, std::ostream& out) {
  out << describe(load_data(c));
  return kExitOk;
}

inline int cmd_fit(const RunConfig& c, std::ostream& out) {
  namespace fs = std::filesystem;
  const Format fmt = parse_format(c.format);
  validate_spec(c.spec);
  const Dataset data = load_data(c);
  const PredictionGrid grid = build_prediction_grid(data, c.spec.grid_resolution_years);

  const auto t0 = std::chrono::steady_clock::now();
  const FitResult fit = fit_model(c.spec, data, grid);
  std::vector<FieldRow> rows;
  std::size_t fallback = 0;
  for (const auto& f : all_fields(fit.draws, fit.graph)) {
    auto bands = credible_bands(f, c.spec.ci_level);
    fallback += bands.median_fallback_rows;
    rows.insert(rows.end(), std::make_move_iterator(bands.rows.begin()), std::make_move_iterator(bands.rows.end()));
  }
  const DrawSummary summary = summarize_draws(fit.draws);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::FileNotFound, "cannot create output directory '" + dir.string() + "'");
  const std::string ext = extension(fmt);
  {
    auto os = detail::open_output(dir / ("draws" + ext));
    write_draws(os, fit.draws, fmt, c.full_draws);
  }
  {
    auto os = detail::open_output(dir / ("fields" + ext));
    write_field_rows(os, rows, fmt);
  }
  {
    auto os = detail::open_output(dir / ("observations" + ext));
    write_observations(os, data, fmt);
  }
  {
    auto os = detail::open_output(dir / ("summary" + ext));
    write_summary(os, summary, fmt);
  }
  RunManifest m;
  m.spec = c.spec;
  m.data_fingerprint = fit.graph.data_fingerprint;
  m.wall_time_seconds = wall;
  m.format = c.format;
  m.config = c.as_map();
  m.noisy_input_passes = fit.passes;
  m.median_fallback_rows = fallback;
  m.verdict = summary.verdict;
  m.acceptance = fit.draws.acceptance;
  write_manifest(dir / "run_manifest.json", m);

  out << model_label(c.spec.model_type) << " (" << to_string(c.spec.model_type) << ")\n";
  print_summary(out, summary);
  return kExitOk;
}

inline int cmd_export(const RunConfig& c, std::ostream& out) {
  namespace fs = std::filesystem;
  const fs::path fit_dir(c.fit_dir);
  const auto manifest_path = fit_dir / "run_manifest.json";
  if (!fs::exists(manifest_path))
    throw Error(ErrorKind::FileNotFound, "no run_manifest.json in '" + fit_dir.string() + "'; run fit first");
  const RunManifest m = read_manifest(manifest_path);
  const Format in_fmt = parse_format(m.format);
  const Format out_fmt = c.format_given ? parse_format(c.format) : in_fmt;
  const auto rows = parse_field_rows(read_text(fit_dir / ("fields" + extension(in_fmt))), in_fmt);

  std::vector<Component> available;
  for (const auto& r : rows)
    if (std::find(available.begin(), available.end(), r.component) == available.end()) available.push_back(r.component);
  auto has = [&](Component comp) { return std::find(available.begin(), available.end(), comp) != available.end(); };

  std::vector<std::string> plots = c.plots;
  if (plots.empty())
    for (const auto& p : kPlotTypes)
      if (has(p.component)) plots.emplace_back(p.name);
  std::vector<std::pair<std::string, Component>> todo;
  for (const auto& p : plots) {
    const Component comp = plot_component(p);
    if (!has(comp)) {
      std::string avail;
      for (const auto& q : kPlotTypes)
        if (has(q.component)) avail += (avail.empty() ? "" : ", ") + std::string(q.name);
      throw Error(ErrorKind::UnknownPlotType, "'" + p + "' is not available for " +
                                                  std::string(to_string(m.spec.model_type)) + " (available: " + avail + ")");
    }
    todo.emplace_back(p, comp);
  }

  const fs::path dir = c.output_given ? fs::path(c.output_dir) : fit_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::FileNotFound, "cannot create output directory '" + dir.string() + "'");
  for (const auto& [name, comp] : todo) {
    std::vector<FieldRow> sel;
    for (const auto& r : rows)
      if (r.component == comp) sel.push_back(r);
    auto os = detail::open_output(dir / (name + extension(out_fmt)));
    write_field_rows(os, sel, out_fmt);
    out << name << extension(out_fmt) << ": " << sel.size() << " rows\n";
  }
  // observation boxes for overlaying on any of the plots
  const auto obs_in = fit_dir / ("observations" + extension(in_fmt));
  if (fs::exists(obs_in)) {
    const auto obs_out = dir / ("data_overlay" + extension(in_fmt));
    fs::copy_file(obs_in, obs_out, fs::copy_options::overwrite_existing, ec);
    if (ec) throw Error(ErrorKind::FileNotFound, "cannot write '" + obs_out.string() + "'");
    out << obs_out.filename().string() << "\n";
  }
  return kExitOk;
}

/// Parses arguments and runs one subcommand, reporting errors on `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian models of relative sea-level change with bivariate measurement error", "rsl-bayes"};
  app.set_config("--config", "", "File of key=value lines using long option names; flags override it");
  app.require_subcommand(1);
  RunConfig c;
  std::string model = c.model;

  app.add_option("--proxy", c.proxy_csv, "Proxy CSV (Region, Site, Latitude, Longitude, RSL, RSL_err, Age, Age_err)");
  app.add_option("--psmsl-dir", c.psmsl_dir, "Directory with catalogue.csv and <id>.rlrdata annual files");
  app.add_option("--tide-gauges", c.tide_gauges, "Gauge selection: nearest, within, within<R>deg")->delimiter(',');
  app.add_option("--gauge-names", c.gauge_names, "Tide gauges to include by station name")->delimiter(',');
  app.add_option("--gauge-min-years", c.gauge_min_years, "Minimum number of valid annual values");
  app.add_option("--gauge-radius", c.gauge_radius_deg, "Search radius in degrees for 'within'");
  app.add_option("--average-years", c.average_years, "Tide-gauge averaging window in years");
  app.add_option("--sites", c.sites, "Restrict to these sites (name or 'Site, Region')")->delimiter(',');
  app.add_flag("--linear-rates", c.linear_rates, "Estimate per-site linear rates (needed by ni_gam_decomp)");
  app.add_option("--gia", c.gia_table, "CSV of tide-gauge GIA rates with columns station, rate (mm/yr)");
  app.add_option("--model", model, "eiv_slr_t, eiv_cp_t, eiv_igp_t, ni_spline_t, ni_spline_st or ni_gam_decomp");
  app.add_option("--n-cp", c.spec.n_cp, "Number of change points (1-3)");
  app.add_option("--knots-time", c.spec.knots_time, "Basis size in time");
  app.add_option("--knots-tensor-time", c.spec.knots_tensor_time, "Time basis size of the space-time tensor");
  app.add_option("--knots-lon", c.spec.knots_lon, "Longitude basis size");
  app.add_option("--knots-lat", c.spec.knots_lat, "Latitude basis size");
  app.add_option("--chains", c.spec.n_chains, "Number of chains");
  app.add_option("--iterations", c.spec.n_iterations, "Iterations per chain, burn-in included");
  app.add_option("--burnin", c.spec.n_burnin, "Burn-in iterations");
  app.add_option("--thin", c.spec.thin, "Thinning interval");
  app.add_option("--ci", c.spec.ci_level, "Credible interval level");
  app.add_option("--grid-resolution", c.spec.grid_resolution_years, "Prediction grid step in years");
  auto* seed_opt = app.add_option("--seed", c.seed, "Random seed (falls back to $" + std::string(kSeedEnv) + ")");
  auto* out_opt = app.add_option("-o,--output", c.output_dir, "Output directory");
  app.add_option("--fit-dir", c.fit_dir, "Directory of a previous fit (export)");
  auto* fmt_opt = app.add_option("--format", c.format, "csv or json");
  app.add_flag("--full-draws", c.full_draws, "Write every parameter to the draws file");
  app.add_option("--plot", c.plots, "Plot types to export: " + plot_type_names())->delimiter(',');

  for (const auto& [name, help] : {std::pair{"inspect", "Validate and describe the input data"},
                                   std::pair{"fit", "Fit a model and write draws, fields and a summary"},
                                   std::pair{"export", "Write plot-ready tables from a fit"}})
    app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }
  c.subcommand = app.get_subcommands().front()->get_name();
  c.output_given = out_opt->count() > 0;
  c.format_given = fmt_opt->count() > 0;

  try {
    c.model = model;
    c.spec.model_type = parse_model_type(model);
    if (!c.seed && seed_opt->count() == 0)
      if (const char* env = std::getenv(kSeedEnv)) {
        long v = 0;
        if (!csv::to_long(env, v) || v < 0)
          throw Error(ErrorKind::InvalidSpec, std::string(kSeedEnv) + " must be a non-negative integer");
        c.seed = static_cast<std::uint64_t>(v);
      }
    if (c.seed) c.spec.rng_seed = *c.seed;
    if (c.subcommand == "inspect") return cmd_inspect(c, out);
    if (c.subcommand == "fit") return cmd_fit(c, out);
    return cmd_export(c, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace rsl::cli

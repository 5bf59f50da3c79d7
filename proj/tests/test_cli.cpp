#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rsl/cli.hpp"
#include "support.hpp"

using namespace rsl;
using rsl::test::fixture;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "rsl-bayes");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("rsl_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<std::string> cedar_fit(const std::string& out) const {
    return {"fit", "--proxy", fixture("naac_synthetic.csv"), "--sites", "Cedar Island", "--model", "ni_spline_t",
            "--iterations", "400", "--burnin", "200", "--thin", "2", "--chains", "2", "-o", out};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, InspectCedarIsland) {
  const auto r = run({"inspect", "--proxy", fixture("naac_synthetic.csv"), "--sites", "Cedar Island"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("104 observations and 1 site(s)"), std::string::npos);
  EXPECT_NE(r.out.find("1 proxy site(s) and 0 tide gauge site(s)"), std::string::npos);
}

TEST_F(CliTest, InspectWithTideGauges) {
  std::string sites = "Cedar Island,Nassau,East River Marsh,Swan Key,Placentia,Pelham Bay,Fox Hill Marsh,"
                      "Snipe Key,Big River Marsh";
  const auto r = run({"inspect", "--proxy", fixture("naac_synthetic.csv"), "--sites", sites, "--tide-gauges",
                      "nearest,within1deg", "--psmsl-dir", fixture("psmsl"), "--linear-rates", "--gia",
                      fixture("psmsl/gia.csv")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1130 observations and 35 site(s)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("9 proxy site(s) and 26 tide gauge site(s)"), std::string::npos);
  EXPECT_NE(r.out.find("The linear_rate and linear_rate_err has been included."), std::string::npos);
}

TEST_F(CliTest, MissingFileExitsTwo) {
  const auto r = run({"inspect", "--proxy", "/no/such/file.csv"});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("/no/such/file.csv"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"fit", "--no-such-flag"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"fit", "--proxy", fixture("naac_synthetic.csv"), "--model", "nope"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"inspect", "--proxy", fixture("naac_synthetic.csv"), "--ci", "2"}).code, 0);
  EXPECT_EQ(run({"fit", "--proxy", fixture("naac_synthetic.csv"), "--ci", "2"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, ExitCodeMapping) {
  EXPECT_EQ(cli::exit_code_for(ErrorKind::NumericalFailure), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::InvalidSpec), 1);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::UnknownPlotType), 1);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::MissingColumn), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorKind::ModelDataMismatch), 2);
}

TEST_F(CliTest, GamWithoutRatesExitsTwo) {
  const auto r = run({"fit", "--proxy", fixture("naac_synthetic.csv"), "--sites", "Cedar Island,Nassau", "--model",
                      "ni_gam_decomp", "-o", path("gam")});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("required for the ni_gam_decomp model"), std::string::npos) << r.err;
}

TEST_F(CliTest, FitWritesArtifactsAndIsDeterministic) {
  auto a = cedar_fit(path("a"));
  a.insert(a.end(), {"--seed", "1"});
  const auto r1 = run(a);
  ASSERT_EQ(r1.code, 0) << r1.err;
  for (const char* f : {"draws.csv", "fields.csv", "observations.csv", "summary.csv", "run_manifest.json"})
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
  EXPECT_NE(r1.out.find("sigma_beta"), std::string::npos);
  EXPECT_NE(r1.out.find("sigma_y"), std::string::npos);
  EXPECT_NE(r1.out.find("onvergence issues detected"), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "a" / "summary.csv").substr(0, 32), "variable,mean,sd,mad,q5,q95,rhat");

  auto b = cedar_fit(path("b"));
  b.insert(b.end(), {"--seed", "1"});
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "draws.csv"), slurp(dir_ / "b" / "draws.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "fields.csv"), slurp(dir_ / "b" / "fields.csv"));

  auto c = cedar_fit(path("c"));
  c.insert(c.end(), {"--seed", "2"});
  ASSERT_EQ(run(c).code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "draws.csv"), slurp(dir_ / "c" / "draws.csv"));

  const auto m = read_manifest(dir_ / "a" / "run_manifest.json");
  EXPECT_EQ(m.spec.rng_seed, 1u);
  EXPECT_EQ(m.noisy_input_passes, 2);
  EXPECT_EQ(m.spec.model_type, ModelType::NiSplineT);
}

TEST_F(CliTest, SeedFromEnvironment) {
  auto a = cedar_fit(path("a"));
  a.insert(a.end(), {"--seed", "5"});
  ASSERT_EQ(run(a).code, 0);
  ::setenv(cli::kSeedEnv, "5", 1);
  const auto r = run(cedar_fit(path("b")));
  ::unsetenv(cli::kSeedEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "a" / "draws.csv"), slurp(dir_ / "b" / "draws.csv"));
  ::setenv(cli::kSeedEnv, "abc", 1);
  const auto bad = run(cedar_fit(path("c")));
  ::unsetenv(cli::kSeedEnv);
  EXPECT_EQ(bad.code, cli::kExitUsage);
}

TEST_F(CliTest, ConfigFile) {
  {
    std::ofstream cfg(path("run.ini"));
    cfg << "proxy=" << fixture("naac_synthetic.csv") << "\nsites=\"Cedar Island\"\nmodel=eiv_slr_t\niterations=300\n"
        << "burnin=100\nthin=1\nchains=2\nseed=3\n";
  }
  const auto r = run({"fit", "--config", path("run.ini"), "-o", path("out")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = read_manifest(dir_ / "out" / "run_manifest.json");
  EXPECT_EQ(m.spec.model_type, ModelType::EivSlrT);
  EXPECT_EQ(m.spec.n_iterations, 300);
  EXPECT_EQ(m.spec.rng_seed, 3u);
  EXPECT_NE(r.out.find("alpha"), std::string::npos);
}

TEST_F(CliTest, ExportPlots) {
  ASSERT_EQ(run(cedar_fit(path("fit"))).code, 0);
  const auto r = run({"export", "--fit-dir", path("fit"), "--plot", "rate_plot", "-o", path("plots")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_field_rows(slurp(dir_ / "plots" / "rate_plot.csv"), Format::Csv);
  ASSERT_FALSE(rows.empty());
  for (const auto& row : rows) EXPECT_EQ(row.component, Component::RateTotal);
  EXPECT_NE(slurp(dir_ / "plots" / "rate_plot.csv").find("mm/yr"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "plots" / "data_overlay.csv"));

  const auto bad = run({"export", "--fit-dir", path("fit"), "--plot", "regional_plot"});
  EXPECT_EQ(bad.code, cli::kExitUsage);
  EXPECT_NE(bad.err.find("regional_plot"), std::string::npos);
  EXPECT_EQ(run({"export", "--fit-dir", path("fit"), "--plot", "bogus_plot"}).code, cli::kExitUsage);

  const auto all = run({"export", "--fit-dir", path("fit"), "--format", "json"});
  ASSERT_EQ(all.code, 0) << all.err;
  EXPECT_TRUE(fs::exists(dir_ / "fit" / "model_fit_plot.json"));
  EXPECT_TRUE(fs::exists(dir_ / "fit" / "rate_plot.json"));
  EXPECT_EQ(run({"export", "--fit-dir", path("nowhere")}).code, cli::kExitData);
}

TEST_F(CliTest, GamFitAndRegionalExport) {
  const auto fit = run({"fit", "--proxy", fixture("naac_synthetic.csv"), "--sites", "Cedar Island,Nassau",
                        "--linear-rates", "--model", "ni_gam_decomp", "--iterations", "300", "--burnin", "100",
                        "--thin", "1", "--chains", "2", "--format", "json", "-o", path("gam")});
  ASSERT_EQ(fit.code, 0) << fit.err;
  const auto r = run({"export", "--fit-dir", path("gam"), "--plot", "regional_rate_plot,nonlinear_local_plot"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_field_rows(slurp(dir_ / "gam" / "regional_rate_plot.json"), Format::Json);
  ASSERT_FALSE(rows.empty());
  for (const auto& row : rows) EXPECT_EQ(row.component, Component::RateRegional);
}

TEST_F(CliTest, JsonOutputs) {
  auto args = cedar_fit(path("j"));
  args.insert(args.end(), {"--format", "json", "--full-draws"});
  ASSERT_EQ(run(args).code, 0);
  std::istringstream in(slurp(dir_ / "j" / "draws.json"));
  std::string line;
  std::getline(in, line);
  const auto obj = nlohmann::json::parse(line);
  EXPECT_TRUE(obj.contains("chain"));
  EXPECT_TRUE(obj.contains("beta[1]"));
}

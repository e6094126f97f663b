#include "gradconv/acceptance.hpp"
#include "gradconv/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gradconv;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gradconv_harness_" + name);
  std::filesystem::remove_all(p);
  return p.string();
}

ExperimentConfig small_rates(const std::string& out) {
  ExperimentConfig cfg;
  parse_config_text(
      "command = rates\n"
      "d = 3\n"
      "n_grid = 64, 128, 256\n"
      "trials = 3\n"
      "oracle_m = 5000\n"
      "seed = 17\n"
      "out = " + out + "\n",
      cfg);
  return cfg;
}

}  // namespace

TEST(FitRate, RecoversExactPowerLaws) {
  std::vector<double> ns = {100, 200, 400, 800, 1600};
  for (double a : {-0.5, -1.0, 0.25}) {
    std::vector<double> e;
    for (double n : ns) e.push_back(3.0 * std::pow(n, a));
    RateFit f = fit_rate(ns, e, nullptr);
    EXPECT_NEAR(f.slope, a, 1e-12);
    EXPECT_NEAR(f.intercept, std::log(3.0), 1e-10);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_EQ(f.points, 5);
  }
}

TEST(FitRate, ConstantSeriesHasZeroSlope) {
  RateFit f = fit_rate({10, 20, 40}, {0.3, 0.3, 0.3}, nullptr);
  EXPECT_NEAR(f.slope, 0.0, 1e-12);
  EXPECT_EQ(f.r_squared, 1.0);
}

TEST(FitRate, DropsNonpositivePointsWithWarning) {
  std::ostringstream warn;
  RateFit f = fit_rate({10, 20, 40, 80, 160}, {1.0, 0.0, 0.25, -1.0, 0.0625}, &warn);
  EXPECT_EQ(f.points, 3);
  EXPECT_NEAR(f.slope, -1.0, 1e-12);
  EXPECT_NE(warn.str().find("drops point n=20"), std::string::npos);
  EXPECT_THROW(fit_rate({10, 20, 40}, {1.0, 0.0, 0.5}, nullptr), std::invalid_argument);
  EXPECT_THROW(fit_rate({10, 20}, {1.0}, nullptr), std::invalid_argument);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(Config, ParsesKeysCommentsAndLists) {
  ExperimentConfig cfg;
  parse_config_text("# header\n\nmodel = rr  # trailing\nn_grid = 10, 20,30\ntiming = true\ndelta=0.1\n", cfg);
  EXPECT_EQ(cfg.model, "rr");
  EXPECT_EQ(cfg.n_grid, (std::vector<long>{10, 20, 30}));
  EXPECT_TRUE(cfg.timing);
  EXPECT_EQ(cfg.delta, 0.1);
}

TEST(Config, UnknownKeyReportsLine) {
  ExperimentConfig cfg;
  try {
    parse_config_text("model = glm\n\nbogus = 3\n", cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("config line 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(Config, MalformedLinesThrow) {
  ExperimentConfig cfg;
  EXPECT_THROW(parse_config_text("model glm\n", cfg), ConfigError);
  EXPECT_THROW(parse_config_text("= 3\n", cfg), ConfigError);
  EXPECT_THROW(parse_config_text("trials = many\n", cfg), ConfigError);
  EXPECT_THROW(load_config_file("/nonexistent/gradconv.cfg", cfg), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(validate(cfg));
  ExperimentConfig a = cfg;
  a.n_grid = {100, 100};
  EXPECT_THROW(validate(a), std::invalid_argument);
  ExperimentConfig b = cfg;
  b.delta = 1.0;
  EXPECT_THROW(validate(b), std::invalid_argument);
  ExperimentConfig c = cfg;
  c.command = "train";
  EXPECT_THROW(validate(c), std::invalid_argument);
  ExperimentConfig d = cfg;
  d.model = "svm";
  EXPECT_THROW(validate(d), std::invalid_argument);
  ExperimentConfig e = cfg;
  e.trials = 0;
  EXPECT_THROW(validate(e), std::invalid_argument);
}

TEST(WStar, ScaledToWeightBall) {
  ModelSpec m = make_glm(LinkKind::logistic, GeometryConfig::l2(1.0, 0.7));
  for (std::string kind : {"auto", "uniform", "power", "e1"})
    EXPECT_NEAR(make_w_star(m, 6, kind, 1.0).norm(), 0.7, 1e-12) << kind;
  EXPECT_THROW(make_w_star(m, 6, "random", 1.0), std::invalid_argument);
}

TEST(Rates, CsvIsByteIdenticalAcrossRuns) {
  std::ostringstream sink;
  const std::string a = scratch("a"), b = scratch("b");
  EXPECT_EQ(run_command(small_rates(a), sink), kExitOk);
  EXPECT_EQ(run_command(small_rates(b), sink), kExitOk);
  std::string ca = slurp(a + "/rates.csv"), cb = slurp(b + "/rates.csv");
  EXPECT_FALSE(ca.empty());
  EXPECT_EQ(ca, cb);
  EXPECT_EQ(ca.rfind("n,d,trial,excess_risk,grad_norm,certificate,wall_ms\n", 0), 0u);
  EXPECT_EQ(std::count(ca.begin(), ca.end(), '\n'), 1 + 3 * 3);
}

TEST(Rates, RowsCarryCertificatesAboveExcess) {
  RateExperiment ex;
  ex.model = make_glm(LinkKind::logistic, GeometryConfig::l2());
  ex.w_star = Vec::Constant(3, 0.5);
  ex.n_grid = {64, 128, 256};
  ex.trials = 2;
  ex.oracle_m = 5000;
  RateRun run = run_rate_experiment(ex);
  ASSERT_EQ(run.table.rows.size(), 6u);
  for (const auto& r : run.table.rows) EXPECT_GE(r.certificate, r.excess_risk);
  EXPECT_EQ(run.table.rows.front().wall_ms, 0.0);
}

TEST(Commands, ExitCodes) {
  std::ostringstream sink;
  ExperimentConfig lb;
  lb.command = "lower-bound";
  lb.d_grid = {3, 4};
  lb.segment_N = 5;
  lb.mc_draws = 20;
  lb.out = scratch("lb");
  EXPECT_EQ(run_command(lb, sink), kExitOk);
  EXPECT_TRUE(std::filesystem::exists(lb.out + "/lower_bound.csv"));
  ExperimentConfig bad;
  bad.command = "rates";
  bad.model = "relu";
  bad.out = scratch("bad");
  EXPECT_THROW(run_command(bad, sink), std::invalid_argument);
  ExperimentConfig v;
  v.out = scratch("verify");
  EXPECT_EQ(run_verify(v, sink, {1, 2}), kExitOk);
  EXPECT_NE(sink.str().find("PASS criterion 1"), std::string::npos);
}

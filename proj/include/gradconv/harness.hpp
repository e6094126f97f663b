#pragma once

#include "gradconv/csv.hpp"
#include "gradconv/gdcheck.hpp"
#include "gradconv/geometry.hpp"
#include "gradconv/models.hpp"
#include "gradconv/optimize.hpp"
#include "gradconv/parallel.hpp"
#include "gradconv/rademacher.hpp"
#include "gradconv/relu_lab.hpp"
#include "gradconv/rng.hpp"
#include "gradconv/synthdata.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradconv {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& msg)
      : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ExperimentConfig {
  std::string command = "verify";
  std::string model = "glm";
  std::string link = "logistic";
  double rho_c = 4.685;
  double noise = 0.3;
  std::string p = "2";
  double radius_R = 1.0;
  double radius_B = 1.0;
  std::vector<long> n_grid = {128, 256, 512, 1024, 2048, 4096, 8192};
  int d = 5;
  std::vector<long> d_grid = {8, 16, 32};
  std::vector<double> eps_grid = {0.1, 0.05, 0.025};
  int trials = 20;
  std::uint64_t seed = 1;
  double delta = 0.05;
  std::string out = "gradconv_out";
  int mc_draws = 200;
  long oracle_m = 100000;
  std::string design = "sphere_uniform";
  double spectrum_decay = 0.0;
  std::string w_star = "auto";
  std::string regime = "norm_based";
  std::string optimizer = "pgd";
  int probes = 200;
  int restarts = 1;
  int max_steps = 10000;
  double tolerance_scale = 1.0;
  double lambda_scale = 1.0;
  int segment_N = 51;
  bool timing = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline long parse_long(const std::string& s) {
  std::size_t pos = 0;
  long v = std::stol(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not an integer: " + s);
  return v;
}

inline std::uint64_t parse_u64(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size() || s.find('-') != std::string::npos) throw std::invalid_argument("not an unsigned integer: " + s);
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("not a boolean: " + s);
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& s, F f) {
  std::vector<T> out;
  for (const auto& item : split(s, ',')) {
    auto t = trim(std::string(item));
    if (!t.empty()) out.push_back(f(t));
  }
  return out;
}

}  // namespace detail

inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  auto num = [](const std::string& s) { return parse_double(s); };
  if (key == "command") cfg.command = value;
  else if (key == "model") cfg.model = value;
  else if (key == "link") cfg.link = value;
  else if (key == "rho_c") cfg.rho_c = num(value);
  else if (key == "noise") cfg.noise = num(value);
  else if (key == "p") cfg.p = value;
  else if (key == "radius_R") cfg.radius_R = num(value);
  else if (key == "radius_B") cfg.radius_B = num(value);
  else if (key == "n_grid") cfg.n_grid = parse_list<long>(value, parse_long);
  else if (key == "d") cfg.d = static_cast<int>(parse_long(value));
  else if (key == "d_grid") cfg.d_grid = parse_list<long>(value, parse_long);
  else if (key == "eps_grid") cfg.eps_grid = parse_list<double>(value, num);
  else if (key == "trials") cfg.trials = static_cast<int>(parse_long(value));
  else if (key == "seed") cfg.seed = parse_u64(value);
  else if (key == "delta") cfg.delta = num(value);
  else if (key == "out") cfg.out = value;
  else if (key == "mc_draws") cfg.mc_draws = static_cast<int>(parse_long(value));
  else if (key == "oracle_m") cfg.oracle_m = parse_long(value);
  else if (key == "design") cfg.design = value;
  else if (key == "spectrum_decay") cfg.spectrum_decay = num(value);
  else if (key == "w_star") cfg.w_star = value;
  else if (key == "regime") cfg.regime = value;
  else if (key == "optimizer") cfg.optimizer = value;
  else if (key == "probes") cfg.probes = static_cast<int>(parse_long(value));
  else if (key == "restarts") cfg.restarts = static_cast<int>(parse_long(value));
  else if (key == "max_steps") cfg.max_steps = static_cast<int>(parse_long(value));
  else if (key == "tolerance_scale") cfg.tolerance_scale = num(value);
  else if (key == "lambda_scale") cfg.lambda_scale = num(value);
  else if (key == "segment_N") cfg.segment_N = static_cast<int>(parse_long(value));
  else if (key == "timing") cfg.timing = parse_bool(value);
  else throw std::out_of_range("unknown key '" + key + "'");
}

inline void validate(const ExperimentConfig& cfg) {
  static const std::vector<std::string> commands = {"rates", "rademacher", "gd-check", "lower-bound", "margin", "verify"};
  if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
    throw std::invalid_argument("unknown command '" + cfg.command + "'");
  if (cfg.model != "glm" && cfg.model != "rr" && cfg.model != "relu")
    throw std::invalid_argument("model must be glm, rr or relu");
  for (std::size_t i = 1; i < cfg.n_grid.size(); ++i)
    if (cfg.n_grid[i] <= cfg.n_grid[i - 1]) throw std::invalid_argument("n_grid must be strictly increasing");
  if (!cfg.n_grid.empty() && cfg.n_grid.front() < 1) throw std::invalid_argument("n_grid entries must be positive");
  if (cfg.trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (cfg.d < 1) throw std::invalid_argument("d must be >= 1");
  if (cfg.mc_draws < 1) throw std::invalid_argument("mc_draws must be >= 1");
  if (cfg.oracle_m < 1) throw std::invalid_argument("oracle_m must be >= 1");
}

inline void parse_config_text(const std::string& text, ExperimentConfig& cfg) {
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto hash = raw.find('#');
    std::string s = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    std::string key = detail::trim(s.substr(0, eq)), value = detail::trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "empty key");
    try {
      apply_setting(cfg, key, value);
    } catch (const std::exception& e) {
      throw ConfigError(line, e.what());
    }
  }
}

inline void load_config_file(const std::string& path, ExperimentConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw ConfigError(0, "cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  parse_config_text(ss.str(), cfg);
}

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points = 0;
};

// OLS of log err on log n.
inline RateFit fit_rate(const std::vector<double>& ns, const std::vector<double>& errs, std::ostream* warn = &std::clog) {
  if (ns.size() != errs.size()) throw std::invalid_argument("fit_rate: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (!(errs[i] > 0.0) || !(ns[i] > 0.0)) {
      if (warn) *warn << "warning: fit_rate drops point n=" << fmt_double(ns[i]) << " err=" << fmt_double(errs[i]) << "\n";
      continue;
    }
    lx.push_back(std::log(ns[i]));
    ly.push_back(std::log(errs[i]));
  }
  if (lx.size() < 3) throw std::invalid_argument("fit_rate needs at least 3 positive points");
  const double k = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
  mx /= k, my /= k;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_rate needs distinct n values");
  RateFit f;
  f.points = static_cast<int>(lx.size());
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (syy == 0.0) {
    f.r_squared = 1.0;
  } else {
    double sse = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      double r = ly[i] - (f.intercept + f.slope * lx[i]);
      sse += r * r;
    }
    f.r_squared = std::clamp(1.0 - sse / syy, 0.0, 1.0);
  }
  return f;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

struct RateRow {
  long n = 0;
  int d = 0;
  int trial = 0;
  double excess_risk = 0.0;
  double grad_norm = 0.0;
  double certificate = 0.0;
  double wall_ms = 0.0;
};

struct RateTable {
  std::vector<RateRow> rows;
  RateFit fit;
  std::vector<double> ns;
  std::vector<double> medians;
};

inline void write_rate_csv(const RateTable& t, const std::string& path) {
  CsvWriter w(path, "n,d,trial,excess_risk,grad_norm,certificate,wall_ms");
  for (const auto& r : t.rows) w.row(r.n, r.d, r.trial, r.excess_risk, r.grad_norm, r.certificate, r.wall_ms);
}

// Per-n medians of positive excess risks, then the log-log fit.
inline void fit_rate_table(RateTable& t, std::ostream* warn = &std::clog) {
  std::map<long, std::vector<double>> by_n;
  for (const auto& r : t.rows)
    if (r.excess_risk > 0.0) by_n[r.n].push_back(r.excess_risk);
  t.ns.clear();
  t.medians.clear();
  for (const auto& [n, v] : by_n) {
    t.ns.push_back(static_cast<double>(n));
    t.medians.push_back(median(v));
  }
  t.fit = fit_rate(t.ns, t.medians, warn);
}

enum class RateOptimizer { pgd, regularized };

struct RateExperiment {
  ModelSpec model;
  Vec w_star;
  DesignSpec design;
  std::vector<long> n_grid;
  int trials = 20;
  RateOptimizer optimizer = RateOptimizer::pgd;
  double tolerance_scale = 1.0;  // pgd tolerance = scale / sqrt(n)
  double lambda_scale = 1.0;
  int restarts = 1;
  int max_steps = 10000;
  Eigen::Index oracle_m = 100000;
  double delta = 0.05;
  GdRegime certificate_regime = GdRegime::norm_based;
  std::uint64_t seed = 1;
  bool timing = false;
};

struct RateRun {
  RateTable table;
  double max_final_grad = 0.0;  // regularized objective gradient for the ridge optimizer
  int unconverged = 0;
};

inline RateRun run_rate_experiment(const RateExperiment& ex) {
  if (ex.trials < 1) throw std::invalid_argument("rate experiment needs trials >= 1");
  const Eigen::Index d = ex.w_star.size();
  Dataset oracle = generate(ex.model, ex.w_star, ex.oracle_m, derive_seed(ex.seed, "oracle"), ex.design);
  CovarianceSummary cov;
  if (ex.certificate_regime != GdRegime::norm_based) cov = covariance_summary(oracle.X, ex.w_star, 200, ex.seed);
  const GdSpec gd = gd_constants(ex.model, cov, ex.certificate_regime);
  const long n_max = ex.n_grid.empty() ? 0 : *std::max_element(ex.n_grid.begin(), ex.n_grid.end());

  struct Cell {
    RateRow row;
    double final_grad = 0.0;
    bool converged = true;
  };
  const std::size_t cells = ex.n_grid.size() * static_cast<std::size_t>(ex.trials);
  std::vector<Dataset> pools(static_cast<std::size_t>(ex.trials));
  // Nested samples: trial t at size n uses the first n rows of one pool.
  parallel_for(pools.size(), [&](std::size_t t) {
    pools[t] = generate(ex.model, ex.w_star, n_max, derive_seed(ex.seed, "data", t), ex.design);
  });
  auto out = parallel_map<Cell>(cells, [&](std::size_t k) {
    const std::size_t ni = k / static_cast<std::size_t>(ex.trials), t = k % static_cast<std::size_t>(ex.trials);
    const long n = ex.n_grid[ni];
    Dataset data;
    data.X = pools[t].X.topRows(n);
    data.y = pools[t].y.head(n);
    data.w_star = ex.w_star;
    data.meta = pools[t].meta;
    OptimizerConfig oc;
    oc.restarts = ex.restarts;
    oc.max_steps = ex.max_steps;
    oc.seed = derive_seed(derive_seed(ex.seed, "opt", t), "n", static_cast<std::uint64_t>(n));
    auto start = std::chrono::steady_clock::now();
    OptResult r;
    Cell c;
    if (ex.optimizer == RateOptimizer::pgd) {
      oc.grad_tolerance = ex.tolerance_scale / std::sqrt(static_cast<double>(n));
      r = pgd(ex.model, data, oc);
      c.final_grad = r.grad_norm_final;
    } else {
      oc.grad_tolerance = 1e-6;
      oc.lambda_scale = ex.lambda_scale;
      oc.max_steps = std::max(ex.max_steps, 200000);
      r = regularized_stationary(ex.model, data, ex.delta, oc);
      c.final_grad = r.grad_norm_final;
    }
    auto stop = std::chrono::steady_clock::now();
    c.converged = r.converged;
    c.row.n = n;
    c.row.d = static_cast<int>(d);
    c.row.trial = static_cast<int>(t);
    c.row.excess_risk = paired_excess(ex.model, oracle, r.w_hat, ex.w_star).first;
    c.row.grad_norm = r.raw_grad_norm;
    c.row.certificate =
        excess_risk_certificate(ex.model, gd, r.raw_grad_norm, n, gradient_rc_bound(ex.model, n), ex.delta).total;
    c.row.wall_ms = ex.timing ? std::chrono::duration<double, std::milli>(stop - start).count() : 0.0;
    return c;
  });
  RateRun run;
  for (const auto& c : out) {
    run.table.rows.push_back(c.row);
    run.max_final_grad = std::max(run.max_final_grad, c.final_grad);
    run.unconverged += !c.converged;
  }
  std::sort(run.table.rows.begin(), run.table.rows.end(),
            [](const RateRow& a, const RateRow& b) { return std::tie(a.n, a.trial) < std::tie(b.n, b.trial); });
  fit_rate_table(run.table);
  return run;
}

inline Exponent parse_exponent(const std::string& s) {
  if (s == "inf" || s == "infinity") return Exponent::infinity();
  return Exponent::finite(parse_double(s));
}

inline ModelSpec model_from_config(const ExperimentConfig& cfg) {
  if (cfg.model == "relu") return make_relu();
  GeometryConfig geo = GeometryConfig::make(parse_exponent(cfg.p), cfg.radius_R, cfg.radius_B, cfg.d);
  if (cfg.model == "glm") {
    if (cfg.link != "logistic" && cfg.link != "probit") throw std::invalid_argument("link must be logistic or probit");
    return make_glm(cfg.link == "logistic" ? LinkKind::logistic : LinkKind::probit, geo);
  }
  return make_robust(RobustRho{cfg.rho_c}, geo, UniformNoise{cfg.noise});
}

// auto: power-law profile j^(-1/2) under a decaying spectrum, else the flat vector; both scaled to ||w||_q = B.
inline Vec make_w_star(const ModelSpec& model, Eigen::Index d, const std::string& kind, double spectrum_decay) {
  std::string k = kind == "auto" ? (spectrum_decay > 0.0 ? "power" : "uniform") : kind;
  Vec w(d);
  if (k == "uniform") {
    w.setOnes();
  } else if (k == "power") {
    for (Eigen::Index j = 0; j < d; ++j) w[j] = 1.0 / std::sqrt(static_cast<double>(j + 1));
  } else if (k == "e1") {
    w.setZero();
    w[0] = 1.0;
  } else {
    throw std::invalid_argument("w_star must be auto, uniform, power or e1");
  }
  return w * (model.geometry.radius_B / norm(w, model.geometry.dual_exponent));
}

inline DesignSpec design_from_config(const ExperimentConfig& cfg) {
  return DesignSpec{parse_dist(cfg.design), cfg.spectrum_decay};
}

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitViolation = 2 };

inline std::string join_path(const std::string& dir, const std::string& file) {
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / file).string();
}

inline int run_rates(const ExperimentConfig& cfg, std::ostream& out) {
  RateExperiment ex;
  ex.model = model_from_config(cfg);
  if (!ex.model.smooth()) throw std::invalid_argument("rates needs a smooth model (glm or rr)");
  ex.design = design_from_config(cfg);
  ex.w_star = make_w_star(ex.model, cfg.d, cfg.w_star, cfg.spectrum_decay);
  ex.n_grid = cfg.n_grid;
  ex.trials = cfg.trials;
  ex.optimizer = cfg.optimizer == "regularized" ? RateOptimizer::regularized : RateOptimizer::pgd;
  ex.tolerance_scale = cfg.tolerance_scale;
  ex.lambda_scale = cfg.lambda_scale;
  ex.restarts = cfg.restarts;
  ex.max_steps = cfg.max_steps;
  ex.oracle_m = cfg.oracle_m;
  ex.delta = cfg.delta;
  ex.certificate_regime = parse_regime(cfg.regime);
  ex.seed = cfg.seed;
  ex.timing = cfg.timing;
  RateRun run = run_rate_experiment(ex);
  const std::string path = join_path(cfg.out, "rates.csv");
  write_rate_csv(run.table, path);
  out << "rates: " << run.table.rows.size() << " rows -> " << path << "\n";
  for (std::size_t i = 0; i < run.table.ns.size(); ++i)
    out << "  n=" << run.table.ns[i] << " median excess=" << fmt_double(run.table.medians[i]) << "\n";
  out << "  slope=" << fmt_double(run.table.fit.slope) << " r2=" << fmt_double(run.table.fit.r_squared)
      << " unconverged=" << run.unconverged << "\n";
  return kExitOk;
}

inline int run_rademacher(const ExperimentConfig& cfg, std::ostream& out) {
  ModelSpec model = model_from_config(cfg);
  if (!model.smooth()) throw std::invalid_argument("rademacher needs a smooth model (glm or rr)");
  DesignSpec design = design_from_config(cfg);
  Vec w_star = make_w_star(model, cfg.d, cfg.w_star, cfg.spectrum_decay);
  std::vector<std::pair<RcEstimate, std::pair<long, long>>> rows;
  SupSolver solver;
  solver.restarts = 4;
  solver.steps = 100;
  for (long n : cfg.n_grid) {
    Dataset data = generate(model, w_star, n, derive_seed(cfg.seed, "data", static_cast<std::uint64_t>(n)), design);
    RcEstimate est = estimate_normed_rc(gradient_class(model, data), model.geometry.primal_exponent, cfg.mc_draws,
                                        solver, derive_seed(cfg.seed, "rc", static_cast<std::uint64_t>(n)));
    est.bound = gradient_rc_bound(model, n);
    out << "  n=" << n << " rc=" << fmt_double(est.value) << " stderr=" << fmt_double(est.stderr)
        << " bound=" << fmt_double(est.bound) << "\n";
    rows.push_back({est, {n, cfg.d}});
  }
  const std::string path = join_path(cfg.out, "rademacher.csv");
  write_rc_csv(path, rows);
  bool violated = false;
  for (const auto& [est, nd] : rows) violated |= est.value > est.bound + 3.0 * est.stderr;
  out << "rademacher: " << rows.size() << " rows -> " << path << (violated ? " (bound violated)" : "") << "\n";
  return violated ? kExitViolation : kExitOk;
}

inline int run_gd_check(const ExperimentConfig& cfg, std::ostream& out) {
  ModelSpec model = model_from_config(cfg);
  DesignSpec design = design_from_config(cfg);
  Vec w_star = 0.8 * make_w_star(model, cfg.d, cfg.w_star, cfg.spectrum_decay);
  GdRegime regime = parse_regime(cfg.regime);
  Dataset cov_sample = generate(model, w_star, std::min<long>(cfg.oracle_m, 100000), derive_seed(cfg.seed, "cov"), design);
  CovarianceSummary cov = covariance_summary(cov_sample.X, w_star, 1000, cfg.seed);
  GdSpec gd = gd_constants(model, cov, regime);
  GdReport rep = verify_gd(model, w_star, gd, cfg.probes, cfg.oracle_m, cfg.seed, design);
  const std::string path = join_path(cfg.out, "gd_report.csv");
  write_gd_report_csv(rep, path);
  out << "gd-check: " << regime_name(regime) << " alpha=" << fmt_double(gd.alpha) << " mu=" << fmt_double(gd.mu)
      << " holds=" << rep.holds << " inconclusive=" << rep.inconclusive << " violations=" << rep.violations
      << " -> " << path << "\n";
  return rep.violations > 0 ? kExitViolation : kExitOk;
}

inline int run_lower_bound(const ExperimentConfig& cfg, std::ostream& out) {
  std::vector<std::pair<LowerBoundInstance, LowerBoundEstimate>> rows;
  for (long d : cfg.d_grid) {
    LowerBoundInstance inst = build_lb_instance(static_cast<int>(d), cfg.segment_N);
    LowerBoundEstimate est = lb_rc_lower_estimate(inst, cfg.mc_draws, derive_seed(cfg.seed, "lb", static_cast<std::uint64_t>(d)));
    out << "  d=" << d << " n=" << inst.n() << " mc=" << fmt_double(est.mc_value)
        << " ratio=" << fmt_double(est.mc_value / std::sqrt(static_cast<double>(d * inst.n()))) << "\n";
    rows.push_back({std::move(inst), est});
  }
  const std::string path = join_path(cfg.out, "lower_bound.csv");
  write_lb_sweep_csv(path, rows);
  out << "lower-bound: " << rows.size() << " rows -> " << path << "\n";
  return kExitOk;
}

inline int run_margin(const ExperimentConfig& cfg, std::ostream& out) {
  const std::vector<double> grid = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  const long n = cfg.n_grid.empty() ? 512 : cfg.n_grid.front();
  const DesignSpec design = design_from_config(cfg);
  int violations = 0;
  CsvWriter w(join_path(cfg.out, "margin.csv"), "trial,gamma,xi_pop,xi_emp_2g,xi_emp,xi_pop_2g,slack,upper_ok,lower_ok");
  for (int t = 0; t < cfg.trials; ++t) {
    std::uint64_t s = derive_seed(cfg.seed, "margin", static_cast<std::uint64_t>(t));
    Mat X = sample_covariates(design, n, cfg.d, 1.0, derive_seed(s, "sample"));
    Mat P = sample_covariates(design, std::max<long>(cfg.oracle_m, 10 * n), cfg.d, 1.0, derive_seed(s, "population"));
    Rng rng = Rng::stream(s, "w");
    Vec wv = uniform_on_sphere(cfg.d, Ball{2, 1.0}, rng);
    PhiConvergenceReport rep = check_phi_convergence(wv, X, P, grid, cfg.delta);
    violations += rep.violations;
    for (const auto& r : rep.rows)
      w.row(t, r.gamma, r.xi_pop, r.xi_emp_2g, r.xi_emp, r.xi_pop_2g, r.slack, int(r.upper_ok), int(r.lower_ok));
  }
  MarginFunction phi = MarginFunction::power(0.5);
  auto g = log_gamma_grid();
  for (long m : cfg.n_grid) {
    MarginBound b = margin_bound_value(phi, static_cast<double>(m), cfg.delta, g);
    out << "  n=" << m << " margin bound=" << fmt_double(b.value) << " at gamma=" << fmt_double(b.gamma) << "\n";
  }
  out << "margin: " << cfg.trials << " trials, " << violations << " phi-convergence violations\n";
  return violations > 0 ? kExitViolation : kExitOk;
}

}  // namespace gradconv

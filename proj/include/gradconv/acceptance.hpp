#pragma once

#include "gradconv/harness.hpp"

#include <chrono>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace gradconv {

struct CriterionResult {
  CriterionResult() = default;
  CriterionResult(int i, std::string n) : id(i), name(std::move(n)) {}

  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace accept {

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& w, double h = 1e-6) {
  Vec g(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Vec a = w, b = w;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& w, double h = 1e-5) {
  Mat J(w.size(), w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Vec a = w, b = w;
    a[i] += h;
    b[i] -= h;
    J.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return J;
}

// Relative error with a floor on the reference magnitude.
inline double rel_err(double diff, double ref) { return diff / std::max(ref, 1e-3); }

inline ModelSpec logistic_l2() { return make_glm(LinkKind::logistic, GeometryConfig::l2()); }

}  // namespace accept

inline CriterionResult criterion_derivatives(std::uint64_t seed) {
  CriterionResult res{1, "derivative oracles"};
  std::vector<std::pair<std::string, ModelSpec>> models = {
      {"logistic", accept::logistic_l2()},
      {"probit", make_glm(LinkKind::probit, GeometryConfig::l2())},
      {"tukey", make_robust(RobustRho{}, GeometryConfig::l2())}};
  std::ostringstream det;
  bool ok = true;
  for (const auto& [name, m] : models) {
    const int d = 5;
    double worst_g = 0.0, worst_h = 0.0;
    for (int k = 0; k < 1000; ++k) {
      Rng rng = Rng::stream(seed, "fd/" + name, static_cast<std::uint64_t>(k));
      Vec w = uniform_in_ball(d, Ball{2, 1.0}, rng);
      Vec x = uniform_in_ball(d, Ball{2, 1.0}, rng);
      double y = m.family == Family::glm ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.uniform(-m.Y_bound, m.Y_bound);
      Vec g = grad(m, w, x, y);
      Vec gf = accept::fd_gradient([&](const Vec& v) { return loss(m, v, x, y); }, w);
      worst_g = std::max(worst_g, accept::rel_err((g - gf).norm(), g.norm()));
      Mat H = hessian(m, w, x, y);
      Mat Hf = accept::fd_jacobian([&](const Vec& v) { return grad(m, v, x, y); }, w);
      worst_h = std::max(worst_h, accept::rel_err((H - Hf).norm(), H.norm()));
    }
    ok &= worst_g <= 1e-5 && worst_h <= 1e-4;
    det << name << " grad " << accept::fmt(worst_g, 3) << " hess " << accept::fmt(worst_h, 3) << "; ";
  }
  res.pass = ok;
  res.detail = det.str() + "limits 1e-5 / 1e-4";
  return res;
}

inline CriterionResult criterion_smooth_type(std::uint64_t seed) {
  CriterionResult res{2, "smooth-type inequality (exact)"};
  int violations = 0, total = 0;
  double worst_ratio = 0.0;
  for (double p : {2.0, 3.0, 4.0}) {
    for (int k = 0; k < 200; ++k) {
      Rng rng = Rng::stream(seed, "smooth/" + fmt_double(p), static_cast<std::uint64_t>(k));
      Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.index(12));
      Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(5));
      Mat X(n, d);
      for (Eigen::Index t = 0; t < n; ++t)
        for (Eigen::Index j = 0; j < d; ++j) X(t, j) = rng.normal() * (rng.uniform() < 0.3 ? 3.0 : 1.0);
      InequalityCheck c = check_smooth_type(X, Exponent::finite(p), CheckMode::brute_force);
      ++total;
      violations += !c.holds;
      if (c.rhs > 0) worst_ratio = std::max(worst_ratio, c.lhs / c.rhs);
    }
  }
  res.pass = violations == 0;
  res.detail = std::to_string(violations) + "/" + std::to_string(total) + " violations, max lhs/rhs " +
               accept::fmt(worst_ratio);
  return res;
}

namespace accept {

struct ToyComposition {
  Mat X, Xp;      // n x 2 rows in the unit ball
  Mat A;          // n x K unit directions for h_t / grad G_t
  Mat Bdir;       // n x K
  Vec offset;
  Eigen::Index K = 1;

  Vec F(Eigen::Index t, const Vec& w) const {
    Vec v(K);
    v[0] = std::tanh(X.row(t).dot(w));
    if (K > 1) v[1] = Xp.row(t).dot(w);
    return v;
  }
  Mat jac(Eigen::Index t, const Vec& w) const {
    Mat J(K, 2);
    double th = std::tanh(X.row(t).dot(w));
    J.row(0) = (1.0 - th * th) * X.row(t);
    if (K > 1) J.row(1) = Xp.row(t);
    return J;
  }
};

inline ToyComposition toy(Eigen::Index n, Eigen::Index K, Rng& rng) {
  ToyComposition c;
  c.K = K;
  c.X.resize(n, 2);
  c.Xp.resize(n, 2);
  c.A.resize(n, K);
  c.Bdir.resize(n, K);
  c.offset.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    c.X.row(t) = uniform_in_ball(2, Ball{2, 1.0}, rng).transpose();
    c.Xp.row(t) = uniform_in_ball(2, Ball{2, 1.0}, rng).transpose();
    c.A.row(t) = uniform_on_sphere(K, Ball{2, 1.0}, rng).transpose();
    c.Bdir.row(t) = (2.0 * uniform_in_ball(K, Ball{2, 1.0}, rng)).transpose();
    c.offset[t] = rng.uniform(-1.0, 1.0);
  }
  return c;
}

inline std::vector<Vec> toy_grid() { return ball_grid(2, Ball{2, 1.0}, 9); }

struct InstanceOutcome {
  bool contraction_ok = true;
  bool chain_ok = true;
};

inline InstanceOutcome run_instance(Eigen::Index n, Eigen::Index K, CheckMode mode, int draws, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "toy");
  ToyComposition c = toy(n, K, rng);
  const double L = 1.5, L_G = 1.3;
  const auto grid = toy_grid();
  FiniteClass cls;
  cls.K = K;
  for (const auto& w : grid) {
    Mat m(n, K);
    for (Eigen::Index t = 0; t < n; ++t) m.row(t) = c.F(t, w).transpose();
    cls.members.push_back(m);
  }
  std::vector<LipschitzMap> h;
  for (Eigen::Index t = 0; t < n; ++t) {
    Vec a = c.A.row(t).transpose();
    double b = c.offset[t];
    h.push_back([a, b, L](const Vec& v) { return L * std::sin(a.dot(v) + b); });
  }
  InstanceOutcome out;
  out.contraction_ok = check_contraction(cls, h, L, mode, draws, derive_seed(seed, "contraction")).holds;
  CompositionFamily fam;
  fam.n = n;
  fam.K = K;
  fam.d = 2;
  fam.F = [&c](Eigen::Index t, const Vec& w) { return c.F(t, w); };
  fam.jac_F = [&c](Eigen::Index t, const Vec& w) { return c.jac(t, w); };
  fam.grad_G = [&c, L_G](Eigen::Index t, const Vec& v) {
    return Vec(L_G * std::cos(c.Bdir.row(t).dot(v)) * c.A.row(t).transpose());
  };
  out.chain_ok = check_chain_rule(fam, grid, L_G, std::sqrt(static_cast<double>(K)), mode, draws,
                                  derive_seed(seed, "chain"))
                     .holds;
  return out;
}

}  // namespace accept

inline CriterionResult criterion_contraction_chain(std::uint64_t seed) {
  CriterionResult res{3, "vector contraction and chain rule"};
  int bf_c = 0, bf_r = 0, mc_c = 0, mc_r = 0;
  for (int k = 0; k < 100; ++k) {
    Rng rng = Rng::stream(seed, "cc/shape", static_cast<std::uint64_t>(k));
    Eigen::Index K = 1 + static_cast<Eigen::Index>(rng.index(2));
    Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.index(7));
    auto o = accept::run_instance(n, K, CheckMode::brute_force, 0, derive_seed(seed, "cc/bf", k));
    bf_c += o.contraction_ok;
    bf_r += o.chain_ok;
    auto m = accept::run_instance(64, K, CheckMode::monte_carlo, 200, derive_seed(seed, "cc/mc", k));
    mc_c += m.contraction_ok;
    mc_r += m.chain_ok;
  }
  res.pass = bf_c == 100 && bf_r == 100 && mc_c == 100 && mc_r == 100;
  res.detail = "brute force contraction " + std::to_string(bf_c) + "/100 chain " + std::to_string(bf_r) +
               "/100; MC contraction " + std::to_string(mc_c) + "/100 chain " + std::to_string(mc_r) + "/100";
  return res;
}

inline CriterionResult criterion_rc_oracle(std::uint64_t seed) {
  CriterionResult res{4, "RC estimate vs enumeration"};
  ModelSpec m = accept::logistic_l2();
  const Eigen::Index n = 10, d = 2;
  Vec w_star = make_w_star(m, d, "uniform", 0.0) * 0.8;
  Dataset data = generate(m, w_star, n, derive_seed(seed, "rc4/data"));
  FunctionClass fc = gradient_class(m, data);
  SupSolver solver;
  const auto grid = ball_grid(d, fc.domain, solver.grid_per_axis);
  std::vector<double> per_pattern;
  RcEstimate exact = exact_rc_bruteforce(fc, Exponent::finite(2.0), grid, &per_pattern);
  RcEstimate mc = estimate_normed_rc(fc, Exponent::finite(2.0), 4000, solver, derive_seed(seed, "rc4/mc"));
  // Grid slack: Lipschitz constant of w -> ||S(w)|| times the covering radius h / sqrt(2).
  double d2max = 0.0;
  const Interval S = m.constants.interval_S;
  for (int i = 0; i <= 2000; ++i) {
    double u = S.lo + (S.hi - S.lo) * i / 2000.0;
    for (double y : {0.0, 1.0}) d2max = std::max(d2max, std::abs(scalar_d2(m, u, y)));
  }
  double lip = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) lip += d2max * data.X.row(t).squaredNorm();
  const double slack = lip * mc.grid_spacing / std::sqrt(2.0);
  double worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < mc.per_draw.size(); ++k)
    worst_excess = std::max(worst_excess, mc.per_draw[k] - per_pattern[mc.patterns[k]]);
  const double gap = mc.value - exact.value;
  const bool agree = std::abs(gap) <= 3.0 * mc.stderr;
  const bool bounded = worst_excess <= slack;
  res.pass = agree && bounded;
  res.detail = "enumeration " + accept::fmt(exact.value, 6) + ", MC " + accept::fmt(mc.value, 6) + " +- " +
               accept::fmt(mc.stderr, 3) + ", gap " + accept::fmt(gap, 3) + "; worst per-draw excess " +
               accept::fmt(worst_excess, 3) + " vs grid slack " + accept::fmt(slack, 3);
  return res;
}

inline CriterionResult criterion_gd(std::uint64_t seed) {
  CriterionResult res{5, "GD condition with explicit constants"};
  const Eigen::Index d = 5, m_oracle = 200000;
  std::vector<std::pair<std::string, ModelSpec>> models = {{"glm", accept::logistic_l2()},
                                                           {"rr", make_robust(RobustRho{}, GeometryConfig::l2())}};
  std::ostringstream det;
  int violations = 0, control_violations = 0;
  bool control_each = true;
  for (const auto& [name, model] : models) {
    Vec w_star = 0.8 * make_w_star(model, d, "uniform", 0.0);
    Dataset cov_sample = generate(model, w_star, m_oracle, derive_seed(seed, "gd5/cov/" + name));
    CovarianceSummary cov = covariance_summary(cov_sample.X, w_star, 1000, seed);
    ModelSpec corrupted = model;
    corrupted.constants.c_lower *= 10.0;
    for (GdRegime regime : {GdRegime::norm_based, GdRegime::l2_lowdim}) {
      std::uint64_t s = derive_seed(seed, "gd5/" + name + "/" + regime_name(regime));
      GdReport rep = verify_gd(model, w_star, gd_constants(model, cov, regime), 200, m_oracle, s);
      GdReport neg = verify_gd(model, w_star, gd_constants(corrupted, cov, regime), 200, m_oracle, s);
      violations += rep.violations;
      control_violations += neg.violations;
      control_each &= neg.violations > 0;
      det << name << "/" << regime_name(regime) << " " << rep.violations << " viol (" << rep.inconclusive
          << " inconcl), control " << neg.violations << "; ";
    }
  }
  res.pass = violations == 0 && control_violations >= 1;
  res.detail = det.str() + (control_each ? "control fires in every cell" : "control silent in some cell");
  return res;
}

inline RateExperiment high_dim_design(std::uint64_t seed) {
  RateExperiment ex;
  ex.model = accept::logistic_l2();
  ex.design = DesignSpec{CovariateDist::gaussian_clipped, 2.0};
  ex.w_star = make_w_star(ex.model, 200, "power", 2.0);
  ex.n_grid = {128, 256, 512, 1024, 2048, 4096, 8192};
  ex.trials = 20;
  ex.oracle_m = 50000;
  ex.seed = seed;
  return ex;
}

inline std::string rate_detail(const RateRun& run) {
  std::ostringstream os;
  os << "slope " << accept::fmt(run.table.fit.slope) << " r2 " << accept::fmt(run.table.fit.r_squared) << "; medians";
  for (double v : run.table.medians) os << " " << accept::fmt(v, 3);
  return os.str();
}

inline CriterionResult criterion_high_dim_rate(std::uint64_t seed) {
  CriterionResult res{6, "high-dimensional rate (d = 200)"};
  RateRun run = run_rate_experiment(high_dim_design(derive_seed(seed, "c6")));
  const auto& f = run.table.fit;
  res.pass = f.slope >= -0.65 && f.slope <= -0.38 && f.r_squared >= 0.9;
  res.detail = rate_detail(run) + "; target slope in [-0.65, -0.38], r2 >= 0.9";
  return res;
}

inline CriterionResult criterion_low_dim_rate(std::uint64_t seed) {
  CriterionResult res{7, "low-dimensional rate (d = 5)"};
  RateExperiment ex;
  ex.model = accept::logistic_l2();
  ex.w_star = make_w_star(ex.model, 5, "uniform", 0.0);
  ex.n_grid = {128, 256, 512, 1024, 2048, 4096, 8192};
  ex.trials = 20;
  ex.oracle_m = 200000;
  ex.seed = derive_seed(seed, "c7");
  RateRun run = run_rate_experiment(ex);
  res.pass = run.table.fit.slope >= -1.2 && run.table.fit.slope <= -0.75;
  res.detail = rate_detail(run) + "; target slope in [-1.2, -0.75]";
  return res;
}

inline CriterionResult criterion_certificate(std::uint64_t seed) {
  CriterionResult res{8, "certificate dominance"};
  ModelSpec m = accept::logistic_l2();
  const Eigen::Index d = 5, n = 4096;
  const double delta = 0.05;
  Vec w_star = make_w_star(m, d, "uniform", 0.0) * 0.8;
  Dataset oracle = generate(m, w_star, 200000, derive_seed(seed, "c8/oracle"));
  CovarianceSummary cov = covariance_summary(oracle.X, w_star, 1000, seed);
  GdSpec gd = gd_constants(m, cov, GdRegime::l2_lowdim);
  SupSolver solver;
  solver.restarts = 2;
  solver.steps = 40;
  solver.lipschitz_probes = 20;
  int dominated = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  const int runs = 40;
  for (int r = 0; r < runs; ++r) {
    std::uint64_t s = derive_seed(seed, "c8/run", static_cast<std::uint64_t>(r));
    Dataset data = generate(m, w_star, n, derive_seed(s, "data"));
    OptimizerConfig oc;
    oc.restarts = 1;
    oc.seed = derive_seed(s, "opt");
    oc.grad_tolerance = 1.0 / std::sqrt(static_cast<double>(n));
    OptResult opt = pgd(m, data, oc);
    RcEstimate rc = estimate_normed_rc(gradient_class(m, data), Exponent::finite(2.0), 16, solver, derive_seed(s, "rc"));
    Certificate cert = excess_risk_certificate(m, gd, opt, data, rc, delta);
    double excess = paired_excess(m, oracle, opt.w_hat, w_star).first;
    dominated += cert.total >= excess;
    if (excess > 0) min_ratio = std::min(min_ratio, cert.total / excess);
  }
  res.pass = dominated >= static_cast<int>(std::ceil(0.95 * runs));
  res.detail = std::to_string(dominated) + "/" + std::to_string(runs) + " dominated, min certificate/excess " +
               accept::fmt(min_ratio);
  return res;
}

inline CriterionResult criterion_regularized(std::uint64_t seed) {
  CriterionResult res{9, "regularized stationary points"};
  RateExperiment ex = high_dim_design(derive_seed(seed, "c9"));
  ex.optimizer = RateOptimizer::regularized;
  ex.lambda_scale = 0.01;
  RateRun run = run_rate_experiment(ex);
  const auto& f = run.table.fit;
  res.pass = run.max_final_grad <= 1e-6 && run.unconverged == 0 && f.slope >= -0.65 && f.slope <= -0.35;
  res.detail = "max ||grad L^lambda|| " + accept::fmt(run.max_final_grad, 3) + "; " + rate_detail(run) +
               "; target slope in [-0.65, -0.35]";
  return res;
}

inline CriterionResult criterion_relu_lower_bound(std::uint64_t seed) {
  CriterionResult res{10, "ReLU lower bound"};
  std::vector<double> mc, normalized;
  std::ostringstream det;
  bool ratio_ok = true;
  for (int d : {8, 16, 32}) {
    LowerBoundInstance inst = build_lb_instance(d, 51);
    LowerBoundEstimate est = lb_rc_lower_estimate(inst, 10000, derive_seed(seed, "c10", static_cast<std::uint64_t>(d)));
    double ratio = est.mc_value / std::sqrt(static_cast<double>(d) * static_cast<double>(inst.n()));
    ratio_ok &= ratio >= 0.2;
    mc.push_back(est.mc_value);
    normalized.push_back(est.mc_value / std::sqrt(static_cast<double>(inst.n())));
    det << "d=" << d << " mc " << accept::fmt(est.mc_value) << " ratio " << accept::fmt(ratio) << "; ";
  }
  bool growth_ok = true;
  det << "growth of mc/sqrt(n)";
  for (std::size_t i = 1; i < normalized.size(); ++i) {
    double g = normalized[i] / normalized[i - 1];
    growth_ok &= g >= 1.2 && g <= 1.7;
    det << " " << accept::fmt(g);
  }
  det << " (raw mc growth";
  for (std::size_t i = 1; i < mc.size(); ++i) det << " " << accept::fmt(mc[i] / mc[i - 1]);
  det << ")";
  KhintchineResult k3 = khintchine_check(3, 10000, derive_seed(seed, "c10/k3"));
  KhintchineResult k51 = khintchine_check(51, 10000, derive_seed(seed, "c10/k51"));
  const double exact3 = khintchine_exact(3);
  bool khin_ok = k3.holds && k51.holds && std::abs(exact3 - 1.5) < 1e-12;
  det << "; Khintchine N=3 exact " << accept::fmt(exact3) << " MC " << accept::fmt(k3.mean_abs) << ", N=51 MC "
      << accept::fmt(k51.mean_abs) << " >= " << accept::fmt(k51.lower_bound);
  res.pass = ratio_ok && growth_ok && khin_ok;
  res.detail = det.str();
  return res;
}

inline CriterionResult criterion_margin(std::uint64_t seed) {
  CriterionResult res{11, "margin machinery"};
  ExperimentConfig cfg;
  const std::vector<double> grid = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  const Eigen::Index n = 512, d = 20;
  int violations = 0;
  for (int t = 0; t < 50; ++t) {
    std::uint64_t s = derive_seed(seed, "c11", static_cast<std::uint64_t>(t));
    Mat X = sample_covariates(CovariateDist::sphere_uniform, n, d, 1.0, derive_seed(s, "sample"));
    Mat P = sample_covariates(CovariateDist::sphere_uniform, 20 * n, d, 1.0, derive_seed(s, "population"));
    Rng rng = Rng::stream(s, "w");
    Vec w = uniform_on_sphere(d, Ball{2, 1.0}, rng);
    violations += check_phi_convergence(w, X, P, grid, 0.05).violations;
  }
  MarginFunction phi = MarginFunction::power(0.5);
  auto g = log_gamma_grid();
  MarginBound a = margin_bound_value(phi, std::pow(2.0, 12), 0.05, g);
  MarginBound b = margin_bound_value(phi, std::pow(2.0, 24), 0.05, g);
  double ratio = b.value / a.value;
  res.pass = violations == 0 && ratio >= 0.4 && ratio <= 0.6;
  res.detail = std::to_string(violations) + " phi-convergence violations over 50 seeds; bound ratio " +
               accept::fmt(ratio) + " (n 2^12 -> 2^24)";
  return res;
}

inline CriterionResult criterion_hessian(std::uint64_t seed) {
  CriterionResult res{12, "Hessian complexity"};
  ModelSpec m = accept::logistic_l2();
  const Eigen::Index d = 2;
  Vec w_star = make_w_star(m, d, "uniform", 0.0) * 0.8;
  SupSolver solver;
  solver.restarts = 2;
  solver.steps = 30;
  std::vector<double> ratios;
  std::ostringstream det;
  det << "estimate/sqrt(n):";
  for (Eigen::Index n : {8, 16, 32, 64}) {
    Dataset data = generate(m, w_star, n, derive_seed(seed, "c12/data", static_cast<std::uint64_t>(n)));
    RcEstimate est = estimate_hessian_rc(m, data, 200, solver, derive_seed(seed, "c12/rc", static_cast<std::uint64_t>(n)));
    ratios.push_back(est.value / std::sqrt(static_cast<double>(n)));
    det << " " << accept::fmt(ratios.back());
  }
  double band = *std::max_element(ratios.begin(), ratios.end()) / *std::min_element(ratios.begin(), ratios.end());
  Dataset d8 = generate(m, w_star, 8, derive_seed(seed, "c12/data", 8));
  RcEstimate exact = exact_hessian_rc_bruteforce(m, d8, ball_grid(d, m.geometry.weight_ball(), 21));
  res.pass = band <= 2.0 && exact.value <= exact.bound;
  det << "; band " << accept::fmt(band) << "; brute force n=8 " << accept::fmt(exact.value) << " <= bound "
      << accept::fmt(exact.bound);
  res.detail = det.str();
  return res;
}

using CriterionFn = CriterionResult (*)(std::uint64_t);

inline const std::vector<CriterionFn>& all_criteria() {
  static const std::vector<CriterionFn> fns = {
      criterion_derivatives,  criterion_smooth_type,   criterion_contraction_chain, criterion_rc_oracle,
      criterion_gd,           criterion_high_dim_rate, criterion_low_dim_rate,      criterion_certificate,
      criterion_regularized,  criterion_relu_lower_bound, criterion_margin,         criterion_hessian};
  return fns;
}

inline CriterionResult run_criterion(int id, std::uint64_t seed) {
  const auto& fns = all_criteria();
  if (id < 1 || id > static_cast<int>(fns.size())) throw std::invalid_argument("no such criterion");
  auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = fns[static_cast<std::size_t>(id - 1)](seed);
  } catch (const std::exception& e) {
    r.id = id;
    r.pass = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline void print_result(const CriterionResult& r, std::ostream& out, bool timing = true) {
  out << (r.pass ? "PASS" : "FAIL") << " criterion " << r.id << " " << r.name << ": " << r.detail;
  if (timing) out << " [" << accept::fmt(r.seconds, 3) << " s]";
  out << "\n";
}

inline int run_verify(const ExperimentConfig& cfg, std::ostream& out, const std::vector<int>& only = {}) {
  std::vector<int> ids = only;
  if (ids.empty())
    for (int i = 1; i <= static_cast<int>(all_criteria().size()); ++i) ids.push_back(i);
  int passed = 0;
  CsvWriter w(join_path(cfg.out, "verify.csv"), "criterion,name,pass,detail");
  for (int id : ids) {
    CriterionResult r = run_criterion(id, cfg.seed);
    print_result(r, out, cfg.timing);
    out.flush();
    passed += r.pass;
    w.row(r.id, r.name, r.pass ? 1 : 0, r.detail);
  }
  out << "verify: " << passed << "/" << ids.size() << " checks passed\n";
  return passed == static_cast<int>(ids.size()) ? kExitOk : kExitViolation;
}

inline int run_command(const ExperimentConfig& cfg, std::ostream& out) {
  validate(cfg);
  if (cfg.command == "rates") return run_rates(cfg, out);
  if (cfg.command == "rademacher") return run_rademacher(cfg, out);
  if (cfg.command == "gd-check") return run_gd_check(cfg, out);
  if (cfg.command == "lower-bound") return run_lower_bound(cfg, out);
  if (cfg.command == "margin") return run_margin(cfg, out);
  return run_verify(cfg, out);
}

}  // namespace gradconv

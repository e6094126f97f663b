#pragma once

#include "gradconv/csv.hpp"
#include "gradconv/geometry.hpp"
#include "gradconv/models.hpp"
#include "gradconv/parallel.hpp"
#include "gradconv/rng.hpp"
#include "gradconv/synthdata.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradconv {

enum class Method { pgd, sgd, regularized_gd, mirror_descent };

struct OptimizerConfig {
  Method method = Method::pgd;
  std::optional<double> step_size;  // nullopt: auto, 1/H
  int max_steps = 10000;
  double grad_tolerance = 1e-6;
  std::optional<double> lambda;  // regularized_gd; nullopt: theory formula scaled by lambda_scale
  double lambda_scale = 1.0;
  int restarts = 5;
  std::uint64_t seed = 0;
  std::optional<Vec> w0;
  bool trace = false;
};

struct TraceRow {
  int step = 0;
  double risk = 0.0;
  double grad_norm = 0.0;
};

struct OptResult {
  Vec w_hat;
  double grad_norm_final = 0.0;  // stationarity measure (projected gradient under constraints)
  double raw_grad_norm = 0.0;
  int steps_used = 0;
  double empirical_risk = 0.0;
  bool converged = false;
  int restart_index = 0;
  double lambda = 0.0;
  std::vector<TraceRow> trace;
};

inline void write_trace_csv(const OptResult& r, const std::string& path) {
  CsvWriter w(path, "step,risk,grad_norm");
  for (const auto& t : r.trace) w.row(t.step, t.risk, t.grad_norm);
}

// Empirical risk of a model on a dataset, in the shape the solvers consume.
struct EmpiricalObjective {
  const ModelSpec* model;
  const Dataset* data;

  Eigen::Index dim() const { return data->d(); }
  Eigen::Index samples() const { return data->n(); }
  double value(const Vec& w) const { return empirical_risk(*model, data->X, data->y, w); }
  Vec gradient(const Vec& w) const { return empirical_grad(*model, data->X, data->y, w); }
  Vec sample_gradient(Eigen::Index t, const Vec& w) const {
    return scalar_d1(*model, data->X.row(t).dot(w), data->y[t]) * data->X.row(t).transpose();
  }
};

inline Vec uniform_in_ball(Eigen::Index d, const Ball& ball, Rng& rng) {
  Vec v(d);
  if (ball.exponent == 2) {
    double n = 0.0;
    while (n == 0.0) {
      for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
      n = v.norm();
    }
    double r = ball.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    return project_l2(v * (r / n), ball.radius);
  }
  if (ball.exponent == 1) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      v[i] = rng.exponential();
      total += v[i];
    }
    total += rng.exponential();
    for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.sign() * ball.radius * v[i] / total;
    return project_l1(v, ball.radius);
  }
  throw std::invalid_argument("uniform_in_ball supports exponents 1 and 2");
}

inline Vec uniform_on_sphere(Eigen::Index d, const Ball& ball, Rng& rng) {
  if (ball.exponent == 2) {
    Vec v(d);
    double n = 0.0;
    while (n == 0.0) {
      for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
      n = v.norm();
    }
    return project_l2(v * (ball.radius / n), ball.radius);
  }
  Vec v = uniform_in_ball(d, ball, rng);
  double s = v.cwiseAbs().sum();
  return s > 0 ? project_l1(v * (ball.radius / s), ball.radius) : v;
}

struct ProblemGeometry {
  Ball ball;
  Exponent grad_norm = Exponent::finite(2.0);
  double smoothness = 1.0;
};

inline ProblemGeometry problem_geometry(const ModelSpec& model) {
  return {model.geometry.weight_ball(), model.geometry.primal_exponent, model.constants.loss_smoothness_H};
}

namespace detail {

template <typename Objective>
OptResult pgd_single(const Objective& obj, const ProblemGeometry& geo, const OptimizerConfig& cfg, Vec w,
                     int restart) {
  const double eta = cfg.step_size.value_or(1.0 / geo.smoothness);
  if (!(eta > 0)) throw std::invalid_argument("pgd step size must be positive");
  OptResult r;
  r.restart_index = restart;
  w = project(w, geo.ball);
  int step = 0;
  for (;; ++step) {
    Vec g = obj.gradient(w);
    Vec next = project(w - eta * g, geo.ball);
    double pg = norm((w - next) / eta, geo.grad_norm);
    if (cfg.trace) r.trace.push_back({step, obj.value(w), pg});
    if (pg <= cfg.grad_tolerance) {
      r.converged = true;
      r.grad_norm_final = pg;
      r.raw_grad_norm = norm(g, geo.grad_norm);
      break;
    }
    if (step >= cfg.max_steps) {
      r.grad_norm_final = pg;
      r.raw_grad_norm = norm(g, geo.grad_norm);
      break;
    }
    w = next;
  }
  r.steps_used = step;
  r.w_hat = w;
  r.empirical_risk = obj.value(w);
  return r;
}

}  // namespace detail

template <typename Objective>
OptResult pgd_objective(const Objective& obj, const ProblemGeometry& geo, const OptimizerConfig& cfg) {
  if (!(cfg.grad_tolerance > 0)) throw std::invalid_argument("grad_tolerance must be positive");
  const int restarts = std::max(1, cfg.restarts);
  auto runs = parallel_map<OptResult>(static_cast<std::size_t>(restarts), [&](std::size_t r) {
    Vec w0;
    if (r == 0 && cfg.w0) {
      w0 = *cfg.w0;
    } else {
      Rng rng = Rng::stream(cfg.seed, "restart", r);
      w0 = uniform_in_ball(obj.dim(), geo.ball, rng);
    }
    return detail::pgd_single(obj, geo, cfg, w0, static_cast<int>(r));
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].grad_norm_final < runs[best].grad_norm_final) best = r;
  return runs[best];
}

inline OptResult pgd(const ModelSpec& model, const Dataset& data, const OptimizerConfig& cfg) {
  if (!model.smooth()) throw std::invalid_argument("pgd requires a smooth loss family");
  EmpiricalObjective obj{&model, &data};
  return pgd_objective(obj, problem_geometry(model), cfg);
}

template <typename Objective>
OptResult sgd_objective(const Objective& obj, const ProblemGeometry& geo, const OptimizerConfig& cfg) {
  const double eta = cfg.step_size.value_or(1.0 / geo.smoothness);
  if (!(eta >= 0)) throw std::invalid_argument("sgd step size must be nonnegative");
  Rng rng = Rng::stream(cfg.seed, "sgd");
  Vec w = cfg.w0 ? project(*cfg.w0, geo.ball) : uniform_in_ball(obj.dim(), geo.ball, rng);
  const int log_every = std::max(1, cfg.max_steps / 50);
  auto measure = [&](const Vec& v, Vec* g_out) {
    Vec g = obj.gradient(v);
    double pg = eta > 0 ? norm((v - project(v - eta * g, geo.ball)) / eta, geo.grad_norm) : norm(g, geo.grad_norm);
    if (g_out) *g_out = g;
    return pg;
  };
  OptResult best;
  best.w_hat = w;
  best.grad_norm_final = measure(w, nullptr);
  int step = 0;
  if (obj.samples() > 0 && best.grad_norm_final > cfg.grad_tolerance) {
    for (step = 1; step <= cfg.max_steps; ++step) {
      Eigen::Index t = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(obj.samples())));
      w = project(w - eta * obj.sample_gradient(t, w), geo.ball);
      if (step % log_every == 0 || step == cfg.max_steps) {
        double pg = measure(w, nullptr);
        if (cfg.trace) best.trace.push_back({step, obj.value(w), pg});
        if (pg < best.grad_norm_final) {
          best.grad_norm_final = pg;
          best.w_hat = w;
        }
        if (pg <= cfg.grad_tolerance) break;
      }
    }
  }
  Vec g;
  best.grad_norm_final = measure(best.w_hat, &g);
  best.raw_grad_norm = norm(g, geo.grad_norm);
  best.converged = best.grad_norm_final <= cfg.grad_tolerance;
  best.steps_used = std::min(step, cfg.max_steps);
  best.empirical_risk = obj.value(best.w_hat);
  return best;
}

inline OptResult sgd(const ModelSpec& model, const Dataset& data, const OptimizerConfig& cfg) {
  if (!model.smooth()) throw std::invalid_argument("sgd requires a smooth loss family");
  EmpiricalObjective obj{&model, &data};
  return sgd_objective(obj, problem_geometry(model), cfg);
}

// lambda = kappa * sqrt(R^4 C^6 / c^2 * log(log(C R n) / delta) / n).
inline double regularization_weight(const ModelSpec& model, Eigen::Index n, double delta, double kappa) {
  const double C = model.constants.C_upper, c = model.constants.c_lower, R = model.geometry.radius_R;
  const double inner = std::log(C * R * static_cast<double>(n)) / delta;
  if (!(inner > 1.0)) return 0.0;
  return kappa * std::sqrt(std::pow(R, 4) * std::pow(C, 6) / (c * c) * std::log(inner) / static_cast<double>(n));
}

// Unconstrained gradient descent on L_n(w) + lambda/2 ||w||^2 with backtracking;
// the step never drops below 1/(H + lambda).
template <typename Objective>
OptResult ridge_descent(const Objective& obj, double H, double lambda, const OptimizerConfig& cfg) {
  if (!(lambda > 0)) throw std::invalid_argument("regularization weight must be positive");
  const double floor_step = 1.0 / (H + lambda);
  auto F = [&](const Vec& v) { return obj.value(v) + 0.5 * lambda * v.squaredNorm(); };
  Vec w = cfg.w0 ? *cfg.w0 : Vec::Zero(obj.dim());
  double t = floor_step;
  OptResult r;
  r.lambda = lambda;
  double f = F(w);
  int step = 0;
  for (;; ++step) {
    Vec g = obj.gradient(w) + lambda * w;
    double gn = g.norm();
    if (cfg.trace) r.trace.push_back({step, f, gn});
    if (gn <= cfg.grad_tolerance || step >= cfg.max_steps) {
      r.grad_norm_final = gn;
      r.converged = gn <= cfg.grad_tolerance;
      break;
    }
    t = std::max(floor_step, 2.0 * t);
    for (;;) {
      Vec cand = w - t * g;
      double fc = F(cand);
      if (fc <= f - 0.5 * t * gn * gn || t <= floor_step) {
        w = std::move(cand);
        f = fc;
        break;
      }
      t = std::max(floor_step, 0.5 * t);
    }
  }
  r.steps_used = step;
  r.w_hat = w;
  r.empirical_risk = obj.value(w);
  r.raw_grad_norm = obj.gradient(w).norm();
  return r;
}

inline OptResult regularized_stationary(const ModelSpec& model, const Dataset& data, double delta,
                                        const OptimizerConfig& cfg) {
  if (!model.smooth()) throw std::invalid_argument("regularized descent requires a smooth loss family");
  if (!(model.geometry.primal_exponent == Exponent::finite(2.0)))
    throw std::invalid_argument("regularized descent requires l2 geometry");
  double lambda = cfg.lambda ? *cfg.lambda : regularization_weight(model, data.n(), delta, cfg.lambda_scale);
  if (!(lambda > 0)) throw std::invalid_argument("regularization weight must be positive");
  EmpiricalObjective obj{&model, &data};
  return ridge_descent(obj, model.constants.loss_smoothness_H, lambda, cfg);
}

namespace detail {

// Gradient of 1/2 ||v||_r^2.
inline Vec half_sq_norm_grad(const Vec& v, double r) {
  double nv = norm(v, Exponent::finite(r));
  if (nv == 0.0) return Vec::Zero(v.size());
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double a = std::abs(v[i]);
    out[i] = (v[i] < 0 ? -1.0 : 1.0) * std::pow(a / nv, r - 1.0) * nv;
  }
  return out;
}

}  // namespace detail

struct MirrorResult {
  OptResult random_iterate;
  OptResult best_iterate;
  int tau = 0;
  std::vector<Vec> iterates;
};

inline OptResult finish_result(const ModelSpec& model, const Dataset& data, const Vec& w, int steps) {
  OptResult r;
  r.w_hat = w;
  Vec g = empirical_grad(model, data.X, data.y, w);
  r.raw_grad_norm = norm(g, model.geometry.primal_exponent);
  r.grad_norm_final = r.raw_grad_norm;
  r.empirical_risk = empirical_risk(model, data.X, data.y, w);
  r.steps_used = steps;
  return r;
}

// One pass, one sample per step, in data order.
inline MirrorResult online_descent(const ModelSpec& model, const Dataset& data, const OptimizerConfig& cfg,
                                   double p, bool keep_iterates) {
  if (!model.smooth()) throw std::invalid_argument("mirror descent requires a smooth loss family");
  if (!(p >= 2.0) || !std::isfinite(p)) throw std::invalid_argument("mirror descent needs finite p >= 2");
  const Eigen::Index n = data.n(), d = data.d();
  const double q = p / (p - 1.0);
  const double B = model.geometry.radius_B;
  const double beta = p - 1.0;
  const double G = model.constants.grad_range_G;
  const double eta =
      cfg.step_size.value_or(n > 0 ? std::sqrt(2.0 * B * B * beta / (G * G * static_cast<double>(n))) : 0.0);
  Rng rng = Rng::stream(cfg.seed, "md/output");
  MirrorResult res;
  res.tau = n > 0 ? static_cast<int>(rng.index(static_cast<std::size_t>(n))) : 0;
  Vec w = cfg.w0 ? *cfg.w0 : Vec::Zero(d);
  Vec chosen = w;
  const Eigen::Index log_every = std::max<Eigen::Index>(1, n / 32);
  Vec best_w = w;
  double best_gn = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < n; ++t) {
    if (keep_iterates) res.iterates.push_back(w);
    if (t == res.tau) chosen = w;
    if (t % log_every == 0) {
      double gn = norm(empirical_grad(model, data.X, data.y, w), model.geometry.primal_exponent);
      if (gn < best_gn) best_gn = gn, best_w = w;
    }
    Vec g = data.X.row(t).transpose() * scalar_d1(model, data.X.row(t).dot(w), data.y[t]);
    if (p == 2.0) {
      w = project_l2(w - eta * g, B);
    } else {
      Vec theta = detail::half_sq_norm_grad(w, q) - eta * g;
      Vec next = detail::half_sq_norm_grad(theta, p);
      double nq = norm(next, Exponent::finite(q));
      if (nq > B) next *= B / nq;
      w = std::move(next);
    }
  }
  res.random_iterate = finish_result(model, data, chosen, static_cast<int>(n));
  res.best_iterate = finish_result(model, data, best_w, static_cast<int>(n));
  res.random_iterate.converged = res.random_iterate.grad_norm_final <= cfg.grad_tolerance;
  res.best_iterate.converged = res.best_iterate.grad_norm_final <= cfg.grad_tolerance;
  return res;
}

inline MirrorResult mirror_descent(const ModelSpec& model, const Dataset& data, const OptimizerConfig& cfg, double p,
                                   bool keep_iterates = false) {
  return online_descent(model, data, cfg, p, keep_iterates);
}

// Projected online gradient descent: same arithmetic as the p = 2 mirror step.
inline MirrorResult online_pgd(const ModelSpec& model, const Dataset& data, const OptimizerConfig& cfg,
                               bool keep_iterates = false) {
  if (!(model.geometry.dual_exponent == Exponent::finite(2.0)))
    throw std::invalid_argument("online pgd requires l2 geometry");
  const Eigen::Index n = data.n(), d = data.d();
  const double B = model.geometry.radius_B;
  const double G = model.constants.grad_range_G;
  const double eta = cfg.step_size.value_or(n > 0 ? std::sqrt(2.0 * B * B / (G * G * static_cast<double>(n))) : 0.0);
  Rng rng = Rng::stream(cfg.seed, "md/output");
  MirrorResult res;
  res.tau = n > 0 ? static_cast<int>(rng.index(static_cast<std::size_t>(n))) : 0;
  Vec w = cfg.w0 ? *cfg.w0 : Vec::Zero(d);
  Vec chosen = w;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (keep_iterates) res.iterates.push_back(w);
    if (t == res.tau) chosen = w;
    Vec g = data.X.row(t).transpose() * scalar_d1(model, data.X.row(t).dot(w), data.y[t]);
    w = project_l2(w - eta * g, B);
  }
  res.random_iterate = finish_result(model, data, chosen, static_cast<int>(n));
  res.best_iterate = res.random_iterate;
  return res;
}

enum class SampleRegime { high_dim, low_dim };

struct MetaResult {
  OptResult opt;
  Eigen::Index n_used = 0;
  double excess_risk_estimate = 0.0;
  double excess_risk_stderr = 0.0;
  SampleRegime active_branch = SampleRegime::high_dim;
  bool regime_matches = true;
};

inline Eigen::Index meta_sample_size(double epsilon, Eigen::Index d) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1]");
  double a = 1.0 / (epsilon * epsilon), b = static_cast<double>(d) / epsilon;
  double m = std::min(a, b);
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(m - 1e-9 * m)));
}

inline MetaResult meta_algorithm(const ModelSpec& model, const Vec& w_star, double epsilon, SampleRegime regime,
                                 std::uint64_t seed, const DesignSpec& design = {}, Eigen::Index oracle_m = 100000,
                                 OptimizerConfig cfg = {}) {
  MetaResult res;
  const Eigen::Index d = w_star.size();
  res.n_used = meta_sample_size(epsilon, d);
  res.active_branch = 1.0 / (epsilon * epsilon) <= static_cast<double>(d) / epsilon ? SampleRegime::high_dim
                                                                                     : SampleRegime::low_dim;
  res.regime_matches = res.active_branch == regime;
  Dataset data = generate(model, w_star, res.n_used, derive_seed(seed, "meta/data"), design);
  cfg.grad_tolerance = 1.0 / std::sqrt(static_cast<double>(res.n_used));
  cfg.seed = derive_seed(seed, "meta/opt");
  res.opt = pgd(model, data, cfg);
  Dataset oracle = generate(model, w_star, oracle_m, derive_seed(seed, "meta/oracle"), design);
  auto [ex, se] = paired_excess(model, oracle, res.opt.w_hat, w_star);
  res.excess_risk_estimate = ex;
  res.excess_risk_stderr = se;
  return res;
}

}  // namespace gradconv

#pragma once

#include "gradconv/csv.hpp"
#include "gradconv/geometry.hpp"
#include "gradconv/models.hpp"
#include "gradconv/optimize.hpp"
#include "gradconv/parallel.hpp"
#include "gradconv/rademacher.hpp"
#include "gradconv/synthdata.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradconv {

enum class GdRegime { norm_based, l2_lowdim, sparse };

inline std::string regime_name(GdRegime r) {
  switch (r) {
    case GdRegime::norm_based: return "norm_based";
    case GdRegime::l2_lowdim: return "l2_lowdim";
    case GdRegime::sparse: return "sparse";
  }
  return "?";
}

inline GdRegime parse_regime(const std::string& s) {
  if (s == "norm_based") return GdRegime::norm_based;
  if (s == "l2_lowdim") return GdRegime::l2_lowdim;
  if (s == "sparse") return GdRegime::sparse;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

struct GdSpec {
  double alpha = 1.0;
  double mu = 1.0;
  Exponent norm_p = Exponent::finite(2.0);
  GdRegime regime = GdRegime::norm_based;
  std::string provenance;
};

inline constexpr double kSpectrumThreshold = 1e-10;

inline GdSpec gd_constants(const ModelSpec& model, const CovarianceSummary& cov, GdRegime regime) {
  if (!model.smooth()) throw std::invalid_argument("GD constants exist only for glm and robust regression");
  const double B = model.geometry.radius_B;
  const double C = model.constants.C_upper, c = model.constants.c_lower;
  const bool glm = model.family == Family::glm;
  GdSpec gd;
  gd.regime = regime;
  gd.norm_p = model.geometry.primal_exponent;
  switch (regime) {
    case GdRegime::norm_based:
      gd.alpha = 1.0;
      gd.mu = B * C / c;
      gd.provenance = "mu = B C / c";
      break;
    case GdRegime::l2_lowdim:
      if (!(cov.lambda_min > kSpectrumThreshold)) throw std::domain_error("l2_lowdim regime unavailable: lambda_min ~ 0");
      gd.alpha = 2.0;
      gd.mu = glm ? C / (4.0 * c * c * c * cov.lambda_min) : C / (2.0 * c * c * cov.lambda_min);
      gd.provenance = glm ? "mu = C / (4 c^3 lambda_min)" : "mu = C / (2 c^2 lambda_min)";
      gd.norm_p = Exponent::finite(2.0);
      break;
    case GdRegime::sparse: {
      if (!(cov.psi_min_estimate > kSpectrumThreshold)) throw std::domain_error("sparse regime unavailable: psi_min ~ 0");
      const double s = static_cast<double>(cov.support_S.size());
      gd.alpha = 2.0;
      gd.mu = glm ? C * s / (c * c * c * cov.psi_min_estimate) : 2.0 * C * s / (c * c * cov.psi_min_estimate);
      gd.provenance = glm ? "mu = C s / (c^3 psi_min)" : "mu = 2 C s / (c^2 psi_min)";
      gd.norm_p = Exponent::infinity();
      break;
    }
  }
  return gd;
}

enum class Verdict { holds, violation, inconclusive };

inline std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::violation: return "violation";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct ProbeRow {
  int probe_id = 0;
  double excess = 0.0;
  double excess_stderr = 0.0;
  double gradnorm = 0.0;
  double rhs = 0.0;
  double stderr = 0.0;
  double slack = 0.0;  // rhs + 3 stderr - excess
  Verdict verdict = Verdict::holds;
};

struct GdReport {
  int violations = 0;
  int inconclusive = 0;
  int holds = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  std::vector<ProbeRow> rows;
};

inline void write_gd_report_csv(const GdReport& rep, const std::string& path) {
  CsvWriter w(path, "probe_id,excess,gradnorm,rhs,slack,verdict");
  for (const auto& r : rep.rows) w.row(r.probe_id, r.excess, r.gradnorm, r.rhs, r.slack, verdict_name(r.verdict));
}

// 60% uniform in the ball, 20% on its boundary, 20% on [w*, boundary].
inline std::vector<Vec> gd_probes(const Vec& w_star, const Ball& ball, int count, std::uint64_t seed) {
  std::vector<Vec> probes;
  const int uniform = static_cast<int>(std::lround(0.6 * count));
  const int boundary = static_cast<int>(std::lround(0.2 * count));
  for (int k = 0; k < count; ++k) {
    Rng rng = Rng::stream(seed, "gd/probe", static_cast<std::uint64_t>(k));
    if (k < uniform) {
      probes.push_back(uniform_in_ball(w_star.size(), ball, rng));
    } else if (k < uniform + boundary) {
      probes.push_back(uniform_on_sphere(w_star.size(), ball, rng));
    } else {
      Vec b = uniform_on_sphere(w_star.size(), ball, rng);
      probes.push_back(project(w_star + rng.uniform() * (b - w_star), ball));
    }
  }
  return probes;
}

inline ProbeRow gd_probe(const ModelSpec& model, const Dataset& oracle, const Vec& w_star, const GdSpec& gd,
                         const Vec& w, int id) {
  ProbeRow row;
  row.probe_id = id;
  auto [ex, ex_se] = paired_excess(model, oracle, w, w_star);
  PopulationEstimate pe = evaluate_population(model, oracle, w);
  row.excess = ex;
  row.excess_stderr = ex_se;
  row.gradnorm = norm(pe.grad, gd.norm_p);
  row.rhs = gd.mu * std::pow(row.gradnorm, gd.alpha);
  double rhs_se = gd.mu * gd.alpha * std::pow(row.gradnorm, gd.alpha - 1.0) * pe.grad_norm_stderr;
  row.stderr = std::sqrt(ex_se * ex_se + rhs_se * rhs_se);
  row.slack = row.rhs + 3.0 * row.stderr - row.excess;
  const double gap = row.excess - row.rhs;
  if (gap <= 3.0 * row.stderr)
    row.verdict = Verdict::holds;
  else if (row.stderr > 0.1 * gap)
    row.verdict = Verdict::inconclusive;
  else
    row.verdict = Verdict::violation;
  return row;
}

inline GdReport verify_gd(const ModelSpec& model, const Vec& w_star, const GdSpec& gd, int probe_count,
                          Eigen::Index oracle_m, std::uint64_t seed, const DesignSpec& design = {}) {
  Dataset oracle = generate(model, w_star, oracle_m, derive_seed(seed, "gd/oracle"), design);
  Ball ball = model.geometry.weight_ball();
  // Sparse clause: probes stay inside ||w||_1 <= ||w*||_1.
  if (gd.regime == GdRegime::sparse) ball = Ball{1, std::max(1e-12, w_star.cwiseAbs().sum())};
  std::vector<Vec> probes = gd_probes(w_star, ball, probe_count, seed);
  GdReport rep;
  rep.rows = parallel_map<ProbeRow>(probes.size(), [&](std::size_t k) {
    return gd_probe(model, oracle, w_star, gd, probes[k], static_cast<int>(k));
  });
  for (const auto& r : rep.rows) {
    rep.worst_slack = std::min(rep.worst_slack, r.slack);
    rep.violations += r.verdict == Verdict::violation;
    rep.inconclusive += r.verdict == Verdict::inconclusive;
    rep.holds += r.verdict == Verdict::holds;
  }
  return rep;
}

struct Certificate {
  double grad_term = 0.0;
  double rc_term = 0.0;
  double conf_term = 0.0;
  double total = 0.0;
  double delta = 0.05;
  std::string constants_used;
};

// total = 2 mu (||grad L_n(w)||^a + (4 RC / n + 4 G log(2/delta) / n)^a + G (log(1/delta) / n)^(a/2)).
inline Certificate excess_risk_certificate(const ModelSpec& model, const GdSpec& gd, double grad_norm, Eigen::Index n,
                                           double rc_value, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (n < 1) throw std::invalid_argument("certificate needs n >= 1");
  const double G = model.constants.grad_range_G;
  const double nd = static_cast<double>(n);
  Certificate c;
  c.delta = delta;
  c.grad_term = std::pow(std::max(0.0, grad_norm), gd.alpha);
  c.rc_term = std::pow(std::max(0.0, 4.0 * rc_value / nd + 4.0 * G * std::log(2.0 / delta) / nd), gd.alpha);
  c.conf_term = G * std::pow(std::log(1.0 / delta) / nd, gd.alpha / 2.0);
  c.total = 2.0 * gd.mu * (c.grad_term + c.rc_term + c.conf_term);
  c.constants_used = "alpha=" + fmt_double(gd.alpha) + ";mu=" + fmt_double(gd.mu) + " (" + gd.provenance +
                     ");c=G=" + fmt_double(G) + ";leading factor 2";
  return c;
}

inline Certificate excess_risk_certificate(const ModelSpec& model, const GdSpec& gd, const OptResult& opt,
                                           const Dataset& data, const RcEstimate& rc, double delta) {
  return excess_risk_certificate(model, gd, opt.raw_grad_norm, data.n(), rc.value, delta);
}

struct Discrepancy {
  double value = 0.0;
  double stderr = 0.0;
  Vec argmax;
};

// Lower estimate of sup_w ||grad L_n(w) - grad L_D(w)||, with L_D from a shared oracle sample.
inline Discrepancy gradient_discrepancy(const ModelSpec& model, const Dataset& data, const Dataset& oracle,
                                        const SupSolver& solver, std::uint64_t seed) {
  if (!model.smooth()) throw std::invalid_argument("gradient discrepancy ascent needs a smooth family");
  const Ball ball = model.geometry.weight_ball();
  const Exponent p = model.geometry.primal_exponent;
  const Eigen::Index d = data.d();
  auto diff = [&](const Vec& w) {
    return Vec(empirical_grad(model, data.X, data.y, w) - empirical_grad(model, oracle.X, oracle.y, w));
  };
  auto hvp = [&](const Mat& X, const Vec& y, const Vec& w, const Vec& v) {
    if (X.rows() == 0) return Vec::Zero(d).eval();
    Vec u = X * w, xv = X * v;
    Vec a(u.size());
    for (Eigen::Index t = 0; t < u.size(); ++t) a[t] = scalar_d2(model, u[t], y[t]) * xv[t];
    return Vec(X.transpose() * a / static_cast<double>(X.rows()));
  };
  auto ascent_grad = [&](const Vec& w, const Vec& D) {
    Vec v = norm_gradient(D, p);
    return Vec(hvp(data.X, data.y, w, v) - hvp(oracle.X, oracle.y, w, v));
  };
  const double eta = solver.step_size.value_or(1.0 / (2.0 * model.constants.loss_smoothness_H));
  struct Run {
    double value = 0.0;
    Vec w;
  };
  auto runs = parallel_map<Run>(static_cast<std::size_t>(std::max(1, solver.restarts)), [&](std::size_t r) {
    Rng rng = Rng::stream(seed, "disc/restart", r);
    Vec w = uniform_in_ball(d, ball, rng);
    Run best{-1.0, w};
    for (int s = 0; s <= solver.steps; ++s) {
      Vec D = diff(w);
      double v = norm(D, p);
      if (v > best.value) best = {v, w};
      if (s == solver.steps) break;
      Vec g = ascent_grad(w, D);
      if (g.squaredNorm() == 0.0) break;
      w = project(w + eta * g, ball);
    }
    return best;
  });
  std::size_t k = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].value > runs[k].value) k = r;
  Discrepancy out;
  out.value = std::max(0.0, runs[k].value);
  out.argmax = runs[k].w;
  out.stderr = evaluate_population(model, oracle, out.argmax).grad_norm_stderr;
  return out;
}

}  // namespace gradconv

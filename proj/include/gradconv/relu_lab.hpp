#pragma once

#include "gradconv/csv.hpp"
#include "gradconv/geometry.hpp"
#include "gradconv/models.hpp"
#include "gradconv/optimize.hpp"
#include "gradconv/parallel.hpp"
#include "gradconv/rademacher.hpp"
#include "gradconv/rng.hpp"
#include "gradconv/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradconv {

struct LowerBoundInstance {
  int d = 0;
  int N = 0;
  Mat X;
  Vec y;
  Mat B_matrix;
  Mat B_inverse;

  Eigen::Index n() const { return X.rows(); }
};

inline LowerBoundInstance build_lb_instance(int d, int N) {
  if (d < 3) throw std::invalid_argument("lower-bound instance needs d >= 3");
  if (N < 1 || N % 2 == 0) throw std::invalid_argument("segment length N must be odd");
  LowerBoundInstance inst;
  inst.d = d;
  inst.N = N;
  const double sd = std::sqrt(static_cast<double>(d));
  inst.B_matrix = (Mat::Ones(d, d) - Mat::Identity(d, d)) / sd;
  inst.B_inverse = sd * (Mat::Ones(d, d) / static_cast<double>(d - 1) - Mat::Identity(d, d));
  double err = (inst.B_matrix * inst.B_inverse - Mat::Identity(d, d)).cwiseAbs().maxCoeff();
  if (err > 1e-10) throw std::logic_error("closed-form inverse check failed");
  const Eigen::Index n = static_cast<Eigen::Index>(N) * d;
  inst.X.resize(n, d);
  inst.y = Vec::Constant(n, -1.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < N; ++k) inst.X.row(static_cast<Eigen::Index>(i) * N + k) = inst.B_matrix.row(i);
  return inst;
}

inline Vec sign_pattern_weight(const LowerBoundInstance& inst, const Vec& sigma) {
  if (sigma.size() != inst.d) throw std::invalid_argument("sign pattern has wrong length");
  Vec v = inst.B_inverse * sigma;
  double nv = v.norm();
  if (!(nv > 0.0)) throw std::logic_error("B^{-1} sigma vanished");
  Vec w = v / nv;
  Vec m = inst.B_matrix * w;
  for (int i = 0; i < inst.d; ++i)
    if (!(m[i] * sigma[i] > 0.0)) throw std::logic_error("sign pattern not reproduced strictly");
  return w;
}

struct LowerBoundEstimate {
  double mc_value = 0.0;
  double analytic_lb = 0.0;
  double stderr = 0.0;
  int draws = 0;
};

namespace detail {

inline Vec segment_sums(const LowerBoundInstance& inst, Rng& rng) {
  Vec phi = Vec::Zero(inst.d);
  for (int i = 0; i < inst.d; ++i)
    for (int k = 0; k < inst.N; ++k) phi[i] += rng.sign();
  return phi;
}

// ||sum_t eps_t grad loss(w; x_t, -1)||_2 with rows grouped by segment.
inline double lb_objective(const LowerBoundInstance& inst, const ModelSpec& relu, const Vec& w, const Vec& phi) {
  Vec s = Vec::Zero(inst.d);
  for (int i = 0; i < inst.d; ++i) s += phi[i] * grad(relu, w, inst.B_matrix.row(i).transpose(), -1.0);
  return s.norm();
}

}  // namespace detail

inline LowerBoundEstimate lb_rc_lower_estimate(const LowerBoundInstance& inst, int draws, std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("lower-bound estimate needs draws >= 1");
  const ModelSpec relu = make_relu();
  struct Out {
    double value, abs_sum;
  };
  auto outs = parallel_map<Out>(static_cast<std::size_t>(draws), [&](std::size_t k) {
    Rng rng = Rng::stream(seed, "lb", k);
    Vec phi = detail::segment_sums(inst, rng);
    Vec sigma = phi.unaryExpr([](double v) { return v > 0 ? 1.0 : -1.0; });
    Vec w = sign_pattern_weight(inst, sigma);
    return Out{detail::lb_objective(inst, relu, w, phi), phi.cwiseAbs().sum()};
  });
  std::vector<double> vals, abs_sums;
  for (const auto& o : outs) vals.push_back(o.value), abs_sums.push_back(o.abs_sum);
  LowerBoundEstimate est;
  est.draws = draws;
  std::tie(est.mc_value, est.stderr) = mean_stderr(vals);
  const double e_abs = mean_stderr(abs_sums).first;
  est.analytic_lb = 0.5 * e_abs - e_abs / std::sqrt(static_cast<double>(inst.d));
  return est;
}

// Max over all 2^d indicator patterns for one segment-sum vector phi.
inline double lb_exhaustive_pattern_sup(const LowerBoundInstance& inst, const Vec& phi) {
  if (inst.d > 16) throw std::invalid_argument("pattern enumeration limited to d <= 16");
  double best = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << inst.d); ++mask) {
    Vec s = Vec::Zero(inst.d);
    for (int i = 0; i < inst.d; ++i)
      if (mask & (1u << i)) s += phi[i] * inst.B_matrix.row(i).transpose();
    best = std::max(best, s.norm());
  }
  return best;
}

struct KhintchineResult {
  double mean_abs = 0.0;
  double stderr = 0.0;
  double lower_bound = 0.0;
  bool holds = false;
};

inline KhintchineResult khintchine_check(int N, int draws, std::uint64_t seed) {
  if (N < 1 || N % 2 == 0) throw std::invalid_argument("Khintchine check needs odd N");
  std::vector<double> vals(draws);
  parallel_for(static_cast<std::size_t>(draws), [&](std::size_t k) {
    Rng rng = Rng::stream(seed, "khintchine", k);
    double s = 0.0;
    for (int t = 0; t < N; ++t) s += rng.sign();
    vals[k] = std::abs(s);
  });
  KhintchineResult r;
  std::tie(r.mean_abs, r.stderr) = mean_stderr(vals);
  r.lower_bound = std::sqrt(N / 2.0);
  r.holds = r.mean_abs >= r.lower_bound - 3.0 * r.stderr;
  return r;
}

// E|sum_{t<=N} eps_t| by the binomial distribution.
inline double khintchine_exact(int N) {
  double total = 0.0, logc = 0.0;
  for (int k = 0; k <= N; ++k) {
    if (k > 0) logc += std::log(static_cast<double>(N - k + 1)) - std::log(static_cast<double>(k));
    total += std::exp(logc - N * std::log(2.0)) * std::abs(2.0 * k - N);
  }
  return total;
}

enum class MarginTag { power, table };

class MarginFunction {
 public:
  static MarginFunction power(double exponent) {
    if (!(exponent >= 0.0)) throw std::invalid_argument("margin power must be nonnegative");
    MarginFunction f;
    f.tag_ = MarginTag::power;
    f.exponent_ = exponent;
    f.fn_ = [exponent](double g) {
      g = std::clamp(g, 0.0, 1.0);
      return exponent == 0.0 ? 1.0 : std::pow(g, exponent);
    };
    f.validate();
    return f;
  }

  // Right-continuous step function: value phi_k on [gamma_k, gamma_{k+1}),
  // floor below gamma_0.
  static MarginFunction table(std::vector<double> gammas, std::vector<double> values, double floor = 0.0) {
    if (gammas.size() != values.size()) throw std::invalid_argument("margin table size mismatch");
    MarginFunction f;
    f.tag_ = MarginTag::table;
    f.fn_ = [gammas, values, floor](double g) {
      auto it = std::upper_bound(gammas.begin(), gammas.end(), g);
      if (it == gammas.begin()) return floor;
      return values[static_cast<std::size_t>(it - gammas.begin()) - 1];
    };
    f.validate();
    return f;
  }

  static MarginFunction constant(double v) { return table({}, {}, v); }
  static MarginFunction step_at(double gamma0) { return table({gamma0}, {1.0}, 0.0); }

  double operator()(double gamma) const { return fn_(gamma); }
  MarginTag tag() const { return tag_; }
  double exponent() const { return exponent_; }

  void validate() const {
    double prev = fn_(0.0);
    if (prev < 0.0) throw std::invalid_argument("margin function negative at 0");
    for (int i = 1; i <= 1000; ++i) {
      double v = fn_(i / 1000.0);
      if (v < prev - 1e-15) throw std::invalid_argument("margin function not nondecreasing");
      prev = v;
    }
    if (fn_(1.0) > 1.0 + 1e-15) throw std::invalid_argument("margin function exceeds 1 at gamma = 1");
  }

 private:
  MarginTag tag_ = MarginTag::power;
  double exponent_ = 0.0;
  std::function<double(double)> fn_;
};

struct MarginProfile {
  std::vector<double> sorted_normalized_margins;

  // Fraction of margins <= gamma.
  double xi_hat(double gamma) const {
    if (sorted_normalized_margins.empty()) return 0.0;
    auto it = std::upper_bound(sorted_normalized_margins.begin(), sorted_normalized_margins.end(), gamma);
    return static_cast<double>(it - sorted_normalized_margins.begin()) /
           static_cast<double>(sorted_normalized_margins.size());
  }

  // xi_hat <= phi everywhere iff it holds at each breakpoint.
  bool member_of(const MarginFunction& phi) const {
    const auto& m = sorted_normalized_margins;
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (k + 1 < m.size() && m[k + 1] == m[k]) continue;
      if (xi_hat(m[k]) > phi(m[k]) + 1e-15) return false;
    }
    return true;
  }
};

inline MarginProfile margin_profile(const Vec& w, const Mat& X) {
  if (w.size() != X.cols()) throw std::invalid_argument("dimension mismatch in margin profile");
  MarginProfile p;
  const double nw = w.norm();
  p.sorted_normalized_margins.reserve(X.rows());
  for (Eigen::Index t = 0; t < X.rows(); ++t) {
    double nx = X.row(t).norm();
    double m = (nw == 0.0 || nx == 0.0) ? 0.0 : std::abs(X.row(t).dot(w)) / (nw * nx);
    p.sorted_normalized_margins.push_back(std::min(1.0, m));
  }
  std::sort(p.sorted_normalized_margins.begin(), p.sorted_normalized_margins.end());
  return p;
}

// Lipschitz surrogate: 1 on |t| <= gamma, 0 beyond 2 gamma, linear between.
inline double margin_surrogate(double t, double gamma) {
  double a = std::abs(t);
  if (a <= gamma) return 1.0;
  if (a >= 2.0 * gamma) return 0.0;
  return 2.0 - a / gamma;
}

inline double phi_convergence_slack(double gamma, Eigen::Index n, double delta) {
  const double nd = static_cast<double>(n);
  double inner = std::log2(4.0 / gamma) / delta;
  double logterm = inner > 1.0 ? std::log(inner) : 0.0;
  return 4.0 / (gamma * std::sqrt(nd)) + std::sqrt(2.0 * logterm / nd);
}

struct PhiConvergenceRow {
  double gamma = 0.0;
  double xi_pop = 0.0;
  double xi_pop_2g = 0.0;
  double xi_pop_stderr = 0.0;
  double xi_emp = 0.0;
  double xi_emp_2g = 0.0;
  double slack = 0.0;
  bool upper_ok = true;  // xi_D(g) <= xi_n(2g) + slack
  bool lower_ok = true;  // xi_n(g) <= xi_D(2g) + slack
};

struct PhiConvergenceReport {
  int violations = 0;
  std::vector<PhiConvergenceRow> rows;
};

inline PhiConvergenceReport check_phi_convergence(const Vec& w, const Mat& X, const Mat& population_X,
                                                  const std::vector<double>& gamma_grid, double delta) {
  if (population_X.rows() < 10 * X.rows()) throw std::invalid_argument("population sample must be >= 10 n");
  MarginProfile emp = margin_profile(w, X);
  MarginProfile pop = margin_profile(w, population_X);
  const double M = static_cast<double>(population_X.rows());
  PhiConvergenceReport rep;
  for (double g : gamma_grid) {
    PhiConvergenceRow r;
    r.gamma = g;
    r.xi_pop = pop.xi_hat(g);
    r.xi_pop_2g = pop.xi_hat(2.0 * g);
    r.xi_emp = emp.xi_hat(g);
    r.xi_emp_2g = emp.xi_hat(2.0 * g);
    r.slack = phi_convergence_slack(g, X.rows(), delta);
    double se1 = std::sqrt(r.xi_pop * (1.0 - r.xi_pop) / M);
    double se2 = std::sqrt(r.xi_pop_2g * (1.0 - r.xi_pop_2g) / M);
    r.xi_pop_stderr = se1;
    r.upper_ok = r.xi_pop <= r.xi_emp_2g + r.slack + 3.0 * se1;
    r.lower_ok = r.xi_emp <= r.xi_pop_2g + r.slack + 3.0 * se2;
    rep.violations += !r.upper_ok + !r.lower_ok;
    rep.rows.push_back(r);
  }
  return rep;
}

struct MarginBound {
  double value = std::numeric_limits<double>::infinity();
  double gamma = 0.0;
};

inline std::vector<double> log_gamma_grid(double lo = 1e-9, double hi = 0.25, int points = 4000) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
  return g;
}

// min over gamma of sqrt(phi(4 gamma)) + sqrt(log(1/delta) / n) / gamma + 1 / (gamma^(1/2) n^(1/4)),
// hidden log factors set to 1.
inline MarginBound margin_bound_value(const MarginFunction& phi, double n, double delta,
                                      const std::vector<double>& gamma_grid, double multiplier = 1.0) {
  MarginBound b;
  const double conf = std::sqrt(std::log(1.0 / delta) / n);
  for (double g : gamma_grid) {
    if (!(g > 0.0)) continue;
    double v = std::sqrt(phi(4.0 * g)) + multiplier * (conf / g + 1.0 / (std::sqrt(g) * std::pow(n, 0.25)));
    if (v < b.value) b = {v, g};
  }
  return b;
}

struct MarginDiscrepancy {
  double sup_estimate = 0.0;
  int members_found = 0;
  int candidates = 0;
};

inline Vec relu_empirical_grad(const Mat& X, const Vec& y, const Vec& w) {
  static const ModelSpec relu = make_relu();
  return empirical_grad(relu, X, y, w);
}

// Candidates: uniform in the ball, plus perturbations of the best empirical
// separator found among them; members pass the soft-margin test.
inline MarginDiscrepancy margin_discrepancy_estimate(const MarginFunction& phi, const Dataset& data,
                                                     const Dataset& population, int candidate_count,
                                                     std::uint64_t seed) {
  const Eigen::Index d = data.d();
  const Ball ball{2, 1.0};
  std::vector<Vec> cands;
  Rng rng = Rng::stream(seed, "margin/candidates");
  const int uniform = candidate_count / 2;
  for (int k = 0; k < uniform; ++k) cands.push_back(uniform_in_ball(d, ball, rng));
  // Separator directions: w_star if known, else the label-weighted mean.
  Vec sep = data.w_star.size() == d && data.w_star.norm() > 0 ? Vec(data.w_star) : Vec(data.X.transpose() * data.y);
  if (sep.norm() > 0) sep.normalize();
  for (int k = uniform; k < candidate_count; ++k) {
    double scale = 2.0 * static_cast<double>(k - uniform + 1) / std::max(1, candidate_count - uniform);
    Vec noise(d);
    for (Eigen::Index j = 0; j < d; ++j) noise[j] = rng.normal() / std::sqrt(static_cast<double>(d));
    Vec w = sep + scale * noise;
    if (w.norm() > 0) w.normalize();
    cands.push_back(w);
  }
  MarginDiscrepancy out;
  out.candidates = static_cast<int>(cands.size());
  auto vals = parallel_map<double>(cands.size(), [&](std::size_t k) {
    if (!margin_profile(cands[k], data.X).member_of(phi)) return -1.0;
    Vec diff = relu_empirical_grad(data.X, data.y, cands[k]) - relu_empirical_grad(population.X, population.y, cands[k]);
    return diff.norm();
  });
  out.sup_estimate = 0.0;
  for (double v : vals) {
    if (v < 0) continue;
    ++out.members_found;
    out.sup_estimate = std::max(out.sup_estimate, v);
  }
  if (out.members_found == 0) throw std::domain_error("no soft-margin members among the candidates");
  return out;
}

inline void write_lb_sweep_csv(const std::string& path, const std::vector<std::pair<LowerBoundInstance, LowerBoundEstimate>>& rows) {
  CsvWriter w(path, "d,N,n,mc_value,analytic_lb,sqrt_dn_ratio,stderr");
  for (const auto& [inst, est] : rows) {
    double ratio = est.mc_value / std::sqrt(static_cast<double>(inst.d) * static_cast<double>(inst.n()));
    w.row(inst.d, inst.N, static_cast<long>(inst.n()), est.mc_value, est.analytic_lb, ratio, est.stderr);
  }
}

}  // namespace gradconv

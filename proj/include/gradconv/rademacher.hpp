#pragma once

#include "gradconv/csv.hpp"
#include "gradconv/geometry.hpp"
#include "gradconv/models.hpp"
#include "gradconv/optimize.hpp"
#include "gradconv/parallel.hpp"
#include "gradconv/rng.hpp"
#include "gradconv/synthdata.hpp"

#include <bit>
#include <cmath>
#include <tuple>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradconv {

enum class RcKind { scalar, normed, vector, hessian_spectral };

inline std::string rc_kind_name(RcKind k) {
  switch (k) {
    case RcKind::scalar: return "scalar";
    case RcKind::normed: return "normed";
    case RcKind::vector: return "vector";
    case RcKind::hessian_spectral: return "hessian_spectral";
  }
  return "?";
}

struct SupDiagnostics {
  std::string solver = "grid+ascent";
  int restarts = 0;
  int steps = 0;
  double step_size = 0.0;
  int grid_points = 0;
  int ascent_improved = 0;  // draws where ascent beat the grid pass
  int nonfinite = 0;
};

struct RcEstimate {
  double value = 0.0;
  double stderr = 0.0;
  int draws = 0;
  RcKind kind = RcKind::normed;
  SupDiagnostics inner_sup;
  double grid_spacing = 0.0;
  double bound = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_draw;
  std::vector<std::uint64_t> patterns;  // sign pattern of each draw (bit t set: eps_t = -1), n <= 64
};

inline void write_rc_csv(const std::string& path, const std::vector<std::pair<RcEstimate, std::pair<long, long>>>& rows) {
  CsvWriter w(path, "kind,n,d,value,stderr,draws,bound");
  for (const auto& [est, nd] : rows)
    w.row(rc_kind_name(est.kind), nd.first, nd.second, est.value, est.stderr, est.draws, est.bound);
}

inline std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

// Gradient of s -> ||s||_p.
inline Vec norm_gradient(const Vec& s, Exponent p) {
  Vec g = Vec::Zero(s.size());
  double ns = norm(s, p);
  if (ns == 0.0) return g;
  if (p.is_infinite()) {
    Eigen::Index i;
    s.cwiseAbs().maxCoeff(&i);
    g[i] = s[i] < 0 ? -1.0 : 1.0;
    return g;
  }
  double e = p.value();
  if (e == 2.0) return s / ns;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    g[i] = (s[i] < 0 ? -1.0 : 1.0) * std::pow(std::abs(s[i]) / ns, e - 1.0);
  return g;
}

struct EigenPair {
  double value = 0.0;
  Vec vector;
};

// Dominant-magnitude eigenpair of a symmetric matrix.
inline EigenPair power_iteration(const Mat& M, Rng& rng, int iters = 50, double tol = 1e-8) {
  const Eigen::Index d = M.rows();
  EigenPair ep;
  ep.vector = Vec::Zero(d);
  if (d == 0) return ep;
  Vec v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = rng.normal();
  v.normalize();
  double lam = v.dot(M * v);
  for (int k = 0; k < iters; ++k) {
    Vec mv = M * v;
    double nm = mv.norm();
    if (nm == 0.0) {
      ep.value = 0.0;
      ep.vector = v;
      return ep;
    }
    v = mv / nm;
    double next = v.dot(M * v);
    bool done = std::abs(next - lam) <= tol * std::max(1.0, std::abs(next));
    lam = next;
    if (done) break;
  }
  ep.value = lam;
  ep.vector = v;
  return ep;
}

// Spectral norm via power iteration on M, then on M shifted by the first
// eigenvalue to reach the opposite end of the spectrum.
inline EigenPair spectral_norm_sym(const Mat& M, Rng& rng, int iters = 50, double tol = 1e-8) {
  EigenPair a = power_iteration(M, rng, iters, tol);
  Mat shifted = M - a.value * Mat::Identity(M.rows(), M.cols());
  EigenPair b = power_iteration(shifted, rng, iters, tol);
  b.value += a.value;
  b.vector.normalize();
  if (b.vector.size() > 0) b.value = b.vector.dot(M * b.vector);
  return std::abs(b.value) > std::abs(a.value) ? b : a;
}

// Cartesian grid of the ball, plus projections of nearby outside points onto
// the boundary.
inline std::vector<Vec> ball_grid(Eigen::Index d, const Ball& ball, int per_axis) {
  if (d < 1 || d > 3) throw std::invalid_argument("ball grids supported for 1 <= d <= 3");
  if (per_axis < 2) throw std::invalid_argument("grid needs at least two points per axis");
  std::vector<Vec> pts;
  const double r = ball.radius, h = 2.0 * r / (per_axis - 1);
  std::vector<int> idx(d, 0);
  for (;;) {
    Vec w(d);
    for (Eigen::Index j = 0; j < d; ++j) w[j] = -r + h * idx[j];
    double nw = norm(w, Exponent::finite(ball.exponent));
    if (nw <= r) {
      pts.push_back(w);
    } else if (nw <= r + 1.5 * h * std::sqrt(static_cast<double>(d))) {
      pts.push_back(project(w, ball));
    }
    Eigen::Index j = 0;
    while (j < d && ++idx[j] == per_axis) idx[j++] = 0;
    if (j == d) break;
  }
  return pts;
}

// Grid of fixed spacing anchored at the origin; nested in the radius.
inline std::vector<Vec> spacing_grid(Eigen::Index d, const Ball& ball, double h) {
  if (d < 1 || d > 3) throw std::invalid_argument("spacing grids supported for 1 <= d <= 3");
  const int k = static_cast<int>(std::floor(ball.radius / h));
  std::vector<Vec> pts;
  std::vector<int> idx(d, -k);
  for (;;) {
    Vec w(d);
    for (Eigen::Index j = 0; j < d; ++j) w[j] = h * idx[j];
    if (norm(w, Exponent::finite(ball.exponent)) <= ball.radius) pts.push_back(w);
    Eigen::Index j = 0;
    while (j < d && ++idx[j] > k) idx[j++] = -k;
    if (j == d) break;
  }
  return pts;
}

struct FunctionClass {
  Eigen::Index n = 0;
  Eigen::Index dim = 0;
  Eigen::Index output_dim = 1;
  Ball domain;
  std::function<Vec(const Vec&, Eigen::Index)> value;
  std::function<Mat(const Vec&, Eigen::Index)> jacobian;
  // Optional fast paths: S(w) = sum_t eps_t f(w, z_t) and J_S(w)^T v.
  std::function<Vec(const Vec&, const Vec&)> signed_sum_fn;
  std::function<Vec(const Vec&, const Vec&, const Vec&)> signed_sum_vjp_fn;

  Vec signed_sum(const Vec& w, const Vec& eps) const {
    if (signed_sum_fn) return signed_sum_fn(w, eps);
    Vec s = Vec::Zero(output_dim);
    for (Eigen::Index t = 0; t < n; ++t) s += eps[t] * value(w, t);
    return s;
  }
  bool differentiable() const { return static_cast<bool>(signed_sum_vjp_fn) || static_cast<bool>(jacobian); }
  Vec signed_sum_vjp(const Vec& w, const Vec& eps, const Vec& v) const {
    if (signed_sum_vjp_fn) return signed_sum_vjp_fn(w, eps, v);
    Vec g = Vec::Zero(dim);
    for (Eigen::Index t = 0; t < n; ++t) g += eps[t] * (jacobian(w, t).transpose() * v);
    return g;
  }
  // n x K table of outputs at w.
  Mat table(const Vec& w) const {
    Mat out(n, output_dim);
    for (Eigen::Index t = 0; t < n; ++t) out.row(t) = value(w, t).transpose();
    return out;
  }
};

// w -> grad loss(w; x_t, y_t).
inline FunctionClass gradient_class(const ModelSpec& model, const Dataset& data) {
  auto m = std::make_shared<const ModelSpec>(model);
  auto X = std::make_shared<const Mat>(data.X);
  auto y = std::make_shared<const Vec>(data.y);
  FunctionClass fc;
  fc.n = data.n();
  fc.dim = data.d();
  fc.output_dim = data.d();
  fc.domain = model.geometry.weight_ball();
  fc.value = [m, X, y](const Vec& w, Eigen::Index t) { return grad(*m, w, X->row(t).transpose(), (*y)[t]); };
  if (model.smooth())
    fc.jacobian = [m, X, y](const Vec& w, Eigen::Index t) { return hessian(*m, w, X->row(t).transpose(), (*y)[t]); };
  fc.signed_sum_fn = [m, X, y](const Vec& w, const Vec& eps) {
    Vec u = *X * w;
    Vec a(u.size());
    for (Eigen::Index t = 0; t < u.size(); ++t) a[t] = eps[t] * scalar_d1(*m, u[t], (*y)[t]);
    return Vec(X->transpose() * a);
  };
  if (model.smooth())
    fc.signed_sum_vjp_fn = [m, X, y](const Vec& w, const Vec& eps, const Vec& v) {
      Vec u = *X * w;
      Vec xv = *X * v;
      Vec a(u.size());
      for (Eigen::Index t = 0; t < u.size(); ++t) a[t] = eps[t] * scalar_d2(*m, u[t], (*y)[t]) * xv[t];
      return Vec(X->transpose() * a);
    };
  return fc;
}

// Singleton class f(w, z_t) = x_t.
inline FunctionClass constant_class(const Mat& X, const Ball& domain) {
  auto Xp = std::make_shared<const Mat>(X);
  FunctionClass fc;
  fc.n = X.rows();
  fc.dim = X.cols();
  fc.output_dim = X.cols();
  fc.domain = domain;
  fc.value = [Xp](const Vec&, Eigen::Index t) { return Vec(Xp->row(t).transpose()); };
  fc.jacobian = [Xp](const Vec&, Eigen::Index) { return Mat::Zero(Xp->cols(), Xp->cols()).eval(); };
  return fc;
}

// Scalar class w -> phi(<w, x_t>, y_t) with derivative phi'.
inline FunctionClass scalar_link_class(const Mat& X, const Vec& y, const Ball& domain,
                                       std::function<double(double, double)> phi,
                                       std::function<double(double, double)> dphi) {
  auto Xp = std::make_shared<const Mat>(X);
  auto yp = std::make_shared<const Vec>(y);
  FunctionClass fc;
  fc.n = X.rows();
  fc.dim = X.cols();
  fc.output_dim = 1;
  fc.domain = domain;
  fc.value = [Xp, yp, phi](const Vec& w, Eigen::Index t) {
    return Vec::Constant(1, phi(Xp->row(t).dot(w), (*yp)[t])).eval();
  };
  fc.jacobian = [Xp, yp, dphi](const Vec& w, Eigen::Index t) {
    return Mat(dphi(Xp->row(t).dot(w), (*yp)[t]) * Xp->row(t));
  };
  return fc;
}

struct SupSolver {
  int restarts = 8;
  int steps = 300;
  bool grid_pass = true;
  int grid_per_axis = 21;
  bool ascent = true;
  int lipschitz_probes = 100;
  std::optional<double> step_size;
  std::shared_ptr<const std::vector<Vec>> grid;  // overrides the default grid
};

namespace detail {

inline Vec draw_signs(Eigen::Index n, Rng& rng) {
  Vec e(n);
  for (Eigen::Index t = 0; t < n; ++t) e[t] = rng.sign();
  return e;
}

inline std::uint64_t pattern_of(const Vec& eps) {
  std::uint64_t p = 0;
  for (Eigen::Index t = 0; t < eps.size() && t < 64; ++t)
    if (eps[t] < 0) p |= (std::uint64_t{1} << t);
  return p;
}

inline double estimate_ascent_smoothness(const std::function<Vec(const Vec&)>& grad_fn, Eigen::Index d,
                                         const Ball& ball, int probes, Rng& rng) {
  double H = 0.0;
  for (int k = 0; k < probes; ++k) {
    Vec a = uniform_in_ball(d, ball, rng), b = uniform_in_ball(d, ball, rng);
    double dist = (a - b).norm();
    if (dist < 1e-12) continue;
    H = std::max(H, (grad_fn(a) - grad_fn(b)).norm() / dist);
  }
  return H;
}

}  // namespace detail

inline RcEstimate estimate_normed_rc(const FunctionClass& fc, Exponent norm_p, int draws, const SupSolver& solver,
                                     std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("estimate_normed_rc needs draws >= 1");
  RcEstimate est;
  est.kind = fc.output_dim == 1 ? RcKind::scalar : RcKind::normed;
  est.draws = draws;
  const Eigen::Index n = fc.n, d = fc.dim;

  std::vector<Vec> grid;
  std::vector<Mat> tables;
  if (solver.grid_pass && (solver.grid || d <= 3)) {
    grid = solver.grid ? *solver.grid : ball_grid(d, fc.domain, solver.grid_per_axis);
    tables.reserve(grid.size());
    for (const auto& w : grid) tables.push_back(fc.table(w));
    est.grid_spacing = 2.0 * fc.domain.radius / std::max(1, solver.grid_per_axis - 1);
  }
  const bool ascent = solver.ascent && fc.differentiable() && n > 0;

  double eta = 0.0;
  if (ascent) {
    Rng rng0 = Rng::stream(seed, "rc", 0);
    Vec eps0 = detail::draw_signs(n, rng0);
    auto gfn = [&](const Vec& w) { return fc.signed_sum_vjp(w, eps0, norm_gradient(fc.signed_sum(w, eps0), norm_p)); };
    Rng probe_rng = Rng::stream(seed, "rc/lipschitz");
    double H = detail::estimate_ascent_smoothness(gfn, d, fc.domain, solver.lipschitz_probes, probe_rng);
    eta = solver.step_size.value_or(H > 0 ? 1.0 / H : fc.domain.radius);
  }
  est.inner_sup.solver = grid.empty() ? "ascent" : (ascent ? "grid+ascent" : "grid");
  est.inner_sup.restarts = ascent ? solver.restarts : 0;
  est.inner_sup.steps = ascent ? solver.steps : 0;
  est.inner_sup.step_size = eta;
  est.inner_sup.grid_points = static_cast<int>(grid.size());

  struct DrawOut {
    double value = 0.0;
    bool improved = false;
    bool finite = true;
    std::uint64_t pattern = 0;
  };
  auto outs = parallel_map<DrawOut>(static_cast<std::size_t>(draws), [&](std::size_t k) {
    Rng rng = Rng::stream(seed, "rc", k);
    Vec eps = detail::draw_signs(n, rng);
    DrawOut o;
    o.pattern = detail::pattern_of(eps);
    double best = 0.0;
    Vec best_w = Vec::Zero(d);
    for (std::size_t g = 0; g < tables.size(); ++g) {
      double v = norm(tables[g].transpose() * eps, norm_p);
      if (v > best) best = v, best_w = grid[g];
    }
    double grid_best = best;
    if (ascent) {
      Rng rr = Rng::stream(seed, "rc/restart", k);
      for (int r = 0; r < solver.restarts; ++r) {
        Vec w = (r == 0 && !tables.empty()) ? best_w : uniform_in_ball(d, fc.domain, rr);
        for (int s = 0; s < solver.steps; ++s) {
          Vec S = fc.signed_sum(w, eps);
          double v = norm(S, norm_p);
          if (!std::isfinite(v)) {
            o.finite = false;
            break;
          }
          if (v > best) best = v;
          Vec g = fc.signed_sum_vjp(w, eps, norm_gradient(S, norm_p));
          if (g.squaredNorm() == 0.0) break;
          w = project(w + eta * g, fc.domain);
        }
        double v = norm(fc.signed_sum(w, eps), norm_p);
        if (std::isfinite(v) && v > best) best = v;
      }
    }
    if (tables.empty() && !ascent) best = norm(fc.signed_sum(Vec::Zero(d), eps), norm_p);
    o.value = best;
    o.improved = best > grid_best && !tables.empty();
    return o;
  });
  est.per_draw.reserve(draws);
  for (const auto& o : outs) {
    est.per_draw.push_back(o.value);
    est.patterns.push_back(o.pattern);
    est.inner_sup.ascent_improved += o.improved;
    est.inner_sup.nonfinite += !o.finite;
  }
  std::tie(est.value, est.stderr) = mean_stderr(est.per_draw);
  return est;
}

enum class Reduce { signed_sum, norm, spectral };

struct Reducer {
  Reduce kind = Reduce::norm;
  Exponent p = Exponent::finite(2.0);
  Eigen::Index mat_dim = 0;  // spectral: atoms are column-major flattened mat_dim x mat_dim matrices

  bool symmetric() const { return kind != Reduce::signed_sum; }
  double operator()(const Vec& s) const {
    switch (kind) {
      case Reduce::signed_sum: return s[0];
      case Reduce::norm: return norm(s, p);
      case Reduce::spectral: {
        Eigen::Map<const Mat> M(s.data(), mat_dim, mat_dim);
        Eigen::SelfAdjointEigenSolver<Mat> es(M, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseAbs().maxCoeff();
      }
    }
    return 0.0;
  }
};

// Exact mean over all 2^m sign vectors of max_g reduce(atoms[g]^T eps).
// Gray-code order; each step touches one atom per grid point.
inline double enumerate_expected_max(const std::vector<Mat>& atoms, const Reducer& reduce,
                                     std::vector<double>* per_pattern = nullptr) {
  if (atoms.empty()) throw std::invalid_argument("enumeration needs at least one class member");
  const Eigen::Index m = atoms[0].rows();
  if (m > 24) throw std::invalid_argument("enumeration limited to 24 sign bits");
  const std::size_t G = atoms.size();
  std::vector<Vec> S(G);
  for (std::size_t g = 0; g < G; ++g) {
    if (atoms[g].rows() != m) throw std::invalid_argument("atom count mismatch across class members");
    S[g] = atoms[g].colwise().sum().transpose();
  }
  const std::uint64_t total = std::uint64_t{1} << m;
  const bool sym = reduce.symmetric() && m > 0;
  const std::uint64_t count = sym ? total / 2 : total;
  if (per_pattern) per_pattern->assign(total, 0.0);
  std::uint64_t state = 0;
  double sum = 0.0;
  for (std::uint64_t k = 0; k < count; ++k) {
    std::uint64_t gray = k ^ (k >> 1);
    if (k > 0) {
      std::uint64_t changed = gray ^ state;
      int bit = std::countr_zero(changed);
      double sgn = (gray & changed) ? -2.0 : 2.0;
      for (std::size_t g = 0; g < G; ++g) S[g] += sgn * atoms[g].row(bit).transpose();
      state = gray;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < G; ++g) best = std::max(best, reduce(S[g]));
    sum += best;
    if (per_pattern) {
      (*per_pattern)[gray] = best;
      if (sym) (*per_pattern)[gray ^ (total - 1)] = best;
    }
  }
  return sum / static_cast<double>(count);
}

inline double max_over_class(const std::vector<Mat>& atoms, const Reducer& reduce, const Vec& eps) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : atoms) best = std::max(best, reduce(a.transpose() * eps));
  return best;
}

inline RcEstimate exact_rc_bruteforce(const FunctionClass& fc, Exponent norm_p, const std::vector<Vec>& w_grid,
                                      std::vector<double>* per_pattern = nullptr) {
  if (fc.n > 16) throw std::invalid_argument("exact enumeration limited to n <= 16");
  RcEstimate est;
  est.kind = fc.output_dim == 1 ? RcKind::scalar : RcKind::normed;
  est.inner_sup.solver = "enumeration";
  est.inner_sup.grid_points = static_cast<int>(w_grid.size());
  est.draws = static_cast<int>(std::uint64_t{1} << fc.n);
  if (fc.n == 0) return est;
  std::vector<Mat> atoms;
  atoms.reserve(w_grid.size());
  for (const auto& w : w_grid) atoms.push_back(fc.table(w));
  est.value = enumerate_expected_max(atoms, Reducer{Reduce::norm, norm_p}, per_pattern);
  return est;
}

// Finite class: one n x K table per member.
struct FiniteClass {
  Eigen::Index K = 1;
  std::vector<Mat> members;
};

inline FiniteClass tabulate(const FunctionClass& fc, const std::vector<Vec>& grid) {
  FiniteClass c;
  c.K = fc.output_dim;
  for (const auto& w : grid) c.members.push_back(fc.table(w));
  return c;
}

enum class CheckMode { brute_force, monte_carlo };

struct InequalityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs_stderr = 0.0;
  double diff_mean = 0.0;
  double diff_stderr = 0.0;
  int draws = 0;
  bool holds = false;
};

namespace detail {

inline bool exact_le(double a, double b) { return a <= b + 1e-12 * std::max(1.0, std::abs(b)); }

inline InequalityCheck finish_paired(const std::vector<double>& l, const std::vector<double>& r) {
  InequalityCheck c;
  std::vector<double> diff(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) diff[i] = l[i] - r[i];
  std::tie(c.lhs, c.lhs_stderr) = mean_stderr(l);
  std::tie(c.rhs, c.rhs_stderr) = mean_stderr(r);
  std::tie(c.diff_mean, c.diff_stderr) = mean_stderr(diff);
  c.draws = static_cast<int>(l.size());
  c.holds = c.diff_mean <= 3.0 * c.diff_stderr + 1e-12;
  return c;
}

inline Mat draw_sign_matrix(Eigen::Index n, Eigen::Index K, Rng& rng) {
  Mat E(n, K);
  for (Eigen::Index t = 0; t < n; ++t)
    for (Eigen::Index k = 0; k < K; ++k) E(t, k) = rng.sign();
  return E;
}

// Flatten an n x K sign matrix to index t * K + k.
inline Vec flatten_rows(const Mat& E) {
  Vec v(E.size());
  for (Eigen::Index t = 0; t < E.rows(); ++t)
    for (Eigen::Index k = 0; k < E.cols(); ++k) v[t * E.cols() + k] = E(t, k);
  return v;
}

}  // namespace detail

using LipschitzMap = std::function<double(const Vec&)>;

// lhs = E sup_g sum_t eps_t h_t(g(z_t)); rhs = sqrt(2) L E sup_g sum_t <eps_t, g(z_t)>.
inline InequalityCheck check_contraction(const FiniteClass& cls, const std::vector<LipschitzMap>& h, double L,
                                         CheckMode mode, int draws = 0, std::uint64_t seed = 0) {
  if (cls.members.empty()) throw std::invalid_argument("contraction check needs a nonempty class");
  const Eigen::Index n = cls.members[0].rows(), K = cls.K;
  for (const auto& m : cls.members)
    if (m.cols() != K || m.rows() != n) throw std::invalid_argument("class output dimension mismatch");
  if (static_cast<Eigen::Index>(h.size()) != n) throw std::invalid_argument("need one Lipschitz map per point");
  std::vector<Mat> lhs_atoms, rhs_atoms;
  for (const auto& m : cls.members) {
    Mat a(n, 1);
    for (Eigen::Index t = 0; t < n; ++t) a(t, 0) = h[t](m.row(t).transpose());
    lhs_atoms.push_back(a);
    Mat b(n * K, 1);
    for (Eigen::Index t = 0; t < n; ++t)
      for (Eigen::Index k = 0; k < K; ++k) b(t * K + k, 0) = m(t, k);
    rhs_atoms.push_back(b);
  }
  const Reducer signed_r{Reduce::signed_sum};
  const double scale = std::sqrt(2.0) * L;
  if (mode == CheckMode::brute_force) {
    InequalityCheck c;
    c.lhs = enumerate_expected_max(lhs_atoms, signed_r);
    c.rhs = scale * enumerate_expected_max(rhs_atoms, signed_r);
    c.diff_mean = c.lhs - c.rhs;
    c.holds = detail::exact_le(c.lhs, c.rhs);
    return c;
  }
  std::vector<double> l(draws), r(draws);
  parallel_for(static_cast<std::size_t>(draws), [&](std::size_t k) {
    Rng rng = Rng::stream(seed, "contraction", k);
    Mat E = detail::draw_sign_matrix(n, K, rng);
    l[k] = max_over_class(lhs_atoms, signed_r, E.col(0));
    r[k] = scale * max_over_class(rhs_atoms, signed_r, detail::flatten_rows(E));
  });
  return detail::finish_paired(l, r);
}

// G_t : R^K -> R (through its gradient) composed with F_t : R^d -> R^K.
struct CompositionFamily {
  Eigen::Index n = 0;
  Eigen::Index K = 1;
  Eigen::Index d = 1;
  std::function<Vec(Eigen::Index, const Vec&)> grad_G;
  std::function<Vec(Eigen::Index, const Vec&)> F;
  std::function<Mat(Eigen::Index, const Vec&)> jac_F;  // K x d
};

struct ChainRuleCheck {
  double lhs_half = 0.0;
  double rhs = 0.0;
  double rhs_vector_term = 0.0;
  double rhs_jacobian_term = 0.0;
  double diff_mean = 0.0;
  double diff_stderr = 0.0;
  bool holds = false;
};

inline ChainRuleCheck check_chain_rule(const CompositionFamily& fam, const std::vector<Vec>& grid, double L_G,
                                       double L_F, CheckMode mode, int draws = 0, std::uint64_t seed = 0,
                                       Exponent norm_p = Exponent::finite(2.0)) {
  const Eigen::Index n = fam.n, K = fam.K, d = fam.d;
  std::vector<Mat> lhs_atoms, vec_atoms, jac_atoms;
  for (const auto& w : grid) {
    Mat la(n, d), va(n * K, 1), ja(n * K, d);
    for (Eigen::Index t = 0; t < n; ++t) {
      Vec a = fam.grad_G(t, fam.F(t, w));
      Mat J = fam.jac_F(t, w);
      if (a.size() != K || J.rows() != K || J.cols() != d) throw std::invalid_argument("composition shape mismatch");
      if (a.norm() > L_G * (1.0 + 1e-9) + 1e-15)
        throw std::domain_error("Lipschitz precheck failed: ||grad G_t|| = " + fmt_double(a.norm()) +
                                " exceeds L_G = " + fmt_double(L_G) + " at t = " + std::to_string(t));
      if (J.norm() > L_F * (1.0 + 1e-9) + 1e-15)
        throw std::domain_error("Lipschitz precheck failed: stacked ||grad F_t|| = " + fmt_double(J.norm()) +
                                " exceeds L_F = " + fmt_double(L_F) + " at t = " + std::to_string(t));
      la.row(t) = (J.transpose() * a).transpose();
      for (Eigen::Index k = 0; k < K; ++k) {
        va(t * K + k, 0) = a[k];
        ja.row(t * K + k) = J.row(k);
      }
    }
    lhs_atoms.push_back(la);
    vec_atoms.push_back(va);
    jac_atoms.push_back(ja);
  }
  const Reducer norm_r{Reduce::norm, norm_p}, signed_r{Reduce::signed_sum};
  ChainRuleCheck c;
  if (n == 0) {
    c.holds = true;
    return c;
  }
  if (mode == CheckMode::brute_force) {
    c.lhs_half = 0.5 * enumerate_expected_max(lhs_atoms, norm_r);
    c.rhs_vector_term = L_F * enumerate_expected_max(vec_atoms, signed_r);
    c.rhs_jacobian_term = L_G * enumerate_expected_max(jac_atoms, norm_r);
    c.rhs = c.rhs_vector_term + c.rhs_jacobian_term;
    c.diff_mean = c.lhs_half - c.rhs;
    c.holds = detail::exact_le(c.lhs_half, c.rhs);
    return c;
  }
  std::vector<double> l(draws), r1(draws), r2(draws), r(draws);
  parallel_for(static_cast<std::size_t>(draws), [&](std::size_t k) {
    Rng rng = Rng::stream(seed, "chain", k);
    Mat E = detail::draw_sign_matrix(n, K, rng);
    Vec flat = detail::flatten_rows(E);
    l[k] = 0.5 * max_over_class(lhs_atoms, norm_r, E.col(0));
    r1[k] = L_F * max_over_class(vec_atoms, signed_r, flat);
    r2[k] = L_G * max_over_class(jac_atoms, norm_r, flat);
    r[k] = r1[k] + r2[k];
  });
  InequalityCheck ic = detail::finish_paired(l, r);
  c.lhs_half = ic.lhs;
  c.rhs = ic.rhs;
  c.rhs_vector_term = mean_stderr(r1).first;
  c.rhs_jacobian_term = mean_stderr(r2).first;
  c.diff_mean = ic.diff_mean;
  c.diff_stderr = ic.diff_stderr;
  c.holds = ic.holds;
  return c;
}

// E ||sum eps_t x_t||_p <= sqrt(beta sum ||x_t||_p^2); infinity uses the l_q proxy.
inline InequalityCheck check_smooth_type(const Mat& X, Exponent p, CheckMode mode, int draws = 0,
                                         std::uint64_t seed = 0) {
  const int d = static_cast<int>(std::max<Eigen::Index>(1, X.cols()));
  Exponent pe = smooth_exponent(p, d);
  const double beta = smoothness_constant(p, d);
  double sq = 0.0;
  for (Eigen::Index t = 0; t < X.rows(); ++t) sq += std::pow(norm(X.row(t).transpose(), pe), 2);
  const double rhs = std::sqrt(beta * sq);
  const Reducer norm_r{Reduce::norm, pe};
  if (mode == CheckMode::brute_force) {
    if (X.rows() > 16) throw std::invalid_argument("exact smooth-type check limited to n <= 16");
    InequalityCheck c;
    c.lhs = X.rows() == 0 ? 0.0 : enumerate_expected_max({X}, norm_r);
    c.rhs = rhs;
    c.diff_mean = c.lhs - c.rhs;
    c.holds = detail::exact_le(c.lhs, c.rhs);
    return c;
  }
  std::vector<double> l(draws), r(draws, rhs);
  parallel_for(static_cast<std::size_t>(draws), [&](std::size_t k) {
    Rng rng = Rng::stream(seed, "smooth_type", k);
    l[k] = norm(X.transpose() * detail::draw_signs(X.rows(), rng), pe);
  });
  return detail::finish_paired(l, r);
}

// Closed-form bound on E sup_w ||sum eps_t grad loss||, constants traced through
// the chain rule, contraction and smooth-type steps:
//   glm: (2R * 4C^2 * B + 2 * 2C) * sqrt(2 beta) R sqrt(n)
//   rr:  (2R * C * B + 2 * C) * sqrt(2 beta) R sqrt(n)
inline double gradient_rc_bound(const ModelSpec& model, Eigen::Index n) {
  if (!model.smooth()) throw std::invalid_argument("gradient RC bound needs a smooth family");
  const double B = model.geometry.radius_B, R = model.geometry.radius_R, C = model.constants.C_upper;
  const double type2 = std::sqrt(2.0 * model.geometry.beta) * R * std::sqrt(static_cast<double>(n));
  if (model.family == Family::glm) return (8.0 * C * C * B * R + 4.0 * C) * type2;
  return (2.0 * C * B * R + 2.0 * C) * type2;
}

// Hessian analogue. Scalar term: second derivative of the composed loss is
// Lipschitz with constant L3 (glm: 6C^2 + 2C3, rr: C3); matrix term uses
// E||sum eps_t x_t x_t^T|| <= sqrt(2 ln(2d)) R^2 sqrt(n) with |G''| <= L2
// (glm: 4C^2, rr: C).
inline double hessian_rc_bound(const ModelSpec& model, Eigen::Index n, Eigen::Index d) {
  if (!model.smooth()) throw std::invalid_argument("Hessian RC bound needs a smooth family");
  const double B = model.geometry.radius_B, R = model.geometry.radius_R;
  const double C = model.constants.C_upper, C3 = model.constants.C_third;
  const double sn = std::sqrt(static_cast<double>(n));
  const double type2 = std::sqrt(2.0 * model.geometry.beta) * R * sn;
  const double matrix = std::sqrt(2.0 * std::log(2.0 * static_cast<double>(d))) * R * R * sn;
  double L3 = model.family == Family::glm ? 6.0 * C * C + 2.0 * C3 : C3;
  double L2 = model.family == Family::glm ? 4.0 * C * C : C;
  return 2.0 * R * R * L3 * B * type2 + 2.0 * L2 * matrix;
}

namespace detail {

inline Mat signed_hessian_sum(const ModelSpec& model, const Mat& X, const Vec& y, const Vec& w, const Vec& eps) {
  Vec u = X * w;
  Vec a(u.size());
  for (Eigen::Index t = 0; t < u.size(); ++t) a[t] = eps[t] * scalar_d2(model, u[t], y[t]);
  return X.transpose() * a.asDiagonal() * X;
}

}  // namespace detail

inline RcEstimate estimate_hessian_rc(const ModelSpec& model, const Dataset& data, int draws, const SupSolver& solver,
                                      std::uint64_t seed, double kappa = 1.0) {
  if (!model.smooth()) throw std::invalid_argument("Hessian RC needs a smooth family");
  if (draws < 1) throw std::invalid_argument("estimate_hessian_rc needs draws >= 1");
  RcEstimate est;
  est.kind = RcKind::hessian_spectral;
  est.draws = draws;
  const Eigen::Index n = data.n(), d = data.d();
  const Ball ball = model.geometry.weight_ball();
  std::vector<Vec> grid;
  if (solver.grid_pass && (solver.grid || d <= 3)) {
    grid = solver.grid ? *solver.grid : ball_grid(d, ball, solver.grid_per_axis);
    est.grid_spacing = 2.0 * ball.radius / std::max(1, solver.grid_per_axis - 1);
  }
  const bool ascent = solver.ascent && n > 0;
  // Step from the third-derivative scale of the composed loss.
  const double R = model.geometry.radius_R;
  const double H_sup = std::max(1e-12, model.constants.C_third * 8.0 * std::pow(R, 4) * static_cast<double>(n));
  const double eta = solver.step_size.value_or(1.0 / H_sup);
  est.inner_sup.solver = grid.empty() ? "ascent" : (ascent ? "grid+ascent" : "grid");
  est.inner_sup.restarts = ascent ? solver.restarts : 0;
  est.inner_sup.steps = ascent ? solver.steps : 0;
  est.inner_sup.step_size = eta;
  est.inner_sup.grid_points = static_cast<int>(grid.size());

  auto vals = parallel_map<std::pair<double, bool>>(static_cast<std::size_t>(draws), [&](std::size_t k) {
    Rng rng = Rng::stream(seed, "rc", k);
    Vec eps = detail::draw_signs(n, rng);
    Rng prng = Rng::stream(seed, "rc/power", k);
    double best = 0.0;
    Vec best_w = Vec::Zero(d);
    for (const auto& w : grid) {
      double v = std::abs(spectral_norm_sym(detail::signed_hessian_sum(model, data.X, data.y, w, eps), prng).value);
      if (v > best) best = v, best_w = w;
    }
    double grid_best = best;
    if (ascent) {
      Rng rr = Rng::stream(seed, "rc/restart", k);
      for (int r = 0; r < solver.restarts; ++r) {
        Vec w = (r == 0 && !grid.empty()) ? best_w : uniform_in_ball(d, ball, rr);
        for (int s = 0; s <= solver.steps; ++s) {
          EigenPair ep = spectral_norm_sym(detail::signed_hessian_sum(model, data.X, data.y, w, eps), prng);
          best = std::max(best, std::abs(ep.value));
          if (s == solver.steps) break;
          Vec u = data.X * w;
          Vec xu = data.X * ep.vector;
          Vec a(n);
          for (Eigen::Index t = 0; t < n; ++t) a[t] = eps[t] * scalar_d3(model, u[t], data.y[t]) * xu[t] * xu[t];
          Vec g = (ep.value < 0 ? -1.0 : 1.0) * (data.X.transpose() * a);
          if (g.squaredNorm() == 0.0) break;
          w = project(w + eta * g, ball);
        }
      }
    }
    if (grid.empty() && !ascent)
      best = std::abs(spectral_norm_sym(detail::signed_hessian_sum(model, data.X, data.y, Vec::Zero(d), eps), prng).value);
    return std::make_pair(best, best > grid_best && !grid.empty());
  });
  for (const auto& [v, improved] : vals) {
    est.per_draw.push_back(v);
    est.inner_sup.ascent_improved += improved;
  }
  std::tie(est.value, est.stderr) = mean_stderr(est.per_draw);
  est.bound = kappa * hessian_rc_bound(model, n, d);
  return est;
}

inline RcEstimate exact_hessian_rc_bruteforce(const ModelSpec& model, const Dataset& data,
                                              const std::vector<Vec>& w_grid) {
  if (data.n() > 16) throw std::invalid_argument("exact enumeration limited to n <= 16");
  const Eigen::Index n = data.n(), d = data.d();
  RcEstimate est;
  est.kind = RcKind::hessian_spectral;
  est.inner_sup.solver = "enumeration";
  est.inner_sup.grid_points = static_cast<int>(w_grid.size());
  est.draws = static_cast<int>(std::uint64_t{1} << n);
  est.bound = hessian_rc_bound(model, n, d);
  if (n == 0) return est;
  std::vector<Mat> atoms;
  for (const auto& w : w_grid) {
    Mat a(n, d * d);
    for (Eigen::Index t = 0; t < n; ++t) {
      Mat H = hessian(model, w, data.X.row(t).transpose(), data.y[t]);
      a.row(t) = Eigen::Map<const Vec>(H.data(), d * d).transpose();
    }
    atoms.push_back(a);
  }
  Reducer r{Reduce::spectral};
  r.mat_dim = d;
  est.value = enumerate_expected_max(atoms, r);
  return est;
}

}  // namespace gradconv

#pragma once

#include "gradconv/csv.hpp"
#include "gradconv/geometry.hpp"
#include "gradconv/models.hpp"
#include "gradconv/parallel.hpp"
#include "gradconv/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradconv {

enum class CovariateDist { sphere_uniform, gaussian_clipped, rademacher_cube };

inline std::string dist_name(CovariateDist d) {
  switch (d) {
    case CovariateDist::sphere_uniform: return "sphere_uniform";
    case CovariateDist::gaussian_clipped: return "gaussian_clipped";
    case CovariateDist::rademacher_cube: return "rademacher_cube";
  }
  return "?";
}

inline CovariateDist parse_dist(const std::string& s) {
  if (s == "sphere_uniform") return CovariateDist::sphere_uniform;
  if (s == "gaussian_clipped") return CovariateDist::gaussian_clipped;
  if (s == "rademacher_cube") return CovariateDist::rademacher_cube;
  throw std::invalid_argument("unknown covariate distribution '" + s + "'");
}

// gaussian_clipped draws x_j = R sqrt(lambda_j) g_j with lambda_j proportional to
// j^(-spectrum_decay) and sum lambda_j = 1, then clips radially to the R-ball.
struct DesignSpec {
  CovariateDist dist = CovariateDist::sphere_uniform;
  double spectrum_decay = 0.0;
};

struct DatasetMeta {
  Family family = Family::glm;
  std::string distribution = "sphere_uniform";
  std::uint64_t seed = 0;
  double noise_half_range = 0.0;
};

struct Dataset {
  Mat X;
  Vec y;
  Vec w_star;
  DatasetMeta meta;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
};

namespace detail {

inline void shrink_to_radius(Eigen::Ref<Vec> x, double R) {
  double n = x.norm();
  if (n > R) x *= R / n;
  while (x.norm() > R) x *= std::nextafter(1.0, 0.0);
}

inline Vec spectrum_scales(Eigen::Index d, double decay) {
  Vec lam(d);
  for (Eigen::Index j = 0; j < d; ++j) lam[j] = std::pow(static_cast<double>(j + 1), -decay);
  lam /= lam.sum();
  return lam.cwiseSqrt();
}

inline void draw_row(CovariateDist dist, Eigen::Ref<Vec> x, double R, const Vec& scales, Rng& rng) {
  const Eigen::Index d = x.size();
  switch (dist) {
    case CovariateDist::sphere_uniform: {
      double n = 0.0;
      while (n == 0.0) {
        for (Eigen::Index j = 0; j < d; ++j) x[j] = rng.normal();
        n = x.norm();
      }
      x *= R / n;
      shrink_to_radius(x, R);
      break;
    }
    case CovariateDist::gaussian_clipped: {
      for (Eigen::Index j = 0; j < d; ++j) x[j] = R * scales[j] * rng.normal();
      shrink_to_radius(x, R);
      break;
    }
    case CovariateDist::rademacher_cube: {
      for (Eigen::Index j = 0; j < d; ++j) x[j] = rng.sign() * R;
      break;
    }
  }
}

}  // namespace detail

inline Mat sample_covariates(const DesignSpec& design, Eigen::Index n, Eigen::Index d, double R, std::uint64_t seed) {
  if (n < 0 || d < 1) throw std::invalid_argument("sample_covariates needs n >= 0 and d >= 1");
  if (!(R > 0)) throw std::invalid_argument("sample_covariates needs R > 0");
  Mat X(n, d);
  Vec scales = detail::spectrum_scales(d, design.spectrum_decay);
  for (Eigen::Index t = 0; t < n; ++t) {
    Rng rng = Rng::stream(seed, "row", static_cast<std::uint64_t>(t));
    Vec x(d);
    detail::draw_row(design.dist, x, R, scales, rng);
    X.row(t) = x.transpose();
  }
  return X;
}

inline Mat sample_covariates(CovariateDist dist, Eigen::Index n, Eigen::Index d, double R, std::uint64_t seed) {
  return sample_covariates(DesignSpec{dist, 0.0}, n, d, R, seed);
}

inline void check_feasible_weight(const ModelSpec& model, const Vec& w_star) {
  double q = norm(w_star, model.geometry.dual_exponent);
  if (q > model.geometry.radius_B * (1.0 + 1e-12)) throw std::invalid_argument("w_star lies outside the weight ball");
}

inline Dataset generate(const ModelSpec& model, const Vec& w_star, Eigen::Index n, std::uint64_t seed,
                        const DesignSpec& design = {}, std::optional<UniformNoise> noise = std::nullopt) {
  check_feasible_weight(model, w_star);
  const double R = model.geometry.radius_R;
  const Eigen::Index d = w_star.size();
  UniformNoise z = noise.value_or(model.noise);
  if (model.family == Family::robust_regression &&
      model.Y_bound < model.geometry.radius_B * R + z.half_range - 1e-12)
    throw std::invalid_argument("label bound Y too small for the noise range");
  if (design.dist == CovariateDist::rademacher_cube && !model.geometry.primal_exponent.is_infinite() && d > 1)
    throw std::invalid_argument("rademacher_cube rows violate a finite-p data ball");

  Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  data.w_star = w_star;
  data.meta = {model.family, dist_name(design.dist), seed,
               model.family == Family::robust_regression ? z.half_range : 0.0};
  Vec scales = detail::spectrum_scales(d, design.spectrum_decay);
  for (Eigen::Index t = 0; t < n; ++t) {
    Rng rng = Rng::stream(seed, "row", static_cast<std::uint64_t>(t));
    Vec x(d);
    detail::draw_row(design.dist, x, R, scales, rng);
    double u = w_star.dot(x);
    double y = 0.0;
    switch (model.family) {
      case Family::glm: y = rng.bernoulli(model.link().eval(u)) ? 1.0 : 0.0; break;
      case Family::robust_regression: y = u + z.sample(rng); break;
      case Family::relu: y = u >= 0.0 ? 1.0 : -1.0; break;
    }
    data.X.row(t) = x.transpose();
    data.y[t] = y;
  }
  return data;
}

struct PopulationEstimate {
  double loss = 0.0;
  double loss_stderr = 0.0;
  Vec grad;
  Vec grad_stderr;
  double grad_norm_stderr = 0.0;
};

// Plug-in averages over an existing sample (shared oracle sample).
inline PopulationEstimate evaluate_population(const ModelSpec& model, const Dataset& sample, const Vec& w) {
  const Eigen::Index m = sample.n();
  const Eigen::Index d = sample.d();
  if (w.size() != d) throw std::invalid_argument("dimension mismatch in population estimate");
  if (m < 2) throw std::invalid_argument("population estimate needs at least two samples");
  Vec u = sample.X * w;
  Vec losses(m), scal(m);
  for (Eigen::Index t = 0; t < m; ++t) {
    losses[t] = scalar_loss(model, u[t], sample.y[t]);
    scal[t] = scalar_d1(model, u[t], sample.y[t]);
  }
  const double md = static_cast<double>(m);
  PopulationEstimate est;
  est.loss = losses.mean();
  est.loss_stderr = std::sqrt((losses.array() - est.loss).square().sum() / (md - 1.0) / md);
  est.grad = sample.X.transpose() * scal / md;
  Vec second = (sample.X.array().square().colwise() * scal.array().square()).colwise().sum().transpose() / md;
  Vec var = ((second.array() - est.grad.array().square()) * md / (md - 1.0)).max(0.0);
  est.grad_stderr = (var / md).cwiseSqrt();
  est.grad_norm_stderr = est.grad_stderr.norm();
  return est;
}

// Paired difference L(w) - L(w_ref) on one sample: mean and standard error.
inline std::pair<double, double> paired_excess(const ModelSpec& model, const Dataset& sample, const Vec& w,
                                               const Vec& w_ref) {
  const Eigen::Index m = sample.n();
  Vec u = sample.X * w, v = sample.X * w_ref;
  double mean = 0.0, m2 = 0.0;
  for (Eigen::Index t = 0; t < m; ++t) {
    double diff = scalar_loss(model, u[t], sample.y[t]) - scalar_loss(model, v[t], sample.y[t]);
    double delta = diff - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (diff - mean);
  }
  double se = m > 1 ? std::sqrt(m2 / static_cast<double>(m - 1) / static_cast<double>(m)) : 0.0;
  return {mean, se};
}

inline PopulationEstimate population_oracle(const ModelSpec& model, const Vec& w_star, const Vec& w, Eigen::Index m,
                                            std::uint64_t seed, const DesignSpec& design = {}) {
  if (m < 1000) throw std::invalid_argument("population oracle needs m >= 1000");
  Dataset sample = generate(model, w_star, m, derive_seed(seed, "oracle"), design);
  return evaluate_population(model, sample, w);
}

// Empirical risk and gradient.
inline double empirical_risk(const ModelSpec& model, const Mat& X, const Vec& y, const Vec& w) {
  if (X.rows() == 0) return 0.0;
  Vec u = X * w;
  double s = 0.0;
  for (Eigen::Index t = 0; t < X.rows(); ++t) s += scalar_loss(model, u[t], y[t]);
  return s / static_cast<double>(X.rows());
}

inline Vec empirical_grad(const ModelSpec& model, const Mat& X, const Vec& y, const Vec& w) {
  if (X.rows() == 0) return Vec::Zero(w.size());
  Vec u = X * w;
  Vec s(X.rows());
  for (Eigen::Index t = 0; t < X.rows(); ++t) s[t] = scalar_d1(model, u[t], y[t]);
  return X.transpose() * s / static_cast<double>(X.rows());
}

inline Mat empirical_hessian(const ModelSpec& model, const Mat& X, const Vec& y, const Vec& w) {
  if (X.rows() == 0) return Mat::Zero(w.size(), w.size());
  Vec u = X * w;
  Vec s(X.rows());
  for (Eigen::Index t = 0; t < X.rows(); ++t) s[t] = scalar_d2(model, u[t], y[t]);
  return X.transpose() * s.asDiagonal() * X / static_cast<double>(X.rows());
}

struct CovarianceSummary {
  Mat Sigma_hat;
  double lambda_min = 0.0;
  double psi_min_estimate = 0.0;
  double psi_min_stderr = 0.0;
  std::vector<Eigen::Index> support_S;
};

inline std::vector<Eigen::Index> support_of(const Vec& w) {
  std::vector<Eigen::Index> s;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) s.push_back(i);
  return s;
}

// Random direction in the cone C(S, 1): ||nu_{S^c}||_1 = u ||nu_S||_1, u ~ U[0,1].
inline Vec sample_cone_direction(Eigen::Index d, const std::vector<Eigen::Index>& S, Rng& rng) {
  Vec nu = Vec::Zero(d);
  std::vector<bool> on(d, false);
  for (auto i : S) on[i] = true;
  double l1S = 0.0;
  for (auto i : S) {
    nu[i] = rng.normal();
    l1S += std::abs(nu[i]);
  }
  std::vector<Eigen::Index> off;
  for (Eigen::Index i = 0; i < d; ++i)
    if (!on[i]) off.push_back(i);
  if (off.empty()) return nu;
  double target = rng.uniform() * l1S;
  Vec e(off.size());
  for (std::size_t k = 0; k < off.size(); ++k) e[k] = rng.exponential();
  double es = e.sum();
  for (std::size_t k = 0; k < off.size(); ++k) nu[off[k]] = rng.sign() * target * e[k] / es;
  return nu;
}

inline bool in_cone(const Vec& nu, const std::vector<Eigen::Index>& S, double alpha = 1.0, double tol = 1e-12) {
  std::vector<bool> on(nu.size(), false);
  for (auto i : S) on[i] = true;
  double inside = 0.0, outside = 0.0;
  for (Eigen::Index i = 0; i < nu.size(); ++i) (on[i] ? inside : outside) += std::abs(nu[i]);
  return outside <= alpha * inside + tol;
}

inline CovarianceSummary covariance_summary(const Mat& X, const Vec& w_star, int cone_samples = 10000,
                                            std::uint64_t seed = 0) {
  if (X.cols() != w_star.size()) throw std::invalid_argument("dimension mismatch in covariance summary");
  if (X.cols() > 1000) throw std::invalid_argument("covariance summary limited to d <= 1000");
  CovarianceSummary cs;
  const double n = static_cast<double>(std::max<Eigen::Index>(X.rows(), 1));
  cs.Sigma_hat = X.transpose() * X / n;
  Eigen::SelfAdjointEigenSolver<Mat> es(cs.Sigma_hat, Eigen::EigenvaluesOnly);
  const Vec& ev = es.eigenvalues();
  bool found = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > 1e-10) {
      cs.lambda_min = ev[i];
      found = true;
      break;
    }
  }
  if (!found) throw std::domain_error("covariance is zero: lambda_min undefined");
  cs.support_S = support_of(w_star);
  if (cs.support_S.empty() || cone_samples <= 0) return cs;
  Rng rng = Rng::stream(seed, "cone");
  const int batches = 10;
  std::vector<double> batch_min(batches, std::numeric_limits<double>::infinity());
  double overall = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cone_samples; ++k) {
    Vec nu = sample_cone_direction(X.cols(), cs.support_S, rng);
    double nn = nu.squaredNorm();
    if (nn == 0.0) continue;
    double q = nu.dot(cs.Sigma_hat * nu) / nn;
    batch_min[k % batches] = std::min(batch_min[k % batches], q);
    overall = std::min(overall, q);
  }
  cs.psi_min_estimate = std::max(0.0, overall);
  double mean = 0.0;
  for (double b : batch_min) mean += b / batches;
  double var = 0.0;
  for (double b : batch_min) var += (b - mean) * (b - mean) / (batches - 1);
  cs.psi_min_stderr = std::sqrt(var / batches);
  return cs;
}

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# family=" << family_name(data.meta.family) << ",d=" << data.d() << ",n=" << data.n()
      << ",seed=" << data.meta.seed << ",distribution=" << data.meta.distribution
      << ",noise=" << fmt_double(data.meta.noise_half_range) << ",w_star=";
  for (Eigen::Index j = 0; j < data.w_star.size(); ++j) out << (j ? ";" : "") << fmt_double(data.w_star[j]);
  out << '\n';
  for (Eigen::Index t = 0; t < data.n(); ++t) {
    out << fmt_double(data.y[t]);
    for (Eigen::Index j = 0; j < data.d(); ++j) out << ',' << fmt_double(data.X(t, j));
    out << '\n';
  }
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header.rfind("# ", 0) != 0) throw std::runtime_error("dataset header missing");
  std::map<std::string, std::string> kv;
  for (auto field : split(std::string_view(header).substr(2), ',')) {
    auto eq = field.find('=');
    if (eq == std::string_view::npos) throw std::runtime_error("malformed dataset header field");
    kv[std::string(field.substr(0, eq))] = std::string(field.substr(eq + 1));
  }
  Dataset data;
  const std::string fam = kv.at("family");
  data.meta.family = fam == "glm" ? Family::glm : fam == "rr" ? Family::robust_regression : Family::relu;
  data.meta.distribution = kv.at("distribution");
  data.meta.seed = std::stoull(kv.at("seed"));
  data.meta.noise_half_range = parse_double(kv.at("noise"));
  const Eigen::Index d = std::stol(kv.at("d"));
  const Eigen::Index n = std::stol(kv.at("n"));
  auto ws = split(kv.at("w_star"), ';');
  if (static_cast<Eigen::Index>(ws.size()) != d) throw std::runtime_error("w_star length mismatch");
  data.w_star.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) data.w_star[j] = parse_double(ws[j]);
  data.X.resize(n, d);
  data.y.resize(n);
  std::string line;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (!std::getline(in, line)) throw std::runtime_error("dataset truncated");
    auto f = split(line, ',');
    if (static_cast<Eigen::Index>(f.size()) != d + 1) throw std::runtime_error("dataset row has wrong width");
    data.y[t] = parse_double(f[0]);
    for (Eigen::Index j = 0; j < d; ++j) data.X(t, j) = parse_double(f[j + 1]);
  }
  return data;
}

}  // namespace gradconv

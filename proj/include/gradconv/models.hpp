#pragma once

#include "gradconv/geometry.hpp"
#include "gradconv/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

namespace gradconv {

enum class LinkKind { logistic, probit };

struct LinkFunction {
  LinkKind kind = LinkKind::logistic;

  double eval(double s) const {
    if (kind == LinkKind::logistic) {
      if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
      double e = std::exp(s);
      return e / (1.0 + e);
    }
    return 0.5 * std::erfc(-s / std::numbers::sqrt2);
  }
  double d1(double s) const {
    if (kind == LinkKind::logistic) {
      double g = eval(s);
      return g * (1.0 - g);
    }
    return pdf(s);
  }
  double d2(double s) const {
    if (kind == LinkKind::logistic) {
      double g = eval(s);
      return g * (1.0 - g) * (1.0 - 2.0 * g);
    }
    return -s * pdf(s);
  }
  double d3(double s) const {
    if (kind == LinkKind::logistic) {
      double g = eval(s);
      return g * (1.0 - g) * (1.0 - 6.0 * g + 6.0 * g * g);
    }
    return (s * s - 1.0) * pdf(s);
  }

  std::string name() const { return kind == LinkKind::logistic ? "logistic" : "probit"; }

 private:
  static double pdf(double s) { return std::exp(-0.5 * s * s) / std::sqrt(2.0 * std::numbers::pi); }
};

// Tukey biweight.
struct RobustRho {
  double c_param = 4.685;

  double eval(double t) const {
    double c2 = c_param * c_param;
    if (std::abs(t) >= c_param) return c2 / 6.0;
    double v = 1.0 - t * t / c2;
    return c2 / 6.0 * (1.0 - v * v * v);
  }
  double d1(double t) const {
    if (std::abs(t) >= c_param) return 0.0;
    double v = 1.0 - t * t / (c_param * c_param);
    return t * v * v;
  }
  double d2(double t) const {
    if (std::abs(t) >= c_param) return 0.0;
    double u = t * t / (c_param * c_param);
    return (1.0 - u) * (1.0 - 5.0 * u);
  }
  double d3(double t) const {
    if (std::abs(t) >= c_param) return 0.0;
    double c2 = c_param * c_param;
    double u = t * t / c2;
    return 2.0 * t / c2 * (10.0 * u - 6.0);
  }
};

enum class Family { glm, robust_regression, relu };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::glm: return "glm";
    case Family::robust_regression: return "rr";
    case Family::relu: return "relu";
  }
  return "?";
}

// Symmetric noise zeta ~ Uniform[-a, a]; a = 0 is noiseless.
struct UniformNoise {
  double half_range = 0.3;
  double sample(Rng& rng) const { return half_range > 0 ? rng.uniform(-half_range, half_range) : 0.0; }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct RegularityConstants {
  double C_upper = 1.0;
  double c_lower = 1.0;
  double c_lower_stderr = 0.0;
  Interval interval_S;
  double grad_range_G = 1.0;
  double loss_smoothness_H = 1.0;
  // max(C_upper, sup |third derivative|) on S, used by the Hessian bounds.
  double C_third = 1.0;
};

struct ModelSpec {
  Family family = Family::glm;
  std::variant<std::monostate, LinkFunction, RobustRho> link_or_rho;
  GeometryConfig geometry;
  double Y_bound = 0.0;
  UniformNoise noise{0.0};
  RegularityConstants constants;

  const LinkFunction& link() const { return std::get<LinkFunction>(link_or_rho); }
  const RobustRho& rho() const { return std::get<RobustRho>(link_or_rho); }
  bool smooth() const { return family != Family::relu; }
  int weight_exponent_tag() const { return geometry.weight_ball().exponent; }

  std::string describe() const {
    std::string s = family_name(family);
    if (family == Family::glm) s += ":" + link().name();
    if (family == Family::robust_regression) s += ":tukey(" + std::to_string(rho().c_param) + ")";
    return s;
  }
};

inline void check_dims(const ModelSpec&, const Vec& w, const Eigen::Ref<const Vec>& x) {
  if (w.size() != x.size()) throw std::invalid_argument("dimension mismatch between w and x");
}

// Derivatives of the composed scalar loss G(u; y) with u = <w, x>.
inline double scalar_loss(const ModelSpec& m, double u, double y) {
  switch (m.family) {
    case Family::glm: {
      double r = m.link().eval(u) - y;
      return r * r;
    }
    case Family::robust_regression: return m.rho().eval(u - y);
    case Family::relu: return std::max(0.0, -u * y);
  }
  return 0.0;
}

inline double scalar_d1(const ModelSpec& m, double u, double y) {
  switch (m.family) {
    case Family::glm: return 2.0 * (m.link().eval(u) - y) * m.link().d1(u);
    case Family::robust_regression: return m.rho().d1(u - y);
    case Family::relu: return (y * u <= 0.0) ? -y : 0.0;
  }
  return 0.0;
}

inline double scalar_d2(const ModelSpec& m, double u, double y) {
  switch (m.family) {
    case Family::glm: {
      const auto& s = m.link();
      double g1 = s.d1(u);
      return 2.0 * g1 * g1 + 2.0 * (s.eval(u) - y) * s.d2(u);
    }
    case Family::robust_regression: return m.rho().d2(u - y);
    case Family::relu: throw std::invalid_argument("relu loss has no Hessian");
  }
  return 0.0;
}

inline double scalar_d3(const ModelSpec& m, double u, double y) {
  switch (m.family) {
    case Family::glm: {
      const auto& s = m.link();
      return 6.0 * s.d1(u) * s.d2(u) + 2.0 * (s.eval(u) - y) * s.d3(u);
    }
    case Family::robust_regression: return m.rho().d3(u - y);
    case Family::relu: throw std::invalid_argument("relu loss has no third derivative");
  }
  return 0.0;
}

inline double loss(const ModelSpec& m, const Vec& w, const Eigen::Ref<const Vec>& x, double y) {
  check_dims(m, w, x);
  return scalar_loss(m, w.dot(x), y);
}

inline Vec grad(const ModelSpec& m, const Vec& w, const Eigen::Ref<const Vec>& x, double y) {
  check_dims(m, w, x);
  return scalar_d1(m, w.dot(x), y) * x;
}

inline Mat hessian(const ModelSpec& m, const Vec& w, const Eigen::Ref<const Vec>& x, double y) {
  if (!m.smooth()) throw std::invalid_argument("hessian requested for non-smooth family");
  check_dims(m, w, x);
  return scalar_d2(m, w.dot(x), y) * (x * x.transpose());
}

inline constexpr int kConstantGrid = 10000;

inline RegularityConstants regularity_constants(const ModelSpec& m, std::optional<UniformNoise> noise = std::nullopt,
                                                std::uint64_t seed = 0x5eed, std::size_t samples = 1000000) {
  RegularityConstants rc;
  const double B = m.geometry.radius_B;
  const double R = m.geometry.radius_R;
  if (m.family == Family::relu) {
    rc.interval_S = {-B * R, B * R};
    rc.grad_range_G = R;
    rc.loss_smoothness_H = 0.0;
    return rc;
  }
  double half = m.family == Family::glm ? B * R : B * R + m.Y_bound;
  rc.interval_S = {-half, half};
  double max_d1 = 0.0, max_d2 = 0.0, max_d3 = 0.0, min_d1 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kConstantGrid; ++i) {
    double s = kConstantGrid == 1 ? 0.0 : -half + 2.0 * half * i / (kConstantGrid - 1);
    double a, b, c;
    if (m.family == Family::glm) {
      a = m.link().d1(s), b = m.link().d2(s), c = m.link().d3(s);
    } else {
      a = m.rho().d1(s), b = m.rho().d2(s), c = m.rho().d3(s);
    }
    max_d1 = std::max(max_d1, std::abs(a));
    max_d2 = std::max(max_d2, std::abs(b));
    max_d3 = std::max(max_d3, std::abs(c));
    min_d1 = std::min(min_d1, a);
  }
  rc.C_upper = std::max({1.0, max_d1, max_d2});
  rc.C_third = std::max(rc.C_upper, max_d3);
  if (m.family == Family::glm) {
    rc.c_lower = min_d1;
    rc.grad_range_G = 2.0 * rc.C_upper * R;
    rc.loss_smoothness_H = 6.0 * rc.C_upper * rc.C_upper * R * R;
  } else {
    // h'(0) by central difference over a common Monte-Carlo sample of zeta.
    UniformNoise z = noise.value_or(m.noise);
    const double step = 0.01;
    Rng rng = Rng::stream(seed, "constants/c_rho");
    double mean = 0.0, m2 = 0.0;
    std::size_t count = z.half_range > 0 ? samples : 1;
    for (std::size_t i = 0; i < count; ++i) {
      double zeta = z.sample(rng);
      double v = (m.rho().d1(step + zeta) - m.rho().d1(-step + zeta)) / (2.0 * step);
      double delta = v - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (v - mean);
    }
    rc.c_lower = mean;
    rc.c_lower_stderr = count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count)) : 0.0;
    rc.grad_range_G = rc.C_upper * R;
    rc.loss_smoothness_H = rc.C_upper * R * R;
  }
  if (!(rc.c_lower > 0.0)) throw std::domain_error("degenerate model: lower curvature constant is not positive");
  return rc;
}

inline ModelSpec make_glm(LinkKind link, const GeometryConfig& geometry) {
  ModelSpec m;
  m.family = Family::glm;
  m.link_or_rho = LinkFunction{link};
  m.geometry = geometry;
  m.constants = regularity_constants(m);
  return m;
}

// Y defaults to the tight value B R + a.
inline ModelSpec make_robust(RobustRho rho, const GeometryConfig& geometry, UniformNoise noise = {0.3},
                             std::optional<double> Y = std::nullopt) {
  ModelSpec m;
  m.family = Family::robust_regression;
  m.link_or_rho = rho;
  m.geometry = geometry;
  m.noise = noise;
  m.Y_bound = Y.value_or(geometry.radius_B * geometry.radius_R + noise.half_range);
  if (m.Y_bound < geometry.radius_B * geometry.radius_R + noise.half_range - 1e-12)
    throw std::invalid_argument("label bound Y must be at least B R + noise half-range");
  m.constants = regularity_constants(m, noise);
  return m;
}

inline ModelSpec make_relu() {
  ModelSpec m;
  m.family = Family::relu;
  m.geometry = GeometryConfig::l2(1.0, 1.0);
  m.constants = regularity_constants(m);
  return m;
}

}  // namespace gradconv

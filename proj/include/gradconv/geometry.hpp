#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradconv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Extended-real exponent: finite value or infinity.
class Exponent {
 public:
  static Exponent finite(double p) {
    if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("exponent must be a finite value >= 1");
    return Exponent(false, p);
  }
  static Exponent infinity() { return Exponent(true, 0.0); }

  bool is_infinite() const { return infinite_; }
  double value() const {
    if (infinite_) throw std::logic_error("value() on infinite exponent");
    return p_;
  }

  // Conjugate exponent, 1/p + 1/q = 1.
  Exponent dual() const {
    if (infinite_) return finite(1.0);
    if (p_ == 1.0) return infinity();
    return finite(p_ / (p_ - 1.0));
  }

  bool operator==(const Exponent& o) const { return infinite_ == o.infinite_ && (infinite_ || p_ == o.p_); }

  std::string to_string() const {
    if (infinite_) return "inf";
    std::string s = std::to_string(p_);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }

 private:
  Exponent(bool inf, double p) : infinite_(inf), p_(p) {}
  bool infinite_;
  double p_;
};

inline double norm(const Eigen::Ref<const Vec>& v, Exponent p) {
  if (v.size() == 0) return 0.0;
  if (p.is_infinite()) return v.cwiseAbs().maxCoeff();
  double e = p.value();
  if (e == 1.0) return v.cwiseAbs().sum();
  if (e == 2.0) return v.norm();
  double scale = v.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]) / scale, e);
  return scale * std::pow(s, 1.0 / e);
}

inline double norm(const Eigen::Ref<const Vec>& v, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("norm exponent must be >= 1");
  return norm(v, std::isinf(p) ? Exponent::infinity() : Exponent::finite(p));
}

// l_q proxy exponent for the infinity norm.
inline double proxy_exponent(int d) { return std::max(2.0, std::log(static_cast<double>(d))); }

// Exponent actually used when a smooth norm is needed.
inline Exponent smooth_exponent(Exponent p, int d) {
  return p.is_infinite() ? Exponent::finite(proxy_exponent(d)) : p;
}

inline double smoothness_constant(Exponent p, int d) {
  if (p.is_infinite()) return proxy_exponent(d) - 1.0;
  if (p.value() < 2.0) throw std::invalid_argument("smoothness constant needs p >= 2");
  return p.value() - 1.0;
}

struct Ball {
  int exponent = 2;
  double radius = 1.0;
};

inline Vec project_l2(const Vec& v, double radius) {
  double n = v.norm();
  if (n <= radius) return v;
  return v * (radius / n);
}

// Sort-based projection onto the l1 ball; ties resolved by index order.
inline Vec project_l1(const Vec& v, double radius) {
  if (v.cwiseAbs().sum() <= radius) return v;
  const Eigen::Index d = v.size();
  std::vector<double> u(d);
  for (Eigen::Index i = 0; i < d; ++i) u[i] = std::abs(v[i]);
  std::vector<Eigen::Index> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return u[a] > u[b]; });
  double cumsum = 0.0, theta = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    cumsum += u[order[k]];
    double t = (cumsum - radius) / static_cast<double>(k + 1);
    if (u[order[k]] - t > 0.0) theta = t;
  }
  Vec out(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    double m = std::max(u[i] - theta, 0.0);
    out[i] = v[i] < 0 ? -m : m;
  }
  return out;
}

inline Vec project(const Vec& v, const Ball& ball) {
  if (!(ball.radius > 0.0)) throw std::invalid_argument("ball radius must be positive");
  if (ball.exponent == 2) return project_l2(v, ball.radius);
  if (ball.exponent == 1) return project_l1(v, ball.radius);
  throw std::invalid_argument("projection supports exponents 1 and 2 only");
}

struct GeometryConfig {
  Exponent primal_exponent = Exponent::finite(2.0);
  Exponent dual_exponent = Exponent::finite(2.0);
  double beta = 1.0;
  double radius_R = 1.0;
  double radius_B = 1.0;

  static GeometryConfig make(Exponent p, double R, double B, int d) {
    if (!p.is_infinite() && p.value() < 2.0) throw std::invalid_argument("primal exponent must be in [2, inf]");
    if (!(R >= 0.0) || !(B >= 0.0)) throw std::invalid_argument("radii must be nonnegative");
    GeometryConfig g;
    g.primal_exponent = p;
    g.dual_exponent = p.dual();
    g.beta = smoothness_constant(p, d);
    g.radius_R = R;
    g.radius_B = B;
    return g;
  }

  static GeometryConfig l2(double R = 1.0, double B = 1.0) { return make(Exponent::finite(2.0), R, B, 1); }

  // Weight-space ball W = {||w||_q <= B}.
  Ball weight_ball() const {
    if (dual_exponent == Exponent::finite(2.0)) return {2, radius_B};
    if (dual_exponent == Exponent::finite(1.0)) return {1, radius_B};
    throw std::invalid_argument("weight ball projection only for q in {1, 2}");
  }
};

}  // namespace gradconv

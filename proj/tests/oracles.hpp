#pragma once

#include "gradconv/geometry.hpp"
#include "gradconv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using gradconv::Mat;
using gradconv::Vec;

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
  Vec f0 = f(w);
  Mat J(f0.size(), w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Vec a = w, b = w;
    a[i] += h;
    b[i] -= h;
    J.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return J;
}

// Plain loop over all sign vectors, no symmetry or Gray code.
inline double naive_expected_max(const std::vector<Mat>& atoms, const std::function<double(const Vec&)>& reduce) {
  const Eigen::Index m = atoms[0].rows();
  double total = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    Vec eps(m);
    for (Eigen::Index t = 0; t < m; ++t) eps[t] = (mask >> t) & 1 ? -1.0 : 1.0;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& a : atoms) best = std::max(best, reduce(a.transpose() * eps));
    total += best;
  }
  return total / static_cast<double>(std::uint64_t{1} << m);
}

// KKT conditions of the l1-ball projection: p = sign(v) max(|v| - theta, 0) with theta >= 0.
inline bool l1_projection_kkt(const Vec& v, const Vec& p, double radius, double tol = 1e-10) {
  if (p.cwiseAbs().sum() > radius + tol) return false;
  if (v.cwiseAbs().sum() <= radius) return (v - p).cwiseAbs().maxCoeff() <= tol;
  double theta = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(p[i]) > tol) {
      theta = std::abs(v[i]) - std::abs(p[i]);
      break;
    }
  if (theta < -tol) return false;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double expect = std::copysign(std::max(std::abs(v[i]) - theta, 0.0), v[i]);
    if (std::abs(expect - p[i]) > 1e-8) return false;
  }
  return std::abs(p.cwiseAbs().sum() - radius) <= 1e-8;
}

// Minimum Rayleigh quotient over the cone {||nu_off||_1 <= ||nu_S||_1} at d = 3 by a dense spherical grid.
inline double psi_min_grid_d3(const Mat& Sigma, const std::vector<Eigen::Index>& S, int res = 400) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= res; ++i) {
    double th = M_PI * i / res;
    for (int j = 0; j < 2 * res; ++j) {
      double ph = M_PI * j / res;
      Vec nu(3);
      nu << std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th);
      double in = 0.0, out = 0.0;
      for (Eigen::Index k = 0; k < 3; ++k)
        (std::find(S.begin(), S.end(), k) != S.end() ? in : out) += std::abs(nu[k]);
      if (out > in) continue;
      best = std::min(best, nu.dot(Sigma * nu));
    }
  }
  return best;
}

}  // namespace oracle

#include "gradconv/rademacher.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace gradconv;

namespace {

ModelSpec logistic() { return make_glm(LinkKind::logistic, GeometryConfig::l2()); }

Mat column(std::initializer_list<double> v) {
  Mat m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST(Enumeration, SmallSignSums) {
  Reducer abs_r{Reduce::norm, Exponent::finite(2.0)};
  EXPECT_DOUBLE_EQ(enumerate_expected_max({column({1, 1, 1})}, abs_r), 1.5);
  EXPECT_DOUBLE_EQ(enumerate_expected_max({column({1, 2})}, abs_r), 2.0);
  Reducer signed_r{Reduce::signed_sum};
  EXPECT_DOUBLE_EQ(enumerate_expected_max({column({1, 1, 1})}, signed_r), 0.0);
  EXPECT_THROW(enumerate_expected_max({}, abs_r), std::invalid_argument);
}

TEST(Enumeration, GrayCodeMatchesNaiveLoop) {
  Rng rng = Rng::stream(3, "atoms");
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Mat> atoms;
    for (int g = 0; g < 4; ++g) {
      Mat a(9, 3);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
      atoms.push_back(a);
    }
    for (Reducer r : {Reducer{Reduce::norm, Exponent::finite(2.0)}, Reducer{Reduce::norm, Exponent::finite(1.0)},
                      Reducer{Reduce::norm, Exponent::infinity()}}) {
      double fast = enumerate_expected_max(atoms, r);
      double slow = oracle::naive_expected_max(atoms, [&](const Vec& s) { return r(s); });
      EXPECT_NEAR(fast, slow, 1e-12 * std::max(1.0, slow));
    }
    std::vector<Mat> scalar;
    for (const auto& a : atoms) scalar.push_back(a.col(0));
    Reducer sr{Reduce::signed_sum};
    EXPECT_NEAR(enumerate_expected_max(scalar, sr),
                oracle::naive_expected_max(scalar, [](const Vec& s) { return s[0]; }), 1e-12);
  }
}

TEST(Spectral, PowerIterationFindsDominantMagnitude) {
  Mat M = Vec((Vec(3) << 3.0, -5.0, 1.0).finished()).asDiagonal();
  Rng rng = Rng::stream(1, "power");
  EXPECT_NEAR(spectral_norm_sym(M, rng, 500, 1e-12).value, -5.0, 1e-8);
  Rng rng2 = Rng::stream(1, "power");
  EXPECT_NEAR(std::abs(power_iteration(M, rng2, 500, 1e-12).value), 5.0, 1e-8);
}

TEST(Grid, BallGridPointsAreFeasible) {
  for (const auto& w : ball_grid(2, Ball{2, 1.0}, 9)) EXPECT_LE(w.norm(), 1.0 + 1e-12);
  for (const auto& w : ball_grid(3, Ball{1, 0.5}, 5)) EXPECT_LE(w.cwiseAbs().sum(), 0.5 + 1e-12);
  EXPECT_FALSE(ball_grid(2, Ball{2, 1.0}, 9).empty());
}

TEST(Bounds, GradientBoundClosedForm) {
  ModelSpec m = logistic();
  EXPECT_NEAR(gradient_rc_bound(m, 100), 169.7056274847714, 1e-9);
  EXPECT_NEAR(gradient_rc_bound(m, 400), 2.0 * gradient_rc_bound(m, 100), 1e-9);
  ModelSpec zero_r = make_glm(LinkKind::logistic, GeometryConfig::l2(0.0, 1.0));
  EXPECT_EQ(gradient_rc_bound(zero_r, 100), 0.0);
  EXPECT_THROW(gradient_rc_bound(make_relu(), 10), std::invalid_argument);
}

TEST(Bounds, HessianBoundValue) {
  ModelSpec m = logistic();
  EXPECT_NEAR(hessian_rc_bound(m, 8, 2), 101.67, 0.01);
  EXPECT_GT(hessian_rc_bound(m, 8, 20), hessian_rc_bound(m, 8, 2));
}

TEST(Bounds, ExactHessianRcBelowBound) {
  ModelSpec m = logistic();
  Dataset data = generate(m, Vec::Constant(2, 0.5), 8, 11);
  RcEstimate est = exact_hessian_rc_bruteforce(m, data, ball_grid(2, Ball{2, 1.0}, 7));
  EXPECT_GT(est.value, 0.0);
  EXPECT_LE(est.value, hessian_rc_bound(m, 8, 2));
}

TEST(SmoothType, EqualityForOrthonormalRows) {
  Mat X = Mat::Identity(4, 4);
  InequalityCheck c = check_smooth_type(X, Exponent::finite(2.0), CheckMode::brute_force);
  EXPECT_NEAR(c.lhs, 2.0, 1e-12);  // ||eps||_2 = 2 for every pattern
  EXPECT_NEAR(c.rhs, 2.0 * std::sqrt(1.0), 1e-12);
  EXPECT_TRUE(c.holds);
}

TEST(SmoothType, HoldsOnRandomRowsForSeveralExponents) {
  Mat X = sample_covariates(CovariateDist::sphere_uniform, 10, 6, 1.0, 5);
  for (Exponent p : {Exponent::finite(2.0), Exponent::finite(4.0), Exponent::infinity()})
    EXPECT_TRUE(check_smooth_type(X, p, CheckMode::brute_force).holds) << p.to_string();
  EXPECT_THROW(check_smooth_type(sample_covariates(CovariateDist::sphere_uniform, 17, 2, 1.0, 1),
                                 Exponent::finite(2.0), CheckMode::brute_force),
               std::invalid_argument);
}

TEST(Contraction, HoldsForTanhMaps) {
  Mat X = sample_covariates(CovariateDist::sphere_uniform, 8, 2, 1.0, 6);
  FiniteClass cls = tabulate(constant_class(X, Ball{2, 1.0}), {Vec::Zero(2)});
  cls.members.push_back(-cls.members[0]);
  cls.members.push_back(0.5 * cls.members[0]);
  std::vector<LipschitzMap> h;
  for (int t = 0; t < 8; ++t) h.push_back([](const Vec& v) { return std::tanh(v.norm()); });
  InequalityCheck bf = check_contraction(cls, h, 1.0, CheckMode::brute_force);
  EXPECT_TRUE(bf.holds);
  InequalityCheck mc = check_contraction(cls, h, 1.0, CheckMode::monte_carlo, 400, 3);
  EXPECT_LE(mc.diff_mean, 3 * mc.diff_stderr);
  h.pop_back();
  EXPECT_THROW(check_contraction(cls, h, 1.0, CheckMode::brute_force), std::invalid_argument);
}

TEST(ChainRule, PrecheckRejectsUnderstatedConstants) {
  CompositionFamily fam;
  fam.n = 2;
  fam.K = 1;
  fam.d = 1;
  fam.grad_G = [](Eigen::Index, const Vec&) { return Vec::Constant(1, 2.0); };
  fam.F = [](Eigen::Index, const Vec& w) { return w; };
  fam.jac_F = [](Eigen::Index, const Vec&) { return Mat::Identity(1, 1).eval(); };
  std::vector<Vec> grid = {Vec::Zero(1)};
  EXPECT_THROW(check_chain_rule(fam, grid, 1.0, 1.0, CheckMode::brute_force), std::domain_error);
  EXPECT_TRUE(check_chain_rule(fam, grid, 2.0, 1.0, CheckMode::brute_force).holds);
}

TEST(NormedRc, MonteCarloNearExactForGradientClass) {
  ModelSpec m = logistic();
  Dataset data = generate(m, Vec::Constant(2, 0.5), 10, 2);
  FunctionClass fc = gradient_class(m, data);
  auto grid = ball_grid(2, Ball{2, 1.0}, 9);
  RcEstimate exact = exact_rc_bruteforce(fc, Exponent::finite(2.0), grid);
  SupSolver solver;
  solver.restarts = 2;
  solver.steps = 50;
  solver.lipschitz_probes = 20;
  RcEstimate mc = estimate_normed_rc(fc, Exponent::finite(2.0), 1000, solver, 4);
  EXPECT_NEAR(mc.value, exact.value, 4 * mc.stderr + 0.05);
  EXPECT_LE(exact.value, gradient_rc_bound(m, 10));
}

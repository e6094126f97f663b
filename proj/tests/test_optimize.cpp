#include "gradconv/optimize.hpp"

#include <gtest/gtest.h>

using namespace gradconv;

namespace {

ModelSpec logistic() { return make_glm(LinkKind::logistic, GeometryConfig::l2()); }

Vec flat(Eigen::Index d, double scale) { return Vec::Constant(d, scale / std::sqrt(static_cast<double>(d))); }

}  // namespace

TEST(Sampling, UniformBallsRespectRadius) {
  Rng rng = Rng::stream(1, "balls");
  for (int k = 0; k < 500; ++k) {
    EXPECT_LE(uniform_in_ball(6, Ball{2, 0.5}, rng).norm(), 0.5);
    EXPECT_LE(uniform_in_ball(6, Ball{1, 0.5}, rng).cwiseAbs().sum(), 0.5 + 1e-12);
    EXPECT_NEAR(uniform_on_sphere(6, Ball{2, 0.5}, rng).norm(), 0.5, 1e-12);
    EXPECT_NEAR(uniform_on_sphere(6, Ball{1, 0.5}, rng).cwiseAbs().sum(), 0.5, 1e-12);
  }
}

TEST(Pgd, ReachesToleranceInsideBall) {
  ModelSpec m = logistic();
  Dataset data = generate(m, flat(5, 0.9), 400, 2);
  OptimizerConfig cfg;
  cfg.grad_tolerance = 1e-5;
  cfg.restarts = 3;
  OptResult r = pgd(m, data, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.grad_norm_final, 1e-5);
  EXPECT_LE(r.w_hat.norm(), 1.0 + 1e-12);
  EXPECT_NEAR(r.empirical_risk, empirical_risk(m, data.X, data.y, r.w_hat), 1e-15);
}

TEST(Pgd, DeterministicForFixedSeed) {
  ModelSpec m = logistic();
  Dataset data = generate(m, flat(4, 0.5), 200, 3);
  OptimizerConfig cfg;
  cfg.seed = 42;
  cfg.restarts = 4;
  OptResult a = pgd(m, data, cfg), b = pgd(m, data, cfg);
  EXPECT_EQ(a.w_hat, b.w_hat);
  EXPECT_EQ(a.restart_index, b.restart_index);
}

TEST(Pgd, ZeroStepBudgetReportsInitialState) {
  ModelSpec m = logistic();
  Dataset data = generate(m, flat(3, 0.5), 100, 4);
  OptimizerConfig cfg;
  cfg.max_steps = 0;
  cfg.restarts = 1;
  cfg.w0 = Vec::Zero(3);
  OptResult r = pgd(m, data, cfg);
  EXPECT_EQ(r.steps_used, 0);
  EXPECT_EQ(r.w_hat, Vec::Zero(3));
  EXPECT_FALSE(r.converged);
  EXPECT_THROW(pgd(make_relu(), data, cfg), std::invalid_argument);
}

TEST(Pgd, TraceIsRecordedWhenAsked) {
  ModelSpec m = logistic();
  Dataset data = generate(m, flat(3, 0.5), 100, 4);
  OptimizerConfig cfg;
  cfg.trace = true;
  cfg.restarts = 1;
  cfg.grad_tolerance = 1e-4;
  OptResult r = pgd(m, data, cfg);
  ASSERT_EQ(static_cast<int>(r.trace.size()), r.steps_used + 1);
  EXPECT_LE(r.trace.back().grad_norm, 1e-4);
}

TEST(Sgd, ImprovesOnStart) {
  ModelSpec m = logistic();
  Dataset data = generate(m, flat(3, 0.9), 500, 5);
  OptimizerConfig cfg;
  cfg.w0 = -flat(3, 1.0);
  cfg.max_steps = 5000;
  cfg.grad_tolerance = 1e-3;
  OptResult r = sgd(m, data, cfg);
  EXPECT_LT(r.empirical_risk, empirical_risk(m, data.X, data.y, *cfg.w0));
}

TEST(Regularized, WeightFormula) {
  ModelSpec m = logistic();
  EXPECT_NEAR(regularization_weight(m, 1000, 0.05, 1.0), 0.3570607294260534, 1e-12);
  EXPECT_NEAR(regularization_weight(m, 1000, 0.05, 0.01), 0.003570607294260534, 1e-14);
}

TEST(Regularized, ReachesStationarity) {
  ModelSpec m = logistic();
  Dataset data = generate(m, flat(6, 0.9), 300, 6);
  OptimizerConfig cfg;
  OptResult r = regularized_stationary(m, data, 0.05, cfg);
  EXPECT_TRUE(r.converged);
  Vec g = empirical_grad(m, data.X, data.y, r.w_hat) + r.lambda * r.w_hat;
  EXPECT_LE(g.norm(), 1e-6);
  OptimizerConfig zero;
  zero.lambda = 0.0;
  EXPECT_THROW(regularized_stationary(m, data, 0.05, zero), std::invalid_argument);
}

TEST(Mirror, PEqualsTwoMatchesOnlinePgdBitForBit) {
  ModelSpec m = logistic();
  Dataset data = generate(m, flat(4, 0.8), 256, 7);
  OptimizerConfig cfg;
  cfg.seed = 3;
  MirrorResult a = mirror_descent(m, data, cfg, 2.0, true);
  MirrorResult b = online_pgd(m, data, cfg, true);
  ASSERT_EQ(a.iterates.size(), b.iterates.size());
  for (std::size_t k = 0; k < a.iterates.size(); ++k) EXPECT_EQ(a.iterates[k], b.iterates[k]);
  EXPECT_EQ(a.tau, b.tau);
  EXPECT_EQ(a.random_iterate.w_hat, b.random_iterate.w_hat);
}

TEST(Mirror, IteratesStayInDualBall) {
  ModelSpec m = make_glm(LinkKind::logistic, GeometryConfig::make(Exponent::finite(4.0), 1.0, 1.0, 8));
  Dataset data;
  data.X = sample_covariates(CovariateDist::sphere_uniform, 300, 8, 1.0, 1);
  data.y = Vec::Zero(300);
  for (Eigen::Index t = 0; t < 300; t += 2) data.y[t] = 1.0;
  data.w_star = Vec::Zero(8);
  OptimizerConfig cfg;
  MirrorResult r = mirror_descent(m, data, cfg, 4.0, true);
  for (const auto& w : r.iterates) EXPECT_LE(norm(w, Exponent::finite(4.0 / 3.0)), 1.0 + 1e-9);
  EXPECT_THROW(mirror_descent(m, data, cfg, 1.5), std::invalid_argument);
}

TEST(Meta, SampleSizeIsMinOfRegimes) {
  EXPECT_EQ(meta_sample_size(0.1, 5), 50);
  EXPECT_EQ(meta_sample_size(0.1, 1000), 100);
  EXPECT_EQ(meta_sample_size(0.01, 5), 500);
  EXPECT_THROW(meta_sample_size(0.0, 5), std::invalid_argument);
}

TEST(Meta, ReportsActiveBranch) {
  ModelSpec m = logistic();
  MetaResult r = meta_algorithm(m, flat(5, 0.8), 0.1, SampleRegime::high_dim, 1, {}, 20000);
  EXPECT_EQ(r.n_used, 50);
  EXPECT_EQ(r.active_branch, SampleRegime::low_dim);
  EXPECT_FALSE(r.regime_matches);
  EXPECT_LE(r.opt.grad_norm_final, 1.0 / std::sqrt(50.0));
}

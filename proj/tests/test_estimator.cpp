#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "uot/estimator.hpp"

namespace {

using namespace uot;

DiscreteMeasure delta(double x) { return DiscreteMeasure({Vec{x}}, {1.0}); }

DiscreteMeasure uniform_cloud(Rng& rng, std::size_t n, double radius) {
  std::vector<Vec> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(Vec{rng.uniform(-radius, radius)});
  return DiscreteMeasure(std::move(pts),
                         std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

PotentialClass quad_cls(double lambda = 1.0, double R = 4.0) {
  return PotentialClass(PotentialKind::quad_shift, 1, lambda, -10.0, {10.0, 4.0, 2.0}, R);
}

TEST(Fit, PointMassRecoversQuadratic) {
  const FitResult fr = fit(delta(0.0), delta(0.0), quad_cls(), Entropy(EntropyKind::kl),
                           FitConfig{.restarts = 1});
  EXPECT_NEAR(fr.z.theta()[0], 0.0, 1e-7);
  EXPECT_NEAR(fr.z.theta()[1], 0.0, 1e-7);
  EXPECT_NEAR(fr.objective, 0.0, 1e-12);
  EXPECT_LE(fr.grad_norm, 1e-8);
  EXPECT_FALSE(fr.capped);
}

TEST(Fit, ConsistentInstanceRecoversTruthAtLargeN) {
  const PotentialClass cls = quad_cls();
  const Entropy kl(EntropyKind::kl);
  const Potential z0 = cls.make({0.3, 0.1});
  Rng rng(Seed{71});
  const DiscreteMeasure mu = uniform_cloud(rng, 512, 1.0);
  const DiscreteMeasure nu = make_consistent_instance(mu, z0, kl);

  const DiscreteMeasure mu_hat = sample_atoms(mu, 10000, Seed{72});
  const DiscreteMeasure nu_hat = sample_atoms(nu, 10000, Seed{73});
  const FitResult fr = fit(mu_hat, nu_hat, cls, kl, FitConfig{.restarts = 1});

  const SemiDualProblem pop(mu, nu, kl, cls.R());
  const double d = h_circ_distance(pop, fr.z, z0, cls.lambda(),
                                   class_cprime(cls, kl, cls.R()));
  EXPECT_LE(d, 0.1);
}

TEST(Fit, BalancedShiftRecoversTheTranslation) {
  Rng rng(Seed{74});
  const DiscreteMeasure mu_hat = uniform_cloud(rng, 256, 1.0);
  const double b = 0.45;
  const DiscreteMeasure nu_hat = pushforward(mu_hat, [&](const Vec& x) { return x + Vec{b}; });
  const FitResult fr = fit(mu_hat, nu_hat, quad_cls(), Entropy(EntropyKind::balanced),
                           FitConfig{.restarts = 1});
  EXPECT_NEAR(fr.z.theta()[0], b, 1e-6);
  EXPECT_DOUBLE_EQ(fr.z.theta()[1], 0.0);  // offset pinned under balanced
}

TEST(Fit, ObjectiveTraceIsNonincreasing) {
  Rng rng(Seed{75});
  const DiscreteMeasure mu_hat = uniform_cloud(rng, 64, 1.0);
  const DiscreteMeasure nu_hat = uniform_cloud(rng, 64, 1.0);
  const FitResult fr = fit(mu_hat, nu_hat, quad_cls(), Entropy(EntropyKind::kl),
                           FitConfig{.restarts = 2, .seed = Seed{9}});
  ASSERT_GE(fr.objective_trace.size(), 2u);
  for (std::size_t k = 1; k < fr.objective_trace.size(); ++k)
    EXPECT_LE(fr.objective_trace[k], fr.objective_trace[k - 1] + 1e-15);
}

TEST(Fit, DeterministicInSeed) {
  Rng rng(Seed{76});
  const DiscreteMeasure mu_hat = uniform_cloud(rng, 64, 1.0);
  const DiscreteMeasure nu_hat = uniform_cloud(rng, 64, 1.0);
  const PotentialClass mq(PotentialKind::max_quad, 1, 1.0, -10.0, {10.0, 4.0, 2.0}, 4.0, 3);
  const FitConfig cfg{.max_iters = 300, .restarts = 3, .seed = Seed{5}};
  const FitResult a = fit(mu_hat, nu_hat, mq, Entropy(EntropyKind::kl), cfg);
  const FitResult b = fit(mu_hat, nu_hat, mq, Entropy(EntropyKind::kl), cfg);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.winner_restart, b.winner_restart);
  for (std::size_t i = 0; i < a.z.theta().size(); ++i)
    EXPECT_EQ(a.z.theta()[i], b.z.theta()[i]);
}

TEST(Fit, AllRestartsCappedThrows) {
  Rng rng(Seed{77});
  const DiscreteMeasure mu_hat = uniform_cloud(rng, 32, 1.0);
  const DiscreteMeasure nu_hat = pushforward(mu_hat, [](const Vec& x) { return x + Vec{0.8}; });
  FitConfig cfg;
  cfg.max_iters = 1;
  cfg.grad_tol = 1e-14;
  cfg.restarts = 2;
  try {
    fit(mu_hat, nu_hat, quad_cls(), Entropy(EntropyKind::kl), cfg);
    FAIL() << "expected optimization failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("optimization failed"), std::string::npos);
  }
}

TEST(UotEstimate, MatchesRecomputedSemidualValue) {
  Rng rng(Seed{78});
  const DiscreteMeasure mu_hat = uniform_cloud(rng, 64, 1.0);
  const DiscreteMeasure nu_hat = uniform_cloud(rng, 64, 1.0);
  const PotentialClass cls = quad_cls();
  const Entropy kl(EntropyKind::kl);
  const FitResult fr = fit(mu_hat, nu_hat, cls, kl, FitConfig{.restarts = 1});
  const SemiDualProblem p(mu_hat, nu_hat, kl, cls.R());
  EXPECT_NEAR(uot_estimate(fr), -semidual_value(p, fr.z), 1e-12);
}

TEST(UotEstimate, EqualSamplesGiveZeroAndGapGivesQ) {
  Rng rng(Seed{79});
  const DiscreteMeasure m = uniform_cloud(rng, 32, 1.0);
  const FitResult same = fit(m, m, quad_cls(), Entropy(EntropyKind::kl),
                             FitConfig{.restarts = 1});
  EXPECT_NEAR(uot_estimate(same), 0.0, 1e-10);

  const FitResult gap = fit(delta(0.0), delta(1.0), quad_cls(),
                            Entropy(EntropyKind::balanced), FitConfig{.restarts = 1});
  EXPECT_NEAR(uot_estimate(gap), 0.5, 1e-8);
}

TEST(Estimator, EmpiricalObjectiveIsUnbiased) {
  Rng rng(Seed{80});
  const DiscreteMeasure mu = uniform_cloud(rng, 10, 1.0);
  const DiscreteMeasure nu = uniform_cloud(rng, 9, 1.0);
  const PotentialClass cls = quad_cls();
  const Entropy kl(EntropyKind::kl);
  const Potential z = cls.make({0.25, 0.4});
  const SemiDualProblem pop(mu, nu, kl, cls.R());
  const double population_J = semidual_value(pop, z);

  const int resamples = 200;
  std::vector<double> values(resamples);
  for (int k = 0; k < resamples; ++k) {
    const DiscreteMeasure mu_hat = sample_atoms(mu, 64, Seed{1000}.replica(2 * k));
    const DiscreteMeasure nu_hat = sample_atoms(nu, 64, Seed{1000}.replica(2 * k + 1));
    const SemiDualProblem p(mu_hat, nu_hat, kl, cls.R());
    values[static_cast<std::size_t>(k)] = semidual_value(p, z);
  }
  const double mean = pairwise_sum(values) / resamples;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= resamples - 1;
  const double se = std::sqrt(var / resamples);
  EXPECT_NEAR(mean, population_J, 4.0 * se);
}

TEST(Fit, ThreeDimensionalConsistentInstance) {
  const PotentialClass cls(PotentialKind::quad_shift, 3, 1.2, -10.0, {10.0, 4.0, 2.0}, 4.0);
  const Potential z0 = cls.make({0.2, -0.3, 0.1, 0.05});
  const Entropy kl(EntropyKind::kl);
  DensitySpec spec;
  spec.kind = DensityKind::uniform_ball;
  spec.dim = 3;
  spec.radius = 1.0;
  const DiscreteMeasure mu = sample(spec, 256, Seed{82});
  const DiscreteMeasure nu = make_consistent_instance(mu, z0, kl);

  const SemiDualProblem p(mu, nu, kl, cls.R());
  const std::vector<double> g = semidual_grad(p, cls, z0.theta());
  double norm = 0.0;
  for (double v : g) norm += v * v;
  EXPECT_LE(std::sqrt(norm), 1e-8);

  const FitResult fr = fit(mu, nu, cls, kl, FitConfig{.restarts = 1});
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(fr.z.theta()[k], z0.theta()[k], 1e-6);
}

TEST(Estimator, BalancedObjectiveInvariantUnderConstantShift) {
  Rng rng(Seed{81});
  const DiscreteMeasure mu_hat = uniform_cloud(rng, 64, 1.0);
  const DiscreteMeasure nu_hat = uniform_cloud(rng, 64, 1.0);
  const PotentialClass cls = quad_cls();
  const SemiDualProblem p(mu_hat, nu_hat, Entropy(EntropyKind::balanced), cls.R());
  const double j1 = semidual_value(p, cls.make({0.3, 0.0}));
  const double j2 = semidual_value(p, cls.make({0.3, 1.7}));
  EXPECT_NEAR(j1, j2, 1e-12 * (1.0 + std::abs(j1)));
}

}  // namespace

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dag/diffusion.hpp"
#include "dag/error.hpp"

namespace dag {
namespace {

Image random_image(Shape s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Image out(s);
  for (double& v : out.values()) v = n(rng);
  return out;
}

MixtureModel delta(const Image& mu) { return MixtureModel{{mu}, {1.0}, 0.0}; }

TEST(Schedule, ZeroBetaMeansNoNoise) {
  const Schedule s = make_schedule(50, 0.0, 0.0);
  for (double a : s.alpha_bar) EXPECT_EQ(a, 1.0);
}

TEST(Schedule, DefaultGridMatchesDirectProduct) {
  const Schedule s = make_schedule(50, 1e-4, 0.02);
  ASSERT_EQ(s.steps(), 50);
  // Independent product over the 1000-step grid.
  std::vector<double> full;
  double prod = 1.0;
  for (int i = 0; i < 1000; ++i) {
    prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 999.0);
    full.push_back(prod);
  }
  for (int k = 0; k < 50; ++k) {
    EXPECT_NEAR(s.alpha_bar[k], full[s.grid_index[k]], 1e-15);
    if (k > 0) EXPECT_LT(s.alpha_bar[k], s.alpha_bar[k - 1]);
  }
  EXPECT_EQ(s.grid_index.front(), 0);
  EXPECT_EQ(s.alpha_bar.front(), full[0]);
  EXPECT_LT(s.alpha_bar.back(), 0.05);
  EXPECT_GT(s.alpha_bar.back(), 0.0);
  EXPECT_LT(s.alpha_bar.front(), 1.0);
}

TEST(Schedule, Defaults) {
  const Schedule s = make_schedule();
  EXPECT_EQ(s.steps(), 50);
  EXPECT_EQ(s.weights.dca, 60.0);
  EXPECT_EQ(s.weights.dga, 25.0);
  EXPECT_EQ(s.weights.dma, 90.0);
  EXPECT_EQ(s.guided_iterations(), 35);
  EXPECT_TRUE(s.in_guidance_window(34));
  EXPECT_FALSE(s.in_guidance_window(35));
  EXPECT_EQ(s.alpha(0), 1.0);
  EXPECT_EQ(s.timestep(0), 50);
}

TEST(Schedule, InvalidRanges) {
  EXPECT_THROW(make_schedule(1), ConfigError);
  EXPECT_THROW(make_schedule(50, 0.02, 0.01), ConfigError);
  EXPECT_THROW(make_schedule(50, -1e-4, 0.02), ConfigError);
  EXPECT_THROW(make_schedule(50, 1e-4, 1.0), ConfigError);
  EXPECT_THROW(make_schedule().alpha(51), ContractError);
}

TEST(ExactEpsilon, DeltaClosedForm) {
  const Image mu = random_image({4, 4, 3}, 1);
  const Image x = random_image({4, 4, 3}, 2);
  const double a = 0.37;
  const Image eps = exact_epsilon(x, a, delta(mu));
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_NEAR(eps[i], (x[i] - std::sqrt(a) * mu[i]) / std::sqrt(1 - a), 1e-12);
}

TEST(ExactEpsilon, SymmetricPairAtOriginIsZero) {
  const Image mu = random_image({4, 4, 3}, 3);
  const MixtureModel mix{{mu, scaled(mu, -1.0)}, {0.5, 0.5}, 0.05};
  const Image eps = exact_epsilon(Image(mu.shape(), 0.0), 0.5, mix);
  EXPECT_LE(max_abs(eps), 1e-15);
}

TEST(ExactEpsilon, MatchesFiniteDifferenceOfLogDensity) {
  const Shape s{8, 8, 1};
  MixtureModel mix{{random_image(s, 10, 0.5), random_image(s, 11, 0.5), random_image(s, 12, 0.5)},
                   {0.2, 0.5, 0.3},
                   0.3};
  const double a = 0.6;
  // Point between the modes so responsibilities are mixed.
  Image x = axpy(scaled(mix.modes[0], 0.5 * std::sqrt(a)), 0.5 * std::sqrt(a), mix.modes[1]);
  x = axpy(x, 0.3, random_image(s, 13));
  const Image eps = exact_epsilon(x, a, mix);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Image xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double score = (noised_log_density(xp, a, mix) - noised_log_density(xm, a, mix)) / (2 * h);
    const double expected = -std::sqrt(1 - a) * score;
    worst = std::max(worst, std::abs(eps[i] - expected) / std::max(std::abs(expected), 1e-8));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(ExactEpsilon, FiniteForLargeInputs) {
  const Shape s{4, 4, 3};
  const MixtureModel mix{{random_image(s, 1), random_image(s, 2)}, {0.5, 0.5}, 0.05};
  const Image x = scaled(random_image(s, 3), 1e3 / std::sqrt(48.0));
  for (double v : exact_epsilon(x, 0.9, mix).values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(ExactEpsilon, Errors) {
  EXPECT_THROW(exact_epsilon(Image(Shape{2, 2, 1}), 0.5, MixtureModel{}), ContractError);
  const MixtureModel mix = delta(Image(Shape{2, 2, 1}, 0.3));
  EXPECT_THROW(exact_epsilon(Image(Shape{3, 2, 1}), 0.5, mix), ContractError);
}

TEST(PredictX0, NoiseFreeLimit) {
  const Image x = random_image({3, 3, 3}, 4);
  EXPECT_EQ(predict_x0(x, random_image({3, 3, 3}, 5), 1.0), x);
}

TEST(PredictX0, AlgebraicInverse) {
  const Image x0 = random_image({3, 3, 3}, 6), x = random_image({3, 3, 3}, 7);
  const double a = 0.42;
  Image eps(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) eps[i] = (x[i] - std::sqrt(a) * x0[i]) / std::sqrt(1 - a);
  EXPECT_LE(max_abs_diff(predict_x0(x, eps, a), x0), 1e-12);
}

TEST(PredictX0, DeltaMixtureRecoversMode) {
  const Image mu = random_image({4, 4, 3}, 8);
  const Schedule s = make_schedule();
  for (int t : {1, 10, 25, 50}) {
    const Image x = random_image(mu.shape(), 100 + t);
    EXPECT_LE(max_abs_diff(predict_x0(x, exact_epsilon(x, t, delta(mu), s), t, s), mu), 1e-9) << t;
  }
}

TEST(PredictX0, ZeroAlphaThrows) {
  const Image x(Shape{2, 2, 1});
  EXPECT_THROW(predict_x0(x, x, 0.0), ContractError);
}

TEST(Ddim, OnManifoldPointStays) {
  const Image mu = random_image({4, 4, 3}, 9);
  const Schedule s = make_schedule();
  const int t = 20;
  const Image x = scaled(mu, std::sqrt(s.alpha(t)));
  const Image eps = exact_epsilon(x, t, delta(mu), s);
  EXPECT_LE(max_abs(eps), 1e-12);
  EXPECT_LE(max_abs_diff(ddim_step(x, eps, t, s), scaled(mu, std::sqrt(s.alpha(t - 1)))), 1e-12);
}

TEST(Ddim, ZeroNoiseRescales) {
  const Schedule s = make_schedule();
  const Image x = random_image({3, 3, 3}, 10);
  const int t = 30;
  const Image next = ddim_step(x, Image(x.shape(), 0.0), t, s);
  EXPECT_LE(max_abs_diff(next, scaled(x, std::sqrt(s.alpha(t - 1) / s.alpha(t)))), 1e-12);
}

TEST(Ddim, EqualLevelsIsIdentity) {
  const Image x = random_image({3, 3, 3}, 11), eps = random_image({3, 3, 3}, 12);
  EXPECT_LE(max_abs_diff(ddim_update(x, eps, 0.3, 0.3), x), 1e-12);
}

TEST(Ddim, TimestepRange) {
  const Schedule s = make_schedule();
  const Image x(Shape{2, 2, 1});
  EXPECT_THROW(ddim_step(x, x, 0, s), ContractError);
  EXPECT_THROW(ddim_step(x, x, 51, s), ContractError);
}

TEST(Ddim, FullRunReachesDeltaMode) {
  const Image mu = random_image({8, 8, 3}, 13, 0.5);
  const Schedule s = make_schedule();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    Image x = initial_noise(mu.shape(), seed);
    for (int i = 0; i < s.steps(); ++i) {
      const int t = s.timestep(i);
      x = ddim_step(x, exact_epsilon(x, t, delta(mu), s), t, s);
    }
    EXPECT_LE(max_abs_diff(x, mu), 1e-6);
  }
}

TEST(Guidance, ZeroGradientLeavesEpsilon) {
  const Schedule s = make_schedule();
  const Image eps = random_image({3, 3, 3}, 14);
  EXPECT_EQ(apply_guidance(eps, Image(eps.shape(), 0.0), 0, s), eps);
}

TEST(Guidance, OutsideWindowIsBitwiseIdentity) {
  const Schedule s = make_schedule();
  const Image eps = random_image({3, 3, 3}, 15), grad = random_image({3, 3, 3}, 16, 100.0);
  for (int i = s.guided_iterations(); i < s.steps(); ++i) EXPECT_EQ(apply_guidance(eps, grad, i, s), eps);
  for (int i = 0; i < s.guided_iterations(); ++i) {
    const Image out = apply_guidance(eps, grad, i, s);
    for (std::size_t k = 0; k < eps.size(); ++k) EXPECT_EQ(out[k], eps[k] + grad[k]);
  }
}

TEST(Guidance, ShapeMismatchThrows) {
  EXPECT_THROW(apply_guidance(Image(Shape{2, 2, 1}), Image(Shape{2, 2, 3}), 0, make_schedule()), ContractError);
}

TEST(InitialNoise, SeededStandardNormal) {
  const Image a = initial_noise({32, 32, 3}, 5);
  EXPECT_EQ(a, initial_noise({32, 32, 3}, 5));
  EXPECT_NE(a, initial_noise({32, 32, 3}, 6));
  double m = 0, v = 0;
  for (double x : a.values()) m += x;
  m /= a.size();
  for (double x : a.values()) v += (x - m) * (x - m);
  v /= a.size();
  EXPECT_NEAR(m, 0.0, 0.1);
  EXPECT_NEAR(v, 1.0, 0.1);
}

}  // namespace
}  // namespace dag

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mfmc/model.hpp"
#include "test_models.hpp"

namespace mfmc {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(KuramotoDrift, TwoParticlesQuarterTurnApart) {
  const std::vector<double> x{0.0, kPi / 2};
  EXPECT_DOUBLE_EQ(kuramoto_drift(0.0, 0, x, 0.0), -0.5);
  EXPECT_DOUBLE_EQ(kuramoto_drift(0.0, 1, x, 0.0), 0.5);
}

TEST(KuramotoDrift, EqualStatesGiveTheParameter) {
  for (double c : {-1.3, 0.0, 0.7, 12.0}) {
    const std::vector<double> x(3, c);
    for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(kuramoto_drift(0.0, p, x, 0.125), 0.125);
  }
}

TEST(KuramotoDrift, RejectsEmptyStatesAndBadIndex) {
  EXPECT_THROW(kuramoto_drift(0.0, 0, {}, 0.0), invalid_input);
  const std::vector<double> x{0.0, 1.0};
  EXPECT_THROW(kuramoto_drift(0.0, 2, x, 0.0), invalid_input);
}

TEST(KuramotoDrift, PermutationInvariant) {
  test::Gen gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(gen.integer(1, 40));
    const auto x = gen.reals(n, -4.0, 4.0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen.engine());
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[perm[i]];
    const double theta = gen.uniform(-0.2, 0.2);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(kuramoto_drift(0.0, i, y, theta), kuramoto_drift(0.0, perm[i], x, theta), 1e-12);
    }
  }
}

TEST(KuramotoModel, BatchDriftMatchesPerParticleBitForBit) {
  test::Gen gen(12);
  const KuramotoModel model;
  for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 13u, 40u}) {
    const auto x = gen.reals(n, -3.0, 3.0);
    const auto th = gen.reals(n, -0.2, 0.2);
    std::vector<double> batch(n), single(1);
    model.drift_all(0.0, StateView(x, 1), th, batch);
    for (std::size_t p = 0; p < n; ++p) {
      model.drift(0.0, p, StateView(x, 1), std::span<const double>(th).subspan(p, 1), single);
      EXPECT_EQ(batch[p], single[0]) << "n=" << n << " p=" << p;
    }
  }
}

TEST(KuramotoModel, DecouplesWhenAllStatesAndParametersAgree) {
  const KuramotoModel model;
  const std::vector<double> x(9, 0.3), th(9, -0.1);
  std::vector<double> out(9);
  model.drift_all(0.0, StateView(x, 1), th, out);
  for (double v : out) EXPECT_EQ(v, -0.1);
}

TEST(KuramotoModel, LawsFollowTheSpec) {
  const KuramotoModel model;
  EXPECT_EQ(model.initial_law().family, Distribution::Family::normal);
  EXPECT_DOUBLE_EQ(model.initial_law().variance(), 0.2);
  EXPECT_DOUBLE_EQ(model.parameter_law().mean(), 0.0);
  EXPECT_DOUBLE_EQ(model.parameter_law().variance(), 0.4 * 0.4 / 12.0);
  EXPECT_TRUE(model.has_constant_diffusion());
  EXPECT_THROW(KuramotoModel(KuramotoSpec{-1.0}), invalid_input);
}

TEST(Distribution, DrawsMatchMoments) {
  CounterStream s(make_sample_key(5, MethodTag::test, 0, 0, 0), 0, Purpose::x0);
  const Distribution normal = Distribution::normal(1.0, 0.2);
  const Distribution uniform = Distribution::uniform(-0.2, 0.2);
  constexpr int n = 100000;
  double sn = 0, sqn = 0, su = 0, squ = 0;
  for (int i = 0; i < n; ++i) {
    const double a = normal.draw(s), b = uniform.draw(s);
    sn += a;
    sqn += a * a;
    su += b;
    squ += b * b;
    ASSERT_GT(b, -0.2);
    ASSERT_LT(b, 0.2);
  }
  EXPECT_NEAR(sn / n, 1.0, 4 * std::sqrt(0.2 / n));
  EXPECT_NEAR(sqn / n - (sn / n) * (sn / n), 0.2, 4 * 0.2 * std::sqrt(2.0 / n));
  EXPECT_NEAR(su / n, 0.0, 4 * std::sqrt(uniform.variance() / n));
  EXPECT_EQ(Distribution::constant(2.5).draw(s), 2.5);
  EXPECT_THROW(Distribution::none().draw(s), invalid_input);
  EXPECT_THROW(Distribution::uniform(1.0, 0.0), invalid_input);
  EXPECT_THROW(Distribution::normal(0.0, -1.0), invalid_input);
}

TEST(DrawInputs, SameKeySameBundle) {
  const KuramotoModel model;
  const SampleKey key = make_sample_key(77, MethodTag::test, 1, 2, 3);
  const auto a = draw_inputs(key, model, 4, 8, 1.0);
  const auto b = draw_inputs(key, model, 4, 8, 1.0);
  for (std::size_t q = 0; q < 4; ++q) {
    EXPECT_EQ(a[q].x0, b[q].x0);
    EXPECT_EQ(a[q].theta, b[q].theta);
    EXPECT_EQ(a[q].increments, b[q].increments);
  }
}

TEST(DrawInputs, ParticlesDifferAndDoNotDependOnP) {
  const KuramotoModel model;
  const SampleKey key = make_sample_key(77, MethodTag::test, 0, 0, 0);
  const auto small = draw_inputs(key, model, 2, 16, 1.0);
  const auto large = draw_inputs(key, model, 9, 16, 1.0);
  EXPECT_NE(small[0].increments, small[1].increments);
  for (std::size_t q = 0; q < 2; ++q) {
    EXPECT_EQ(small[q].x0, large[q].x0);
    EXPECT_EQ(small[q].theta, large[q].theta);
    EXPECT_EQ(small[q].increments, large[q].increments);
  }
  EXPECT_EQ(large[8].increments.size(), 16u);
  EXPECT_EQ(large[8].n_fine, 16u);
}

TEST(DrawInputs, IncrementVarianceIsTOverN) {
  const KuramotoModel model;
  constexpr std::size_t P = 25000;
  const auto in = draw_inputs(make_sample_key(8, MethodTag::test, 0, 0, 0), model, P, 4, 1.0);
  double sum = 0, sq = 0;
  for (const auto& r : in) {
    for (double v : r.increments) {
      sum += v;
      sq += v * v;
      EXPECT_EQ(v, snap_to_increment_grid(v));
    }
  }
  const double n = 4.0 * P;
  const double mean = sum / n, var = (sq - n * mean * mean) / (n - 1);
  // standard error of a normal sample variance: sigma^2 sqrt(2 / (n - 1))
  EXPECT_NEAR(var, 0.25, 3 * 0.25 * std::sqrt(2.0 / (n - 1)));
}

TEST(DrawInputs, RejectsBadSizes) {
  const KuramotoModel model;
  const SampleKey key{};
  EXPECT_THROW(draw_inputs(key, model, 0, 4, 1.0), invalid_input);
  EXPECT_THROW(draw_inputs(key, model, 4, 0, 1.0), invalid_input);
  EXPECT_THROW(draw_inputs(key, model, 4, 4, 0.0), invalid_input);
}

TEST(TotalSynchronization, Examples) {
  EXPECT_EQ(total_synchronization(1.0, 0.0), 1.0);
  EXPECT_EQ(total_synchronization(0.0, 0.0), 0.0);
  EXPECT_NEAR(total_synchronization(0.6, 0.8), 1.0, 1e-15);
}

TEST(QoISpec, SynchronizationSplitsTheToleranceOverSensitivities) {
  const QoISpec q = kuramoto_synchronization_qoi();
  EXPECT_EQ(q.size(), 2u);
  EXPECT_DOUBLE_EQ(q.component_tolerance(0.1), 0.025);
  const std::vector<double> e{0.6, 0.8};
  EXPECT_NEAR(q.combine(e), 1.0, 1e-15);
  QoISpec plain;
  plain.observables = {named_observable("identity")};
  EXPECT_EQ(plain.component_tolerance(0.1), 0.1);
  EXPECT_THROW(named_observable("tan"), invalid_input);
}

}  // namespace
}  // namespace mfmc

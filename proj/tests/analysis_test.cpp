#include <gtest/gtest.h>

#include <cmath>

#include "mfmc/analysis.hpp"
#include "test_models.hpp"

namespace mfmc {
namespace {

using Points = std::vector<std::pair<int, double>>;

TEST(FitLog2Rate, ExactPowerLaw) {
  Points pts;
  for (int l = 0; l <= 5; ++l) pts.emplace_back(l, 3.0 * std::pow(2.0, -2.0 * l));
  const RateFit f = fit_log2_rate(pts);
  EXPECT_NEAR(f.slope, -2.0, 1e-12);
  EXPECT_NEAR(f.intercept, std::log2(3.0), 1e-12);
  EXPECT_EQ(f.points_used, 5);
  EXPECT_NEAR(f.residual_rms, 0.0, 1e-12);
}

TEST(FitLog2Rate, SignIsIgnoredAndZerosAreCounted) {
  const Points pts{{1, -0.5}, {2, 0.0}, {3, 0.125}, {4, -0.0625}};
  const RateFit f = fit_log2_rate(pts);
  EXPECT_EQ(f.zero_points, 1);
  EXPECT_EQ(f.points_used, 3);
  EXPECT_NEAR(f.slope, -1.0, 1e-12);
}

TEST(FitLog2Rate, NeedsThreePoints) {
  EXPECT_THROW(fit_log2_rate({{0, 1.0}, {1, 0.5}}), invalid_input);
  EXPECT_THROW(fit_log2_rate({{0, 1.0}, {1, 0.0}, {2, 0.0}, {3, 0.5}}), invalid_input);
}

TEST(FitLog2Rate, SmallPerturbationsKeepTheSlope) {
  // Every combination of log2 perturbations in {-0.05, 0, 0.05} on six levels.
  const double eta[3] = {-0.05, 0.0, 0.05};
  int combos = 0;
  for (int code = 0; code < 729; ++code) {
    Points pts;
    int c = code;
    for (int l = 0; l < 6; ++l, c /= 3) pts.emplace_back(l, std::pow(2.0, -l + eta[c % 3]));
    EXPECT_NEAR(fit_log2_rate(pts).slope, -1.0, 0.15);
    ++combos;
  }
  EXPECT_EQ(combos, 729);
}

TEST(MlmcComplexity, Cases) {
  // s > gamma: canonical rate
  EXPECT_EQ(mlmc_complexity(1, 0, 0, 2, 1, 1), (ComplexityLaw{2, 0}));
  // s == gamma: squared log
  EXPECT_EQ(mlmc_complexity(1, 0, 0, 2, 2, 1), (ComplexityLaw{2, 2}));
  // s < gamma: extra (gamma - s) / w
  EXPECT_EQ(mlmc_complexity(1, 0, 0, 1, 2, 1), (ComplexityLaw{3, 0}));
  // fixed parameter adds (g - c) / w_tilde
  EXPECT_EQ(mlmc_complexity(1, 1, 2, 2, 1, 1), (ComplexityLaw{3, 0}));
  EXPECT_THROW(mlmc_complexity(0, 0, 0, 1, 1, 1), invalid_input);
  EXPECT_THROW(mlmc_complexity(1, 0, 0, 3, 1, 1), invalid_input);
}

TEST(MlmcComplexity, JointHierarchyWithLogFactors) {
  EXPECT_EQ(mlmc_joint_complexity(1, 1, 1), (ComplexityLaw{2, 2}));
  EXPECT_EQ(mlmc_joint_complexity(1, 1, 2), (ComplexityLaw{3, 0}));
  EXPECT_EQ(mlmc_joint_complexity(1, 2, 1), (ComplexityLaw{2, 2}));
}

TEST(MimcComplexity, Cases) {
  EXPECT_EQ(mimc_complexity(1, 1, 1), (ComplexityLaw{2, 2}));
  EXPECT_EQ(mimc_complexity(1, 1, 2), (ComplexityLaw{2, 4}));
  EXPECT_EQ(mimc_complexity(1, 2, 1), (ComplexityLaw{2, 0}));
  EXPECT_EQ(mimc_complexity(1, 2, 2), (ComplexityLaw{2, 2}));
  EXPECT_EQ(mimc_complexity(0, 2, 2), (ComplexityLaw{3, 1}));
  EXPECT_THROW(mimc_complexity(1, 0, 2), invalid_input);
}

TEST(ComplexityMatrix, MatchesTheReferenceValues) {
  const std::array<std::array<ComplexityLaw, 4>, 5> expected{{
      {{{3, 0}, {4, 0}, {3, 0}, {4, 0}}},
      {{{2, 2}, {3, 2}, {2, 0}, {3, 0}}},
      {{{3, 0}, {3, 2}, {3, 0}, {3, 2}}},
      {{{2, 2}, {3, 0}, {2, 2}, {3, 0}}},
      {{{2, 2}, {2, 4}, {2, 0}, {2, 2}}},
  }};
  const auto t = table1();
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(t[r][c], expected[r][c]) << to_string(kMethodRows[r]) << " column " << c;
    }
  }
  EXPECT_EQ(to_string(ComplexityLaw{2.5, 0}), "(2.5,0)");
}

TEST(IndexSet, Examples) {
  EXPECT_EQ(build_index_set(0, 1, 2, 2).members, (std::vector<std::array<int, 2>>{{0, 0}}));
  EXPECT_EQ(build_index_set(3, 1, 2, 2).members,
            (std::vector<std::array<int, 2>>{{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 0}, {1, 1}}));
  EXPECT_EQ(build_index_set(2, 1, 1, 1).members,
            (std::vector<std::array<int, 2>>{{0, 0}, {0, 1}, {1, 0}, {2, 0}}));
}

TEST(IndexSet, ClosedAndCountedByBruteForce) {
  test::Gen gen(4);
  for (int L = 0; L <= 20; ++L) {
    for (int trial = 0; trial < 5; ++trial) {
      const double w1 = gen.uniform(0.3, 3.0), w2 = gen.uniform(0.3, 3.0);
      const MultiIndexSet set = build_index_set_weighted(L, w1, w2);
      EXPECT_TRUE(set.is_downward_closed());
      std::size_t count = 0;
      for (int a = 0; a <= 200; ++a) {
        for (int b = 0; b <= 200; ++b) count += (w1 * a + w2 * b <= L + 1e-12 * std::max(1, L)) ? 1 : 0;
      }
      EXPECT_EQ(set.members.size(), count) << "L=" << L << " w=" << w1 << "," << w2;
    }
  }
}

TEST(IndexSet, NonPositiveWeightsAreDegenerate) {
  EXPECT_THROW(build_index_set(3, 1, 3, 2), degenerate_profile);
  EXPECT_THROW(build_index_set_weighted(3, 0.0, 1.0), degenerate_profile);
  EXPECT_THROW(build_index_set(3, 4, 2, 2), degenerate_profile);
}

}  // namespace
}  // namespace mfmc

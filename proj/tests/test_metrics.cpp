#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "layerinfo/error.hpp"
#include "layerinfo/eval/metrics.hpp"

using namespace layerinfo;
using namespace layerinfo::eval;

namespace {

ScoredSet make(std::vector<double> v, std::vector<int> l) { return ScoredSet::from(v, l, "m"); }

double pairwise_auroc(const std::vector<double>& v, const std::vector<int>& l) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (l[i] != 1 || l[j] != 0) continue;
      pairs += 1;
      wins += v[i] > v[j] ? 1.0 : v[i] == v[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Auroc, WorkedExample) { EXPECT_DOUBLE_EQ(auroc(make({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1})), 0.75); }

TEST(Auroc, PerfectInvertedAndTied) {
  EXPECT_EQ(auroc(make({1, 2, 3, 4}, {0, 0, 1, 1})), 1.0);
  EXPECT_EQ(auroc(make({4, 3, 2, 1}, {0, 0, 1, 1})), 0.0);
  EXPECT_EQ(auroc(make({7, 7, 7, 7, 7}, {0, 1, 1, 0, 1})), 0.5);
}

TEST(Auroc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> v(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = static_cast<double>(rng() % 15) / 3.0;  // plenty of ties
      l[i] = static_cast<int>(rng() % 2);
    }
    l[0] = 0;
    l[1] = 1;
    const double a = auroc(make(v, l));
    EXPECT_NEAR(a, pairwise_auroc(v, l), 1e-12);
    // Flipping labels complements the statistic.
    std::vector<int> flipped(n);
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - l[i];
    EXPECT_NEAR(auroc(make(v, flipped)), 1.0 - a, 1e-12);
    // Strictly increasing transforms change nothing.
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(v[i]) * 3 - 1;
    EXPECT_NEAR(auroc(make(t, l)), a, 1e-12);
  }
}

TEST(Auroc, Errors) {
  EXPECT_THROW(auroc(make({1, 2}, {1, 1})), InsufficientData);
  EXPECT_THROW(auroc(make({1, NAN}, {0, 1})), InvalidArgument);
  EXPECT_THROW(make({1, 2}, {0}), InvalidArgument);
}

TEST(Rejection, ZeroFractionEqualsAuroc) {
  const auto s = make({0.1, 0.4, 0.35, 0.8, 0.2}, {0, 0, 1, 1, 1});
  const auto r = rejection_auroc(s, 0.0);
  ASSERT_TRUE(r.auroc);
  EXPECT_EQ(*r.auroc, auroc(s));
  EXPECT_EQ(r.kept, 5u);
}

TEST(Rejection, DroppingNoisyLowDecileHelps) {
  // Clean separation above, random labels among the lowest 10%.
  std::mt19937_64 rng(7);
  std::vector<double> v;
  std::vector<int> l;
  for (int i = 0; i < 90; ++i) {
    l.push_back(i % 2);
    v.push_back(10.0 + (i % 2 ? 5.0 : 0.0) + static_cast<double>(i) * 1e-3);
  }
  for (int i = 0; i < 10; ++i) {
    l.push_back(static_cast<int>(rng() % 2) | (i == 0));
    v.push_back(static_cast<double>(i) * 0.1);
  }
  const auto s = make(v, l);
  const auto r = rejection_auroc(s, 0.1);
  ASSERT_TRUE(r.auroc);
  EXPECT_EQ(r.kept, 90u);
  EXPECT_EQ(*r.auroc, 1.0);
  EXPECT_GE(*r.auroc, auroc(s));
}

TEST(Rejection, UndefinedWhenOneClassRemains) {
  const auto r = rejection_auroc(make({0, 1, 2, 3}, {1, 0, 0, 0}), 0.25);
  EXPECT_FALSE(r.auroc);
  EXPECT_FALSE(r.reason.empty());
  EXPECT_THROW(rejection_auroc(make({0, 1}, {0, 1}), 1.0), InvalidArgument);
  EXPECT_THROW(rejection_auroc(make({0, 1}, {0, 1}), -0.1), InvalidArgument);
}

TEST(Delta, GroupMeans) {
  auto g = delta_groups(make({0.322, 0.321}, {1, 0}));
  EXPECT_NEAR(g.delta, 0.001, 1e-12);
  g = delta_groups(make({2.5, 0.5, 1.0, 0.0}, {1, 1, 0, 0}));
  EXPECT_DOUBLE_EQ(g.mean_ans, 1.5);
  EXPECT_DOUBLE_EQ(g.mean_unans, 0.5);
  EXPECT_DOUBLE_EQ(g.delta, 1.0);
  EXPECT_DOUBLE_EQ(delta_groups(make({3, 1}, {1, 0})).delta, 2.0);
}

TEST(Calibrator, SeparatedDataIsConfident) {
  std::vector<double> v;
  std::vector<int> l;
  for (int i = 0; i < 50; ++i) {
    v.push_back(1.0 + i * 0.01);
    l.push_back(1);
    v.push_back(-1.0 - i * 0.01);
    l.push_back(0);
  }
  const auto c = fit_calibrator(make(v, l));
  EXPECT_GT(c.weight, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double p = c.probability(v[i]);
    if (l[i]) EXPECT_GE(p, 0.99);
    else EXPECT_LE(p, 0.01);
  }
  EXPECT_EQ(c.trained_on, 100u);
}

TEST(Calibrator, NoiseGivesFlatFit) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v;
  std::vector<int> l;
  for (int i = 0; i < 4000; ++i) {
    v.push_back(n(rng));
    l.push_back(i % 2);
  }
  const auto c = fit_calibrator(make(v, l));
  EXPECT_NEAR(c.weight, 0.0, 0.1);
  EXPECT_NEAR(c.bias, 0.0, 0.05);
}

TEST(Calibrator, SymmetricDataHasZeroBias) {
  const auto c = fit_calibrator(make({-2, -1, 1, 2, -1.5, 1.5}, {0, 1, 0, 1, 0, 1}));
  EXPECT_NEAR(c.bias, 0.0, 1e-9);
}

TEST(Calibrator, NeedsBothClasses) { EXPECT_THROW(fit_calibrator(make({1, 2}, {0, 0})), InsufficientData); }

TEST(Ece, KnownValues) {
  // Bin [0.2,0.3): conf 0.2, acc 0; bin [0.8,0.9): conf 0.8, acc 1.
  const std::vector<ProbLabel> two = {{0.2, false}, {0.2, false}, {0.8, true}, {0.8, true}};
  EXPECT_NEAR(ece(two), 0.2, 1e-12);
  const std::vector<ProbLabel> perfect = {{0.0, false}, {1.0, true}, {1.0, true}};
  EXPECT_NEAR(ece(perfect), 0.0, 1e-12);
  const std::vector<ProbLabel> one = {{0.7, false}, {0.7, false}};
  EXPECT_NEAR(ece(one), 0.7, 1e-12);
  EXPECT_THROW(ece(std::vector<ProbLabel>{}), InsufficientData);
  EXPECT_THROW(ece(two, 0), InvalidArgument);
}

TEST(Overhead, RatioOfTokens) {
  // Method processes C + Q + Q tokens, the reference C + Q with C = Q.
  const OverheadCounter method{"li", 2, 300};
  const OverheadCounter reference{"ref", 1, 225};
  EXPECT_NEAR(overhead_ratio(method, reference), 4.0 / 3.0, 1e-12);
  OverheadCounter sum{"x", 0, 0};
  sum += method;
  sum += method;
  EXPECT_EQ(sum.forward_passes, 4u);
  EXPECT_EQ(sum.tokens_processed, 600u);
  EXPECT_THROW(overhead_ratio(method, OverheadCounter{"z", 0, 0}), InvalidArgument);
}

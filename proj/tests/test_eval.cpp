#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mhui/eval.hpp"
#include "oracles.hpp"

using namespace mhui;

namespace {

std::vector<ScoredSample> make(std::vector<double> adv, std::vector<double> clean) {
  std::vector<ScoredSample> s;
  for (double v : adv) s.push_back({v, SampleLabel::adversarial});
  for (double v : clean) s.push_back({v, SampleLabel::clean});
  return s;
}

std::vector<ScoredSample> random_set(std::mt19937_64& gen, std::size_t n) {
  std::uniform_int_distribution<int> level(0, 7);  // coarse dyadic levels inject exact ties
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoredSample> s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool adv = i == 0 || (i != 1 && u(gen) < 0.5);
    const double score = u(gen) < 0.5 ? level(gen) / 8.0 : u(gen);
    s.push_back({score + (adv ? 0.125 : 0.0), adv ? SampleLabel::adversarial : SampleLabel::clean});
  }
  return s;
}

}  // namespace

TEST(Auroc, PerfectSeparation) { EXPECT_DOUBLE_EQ(auroc(make({0.9, 0.8}, {0.1, 0.2})), 1.0); }

TEST(Auroc, AllTies) { EXPECT_DOUBLE_EQ(auroc(make({0.4, 0.4, 0.4}, {0.4, 0.4})), 0.5); }

TEST(Auroc, HandCountedPairs) { EXPECT_DOUBLE_EQ(auroc(make({0.8, 0.3}, {0.5, 0.2})), 0.75); }

TEST(Auroc, SingleClassThrows) {
  EXPECT_THROW(auroc(make({0.1, 0.2}, {})), Error);
  EXPECT_THROW(auroc(make({}, {0.1})), Error);
  EXPECT_THROW(auroc(make({NAN}, {0.1})), Error);
}

TEST(Auroc, MatchesBruteForceWithTies) {
  std::mt19937_64 gen(21);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_set(gen, 2 + gen() % 199);
    EXPECT_NEAR(auroc(s), oracle::brute_force_auroc(s), 1e-12);
  }
}

TEST(Auroc, LabelSwapComplements) {
  std::mt19937_64 gen(22);
  for (int t = 0; t < 50; ++t) {
    auto s = random_set(gen, 50);
    const double a = auroc(s);
    for (auto& x : s)
      x.label = x.label == SampleLabel::clean ? SampleLabel::adversarial : SampleLabel::clean;
    EXPECT_NEAR(auroc(s), 1.0 - a, 1e-12);
  }
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 gen(23);
  for (int t = 0; t < 50; ++t) {
    auto s = random_set(gen, 80);
    const double a = auroc(s);
    for (auto& x : s) x.score = std::exp(3.0 * x.score) - 7.0;
    EXPECT_NEAR(auroc(s), a, 1e-12);
  }
}

TEST(CalibrateThreshold, SeparatedGroups) {
  const auto s = make({0.9, 0.8, 0.95}, {0.1, 0.2, 0.3});
  const auto t = calibrate_threshold(s);
  EXPECT_DOUBLE_EQ(t.youden_j, 1.0);
  EXPECT_GT(t.value, 0.3);
  EXPECT_LT(t.value, 0.8);
}

TEST(CalibrateThreshold, IdenticalDistributions) {
  EXPECT_DOUBLE_EQ(calibrate_threshold(make({0.2, 0.5, 0.7}, {0.2, 0.5, 0.7})).youden_j, 0.0);
  EXPECT_DOUBLE_EQ(calibrate_threshold(make({0.4, 0.4}, {0.4})).youden_j, 0.0);
}

TEST(CalibrateThreshold, BestJAgreesWithEnumeration) {
  // candidates 0.35, 0.65, 0.75 give J = 0.5, 0, 0.5; the tie goes to 0.35
  const auto s = make({0.8, 0.6}, {0.7, 0.1});
  const auto t = calibrate_threshold(s);
  EXPECT_DOUBLE_EQ(t.youden_j, 0.5);
  EXPECT_DOUBLE_EQ(oracle::youden_at(s, 0.35), 0.5);
  EXPECT_DOUBLE_EQ(oracle::youden_at(s, 0.65), 0.0);
  EXPECT_DOUBLE_EQ(oracle::youden_at(s, 0.75), 0.5);
  EXPECT_DOUBLE_EQ(t.value, 0.35);
}

TEST(CalibrateThreshold, MaximizesJOverAllMidpoints) {
  std::mt19937_64 gen(24);
  for (int t = 0; t < 100; ++t) {
    const auto s = random_set(gen, 4 + gen() % 60);
    const auto best = calibrate_threshold(s);
    EXPECT_NEAR(oracle::youden_at(s, best.value), best.youden_j, 1e-12);
    std::vector<double> v;
    for (const auto& x : s) v.push_back(x.score);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      const double mid = 0.5 * (v[i] + v[i + 1]);
      const double j = oracle::youden_at(s, mid);
      EXPECT_LE(j, best.youden_j + 1e-12);
      if (v[i + 1] <= best.value) {  // gap lies wholly below the chosen one
        EXPECT_LT(j, best.youden_j - 1e-12) << "tie not broken toward the smaller threshold";
      }
    }
  }
}

TEST(CalibrateThreshold, AdjacentDoublesStillSeparate) {
  const double lo = 0.3, hi = std::nextafter(0.3, 1.0);
  const auto t = calibrate_threshold(make({hi}, {lo}));
  EXPECT_DOUBLE_EQ(t.youden_j, 1.0);
  EXPECT_TRUE(detect(hi, t.value));
  EXPECT_FALSE(detect(lo, t.value));
}

TEST(CalibrateThreshold, SingleClassThrows) { EXPECT_THROW(calibrate_threshold(make({0.1}, {})), Error); }

TEST(Detect, StrictInequality) {
  EXPECT_FALSE(detect(0.4, 0.4));
  EXPECT_TRUE(detect(0.4 + 1e-9, 0.4));
  EXPECT_FALSE(detect(-1.0, 0.4));
}

TEST(Detect, Monotone) {
  for (double t : {-1.0, 0.0, 0.37})
    for (double s1 = -2.0; s1 <= 2.0; s1 += 0.25)
      if (detect(s1, t)) {
        for (double s2 = s1; s2 <= 3.0; s2 += 0.125) EXPECT_TRUE(detect(s2, t));
      }
}

TEST(Spearman, KnownValues) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{2, 4, 6, 8, 100}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{5, 4, 3, 2, 1}), -1.0);
  EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{1, 1, 1, 1, 1}), 0.0);
  // ranks (1.5,1.5,3) vs (1,2,3): r = 0.866...
  EXPECT_NEAR(spearman(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3}), std::sqrt(3.0) / 2.0, 1e-15);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST(DetectionCsv, RowFormat) {
  DetectionReport r{3, 0.05, "ent", "1+2+3+4", 0.875, 1.0, 0.25};
  EXPECT_EQ(to_csv_row(r), "3,0.05,ent,1+2+3+4,0.875,1,0.25");
  EXPECT_STREQ(kDetectionCsvHeader, "seed,epsilon,metric,head_subset,auroc,clean_acc,adv_acc");
}

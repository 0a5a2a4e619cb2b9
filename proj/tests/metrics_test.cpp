#include "twoscale/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "twoscale/rng.hpp"

using namespace twoscale;

namespace {

// Independent reformulations of every measure, used as oracles against the
// production implementations on random and tie-heavy inputs.

bool oracle_strict_hit(const std::vector<double>& p, int label) {
  const double pi = p[static_cast<std::size_t>(label)];
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (j != static_cast<std::size_t>(label) && p[j] >= pi) return false;
  }
  return true;
}

bool oracle_top_k_hit(const std::vector<double>& p, int label, std::size_t k) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  for (std::size_t pos = 0; pos < k; ++pos) {
    if (order[pos] == static_cast<std::size_t>(label)) return true;
  }
  return false;
}

bool oracle_close_hit(const std::vector<double>& p, int label, double at) {
  const double pmax = *std::max_element(p.begin(), p.end());
  return p[static_cast<std::size_t>(label)] >= pmax - at;
}

// Probability vectors drawn from a tiny value grid, so exact ties are common.
std::vector<std::vector<double>> tie_heavy_probs(std::size_t n, std::size_t classes,
                                                 Rng& rng) {
  std::vector<std::vector<double>> probs(n, std::vector<double>(classes));
  for (auto& p : probs) {
    double sum = 0.0;
    for (auto& v : p) {
      v = static_cast<double>(1 + rng.below(3));
      sum += v;
    }
    for (auto& v : p) v /= sum;
  }
  return probs;
}

}  // namespace

TEST(Accuracy, StrictMaximumRule) {
  const std::vector<std::vector<double>> probs{
      {0.7, 0.2, 0.1},   // strict hit for label 0
      {0.4, 0.4, 0.2},   // exact tie: incorrect even for labels 0 and 1
      {0.1, 0.2, 0.7},   // miss for label 0
  };
  EXPECT_DOUBLE_EQ(accuracy(probs, std::vector<int>{0, 0, 0}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(accuracy(probs, std::vector<int>{0, 1, 2}), 2.0 / 3.0);
  EXPECT_THROW(accuracy({}, std::vector<int>{}), InvalidInput);
  EXPECT_THROW(accuracy(probs, std::vector<int>{0, 1}), InvalidInput);
  EXPECT_THROW(accuracy(probs, std::vector<int>{0, 1, 3}), InvalidInput);
  EXPECT_THROW(accuracy({{1.0}, {1.0}}, std::vector<int>{0, 0}), InvalidInput);
  EXPECT_THROW(accuracy({{0.5, 0.5}, {0.5, 0.5, 0.0}}, std::vector<int>{0, 0}), InvalidInput);
}

TEST(TopK, TieBreaksTowardLowerIndex) {
  const std::vector<std::vector<double>> probs{{0.3, 0.3, 0.2, 0.2}};
  // Class 0 owns the tie at 0.3: rank 0.
  EXPECT_DOUBLE_EQ(top_k_accuracy(probs, std::vector<int>{0}, 1), 1.0);
  // Class 1 sits behind it: rank 1, so top-1 misses but top-2 hits.
  EXPECT_DOUBLE_EQ(top_k_accuracy(probs, std::vector<int>{1}, 1), 0.0);
  EXPECT_DOUBLE_EQ(top_k_accuracy(probs, std::vector<int>{1}, 2), 1.0);
  // Class 3 trails the tie at 0.2: rank 3.
  EXPECT_DOUBLE_EQ(top_k_accuracy(probs, std::vector<int>{3}, 3), 0.0);
  EXPECT_DOUBLE_EQ(top_k_accuracy(probs, std::vector<int>{3}, 4), 1.0);
  EXPECT_THROW(top_k_accuracy(probs, std::vector<int>{0}, 0), InvalidInput);
  EXPECT_THROW(top_k_accuracy(probs, std::vector<int>{0}, 5), InvalidInput);
}

TEST(TopK, FullRankIsAlwaysPerfect) {
  Rng rng(3);
  const auto probs = tie_heavy_probs(40, 5, rng);
  std::vector<int> labels(40);
  for (auto& l : labels) l = static_cast<int>(rng.below(5));
  EXPECT_DOUBLE_EQ(top_k_accuracy(probs, labels, 5), 1.0);
  for (std::size_t k = 1; k < 5; ++k) {
    EXPECT_LE(top_k_accuracy(probs, labels, k), top_k_accuracy(probs, labels, k + 1));
  }
}

TEST(CloseEnough, InclusiveThreshold) {
  // Dyadic values so the boundary comparison is exact in floating point.
  const std::vector<std::vector<double>> probs{{0.5, 0.375, 0.125}};
  const std::vector<int> label1{1};
  // The gap is exactly 0.125: inclusive comparison admits it.
  EXPECT_DOUBLE_EQ(close_enough_accuracy(probs, label1, 0.125), 1.0);
  EXPECT_DOUBLE_EQ(close_enough_accuracy(probs, label1, 0.0625), 0.0);
  // at = 0 admits exact ties with the maximum, unlike strict accuracy.
  const std::vector<std::vector<double>> tie{{0.5, 0.5}};
  EXPECT_DOUBLE_EQ(close_enough_accuracy(tie, std::vector<int>{1}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(tie, std::vector<int>{1}), 0.0);
  EXPECT_DOUBLE_EQ(close_enough_accuracy(probs, label1, 1.0), 1.0);
  EXPECT_THROW(close_enough_accuracy(probs, label1, -0.1), InvalidInput);
  EXPECT_THROW(close_enough_accuracy(probs, label1, 1.1), InvalidInput);
}

TEST(Superclass, PredictionMapsThroughCoarseClasses) {
  // Fine classes {0,1} -> coarse 0, {2,3} -> coarse 1.
  const std::vector<int> map{0, 0, 1, 1};
  const std::vector<std::vector<double>> probs{
      {0.1, 0.6, 0.2, 0.1},   // predicted 1
      {0.1, 0.1, 0.2, 0.6},   // predicted 3
  };
  // Object 0: label 0, predicted 1 — wrong fine class, same coarse class.
  // Object 1: label 0, predicted 3 — different coarse class.
  EXPECT_DOUBLE_EQ(superclass_accuracy(probs, std::vector<int>{0, 0}, map), 0.5);
  EXPECT_DOUBLE_EQ(superclass_accuracy(probs, std::vector<int>{1, 2}, map), 1.0);

  EXPECT_THROW(superclass_accuracy(probs, std::vector<int>{0, 0}, std::vector<int>{0, 0, 1}),
               InvalidConfig);
  EXPECT_THROW(
      superclass_accuracy(probs, std::vector<int>{0, 0}, std::vector<int>{0, 0, -1, 1}),
      InvalidConfig);
}

TEST(Metrics, AgreeWithOraclesOnTieHeavyInputs) {
  Rng rng(17);
  const std::size_t n = 60, classes = 6;
  const auto probs = tie_heavy_probs(n, classes, rng);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.below(classes));

  std::size_t strict_hits = 0;
  for (std::size_t i = 0; i < n; ++i) strict_hits += oracle_strict_hit(probs[i], labels[i]);
  EXPECT_DOUBLE_EQ(accuracy(probs, labels), double(strict_hits) / double(n));

  for (std::size_t k = 1; k <= classes; ++k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += oracle_top_k_hit(probs[i], labels[i], k);
    EXPECT_DOUBLE_EQ(top_k_accuracy(probs, labels, k), double(hits) / double(n)) << "k=" << k;
  }

  for (double at : default_at_grid()) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += oracle_close_hit(probs[i], labels[i], at);
    EXPECT_DOUBLE_EQ(close_enough_accuracy(probs, labels, at), double(hits) / double(n))
        << "at=" << at;
  }
}

TEST(Partition, BoundaryIsMarginal) {
  const std::vector<double> deltas{0.5, 0.01, -0.01, -0.5, 0.0, 0.02};
  const PartitionMasses m = confidence_partition(deltas, 0.01);
  // 0.5 and 0.02 are well; -0.5 is poor; +-0.01 and 0 are marginal.
  EXPECT_DOUBLE_EQ(m.well, 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.poor, 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.marginal, 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.well + m.poor + m.marginal, 1.0);

  EXPECT_THROW(confidence_partition({}, 0.01), InvalidInput);
  EXPECT_THROW(confidence_partition(deltas, 0.0), InvalidInput);
  EXPECT_THROW(confidence_partition(deltas, -1.0), InvalidInput);
  const std::vector<double> bad{std::nan("")};
  EXPECT_THROW(confidence_partition(bad, 0.01), InvalidInput);
}

TEST(Partition, MassesAlwaysSumToOne) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> deltas(30);
    for (auto& d : deltas) d = rng.gaussian() * 0.05;
    const PartitionMasses m = confidence_partition(deltas, 0.01);
    EXPECT_NEAR(m.well + m.poor + m.marginal, 1.0, 1e-12);
  }
}

TEST(Histograms, BinEdgesAreRightExclusive) {
  // 5 bins over [0,1]: width 0.2. A value on an interior edge belongs to the
  // bin on its right; the top edge folds into the last bin.
  const std::vector<double> values{0.0, 0.2, 0.19, 0.999, 1.0};
  const Histogram h = detail::make_histogram(0.0, 1.0, 5, values);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{2, 1, 0, 0, 2}));
  EXPECT_EQ(h.total(), 5u);

  // Out-of-range values clamp into the edge bins rather than vanishing.
  const std::vector<double> wild{-0.5, 1.5};
  const Histogram c = detail::make_histogram(0.0, 1.0, 5, wild);
  EXPECT_EQ(c.counts.front(), 1u);
  EXPECT_EQ(c.counts.back(), 1u);
}

TEST(Histograms, DeltaPCoversOnlyMisclassifiedObjects) {
  const std::vector<std::vector<double>> probs{
      {0.9, 0.1},    // correct for label 0
      {0.3, 0.7},    // wrong for label 0, delta_p = -0.4
      {0.5, 0.5},    // tie: misclassified, delta_p = 0
  };
  const std::vector<int> labels{0, 0, 0};
  const ProbabilityHistograms h = probability_histograms(probs, labels, 4);
  EXPECT_EQ(h.max_prob.total(), 3u);
  EXPECT_EQ(h.correct_prob.total(), 3u);
  EXPECT_EQ(h.delta_p.total(), 2u);
  // delta_p bins over [-1, 0] with width 0.25: -0.4 in bin 2, 0 clamps into bin 3.
  EXPECT_EQ(h.delta_p.counts, (std::vector<std::size_t>{0, 0, 1, 1}));
  // max_prob: 0.9 in bin 3, 0.7 in bin 2, 0.5 in bin 2.
  EXPECT_EQ(h.max_prob.counts, (std::vector<std::size_t>{0, 0, 2, 1}));
  // correct_prob: 0.9 bin 3, 0.3 bin 1, 0.5 bin 2.
  EXPECT_EQ(h.correct_prob.counts, (std::vector<std::size_t>{0, 1, 1, 1}));

  EXPECT_THROW(probability_histograms(probs, labels, 1), InvalidInput);
}

TEST(Report, AssemblesEveryMeasureOverTheGrids) {
  Rng rng(29);
  const std::size_t n = 40, classes = 4;
  const auto probs = tie_heavy_probs(n, classes, rng);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.below(classes));
  std::vector<double> deltas(n);
  for (auto& d : deltas) d = rng.gaussian() * 0.05;
  const std::vector<int> map{0, 0, 1, 1};

  const MetricReport report =
      build_report(probs, labels, deltas, map, default_at_grid(), 10, 0.01, 50);

  EXPECT_DOUBLE_EQ(report.accuracy, accuracy(probs, labels));
  // top-k runs 1..min(limit, classes).
  ASSERT_EQ(report.top_k.size(), classes);
  for (std::size_t k = 1; k <= classes; ++k) {
    EXPECT_DOUBLE_EQ(report.top_k.at(k), top_k_accuracy(probs, labels, k));
  }
  const auto grid = default_at_grid();
  ASSERT_EQ(grid.size(), 13u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.01);
  EXPECT_DOUBLE_EQ(grid[4], 0.05);
  EXPECT_DOUBLE_EQ(grid[5], 0.1);
  EXPECT_DOUBLE_EQ(grid.back(), 0.8);
  ASSERT_EQ(report.close_enough.size(), grid.size());
  for (double at : grid) {
    EXPECT_DOUBLE_EQ(report.close_enough.at(at), close_enough_accuracy(probs, labels, at));
  }
  ASSERT_TRUE(report.superclass.has_value());
  EXPECT_DOUBLE_EQ(*report.superclass, superclass_accuracy(probs, labels, map));
  EXPECT_DOUBLE_EQ(report.partition_mu, 0.01);
  EXPECT_EQ(report.histograms.max_prob.counts.size(), 50u);
  EXPECT_EQ(report.histograms.max_prob.total(), n);

  // Without a coarse map the super-class measure is absent.
  const MetricReport flat =
      build_report(probs, labels, deltas, {}, default_at_grid(), 10, 0.01, 50);
  EXPECT_FALSE(flat.superclass.has_value());

  // Confidence vector must align with the probability set.
  std::vector<double> short_deltas(n - 1, 0.0);
  EXPECT_THROW(build_report(probs, labels, short_deltas, map, grid, 10, 0.01, 50),
               InvalidInput);
}

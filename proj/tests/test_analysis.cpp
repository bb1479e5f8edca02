// Copyright 2026 The itersynth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace itersynth;
using namespace itersynth::analysis;

namespace {

LearningCurve curve(const std::string& label, std::vector<double> means, double se,
                    std::vector<std::size_t> ns = {100, 200}) {
  LearningCurve c{label, {}};
  for (std::size_t i = 0; i < means.size(); ++i) c.points.push_back({ns[i], means[i], se, 3});
  return c;
}

}  // namespace

TEST(SampleComplexity, FirstCrossing) {
  LearningCurve c{"a", {{50, 0.3, 0, 1}, {100, 0.5, 0, 1}, {150, 0.45, 0, 1}, {200, 0.7, 0, 1}}};
  EXPECT_EQ(sample_complexity(c, 0.5), 100u);
  EXPECT_EQ(sample_complexity(c, 0.6), 200u);
  EXPECT_EQ(sample_complexity(c, 0.1), 50u);
  EXPECT_FALSE(sample_complexity(c, 0.8));
  c.points[2].n = 90;
  EXPECT_THROW(validate(c), ValidationError);
}

// Hand-computed fixture: 3 algorithms, 2 datasets, 2 grid points each.
TEST(Winrate, HandFixture) {
  std::map<std::string, std::vector<LearningCurve>> curves;
  curves["ds1"] = {curve("A", {0.5, 0.6}, 0.01), curve("B", {0.4, 0.6}, 0.01), curve("C", {0.3, 0.7}, 0.01)};
  curves["ds2"] = {curve("A", {0.5, 0.5}, 0.0), curve("B", {0.5, 0.5}, 0.0), curve("C", {0.5, 0.5}, 0.0)};
  const auto w = winrate(curves, 1.0);
  ASSERT_EQ(w.labels, (std::vector<std::string>{"A", "B", "C"}));
  const int wins[3][3] = {{0, 1, 1}, {0, 0, 1}, {1, 1, 0}};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_EQ(w.wins[i][j], wins[i][j]) << i << j;
      EXPECT_EQ(w.comparisons[i][j], i == j ? 0 : 4);
    }
  }
  EXPECT_DOUBLE_EQ(w.rate(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(w.rate(1, 0), 0.0);
  const auto cm = w.column_means();
  EXPECT_DOUBLE_EQ(cm[0], 0.125);
  EXPECT_DOUBLE_EQ(cm[1], 0.25);
  EXPECT_DOUBLE_EQ(cm[2], 0.25);
}

TEST(Winrate, Properties) {
  std::mt19937 gen(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, std::vector<LearningCurve>> curves, shifted;
    for (int d = 0; d < 3; ++d) {
      const std::string ds = "d" + std::to_string(d);
      for (int a = 0; a < 4; ++a) {
        auto c = curve("alg" + std::to_string(a), {u(gen), u(gen), u(gen)}, 0.05 * u(gen), {10, 20, 30});
        curves[ds].push_back(c);
        for (auto& p : c.points) p.mean += 0.37;
        shifted[ds].push_back(c);
      }
    }
    const auto w = winrate(curves, 1.0);
    const auto ws = winrate(shifted, 1.0);
    const auto w0 = winrate(curves, 0.0);
    const auto w2 = winrate(curves, 2.0);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_LE(w.wins[i][j] + w.wins[j][i], w.comparisons[i][j]);
        EXPECT_EQ(w.wins[i][j], ws.wins[i][j]);
        EXPECT_GE(w0.wins[i][j], w.wins[i][j]);
        EXPECT_GE(w.wins[i][j], w2.wins[i][j]);
      }
    }
  }
}

TEST(Winrate, RejectsBadInput) {
  std::map<std::string, std::vector<LearningCurve>> curves;
  curves["d"] = {curve("A", {0.5, 0.6}, 0.01), curve("B", {0.5, 0.6}, 0.01, {100, 300})};
  EXPECT_THROW(winrate(curves), ValidationError);
  curves["d"] = {curve("A", {0.5, 0.6}, 0.01), curve("A", {0.5, 0.6}, 0.01)};
  EXPECT_THROW(winrate(curves), ValidationError);
  curves["d"] = {curve("A", {0.5, 0.6}, 0.01)};
  EXPECT_THROW(winrate(curves, -1.0), ValidationError);
}

TEST(Spearman, MatchesReferenceValues) {
  // Reference values from an independent statistics package.
  const auto a = spearman({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, {2, 1, 4, 3, 6, 5, 8, 9, 7, 12, 10, 11});
  EXPECT_NEAR(a.rho, 0.9370629370629372, 1e-12);
  EXPECT_NEAR(a.p_value, 6.99316495321054e-06, 1e-10);
  const auto b = spearman({3.1, 2.2, 2.2, 5.0, 4.4, 1.0, 7.5, 6.0}, {1, 3, 2, 7, 5, 2, 9, 4});
  EXPECT_NEAR(b.rho, 0.7650602409638554, 1e-12);
  EXPECT_NEAR(b.p_value, 0.026975647289092654, 1e-9);
  const auto c = spearman({1, 2, 3, 4, 5, 6}, {2, 1, 4, 3, 6, 5}, PValueMethod::kExactPermutation);
  EXPECT_NEAR(c.rho, 0.8285714285714287, 1e-12);
  EXPECT_NEAR(c.p_value, 42.0 / 720.0, 1e-12);
}

// Oracle: rank with an O(n²) average-rank rule, then Pearson.
TEST(Spearman, EqualsPearsonOfRanks) {
  std::mt19937 gen(2);
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double x : v) {
        less += x < v[i];
        equal += x == v[i];
      }
      r[i] = less + (equal + 1) / 2.0;
    }
    return r;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + gen() % 30;
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = static_cast<double>(gen() % 10);
    for (auto& v : y) v = static_cast<double>(gen() % 10);
    const auto rx = ranks(x), ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) mx += rx[i] / n, my += ry[i] / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (rx[i] - mx) * (ry[i] - my);
      sxx += (rx[i] - mx) * (rx[i] - mx);
      syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) {
      EXPECT_THROW(spearman(x, y), DegenerateInputError);
      continue;
    }
    const auto c = spearman(x, y);
    EXPECT_NEAR(c.rho, sxy / std::sqrt(sxx * syy), 1e-12);
    EXPECT_GE(c.p_value, 0.0);
    EXPECT_LE(c.p_value, 1.0);
    // Invariant under strictly increasing transforms.
    std::vector<double> ex(n);
    for (std::size_t i = 0; i < n; ++i) ex[i] = std::exp(x[i]);
    EXPECT_NEAR(spearman(ex, y).rho, c.rho, 1e-12);
  }
}

TEST(Spearman, Errors) {
  EXPECT_THROW(spearman({1, 2}, {1, 2}), ValidationError);
  EXPECT_THROW(spearman({1, 2, 3}, {1, 2}), ValidationError);
  EXPECT_THROW(spearman({1, 1, 1}, {1, 2, 3}), DegenerateInputError);
  std::vector<double> big(11);
  for (int i = 0; i < 11; ++i) big[i] = i;
  EXPECT_THROW(spearman(big, big, PValueMethod::kExactPermutation), ValidationError);
}

TEST(CumulativeDiff, Example) {
  const auto d = cumulative_accuracy_diff_expected({false, false, true, true}, {0, 1, 2, 3});
  ASSERT_EQ(d.size(), 4u);
  EXPECT_NEAR(d[0], 50.0, 1e-12);
  EXPECT_NEAR(d[1], 50.0, 1e-12);
  EXPECT_NEAR(d[2], 100.0 * (0.5 - 1.0 / 3.0), 1e-12);
  EXPECT_NEAR(d[3], 0.0, 1e-12);
  EXPECT_THROW(cumulative_accuracy_diff({true, false}, {0, 0}, 1), ValidationError);
}

TEST(CumulativeDiff, LastEntryIsZeroAndRandomOrderIsPermutation) {
  std::mt19937 gen(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + gen() % 40;
    std::vector<bool> correct(n);
    for (std::size_t i = 0; i < n; ++i) correct[i] = gen() % 2;
    auto order = random_order(n, 100 + trial);
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(sorted[i], i);
    std::reverse(order.begin(), order.end());
    EXPECT_NEAR(cumulative_accuracy_diff(correct, order, trial).back(), 0.0, 1e-9);
    EXPECT_NEAR(cumulative_accuracy_diff_expected(correct, order).back(), 0.0, 1e-9);
    // The seeded baseline against itself is zero everywhere.
    for (double v : cumulative_accuracy_diff(correct, random_order(n, trial), trial)) EXPECT_EQ(v, 0.0);
  }
}

TEST(Tvd, MetricAxioms) {
  std::mt19937 gen(9);
  auto random_hist = [&] {
    Histogram h;
    double total = 0;
    for (int i = 0; i < 6; ++i) {
      if (gen() % 3 == 0) continue;
      total += h["t" + std::to_string(i)] = 1 + gen() % 5;
    }
    if (h.empty()) total = h["t0"] = 1;
    for (auto& [k, v] : h) v /= total;
    return h;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_hist(), q = random_hist(), r = random_hist();
    EXPECT_EQ(tvd(p, p), 0.0);
    EXPECT_NEAR(tvd(p, q), tvd(q, p), 1e-15);
    EXPECT_GE(tvd(p, q), 0.0);
    EXPECT_LE(tvd(p, q), 1.0);
    EXPECT_LE(tvd(p, r), tvd(p, q) + tvd(q, r) + 1e-12);
  }
  EXPECT_DOUBLE_EQ(tvd({{"a", 1.0}}, {{"b", 1.0}}), 1.0);
  EXPECT_DOUBLE_EQ(tvd({{"a", 0.5}, {"b", 0.5}}, {{"a", 1.0}}), 0.5);
}

TEST(Tvd, CorpusHistograms) {
  Corpus a(CorpusRole::kSeed, {Sample::seed("x", "a b", "c d")});
  Corpus b(CorpusRole::kSeed, {Sample::seed("y", "a b", "e f")});
  EXPECT_DOUBLE_EQ(token_tvd(a, a), 0.0);
  EXPECT_DOUBLE_EQ(token_tvd(a, b), 0.5);
  EXPECT_THROW(token_histogram(Corpus(CorpusRole::kSynthetic, {})), ValidationError);
}

TEST(Fidelity, MedianAndSummary) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
}

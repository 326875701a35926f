/*
 * Copyright 2026 The pebias Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "pebias/synth.hpp"

namespace pebias {
namespace {

SynthConfig small_config(std::uint64_t seed, double alpha = 1.0) {
  SynthConfig c;
  c.seed = seed;
  c.alpha = alpha;
  return c;
}

std::array<double, kNumLevels> level_shares(const Eigen::MatrixXd& values) {
  std::array<double, kNumLevels> share{};
  for (Eigen::Index i = 0; i < values.size(); ++i) share[static_cast<std::size_t>(values.data()[i]) - 1] += 1.0;
  for (double& s : share) s /= static_cast<double>(values.size());
  return share;
}

TEST(GeneratePreferences, EqualMassLevels) {
  const auto y = generate_full_preferences(small_config(1));
  EXPECT_EQ(y.num_users(), 1000u);
  EXPECT_EQ(y.num_topics(), 50u);
  for (double s : level_shares(y.values)) EXPECT_NEAR(s, 0.2, 0.01);
}

TEST(GeneratePreferences, QuantileOrderIsPreserved) {
  // Recreate the raw scores with the same draws to locate percentiles.
  SynthConfig c = small_config(3);
  c.num_users = 40;
  c.num_topics = 25;
  const auto y = generate_full_preferences(c);
  Rng rng(c.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd p(c.num_users, c.dim), q(c.num_topics, c.dim);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = g(rng);
  const Eigen::MatrixXd s = p * q.transpose();
  std::vector<std::pair<double, Eigen::Index>> order;
  for (Eigen::Index i = 0; i < s.size(); ++i) order.emplace_back(s.data()[i], i);
  std::sort(order.begin(), order.end());
  const auto n = order.size();
  EXPECT_EQ(y.values.data()[order[n / 10].second], 1.0);
  EXPECT_EQ(y.values.data()[order[9 * n / 10].second], 5.0);
  for (std::size_t k = 1; k < n; ++k) {
    EXPECT_LE(y.values.data()[order[k - 1].second], y.values.data()[order[k].second]);
  }
}

TEST(GeneratePreferences, SeedDeterminism) {
  const auto a = generate_full_preferences(small_config(5));
  const auto b = generate_full_preferences(small_config(5));
  const auto c = generate_full_preferences(small_config(6));
  EXPECT_EQ(a.values, b.values);
  const double differing = (a.values.array() != c.values.array()).cast<double>().mean();
  EXPECT_GT(differing, 0.5);
}

TEST(SampleUnbiasedTest, FullRateReturnsEveryCell) {
  FullPreferenceMatrix y{sequential_users(2), Eigen::MatrixXd::Constant(2, 2, 3.0)};
  const auto t = sample_unbiased_test(y, 1.0, 9);
  EXPECT_EQ(t.size(), 4u);
  EXPECT_THROW(sample_unbiased_test(y, 0.0, 9), ConfigError);
}

TEST(SampleUnbiasedTest, SizeWithinBinomialBound) {
  const auto y = generate_full_preferences(small_config(2));
  const auto t = sample_unbiased_test(y, 0.05, 11);
  EXPECT_NEAR(static_cast<double>(t.size()), 2500.0, 150.0);
}

TEST(SampleUnbiasedTest, LevelFrequenciesMatchPopulation) {
  const auto y = generate_full_preferences(small_config(4));
  const auto t = sample_unbiased_test(y, 0.2, 12);
  std::array<double, kNumLevels> sample{};
  for (const auto& r : t.rows) sample[static_cast<std::size_t>(r.level() - 1)] += 1.0 / static_cast<double>(t.size());
  const auto pop = level_shares(y.values);
  for (int l = 0; l < kNumLevels; ++l) EXPECT_NEAR(sample[l], pop[l], 0.02);
}

TEST(SampleMnar, AlphaZeroIsUniform) {
  const auto y = generate_full_preferences(small_config(7));
  const auto s = sample_mnar_observations(y, small_config(8, 0.0));
  EXPECT_TRUE((s.truth.cells().array() == 0.05).all());
}

TEST(SampleMnar, AlphaOneDecayHalfDoublesPerLevel) {
  const auto y = generate_full_preferences(small_config(7));
  const auto s = sample_mnar_observations(y, small_config(8, 1.0));
  double rho5 = 0.0, rho4 = 0.0;
  for (Eigen::Index i = 0; i < y.values.size(); ++i) {
    if (y.values.data()[i] == 5.0) rho5 = s.truth.cells().data()[i];
    if (y.values.data()[i] == 4.0) rho4 = s.truth.cells().data()[i];
  }
  EXPECT_DOUBLE_EQ(rho5 / rho4, 2.0);
}

TEST(SampleMnar, ExpectedRateEqualsSparsity) {
  const auto y = generate_full_preferences(small_config(7));
  for (double alpha : {0.0, 0.5, 1.0}) {
    auto c = small_config(8, alpha);
    c.rho_min = 1e-6;
    const auto s = sample_mnar_observations(y, c);
    EXPECT_NEAR(s.truth.cells().mean(), 0.05, 1e-12) << alpha;
  }
}

TEST(SampleMnar, FloorOnlyRaisesTheRate) {
  const auto y = generate_full_preferences(small_config(7));
  const auto s = sample_mnar_observations(y, small_config(8, 1.0));
  // Level-1 cells sit at 0.05 * 0.0625 / 0.3875 before the 0.01 floor.
  EXPECT_GT(s.truth.cells().mean(), 0.05);
  EXPECT_LT(s.truth.cells().mean(), 0.05 + 0.25 * 0.01);
  EXPECT_GE(s.truth.cells().minCoeff(), kDefaultRhoMin);
}

TEST(SampleMnar, ObservedMeanExceedsPopulationMean) {
  double gap = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto y = generate_full_preferences(small_config(100 + seed));
    const auto s = sample_mnar_observations(y, small_config(200 + seed, 1.0));
    double obs = 0.0;
    for (const auto& r : s.train.rows) obs += r.rating;
    gap += obs / static_cast<double>(s.train.size()) - y.values.mean();
  }
  EXPECT_GE(gap / 10.0, 0.3);
}

TEST(SampleMnar, PositivityBiasIsMonotoneInAlpha) {
  std::vector<double> means;
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto y = generate_full_preferences(small_config(300 + seed));
      const auto s = sample_mnar_observations(y, small_config(400 + seed, alpha));
      double obs = 0.0;
      for (const auto& r : s.train.rows) obs += r.rating;
      total += obs / static_cast<double>(s.train.size());
    }
    means.push_back(total / 10.0);
  }
  for (std::size_t i = 1; i < means.size(); ++i) EXPECT_GE(means[i], means[i - 1]);
}

TEST(SampleMnar, InfeasibleSparsityReportsMaximum) {
  const auto y = generate_full_preferences(small_config(7));
  SynthConfig c = small_config(8, 1.0);
  c.sparsity = 0.5;
  try {
    sample_mnar_observations(y, c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    const auto pos = msg.find("maximal feasible sparsity is ");
    ASSERT_NE(pos, std::string::npos) << msg;
    // Equal-mass levels give mean kernel (1 + 1/2 + 1/4 + 1/8 + 1/16) / 5.
    EXPECT_NEAR(std::stod(msg.substr(pos + 29)), 0.3875, 1e-3);
  }
  EXPECT_NEAR(max_feasible_sparsity(1.0, 1.0, 0.3875), 0.3875, 1e-15);
  EXPECT_NEAR(max_feasible_sparsity(0.0, 1.0, 0.3875), 1.0, 1e-15);
}

TEST(SampleMnar, TestCellsAreExcludedAndSplitsDisjoint) {
  const auto y = generate_full_preferences(small_config(9));
  const auto test = sample_unbiased_test(y, 0.05, 10);
  const auto mask = cell_mask(y, test);
  const auto s = sample_mnar_observations(y, small_config(11), mask);
  const auto train_mask = cell_mask(y, s.train);
  EXPECT_FALSE((mask && train_mask).any());
}

TEST(SampleMnar, TruthIsTheDrawProbabilityIncludingTheFloor) {
  const auto y = generate_full_preferences(small_config(12));
  SynthConfig c = small_config(13, 1.0);
  c.rho_min = 0.03;
  const auto s = sample_mnar_observations(y, c);
  const double kernel_mean = (1.0 + 0.5 + 0.25 + 0.125 + 0.0625) / 5.0;
  for (Eigen::Index i = 0; i < y.values.size(); ++i) {
    const double raw = 0.05 / kernel_mean * std::pow(0.5, 5.0 - y.values.data()[i]);
    EXPECT_NEAR(s.truth.cells().data()[i], std::max(raw, 0.03), 1e-3);
  }
  EXPECT_GE(s.truth.cells().minCoeff(), 0.03);
}

TEST(SampleMnar, Reproducible) {
  const auto y = generate_full_preferences(small_config(14));
  const auto a = sample_mnar_observations(y, small_config(15, 0.5));
  const auto b = sample_mnar_observations(y, small_config(15, 0.5));
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.truth.cells(), b.truth.cells());
}

TEST(SynthConfig, RejectsOutOfRangeFields) {
  SynthConfig c;
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SynthConfig{};
  c.decay = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SynthConfig{};
  c.sparsity = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace pebias

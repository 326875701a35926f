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

// Evaluation on unbiased test data: MAE/MSE, NDCG@k, cross-validated model
// selection scored by SNIPS, and paired t-tests across seeds.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/estimators.hpp"
#include "pebias/seeding.hpp"

namespace pebias {

struct RatingMetrics {
  double mae = 0.0;
  double mse = 0.0;
};

/// Predictions are clamped to [1, 5] before scoring.
template <Predictor M>
RatingMetrics rating_metrics(const TopicInteractionTable& test, const M& model) {
  if (test.empty()) throw EmptyInput("rating metrics over an empty test set");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (const auto& r : test.rows) {
    const double e = clamp_rating(model.predict(r.user, r.topic)) - r.rating;
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const auto n = static_cast<double>(test.size());
  return {abs_sum / n, sq_sum / n};
}

namespace detail {

inline double dcg_gain(int level) { return std::exp2(static_cast<double>(level)) - 1.0; }

/// Groups row indices by user in first-appearance order.
inline std::vector<std::vector<std::size_t>> rows_by_user(const TopicInteractionTable& table) {
  IdIndex users;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::size_t u = users.intern(table.rows[i].user);
    if (u == groups.size()) groups.emplace_back();
    groups[u].push_back(i);
  }
  return groups;
}

}  // namespace detail

/// Mean NDCG@k over users with at least two test topics. Topics are ranked
/// by raw predicted score (descending, ties by ascending topic id); gains
/// are 2^level - 1 with a log2(rank + 1) discount.
template <Predictor M>
double ndcg_at_k(const TopicInteractionTable& test, const M& model, int k = 3) {
  if (k < 1) throw ConfigError("NDCG cutoff must be >= 1");
  double total = 0.0;
  std::size_t users = 0;
  for (const auto& group : detail::rows_by_user(test)) {
    if (group.size() < 2) continue;
    struct Entry {
      double score;
      TopicId topic;
      int level;
    };
    std::vector<Entry> entries;
    entries.reserve(group.size());
    for (std::size_t i : group) {
      const auto& r = test.rows[i];
      entries.push_back({model.predict(r.user, r.topic), r.topic, r.level()});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.topic < b.topic;
    });
    std::vector<int> ideal;
    for (const auto& e : entries) ideal.push_back(e.level);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    const std::size_t cut = std::min(static_cast<std::size_t>(k), entries.size());
    double dcg = 0.0;
    double idcg = 0.0;
    for (std::size_t j = 0; j < cut; ++j) {
      const double discount = std::log2(static_cast<double>(j) + 2.0);
      dcg += detail::dcg_gain(entries[j].level) / discount;
      idcg += detail::dcg_gain(ideal[j]) / discount;
    }
    total += dcg / idcg;
    ++users;
  }
  if (users == 0) throw NoRankableUsers("no user has two or more test topics");
  return total / static_cast<double>(users);
}

/// Fold id per row. Each user's rows are shuffled and dealt round-robin,
/// continuing the deal across users so fold sizes stay within one row.
inline std::vector<int> user_stratified_folds(const TopicInteractionTable& table, int folds,
                                              std::uint64_t seed) {
  if (folds < 2) throw ConfigError("need at least 2 folds");
  if (table.size() < static_cast<std::size_t>(folds)) {
    throw ConfigError("fewer rows than folds");
  }
  Rng rng(seed);
  std::vector<int> fold_of(table.size(), 0);
  std::size_t dealt = 0;
  for (auto group : detail::rows_by_user(table)) {
    std::shuffle(group.begin(), group.end(), rng);
    for (std::size_t i : group) fold_of[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(folds));
  }
  return fold_of;
}

struct CvResult {
  TrainConfig best;
  std::size_t best_index = 0;
  std::vector<double> mean_loss;               // per grid entry
  std::vector<std::vector<double>> fold_loss;  // [grid entry][fold]
};

/// Scores every config by the mean SNIPS absolute error over held-out
/// folds. `trainer(train_part, config)` must return a Predictor. Ties go to
/// the smaller dim, then the smaller l2.
template <class Trainer>
CvResult cross_validate(const TopicInteractionTable& train, const std::vector<TrainConfig>& grid,
                        const PropensityModel& props, Trainer&& trainer, int folds = 5,
                        std::uint64_t seed = 0) {
  if (grid.empty()) throw ConfigError("empty hyperparameter grid");
  const auto fold_of = user_stratified_folds(train, folds, seed);
  std::vector<TopicInteractionTable> fit_part(static_cast<std::size_t>(folds));
  std::vector<TopicInteractionTable> held_part(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < train.rows.size(); ++i) {
    for (int f = 0; f < folds; ++f) {
      (f == fold_of[i] ? held_part : fit_part)[static_cast<std::size_t>(f)].add(train.rows[i]);
    }
  }

  CvResult out;
  for (const auto& config : grid) {
    std::vector<double> losses;
    for (int f = 0; f < folds; ++f) {
      const auto model = trainer(fit_part[static_cast<std::size_t>(f)], config);
      losses.push_back(snips_loss(held_part[static_cast<std::size_t>(f)], model, props, LossKind::kAbsolute));
    }
    out.mean_loss.push_back(std::accumulate(losses.begin(), losses.end(), 0.0) / folds);
    out.fold_loss.push_back(std::move(losses));
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const auto& a = grid[i];
    const auto& b = grid[out.best_index];
    const double la = out.mean_loss[i];
    const double lb = out.mean_loss[out.best_index];
    if (la < lb || (la == lb && (a.dim < b.dim || (a.dim == b.dim && a.l2 < b.l2)))) {
      out.best_index = i;
    }
  }
  out.best = grid[out.best_index];
  return out;
}

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * detail::beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `dof`.
inline double student_t_two_sided_p(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero-variance differences with nonzero mean
};

inline TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw ConfigError("paired t-test needs at least 2 pairs");
  const auto n = static_cast<double>(a.size());
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : diff) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  TTestResult out;
  if (sd == 0.0) {
    if (mean == 0.0) return out;
    out.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
    out.p = 0.0;
    out.degenerate = true;
    return out;
  }
  out.t = mean / (sd / std::sqrt(n));
  out.p = student_t_two_sided_p(out.t, n - 1.0);
  return out;
}

}  // namespace pebias

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

// Topic-level preference-elicitation data from item-level ratings, plus the
// propensity estimators used to debias it.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/seeding.hpp"

namespace pebias {

/// Mean item rating per (user, topic) over the topic's items the user
/// rated. An item in several topics counts toward each of them. Rows are
/// ordered by user (first appearance), then topic.
inline TopicInteractionTable aggregate_to_topics(const InteractionTable& interactions,
                                                 const TopicAssignment& topics) {
  IdIndex users;
  std::map<std::pair<std::size_t, TopicId>, std::pair<double, int>> cells;
  for (const auto& r : interactions.rows) {
    const auto* ts = topics.topics_of(r.item);
    if (ts == nullptr || ts->empty()) throw MissingTopicError(r.item);
    const std::size_t u = users.intern(r.user);
    for (TopicId t : *ts) {
      auto& cell = cells[{u, t}];
      cell.first += r.rating;
      cell.second += 1;
    }
  }
  TopicInteractionTable out;
  out.rows.reserve(cells.size());
  for (const auto& [key, acc] : cells) {
    out.add({users.key(key.first), key.second, acc.first / acc.second});
  }
  return out;
}

struct NaiveBayesPropensities {
  std::array<double, kNumLevels> level_given_observed{};  // P(level = r | O = 1)
  std::array<double, kNumLevels> level_prior{};           // P(level = r), add-one smoothed
  double observe_rate = 0.0;                               // P(O = 1)
  std::array<double, kNumLevels> raw{};                   // rho(r) before clipping
  PropensityModel model = PropensityModel::constant(1.0);
};

/// rho(r) = P(r | O=1) P(O=1) / P(r): P(r | O=1) from the biased table,
/// P(O=1) = |biased| / num_cells, P(r) from the MCAR sample with add-one
/// smoothing over the five levels.
inline NaiveBayesPropensities estimate_propensities_nb_detail(
    const TopicInteractionTable& biased, const TopicInteractionTable& unbiased_sample,
    double num_cells, double rho_min = kDefaultRhoMin) {
  if (biased.empty()) throw EmptyInput("no biased observations for propensity estimation");
  if (unbiased_sample.empty()) throw EmptyInput("no MCAR sample for propensity estimation");
  if (num_cells <= static_cast<double>(biased.size())) {
    throw ConfigError("num_cells must exceed the number of biased observations");
  }
  std::array<double, kNumLevels> obs_count{};
  std::array<double, kNumLevels> mcar_count{};
  for (const auto& r : biased.rows) obs_count[static_cast<std::size_t>(r.level() - 1)] += 1.0;
  for (const auto& r : unbiased_sample.rows) mcar_count[static_cast<std::size_t>(r.level() - 1)] += 1.0;

  NaiveBayesPropensities out;
  out.observe_rate = static_cast<double>(biased.size()) / num_cells;
  const double mcar_total = static_cast<double>(unbiased_sample.size()) + kNumLevels;
  for (std::size_t r = 0; r < kNumLevels; ++r) {
    out.level_given_observed[r] = obs_count[r] / static_cast<double>(biased.size());
    out.level_prior[r] = (mcar_count[r] + 1.0) / mcar_total;
    out.raw[r] = out.level_given_observed[r] * out.observe_rate / out.level_prior[r];
  }
  out.model = PropensityModel::per_level(out.raw, rho_min);
  return out;
}

inline PropensityModel estimate_propensities_nb(const TopicInteractionTable& biased,
                                                const TopicInteractionTable& unbiased_sample,
                                                double num_cells, double rho_min = kDefaultRhoMin) {
  return estimate_propensities_nb_detail(biased, unbiased_sample, num_cells, rho_min).model;
}

/// Dense per-(user, item) observation probabilities.
struct ItemPropensities {
  IdIndex users;
  IdIndex items;
  Eigen::MatrixXd rho;  // |U| x |I|
};

/// rho_{u,t} = 1 - prod_{i in t} (1 - rho_{u,i}): the chance that at least
/// one of the topic's items is observed. Empty topics are left at rho_min.
inline PropensityModel lift_item_propensities_to_topics(const ItemPropensities& item_props,
                                                        const TopicAssignment& topics,
                                                        double rho_min = kDefaultRhoMin) {
  const auto nu = static_cast<Eigen::Index>(item_props.users.size());
  const auto nt = static_cast<Eigen::Index>(topics.num_topics());
  if (item_props.rho.rows() != nu ||
      item_props.rho.cols() != static_cast<Eigen::Index>(item_props.items.size())) {
    throw ValidationError("item propensity matrix does not match its index maps");
  }
  Eigen::MatrixXd miss = Eigen::MatrixXd::Ones(nu, nt);
  const auto members = topics.members();
  for (Eigen::Index t = 0; t < nt; ++t) {
    const auto& items = members[static_cast<std::size_t>(t)];
    if (items.empty()) {
      warn("topic " + std::to_string(t) + " has no items; propensity left at rho_min");
      continue;
    }
    for (std::size_t i : items) {
      const std::string& item = topics.items().key(i);
      auto col = item_props.items.find(item);
      if (!col) throw MissingPropensity("no item propensity for item " + item);
      miss.col(t).array() *= 1.0 - item_props.rho.col(static_cast<Eigen::Index>(*col)).array();
    }
  }
  return PropensityModel::per_cell(item_props.users, Eigen::MatrixXd::Ones(nu, nt) - miss, rho_min);
}

/// Aggregated binary observations: row j has covariates features.row(j),
/// `positives[j]` observed and `negatives[j]` unobserved outcomes.
struct LogregData {
  Eigen::MatrixXd features;
  Eigen::VectorXd positives;
  Eigen::VectorXd negatives;
};

struct LogregOptions {
  std::vector<double> l2_grid = {0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  double holdout = 0.2;
  int max_iters = 2000;
  double grad_tol = 1e-9;
  double rho_min = kDefaultRhoMin;
  std::uint64_t seed = 0;
};

struct LogregModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double l2 = 0.0;
  double heldout_logloss = std::numeric_limits<double>::quiet_NaN();

  double probability(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return 1.0 / (1.0 + std::exp(-(x.dot(weights) + intercept)));
  }
};

namespace detail {

// Mean weighted log-loss plus l2 * |w|^2 (intercept unpenalized), with its
// gradient over [w; b].
inline double logreg_objective(const LogregData& data, const Eigen::VectorXd& params, double l2,
                               Eigen::VectorXd* grad) {
  const Eigen::Index p = data.features.cols();
  const Eigen::VectorXd z = (data.features * params.head(p)).array() + params(p);
  const double total = data.positives.sum() + data.negatives.sum();
  double loss = 0.0;
  Eigen::VectorXd dz(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double s = 1.0 / (1.0 + std::exp(-z(j)));
    // -log s = softplus(-z), -log(1 - s) = softplus(z)
    const double sp_neg = z(j) > 0 ? std::log1p(std::exp(-z(j))) : -z(j) + std::log1p(std::exp(z(j)));
    const double sp_pos = sp_neg + z(j);
    loss += data.positives(j) * sp_neg + data.negatives(j) * sp_pos;
    dz(j) = data.positives(j) * (s - 1.0) + data.negatives(j) * s;
  }
  loss /= total;
  const Eigen::VectorXd w = params.head(p);
  loss += l2 * w.squaredNorm();
  if (grad) {
    grad->resize(p + 1);
    grad->head(p) = data.features.transpose() * dz / total + 2.0 * l2 * w;
    (*grad)(p) = dz.sum() / total;
  }
  return loss;
}

// Gradient descent with Armijo backtracking.
inline Eigen::VectorXd fit_logreg_gd(const LogregData& data, double l2, const LogregOptions& o) {
  const Eigen::Index p = data.features.cols();
  Eigen::VectorXd params = Eigen::VectorXd::Zero(p + 1);
  const double rate = data.positives.sum() / (data.positives.sum() + data.negatives.sum());
  params(p) = std::log(rate / (1.0 - rate));
  Eigen::VectorXd grad;
  double loss = logreg_objective(data, params, l2, &grad);
  double step = 1.0;
  for (int it = 0; it < o.max_iters; ++it) {
    const double g2 = grad.squaredNorm();
    if (std::sqrt(g2) < o.grad_tol) break;
    step *= 2.0;
    Eigen::VectorXd candidate;
    double cand_loss = 0.0;
    while (true) {
      candidate = params - step * grad;
      cand_loss = logreg_objective(data, candidate, l2, nullptr);
      if (cand_loss <= loss - 0.5 * step * g2 || step < 1e-12) break;
      step *= 0.5;
    }
    if (step < 1e-12) break;
    params = candidate;
    loss = logreg_objective(data, params, l2, &grad);
  }
  return params;
}

}  // namespace detail

/// Logistic regression with L2 penalty chosen by held-out log-loss on a
/// random `holdout` fraction of the individual outcomes, refit on all data.
inline LogregModel fit_logistic_regression(const LogregData& data, const LogregOptions& options = {}) {
  const Eigen::Index rows = data.features.rows();
  if (data.positives.size() != rows || data.negatives.size() != rows) {
    throw ValidationError("logistic regression counts do not match feature rows");
  }
  const double pos = data.positives.sum();
  const double neg = data.negatives.sum();
  if (pos <= 0.0 || neg <= 0.0) {
    throw DegenerateLabels("logistic regression needs both observed and unobserved outcomes");
  }
  if (options.l2_grid.empty()) throw ConfigError("empty L2 grid");

  Rng rng(options.seed);
  LogregData fit_part{data.features, data.positives, data.negatives};
  LogregData held_part{data.features, Eigen::VectorXd::Zero(rows), Eigen::VectorXd::Zero(rows)};
  for (Eigen::Index j = 0; j < rows; ++j) {
    std::binomial_distribution<long> hp(static_cast<long>(std::llround(data.positives(j))), options.holdout);
    std::binomial_distribution<long> hn(static_cast<long>(std::llround(data.negatives(j))), options.holdout);
    held_part.positives(j) = static_cast<double>(hp(rng));
    held_part.negatives(j) = static_cast<double>(hn(rng));
  }
  fit_part.positives -= held_part.positives;
  fit_part.negatives -= held_part.negatives;

  LogregModel out;
  out.l2 = options.l2_grid.front();
  const bool can_select = options.l2_grid.size() > 1 && fit_part.positives.sum() > 0 &&
                          fit_part.negatives.sum() > 0 &&
                          held_part.positives.sum() + held_part.negatives.sum() > 0;
  if (can_select) {
    double best = std::numeric_limits<double>::infinity();
    for (double l2 : options.l2_grid) {
      const Eigen::VectorXd params = detail::fit_logreg_gd(fit_part, l2, options);
      const double held = detail::logreg_objective(held_part, params, 0.0, nullptr);
      if (held < best) {
        best = held;
        out.l2 = l2;
      }
    }
    out.heldout_logloss = best;
  }
  const Eigen::VectorXd params = detail::fit_logreg_gd(data, out.l2, options);
  const Eigen::Index p = data.features.cols();
  out.weights = params.head(p);
  out.intercept = params(p);
  return out;
}

/// Per-(user, item) propensities from an observation indicator matrix
/// (|U| x |I|, nonzero = observed) and per-item covariates (|I| x p). The
/// model is shared across users, so every row of the result is identical.
inline Eigen::MatrixXd fit_logreg_propensities(const Eigen::MatrixXd& observed,
                                               const Eigen::MatrixXd& item_covariates,
                                               const LogregOptions& options = {}) {
  if (observed.cols() != item_covariates.rows()) {
    throw ValidationError("covariate rows must match the item count");
  }
  LogregData data{item_covariates, Eigen::VectorXd::Zero(observed.cols()),
                  Eigen::VectorXd::Zero(observed.cols())};
  for (Eigen::Index i = 0; i < observed.cols(); ++i) {
    const double pos = static_cast<double>((observed.col(i).array() != 0.0).count());
    data.positives(i) = pos;
    data.negatives(i) = static_cast<double>(observed.rows()) - pos;
  }
  const LogregModel model = fit_logistic_regression(data, options);
  Eigen::MatrixXd rho(observed.rows(), observed.cols());
  for (Eigen::Index i = 0; i < observed.cols(); ++i) {
    rho.col(i).setConstant(std::clamp(model.probability(item_covariates.row(i)), options.rho_min, 1.0));
  }
  return rho;
}

}  // namespace pebias

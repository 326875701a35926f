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

// Fully-synthetic user-topic preferences and MNAR observation sampling.
//
// Ratings come from Gaussian latent factors: S = P Q^T is binned into five
// equal-mass levels. Observation probabilities mix a positivity-biased term
// with a uniform one:
//
//   rho_{u,t} = alpha * k * decay^(5 - y_{u,t}) + (1 - alpha) * sparsity
//
// where k is set so that the mean rho over eligible cells equals sparsity.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/seeding.hpp"

namespace pebias {

struct SynthConfig {
  int num_users = 1000;
  int num_topics = 50;
  int dim = 10;
  double alpha = 1.0;
  double sparsity = 0.05;
  double decay = 0.5;
  double test_rate = 0.05;
  double rho_min = kDefaultRhoMin;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("synth config: " + what); };
    if (num_users < 1) fail("num_users must be positive");
    if (num_topics < 1) fail("num_topics must be positive");
    if (dim < 1) fail("dim must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
    if (!(sparsity > 0.0 && sparsity <= 1.0)) fail("sparsity must lie in (0, 1]");
    if (!(decay > 0.0 && decay < 1.0)) fail("decay must lie in (0, 1)");
    if (!(test_rate > 0.0 && test_rate < 1.0)) fail("test_rate must lie in (0, 1)");
    if (!(rho_min > 0.0 && rho_min <= 1.0)) fail("rho_min must lie in (0, 1]");
  }
};

/// Cells already claimed by another split (true = excluded).
using CellMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline FullPreferenceMatrix generate_full_preferences(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd p(config.num_users, config.dim);
  Eigen::MatrixXd q(config.num_topics, config.dim);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = normal(rng);
  const Eigen::MatrixXd scores = p * q.transpose();

  // Equal-mass quantile binning over all cells. Stable sort keeps ties in
  // storage order so the result is fully deterministic.
  const auto n = static_cast<std::size_t>(scores.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.data()[a] < scores.data()[b];
  });
  FullPreferenceMatrix y;
  y.users = sequential_users(static_cast<std::size_t>(config.num_users));
  y.values.resize(config.num_users, config.num_topics);
  for (std::size_t rank = 0; rank < n; ++rank) {
    const auto level = 1 + (rank * kNumLevels) / n;
    y.values.data()[order[rank]] = static_cast<double>(level);
  }
  return y;
}

inline CellMask cell_mask(const FullPreferenceMatrix& y, const TopicInteractionTable& table) {
  CellMask mask = CellMask::Constant(y.values.rows(), y.values.cols(), false);
  for (const auto& row : table.rows) {
    auto u = y.users.find(row.user);
    if (!u || row.topic < 0 || row.topic >= y.values.cols()) {
      throw ValidationError("table cell outside preference matrix: " + row.user);
    }
    mask(static_cast<Eigen::Index>(*u), row.topic) = true;
  }
  return mask;
}

/// MCAR sample: every cell kept independently with probability `rate`.
/// Rows come out ordered by user index, then topic.
inline TopicInteractionTable sample_unbiased_test(const FullPreferenceMatrix& y, double rate,
                                                  std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("test rate must lie in (0, 1]");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  TopicInteractionTable out;
  for (Eigen::Index u = 0; u < y.values.rows(); ++u) {
    for (Eigen::Index t = 0; t < y.values.cols(); ++t) {
      if (unif(rng) < rate) {
        out.add({y.users.key(static_cast<std::size_t>(u)), static_cast<TopicId>(t), y.values(u, t)});
      }
    }
  }
  return out;
}

struct MnarSample {
  TopicInteractionTable train;
  PropensityModel truth;  // per-cell, exactly the probabilities drawn with
};

/// Largest target sparsity for which the positivity-biased mixture keeps
/// every rho <= 1.
inline double max_feasible_sparsity(double alpha, double kernel_max, double kernel_mean) {
  return 1.0 / (alpha * kernel_max / kernel_mean + (1.0 - alpha));
}

inline MnarSample sample_mnar_observations(const FullPreferenceMatrix& y,
                                           const SynthConfig& config,
                                           const CellMask& excluded = CellMask()) {
  config.validate();
  const Eigen::Index rows = y.values.rows();
  const Eigen::Index cols = y.values.cols();
  const bool has_mask = excluded.size() > 0;
  if (has_mask && (excluded.rows() != rows || excluded.cols() != cols)) {
    throw ConfigError("exclusion mask shape does not match the preference matrix");
  }

  const Eigen::MatrixXd kernel = y.values.unaryExpr(
      [&](double v) { return std::pow(config.decay, kNumLevels - v); });
  double kernel_sum = 0.0;
  double kernel_max = 0.0;
  std::size_t eligible = 0;
  for (Eigen::Index u = 0; u < rows; ++u) {
    for (Eigen::Index t = 0; t < cols; ++t) {
      if (has_mask && excluded(u, t)) continue;
      kernel_sum += kernel(u, t);
      kernel_max = std::max(kernel_max, kernel(u, t));
      ++eligible;
    }
  }
  if (eligible == 0) throw EmptyInput("no cells left for MNAR sampling");
  const double kernel_mean = kernel_sum / static_cast<double>(eligible);
  const double k = config.sparsity / kernel_mean;
  const double peak = config.alpha * k * kernel_max + (1.0 - config.alpha) * config.sparsity;
  if (peak > 1.0) {
    std::ostringstream msg;
    msg << "sparsity " << config.sparsity << " infeasible for alpha " << config.alpha
        << " and decay " << config.decay << "; maximal feasible sparsity is "
        << max_feasible_sparsity(config.alpha, kernel_max, kernel_mean);
    throw ConfigError(msg.str());
  }

  Eigen::MatrixXd rho = (config.alpha * k) * kernel;
  rho.array() += (1.0 - config.alpha) * config.sparsity;
  MnarSample out{{}, PropensityModel::per_cell(y.users, std::move(rho), config.rho_min)};
  const Eigen::MatrixXd& clipped = out.truth.cells();

  Rng rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index u = 0; u < rows; ++u) {
    for (Eigen::Index t = 0; t < cols; ++t) {
      if (has_mask && excluded(u, t)) continue;
      if (unif(rng) < clipped(u, t)) {
        out.train.add({y.users.key(static_cast<std::size_t>(u)), static_cast<TopicId>(t), y.values(u, t)});
      }
    }
  }
  return out;
}

}  // namespace pebias

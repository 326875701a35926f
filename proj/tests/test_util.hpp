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

// Shared fixtures for the unit and acceptance suites.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pebias.hpp"

namespace pebias::testing {

/// A fully specified small problem: ratings, predictions and per-cell rho.
struct SmallInstance {
  FullPreferenceMatrix y;
  DensePredictor model;
  Eigen::MatrixXd rho;

  Eigen::Index rows() const { return y.values.rows(); }
  Eigen::Index cols() const { return y.values.cols(); }
  PropensityModel props() const { return PropensityModel::per_cell(y.users, rho, 1e-6); }
};

/// Random instance up to 3x3 with integer ratings, real predictions and
/// rho uniform in [0.05, 1]. With `correlated`, rho increases with y.
inline SmallInstance random_instance(Rng& rng, bool correlated) {
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<int> level(1, 5);
  std::uniform_real_distribution<double> pred(1.0, 5.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int r = dim(rng);
  int c = dim(rng);
  if (r * c == 1) c = 2;
  SmallInstance inst;
  inst.y.users = sequential_users(static_cast<std::size_t>(r));
  inst.y.values.resize(r, c);
  inst.model.users = inst.y.users;
  inst.model.values.resize(r, c);
  inst.rho.resize(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      inst.y.values(i, j) = level(rng);
      inst.model.values(i, j) = pred(rng);
      if (correlated) {
        inst.rho(i, j) = 0.05 + 0.95 * (0.85 * (inst.y.values(i, j) - 1.0) / 4.0 + 0.15 * unit(rng));
      } else {
        inst.rho(i, j) = 0.05 + 0.95 * unit(rng);
      }
    }
  }
  return inst;
}

/// Sum over all 2^(rows*cols) observation masks of P(mask) * f(observed),
/// skipping the empty mask when `skip_empty` (its probability is returned
/// through `empty_probability`).
inline double expectation_over_masks(const SmallInstance& inst,
                                     const std::function<double(const TopicInteractionTable&)>& f,
                                     bool skip_empty = false, double* empty_probability = nullptr) {
  const Eigen::Index n = inst.rows() * inst.cols();
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double p = 1.0;
    TopicInteractionTable obs;
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index i = k / inst.cols();
      const Eigen::Index j = k % inst.cols();
      const bool on = (mask >> k) & 1u;
      p *= on ? inst.rho(i, j) : 1.0 - inst.rho(i, j);
      if (on) obs.add({inst.y.users.key(static_cast<std::size_t>(i)), static_cast<TopicId>(j), inst.y.values(i, j)});
    }
    if (obs.empty() && skip_empty) {
      if (empty_probability != nullptr) *empty_probability = p;
      continue;
    }
    total += p * f(obs);
  }
  return total;
}

/// Synthetic topic ratings with a planted low-rank structure, for training tests.
inline TopicInteractionTable planted_ratings(int users, int topics, double density, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd p(users, 2), q(topics, 2);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = g(rng);
  TopicInteractionTable out;
  for (int u = 0; u < users; ++u) {
    for (int t = 0; t < topics; ++t) {
      if (unit(rng) >= density) continue;
      const double y = std::clamp(3.0 + p.row(u).dot(q.row(t)), 1.0, 5.0);
      out.add({"u" + std::to_string(u), t, y});
    }
  }
  return out;
}

}  // namespace pebias::testing

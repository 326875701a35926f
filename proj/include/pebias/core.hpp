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

// Shared data types: rating tables, id indexing, topic assignments,
// propensity models and the factor model every estimator produces.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "pebias/errors.hpp"

namespace pebias {

inline constexpr double kRatingMin = 1.0;
inline constexpr double kRatingMax = 5.0;
inline constexpr int kNumLevels = 5;
inline constexpr double kDefaultRhoMin = 0.01;

using TopicId = std::int32_t;

inline void warn(const std::string& message) {
  std::clog << "pebias: warning: " << message << '\n';
}

/// Discrete level in {1..5}: nearest integer, halves rounded away from zero.
inline int rating_level(double rating) {
  const double r = std::round(rating);  // std::round rounds halves away from 0
  return static_cast<int>(std::clamp(r, kRatingMin, kRatingMax));
}

inline double clamp_rating(double value) {
  return std::clamp(value, kRatingMin, kRatingMax);
}

inline bool rating_in_range(double rating) {
  return std::isfinite(rating) && rating >= kRatingMin && rating <= kRatingMax;
}

/// Bijection between external keys and dense 0-based indices. Indices are
/// handed out in first-insertion order, so identical input sequences always
/// produce identical maps.
template <class Key>
class BasicIndex {
 public:
  BasicIndex() = default;
  explicit BasicIndex(const std::vector<Key>& keys) {
    for (const auto& k : keys) intern(k);
  }

  std::size_t intern(const Key& key) {
    auto [it, inserted] = lookup_.try_emplace(key, keys_.size());
    if (inserted) keys_.push_back(key);
    return it->second;
  }

  std::optional<std::size_t> find(const Key& key) const {
    auto it = lookup_.find(key);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const Key& key) const { return lookup_.count(key) > 0; }

  const Key& key(std::size_t index) const { return keys_.at(index); }
  const std::vector<Key>& keys() const { return keys_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  friend bool operator==(const BasicIndex& a, const BasicIndex& b) {
    return a.keys_ == b.keys_;
  }

 private:
  std::vector<Key> keys_;
  std::unordered_map<Key, std::size_t> lookup_;
};

using IdIndex = BasicIndex<std::string>;
using TopicIndex = BasicIndex<TopicId>;

/// Index of users "u0".."u{n-1}" in order; used by the synthetic generators.
inline IdIndex sequential_users(std::size_t n, const std::string& prefix = "u") {
  IdIndex index;
  for (std::size_t i = 0; i < n; ++i) index.intern(prefix + std::to_string(i));
  return index;
}

struct Interaction {
  std::string user;
  std::string item;
  double rating = 0.0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct TopicRating {
  std::string user;
  TopicId topic = 0;
  double rating = 0.0;

  int level() const { return rating_level(rating); }
  friend bool operator==(const TopicRating&, const TopicRating&) = default;
};

template <class Row>
struct Table {
  std::vector<Row> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  void add(Row row) { rows.push_back(std::move(row)); }

  friend bool operator==(const Table&, const Table&) = default;
};

using InteractionTable = Table<Interaction>;
using TopicInteractionTable = Table<TopicRating>;

inline const std::string& entity_of(const Interaction& row) { return row.item; }
inline TopicId entity_of(const TopicRating& row) { return row.topic; }

template <class Row>
using EntityKey = std::remove_cvref_t<decltype(entity_of(std::declval<const Row&>()))>;

template <class Row>
struct IndexMaps {
  IdIndex users;
  BasicIndex<EntityKey<Row>> entities;
};

template <class Row>
IndexMaps<Row> build_index_maps(const Table<Row>& table) {
  if (table.empty()) throw EmptyInput("cannot index an empty table");
  IndexMaps<Row> maps;
  for (const auto& row : table.rows) {
    maps.users.intern(row.user);
    maps.entities.intern(entity_of(row));
  }
  return maps;
}

struct Violation {
  std::size_t row = 0;  // 1-based position within the table
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

template <class Row>
std::vector<Violation> validate(const Table<Row>& table) {
  std::vector<Violation> out;
  std::set<std::pair<std::string, EntityKey<Row>>> seen;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t n = i + 1;
    if (!rating_in_range(row.rating)) {
      out.push_back({n, "rating out of range, row " + std::to_string(n)});
    }
    if constexpr (std::is_same_v<Row, TopicRating>) {
      if (row.topic < 0) out.push_back({n, "negative topic id, row " + std::to_string(n)});
    }
    if (!seen.emplace(row.user, entity_of(row)).second) {
      out.push_back({n, "duplicate pair, row " + std::to_string(n)});
    }
  }
  return out;
}

template <class Row>
bool is_valid(const Table<Row>& table) {
  return validate(table).empty();
}

/// item -> non-empty set of topic ids; topic ids dense in 0..num_topics-1.
class TopicAssignment {
 public:
  void assign(const std::string& item, TopicId topic) {
    if (topic < 0) throw ValidationError("negative topic id for item " + item);
    const std::size_t idx = items_.intern(item);
    if (idx == topics_.size()) topics_.emplace_back();
    auto& set = topics_[idx];
    if (std::find(set.begin(), set.end(), topic) == set.end()) {
      set.insert(std::upper_bound(set.begin(), set.end(), topic), topic);
    }
    num_topics_ = std::max<std::size_t>(num_topics_, static_cast<std::size_t>(topic) + 1);
  }

  /// nullptr when the item has no assignment.
  const std::vector<TopicId>* topics_of(const std::string& item) const {
    auto idx = items_.find(item);
    return idx ? &topics_[*idx] : nullptr;
  }

  const IdIndex& items() const { return items_; }
  const std::vector<TopicId>& topics_at(std::size_t item_index) const {
    return topics_.at(item_index);
  }
  std::size_t num_items() const { return items_.size(); }
  std::size_t num_topics() const { return num_topics_; }

  /// Items per topic.
  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(num_topics_);
    for (std::size_t i = 0; i < topics_.size(); ++i) {
      for (TopicId t : topics_[i]) out[static_cast<std::size_t>(t)].push_back(i);
    }
    return out;
  }

  std::vector<Violation> validate() const {
    std::vector<Violation> out;
    std::vector<bool> used(num_topics_, false);
    for (std::size_t i = 0; i < topics_.size(); ++i) {
      if (topics_[i].empty()) out.push_back({i + 1, "item without topic: " + items_.key(i)});
      for (TopicId t : topics_[i]) used[static_cast<std::size_t>(t)] = true;
    }
    for (std::size_t t = 0; t < used.size(); ++t) {
      if (!used[t]) out.push_back({0, "topic " + std::to_string(t) + " has no items"});
    }
    return out;
  }

  friend bool operator==(const TopicAssignment&, const TopicAssignment&) = default;

 private:
  IdIndex items_;
  std::vector<std::vector<TopicId>> topics_;
  std::size_t num_topics_ = 0;
};

/// Dense ground-truth user x topic ratings (synthetic settings only).
struct FullPreferenceMatrix {
  IdIndex users;
  Eigen::MatrixXd values;

  std::size_t num_users() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t num_topics() const { return static_cast<std::size_t>(values.cols()); }
};

/// Observation probabilities rho_{u,t}. All stored values are clipped to
/// [rho_min, 1]; a per-cell model may leave cells unavailable (NaN).
class PropensityModel {
 public:
  enum class Kind { kConstant, kPerLevel, kPerCell };

  static PropensityModel constant(double rho, double rho_min = kDefaultRhoMin) {
    PropensityModel m(rho_min);
    m.repr_ = Constant{m.clip(rho)};
    return m;
  }

  /// levels[r - 1] holds rho for level r.
  static PropensityModel per_level(const std::array<double, kNumLevels>& levels,
                                   double rho_min = kDefaultRhoMin) {
    PropensityModel m(rho_min);
    PerLevel p;
    for (int r = 0; r < kNumLevels; ++r) p.rho[r] = m.clip(levels[r]);
    m.repr_ = p;
    return m;
  }

  static PropensityModel per_cell(IdIndex users, Eigen::MatrixXd rho,
                                  double rho_min = kDefaultRhoMin) {
    if (static_cast<std::size_t>(rho.rows()) != users.size()) {
      throw ValidationError("per-cell propensity rows do not match user count");
    }
    PropensityModel m(rho_min);
    rho = rho.unaryExpr([&m](double v) { return m.clip(v); });
    m.repr_ = PerCell{std::move(users), std::move(rho)};
    return m;
  }

  Kind kind() const { return static_cast<Kind>(repr_.index()); }
  double rho_min() const { return rho_min_; }

  std::optional<double> find(const std::string& user, TopicId topic, double rating) const {
    return std::visit(
        [&](const auto& r) -> std::optional<double> { return lookup(r, user, topic, rating); },
        repr_);
  }

  double rho(const std::string& user, TopicId topic, double rating) const {
    auto v = find(user, topic, rating);
    if (!v) {
      throw MissingPropensity("no propensity for user " + user + ", topic " +
                              std::to_string(topic));
    }
    return *v;
  }

  /// Every stored rho multiplied by `factor`, then re-clipped.
  PropensityModel scaled(double factor) const {
    PropensityModel m(rho_min_);
    m.repr_ = std::visit(
        [&](auto r) -> Repr {
          if constexpr (std::is_same_v<decltype(r), Constant>) {
            r.rho = m.clip(r.rho * factor);
          } else if constexpr (std::is_same_v<decltype(r), PerLevel>) {
            for (double& v : r.rho) v = m.clip(v * factor);
          } else {
            r.rho = r.rho.unaryExpr([&](double v) { return m.clip(v * factor); });
          }
          return r;
        },
        repr_);
    return m;
  }

  const std::array<double, kNumLevels>& levels() const {
    return std::get<PerLevel>(repr_).rho;
  }
  const Eigen::MatrixXd& cells() const { return std::get<PerCell>(repr_).rho; }
  const IdIndex& cell_users() const { return std::get<PerCell>(repr_).users; }

 private:
  struct Constant {
    double rho;
  };
  struct PerLevel {
    std::array<double, kNumLevels> rho{};
  };
  struct PerCell {
    IdIndex users;
    Eigen::MatrixXd rho;
  };
  using Repr = std::variant<Constant, PerLevel, PerCell>;

  explicit PropensityModel(double rho_min) : rho_min_(rho_min) {
    if (!(rho_min > 0.0 && rho_min <= 1.0)) {
      throw ConfigError("rho_min must lie in (0, 1]");
    }
  }

  // NaN marks an unavailable cell and is kept as-is.
  double clip(double v) const {
    if (std::isnan(v)) return v;
    return std::clamp(v, rho_min_, 1.0);
  }

  static std::optional<double> lookup(const Constant& c, const std::string&, TopicId, double) {
    return c.rho;
  }
  static std::optional<double> lookup(const PerLevel& p, const std::string&, TopicId,
                                      double rating) {
    return p.rho[rating_level(rating) - 1];
  }
  static std::optional<double> lookup(const PerCell& p, const std::string& user,
                                      TopicId topic, double) {
    auto u = p.users.find(user);
    if (!u || topic < 0 || topic >= p.rho.cols()) return std::nullopt;
    const double v = p.rho(static_cast<Eigen::Index>(*u), topic);
    if (std::isnan(v)) return std::nullopt;
    return v;
  }

  double rho_min_;
  Repr repr_ = Constant{1.0};
};

/// Anything that scores (user, topic) pairs.
template <class M>
concept Predictor = requires(const M& m, const std::string& user, TopicId t) {
  { m.predict(user, t) } -> std::convertible_to<double>;
};

/// Biased matrix factorization: yhat = P_u . Q_t + b_u + b_t + mu. Users or
/// topics outside the model contribute nothing beyond the terms they have.
struct FactorModel {
  IdIndex users;
  Eigen::MatrixXd user_factors;   // |U| x d
  Eigen::MatrixXd topic_factors;  // |T| x d
  Eigen::VectorXd user_bias;
  Eigen::VectorXd topic_bias;
  double global_mean = 0.0;

  int dim() const { return static_cast<int>(user_factors.cols()); }
  std::size_t num_users() const { return users.size(); }
  std::size_t num_topics() const { return static_cast<std::size_t>(topic_factors.rows()); }

  double predict_index(std::size_t u, TopicId t) const {
    return user_factors.row(static_cast<Eigen::Index>(u)).dot(topic_factors.row(t)) +
           user_bias(static_cast<Eigen::Index>(u)) + topic_bias(t) + global_mean;
  }

  double predict(const std::string& user, TopicId t) const {
    auto u = users.find(user);
    const bool known_topic = t >= 0 && static_cast<std::size_t>(t) < num_topics();
    if (u && known_topic) return predict_index(*u, t);
    double y = global_mean;
    if (u) y += user_bias(static_cast<Eigen::Index>(*u));
    if (known_topic) y += topic_bias(t);
    return y;
  }

  bool all_finite() const {
    return user_factors.allFinite() && topic_factors.allFinite() && user_bias.allFinite() &&
           topic_bias.allFinite() && std::isfinite(global_mean);
  }
};

/// Fixed prediction matrix; handy for evaluating estimators in isolation.
struct DensePredictor {
  IdIndex users;
  Eigen::MatrixXd values;

  double predict(const std::string& user, TopicId t) const {
    auto u = users.find(user);
    if (!u || t < 0 || t >= values.cols()) {
      throw ValidationError("no prediction for user " + user + ", topic " + std::to_string(t));
    }
    return values(static_cast<Eigen::Index>(*u), t);
  }
};

enum class LossKind { kSquared, kAbsolute };

inline double pointwise_loss(double prediction, double truth, LossKind kind) {
  const double e = prediction - truth;
  return kind == LossKind::kSquared ? e * e : std::abs(e);
}

/// d loss / d prediction. The absolute-loss subgradient at zero is 0.
inline double pointwise_loss_grad(double prediction, double truth, LossKind kind) {
  const double e = prediction - truth;
  if (kind == LossKind::kSquared) return 2.0 * e;
  return e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
}

}  // namespace pebias

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

// Rating-prediction loss estimators (ideal, naive, IPS, SNIPS) and
// mini-batch Adam training of biased matrix factorization, optionally
// inverse-propensity weighted.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/seeding.hpp"

namespace pebias {

/// Mean loss over every cell of the full matrix.
template <Predictor M>
double loss_ideal(const FullPreferenceMatrix& y, const M& model, LossKind kind) {
  if (y.values.size() == 0) throw EmptyInput("empty preference matrix");
  double sum = 0.0;
  for (Eigen::Index u = 0; u < y.values.rows(); ++u) {
    const auto& user = y.users.key(static_cast<std::size_t>(u));
    for (Eigen::Index t = 0; t < y.values.cols(); ++t) {
      sum += pointwise_loss(model.predict(user, static_cast<TopicId>(t)), y.values(u, t), kind);
    }
  }
  return sum / static_cast<double>(y.values.size());
}

/// Mean loss over observed pairs only; biased under MNAR observation.
template <Predictor M>
double loss_naive(const TopicInteractionTable& observed, const M& model, LossKind kind) {
  if (observed.empty()) throw EmptyInput("naive loss over an empty observed set");
  double sum = 0.0;
  for (const auto& r : observed.rows) sum += pointwise_loss(model.predict(r.user, r.topic), r.rating, kind);
  return sum / static_cast<double>(observed.size());
}

/// Inverse-propensity-scored loss: (1 / num_cells) * sum_{observed} L / rho.
template <Predictor M>
double loss_ips(const TopicInteractionTable& observed, const M& model,
                const PropensityModel& props, double num_cells, LossKind kind) {
  if (!(num_cells > 0.0)) throw ConfigError("num_cells must be positive");
  double sum = 0.0;
  for (const auto& r : observed.rows) {
    const double rho = props.rho(r.user, r.topic, r.rating);
    sum += pointwise_loss(model.predict(r.user, r.topic), r.rating, kind) / rho;
  }
  return sum / num_cells;
}

/// Self-normalized IPS: sum L / rho divided by sum 1 / rho. Weights are
/// taken relative to the first row's rho, so a constant rho gives weights
/// of exactly 1 and the plain mean.
template <Predictor M>
double snips_loss(const TopicInteractionTable& validation, const M& model,
                  const PropensityModel& props, LossKind kind) {
  if (validation.empty()) throw EmptyInput("SNIPS over an empty validation set");
  const auto& first = validation.rows.front();
  const double reference = props.rho(first.user, first.topic, first.rating);
  double num = 0.0;
  double den = 0.0;
  for (const auto& r : validation.rows) {
    const double w = reference / props.rho(r.user, r.topic, r.rating);
    num += w * pointwise_loss(model.predict(r.user, r.topic), r.rating, kind);
    den += w;
  }
  return num / den;
}

struct TrainConfig {
  int dim = 10;
  double l2 = 1e-3;
  double learning_rate = 1e-2;
  int batch_size = 128;
  int epochs = 30;
  LossKind loss = LossKind::kSquared;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (dim < 1) throw ConfigError("train config: dim must be >= 1");
    if (!(l2 >= 0.0)) throw ConfigError("train config: l2 must be >= 0");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("train config: Adam decay constants must lie in [0, 1)");
    }
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// The user set and topic count a model is sized for. Training tables may
/// cover only part of it (cross-validation folds, sparse users).
struct TrainUniverse {
  IdIndex users;
  std::size_t num_topics = 0;

  double num_cells() const { return static_cast<double>(users.size() * num_topics); }
};

template <class... Tables>
TrainUniverse universe_of(const Tables&... tables) {
  TrainUniverse u;
  auto absorb = [&u](const TopicInteractionTable& t) {
    for (const auto& r : t.rows) {
      u.users.intern(r.user);
      u.num_topics = std::max(u.num_topics, static_cast<std::size_t>(r.topic) + 1);
    }
  };
  (absorb(tables), ...);
  return u;
}

/// Gradient of one example's objective
///   w * L(yhat, y) + l2 * (|P_u|^2 + |Q_t|^2 + b_u^2 + b_t^2).
struct ExampleGradient {
  Eigen::VectorXd user_factor;
  Eigen::VectorXd topic_factor;
  double user_bias = 0.0;
  double topic_bias = 0.0;
  double global_mean = 0.0;
};

inline double example_objective(const FactorModel& m, std::size_t u, TopicId t, double rating,
                                double weight, double l2, LossKind kind) {
  const auto ui = static_cast<Eigen::Index>(u);
  const double reg = m.user_factors.row(ui).squaredNorm() + m.topic_factors.row(t).squaredNorm() +
                     m.user_bias(ui) * m.user_bias(ui) + m.topic_bias(t) * m.topic_bias(t);
  return weight * pointwise_loss(m.predict_index(u, t), rating, kind) + l2 * reg;
}

inline ExampleGradient example_gradient(const FactorModel& m, std::size_t u, TopicId t,
                                        double rating, double weight, double l2, LossKind kind) {
  const auto ui = static_cast<Eigen::Index>(u);
  const double g = weight * pointwise_loss_grad(m.predict_index(u, t), rating, kind);
  ExampleGradient out;
  out.user_factor = g * m.topic_factors.row(t).transpose() + 2.0 * l2 * m.user_factors.row(ui).transpose();
  out.topic_factor = g * m.user_factors.row(ui).transpose() + 2.0 * l2 * m.topic_factors.row(t).transpose();
  out.user_bias = g + 2.0 * l2 * m.user_bias(ui);
  out.topic_bias = g + 2.0 * l2 * m.topic_bias(t);
  out.global_mean = g;
  return out;
}

struct MfFit {
  FactorModel model;
  /// Training-set estimator value after each epoch: the naive loss, or the
  /// IPS loss when trained with propensities.
  std::vector<double> loss_trace;
};

namespace detail {

// Adam state for a row-indexed parameter block. Only rows touched by the
// current batch are stepped; the bias correction uses the global step.
class LazyAdamBlock {
 public:
  LazyAdamBlock(Eigen::Index rows, Eigen::Index cols)
      : m_(Eigen::MatrixXd::Zero(rows, cols)),
        v_(Eigen::MatrixXd::Zero(rows, cols)),
        grad_(Eigen::MatrixXd::Zero(rows, cols)),
        touched_(static_cast<std::size_t>(rows), 0) {}

  template <class Derived>
  void accumulate(Eigen::Index row, const Eigen::MatrixBase<Derived>& g) {
    grad_.row(row) += g;
    if (!touched_[static_cast<std::size_t>(row)]) {
      touched_[static_cast<std::size_t>(row)] = 1;
      rows_.push_back(row);
    }
  }

  void step(Eigen::MatrixXd& params, double scale, const TrainConfig& c, double lr_t) {
    for (Eigen::Index r : rows_) {
      const Eigen::RowVectorXd g = grad_.row(r) * scale;
      m_.row(r) = c.beta1 * m_.row(r) + (1.0 - c.beta1) * g;
      v_.row(r) = c.beta2 * v_.row(r) + (1.0 - c.beta2) * g.cwiseProduct(g);
      params.row(r).array() -=
          lr_t * m_.row(r).array() / (v_.row(r).array().sqrt() + c.epsilon);
      grad_.row(r).setZero();
      touched_[static_cast<std::size_t>(r)] = 0;
    }
    rows_.clear();
  }

 private:
  Eigen::MatrixXd m_, v_, grad_;
  std::vector<char> touched_;
  std::vector<Eigen::Index> rows_;
};

}  // namespace detail

/// Mini-batch Adam on the per-example objective (see ExampleGradient),
/// averaged over each batch. With `props`, every example is weighted by
/// 1 / rho (MF-IPS); without, all weights are 1 (naive MF).
inline MfFit train_mf(const TopicInteractionTable& train, const TrainConfig& config,
                      const PropensityModel* props, const TrainUniverse& universe) {
  config.validate();
  if (train.empty()) throw EmptyInput("cannot train on an empty table");

  struct Example {
    std::size_t user;
    TopicId topic;
    double rating;
    double weight;
  };
  std::vector<Example> examples;
  examples.reserve(train.size());
  double rating_sum = 0.0;
  for (const auto& r : train.rows) {
    auto u = universe.users.find(r.user);
    if (!u || r.topic < 0 || static_cast<std::size_t>(r.topic) >= universe.num_topics) {
      throw ValidationError("training row outside the model universe: " + r.user);
    }
    const double w = props ? 1.0 / props->rho(r.user, r.topic, r.rating) : 1.0;
    examples.push_back({*u, r.topic, r.rating, w});
    rating_sum += r.rating;
  }

  const auto nu = static_cast<Eigen::Index>(universe.users.size());
  const auto nt = static_cast<Eigen::Index>(universe.num_topics);
  const Eigen::Index d = config.dim;

  MfFit fit;
  FactorModel& m = fit.model;
  m.users = universe.users;
  Rng rng(config.seed);
  std::normal_distribution<double> init(0.0, 0.1);
  m.user_factors.resize(nu, d);
  m.topic_factors.resize(nt, d);
  for (Eigen::Index i = 0; i < m.user_factors.size(); ++i) m.user_factors.data()[i] = init(rng);
  for (Eigen::Index i = 0; i < m.topic_factors.size(); ++i) m.topic_factors.data()[i] = init(rng);
  m.user_bias = Eigen::VectorXd::Zero(nu);
  m.topic_bias = Eigen::VectorXd::Zero(nt);
  m.global_mean = rating_sum / static_cast<double>(examples.size());

  // Biases and the global mean ride along as single-column blocks.
  detail::LazyAdamBlock p_state(nu, d), q_state(nt, d), bu_state(nu, 1), bt_state(nt, 1), mu_state(1, 1);
  Eigen::MatrixXd bu = m.user_bias, bt = m.topic_bias, mu = Eigen::MatrixXd::Constant(1, 1, m.global_mean);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const double l2 = config.l2;
  std::int64_t step = 0;
  Eigen::RowVectorXd gp(d), gq(d);
  Eigen::Matrix<double, 1, 1> scalar;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      for (std::size_t k = begin; k < end; ++k) {
        const Example& ex = examples[order[k]];
        const auto u = static_cast<Eigen::Index>(ex.user);
        const Eigen::Index t = ex.topic;
        const double pred = m.user_factors.row(u).dot(m.topic_factors.row(t)) + bu(u, 0) + bt(t, 0) + mu(0, 0);
        const double g = ex.weight * pointwise_loss_grad(pred, ex.rating, config.loss);
        gp = g * m.topic_factors.row(t) + (2.0 * l2) * m.user_factors.row(u);
        gq = g * m.user_factors.row(u) + (2.0 * l2) * m.topic_factors.row(t);
        p_state.accumulate(u, gp);
        q_state.accumulate(t, gq);
        scalar(0, 0) = g + 2.0 * l2 * bu(u, 0);
        bu_state.accumulate(u, scalar);
        scalar(0, 0) = g + 2.0 * l2 * bt(t, 0);
        bt_state.accumulate(t, scalar);
        scalar(0, 0) = g;
        mu_state.accumulate(0, scalar);
      }
      ++step;
      const double lr_t = config.learning_rate *
                          std::sqrt(1.0 - std::pow(config.beta2, static_cast<double>(step))) /
                          (1.0 - std::pow(config.beta1, static_cast<double>(step)));
      const double scale = 1.0 / static_cast<double>(end - begin);
      p_state.step(m.user_factors, scale, config, lr_t);
      q_state.step(m.topic_factors, scale, config, lr_t);
      bu_state.step(bu, scale, config, lr_t);
      bt_state.step(bt, scale, config, lr_t);
      mu_state.step(mu, scale, config, lr_t);
    }
    m.user_bias = bu.col(0);
    m.topic_bias = bt.col(0);
    m.global_mean = mu(0, 0);

    double loss = 0.0;
    for (const Example& ex : examples) {
      loss += ex.weight * pointwise_loss(m.predict_index(ex.user, ex.topic), ex.rating, config.loss);
    }
    loss /= props ? universe.num_cells() : static_cast<double>(examples.size());
    if (!std::isfinite(loss) || !m.all_finite()) throw DivergenceError(epoch, config.learning_rate);
    fit.loss_trace.push_back(loss);
  }
  return fit;
}

inline MfFit train_mf(const TopicInteractionTable& train, const TrainConfig& config,
                      const PropensityModel* props = nullptr) {
  return train_mf(train, config, props, universe_of(train));
}

}  // namespace pebias

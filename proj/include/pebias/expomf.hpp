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

// Exposure matrix factorization (ExpoMF) adapted to graded ratings.
//
// Each cell carries a latent exposure a_{u,t} ~ Bernoulli(mu_t). Exposed
// cells emit y ~ N(theta_u . beta_t, 1 / lambda_y); unexposed cells emit 0.
// Observed ratings therefore imply exposure, and every unobserved cell is a
// zero whose exposure posterior is inferred. Fit by EM with ridge M-steps.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/estimators.hpp"
#include "pebias/seeding.hpp"

namespace pebias {

struct ExpoMfOptions {
  double lambda_y = 1.0;        // observation-noise precision
  double init_exposure = 0.01;  // initial mu_t
  double tol = 1e-5;            // relative objective change that stops EM
  double init_scale = 0.1;      // stddev of the factor initialization
};

struct ExpoMfModel {
  IdIndex users;
  Eigen::MatrixXd user_factors;   // theta, |U| x d
  Eigen::MatrixXd topic_factors;  // beta, |T| x d
  Eigen::VectorXd exposure_prior; // mu_t
  double lambda_y = 1.0;
  Eigen::MatrixXd exposure_posterior;  // gamma_{u,t} from the last E-step

  int dim() const { return static_cast<int>(user_factors.cols()); }
  std::size_t num_topics() const { return static_cast<std::size_t>(topic_factors.rows()); }

  /// theta_u . beta_t; metrics clamp to the rating scale. Unknown users or
  /// topics score 0.
  double predict(const std::string& user, TopicId t) const {
    auto u = users.find(user);
    if (!u || t < 0 || static_cast<std::size_t>(t) >= num_topics()) return 0.0;
    return user_factors.row(static_cast<Eigen::Index>(*u)).dot(topic_factors.row(t));
  }
};

struct ExpoMfFit {
  ExpoMfModel model;
  /// MAP objective (log marginal likelihood of the data plus the Gaussian
  /// factor prior) at initialization and after every EM iteration.
  std::vector<double> objective_trace;
};

namespace detail {

inline double gaussian_density_at_zero(double mean, double precision) {
  return std::sqrt(precision / (2.0 * std::numbers::pi)) * std::exp(-0.5 * precision * mean * mean);
}

/// Solves (A + l2 I) x = b, retrying with growing jitter if the
/// factorization fails.
inline Eigen::VectorXd ridge_solve(Eigen::MatrixXd a, double l2, const Eigen::VectorXd& b) {
  a.diagonal().array() += l2;
  double jitter = 1e-10 * std::max(1.0, a.diagonal().mean());
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd x = llt.solve(b);
      if (x.allFinite()) return x;
    }
    if (attempt == 3) break;
    jitter *= 10.0;
    a.diagonal().array() += jitter;
  }
  throw SingularSystem("ridge system stayed singular after 3 jitter retries");
}

}  // namespace detail

inline ExpoMfFit train_expomf(const TopicInteractionTable& train, const TrainConfig& config,
                              const TrainUniverse& universe, const ExpoMfOptions& options = {}) {
  config.validate();
  if (train.empty()) throw EmptyInput("cannot train on an empty table");
  if (!(options.lambda_y > 0.0)) throw ConfigError("lambda_y must be positive");

  const auto nu = static_cast<Eigen::Index>(universe.users.size());
  const auto nt = static_cast<Eigen::Index>(universe.num_topics);
  const Eigen::Index d = config.dim;
  const double lam_y = options.lambda_y;
  const double l2 = config.l2;

  // Dense target / observation matrices over the universe.
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(nu, nt);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> observed =
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nu, nt, false);
  for (const auto& r : train.rows) {
    auto u = universe.users.find(r.user);
    if (!u || r.topic < 0 || r.topic >= nt) {
      throw ValidationError("training row outside the model universe: " + r.user);
    }
    target(static_cast<Eigen::Index>(*u), r.topic) = r.rating;
    observed(static_cast<Eigen::Index>(*u), r.topic) = true;
  }

  ExpoMfFit fit;
  ExpoMfModel& m = fit.model;
  m.users = universe.users;
  m.lambda_y = lam_y;
  Rng rng(config.seed);
  std::normal_distribution<double> init(0.0, options.init_scale);
  m.user_factors.resize(nu, d);
  m.topic_factors.resize(nt, d);
  for (Eigen::Index i = 0; i < m.user_factors.size(); ++i) m.user_factors.data()[i] = init(rng);
  for (Eigen::Index i = 0; i < m.topic_factors.size(); ++i) m.topic_factors.data()[i] = init(rng);
  m.exposure_prior = Eigen::VectorXd::Constant(nt, options.init_exposure);
  m.exposure_posterior = Eigen::MatrixXd::Zero(nu, nt);

  constexpr double kPriorClip = 1e-12;
  const double log_norm = 0.5 * std::log(lam_y / (2.0 * std::numbers::pi));

  auto objective = [&]() {
    const Eigen::MatrixXd pred = m.user_factors * m.topic_factors.transpose();
    long double total = 0.0L;
    for (Eigen::Index t = 0; t < nt; ++t) {
      const double mu = m.exposure_prior(t);
      for (Eigen::Index u = 0; u < nu; ++u) {
        const double p = pred(u, t);
        if (observed(u, t)) {
          const double e = target(u, t) - p;
          total += std::log(mu) + log_norm - 0.5 * lam_y * e * e;
        } else {
          total += std::log(mu * detail::gaussian_density_at_zero(p, lam_y) + (1.0 - mu));
        }
      }
    }
    total -= 0.5L * l2 * (m.user_factors.squaredNorm() + m.topic_factors.squaredNorm());
    return static_cast<double>(total);
  };

  fit.objective_trace.push_back(objective());
  Eigen::MatrixXd& gamma = m.exposure_posterior;

  for (int iter = 0; iter < config.epochs; ++iter) {
    // E-step.
    const Eigen::MatrixXd pred = m.user_factors * m.topic_factors.transpose();
    for (Eigen::Index t = 0; t < nt; ++t) {
      const double mu = m.exposure_prior(t);
      for (Eigen::Index u = 0; u < nu; ++u) {
        if (observed(u, t)) {
          gamma(u, t) = 1.0;
        } else {
          const double num = mu * detail::gaussian_density_at_zero(pred(u, t), lam_y);
          gamma(u, t) = num / (num + (1.0 - mu));
        }
      }
    }

    // M-step: user factors, then topic factors, then exposure priors.
    // Unobserved cells carry target 0, so only observed cells enter b.
    for (Eigen::Index u = 0; u < nu; ++u) {
      const auto& beta = m.topic_factors;
      const Eigen::MatrixXd wb = beta.array().colwise() * gamma.row(u).transpose().array();
      const Eigen::MatrixXd a = lam_y * (beta.transpose() * wb);
      const Eigen::VectorXd b = lam_y * (beta.transpose() * target.row(u).transpose());
      m.user_factors.row(u) = detail::ridge_solve(a, l2, b).transpose();
    }
    for (Eigen::Index t = 0; t < nt; ++t) {
      const auto& theta = m.user_factors;
      const Eigen::MatrixXd wt = theta.array().colwise() * gamma.col(t).array();
      const Eigen::MatrixXd a = lam_y * (theta.transpose() * wt);
      const Eigen::VectorXd b = lam_y * (theta.transpose() * target.col(t));
      m.topic_factors.row(t) = detail::ridge_solve(a, l2, b).transpose();
    }
    m.exposure_prior = gamma.colwise().mean().transpose().cwiseMax(kPriorClip).cwiseMin(1.0 - kPriorClip);

    if (!m.user_factors.allFinite() || !m.topic_factors.allFinite()) {
      throw DivergenceError(iter + 1, 0.0);
    }
    const double obj = objective();
    const double prev = fit.objective_trace.back();
    fit.objective_trace.push_back(obj);
    if (std::abs(obj - prev) < options.tol * std::max(1.0, std::abs(prev))) break;
  }
  return fit;
}

inline ExpoMfFit train_expomf(const TopicInteractionTable& train, const TrainConfig& config,
                              const ExpoMfOptions& options = {}) {
  return train_expomf(train, config, universe_of(train), options);
}

}  // namespace pebias

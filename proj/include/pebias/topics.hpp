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

// Topic discovery from interaction structure alone: user-item bipartite
// graph -> truncated random walks -> skip-gram node embeddings with
// negative sampling -> diagonal Gaussian mixture -> hard topic assignment.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pebias/core.hpp"
#include "pebias/errors.hpp"
#include "pebias/seeding.hpp"

namespace pebias {

using NodeId = std::uint32_t;
using Walk = std::vector<NodeId>;

/// Undirected user-item graph. Node ids: users occupy [0, |U|), items
/// [|U|, |U| + |I|).
struct BipartiteGraph {
  IdIndex users;
  IdIndex items;
  std::vector<std::vector<NodeId>> adjacency;

  std::size_t num_nodes() const { return adjacency.size(); }
  bool is_user(NodeId n) const { return n < users.size(); }
  NodeId item_node(std::size_t item_index) const {
    return static_cast<NodeId>(users.size() + item_index);
  }
  /// "u:<id>" or "i:<id>".
  std::string node_name(NodeId n) const {
    return is_user(n) ? "u:" + users.key(n) : "i:" + items.key(n - users.size());
  }
};

inline BipartiteGraph build_bipartite_graph(const InteractionTable& table) {
  if (table.empty()) throw EmptyInput("cannot build a graph from an empty table");
  BipartiteGraph g;
  for (const auto& r : table.rows) {
    g.users.intern(r.user);
    g.items.intern(r.item);
  }
  g.adjacency.resize(g.users.size() + g.items.size());
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (const auto& r : table.rows) {
    edges.emplace_back(static_cast<NodeId>(*g.users.find(r.user)), g.item_node(*g.items.find(r.item)));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (auto [u, i] : edges) {
    g.adjacency[u].push_back(i);
    g.adjacency[i].push_back(u);
  }
  return g;
}

/// `walks_per_node` rounds; each round starts one walk of `walk_length`
/// nodes from every node. Each walk draws from its own derived stream.
inline std::vector<Walk> generate_walks(const BipartiteGraph& graph, int walks_per_node,
                                        int walk_length, std::uint64_t seed) {
  if (graph.num_nodes() == 0) throw EmptyInput("cannot walk an empty graph");
  if (walks_per_node < 1 || walk_length < 1) {
    throw ConfigError("walks_per_node and walk_length must be positive");
  }
  std::vector<Walk> walks;
  walks.reserve(graph.num_nodes() * static_cast<std::size_t>(walks_per_node));
  const auto n = static_cast<std::uint64_t>(graph.num_nodes());
  for (int round = 0; round < walks_per_node; ++round) {
    for (NodeId start = 0; start < graph.num_nodes(); ++start) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(round) * n + start));
      Walk w{start};
      w.reserve(static_cast<std::size_t>(walk_length));
      while (w.size() < static_cast<std::size_t>(walk_length)) {
        const auto& nbrs = graph.adjacency[w.back()];
        if (nbrs.empty()) break;
        std::uniform_int_distribution<std::size_t> pick(0, nbrs.size() - 1);
        w.push_back(nbrs[pick(rng)]);
      }
      walks.push_back(std::move(w));
    }
  }
  return walks;
}

struct EmbeddingOptions {
  int dim = 32;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;
};

struct EmbeddingTable {
  Eigen::MatrixXd vectors;          // num_nodes x dim (input vectors)
  std::vector<double> loss_trace;   // mean skip-gram loss per (center, context) pair, per epoch

  int dim() const { return static_cast<int>(vectors.cols()); }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// -log(sigmoid(x)), stable for large |x|.
inline double neg_log_sigmoid(double x) {
  return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

}  // namespace detail

/// Skip-gram with negative sampling over the walks. Every (center, context)
/// pair within `window` positions gets one positive update and `negatives`
/// negative updates, with negatives drawn from the unigram^0.75 node
/// distribution. The learning rate decays linearly to 1e-4 of its start.
inline EmbeddingTable train_embeddings(const std::vector<Walk>& walks, std::size_t num_nodes,
                                       const EmbeddingOptions& options) {
  if (walks.empty()) throw EmptyInput("no walks to train on");
  if (options.dim < 1 || options.window < 1 || options.negatives < 0 || options.epochs < 0) {
    throw ConfigError("invalid embedding options");
  }
  const Eigen::Index d = options.dim;
  const auto n = static_cast<Eigen::Index>(num_nodes);
  Rng rng(options.seed);
  std::uniform_real_distribution<double> init(-0.5 / static_cast<double>(d), 0.5 / static_cast<double>(d));

  EmbeddingTable out;
  out.vectors.resize(n, d);
  for (Eigen::Index i = 0; i < out.vectors.size(); ++i) out.vectors.data()[i] = init(rng);
  Eigen::MatrixXd context = Eigen::MatrixXd::Zero(n, d);

  std::vector<double> freq(num_nodes, 0.0);
  std::size_t total_pairs_per_epoch = 0;
  for (const auto& w : walks) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] >= num_nodes) throw ValidationError("walk node outside the graph");
      freq[w[i]] += 1.0;
      const std::size_t lo = i >= static_cast<std::size_t>(options.window) ? i - options.window : 0;
      const std::size_t hi = std::min(w.size() - 1, i + options.window);
      total_pairs_per_epoch += hi - lo;
    }
  }
  for (double& f : freq) f = std::pow(f, 0.75);
  std::discrete_distribution<std::size_t> noise(freq.begin(), freq.end());

  const double total_pairs = static_cast<double>(total_pairs_per_epoch) * options.epochs;
  double seen = 0.0;
  Eigen::RowVectorXd grad_center(d);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    double loss = 0.0;
    std::size_t pairs = 0;
    for (const auto& w : walks) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const std::size_t lo = i >= static_cast<std::size_t>(options.window) ? i - options.window : 0;
        const std::size_t hi = std::min(w.size() - 1, i + options.window);
        const Eigen::Index center = w[i];
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const double lr = options.learning_rate * std::max(1e-4, 1.0 - seen / total_pairs);
          seen += 1.0;
          grad_center.setZero();
          auto update = [&](Eigen::Index target, double label) {
            const double score = out.vectors.row(center).dot(context.row(target));
            loss += label > 0.5 ? detail::neg_log_sigmoid(score) : detail::neg_log_sigmoid(-score);
            const double g = lr * (label - detail::sigmoid(score));
            grad_center += g * context.row(target);
            context.row(target) += g * out.vectors.row(center);
          };
          const auto positive = static_cast<Eigen::Index>(w[j]);
          update(positive, 1.0);
          for (int k = 0; k < options.negatives; ++k) {
            const auto neg = static_cast<Eigen::Index>(noise(rng));
            if (neg == positive) continue;
            update(neg, 0.0);
          }
          out.vectors.row(center) += grad_center;
          ++pairs;
        }
      }
    }
    out.loss_trace.push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
  }
  if (!out.vectors.allFinite()) throw DivergenceError(options.epochs, options.learning_rate);
  return out;
}

/// Rows of `table.vectors` for the graph's items, in item-index order.
inline Eigen::MatrixXd item_vectors(const BipartiteGraph& graph, const EmbeddingTable& table) {
  return table.vectors.bottomRows(static_cast<Eigen::Index>(graph.items.size()));
}

struct GmmOptions {
  int max_iters = 100;
  double tol = 1e-3;  // absolute log-likelihood gain that stops EM
  double variance_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GmmParams {
  std::vector<double> weights;     // K, sums to 1
  Eigen::MatrixXd means;           // K x d
  Eigen::MatrixXd variances;       // K x d, diagonal covariances
  double log_likelihood = 0.0;     // total over the fitted vectors
  std::vector<double> trace;       // log-likelihood at every E-step
  std::vector<std::size_t> reseeds;  // trace positions right after a component re-seed
  int iterations = 0;

  int num_components() const { return static_cast<int>(weights.size()); }
};

namespace detail {

/// n x K matrix of log(pi_k) + log N(x_n | mu_k, diag var_k).
inline Eigen::MatrixXd component_log_density(const GmmParams& g, const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = g.means.rows();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Eigen::MatrixXd out(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::RowVectorXd inv = g.variances.row(c).cwiseInverse();
    const double log_det = g.variances.row(c).array().log().sum();
    const double constant = std::log(g.weights[static_cast<std::size_t>(c)]) -
                            0.5 * (static_cast<double>(x.cols()) * log2pi + log_det);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double maha = ((x.row(i) - g.means.row(c)).array().square() * inv.array()).sum();
      out(i, c) = constant - 0.5 * maha;
    }
  }
  return out;
}

/// Normalizes rows of `log_density` into responsibilities in place and
/// returns the total log-likelihood.
inline double normalize_responsibilities(Eigen::MatrixXd& log_density) {
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < log_density.rows(); ++i) {
    const double mx = log_density.row(i).maxCoeff();
    const double lse = mx + std::log((log_density.row(i).array() - mx).exp().sum());
    log_density.row(i) = (log_density.row(i).array() - lse).exp();
    total += lse;
  }
  return static_cast<double>(total);
}

inline Eigen::RowVectorXd column_variance(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return (x.rowwise() - mean).array().square().colwise().mean();
}

}  // namespace detail

/// EM for a diagonal-covariance Gaussian mixture with k-means++ seeding.
inline GmmParams fit_gmm(const Eigen::MatrixXd& x, int k, const GmmOptions& options = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (k < 1) throw ConfigError("GMM needs at least one component");
  if (n < k) throw ConfigError("GMM has more components than vectors");
  if (d < 1) throw ConfigError("GMM vectors have zero dimension");
  Rng rng(options.seed);
  const double floor = options.variance_floor;
  const Eigen::RowVectorXd global_var = detail::column_variance(x).cwiseMax(floor);

  // k-means++ seeding of the means.
  GmmParams g;
  g.means.resize(k, d);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  g.means.row(0) = x.row(first(rng));
  Eigen::VectorXd dist2 = (x.rowwise() - g.means.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Eigen::Index pick;
    if (dist2.sum() > 0.0) {
      std::discrete_distribution<Eigen::Index> draw(dist2.data(), dist2.data() + n);
      pick = draw(rng);
    } else {
      pick = first(rng);
    }
    g.means.row(c) = x.row(pick);
    dist2 = dist2.cwiseMin((x.rowwise() - g.means.row(c)).rowwise().squaredNorm());
  }
  g.variances = global_var.replicate(k, 1);
  g.weights.assign(static_cast<std::size_t>(k), 1.0 / k);

  constexpr double kDegenerateWeight = 1e-8;
  Eigen::MatrixXd resp;
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 0;; ++iter) {
    resp = detail::component_log_density(g, x);
    const double ll = detail::normalize_responsibilities(resp);
    g.trace.push_back(ll);
    g.log_likelihood = ll;
    const bool after_reseed = !g.reseeds.empty() && g.reseeds.back() == g.trace.size() - 1;
    if (iter >= options.max_iters || (iter > 0 && !after_reseed && ll - prev < options.tol)) break;
    prev = ll;
    g.iterations = iter + 1;

    // M-step.
    const Eigen::VectorXd nk = resp.colwise().sum().transpose();
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      g.weights[static_cast<std::size_t>(c)] = nk(c) / static_cast<double>(n);
      if (nk(c) <= 0.0) continue;
      g.means.row(c) = (resp.col(c).transpose() * x) / nk(c);
      const Eigen::RowVectorXd second = (resp.col(c).transpose() * x.array().square().matrix()) / nk(c);
      g.variances.row(c) = (second - g.means.row(c).cwiseProduct(g.means.row(c))).cwiseMax(floor);
    }
    for (int c = 0; c < k; ++c) {
      if (g.weights[static_cast<std::size_t>(c)] >= kDegenerateWeight) continue;
      // Re-seed at the vector farthest from every other mean.
      Eigen::VectorXd nearest = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
      for (int o = 0; o < k; ++o) {
        if (o == c) continue;
        nearest = nearest.cwiseMin((x.rowwise() - g.means.row(o)).rowwise().squaredNorm());
      }
      Eigen::Index far = 0;
      nearest.maxCoeff(&far);
      g.means.row(c) = x.row(far);
      g.variances.row(c) = global_var;
      g.weights[static_cast<std::size_t>(c)] = 1.0 / static_cast<double>(n);
      reseeded = true;
    }
    if (reseeded) {
      double s = 0.0;
      for (double w : g.weights) s += w;
      for (double& w : g.weights) w /= s;
      g.reseeds.push_back(g.trace.size());
    }
  }
  return g;
}

/// Argmax-responsibility component per row; ties go to the lowest index.
inline std::vector<int> assign_components(const GmmParams& gmm, const Eigen::MatrixXd& x) {
  if (x.cols() != gmm.means.cols()) throw ConfigError("vector dimension does not match the GMM");
  const Eigen::MatrixXd logp = detail::component_log_density(gmm, x);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < logp.cols(); ++c) {
      if (logp(i, c) > logp(i, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

/// One topic per item; component ids re-densified (ascending) so empty
/// components leave no gaps.
inline TopicAssignment assign_topics(const GmmParams& gmm, const Eigen::MatrixXd& item_vectors,
                                     const IdIndex& items) {
  if (static_cast<std::size_t>(item_vectors.rows()) != items.size()) {
    throw ConfigError("item vector count does not match item ids");
  }
  const auto comp = assign_components(gmm, item_vectors);
  std::vector<TopicId> dense(static_cast<std::size_t>(gmm.num_components()), -1);
  std::vector<bool> used(dense.size(), false);
  for (int c : comp) used[static_cast<std::size_t>(c)] = true;
  TopicId next = 0;
  for (std::size_t c = 0; c < dense.size(); ++c) {
    if (used[c]) dense[c] = next++;
  }
  TopicAssignment out;
  for (std::size_t i = 0; i < comp.size(); ++i) {
    out.assign(items.key(i), dense[static_cast<std::size_t>(comp[i])]);
  }
  return out;
}

}  // namespace pebias

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

#include <set>

#include <gtest/gtest.h>

#include "pebias/topics.hpp"
#include "test_util.hpp"

namespace pebias {
namespace {

InteractionTable two_communities() {
  InteractionTable t;
  for (int u = 0; u < 10; ++u) {
    for (int i = 0; i < 5; ++i) {
      const int item = (u < 5 ? 0 : 5) + i;
      t.add({"u" + std::to_string(u), "i" + std::to_string(item), 4.0});
    }
  }
  return t;
}

TEST(Graph, NodesAndEdges) {
  InteractionTable t;
  t.add({"a", "x", 5});
  t.add({"a", "y", 3});
  t.add({"b", "x", 1});
  t.add({"b", "x", 2});
  const auto g = build_bipartite_graph(t);
  EXPECT_EQ(g.num_nodes(), 4u);
  EXPECT_EQ(g.users.size(), 2u);
  EXPECT_EQ(g.adjacency[0].size(), 2u);
  EXPECT_EQ(g.adjacency[1].size(), 1u);
  EXPECT_EQ(g.adjacency[g.item_node(0)].size(), 2u);
  EXPECT_EQ(g.node_name(0), "u:a");
  EXPECT_EQ(g.node_name(g.item_node(1)), "i:y");
  EXPECT_THROW(build_bipartite_graph(InteractionTable{}), EmptyInput);
}

TEST(Walks, AlternateSidesAndHaveFullLength) {
  const auto g = build_bipartite_graph(two_communities());
  const auto walks = generate_walks(g, 3, 12, 5);
  EXPECT_EQ(walks.size(), 3 * g.num_nodes());
  for (const auto& w : walks) {
    ASSERT_EQ(w.size(), 12u);
    for (std::size_t i = 1; i < w.size(); ++i) {
      EXPECT_NE(g.is_user(w[i]), g.is_user(w[i - 1]));
      const auto& nbrs = g.adjacency[w[i - 1]];
      EXPECT_NE(std::find(nbrs.begin(), nbrs.end(), w[i]), nbrs.end());
    }
  }
  EXPECT_EQ(walks, generate_walks(g, 3, 12, 5));
  EXPECT_NE(walks, generate_walks(g, 3, 12, 6));
  EXPECT_THROW(generate_walks(g, 0, 12, 5), ConfigError);
}

TEST(Embeddings, ZeroEpochsReturnTheInitialization) {
  const auto g = build_bipartite_graph(two_communities());
  const auto walks = generate_walks(g, 1, 5, 1);
  EmbeddingOptions o;
  o.dim = 4;
  o.epochs = 0;
  o.seed = 9;
  const auto e = train_embeddings(walks, g.num_nodes(), o);
  Rng rng(9);
  std::uniform_real_distribution<double> init(-0.125, 0.125);
  for (Eigen::Index i = 0; i < e.vectors.size(); ++i) EXPECT_EQ(e.vectors.data()[i], init(rng));
  EXPECT_TRUE(e.loss_trace.empty());
}

TEST(Embeddings, LossTraceDoesNotRise) {
  const auto g = build_bipartite_graph(two_communities());
  const auto walks = generate_walks(g, 10, 20, 2);
  EmbeddingOptions o;
  o.dim = 8;
  o.epochs = 6;
  const auto e = train_embeddings(walks, g.num_nodes(), o);
  ASSERT_EQ(e.loss_trace.size(), 6u);
  for (std::size_t i = 1; i < e.loss_trace.size(); ++i) EXPECT_LE(e.loss_trace[i], 1.05 * e.loss_trace[i - 1]);
  EXPECT_LT(e.loss_trace.back(), e.loss_trace.front());
  EXPECT_EQ(e.vectors, train_embeddings(walks, g.num_nodes(), o).vectors);
}

TEST(Embeddings, SeparateDisconnectedCommunities) {
  const auto g = build_bipartite_graph(two_communities());
  const auto walks = generate_walks(g, 10, 20, 3);
  EmbeddingOptions o;
  o.dim = 8;
  o.epochs = 5;
  const auto e = train_embeddings(walks, g.num_nodes(), o);
  const Eigen::MatrixXd items = item_vectors(g, e);
  GmmOptions go;
  go.seed = 1;
  const auto gmm = fit_gmm(items, 2, go);
  const auto topics = assign_topics(gmm, items, g.items);
  const TopicId first = topics.topics_of("i0")->front();
  for (int i = 0; i < 10; ++i) {
    const TopicId t = topics.topics_of("i" + std::to_string(i))->front();
    EXPECT_EQ(t == first, i < 5) << "item " << i;
  }
}

Eigen::MatrixXd two_blobs(int per_blob, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  Eigen::MatrixXd x(2 * per_blob, 2);
  for (int i = 0; i < 2 * per_blob; ++i) {
    const double cx = i < per_blob ? -3.0 : 3.0;
    x(i, 0) = cx + g(rng);
    x(i, 1) = g(rng);
  }
  return x;
}

TEST(Gmm, RecoversPlantedClusters) {
  const auto x = two_blobs(100, 4);
  GmmOptions o;
  o.seed = 2;
  const auto gmm = fit_gmm(x, 2, o);
  const auto comp = assign_components(gmm, x);
  int agree = 0;
  for (int i = 0; i < 200; ++i) agree += (comp[static_cast<std::size_t>(i)] == comp[0]) == (i < 100);
  EXPECT_GE(agree, 190);
  EXPECT_NEAR(gmm.weights[0] + gmm.weights[1], 1.0, 1e-12);
}

TEST(Gmm, LogLikelihoodTraceIsMonotone) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd x(80, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng) + (i % 3 == 0 ? 4.0 : 0.0);
    GmmOptions o;
    o.seed = seed;
    o.tol = 0.0;
    o.max_iters = 50;
    const auto gmm = fit_gmm(x, 4, o);
    const std::set<std::size_t> reseeds(gmm.reseeds.begin(), gmm.reseeds.end());
    for (std::size_t i = 1; i < gmm.trace.size(); ++i) {
      if (reseeds.count(i)) continue;
      EXPECT_GE(gmm.trace[i], gmm.trace[i - 1] - 1e-8) << "seed " << seed << " step " << i;
    }
  }
}

TEST(Gmm, RejectsBadShapes) {
  const auto x = two_blobs(2, 1);
  EXPECT_THROW(fit_gmm(x, 0), ConfigError);
  EXPECT_THROW(fit_gmm(x, 5), ConfigError);
}

TEST(AssignTopics, DenseIdsWithoutGaps) {
  GmmParams g;
  g.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  g.means.resize(3, 1);
  g.means << -10, 0, 10;
  g.variances = Eigen::MatrixXd::Ones(3, 1);
  Eigen::MatrixXd x(3, 1);
  x << -9.5, 9.7, 10.2;
  IdIndex items;
  items.intern("a");
  items.intern("b");
  items.intern("c");
  const auto topics = assign_topics(g, x, items);
  EXPECT_EQ(topics.num_topics(), 2u);
  EXPECT_EQ(topics.topics_of("a")->front(), 0);
  EXPECT_EQ(topics.topics_of("b")->front(), 1);
  EXPECT_EQ(topics.topics_of("c")->front(), 1);
  EXPECT_TRUE(topics.validate().empty());
}

}  // namespace
}  // namespace pebias

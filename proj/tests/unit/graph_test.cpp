// Copyright 2026 The exbias Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "exbias/graph.hpp"

#include <set>
#include <sstream>

#include "gtest/gtest.h"

namespace exbias {
namespace {

std::vector<Node> make_nodes(std::size_t n, std::size_t d = 2) {
  std::vector<Node> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].category = static_cast<std::uint32_t>(i % 2);
    nodes[i].features.assign(d, static_cast<double>(i));
  }
  return nodes;
}

TEST(GraphTest, BuildsFromNodesAndEdges) {
  Graph g(make_nodes(3), {{0, 1}, {1, 2}});
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_TRUE(g.has_edge(0, 1));
  EXPECT_FALSE(g.has_edge(1, 0));
  EXPECT_EQ(g.out_neighbors(1).size(), 1u);
  EXPECT_EQ(g.num_categories(), 2u);
}

TEST(GraphTest, DuplicateEdgesCollapse) {
  Graph g(make_nodes(3), {{0, 1}, {0, 1}, {2, 0}});
  EXPECT_EQ(g.num_edges(), 2u);
}

TEST(GraphTest, RejectsSelfLoop) {
  EXPECT_THROW(Graph(make_nodes(3), {{0, 0}}), DataError);
}

TEST(GraphTest, RejectsMixedFeatureLengths) {
  auto nodes = make_nodes(2, 4);
  nodes[1].features.resize(5);
  EXPECT_THROW(Graph(nodes, {}), DataError);
}

TEST(GraphTest, RejectsDanglingEndpoint) {
  EXPECT_THROW(Graph(make_nodes(2), {{0, 5}}), DataError);
}

TEST(PairUniverseTest, Sizes) {
  EXPECT_EQ(PairUniverse(2).size(), 2u);
  EXPECT_EQ(PairUniverse(3).size(), 6u);
  EXPECT_EQ(PairUniverse(10).size(), 90u);
  EXPECT_THROW(PairUniverse(1), DataError);
}

TEST(PairUniverseTest, TwoNodesOrder) {
  PairUniverse u(2);
  EXPECT_EQ(u[0], (NodePair{0, 1}));
  EXPECT_EQ(u[1], (NodePair{1, 0}));
}

TEST(PairUniverseTest, EnumeratesEveryOrderedPairOnce) {
  for (std::size_t n : {2u, 3u, 7u, 10u}) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (NodePair p : PairUniverse(n)) {
      EXPECT_NE(p.src, p.dst);
      seen.insert({p.src, p.dst});
    }
    // Count by brute-force iteration.
    std::size_t expected = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) expected += i != j;
    }
    EXPECT_EQ(seen.size(), expected);
  }
}

TEST(PairUniverseTest, SubsetUsesMembers) {
  PairUniverse u(std::vector<std::uint32_t>{4, 9, 2});
  EXPECT_EQ(u.size(), 6u);
  for (NodePair p : u) {
    EXPECT_TRUE(p.src == 4 || p.src == 9 || p.src == 2);
  }
}

TEST(ObservedLabelTest, Queries) {
  Graph g(make_nodes(3), {{0, 1}});
  EXPECT_EQ(observed_label(g, NodeId{0}, NodeId{1}), 1);
  EXPECT_EQ(observed_label(g, NodeId{1}, NodeId{0}), 0);
  EXPECT_EQ(observed_label(g, NodeId{0}, NodeId{2}), 0);
  EXPECT_THROW(observed_label(g, NodeId{0}, NodeId{0}), DataError);
  EXPECT_THROW(observed_label(g, NodeId{0}, NodeId{3}), DataError);
}

TEST(ObservedLabelTest, LabelsMatchEdgeCount) {
  Graph g(make_nodes(5), {{0, 1}, {3, 4}, {4, 2}});
  const PairUniverse u(g);
  const auto o = observed_labels(g, u);
  std::size_t ones = 0;
  for (auto v : o) ones += v;
  EXPECT_EQ(ones, 3u);
  EXPECT_EQ(edges_within(g, u), 3u);
}

TEST(GraphIoTest, RoundTrip) {
  Graph g(make_nodes(4, 3), {{0, 1}, {2, 3}, {3, 0}});
  std::stringstream nodes_io;
  std::stringstream edges_io;
  write_nodes(nodes_io, g);
  write_edges(edges_io, g.edges());
  Graph back(read_nodes(nodes_io), read_edges(edges_io));
  EXPECT_EQ(back, g);
}

TEST(GraphIoTest, RejectsBadNodeLines) {
  std::stringstream bad_json("{\"id\": 0, \"category\": 0, \"features\": [1.0]\n");
  EXPECT_THROW(read_nodes(bad_json), DataError);
  std::stringstream gap(
      "{\"id\": 0, \"category\": 0, \"features\": [1.0]}\n"
      "{\"id\": 2, \"category\": 0, \"features\": [1.0]}\n");
  EXPECT_THROW(read_nodes(gap), DataError);
}

TEST(SplitTest, PartitionsNodes) {
  const NodeSplit s = random_node_split(100, 0.7, 0.1, 3);
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.validation.size(), 10u);
  EXPECT_EQ(s.test.size(), 20u);
  std::set<std::uint32_t> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(random_node_split(100, 0.7, 0.1, 3).train, s.train);
}

}  // namespace
}  // namespace exbias

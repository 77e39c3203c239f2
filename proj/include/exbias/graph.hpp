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

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "exbias/common.hpp"

namespace exbias {

struct NodeId {
  std::uint32_t value = 0;
  friend auto operator<=>(NodeId, NodeId) = default;
};

/// An ordered pair (src, dst) of node indices; a candidate directed link.
struct NodePair {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  friend auto operator<=>(const NodePair&, const NodePair&) = default;
};

struct Node {
  std::uint32_t category = 0;
  std::vector<double> features;
  friend bool operator==(const Node&, const Node&) = default;
};

/// Directed graph with per-node category and dense feature vector.
/// Immutable after construction. Edges are kept sorted and deduplicated in a
/// compressed row layout so membership tests are a binary search.
class Graph {
 public:
  Graph() = default;

  /// Validates and builds a graph. `num_categories` defaults to one past the
  /// largest category seen.
  Graph(std::vector<Node> nodes, std::vector<NodePair> edges,
        std::optional<std::size_t> num_categories = std::nullopt)
      : nodes_(std::move(nodes)) {
    if (!nodes_.empty()) feature_dim_ = nodes_.front().features.size();
    std::size_t max_cat = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].features.size() != feature_dim_) {
        throw DataError("feature dimension mismatch at node " +
                        std::to_string(i) + ": expected " +
                        std::to_string(feature_dim_) + ", got " +
                        std::to_string(nodes_[i].features.size()));
      }
      max_cat = std::max<std::size_t>(max_cat, nodes_[i].category);
    }
    num_categories_ = nodes_.empty() ? 0 : max_cat + 1;
    if (num_categories) {
      if (!nodes_.empty() && *num_categories <= max_cat) {
        throw DataError("node category " + std::to_string(max_cat) +
                        " out of range for " +
                        std::to_string(*num_categories) + " categories");
      }
      num_categories_ = *num_categories;
    }

    const auto n = static_cast<std::uint32_t>(nodes_.size());
    for (const NodePair& e : edges) {
      if (e.src >= n || e.dst >= n) {
        throw DataError("edge (" + std::to_string(e.src) + ", " +
                        std::to_string(e.dst) + ") has a dangling endpoint");
      }
      if (e.src == e.dst) {
        throw DataError("self-loop edge at node " + std::to_string(e.src));
      }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);

    row_offsets_.assign(nodes_.size() + 1, 0);
    for (const NodePair& e : edges_) ++row_offsets_[e.src + 1];
    std::partial_sum(row_offsets_.begin(), row_offsets_.end(),
                     row_offsets_.begin());
    targets_.reserve(edges_.size());
    for (const NodePair& e : edges_) targets_.push_back(e.dst);
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_categories() const { return num_categories_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t num_edges() const { return edges_.size(); }

  const Node& node(std::uint32_t i) const { return nodes_.at(i); }
  std::span<const Node> nodes() const { return nodes_; }
  std::uint32_t category(std::uint32_t i) const { return nodes_[i].category; }
  std::span<const double> features(std::uint32_t i) const {
    return nodes_[i].features;
  }

  /// Edges in lexicographic (src, dst) order.
  std::span<const NodePair> edges() const { return edges_; }

  std::span<const std::uint32_t> out_neighbors(std::uint32_t i) const {
    return std::span<const std::uint32_t>(targets_).subspan(
        row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]);
  }

  bool has_edge(std::uint32_t i, std::uint32_t j) const {
    const auto row = out_neighbors(i);
    return std::binary_search(row.begin(), row.end(), j);
  }

  /// Same nodes, different edge set.
  Graph with_edges(std::vector<NodePair> edges) const {
    return Graph(nodes_, std::move(edges), num_categories_);
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_categories_ == b.num_categories_ && a.nodes_ == b.nodes_ &&
           a.edges_ == b.edges_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<NodePair> edges_;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::uint32_t> targets_;
  std::size_t num_categories_ = 0;
  std::size_t feature_dim_ = 0;
};

/// o_ij: 1 iff the directed link (i, j) is in the graph.
inline int observed_label(const Graph& g, NodeId i, NodeId j) {
  const auto n = g.num_nodes();
  if (i.value >= n || j.value >= n) {
    throw DataError("node id out of range");
  }
  if (i == j) throw DataError("observed_label: i == j is not a valid pair");
  return g.has_edge(i.value, j.value) ? 1 : 0;
}

/// All ordered pairs (i, j), i != j, over a node set; either every node of a
/// graph or a subset (e.g. one side of a split). Row-major order: source
/// ascending, then destination ascending.
class PairUniverse {
 public:
  explicit PairUniverse(const Graph& g) : PairUniverse(g.num_nodes()) {}

  explicit PairUniverse(std::size_t n) {
    members_.resize(n);
    std::iota(members_.begin(), members_.end(), 0u);
    check_size();
  }

  /// Universe over a subset of node indices. Order of `members` is kept.
  explicit PairUniverse(std::vector<std::uint32_t> members)
      : members_(std::move(members)) {
    check_size();
  }

  std::size_t num_members() const { return members_.size(); }
  std::span<const std::uint32_t> members() const { return members_; }

  std::size_t size() const {
    return members_.size() * (members_.size() - 1);
  }

  NodePair operator[](std::size_t k) const {
    const std::size_t m1 = members_.size() - 1;
    const std::size_t a = k / m1;
    std::size_t b = k % m1;
    if (b >= a) ++b;
    return NodePair{members_[a], members_[b]};
  }

  class Iterator {
   public:
    using iterator_category = std::forward_iterator_tag;
    using value_type = NodePair;
    using difference_type = std::ptrdiff_t;
    using pointer = void;
    using reference = NodePair;

    Iterator() = default;
    Iterator(const PairUniverse* u, std::size_t k) : u_(u), k_(k) {}
    NodePair operator*() const { return (*u_)[k_]; }
    Iterator& operator++() {
      ++k_;
      return *this;
    }
    Iterator operator++(int) {
      Iterator tmp = *this;
      ++k_;
      return tmp;
    }
    friend bool operator==(const Iterator& a, const Iterator& b) {
      return a.k_ == b.k_;
    }

   private:
    const PairUniverse* u_ = nullptr;
    std::size_t k_ = 0;
  };

  Iterator begin() const { return Iterator(this, 0); }
  Iterator end() const { return Iterator(this, size()); }

 private:
  void check_size() const {
    if (members_.size() < 2) {
      throw DataError("pair universe needs at least 2 nodes");
    }
  }

  std::vector<std::uint32_t> members_;
};

inline PairUniverse pair_universe(const Graph& g) { return PairUniverse(g); }

/// Observed labels over a universe, in universe order.
inline std::vector<std::uint8_t> observed_labels(const Graph& g,
                                                 const PairUniverse& u) {
  std::vector<std::uint8_t> o;
  o.reserve(u.size());
  for (NodePair p : u) o.push_back(g.has_edge(p.src, p.dst) ? 1 : 0);
  return o;
}

/// Number of edges with both endpoints inside the universe's node set.
inline std::size_t edges_within(const Graph& g, const PairUniverse& u) {
  if (u.num_members() == g.num_nodes()) return g.num_edges();
  std::vector<bool> in(g.num_nodes(), false);
  for (auto m : u.members()) in[m] = true;
  std::size_t count = 0;
  for (const NodePair& e : g.edges()) {
    if (in[e.src] && in[e.dst]) ++count;
  }
  return count;
}

struct NodeSplit {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> validation;
  std::vector<std::uint32_t> test;
};

/// Random node split with the given fractions (train, validation; test takes
/// the remainder). Each part is returned sorted.
inline NodeSplit random_node_split(std::size_t n, double train_fraction,
                                   double validation_fraction,
                                   std::uint64_t seed) {
  if (train_fraction < 0 || validation_fraction < 0 ||
      train_fraction + validation_fraction > 1.0) {
    throw ConfigError("split fractions must be non-negative and sum to <= 1");
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * double(n)));
  const auto n_val = std::min(
      n - n_train,
      static_cast<std::size_t>(std::llround(validation_fraction * double(n))));
  NodeSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.validation.assign(order.begin() + n_train,
                          order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// --- File formats --------------------------------------------------------
// nodes: JSON lines {"id":int,"category":int,"features":[float,...]}
// edges: TSV "src<TAB>dst"

inline std::vector<Node> read_nodes(std::istream& in) {
  std::vector<std::optional<Node>> by_id;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("nodes line " + std::to_string(line_no) +
                      ": parse failure: " + e.what());
    }
    try {
      const auto id = rec.at("id").get<std::int64_t>();
      const auto cat = rec.at("category").get<std::int64_t>();
      if (id < 0 || cat < 0) {
        throw DataError("nodes line " + std::to_string(line_no) +
                        ": negative id or category");
      }
      Node node;
      node.category = static_cast<std::uint32_t>(cat);
      node.features = rec.at("features").get<std::vector<double>>();
      if (!dim) dim = node.features.size();
      if (node.features.size() != *dim) {
        throw DataError("nodes line " + std::to_string(line_no) +
                        ": feature dimension mismatch (expected " +
                        std::to_string(*dim) + ", got " +
                        std::to_string(node.features.size()) + ")");
      }
      const auto idx = static_cast<std::size_t>(id);
      if (idx >= by_id.size()) by_id.resize(idx + 1);
      if (by_id[idx]) {
        throw DataError("nodes line " + std::to_string(line_no) +
                        ": duplicate node id " + std::to_string(id));
      }
      by_id[idx] = std::move(node);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("nodes line " + std::to_string(line_no) +
                      ": parse failure: " + e.what());
    }
  }
  std::vector<Node> nodes;
  nodes.reserve(by_id.size());
  for (std::size_t i = 0; i < by_id.size(); ++i) {
    if (!by_id[i]) {
      throw DataError("node ids are not contiguous: missing id " +
                      std::to_string(i));
    }
    nodes.push_back(std::move(*by_id[i]));
  }
  return nodes;
}

inline std::vector<NodePair> read_edges(std::istream& in) {
  std::vector<NodePair> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::int64_t src = -1;
    std::int64_t dst = -1;
    std::string extra;
    if (!(fields >> src >> dst) || (fields >> extra) || src < 0 || dst < 0) {
      throw DataError("edges line " + std::to_string(line_no) +
                      ": expected two non-negative integers");
    }
    edges.push_back(NodePair{static_cast<std::uint32_t>(src),
                             static_cast<std::uint32_t>(dst)});
  }
  return edges;
}

inline void write_nodes(std::ostream& out, const Graph& g) {
  for (std::uint32_t i = 0; i < g.num_nodes(); ++i) {
    nlohmann::json rec;
    rec["id"] = i;
    rec["category"] = g.category(i);
    rec["features"] = g.node(i).features;
    out << rec.dump() << '\n';
  }
}

inline void write_edges(std::ostream& out, std::span<const NodePair> edges) {
  for (const NodePair& e : edges) out << e.src << '\t' << e.dst << '\n';
}

inline Graph load_graph(const std::filesystem::path& nodes_path,
                        const std::filesystem::path& edges_path,
                        std::optional<std::size_t> num_categories =
                            std::nullopt) {
  std::ifstream nodes_in(nodes_path);
  if (!nodes_in) throw DataError("cannot open " + nodes_path.string());
  std::ifstream edges_in(edges_path);
  if (!edges_in) throw DataError("cannot open " + edges_path.string());
  return Graph(read_nodes(nodes_in), read_edges(edges_in), num_categories);
}

inline void save_graph(const Graph& g, const std::filesystem::path& nodes_path,
                       const std::filesystem::path& edges_path) {
  std::ofstream nodes_out(nodes_path, std::ios::binary);
  std::ofstream edges_out(edges_path, std::ios::binary);
  if (!nodes_out || !edges_out) {
    throw DataError("cannot write graph files");
  }
  write_nodes(nodes_out, g);
  write_edges(edges_out, g.edges());
}

}  // namespace exbias

#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fogd/error.hpp"

namespace fogd {

using NodeId = int;

/// Distance marker for nodes that cannot reach the target set.
inline constexpr int kUnreachable = std::numeric_limits<int>::max();

/**
 * Undirected simple graph over dense node ids 0..n-1.
 *
 * Adjacency lists are sorted and symmetric. Duplicate edges in the input are
 * merged; self-loops and out-of-range ids are rejected.
 */
class Graph {
 public:
  Graph() = default;

  Graph(int node_count, std::span<const std::pair<NodeId, NodeId>> edges)
      : adjacency_(checked_count(node_count)) {
    for (auto [i, j] : edges) {
      if (!contains(i) || !contains(j)) {
        throw InputError{"edge (" + std::to_string(i) + ", " +
                         std::to_string(j) + ") references an invalid node"};
      }
      if (i == j) {
        throw InputError{"self-loop at node " + std::to_string(i)};
      }
      adjacency_[i].push_back(j);
      adjacency_[j].push_back(i);
    }
    for (auto& list : adjacency_) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
      edge_count_ += list.size();
    }
    edge_count_ /= 2;
  }

  int node_count() const noexcept { return static_cast<int>(adjacency_.size()); }

  std::size_t edge_count() const noexcept { return edge_count_; }

  bool contains(NodeId i) const noexcept { return i >= 0 && i < node_count(); }

  std::span<const NodeId> neighbors(NodeId i) const {
    require(i);
    return adjacency_[i];
  }

  void require(NodeId i) const {
    if (!contains(i)) {
      throw InputError{"invalid node id " + std::to_string(i)};
    }
  }

 private:
  static std::size_t checked_count(int node_count) {
    if (node_count <= 0) {
      throw InputError{"graph must have at least one node"};
    }
    return static_cast<std::size_t>(node_count);
  }

  std::vector<std::vector<NodeId>> adjacency_;
  std::size_t edge_count_ = 0;
};

/// Strictly ascending set of node ids.
class NodeSet {
 public:
  NodeSet() = default;

  /// Takes ownership of ids that must already be strictly ascending.
  explicit NodeSet(std::vector<NodeId> sorted_ids) : ids_{std::move(sorted_ids)} {
    for (std::size_t k = 0; k < ids_.size(); ++k) {
      if (ids_[k] < 0 || (k > 0 && ids_[k] <= ids_[k - 1])) {
        throw InputError{"node set ids must be nonnegative and strictly ascending"};
      }
    }
  }

  /// Sorts and deduplicates arbitrary ids.
  static NodeSet from_unsorted(std::vector<NodeId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return NodeSet{std::move(ids)};
  }

  /// {0, ..., n-1}.
  static NodeSet all(int n) {
    std::vector<NodeId> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      ids[i] = i;
    }
    return NodeSet{std::move(ids)};
  }

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  NodeId operator[](std::size_t k) const { return ids_[k]; }
  auto begin() const noexcept { return ids_.begin(); }
  auto end() const noexcept { return ids_.end(); }
  const std::vector<NodeId>& ids() const noexcept { return ids_; }

  bool contains(NodeId i) const {
    return std::binary_search(ids_.begin(), ids_.end(), i);
  }

  std::optional<std::size_t> position(NodeId i) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), i);
    if (it == ids_.end() || *it != i) {
      return std::nullopt;
    }
    return static_cast<std::size_t>(it - ids_.begin());
  }

  bool is_subset_of(const NodeSet& other) const {
    return std::includes(other.ids_.begin(), other.ids_.end(), ids_.begin(),
                         ids_.end());
  }

  void validate(const Graph& g) const {
    if (!ids_.empty() && ids_.back() >= g.node_count()) {
      throw InputError{"node set references invalid node " +
                       std::to_string(ids_.back())};
    }
  }

  friend bool operator==(const NodeSet&, const NodeSet&) = default;

 private:
  std::vector<NodeId> ids_;
};

inline NodeSet set_union(const NodeSet& a, const NodeSet& b) {
  std::vector<NodeId> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return NodeSet{std::move(out)};
}

inline NodeSet set_intersection(const NodeSet& a, const NodeSet& b) {
  std::vector<NodeId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return NodeSet{std::move(out)};
}

inline NodeSet set_difference(const NodeSet& a, const NodeSet& b) {
  std::vector<NodeId> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::back_inserter(out));
  return NodeSet{std::move(out)};
}

/**
 * Multi-source BFS distances from every node to the nearest node of `target`.
 * Nodes farther than `max_depth` (or unreachable) get kUnreachable.
 */
inline std::vector<int> distances_to(const Graph& g, const NodeSet& target,
                                     int max_depth = kUnreachable) {
  target.validate(g);
  std::vector<int> dist(static_cast<std::size_t>(g.node_count()), kUnreachable);
  std::deque<NodeId> queue;
  for (NodeId s : target) {
    dist[s] = 0;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    NodeId i = queue.front();
    queue.pop_front();
    if (dist[i] >= max_depth) {
      continue;
    }
    for (NodeId j : g.neighbors(i)) {
      if (dist[j] == kUnreachable) {
        dist[j] = dist[i] + 1;
        queue.push_back(j);
      }
    }
  }
  return dist;
}

/// d_G(i, target): 0 on membership, kUnreachable if disconnected.
inline int graph_distance(const Graph& g, NodeId i, const NodeSet& target) {
  g.require(i);
  if (target.contains(i)) {
    return 0;
  }
  return distances_to(g, target)[i];
}

/// N^b_G[seed] = {i : d_G(i, seed) <= b}.
inline NodeSet bhop_neighborhood(const Graph& g, const NodeSet& seed, int b) {
  if (seed.empty()) {
    throw InputError{"b-hop neighborhood requires a nonempty seed"};
  }
  if (b < 0) {
    throw InputError{"hop radius must be nonnegative"};
  }
  auto dist = distances_to(g, seed, b);
  std::vector<NodeId> ids;
  for (NodeId i = 0; i < g.node_count(); ++i) {
    if (dist[i] <= b) {
      ids.push_back(i);
    }
  }
  return NodeSet{std::move(ids)};
}

/// Closed neighborhood N_G[S].
inline NodeSet closed_neighborhood(const Graph& g, const NodeSet& s) {
  if (s.empty()) {
    return {};
  }
  return bhop_neighborhood(g, s, 1);
}

/// Open neighborhood N_G(S) = N_G[S] \ S.
inline NodeSet open_neighborhood(const Graph& g, const NodeSet& s) {
  return set_difference(closed_neighborhood(g, s), s);
}

/// 4-neighbor lattice with node id = row * cols + col.
inline Graph grid_graph(int rows, int cols) {
  if (rows < 1 || cols < 1) {
    throw InputError{"grid dimensions must be positive"};
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(static_cast<std::size_t>(2 * rows * cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      NodeId i = r * cols + c;
      if (c + 1 < cols) {
        edges.emplace_back(i, i + 1);
      }
      if (r + 1 < rows) {
        edges.emplace_back(i, i + cols);
      }
    }
  }
  return Graph{rows * cols, edges};
}

/// Path 0 - 1 - ... - (n-1).
inline Graph path_graph(int n) { return grid_graph(1, n); }

/// Column c of a rows x cols grid belongs to strip floor(c * strips / cols).
inline std::vector<NodeSet> strip_partition(int rows, int cols, int strips) {
  if (strips < 1 || strips > cols) {
    throw InputError{"strip count must lie in [1, cols]"};
  }
  std::vector<std::vector<NodeId>> parts(static_cast<std::size_t>(strips));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      parts[static_cast<std::size_t>(c * strips / cols)].push_back(r * cols + c);
    }
  }
  std::vector<NodeSet> out;
  for (auto& p : parts) {
    out.push_back(NodeSet::from_unsorted(std::move(p)));
  }
  return out;
}

/// Contiguous id blocks of near-equal size, for path-like graphs.
inline std::vector<NodeSet> block_partition(int n, int parts) {
  return strip_partition(1, n, parts);
}

/// Edge list: one "i j" pair per line, 0-based; '#' starts a comment.
inline Graph read_edge_list(const std::string& path, int node_count = -1) {
  std::ifstream in{path};
  if (!in) {
    throw InputError{"cannot open edge list " + path};
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  int max_id = -1;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields{line};
    NodeId i = 0;
    NodeId j = 0;
    if (!(fields >> i)) {
      continue;
    }
    if (!(fields >> j) || i < 0 || j < 0) {
      throw InputError{path + ":" + std::to_string(line_no) + ": expected \"i j\""};
    }
    edges.emplace_back(i, j);
    max_id = std::max({max_id, i, j});
  }
  if (node_count < 0) {
    node_count = max_id + 1;
  }
  return Graph{node_count, edges};
}

/// Partition file: one "node part_id" per line. Part ids are renumbered
/// densely in ascending order.
inline std::vector<NodeSet> read_partition(const std::string& path,
                                           const Graph& g) {
  std::ifstream in{path};
  if (!in) {
    throw InputError{"cannot open partition file " + path};
  }
  std::vector<std::pair<int, NodeId>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields{line};
    NodeId node = 0;
    int part = 0;
    if (!(fields >> node)) {
      continue;
    }
    if (!(fields >> part)) {
      throw InputError{path + ":" + std::to_string(line_no) +
                       ": expected \"node part_id\""};
    }
    g.require(node);
    entries.emplace_back(part, node);
  }
  std::sort(entries.begin(), entries.end());
  std::vector<NodeSet> parts;
  std::vector<NodeId> current;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    current.push_back(entries[k].second);
    if (k + 1 == entries.size() || entries[k + 1].first != entries[k].first) {
      parts.push_back(NodeSet::from_unsorted(std::move(current)));
      current.clear();
    }
  }
  return parts;
}

}  // namespace fogd

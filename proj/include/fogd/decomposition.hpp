#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fogd/error.hpp"
#include "fogd/graph.hpp"

namespace fogd {

/**
 * One overlapping subdomain W of a disjoint part V together with the
 * boundary sets the subproblems are built from:
 *
 *   open_boundary      N(W)
 *   internal_boundary  T = N(N(W)) ∩ W
 *   combined_boundary  N(W) ∪ T
 *   external_depth2    N(W) ∪ N(N[W])
 *   internal_depth2    (N(T) ∩ W) ∪ T
 *
 * Constraints of W \ T only involve variables inside W, so they stay hard in
 * the subproblem; the constraints of the combined boundary are penalized.
 */
struct Subdomain {
  NodeSet exclusive;
  NodeSet nodes;
  NodeSet open_boundary;
  NodeSet internal_boundary;
  NodeSet combined_boundary;
  NodeSet external_depth2;
  NodeSet internal_depth2;
  /// W \ T, the rows whose constraints are enforced exactly.
  NodeSet interior;
};

/// Computes all boundary sets of W from scratch by set algebra.
inline Subdomain make_subdomain(const Graph& g, NodeSet exclusive, NodeSet nodes) {
  Subdomain s;
  s.exclusive = std::move(exclusive);
  s.nodes = std::move(nodes);
  s.open_boundary = open_neighborhood(g, s.nodes);
  s.internal_boundary =
      set_intersection(open_neighborhood(g, s.open_boundary), s.nodes);
  s.combined_boundary = set_union(s.open_boundary, s.internal_boundary);
  s.external_depth2 = set_union(
      s.open_boundary, open_neighborhood(g, closed_neighborhood(g, s.nodes)));
  s.internal_depth2 = set_union(
      set_intersection(open_neighborhood(g, s.internal_boundary), s.nodes),
      s.internal_boundary);
  s.interior = set_difference(s.nodes, s.internal_boundary);
  return s;
}

/**
 * Disjoint partition {V_l} of the graph expanded to overlapping subdomains
 * W_l ⊇ N^b[V_l]. Immutable after construction.
 */
class OverlapDecomposition {
 public:
  OverlapDecomposition(Graph graph, std::vector<Subdomain> subdomains, int overlap,
                       std::vector<int> owner)
      : graph_{std::move(graph)},
        subdomains_{std::move(subdomains)},
        overlap_{overlap},
        owner_{std::move(owner)} {}

  const Graph& graph() const noexcept { return graph_; }
  int overlap() const noexcept { return overlap_; }
  std::size_t size() const noexcept { return subdomains_.size(); }
  const Subdomain& operator[](std::size_t l) const { return subdomains_.at(l); }
  const std::vector<Subdomain>& subdomains() const noexcept { return subdomains_; }

  /// Index l of the unique part V_l containing node k.
  int owner(NodeId k) const {
    graph_.require(k);
    return owner_[k];
  }

  /**
   * Smallest hop distance from V_l to N(W_l), minus one. Equals b for
   * W_l = N^b[V_l] and can exceed it for user-enlarged subdomains.
   */
  int effective_overlap(std::size_t l) const {
    const auto& s = subdomains_.at(l);
    if (s.open_boundary.empty()) {
      return kUnreachable;
    }
    auto dist = distances_to(graph_, s.open_boundary);
    int best = kUnreachable;
    for (NodeId k : s.exclusive) {
      best = std::min(best, dist[k]);
    }
    return best - 1;
  }

 private:
  Graph graph_;
  std::vector<Subdomain> subdomains_;
  int overlap_;
  std::vector<int> owner_;
};

namespace detail {

inline std::vector<int> check_partition(const Graph& g,
                                        const std::vector<NodeSet>& parts) {
  if (parts.empty()) {
    throw InputError{"partition must contain at least one part"};
  }
  std::vector<int> owner(static_cast<std::size_t>(g.node_count()), -1);
  for (std::size_t l = 0; l < parts.size(); ++l) {
    if (parts[l].empty()) {
      throw InputError{"part " + std::to_string(l) + " is empty"};
    }
    parts[l].validate(g);
    for (NodeId k : parts[l]) {
      if (owner[k] != -1) {
        throw InputError{"node " + std::to_string(k) + " belongs to parts " +
                         std::to_string(owner[k]) + " and " + std::to_string(l)};
      }
      owner[k] = static_cast<int>(l);
    }
  }
  for (NodeId k = 0; k < g.node_count(); ++k) {
    if (owner[k] == -1) {
      throw InputError{"node " + std::to_string(k) + " is not covered by any part"};
    }
  }
  return owner;
}

inline void check_interior(const Subdomain& s, std::size_t l, int b) {
  if (s.interior.empty()) {
    throw DegenerateSubdomainError{
        "subdomain " + std::to_string(l) + " has no interior nodes (W \\ T is "
        "empty at overlap " + std::to_string(b) + "); increase the overlap size"};
  }
}

}  // namespace detail

/// W_l = N^b[V_l] for every part.
inline OverlapDecomposition build_decomposition(const Graph& g,
                                                const std::vector<NodeSet>& parts,
                                                int b) {
  if (b < 0) {
    throw InputError{"overlap size must be nonnegative"};
  }
  auto owner = detail::check_partition(g, parts);
  std::vector<Subdomain> subdomains;
  subdomains.reserve(parts.size());
  for (std::size_t l = 0; l < parts.size(); ++l) {
    subdomains.push_back(make_subdomain(g, parts[l], bhop_neighborhood(g, parts[l], b)));
    detail::check_interior(subdomains.back(), l, b);
  }
  return OverlapDecomposition{g, std::move(subdomains), b, std::move(owner)};
}

/// User-supplied W_l; only N^b[V_l] ⊆ W_l is validated.
inline OverlapDecomposition build_decomposition(const Graph& g,
                                                const std::vector<NodeSet>& parts,
                                                int b,
                                                const std::vector<NodeSet>& custom) {
  if (b < 0) {
    throw InputError{"overlap size must be nonnegative"};
  }
  if (custom.size() != parts.size()) {
    throw InputError{"one custom subdomain per part is required"};
  }
  auto owner = detail::check_partition(g, parts);
  std::vector<Subdomain> subdomains;
  for (std::size_t l = 0; l < parts.size(); ++l) {
    custom[l].validate(g);
    if (!bhop_neighborhood(g, parts[l], b).is_subset_of(custom[l])) {
      throw InputError{"custom subdomain " + std::to_string(l) +
                       " does not contain the b-hop neighborhood of its part"};
    }
    subdomains.push_back(make_subdomain(g, parts[l], custom[l]));
    detail::check_interior(subdomains.back(), l, b);
  }
  return OverlapDecomposition{g, std::move(subdomains), b, std::move(owner)};
}

}  // namespace fogd

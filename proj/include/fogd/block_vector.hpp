#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fogd/error.hpp"
#include "fogd/graph.hpp"

namespace fogd {

/// Node set plus per-node block dimensions and their offsets in a stacked
/// vector. Nodes with zero dimension are kept; their blocks are empty.
class BlockLayout {
 public:
  BlockLayout() = default;

  /// `dims_by_node` is indexed by global node id.
  BlockLayout(NodeSet nodes, std::span<const int> dims_by_node)
      : nodes_{std::move(nodes)} {
    dims_.reserve(nodes_.size());
    offsets_.reserve(nodes_.size() + 1);
    offsets_.push_back(0);
    for (NodeId i : nodes_) {
      if (i >= static_cast<int>(dims_by_node.size())) {
        throw InputError{"layout node " + std::to_string(i) +
                         " has no dimension entry"};
      }
      int d = dims_by_node[i];
      if (d < 0) {
        throw InputError{"negative block dimension at node " + std::to_string(i)};
      }
      dims_.push_back(d);
      offsets_.push_back(offsets_.back() + d);
    }
  }

  const NodeSet& nodes() const noexcept { return nodes_; }
  std::size_t block_count() const noexcept { return nodes_.size(); }
  int total_dim() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }

  /// Dimension / offset by position in the node set.
  int dim_at(std::size_t pos) const { return dims_[pos]; }
  int offset_at(std::size_t pos) const { return offsets_[pos]; }

  std::size_t position(NodeId i) const {
    auto pos = nodes_.position(i);
    if (!pos) {
      throw InputError{"node " + std::to_string(i) + " is not in the layout"};
    }
    return *pos;
  }

  bool contains(NodeId i) const { return nodes_.contains(i); }
  int dim(NodeId i) const { return dims_[position(i)]; }
  int offset(NodeId i) const { return offsets_[position(i)]; }

  /// Same dimension table restricted to a subset of nodes.
  BlockLayout restrict(const NodeSet& subset) const {
    if (!subset.is_subset_of(nodes_)) {
      throw InputError{"restriction nodes are not a subset of the layout"};
    }
    BlockLayout out;
    out.nodes_ = subset;
    out.offsets_.push_back(0);
    for (NodeId i : subset) {
      int d = dim(i);
      out.dims_.push_back(d);
      out.offsets_.push_back(out.offsets_.back() + d);
    }
    return out;
  }

  friend bool operator==(const BlockLayout& a, const BlockLayout& b) {
    return a.nodes_ == b.nodes_ && a.dims_ == b.dims_;
  }

 private:
  NodeSet nodes_;
  std::vector<int> dims_;
  std::vector<int> offsets_;
};

using LayoutPtr = std::shared_ptr<const BlockLayout>;

inline LayoutPtr make_layout(NodeSet nodes, std::span<const int> dims_by_node) {
  return std::make_shared<const BlockLayout>(std::move(nodes), dims_by_node);
}

inline LayoutPtr restrict_layout(const LayoutPtr& layout, const NodeSet& subset) {
  if (subset == layout->nodes()) {
    return layout;
  }
  return std::make_shared<const BlockLayout>(layout->restrict(subset));
}

/// Stacked vector of per-node blocks over a layout.
class NodeBlockVector {
 public:
  NodeBlockVector() : layout_{std::make_shared<const BlockLayout>()} {}

  explicit NodeBlockVector(LayoutPtr layout)
      : layout_{std::move(layout)}, values_{Eigen::VectorXd::Zero(layout_->total_dim())} {}

  NodeBlockVector(LayoutPtr layout, Eigen::VectorXd values)
      : layout_{std::move(layout)}, values_{std::move(values)} {
    if (values_.size() != layout_->total_dim()) {
      throw InputError{"vector length " + std::to_string(values_.size()) +
                       " does not match layout dimension " +
                       std::to_string(layout_->total_dim())};
    }
  }

  const LayoutPtr& layout() const noexcept { return layout_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  Eigen::VectorXd& values() noexcept { return values_; }
  int size() const noexcept { return static_cast<int>(values_.size()); }

  auto block(NodeId i) { return values_.segment(layout_->offset(i), layout_->dim(i)); }
  auto block(NodeId i) const {
    return values_.segment(layout_->offset(i), layout_->dim(i));
  }

  double norm() const { return values_.norm(); }

  /// Copy of the blocks over `subset`.
  NodeBlockVector restrict(const NodeSet& subset) const {
    auto sub = restrict_layout(layout_, subset);
    NodeBlockVector out{sub};
    for (std::size_t k = 0; k < subset.size(); ++k) {
      NodeId i = subset[k];
      out.values_.segment(sub->offset_at(k), sub->dim_at(k)) = block(i);
    }
    return out;
  }

  /// Re-embeds into a larger layout, filling absent blocks with zeros.
  NodeBlockVector embed(const LayoutPtr& target) const {
    NodeBlockVector out{target};
    for (std::size_t k = 0; k < layout_->block_count(); ++k) {
      NodeId i = layout_->nodes()[k];
      out.block(i) = values_.segment(layout_->offset_at(k), layout_->dim_at(k));
    }
    return out;
  }

 private:
  LayoutPtr layout_;
  Eigen::VectorXd values_;
};

/// Concatenation [a; b] of two block vectors' values.
inline Eigen::VectorXd stack(const NodeBlockVector& a, const NodeBlockVector& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a.values(), b.values();
  return out;
}

}  // namespace fogd

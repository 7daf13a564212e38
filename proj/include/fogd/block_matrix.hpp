#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "fogd/block_vector.hpp"
#include "fogd/error.hpp"
#include "fogd/graph.hpp"

namespace fogd {

/**
 * Block-sparse matrix indexed by (row node, column node).
 *
 * Blocks live in an ordered map so iteration is sorted by (row, col)
 * independently of insertion order. Absent blocks read as zero.
 */
class NodeBlockMatrix {
 public:
  using Key = std::pair<NodeId, NodeId>;
  using BlockMap = std::map<Key, Eigen::MatrixXd>;

  NodeBlockMatrix() = default;

  NodeBlockMatrix(LayoutPtr rows, LayoutPtr cols)
      : rows_{std::move(rows)}, cols_{std::move(cols)} {}

  const LayoutPtr& row_layout() const noexcept { return rows_; }
  const LayoutPtr& col_layout() const noexcept { return cols_; }
  int rows() const noexcept { return rows_->total_dim(); }
  int cols() const noexcept { return cols_->total_dim(); }
  const BlockMap& blocks() const noexcept { return blocks_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }

  /// Accumulates `value` into block (i, j).
  void add_block(NodeId i, NodeId j, const Eigen::Ref<const Eigen::MatrixXd>& value) {
    int r = rows_->dim(i);
    int c = cols_->dim(j);
    if (value.rows() != r || value.cols() != c) {
      throw AssemblyError{"block (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") has shape " + std::to_string(value.rows()) + "x" +
                          std::to_string(value.cols()) + ", expected " +
                          std::to_string(r) + "x" + std::to_string(c)};
    }
    if (r == 0 || c == 0) {
      return;
    }
    auto [it, inserted] = blocks_.try_emplace(Key{i, j}, value);
    if (!inserted) {
      it->second += value;
    }
  }

  bool has_block(NodeId i, NodeId j) const { return blocks_.contains(Key{i, j}); }

  Eigen::MatrixXd block(NodeId i, NodeId j) const {
    if (auto it = blocks_.find(Key{i, j}); it != blocks_.end()) {
      return it->second;
    }
    return Eigen::MatrixXd::Zero(rows_->dim(i), cols_->dim(j));
  }

  /// Drops blocks whose entries are all exactly zero.
  void prune() {
    std::erase_if(blocks_, [](const auto& kv) { return (kv.second.array() == 0.0).all(); });
  }

  /// Adds shift * I to every diagonal block (square layouts only).
  void shift_diagonal(double shift) {
    require_square();
    for (std::size_t k = 0; k < rows_->block_count(); ++k) {
      NodeId i = rows_->nodes()[k];
      int d = rows_->dim_at(k);
      if (d > 0) {
        add_block(i, i, shift * Eigen::MatrixXd::Identity(d, d));
      }
    }
  }

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
    if (x.size() != cols()) {
      throw InputError{"matrix-vector size mismatch"};
    }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(rows());
    for (const auto& [key, b] : blocks_) {
      y.segment(rows_->offset(key.first), b.rows()).noalias() +=
          b * x.segment(cols_->offset(key.second), b.cols());
    }
    return y;
  }

  NodeBlockVector multiply(const NodeBlockVector& x) const {
    require_same(*x.layout(), *cols_, "column");
    return NodeBlockVector{rows_, multiply(x.values())};
  }

  Eigen::VectorXd transpose_multiply(const Eigen::VectorXd& y) const {
    if (y.size() != rows()) {
      throw InputError{"transpose matrix-vector size mismatch"};
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(cols());
    for (const auto& [key, b] : blocks_) {
      x.segment(cols_->offset(key.second), b.cols()).noalias() +=
          b.transpose() * y.segment(rows_->offset(key.first), b.rows());
    }
    return x;
  }

  NodeBlockVector transpose_multiply(const NodeBlockVector& y) const {
    require_same(*y.layout(), *rows_, "row");
    return NodeBlockVector{cols_, transpose_multiply(y.values())};
  }

  NodeBlockMatrix transpose() const {
    NodeBlockMatrix out{cols_, rows_};
    for (const auto& [key, b] : blocks_) {
      out.blocks_.emplace(Key{key.second, key.first}, b.transpose());
    }
    return out;
  }

  /// M[rows][cols]; both sets must be subsets of this matrix's index sets.
  NodeBlockMatrix restrict(const NodeSet& row_nodes, const NodeSet& col_nodes) const {
    if (!row_nodes.is_subset_of(rows_->nodes()) ||
        !col_nodes.is_subset_of(cols_->nodes())) {
      throw InputError{"restriction index sets must be subsets of the matrix index sets"};
    }
    NodeBlockMatrix out{restrict_layout(rows_, row_nodes),
                        restrict_layout(cols_, col_nodes)};
    for (NodeId i : row_nodes) {
      auto it = blocks_.lower_bound(Key{i, std::numeric_limits<NodeId>::min()});
      for (; it != blocks_.end() && it->first.first == i; ++it) {
        if (col_nodes.contains(it->first.second)) {
          out.blocks_.emplace(it->first, it->second);
        }
      }
    }
    return out;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows(), cols());
    for (const auto& [key, b] : blocks_) {
      out.block(rows_->offset(key.first), cols_->offset(key.second), b.rows(),
                b.cols()) = b;
    }
    return out;
  }

  NodeBlockMatrix& operator+=(const NodeBlockMatrix& other) {
    require_same(*other.rows_, *rows_, "row");
    require_same(*other.cols_, *cols_, "column");
    for (const auto& [key, b] : other.blocks_) {
      add_block(key.first, key.second, b);
    }
    return *this;
  }

  NodeBlockMatrix& operator*=(double s) {
    for (auto& [key, b] : blocks_) {
      b *= s;
    }
    return *this;
  }

  /// Coordinate dump: row-node col-node row-offset col-offset value.
  void write_coordinate(const std::string& path) const {
    std::ofstream out{path};
    if (!out) {
      throw InputError{"cannot write " + path};
    }
    out << std::setprecision(17);
    for (const auto& [key, b] : blocks_) {
      for (int r = 0; r < b.rows(); ++r) {
        for (int c = 0; c < b.cols(); ++c) {
          if (b(r, c) != 0.0) {
            out << key.first << ' ' << key.second << ' ' << r << ' ' << c << ' '
                << b(r, c) << '\n';
          }
        }
      }
    }
  }

 private:
  void require_square() const {
    if (!(*rows_ == *cols_)) {
      throw InputError{"operation requires a square block matrix"};
    }
  }

  static void require_same(const BlockLayout& a, const BlockLayout& b,
                           const char* what) {
    if (&a != &b && !(a == b)) {
      throw InputError{std::string{what} + " layouts differ"};
    }
  }

  LayoutPtr rows_ = std::make_shared<const BlockLayout>();
  LayoutPtr cols_ = std::make_shared<const BlockLayout>();
  BlockMap blocks_;
};

/**
 * Aᵀ B for block matrices sharing a row layout. Row iteration is merged over
 * the sorted block maps, so cost is proportional to the products formed.
 */
inline NodeBlockMatrix transpose_times(const NodeBlockMatrix& a,
                                       const NodeBlockMatrix& b) {
  if (!(*a.row_layout() == *b.row_layout())) {
    throw AssemblyError{"transpose_times requires equal row layouts"};
  }
  NodeBlockMatrix out{a.col_layout(), b.col_layout()};
  auto ia = a.blocks().begin();
  auto ib = b.blocks().begin();
  while (ia != a.blocks().end() && ib != b.blocks().end()) {
    NodeId row = std::min(ia->first.first, ib->first.first);
    auto ea = ia;
    while (ea != a.blocks().end() && ea->first.first == row) {
      ++ea;
    }
    auto eb = ib;
    while (eb != b.blocks().end() && eb->first.first == row) {
      ++eb;
    }
    if (ia->first.first == row && ib->first.first == row) {
      for (auto pa = ia; pa != ea; ++pa) {
        for (auto pb = ib; pb != eb; ++pb) {
          out.add_block(pa->first.second, pb->first.second,
                        pa->second.transpose() * pb->second);
        }
      }
    }
    ia = ea;
    ib = eb;
  }
  return out;
}

/// Smallest singular value (min(rows, cols)-th) via dense SVD.
inline double min_singular_value(const Eigen::MatrixXd& dense) {
  if (dense.rows() == 0 || dense.cols() == 0) {
    throw InputError{"singular value of an empty matrix"};
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd{dense};
  return svd.singularValues().minCoeff();
}

inline double min_singular_value(const NodeBlockMatrix& mat) {
  if (mat.rows() == 0 || mat.cols() == 0) {
    throw InputError{"singular value of an empty matrix"};
  }
  return min_singular_value(mat.to_dense());
}

/**
 * Power-iteration estimate of ‖A‖₂ for a square symmetric block matrix.
 *
 * Starts from a fixed deterministic vector so repeated calls agree bitwise.
 */
inline double spectral_norm_estimate(const NodeBlockMatrix& mat, int iters) {
  int n = mat.rows();
  if (n == 0) {
    return 0.0;
  }
  Eigen::VectorXd v(n);
  for (int k = 0; k < n; ++k) {
    v[k] = 1.0 + 0.5 * std::sin(1.0 + 0.7 * k);
  }
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < std::max(iters, 1); ++it) {
    Eigen::VectorXd w = mat.multiply(v);
    double nrm = w.norm();
    if (nrm == 0.0) {
      return estimate;
    }
    estimate = nrm;
    v = w / nrm;
  }
  return estimate;
}

}  // namespace fogd

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/cuthill_mckee_ordering.hpp>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "fogd/block_matrix.hpp"
#include "fogd/block_vector.hpp"
#include "fogd/error.hpp"

namespace fogd {

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;

  friend bool operator==(const Inertia&, const Inertia&) = default;
};

inline std::string to_string(const Inertia& in) {
  return "(" + std::to_string(in.positive) + ", " + std::to_string(in.negative) +
         ", " + std::to_string(in.zero) + ")";
}

/// Symmetric indefinite system [[H, Gᵀ], [G, 0]] over node-block layouts.
class KktSystem {
 public:
  KktSystem() = default;

  KktSystem(NodeBlockMatrix hessian, NodeBlockMatrix jacobian)
      : hessian_{std::move(hessian)}, jacobian_{std::move(jacobian)} {
    if (!(*hessian_.row_layout() == *hessian_.col_layout())) {
      throw AssemblyError{"KKT Hessian block must be square over one layout"};
    }
    if (!(*jacobian_.col_layout() == *hessian_.row_layout())) {
      throw AssemblyError{"KKT Jacobian columns must match the Hessian layout"};
    }
  }

  const NodeBlockMatrix& hessian() const noexcept { return hessian_; }
  const NodeBlockMatrix& jacobian() const noexcept { return jacobian_; }
  const LayoutPtr& primal_layout() const noexcept { return hessian_.row_layout(); }
  const LayoutPtr& dual_layout() const noexcept { return jacobian_.row_layout(); }
  int primal_dim() const noexcept { return hessian_.rows(); }
  int dual_dim() const noexcept { return jacobian_.rows(); }
  int dimension() const noexcept { return primal_dim() + dual_dim(); }

  /// K z for z = [primal; dual].
  Eigen::VectorXd multiply(const Eigen::VectorXd& z) const {
    int n = primal_dim();
    int m = dual_dim();
    Eigen::VectorXd out(n + m);
    out.head(n) = hessian_.multiply(Eigen::VectorXd{z.head(n)}) +
                  jacobian_.transpose_multiply(Eigen::VectorXd{z.tail(m)});
    out.tail(m) = jacobian_.multiply(Eigen::VectorXd{z.head(n)});
    return out;
  }

  Eigen::MatrixXd to_dense() const {
    int n = primal_dim();
    int m = dual_dim();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + m, n + m);
    k.topLeftCorner(n, n) = hessian_.to_dense();
    Eigen::MatrixXd g = jacobian_.to_dense();
    k.bottomLeftCorner(m, n) = g;
    k.topRightCorner(n, m) = g.transpose();
    return k;
  }

 private:
  NodeBlockMatrix hessian_;
  NodeBlockMatrix jacobian_;
};

inline KktSystem kkt_assemble(NodeBlockMatrix hessian, NodeBlockMatrix jacobian) {
  return KktSystem{std::move(hessian), std::move(jacobian)};
}

/**
 * Block LDLᵀ factorization of a KKT system with node-sized pivots.
 *
 * Every graph node contributes one pivot block holding its primal and dual
 * variables. Pivot blocks are eliminated in reverse Cuthill-McKee order of the
 * node coupling graph and stored in envelope (skyline) form, so fill stays
 * inside the profile. The matrix is first equilibrated by a symmetric
 * diagonal scaling, which leaves the inertia unchanged. Each pivot block is
 * inverted through its symmetric
 * eigendecomposition, which also yields the inertia by Sylvester's law.
 * Singular pivots are pseudo-inverted and counted as zero eigenvalues, and
 * solve() refuses to run on such a factorization.
 */
class KktFactorization {
 public:
  explicit KktFactorization(const KktSystem& sys, double pivot_tolerance = 1e-13) {
    build_structure(sys);
    fill_values(sys);
    factor(pivot_tolerance);
  }

  const Inertia& inertia() const noexcept { return inertia_; }
  int dimension() const noexcept { return dim_; }
  bool singular() const noexcept { return inertia_.zero > 0; }

  /// Node and magnitude of the first singular pivot (or -1, 0).
  int singular_pivot_node() const noexcept { return singular_node_; }
  double singular_pivot_magnitude() const noexcept { return singular_magnitude_; }

  /**
   * Smallest pivot |eigenvalue| relative to the equilibrated row scale of its
   * eigenvector. Pivots at or below the tolerance count as zero.
   */
  double min_relative_pivot() const noexcept { return min_pivot_; }

  /**
   * Solves K z = rhs for rhs = [primal; dual] in layout order, with up to
   * three steps of iterative refinement against the equilibrated matrix.
   */
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (rhs.size() != dim_) {
      throw InputError{"KKT right-hand side has length " + std::to_string(rhs.size()) +
                       ", expected " + std::to_string(dim_)};
    }
    if (singular()) {
      throw SolverError{"KKT matrix is singular: pivot block at node " +
                            std::to_string(singular_node_) + " has |eigenvalue| " +
                            std::to_string(singular_magnitude_) + " (inertia " +
                            to_string(inertia_) + ")",
                        singular_node_, singular_magnitude_};
    }
    Eigen::VectorXd b(dim_);
    for (int s = 0; s < dim_; ++s) {
      b[s] = scale_[s] * rhs[perm_[s]];
    }
    Eigen::VectorXd x = b;
    solve_internal(x);
    double bnorm = b.norm();
    for (int step = 0; step < 3 && bnorm > 0.0; ++step) {
      Eigen::VectorXd r = b - multiply_internal(x);
      if (r.norm() <= 1e-15 * bnorm) {
        break;
      }
      solve_internal(r);
      x += r;
    }
    Eigen::VectorXd out(dim_);
    for (int s = 0; s < dim_; ++s) {
      out[perm_[s]] = scale_[s] * x[s];
    }
    return out;
  }

 private:
  void build_structure(const KktSystem& sys) {
    const auto& pl = *sys.primal_layout();
    const auto& dl = *sys.dual_layout();
    int n = sys.primal_dim();
    dim_ = sys.dimension();

    NodeSet nodes = set_union(pl.nodes(), dl.nodes());
    std::vector<int> sizes;
    std::vector<NodeId> kept;
    for (NodeId i : nodes) {
      int d = (pl.contains(i) ? pl.dim(i) : 0) + (dl.contains(i) ? dl.dim(i) : 0);
      if (d > 0) {
        kept.push_back(i);
        sizes.push_back(d);
      }
    }
    NodeSet super{kept};
    int count = static_cast<int>(kept.size());

    using BGraph = boost::adjacency_list<boost::vecS, boost::vecS, boost::undirectedS>;
    BGraph bg(static_cast<std::size_t>(count));
    auto link = [&](NodeId a, NodeId b) {
      if (a == b) {
        return;
      }
      auto pa = super.position(a);
      auto pb = super.position(b);
      if (pa && pb && *pa < *pb) {
        boost::add_edge(*pa, *pb, bg);
      }
    };
    for (const auto& [key, blk] : sys.hessian().blocks()) {
      link(key.first, key.second);
    }
    for (const auto& [key, blk] : sys.jacobian().blocks()) {
      link(key.first, key.second);
      link(key.second, key.first);
    }
    std::vector<BGraph::vertex_descriptor> order(static_cast<std::size_t>(count));
    if (count > 0) {
      boost::cuthill_mckee_ordering(bg, order.rbegin());
    }
    std::vector<int> elim_pos(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
      elim_pos[order[k]] = k;
    }

    super_node_.resize(count);
    super_offset_.assign(count + 1, 0);
    perm_.resize(dim_);
    for (int k = 0; k < count; ++k) {
      int idx = static_cast<int>(order[k]);
      NodeId i = kept[idx];
      super_node_[k] = i;
      super_offset_[k + 1] = super_offset_[k] + sizes[idx];
      int s = super_offset_[k];
      if (pl.contains(i)) {
        for (int a = 0; a < pl.dim(i); ++a) {
          perm_[s++] = pl.offset(i) + a;
        }
      }
      if (dl.contains(i)) {
        for (int a = 0; a < dl.dim(i); ++a) {
          perm_[s++] = n + dl.offset(i) + a;
        }
      }
    }

    std::vector<int> first_block(count);
    for (int k = 0; k < count; ++k) {
      first_block[k] = k;
    }
    using Traits = boost::graph_traits<BGraph>;
    Traits::edge_iterator e;
    Traits::edge_iterator eend;
    for (std::tie(e, eend) = boost::edges(bg); e != eend; ++e) {
      int a = elim_pos[boost::source(*e, bg)];
      int b = elim_pos[boost::target(*e, bg)];
      if (a > b) {
        std::swap(a, b);
      }
      first_block[b] = std::min(first_block[b], a);
    }

    first_.resize(dim_);
    block_of_.resize(dim_);
    row_ptr_.assign(dim_ + 1, 0);
    for (int k = 0; k < count; ++k) {
      for (int r = super_offset_[k]; r < super_offset_[k + 1]; ++r) {
        first_[r] = super_offset_[first_block[k]];
        block_of_[r] = k;
        row_ptr_[r + 1] = row_ptr_[r] + static_cast<std::size_t>(r - first_[r] + 1);
      }
    }
    inverse_perm_.resize(dim_);
    for (int s = 0; s < dim_; ++s) {
      inverse_perm_[perm_[s]] = s;
    }
  }

  double& entry(std::vector<double>& store, int r, int c) {
    return store[row_ptr_[r] + static_cast<std::size_t>(c - first_[r])];
  }

  void put(int user_r, int user_c, double v) {
    int r = inverse_perm_[user_r];
    int c = inverse_perm_[user_c];
    if (r < c) {
      std::swap(r, c);
    }
    if (c < first_[r]) {
      throw AssemblyError{"KKT entry falls outside the envelope"};
    }
    entry(a_, r, c) = v;
  }

  void fill_values(const KktSystem& sys) {
    a_.assign(row_ptr_.back(), 0.0);
    const auto& pl = *sys.primal_layout();
    const auto& dl = *sys.dual_layout();
    int n = sys.primal_dim();
    for (const auto& [key, blk] : sys.hessian().blocks()) {
      int ro = pl.offset(key.first);
      int co = pl.offset(key.second);
      for (int c = 0; c < blk.cols(); ++c) {
        for (int r = 0; r < blk.rows(); ++r) {
          put(ro + r, co + c, blk(r, c));
        }
      }
    }
    for (const auto& [key, blk] : sys.jacobian().blocks()) {
      int ro = n + dl.offset(key.first);
      int co = pl.offset(key.second);
      for (int c = 0; c < blk.cols(); ++c) {
        for (int r = 0; r < blk.rows(); ++r) {
          put(ro + r, co + c, blk(r, c));
        }
      }
    }
    equilibrate();
    row_scale_ = row_max();
  }

  std::vector<double> row_max() {
    std::vector<double> out(dim_, 0.0);
    for (int r = 0; r < dim_; ++r) {
      for (int c = first_[r]; c <= r; ++c) {
        double v = std::abs(entry(a_, r, c));
        out[r] = std::max(out[r], v);
        out[c] = std::max(out[c], v);
      }
    }
    return out;
  }

  // Symmetric Ruiz scaling A <- S A S, driving every row max toward 1, so
  // that a large Hessian shift does not swamp the constraint rows.
  void equilibrate() {
    scale_.assign(dim_, 1.0);
    for (int sweep = 0; sweep < 20; ++sweep) {
      auto mx = row_max();
      std::vector<double> step(dim_, 1.0);
      double worst = 0.0;
      for (int r = 0; r < dim_; ++r) {
        if (mx[r] > 0.0) {
          step[r] = 1.0 / std::sqrt(mx[r]);
          worst = std::max(worst, std::abs(1.0 - mx[r]));
        }
      }
      if (worst < 0.05) {
        break;
      }
      for (int r = 0; r < dim_; ++r) {
        scale_[r] *= step[r];
        for (int c = first_[r]; c <= r; ++c) {
          entry(a_, r, c) *= step[r] * step[c];
        }
      }
    }
  }

  void factor(double pivot_tolerance) {
    l_.assign(row_ptr_.back(), 0.0);
    int count = static_cast<int>(super_node_.size());
    dinv_.resize(count);
    min_pivot_ = std::numeric_limits<double>::infinity();
    std::vector<double> work;
    for (int k = 0; k < count; ++k) {
      int ok = super_offset_[k];
      int dk = super_offset_[k + 1] - ok;
      int f = ok == 0 ? 0 : first_[ok];
      int width = ok - f;
      work.assign(static_cast<std::size_t>(dk) * width, 0.0);
      for (int r = 0; r < dk; ++r) {
        for (int t = f; t < ok; ++t) {
          work[r * width + (t - f)] = entry(a_, ok + r, t);
        }
      }
      // W(r, c) = A(r, c) - sum_{t < o_j} W(r, t) L(c, t); L(r, blk j) = W D_j^{-1}.
      for (int j = width > 0 ? block_of_[f] : k; j < k; ++j) {
        int oj = super_offset_[j];
        int dj = super_offset_[j + 1] - oj;
        for (int r = 0; r < dk; ++r) {
          double* wr = &work[r * width];
          for (int c = oj; c < oj + dj; ++c) {
            int t0 = std::max(f, first_[c]);
            int len = oj - t0;
            if (len > 0) {
              Eigen::Map<const Eigen::VectorXd> wv{wr + (t0 - f), len};
              Eigen::Map<const Eigen::VectorXd> lv{&entry(l_, c, t0), len};
              wr[c - f] -= wv.dot(lv);
            }
          }
          Eigen::Map<const Eigen::RowVectorXd> wblk{wr + (oj - f), dj};
          Eigen::Map<Eigen::RowVectorXd> lblk{&entry(l_, ok + r, oj), dj};
          lblk.noalias() = wblk * dinv_[j];
        }
      }
      Eigen::MatrixXd d(dk, dk);
      for (int r1 = 0; r1 < dk; ++r1) {
        for (int r2 = 0; r2 <= r1; ++r2) {
          double v = entry(a_, ok + r1, ok + r2);
          if (width > 0) {
            Eigen::Map<const Eigen::VectorXd> wv{&work[r1 * width], width};
            Eigen::Map<const Eigen::VectorXd> lv{&entry(l_, ok + r2, f), width};
            v -= wv.dot(lv);
          }
          d(r1, r2) = v;
          d(r2, r1) = v;
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{d};
      const auto& ev = eig.eigenvalues();
      Eigen::VectorXd inv(dk);
      for (int a = 0; a < dk; ++a) {
        double lam = ev[a];
        // Scale of the rows this eigenvector lives on.
        double scale = 0.0;
        for (int r = 0; r < dk; ++r) {
          scale += eig.eigenvectors()(r, a) * eig.eigenvectors()(r, a) * row_scale_[ok + r];
        }
        if (scale == 0.0) {
          scale = 1.0;
        }
        min_pivot_ = std::min(min_pivot_, std::abs(lam) / scale);
        if (std::abs(lam) <= pivot_tolerance * scale) {
          ++inertia_.zero;
          inv[a] = 0.0;
          if (singular_node_ < 0) {
            singular_node_ = super_node_[k];
            singular_magnitude_ = std::abs(lam);
          }
        } else {
          (lam > 0.0 ? inertia_.positive : inertia_.negative) += 1;
          inv[a] = 1.0 / lam;
        }
      }
      dinv_[k] = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    }
  }

  void solve_internal(Eigen::VectorXd& x) const {
    int count = static_cast<int>(super_node_.size());
    for (int k = 0; k < count; ++k) {
      int ok = super_offset_[k];
      for (int r = ok; r < super_offset_[k + 1]; ++r) {
        int len = ok - first_[r];
        if (len > 0) {
          Eigen::Map<const Eigen::VectorXd> lv{&l_[row_ptr_[r]], len};
          x[r] -= lv.dot(x.segment(first_[r], len));
        }
      }
    }
    for (int k = 0; k < count; ++k) {
      int ok = super_offset_[k];
      int dk = super_offset_[k + 1] - ok;
      x.segment(ok, dk) = dinv_[k] * x.segment(ok, dk);
    }
    for (int k = count - 1; k >= 0; --k) {
      int ok = super_offset_[k];
      for (int r = ok; r < super_offset_[k + 1]; ++r) {
        int len = ok - first_[r];
        if (len > 0) {
          Eigen::Map<const Eigen::VectorXd> lv{&l_[row_ptr_[r]], len};
          x.segment(first_[r], len) -= lv * x[r];
        }
      }
    }
  }

  Eigen::VectorXd multiply_internal(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(dim_);
    for (int r = 0; r < dim_; ++r) {
      int len = r - first_[r];
      const double* row = &a_[row_ptr_[r]];
      if (len > 0) {
        Eigen::Map<const Eigen::VectorXd> av{row, len};
        y[r] += av.dot(x.segment(first_[r], len));
        y.segment(first_[r], len) += av * x[r];
      }
      y[r] += row[len] * x[r];
    }
    return y;
  }

  int dim_ = 0;
  std::vector<NodeId> super_node_;
  std::vector<int> super_offset_;
  std::vector<int> perm_;
  std::vector<int> inverse_perm_;
  std::vector<int> first_;
  std::vector<int> block_of_;
  std::vector<std::size_t> row_ptr_;
  std::vector<double> a_;
  std::vector<double> l_;
  std::vector<Eigen::MatrixXd> dinv_;
  Inertia inertia_;
  std::vector<double> row_scale_;
  /// Symmetric equilibration factors, in elimination order.
  std::vector<double> scale_;
  double min_pivot_ = 0.0;
  int singular_node_ = -1;
  double singular_magnitude_ = 0.0;
};

struct KktSolution {
  NodeBlockVector primal;
  NodeBlockVector dual;
};

/// Solves K (primal; dual) = (rhs_primal; rhs_dual).
inline KktSolution kkt_solve(const KktSystem& sys, const KktFactorization& fact,
                             const NodeBlockVector& rhs_primal,
                             const NodeBlockVector& rhs_dual) {
  if (rhs_primal.size() != sys.primal_dim() || rhs_dual.size() != sys.dual_dim()) {
    throw InputError{"KKT right-hand side dimensions do not match the system"};
  }
  Eigen::VectorXd z = fact.solve(stack(rhs_primal, rhs_dual));
  return {NodeBlockVector{sys.primal_layout(), z.head(sys.primal_dim())},
          NodeBlockVector{sys.dual_layout(), z.tail(sys.dual_dim())}};
}

/// Relative residual ‖K z − rhs‖ / max(‖rhs‖, 1e-300).
inline double kkt_relative_residual(const KktSystem& sys, const Eigen::VectorXd& z,
                                    const Eigen::VectorXd& rhs) {
  double denom = std::max(rhs.norm(), 1e-300);
  return (sys.multiply(z) - rhs).norm() / denom;
}

}  // namespace fogd

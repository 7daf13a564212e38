#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fogd/block_matrix.hpp"
#include "fogd/block_vector.hpp"
#include "fogd/error.hpp"
#include "fogd/graph.hpp"
#include "fogd/kkt.hpp"

namespace fogd {

/**
 * Objective and constraint callbacks of one graph node.
 *
 * Every callback receives the stacked primal variables of the closed
 * neighborhood N[i], ordered by ascending node id. Derivatives are returned
 * with respect to that same stacked vector. The constraint Hessian is
 * requested already contracted with the node's multipliers,
 * Σ_k λ_ik ∇² c_ik.
 */
struct NodeFunctions {
  int primal_dim = 0;
  int constraint_dim = 0;

  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> objective_gradient;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> objective_hessian;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> constraint;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> constraint_jacobian;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      constraint_hessian;
};

/// Graph-structured equality-constrained NLP: min Σ f_i s.t. c_i = 0.
class GsNlpModel {
 public:
  GsNlpModel(Graph graph, std::vector<NodeFunctions> nodes)
      : graph_{std::move(graph)}, nodes_{std::move(nodes)} {
    if (static_cast<int>(nodes_.size()) != graph_.node_count()) {
      throw InputError{"one NodeFunctions entry per graph node is required"};
    }
    primal_dims_.reserve(nodes_.size());
    dual_dims_.reserve(nodes_.size());
    for (NodeId i = 0; i < graph_.node_count(); ++i) {
      const auto& nf = nodes_[i];
      if (nf.primal_dim < 0 || nf.constraint_dim < 0) {
        throw InputError{"negative dimension at node " + std::to_string(i)};
      }
      if (!nf.objective || !nf.objective_gradient || !nf.objective_hessian) {
        throw InputError{"node " + std::to_string(i) + " lacks objective callbacks"};
      }
      if (nf.constraint_dim > 0 &&
          (!nf.constraint || !nf.constraint_jacobian || !nf.constraint_hessian)) {
        throw InputError{"node " + std::to_string(i) + " lacks constraint callbacks"};
      }
      primal_dims_.push_back(nf.primal_dim);
      dual_dims_.push_back(nf.constraint_dim);
    }
    auto all = NodeSet::all(graph_.node_count());
    primal_layout_ = make_layout(all, primal_dims_);
    dual_layout_ = make_layout(all, dual_dims_);
    neighborhoods_.reserve(nodes_.size());
    for (NodeId i = 0; i < graph_.node_count(); ++i) {
      std::vector<NodeId> nb{graph_.neighbors(i).begin(), graph_.neighbors(i).end()};
      nb.push_back(i);
      neighborhoods_.push_back(NodeSet::from_unsorted(std::move(nb)));
    }
  }

  const Graph& graph() const noexcept { return graph_; }
  int node_count() const noexcept { return graph_.node_count(); }
  const NodeFunctions& node(NodeId i) const { return nodes_.at(i); }
  const std::vector<int>& primal_dims() const noexcept { return primal_dims_; }
  const std::vector<int>& dual_dims() const noexcept { return dual_dims_; }
  const LayoutPtr& primal_layout() const noexcept { return primal_layout_; }
  const LayoutPtr& dual_layout() const noexcept { return dual_layout_; }
  int primal_dim() const noexcept { return primal_layout_->total_dim(); }
  int dual_dim() const noexcept { return dual_layout_->total_dim(); }

  /// N[i], sorted.
  const NodeSet& neighborhood(NodeId i) const { return neighborhoods_.at(i); }

  /// Stacked {x_j}_{j ∈ N[i]}.
  Eigen::VectorXd gather(NodeId i, const NodeBlockVector& x) const {
    const auto& nb = neighborhood(i);
    int total = 0;
    for (NodeId j : nb) {
      total += primal_dims_[j];
    }
    Eigen::VectorXd out(total);
    int pos = 0;
    for (NodeId j : nb) {
      out.segment(pos, primal_dims_[j]) = x.block(j);
      pos += primal_dims_[j];
    }
    return out;
  }

  NodeBlockVector zero_primal() const { return NodeBlockVector{primal_layout_}; }
  NodeBlockVector zero_dual() const { return NodeBlockVector{dual_layout_}; }

 private:
  Graph graph_;
  std::vector<NodeFunctions> nodes_;
  std::vector<int> primal_dims_;
  std::vector<int> dual_dims_;
  LayoutPtr primal_layout_;
  LayoutPtr dual_layout_;
  std::vector<NodeSet> neighborhoods_;
};

enum class HessianMode { none, levenberg, adaptive };

inline std::string to_string(HessianMode mode) {
  switch (mode) {
    case HessianMode::none:
      return "none";
    case HessianMode::levenberg:
      return "levenberg";
    case HessianMode::adaptive:
      return "adaptive";
  }
  return "unknown";
}

inline HessianMode parse_hessian_mode(const std::string& s) {
  if (s == "none") {
    return HessianMode::none;
  }
  if (s == "levenberg") {
    return HessianMode::levenberg;
  }
  if (s == "adaptive") {
    return HessianMode::adaptive;
  }
  throw InputError{"unknown Hessian mode '" + s + "'"};
}

struct HessianOptions {
  HessianMode mode = HessianMode::adaptive;
  /// Levenberg margin γ_H in Ĥ = H + (γ_H + ‖H‖) I.
  double gamma_h = 0.1;
  double sigma_min = 1e-8;
  double sigma_max = 1e12;
  /// Power iterations for the ‖H‖ estimate.
  int norm_iterations = 50;
};

/// Quantities that do not need second derivatives; enough for merit values.
struct FirstOrderEvaluation {
  double objective = 0.0;
  /// f_i per node; differencing these keeps merit changes resolvable near a
  /// solution where f itself is large.
  Eigen::VectorXd objective_terms;
  NodeBlockVector constraints;
  NodeBlockVector objective_gradient;
  NodeBlockMatrix jacobian;
  /// ∇ₓL = ∇f + Gᵀλ.
  NodeBlockVector lagrangian_gradient;
};

/**
 * Everything Algorithm-level code needs at one primal-dual point. Immutable;
 * the optional factorization is the probe factorization of the full KKT
 * matrix [[Ĥ, Gᵀ], [G, 0]] when one was computed during modification.
 */
struct EvaluationSnapshot {
  NodeBlockVector x;
  NodeBlockVector lambda;
  double objective = 0.0;
  Eigen::VectorXd objective_terms;
  NodeBlockVector constraints;
  NodeBlockVector objective_gradient;
  NodeBlockVector lagrangian_gradient;
  NodeBlockMatrix jacobian;
  NodeBlockMatrix hessian;
  NodeBlockMatrix modified_hessian;
  double sigma = 0.0;
  HessianMode mode = HessianMode::none;
  std::shared_ptr<const KktFactorization> factorization;

  /// L = f + λᵀc.
  double lagrangian() const {
    return objective + lambda.values().dot(constraints.values());
  }

  /// ‖(∇ₓL, c)‖.
  double kkt_residual() const {
    return std::sqrt(lagrangian_gradient.values().squaredNorm() +
                     constraints.values().squaredNorm());
  }
};

namespace detail {

/// Neumaier-compensated sum, accurate to a few ulps of the result.
inline double compensated_sum(const Eigen::VectorXd& v) {
  double sum = 0.0;
  double carry = 0.0;
  for (double x : v) {
    double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + carry;
}

inline void require_finite(double v, NodeId i, const char* what) {
  if (!std::isfinite(v)) {
    throw EvaluationError{std::string{what} + " is not finite at node " +
                              std::to_string(i),
                          i};
  }
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& v, NodeId i, const char* what) {
  if (!v.allFinite()) {
    throw EvaluationError{std::string{what} + " is not finite at node " +
                              std::to_string(i),
                          i};
  }
}

inline void require_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                          NodeId i, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw EvaluationError{std::string{what} + " at node " + std::to_string(i) +
                              " has shape " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + ", expected " +
                              std::to_string(rows) + "x" + std::to_string(cols),
                          i};
  }
}

}  // namespace detail

inline void check_point(const GsNlpModel& model, const NodeBlockVector& x,
                        const NodeBlockVector& lambda) {
  if (!(*x.layout() == *model.primal_layout()) ||
      !(*lambda.layout() == *model.dual_layout())) {
    throw InputError{"point dimensions do not match the model tables"};
  }
}

inline FirstOrderEvaluation evaluate_first_order(const GsNlpModel& model,
                                                 const NodeBlockVector& x,
                                                 const NodeBlockVector& lambda) {
  check_point(model, x, lambda);
  FirstOrderEvaluation ev;
  ev.objective_terms = Eigen::VectorXd::Zero(model.node_count());
  ev.constraints = model.zero_dual();
  ev.objective_gradient = model.zero_primal();
  ev.jacobian = NodeBlockMatrix{model.dual_layout(), model.primal_layout()};
  const auto& dims = model.primal_dims();
  for (NodeId i = 0; i < model.node_count(); ++i) {
    const auto& nf = model.node(i);
    const auto& nb = model.neighborhood(i);
    Eigen::VectorXd xs = model.gather(i, x);

    double fi = nf.objective(xs);
    detail::require_finite(fi, i, "objective");
    ev.objective_terms[i] = fi;
    Eigen::VectorXd gi = nf.objective_gradient(xs);
    if (gi.size() != xs.size()) {
      throw EvaluationError{"objective gradient has wrong length at node " +
                                std::to_string(i),
                            i};
    }
    detail::require_finite(gi, i, "objective gradient");
    int pos = 0;
    for (NodeId j : nb) {
      ev.objective_gradient.block(j) += gi.segment(pos, dims[j]);
      pos += dims[j];
    }

    if (nf.constraint_dim > 0) {
      Eigen::VectorXd ci = nf.constraint(xs);
      if (ci.size() != nf.constraint_dim) {
        throw EvaluationError{"constraint has wrong length at node " + std::to_string(i),
                              i};
      }
      detail::require_finite(ci, i, "constraint");
      ev.constraints.block(i) = ci;
      Eigen::MatrixXd ji = nf.constraint_jacobian(xs);
      detail::require_shape(ji, nf.constraint_dim, xs.size(), i, "constraint Jacobian");
      detail::require_finite(ji, i, "constraint Jacobian");
      pos = 0;
      for (NodeId j : nb) {
        if (dims[j] > 0) {
          auto blk = ji.middleCols(pos, dims[j]);
          if (!(blk.array() == 0.0).all()) {
            ev.jacobian.add_block(i, j, blk);
          }
        }
        pos += dims[j];
      }
    }
  }
  ev.objective = detail::compensated_sum(ev.objective_terms);
  ev.lagrangian_gradient = ev.objective_gradient;
  ev.lagrangian_gradient.values() += ev.jacobian.transpose_multiply(lambda.values());
  return ev;
}

/// Lagrangian Hessian ∇²ₓL assembled from per-node contributions.
inline NodeBlockMatrix lagrangian_hessian(const GsNlpModel& model,
                                          const NodeBlockVector& x,
                                          const NodeBlockVector& lambda) {
  NodeBlockMatrix h{model.primal_layout(), model.primal_layout()};
  const auto& dims = model.primal_dims();
  for (NodeId i = 0; i < model.node_count(); ++i) {
    const auto& nf = model.node(i);
    const auto& nb = model.neighborhood(i);
    Eigen::VectorXd xs = model.gather(i, x);
    Eigen::MatrixXd hi = nf.objective_hessian(xs);
    detail::require_shape(hi, xs.size(), xs.size(), i, "objective Hessian");
    if (nf.constraint_dim > 0) {
      Eigen::MatrixXd hc = nf.constraint_hessian(xs, Eigen::VectorXd{lambda.block(i)});
      detail::require_shape(hc, xs.size(), xs.size(), i, "constraint Hessian");
      hi += hc;
    }
    detail::require_finite(hi, i, "Lagrangian Hessian");
    int pr = 0;
    for (NodeId j : nb) {
      int pc = 0;
      for (NodeId k : nb) {
        if (dims[j] > 0 && dims[k] > 0) {
          auto blk = hi.block(pr, pc, dims[j], dims[k]);
          if (!(blk.array() == 0.0).all()) {
            h.add_block(j, k, blk);
          }
        }
        pc += dims[k];
      }
      pr += dims[j];
    }
  }
  h.prune();
  return h;
}

struct HessianModification {
  NodeBlockMatrix modified;
  double sigma = 0.0;
  /// Full KKT factorization with the accepted shift (adaptive mode only).
  std::shared_ptr<const KktFactorization> factorization;
};

/**
 * Structure-preserving modification Ĥ = H + σI.
 *
 * none: σ = 0. levenberg: σ = γ_H + ‖H‖ (power-iteration estimate).
 * adaptive: σ = 0 first; while the KKT inertia differs from (n, m, 0),
 * σ ← max(σ_min, 10σ), failing past σ_max.
 */
inline HessianModification modify_hessian(const NodeBlockMatrix& hessian,
                                          const NodeBlockMatrix& jacobian,
                                          const HessianOptions& opts) {
  HessianModification out;
  switch (opts.mode) {
    case HessianMode::none:
      out.modified = hessian;
      return out;
    case HessianMode::levenberg: {
      out.sigma = opts.gamma_h + spectral_norm_estimate(hessian, opts.norm_iterations);
      out.modified = hessian;
      out.modified.shift_diagonal(out.sigma);
      return out;
    }
    case HessianMode::adaptive:
      break;
  }
  Inertia target{hessian.rows(), jacobian.rows(), 0};
  double sigma = 0.0;
  while (true) {
    NodeBlockMatrix shifted = hessian;
    if (sigma > 0.0) {
      shifted.shift_diagonal(sigma);
    }
    auto fact = std::make_shared<const KktFactorization>(KktSystem{shifted, jacobian});
    if (fact->inertia() == target) {
      out.modified = std::move(shifted);
      out.sigma = sigma;
      out.factorization = std::move(fact);
      return out;
    }
    sigma = std::max(opts.sigma_min, 10.0 * sigma);
    if (sigma > opts.sigma_max) {
      throw ModificationError{"adaptive Hessian shift exceeded " +
                              std::to_string(opts.sigma_max) + " (last inertia " +
                              to_string(fact->inertia()) + ", wanted " +
                              to_string(target) + ")"};
    }
  }
}

/// Same point with Ĥ = H + σI and no cached factorization.
inline EvaluationSnapshot with_shift(const EvaluationSnapshot& snap, double sigma) {
  EvaluationSnapshot out = snap;
  out.modified_hessian = snap.hessian;
  if (sigma > 0.0) {
    out.modified_hessian.shift_diagonal(sigma);
  }
  out.sigma = sigma;
  out.factorization.reset();
  return out;
}

/// Completes a snapshot from first-order data already computed at (x, λ).
inline EvaluationSnapshot evaluate(const GsNlpModel& model, const NodeBlockVector& x,
                                   const NodeBlockVector& lambda,
                                   FirstOrderEvaluation first,
                                   const HessianOptions& opts) {
  EvaluationSnapshot snap;
  snap.x = x;
  snap.lambda = lambda;
  snap.objective = first.objective;
  snap.objective_terms = std::move(first.objective_terms);
  snap.constraints = std::move(first.constraints);
  snap.objective_gradient = std::move(first.objective_gradient);
  snap.lagrangian_gradient = std::move(first.lagrangian_gradient);
  snap.jacobian = std::move(first.jacobian);
  snap.hessian = lagrangian_hessian(model, x, lambda);
  auto mod = modify_hessian(snap.hessian, snap.jacobian, opts);
  snap.modified_hessian = std::move(mod.modified);
  snap.sigma = mod.sigma;
  snap.mode = opts.mode;
  snap.factorization = std::move(mod.factorization);
  return snap;
}

inline EvaluationSnapshot evaluate(const GsNlpModel& model, const NodeBlockVector& x,
                                   const NodeBlockVector& lambda,
                                   const HessianOptions& opts = {}) {
  return evaluate(model, x, lambda, evaluate_first_order(model, x, lambda), opts);
}

}  // namespace fogd

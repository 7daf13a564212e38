#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fogd/error.hpp"
#include "fogd/graph.hpp"
#include "fogd/model.hpp"

namespace fogd {

/**
 * Small graph model used by tests and the edge-list CLI problem. Each node
 * carries x_i ∈ R² and one constraint:
 *
 *   f_i = ½ q ‖x_i‖² − t_iᵀx_i + κ Σ_{j~i} x_i0 x_j1 + κ₂ Σ_{a<b, a,b~i} x_a0 x_b0
 *         + ν x_i0⁴ / 4
 *   c_i = x_i0 − ½ x_i1 + γ Σ_{j~i} x_j0 + ν x_i1³ / 3 − b_i
 *
 * The κ₂ term couples nodes two hops apart so the Hessian fills its whole
 * band. With ν = 0 this is an equality-constrained QP.
 */
struct GraphQuadraticConfig {
  double diagonal = 1.0;
  double coupling = 0.2;
  double second_coupling = 0.05;
  double constraint_coupling = 0.3;
  double nonlinearity = 0.0;
  /// Nodes 0 and 1 share one constraint, breaking LICQ.
  bool rank_deficient = false;
};

namespace detail {

inline NodeFunctions graph_quadratic_node(const GraphQuadraticConfig& cfg, NodeId i,
                                          const NodeSet& nb) {
  const int q = static_cast<int>(nb.size());
  const int self = static_cast<int>(*nb.position(i));
  std::vector<int> others;
  for (int k = 0; k < q; ++k) {
    if (k != self) {
      others.push_back(k);
    }
  }
  const Eigen::Vector2d target{std::sin(1.0 + i), std::cos(0.5 * i)};
  const double rhs = 0.5 + 0.25 * std::sin(0.3 * i + 0.2);
  const double dq = cfg.diagonal;
  const double kap = cfg.coupling;
  const double kap2 = cfg.second_coupling;
  const double gam = cfg.constraint_coupling;
  const double nu = cfg.nonlinearity;
  const int a0 = 2 * self;
  const int a1 = 2 * self + 1;

  NodeFunctions nf;
  nf.primal_dim = 2;
  nf.constraint_dim = 1;
  nf.objective = [=](const Eigen::VectorXd& xs) {
    double v = 0.5 * dq * (xs[a0] * xs[a0] + xs[a1] * xs[a1]) - target[0] * xs[a0] -
               target[1] * xs[a1] + nu * std::pow(xs[a0], 4) / 4.0;
    for (std::size_t s = 0; s < others.size(); ++s) {
      v += kap * xs[a0] * xs[2 * others[s] + 1];
      for (std::size_t t = s + 1; t < others.size(); ++t) {
        v += kap2 * xs[2 * others[s]] * xs[2 * others[t]];
      }
    }
    return v;
  };
  nf.objective_gradient = [=](const Eigen::VectorXd& xs) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * q);
    g[a0] = dq * xs[a0] - target[0] + nu * std::pow(xs[a0], 3);
    g[a1] = dq * xs[a1] - target[1];
    for (std::size_t s = 0; s < others.size(); ++s) {
      int o = others[s];
      g[a0] += kap * xs[2 * o + 1];
      g[2 * o + 1] += kap * xs[a0];
      for (std::size_t t = s + 1; t < others.size(); ++t) {
        int w = others[t];
        g[2 * o] += kap2 * xs[2 * w];
        g[2 * w] += kap2 * xs[2 * o];
      }
    }
    return g;
  };
  nf.objective_hessian = [=](const Eigen::VectorXd& xs) {
    Eigen::MatrixXd hm = Eigen::MatrixXd::Zero(2 * q, 2 * q);
    hm(a0, a0) = dq + 3.0 * nu * xs[a0] * xs[a0];
    hm(a1, a1) = dq;
    for (std::size_t s = 0; s < others.size(); ++s) {
      int o = others[s];
      hm(a0, 2 * o + 1) += kap;
      hm(2 * o + 1, a0) += kap;
      for (std::size_t t = s + 1; t < others.size(); ++t) {
        int w = others[t];
        hm(2 * o, 2 * w) += kap2;
        hm(2 * w, 2 * o) += kap2;
      }
    }
    return hm;
  };
  nf.constraint = [=](const Eigen::VectorXd& xs) {
    double v = xs[a0] - 0.5 * xs[a1] + nu * std::pow(xs[a1], 3) / 3.0 - rhs;
    for (int o : others) {
      v += gam * xs[2 * o];
    }
    Eigen::VectorXd c(1);
    c[0] = v;
    return c;
  };
  nf.constraint_jacobian = [=](const Eigen::VectorXd& xs) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(1, 2 * q);
    j(0, a0) = 1.0;
    j(0, a1) = -0.5 + nu * xs[a1] * xs[a1];
    for (int o : others) {
      j(0, 2 * o) = gam;
    }
    return j;
  };
  nf.constraint_hessian = [=](const Eigen::VectorXd& xs, const Eigen::VectorXd& lam) {
    Eigen::MatrixXd hm = Eigen::MatrixXd::Zero(2 * q, 2 * q);
    hm(a1, a1) = lam[0] * 2.0 * nu * xs[a1];
    return hm;
  };
  return nf;
}

/// c = x_00 + x_10 − 1, shared by nodes 0 and 1.
inline void make_shared_constraint(NodeFunctions& nf, const NodeSet& nb) {
  const int p0 = 2 * static_cast<int>(*nb.position(0));
  const int p1 = 2 * static_cast<int>(*nb.position(1));
  const int q = static_cast<int>(nb.size());
  nf.constraint = [=](const Eigen::VectorXd& xs) {
    Eigen::VectorXd c(1);
    c[0] = xs[p0] + xs[p1] - 1.0;
    return c;
  };
  nf.constraint_jacobian = [=](const Eigen::VectorXd&) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(1, 2 * q);
    j(0, p0) = 1.0;
    j(0, p1) = 1.0;
    return j;
  };
  nf.constraint_hessian = [=](const Eigen::VectorXd&, const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Zero(2 * q, 2 * q).eval();
  };
}

}  // namespace detail

inline GsNlpModel graph_quadratic_model(const Graph& g,
                                        const GraphQuadraticConfig& cfg = {}) {
  std::vector<NodeFunctions> nodes;
  std::vector<NodeSet> hoods;
  for (NodeId i = 0; i < g.node_count(); ++i) {
    std::vector<NodeId> nb{g.neighbors(i).begin(), g.neighbors(i).end()};
    nb.push_back(i);
    hoods.push_back(NodeSet::from_unsorted(std::move(nb)));
    nodes.push_back(detail::graph_quadratic_node(cfg, i, hoods.back()));
  }
  if (cfg.rank_deficient) {
    if (g.node_count() < 2 || !hoods[0].contains(1)) {
      throw InputError{"rank-deficient variant needs an edge between nodes 0 and 1"};
    }
    detail::make_shared_constraint(nodes[0], hoods[0]);
    detail::make_shared_constraint(nodes[1], hoods[1]);
  }
  return GsNlpModel{g, std::move(nodes)};
}

/// The graph model on a path of n nodes.
inline GsNlpModel toy_chain_model(int n, const GraphQuadraticConfig& cfg = {}) {
  return graph_quadratic_model(path_graph(n), cfg);
}

}  // namespace fogd

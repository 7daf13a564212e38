#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fogd/error.hpp"
#include "fogd/graph.hpp"
#include "fogd/model.hpp"

namespace fogd {

/**
 * Semilinear elliptic control problem on a rows x cols grid:
 *
 *   min  Σ_i h² ((u_i − u_d)² + α z_i²)
 *   s.t. (4u_i − Σ_{j~i} u_j)/h² + u_i^p − z_i = 0   for every node i,
 *
 * i.e. −Δu + u^p = z with the 5-point Laplacian and zero ghost values
 * outside the grid (homogeneous Dirichlet).
 */
struct PdeConfig {
  int rows = 40;
  int cols = 40;
  double desired_state = -5.0;
  double control_weight = 0.5;
  int exponent = 4;
  double spacing = 1.0;
  int strips = 5;

  void validate() const {
    if (rows < 3 || cols < 3) {
      throw InputError{"PDE grid needs at least 3 rows and 3 columns"};
    }
    if (exponent < 1) {
      throw InputError{"PDE exponent must be a positive integer"};
    }
    if (!(spacing > 0.0)) {
      throw InputError{"mesh spacing must be positive"};
    }
    if (strips < 1 || strips > cols) {
      throw InputError{"strip count must lie in [1, cols]"};
    }
  }
};

struct PdeProblem {
  PdeConfig config;
  GsNlpModel model;
  std::vector<NodeSet> parts;
};

namespace detail {

inline double int_pow(double v, int p) {
  double out = 1.0;
  for (int k = 0; k < p; ++k) {
    out *= v;
  }
  return out;
}

inline NodeFunctions pde_node(const PdeConfig& cfg, int neighborhood_size, int self) {
  const double h2 = cfg.spacing * cfg.spacing;
  const double inv_h2 = 1.0 / h2;
  const double ud = cfg.desired_state;
  const double alpha = cfg.control_weight;
  const int p = cfg.exponent;
  const int q = neighborhood_size;
  const int u = 2 * self;
  const int z = 2 * self + 1;

  NodeFunctions nf;
  nf.primal_dim = 2;
  nf.constraint_dim = 1;
  nf.objective = [=](const Eigen::VectorXd& xs) {
    double du = xs[u] - ud;
    return h2 * (du * du + alpha * xs[z] * xs[z]);
  };
  nf.objective_gradient = [=](const Eigen::VectorXd& xs) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * q);
    g[u] = 2.0 * h2 * (xs[u] - ud);
    g[z] = 2.0 * h2 * alpha * xs[z];
    return g;
  };
  nf.objective_hessian = [=](const Eigen::VectorXd&) {
    Eigen::MatrixXd hm = Eigen::MatrixXd::Zero(2 * q, 2 * q);
    hm(u, u) = 2.0 * h2;
    hm(z, z) = 2.0 * h2 * alpha;
    return hm;
  };
  nf.constraint = [=](const Eigen::VectorXd& xs) {
    double lap = 4.0 * xs[u];
    for (int k = 0; k < q; ++k) {
      if (k != self) {
        lap -= xs[2 * k];
      }
    }
    Eigen::VectorXd c(1);
    c[0] = lap * inv_h2 + int_pow(xs[u], p) - xs[z];
    return c;
  };
  nf.constraint_jacobian = [=](const Eigen::VectorXd& xs) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(1, 2 * q);
    for (int k = 0; k < q; ++k) {
      if (k != self) {
        j(0, 2 * k) = -inv_h2;
      }
    }
    j(0, u) = 4.0 * inv_h2 + p * int_pow(xs[u], p - 1);
    j(0, z) = -1.0;
    return j;
  };
  nf.constraint_hessian = [=](const Eigen::VectorXd& xs, const Eigen::VectorXd& lam) {
    Eigen::MatrixXd hm = Eigen::MatrixXd::Zero(2 * q, 2 * q);
    if (p >= 2) {
      hm(u, u) = lam[0] * p * (p - 1) * int_pow(xs[u], p - 2);
    }
    return hm;
  };
  return nf;
}

}  // namespace detail

/// Builds the grid model and the M vertical strips of near-equal width.
inline PdeProblem build_pde_model(const PdeConfig& cfg) {
  cfg.validate();
  Graph g = grid_graph(cfg.rows, cfg.cols);
  std::vector<NodeFunctions> nodes;
  nodes.reserve(static_cast<std::size_t>(g.node_count()));
  for (NodeId i = 0; i < g.node_count(); ++i) {
    auto nb = g.neighbors(i);
    int self = 0;
    for (NodeId j : nb) {
      if (j < i) {
        ++self;
      }
    }
    nodes.push_back(detail::pde_node(cfg, static_cast<int>(nb.size()) + 1, self));
  }
  auto parts = strip_partition(cfg.rows, cfg.cols, cfg.strips);
  return PdeProblem{cfg, GsNlpModel{std::move(g), std::move(nodes)}, std::move(parts)};
}

/// Primal point with u ≡ u0, z ≡ z0.
inline NodeBlockVector pde_constant_point(const GsNlpModel& model, double u0, double z0) {
  auto x = model.zero_primal();
  for (NodeId i = 0; i < model.node_count(); ++i) {
    x.block(i) << u0, z0;
  }
  return x;
}

}  // namespace fogd

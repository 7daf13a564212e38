#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fogd/block_matrix.hpp"
#include "fogd/block_vector.hpp"
#include "fogd/decomposition.hpp"
#include "fogd/error.hpp"
#include "fogd/kkt.hpp"
#include "fogd/model.hpp"
#include "fogd/parallel.hpp"

namespace fogd {

/// Primal-dual search direction over the full node set.
struct Direction {
  NodeBlockVector primal;
  NodeBlockVector dual;

  double norm() const {
    return std::sqrt(primal.values().squaredNorm() + dual.values().squaredNorm());
  }
};

/// Difference ‖(a − b)‖ of two directions on identical layouts.
inline double direction_distance(const Direction& a, const Direction& b) {
  return std::sqrt((a.primal.values() - b.primal.values()).squaredNorm() +
                   (a.dual.values() - b.dual.values()).squaredNorm());
}

/// d_l = (ω̄ over the depth-2 exterior B̄, ζ̄ over the combined boundary Ĥ).
struct BoundaryParameters {
  NodeBlockVector primal;
  NodeBlockVector dual;
};

/// Primal piece over W_l and dual piece over the interior W_l \ T_l.
struct SubSolution {
  NodeBlockVector primal;
  NodeBlockVector dual;
};

/**
 * Equality-constrained QP on one subdomain, in KKT form
 *
 *   [ Ĥ_μ  G_lᵀ ] [ω]   [ −∇ₓL[W] − μ Aᵀ c[Ĥ] − F d ]
 *   [ G_l   0   ] [ζ] = [ −c[W \ T]                 ]
 *
 * with A = G[Ĥ][W], Ĥ_μ = Ĥ[W][W] + μ AᵀA, G_l = G[W \ T][W] and
 * F d = (Ĥ[W][B̄] + μ Aᵀ G[Ĥ][B̄]) ω̄ + Aᵀ ζ̄.
 */
struct Subproblem {
  std::size_t index = 0;
  double mu = 1.0;
  KktSystem system;
  NodeBlockVector rhs_primal;
  NodeBlockVector rhs_dual;
  BoundaryParameters parameters;
  /// Ĥ[W][B̄] + μ Aᵀ G[Ĥ][B̄], acting on ω̄.
  NodeBlockMatrix primal_coupling;
  /// Aᵀ, acting on ζ̄.
  NodeBlockMatrix dual_coupling;

  Eigen::VectorXd rhs() const { return stack(rhs_primal, rhs_dual); }
};

/// d_l = 0, which gives back the production subproblem.
inline BoundaryParameters zero_boundary(const EvaluationSnapshot& snap,
                                        const OverlapDecomposition& dec, std::size_t l) {
  const auto& s = dec[l];
  return {NodeBlockVector{restrict_layout(snap.x.layout(), s.external_depth2)},
          NodeBlockVector{restrict_layout(snap.lambda.layout(), s.combined_boundary)}};
}

inline Subproblem assemble_subproblem(const EvaluationSnapshot& snap,
                                      const OverlapDecomposition& dec, std::size_t l,
                                      double mu, const BoundaryParameters& d) {
  if (!(mu > 0.0)) {
    throw InputError{"subproblem penalty mu must be positive"};
  }
  const auto& s = dec[l];
  const auto& primal = snap.x.layout();
  const auto& dual = snap.lambda.layout();
  auto w_layout = restrict_layout(primal, s.nodes);
  auto interior_layout = restrict_layout(dual, s.interior);
  if (interior_layout->total_dim() == 0 &&
      restrict_layout(dual, s.nodes)->total_dim() > 0) {
    throw DegenerateSubdomainError{"subdomain " + std::to_string(l) +
                                   " has no interior rows for its constraints"};
  }
  if (!(*d.primal.layout() == *restrict_layout(primal, s.external_depth2)) ||
      !(*d.dual.layout() == *restrict_layout(dual, s.combined_boundary))) {
    throw InputError{"boundary parameters of subdomain " + std::to_string(l) +
                     " do not match its boundary sets"};
  }

  NodeBlockMatrix a = snap.jacobian.restrict(s.combined_boundary, s.nodes);
  NodeBlockMatrix hmu = snap.modified_hessian.restrict(s.nodes, s.nodes);
  NodeBlockMatrix ata = transpose_times(a, a);
  ata *= mu;
  hmu += ata;
  hmu.prune();
  NodeBlockMatrix gl = snap.jacobian.restrict(s.interior, s.nodes);

  Subproblem sp;
  sp.index = l;
  sp.mu = mu;
  sp.primal_coupling = snap.modified_hessian.restrict(s.nodes, s.external_depth2);
  NodeBlockMatrix cross =
      transpose_times(a, snap.jacobian.restrict(s.combined_boundary, s.external_depth2));
  cross *= mu;
  sp.primal_coupling += cross;
  sp.primal_coupling.prune();
  sp.dual_coupling = a.transpose();

  Eigen::VectorXd rp = -snap.lagrangian_gradient.restrict(s.nodes).values();
  rp -= mu * a.transpose_multiply(snap.constraints.restrict(s.combined_boundary).values());
  rp -= sp.primal_coupling.multiply(d.primal.values());
  rp -= sp.dual_coupling.multiply(d.dual.values());
  sp.rhs_primal = NodeBlockVector{w_layout, std::move(rp)};
  sp.rhs_dual = NodeBlockVector{interior_layout,
                                -snap.constraints.restrict(s.interior).values()};
  sp.parameters = d;
  sp.system = KktSystem{std::move(hmu), std::move(gl)};
  return sp;
}

inline Subproblem assemble_subproblem(const EvaluationSnapshot& snap,
                                      const OverlapDecomposition& dec, std::size_t l,
                                      double mu) {
  return assemble_subproblem(snap, dec, l, mu, zero_boundary(snap, dec, l));
}

inline SubSolution solve_subproblem(const Subproblem& sp) {
  KktFactorization fact{sp.system};
  if (fact.singular()) {
    double smin = sp.system.jacobian().rows() > 0
                      ? min_singular_value(sp.system.jacobian())
                      : 0.0;
    throw SubproblemError{"subproblem " + std::to_string(sp.index) +
                              " KKT matrix is singular (inertia " +
                              to_string(fact.inertia()) + ", least singular value of " +
                              "its constraint Jacobian " + std::to_string(smin) + ")",
                          static_cast<int>(sp.index), smin};
  }
  auto sol = kkt_solve(sp.system, fact, sp.rhs_primal, sp.rhs_dual);
  return {std::move(sol.primal), std::move(sol.dual)};
}

/**
 * Takes each node's block from the subdomain that owns it. Nodes of V_l that
 * fall in T_l (possible only for b = 0) have no dual piece and receive zero.
 */
inline Direction compose(const OverlapDecomposition& dec,
                         const std::vector<SubSolution>& pieces,
                         const LayoutPtr& primal_layout, const LayoutPtr& dual_layout) {
  if (pieces.size() != dec.size()) {
    throw CompositionError{"expected " + std::to_string(dec.size()) +
                           " subdomain pieces, got " + std::to_string(pieces.size())};
  }
  Direction out{NodeBlockVector{primal_layout}, NodeBlockVector{dual_layout}};
  for (std::size_t l = 0; l < dec.size(); ++l) {
    const auto& s = dec[l];
    const auto& piece = pieces[l];
    if (!s.exclusive.is_subset_of(piece.primal.layout()->nodes()) ||
        !s.interior.is_subset_of(piece.dual.layout()->nodes())) {
      throw CompositionError{"piece " + std::to_string(l) +
                             " does not cover its subdomain"};
    }
    for (NodeId k : s.exclusive) {
      out.primal.block(k) = piece.primal.block(k);
      if (s.interior.contains(k)) {
        out.dual.block(k) = piece.dual.block(k);
      }
    }
  }
  return out;
}

/// D_l(x, λ) = (x[W_l], λ[W_l \ T_l]) for every l.
inline std::vector<SubSolution> decompose(const OverlapDecomposition& dec,
                                          const NodeBlockVector& x,
                                          const NodeBlockVector& lambda) {
  std::vector<SubSolution> out;
  out.reserve(dec.size());
  for (const auto& s : dec.subdomains()) {
    out.push_back({x.restrict(s.nodes), lambda.restrict(s.interior)});
  }
  return out;
}

/// d*_l = (Δx[B̄_l], Δλ[Ĥ_l]).
inline BoundaryParameters boundary_exact_parameters(const OverlapDecomposition& dec,
                                                    std::size_t l,
                                                    const Direction& exact) {
  const auto& s = dec[l];
  return {exact.primal.restrict(s.external_depth2),
          exact.dual.restrict(s.combined_boundary)};
}

/// Solves the full Newton system [[Ĥ, Gᵀ], [G, 0]] (Δx; Δλ) = −(∇ₓL; c).
inline Direction exact_newton_direction(const EvaluationSnapshot& snap) {
  KktSystem sys{snap.modified_hessian, snap.jacobian};
  std::shared_ptr<const KktFactorization> fact = snap.factorization;
  if (!fact) {
    fact = std::make_shared<const KktFactorization>(sys);
  }
  if (fact->singular()) {
    throw SolverError{"full KKT matrix is singular (inertia " +
                          to_string(fact->inertia()) + ")",
                      fact->singular_pivot_node(), fact->singular_pivot_magnitude()};
  }
  NodeBlockVector rp{snap.lagrangian_gradient.layout(), -snap.lagrangian_gradient.values()};
  NodeBlockVector rd{snap.constraints.layout(), -snap.constraints.values()};
  auto sol = kkt_solve(sys, *fact, rp, rd);
  return {std::move(sol.primal), std::move(sol.dual)};
}

/// All subproblems with d = 0, solved on `workers` threads, then composed.
inline Direction ogd_direction(const EvaluationSnapshot& snap,
                               const OverlapDecomposition& dec, double mu,
                               int workers = 1) {
  std::vector<SubSolution> pieces(dec.size());
  parallel_for(dec.size(), workers, [&](std::size_t l) {
    pieces[l] = solve_subproblem(assemble_subproblem(snap, dec, l, mu));
  });
  return compose(dec, pieces, snap.x.layout(), snap.lambda.layout());
}

}  // namespace fogd

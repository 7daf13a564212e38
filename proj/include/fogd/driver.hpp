#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fogd/block_vector.hpp"
#include "fogd/decomposition.hpp"
#include "fogd/error.hpp"
#include "fogd/model.hpp"
#include "fogd/ogd.hpp"

namespace fogd {

enum class DirectionMode { ogd, exact };

inline std::string to_string(DirectionMode mode) {
  return mode == DirectionMode::ogd ? "ogd" : "exact";
}

inline DirectionMode parse_direction_mode(const std::string& s) {
  if (s == "ogd") {
    return DirectionMode::ogd;
  }
  if (s == "exact") {
    return DirectionMode::exact;
  }
  throw InputError{"unknown direction mode '" + s + "'"};
}

struct FogdConfig {
  double eta1 = 5.0;
  double eta2 = 0.1;
  double beta = 0.1;
  double mu = 1.0;
  double backtrack = 0.9;
  double alpha_init = 1.0;
  int max_iters = 500;
  int max_backtracks = 200;
  double kkt_tolerance = 1e-6;
  HessianOptions hessian;
  DirectionMode direction = DirectionMode::ogd;
  /// Threads for the subproblem solves; 0 means hardware concurrency.
  int workers = 1;
  /**
   * When the modification shifted the Hessian, first try the smaller shifts
   * 0, σ_min, 10σ_min, ... below the accepted one and keep the first whose
   * direction descends on the merit. Falls back to the accepted shift.
   */
  bool shift_retry = true;

  void validate() const {
    if (!(eta1 >= 0.0) || !(eta2 >= 0.0)) {
      throw InputError{"merit penalties eta1, eta2 must be nonnegative"};
    }
    if (!(beta > 0.0 && beta < 0.5)) {
      throw InputError{"Armijo beta must lie in (0, 0.5)"};
    }
    if (!(mu > 0.0)) {
      throw InputError{"mu must be positive"};
    }
    if (!(backtrack > 0.0 && backtrack < 1.0)) {
      throw InputError{"backtrack factor must lie in (0, 1)"};
    }
    if (!(alpha_init > 0.0)) {
      throw InputError{"initial stepsize must be positive"};
    }
    if (max_iters < 0 || max_backtracks < 0) {
      throw InputError{"iteration limits must be nonnegative"};
    }
    if (!(kkt_tolerance > 0.0)) {
      throw InputError{"KKT tolerance must be positive"};
    }
  }
};

/// L_η = f + λᵀc + (η₁/2)‖c‖² + (η₂/2)‖∇ₓL‖².
inline double merit_value(double objective, const Eigen::VectorXd& lambda,
                          const Eigen::VectorXd& constraints,
                          const Eigen::VectorXd& lagrangian_gradient, double eta1,
                          double eta2) {
  return objective + lambda.dot(constraints) + 0.5 * eta1 * constraints.squaredNorm() +
         0.5 * eta2 * lagrangian_gradient.squaredNorm();
}

inline double merit_value(const EvaluationSnapshot& snap, double eta1, double eta2) {
  return merit_value(snap.objective, snap.lambda.values(), snap.constraints.values(),
                     snap.lagrangian_gradient.values(), eta1, eta2);
}

/**
 * L_η(new) − L_η(snap), with the objective part summed as per-node
 * differences. Subtracting two merit values of size ~1e4 loses everything
 * below ~4e-12, which is where the directional derivative sits once the KKT
 * residual reaches ~1e-6.
 */
inline double merit_change(const EvaluationSnapshot& snap, const FirstOrderEvaluation& ev,
                           const Eigen::VectorXd& lambda, double eta1, double eta2) {
  double df = (ev.objective_terms - snap.objective_terms).sum();
  double dlc = lambda.dot(ev.constraints.values()) -
               snap.lambda.values().dot(snap.constraints.values());
  double dc = ev.constraints.values().squaredNorm() - snap.constraints.values().squaredNorm();
  double dg = ev.lagrangian_gradient.values().squaredNorm() -
              snap.lagrangian_gradient.values().squaredNorm();
  return df + dlc + 0.5 * eta1 * dc + 0.5 * eta2 * dg;
}

/**
 * ∇ₓL_η = (I + η₂H)∇ₓL + η₁Gᵀc and ∇_λL_η = η₂G∇ₓL + c, always with the
 * unmodified Lagrangian Hessian H.
 */
inline Direction merit_gradient(const EvaluationSnapshot& snap, double eta1, double eta2) {
  const Eigen::VectorXd& gl = snap.lagrangian_gradient.values();
  const Eigen::VectorXd& c = snap.constraints.values();
  Eigen::VectorXd gx =
      gl + eta2 * snap.hessian.multiply(gl) + eta1 * snap.jacobian.transpose_multiply(c);
  Eigen::VectorXd gd = eta2 * snap.jacobian.multiply(gl) + c;
  return {NodeBlockVector{snap.x.layout(), std::move(gx)},
          NodeBlockVector{snap.lambda.layout(), std::move(gd)}};
}

inline double directional_derivative(const Direction& gradient, const Direction& dir) {
  return gradient.primal.values().dot(dir.primal.values()) +
         gradient.dual.values().dot(dir.dual.values());
}

struct LineSearchResult {
  double alpha = 0.0;
  int backtracks = 0;
  double merit = 0.0;
  /// L_η(accepted) − L_η(current), the quantity the Armijo test compares.
  double merit_change = 0.0;
  double directional_derivative = 0.0;
  NodeBlockVector x;
  NodeBlockVector lambda;
  /// First-order data at the accepted point, reused for the next snapshot.
  FirstOrderEvaluation evaluation;
};

/**
 * Backtracks α = α_init·factor^k until
 * L_η(z + αΔ) − L_η(z) ≤ β α ∇L_ηᵀΔ.
 */
inline LineSearchResult armijo_linesearch(const GsNlpModel& model,
                                          const EvaluationSnapshot& snap,
                                          const Direction& dir, const FogdConfig& cfg) {
  Direction grad = merit_gradient(snap, cfg.eta1, cfg.eta2);
  double slope = directional_derivative(grad, dir);
  if (!(slope < 0.0)) {
    throw NonDescentError{"merit directional derivative is " + std::to_string(slope) +
                              " (eta1=" + std::to_string(cfg.eta1) +
                              ", eta2=" + std::to_string(cfg.eta2) +
                              ", mu=" + std::to_string(cfg.mu) + ")",
                          slope};
  }
  double alpha = cfg.alpha_init;
  for (int k = 0; k <= cfg.max_backtracks; ++k) {
    NodeBlockVector x{snap.x.layout(), snap.x.values() + alpha * dir.primal.values()};
    NodeBlockVector lam{snap.lambda.layout(),
                        snap.lambda.values() + alpha * dir.dual.values()};
    auto ev = evaluate_first_order(model, x, lam);
    double change = merit_change(snap, ev, lam.values(), cfg.eta1, cfg.eta2);
    if (change <= cfg.beta * alpha * slope) {
      double merit = merit_value(ev.objective, lam.values(), ev.constraints.values(),
                                 ev.lagrangian_gradient.values(), cfg.eta1, cfg.eta2);
      return {alpha, k, merit, change, slope, std::move(x), std::move(lam), std::move(ev)};
    }
    alpha *= cfg.backtrack;
  }
  throw LineSearchError{"Armijo condition not met after " +
                        std::to_string(cfg.max_backtracks) + " backtracks"};
}

/// One row of the iteration trace. Fields without a value are NaN.
struct IterateRecord {
  int iter = 0;
  double kkt_residual = 0.0;
  double merit = 0.0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  int backtracks = -1;
  double dir_norm = std::numeric_limits<double>::quiet_NaN();
  double dir_deriv = std::numeric_limits<double>::quiet_NaN();
  double sigma = 0.0;
  double psi = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  /// Accepted L_η change; the Armijo test is exactly merit_change ≤ β·α·dir_deriv.
  double merit_change = std::numeric_limits<double>::quiet_NaN();
};

struct ReferenceSolution {
  NodeBlockVector x;
  NodeBlockVector lambda;
};

struct FogdResult {
  NodeBlockVector x;
  NodeBlockVector lambda;
  std::vector<IterateRecord> trace;
  bool converged = false;
  int iterations = 0;
  double final_residual = 0.0;
};

using IterateObserver = std::function<void(const IterateRecord&)>;

/// Ψ = max_k ‖(x_k, λ_k) − (x*_k, λ*_k)‖.
inline double nodewise_error(const NodeBlockVector& x, const NodeBlockVector& lambda,
                             const ReferenceSolution& ref) {
  double worst = 0.0;
  const auto& nodes = x.layout()->nodes();
  for (NodeId k : nodes) {
    double e = (x.block(k) - ref.x.block(k)).squaredNorm() +
               (lambda.block(k) - ref.lambda.block(k)).squaredNorm();
    worst = std::max(worst, e);
  }
  return std::sqrt(worst);
}

/**
 * Algorithm loop: evaluate, direction, Armijo search, update.
 *
 * Every record carries the state at the start of iteration τ and the step
 * taken from it; the last record is the terminal point and has no step.
 * `dec` may be null in exact mode. `observer` sees each record as it is
 * completed, so a caller keeps the trace of a run that later throws.
 */
inline FogdResult run_fogd(const GsNlpModel& model, const OverlapDecomposition* dec,
                           const FogdConfig& cfg, NodeBlockVector x0,
                           NodeBlockVector lambda0,
                           const ReferenceSolution* reference = nullptr,
                           const IterateObserver& observer = {}) {
  cfg.validate();
  if (cfg.direction == DirectionMode::ogd && dec == nullptr) {
    throw InputError{"ogd direction mode needs a decomposition"};
  }
  check_point(model, x0, lambda0);
  using clock = std::chrono::steady_clock;

  FogdResult result;
  int tau = 0;
  try {
    auto start = clock::now();
    EvaluationSnapshot snap = evaluate(model, x0, lambda0, cfg.hessian);
    for (;; ++tau) {
      IterateRecord rec;
      rec.iter = tau;
      rec.kkt_residual = snap.kkt_residual();
      rec.merit = merit_value(snap, cfg.eta1, cfg.eta2);
      rec.sigma = snap.sigma;
      if (reference) {
        rec.psi = nodewise_error(snap.x, snap.lambda, *reference);
      }
      if (rec.kkt_residual <= cfg.kkt_tolerance || tau >= cfg.max_iters) {
        result.converged = rec.kkt_residual <= cfg.kkt_tolerance;
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(clock::now() - start).count();
        result.trace.push_back(rec);
        if (observer) {
          observer(rec);
        }
        break;
      }
      auto direction_at = [&](const EvaluationSnapshot& s) {
        return cfg.direction == DirectionMode::exact
                   ? exact_newton_direction(s)
                   : ogd_direction(s, *dec, cfg.mu, cfg.workers);
      };
      Direction dir;
      if (cfg.shift_retry && snap.sigma > 0.0) {
        // Ladder 0, σ_min, 10σ_min, ... up to the inertia-correcting shift;
        // the first rung whose direction descends on the merit is kept.
        Direction grad = merit_gradient(snap, cfg.eta1, cfg.eta2);
        bool found = false;
        for (double sigma = 0.0; sigma < snap.sigma;
             sigma = std::max(cfg.hessian.sigma_min, 10.0 * sigma)) {
          try {
            auto trial = with_shift(snap, sigma);
            Direction d = direction_at(trial);
            if (directional_derivative(grad, d) < 0.0) {
              snap = std::move(trial);
              dir = std::move(d);
              rec.sigma = sigma;
              found = true;
              break;
            }
          } catch (const SolverError&) {
            // singular at this shift; move up the ladder
          }
        }
        if (!found) {
          dir = direction_at(snap);
        }
      } else {
        dir = direction_at(snap);
      }
      auto ls = armijo_linesearch(model, snap, dir, cfg);
      rec.alpha = ls.alpha;
      rec.backtracks = ls.backtracks;
      rec.dir_norm = dir.norm();
      rec.dir_deriv = ls.directional_derivative;
      rec.merit_change = ls.merit_change;
      snap = evaluate(model, ls.x, ls.lambda, std::move(ls.evaluation), cfg.hessian);
      auto now = clock::now();
      rec.wall_ms = std::chrono::duration<double, std::milli>(now - start).count();
      start = now;
      result.trace.push_back(rec);
      if (observer) {
        observer(rec);
      }
    }
    result.x = std::move(snap.x);
    result.lambda = std::move(snap.lambda);
  } catch (Error& e) {
    e.annotate_iteration(tau);
    throw;
  }
  result.iterations = tau;
  result.final_residual = result.trace.back().kkt_residual;
  return result;
}

/// Exact-Newton run used as the Ψ reference.
inline ReferenceSolution solve_reference(const GsNlpModel& model, FogdConfig cfg,
                                         NodeBlockVector x0, NodeBlockVector lambda0,
                                         double tolerance = 1e-10) {
  cfg.direction = DirectionMode::exact;
  cfg.kkt_tolerance = tolerance;
  auto res = run_fogd(model, nullptr, cfg, std::move(x0), std::move(lambda0));
  if (!res.converged) {
    throw SolverError{"reference solve stopped at KKT residual " +
                          std::to_string(res.final_residual),
                      -1, 0.0};
  }
  return {std::move(res.x), std::move(res.lambda)};
}

/**
 * Tail rate ρ̂: geometric mean of successive Ψ ratios over the last
 * `tail_fraction` of the records whose Ψ exceeds `floor`.
 */
inline double estimate_linear_rate(const std::vector<IterateRecord>& trace,
                                   double tail_fraction = 0.5, double floor = 1e-12) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) {
    throw InputError{"tail fraction must lie in (0, 1]"};
  }
  // The first Ψ at or below the floor is kept, clamped to the floor: it is an
  // upper bound, and dropping it would make the fastest runs look slowest.
  std::vector<double> psi;
  for (const auto& r : trace) {
    if (!std::isfinite(r.psi)) {
      continue;
    }
    if (r.psi > floor) {
      psi.push_back(r.psi);
    } else {
      psi.push_back(floor);
      break;
    }
  }
  auto take = static_cast<std::size_t>(
      std::ceil(tail_fraction * static_cast<double>(psi.size())));
  take = std::max<std::size_t>(take, std::min<std::size_t>(psi.size(), 3));
  if (take < 3) {
    throw InsufficientDataError{"rate estimate needs at least 3 tail points, have " +
                                std::to_string(take)};
  }
  double first = psi[psi.size() - take];
  double last = psi.back();
  return std::pow(last / first, 1.0 / static_cast<double>(take - 1));
}

namespace detail {

inline void write_field(std::ostream& out, double v) {
  if (std::isfinite(v)) {
    out << v;
  }
}

}  // namespace detail

/// Trace CSV; a trailing comment line carries the spec hash.
inline void write_trace_csv(const std::string& path, const std::vector<IterateRecord>& trace,
                            const std::string& spec_hash) {
  std::ofstream out{path};
  if (!out) {
    throw InputError{"cannot write " + path};
  }
  out << "iter,kkt_residual,merit,alpha,backtracks,dir_norm,dir_deriv,sigma,psi,wall_ms,merit_change\n";
  out << std::setprecision(17);
  for (const auto& r : trace) {
    out << r.iter << ',';
    detail::write_field(out, r.kkt_residual);
    out << ',';
    detail::write_field(out, r.merit);
    out << ',';
    detail::write_field(out, r.alpha);
    out << ',';
    if (r.backtracks >= 0) {
      out << r.backtracks;
    }
    out << ',';
    detail::write_field(out, r.dir_norm);
    out << ',';
    detail::write_field(out, r.dir_deriv);
    out << ',';
    detail::write_field(out, r.sigma);
    out << ',';
    detail::write_field(out, r.psi);
    out << ',';
    out << std::setprecision(6) << r.wall_ms << std::setprecision(17) << ',';
    detail::write_field(out, r.merit_change);
    out << '\n';
  }
  out << "# spec_hash=" << spec_hash << '\n';
}

}  // namespace fogd

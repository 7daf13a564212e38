#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "fogd/block_matrix.hpp"
#include "fogd/decomposition.hpp"
#include "fogd/driver.hpp"
#include "fogd/error.hpp"
#include "fogd/graph.hpp"
#include "fogd/model.hpp"
#include "fogd/ogd.hpp"

namespace fogd {

/// Total primal + dual dimension above which dense diagnostics refuse to run.
inline constexpr int kDenseSizeCap = 5000;

inline void require_dense_size(int dim, int cap = kDenseSizeCap) {
  if (dim > cap) {
    throw InputError{"dense diagnostics need total dimension <= " + std::to_string(cap) +
                     " (got " + std::to_string(dim) +
                     "); run them on a smaller grid or on single subdomains"};
  }
}

/// λ_min(GGᵀ) = σ_min(G)² for a full-row-rank candidate G (m ≤ n).
inline double licq_constant(const Eigen::MatrixXd& g) {
  if (g.rows() == 0) {
    return std::numeric_limits<double>::infinity();
  }
  if (g.rows() > g.cols()) {
    return 0.0;
  }
  double s = min_singular_value(g);
  return s * s;
}

/// Orthonormal basis of null(G) from a full SVD; `rank_tol` is relative to σ_max.
inline Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& g, double rank_tol = 1e-12) {
  if (g.rows() == 0) {
    return Eigen::MatrixXd::Identity(g.cols(), g.cols());
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd{g, Eigen::ComputeFullV};
  const auto& sv = svd.singularValues();
  double cutoff = rank_tol * (sv.size() > 0 ? sv[0] : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv[k] > cutoff) {
      ++rank;
    }
  }
  return svd.matrixV().rightCols(g.cols() - rank);
}

/// λ_min(ZᵀĤZ) with Z an orthonormal null-space basis of G; +inf if null(G) = {0}.
inline double reduced_hessian_min_eig(const Eigen::MatrixXd& h, const Eigen::MatrixXd& g) {
  Eigen::MatrixXd z = null_space_basis(g);
  if (z.cols() == 0) {
    return std::numeric_limits<double>::infinity();
  }
  Eigen::MatrixXd r = z.transpose() * h * z;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig{0.5 * (r + r.transpose()),
                                                     Eigen::EigenvaluesOnly};
  return eig.eigenvalues()[0];
}

inline double dense_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) {
    return 0.0;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd{m};
  return svd.singularValues()[0];
}

/// Measured analogue of 4Ῡ²/(γ_G γ_H).
inline double mu_threshold(double upsilon, double gamma_g, double gamma_h) {
  if (!(gamma_g > 0.0) || !(gamma_h > 0.0)) {
    return std::numeric_limits<double>::infinity();
  }
  return 4.0 * upsilon * upsilon / (gamma_g * gamma_h);
}

struct RegularityReport {
  int primal_dim = 0;
  int dual_dim = 0;
  /// λ_min(GGᵀ); 0 when LICQ fails.
  double gamma_g = 0.0;
  /// λ_min(ZᵀĤZ).
  double gamma_h = 0.0;
  double norm_modified_hessian = 0.0;
  double norm_hessian = 0.0;
  double norm_jacobian = 0.0;
  /// max of the three norms, used in place of Ῡ.
  double upsilon = 0.0;
  double mu_hat = 0.0;
  bool licq_violated = false;
};

/**
 * Dense spectral measurements at one snapshot. LICQ counts as violated when
 * σ_min(G) ≤ 1e-10·max(1, ‖G‖).
 */
inline RegularityReport regularity_report(const EvaluationSnapshot& snap,
                                          int size_cap = kDenseSizeCap) {
  RegularityReport rep;
  rep.primal_dim = snap.hessian.rows();
  rep.dual_dim = snap.jacobian.rows();
  require_dense_size(rep.primal_dim + rep.dual_dim, size_cap);
  Eigen::MatrixXd g = snap.jacobian.to_dense();
  Eigen::MatrixXd h = snap.hessian.to_dense();
  Eigen::MatrixXd hm = snap.modified_hessian.to_dense();
  rep.norm_hessian = dense_norm(h);
  rep.norm_modified_hessian = dense_norm(hm);
  rep.norm_jacobian = dense_norm(g);
  rep.upsilon = std::max({rep.norm_hessian, rep.norm_modified_hessian, rep.norm_jacobian});
  rep.gamma_g = licq_constant(g);
  double tol = 1e-10 * std::max(1.0, rep.norm_jacobian);
  if (g.rows() > 0 && !(std::sqrt(rep.gamma_g) > tol)) {
    rep.licq_violated = true;
    rep.gamma_g = 0.0;
  }
  rep.gamma_h = reduced_hessian_min_eig(hm, g);
  rep.mu_hat = mu_threshold(rep.upsilon, rep.gamma_g, rep.gamma_h);
  return rep;
}

/// Local counterparts on one subproblem: λ_min(G_l G_lᵀ) and λ_min(Z_lᵀ Ĥ_μ Z_l).
struct SubproblemCertificate {
  std::size_t index = 0;
  double gamma_g = 0.0;
  double reduced_min_eig = 0.0;
};

inline SubproblemCertificate subproblem_certificate(const Subproblem& sp,
                                                    int size_cap = kDenseSizeCap) {
  require_dense_size(sp.system.dimension(), size_cap);
  Eigen::MatrixXd g = sp.system.jacobian().to_dense();
  return {sp.index, licq_constant(g),
          reduced_hessian_min_eig(sp.system.hessian().to_dense(), g)};
}

/// (abscissa, value) pairs with a least-squares fit of log(value).
struct DecayCurve {
  std::vector<double> abscissa;
  std::vector<double> value;
  /// Abscissas that were requested but could not be evaluated.
  std::vector<double> skipped;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  /// Points with value ≤ floor are kept in the curve but left out of the fit.
  double floor = 0.0;
};

/// Fits log(value) = intercept + slope·abscissa over the points above `floor`.
inline void fit_log_linear(DecayCurve& curve, double floor = 0.0) {
  curve.floor = floor;
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t k = 0; k < curve.value.size(); ++k) {
    if (curve.value[k] > floor) {
      xs.push_back(curve.abscissa[k]);
      ys.push_back(std::log(curve.value[k]));
    }
  }
  if (xs.size() < 2) {
    throw InsufficientDataError{"log-linear fit needs at least 2 points above the floor"};
  }
  double n = static_cast<double>(xs.size());
  double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (sxx == 0.0) {
    throw InsufficientDataError{"log-linear fit needs distinct abscissas"};
  }
  curve.slope = sxy / sxx;
  curve.intercept = my - curve.slope * mx;
  curve.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InsufficientDataError{"Spearman correlation needs two equal-length samples"};
  }
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t s = 0; s < idx.size();) {
      std::size_t e = s;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) {
        ++e;
      }
      double avg = 0.5 * static_cast<double>(s + e) + 1.0;
      for (std::size_t k = s; k <= e; ++k) {
        r[idx[k]] = avg;
      }
      s = e + 1;
    }
    return r;
  };
  auto ra = ranks(a);
  auto rb = ranks(b);
  double n = static_cast<double>(a.size());
  double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    return 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

/**
 * Closed-form inverse of [[Ĥ, Gᵀ], [G, 0]] through a null-space basis Z:
 *
 *   B1 = Z (ZᵀĤZ)⁻¹ Zᵀ
 *   B2 = (GGᵀ)⁻¹ G (I − Ĥ B1)
 *   B3 = (GGᵀ)⁻¹ G (Ĥ B1 Ĥ − Ĥ) Gᵀ (GGᵀ)⁻¹
 *
 * and K⁻¹ = [[B1, B2ᵀ], [B2, B3]].
 */
inline Eigen::MatrixXd null_space_kkt_inverse(const Eigen::MatrixXd& h,
                                              const Eigen::MatrixXd& g) {
  const Eigen::Index n = h.rows();
  const Eigen::Index m = g.rows();
  Eigen::MatrixXd z = null_space_basis(g);
  Eigen::MatrixXd b1 = Eigen::MatrixXd::Zero(n, n);
  if (z.cols() > 0) {
    Eigen::MatrixXd r = z.transpose() * h * z;
    b1 = z * r.ldlt().solve(z.transpose());
  }
  Eigen::MatrixXd out(n + m, n + m);
  out.topLeftCorner(n, n) = b1;
  if (m > 0) {
    Eigen::MatrixXd ggt_inv_g = (g * g.transpose()).ldlt().solve(g);
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd b2 = ggt_inv_g * (id - h * b1);
    Eigen::MatrixXd b3 = ggt_inv_g * (h * b1 * h - h) * ggt_inv_g.transpose();
    out.bottomLeftCorner(m, n) = b2;
    out.topRightCorner(n, m) = b2.transpose();
    out.bottomRightCorner(m, m) = b3;
  }
  return out;
}

struct KktInverseDecay {
  /// Max spectral norm of inverse blocks per graph distance between their nodes.
  DecayCurve curve;
  /// max |dense inverse − closed form| over all entries.
  double closed_form_error = 0.0;
};

/**
 * Dense inverse of the subproblem KKT matrix, split into the primal-primal,
 * dual-primal and dual-dual parts, with node blocks binned by d_G(i, j).
 */
inline KktInverseDecay kkt_inverse_decay(const Subproblem& sp, const Graph& g,
                                         int size_cap = kDenseSizeCap) {
  const auto& sys = sp.system;
  require_dense_size(sys.dimension(), size_cap);
  Eigen::MatrixXd k = sys.to_dense();
  Eigen::FullPivLU<Eigen::MatrixXd> lu{k};
  if (!lu.isInvertible()) {
    throw SolverError{"subproblem KKT matrix is singular", -1, 0.0};
  }
  Eigen::MatrixXd inv = lu.inverse();
  KktInverseDecay out;
  out.closed_form_error =
      (inv - null_space_kkt_inverse(sys.hessian().to_dense(), sys.jacobian().to_dense()))
          .cwiseAbs()
          .maxCoeff();

  const auto& pl = *sys.primal_layout();
  const auto& dl = *sys.dual_layout();
  const int n = sys.primal_dim();
  std::vector<double> best;
  auto record = [&](int dist, const Eigen::MatrixXd& blk) {
    if (blk.size() == 0) {
      return;
    }
    if (static_cast<std::size_t>(dist) >= best.size()) {
      best.resize(static_cast<std::size_t>(dist) + 1, -1.0);
    }
    best[dist] = std::max(best[dist], dense_norm(blk));
  };
  const auto& nodes = pl.nodes();
  for (NodeId i : nodes) {
    auto dist = distances_to(g, NodeSet{std::vector<NodeId>{i}});
    for (NodeId j : nodes) {
      int d = dist[j];
      record(d, inv.block(pl.offset(i), pl.offset(j), pl.dim(i), pl.dim(j)));
      if (dl.contains(i)) {
        record(d, inv.block(n + dl.offset(i), pl.offset(j), dl.dim(i), pl.dim(j)));
        if (dl.contains(j)) {
          record(d, inv.block(n + dl.offset(i), n + dl.offset(j), dl.dim(i), dl.dim(j)));
        }
      }
    }
  }
  for (std::size_t d = 0; d < best.size(); ++d) {
    if (best[d] >= 0.0) {
      out.curve.abscissa.push_back(static_cast<double>(d));
      out.curve.value.push_back(best[d]);
    }
  }
  return out;
}

/**
 * e(b) = ‖OGD direction − exact Newton direction‖ at one point for each b.
 * Overlaps whose decomposition is degenerate are listed in `skipped`.
 */
inline DecayCurve error_vs_overlap(const GsNlpModel& model, const std::vector<NodeSet>& parts,
                                   const EvaluationSnapshot& snap, double mu,
                                   const std::vector<int>& overlaps, int workers = 1) {
  Direction exact = exact_newton_direction(snap);
  DecayCurve curve;
  for (int b : overlaps) {
    try {
      auto dec = build_decomposition(model.graph(), parts, b);
      Direction approx = ogd_direction(snap, dec, mu, workers);
      curve.abscissa.push_back(b);
      curve.value.push_back(direction_distance(approx, exact));
    } catch (const DegenerateSubdomainError&) {
      curve.skipped.push_back(b);
    }
  }
  return curve;
}

/// D = ∇L_ηᵀΔ̃ against the bound −(η₂/8)‖∇L‖² − (η₂γ_G/16)‖(Δx, Δλ)‖².
struct DescentMargin {
  double directional_derivative = 0.0;
  double bound = 0.0;
  /// D − bound; nonpositive when the bound holds.
  double slack = 0.0;
};

inline DescentMargin descent_margin(const EvaluationSnapshot& snap, const Direction& dir,
                                    const Direction& exact, double eta1, double eta2,
                                    double gamma_g) {
  DescentMargin m;
  m.directional_derivative = directional_derivative(merit_gradient(snap, eta1, eta2), dir);
  double grad_sq = snap.lagrangian_gradient.values().squaredNorm() +
                   snap.constraints.values().squaredNorm();
  double exact_sq = exact.primal.values().squaredNorm() + exact.dual.values().squaredNorm();
  m.bound = -(eta2 / 8.0) * grad_sq - (eta2 * gamma_g / 16.0) * exact_sq;
  m.slack = m.directional_derivative - m.bound;
  return m;
}

/**
 * Nodewise effect of changing the boundary parameters of one subproblem:
 * for every k in W, ‖(ω̃_k, ζ̃_k)(d) − (ω̃_k, ζ̃_k)(d′)‖ against the hop
 * distance of k to N(W). The curve keeps the max per distance; the raw
 * samples feed a rank-correlation trend test.
 */
struct SensitivityProfile {
  std::vector<double> distance;
  std::vector<double> difference;
  DecayCurve curve;
};

inline SensitivityProfile boundary_sensitivity(const EvaluationSnapshot& snap,
                                               const OverlapDecomposition& dec,
                                               std::size_t l, double mu,
                                               const BoundaryParameters& d1,
                                               const BoundaryParameters& d2) {
  const auto& s = dec[l];
  if (s.open_boundary.empty()) {
    throw InputError{"subdomain has no boundary to perturb"};
  }
  auto a = solve_subproblem(assemble_subproblem(snap, dec, l, mu, d1));
  auto b = solve_subproblem(assemble_subproblem(snap, dec, l, mu, d2));
  auto dist = distances_to(dec.graph(), s.open_boundary);
  SensitivityProfile out;
  std::vector<double> best;
  for (NodeId k : s.nodes) {
    double e = (a.primal.block(k) - b.primal.block(k)).squaredNorm();
    if (s.interior.contains(k)) {
      e += (a.dual.block(k) - b.dual.block(k)).squaredNorm();
    }
    e = std::sqrt(e);
    out.distance.push_back(dist[k]);
    out.difference.push_back(e);
    auto dk = static_cast<std::size_t>(dist[k]);
    if (dk >= best.size()) {
      best.resize(dk + 1, -1.0);
    }
    best[dk] = std::max(best[dk], e);
  }
  for (std::size_t d = 0; d < best.size(); ++d) {
    if (best[d] >= 0.0) {
      out.curve.abscissa.push_back(static_cast<double>(d));
      out.curve.value.push_back(best[d]);
    }
  }
  return out;
}

}  // namespace fogd

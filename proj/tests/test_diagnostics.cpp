#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fogd/diagnostics.hpp"
#include "fogd/pde.hpp"
#include "fogd/rng.hpp"
#include "fogd/toy_chain.hpp"
#include "test_util.hpp"

namespace fogd {
namespace {

PdeProblem small_pde(int n) {
  PdeConfig cfg;
  cfg.rows = n;
  cfg.cols = n;
  cfg.strips = 3;
  return build_pde_model(cfg);
}

EvaluationSnapshot random_snapshot(const GsNlpModel& model, std::uint64_t seed) {
  auto x = uniform_blocks(model.primal_layout(), seed, DrawKind::primal, -1.0, 1.0);
  auto lam = uniform_blocks(model.dual_layout(), seed, DrawKind::dual, -1.0, 1.0);
  return evaluate(model, x, lam);
}

TEST(Fit, ExactExponential) {
  DecayCurve c;
  for (int b = 0; b < 6; ++b) {
    c.abscissa.push_back(b);
    c.value.push_back(3.0 * std::exp(-2.0 * b));
  }
  fit_log_linear(c);
  EXPECT_NEAR(c.slope, -2.0, 1e-12);
  EXPECT_NEAR(c.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(c.r_squared, 1.0, 1e-12);
  DecayCurve tiny;
  tiny.abscissa = {1, 2};
  tiny.value = {1e-3, 1e-20};
  EXPECT_THROW(fit_log_linear(tiny, 1e-12), InsufficientDataError);
}

TEST(Fit, SpearmanRanks) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 5, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {1, 4, 9, 16}), 1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 1, 2, 2}, {3, 3, 1, 1}), -1.0, 1e-15);
  EXPECT_THROW(spearman({1}, {1}), InsufficientDataError);
}

TEST(ClosedForm, InverseMatchesDense) {
  std::mt19937_64 rng{99};
  for (int rep = 0; rep < 10; ++rep) {
    auto sys = testing_util::random_kkt(grid_graph(2 + rep % 3, 3), rng);
    Eigen::MatrixXd dense = sys.to_dense().inverse();
    Eigen::MatrixXd closed =
        null_space_kkt_inverse(sys.hessian().to_dense(), sys.jacobian().to_dense());
    EXPECT_LE((dense - closed).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Regularity, ToyChainReport) {
  auto model = toy_chain_model(10);
  auto snap = evaluate(model, model.zero_primal(), model.zero_dual());
  auto rep = regularity_report(snap);
  EXPECT_FALSE(rep.licq_violated);
  Eigen::MatrixXd g = snap.jacobian.to_dense();
  Eigen::VectorXd ev = (g * g.transpose()).selfadjointView<Eigen::Lower>().eigenvalues();
  EXPECT_NEAR(rep.gamma_g, ev.minCoeff(), 1e-10);
  EXPECT_GT(rep.gamma_h, 0.0);
  EXPECT_NEAR(rep.mu_hat, 4.0 * rep.upsilon * rep.upsilon / (rep.gamma_g * rep.gamma_h),
              1e-9 * rep.mu_hat);
  EXPECT_GE(rep.upsilon, rep.norm_jacobian);
}

TEST(Regularity, FlagsLicqFailure) {
  GraphQuadraticConfig cfg;
  cfg.rank_deficient = true;
  auto model = toy_chain_model(6, cfg);
  auto snap = evaluate(model, model.zero_primal(), model.zero_dual(),
                       HessianOptions{HessianMode::none});
  auto rep = regularity_report(snap);
  EXPECT_TRUE(rep.licq_violated);
  EXPECT_EQ(rep.gamma_g, 0.0);
  EXPECT_TRUE(std::isinf(rep.mu_hat));
}

TEST(Regularity, SizeCap) {
  auto model = toy_chain_model(10);
  auto snap = evaluate(model, model.zero_primal(), model.zero_dual());
  EXPECT_THROW(regularity_report(snap, 20), InputError);
}

TEST(Regularity, SubproblemCertificate) {
  auto pde = small_pde(9);
  auto snap = random_snapshot(pde.model, 2);
  auto dec = build_decomposition(pde.model.graph(), pde.parts, 1);
  for (std::size_t l = 0; l < dec.size(); ++l) {
    auto cert = subproblem_certificate(assemble_subproblem(snap, dec, l, 1.0));
    EXPECT_EQ(cert.index, l);
    EXPECT_GT(cert.gamma_g, 0.0);
    EXPECT_GT(cert.reduced_min_eig, 0.0);
  }
}

TEST(Decay, KktInverseBlocksDecay) {
  auto pde = small_pde(12);
  auto snap = random_snapshot(pde.model, 4);
  auto dec = build_decomposition(pde.model.graph(), pde.parts, 3);
  auto out = kkt_inverse_decay(assemble_subproblem(snap, dec, 1, 1.0), pde.model.graph());
  EXPECT_LE(out.closed_form_error, 1e-8);
  ASSERT_GE(out.curve.value.size(), 5u);
  fit_log_linear(out.curve);
  EXPECT_LT(out.curve.slope, 0.0);
}

TEST(Decay, ErrorVsOverlapSkipsDegenerate) {
  auto model = toy_chain_model(6);
  std::vector<NodeSet> singletons;
  for (NodeId i = 0; i < 6; ++i) {
    singletons.push_back(NodeSet{std::vector<NodeId>{i}});
  }
  auto snap = evaluate(model, model.zero_primal(), model.zero_dual());
  auto curve = error_vs_overlap(model, singletons, snap, 1.0, {0, 1, 2});
  EXPECT_EQ(curve.skipped, (std::vector<double>{0}));
  EXPECT_EQ(curve.abscissa, (std::vector<double>{1, 2}));
}

TEST(Decay, ErrorVsOverlapDecreases) {
  auto pde = small_pde(12);
  auto snap = random_snapshot(pde.model, 6);
  auto curve = error_vs_overlap(pde.model, pde.parts, snap, 1.0, {1, 2, 3, 4});
  ASSERT_EQ(curve.value.size(), 4u);
  for (std::size_t k = 1; k < curve.value.size(); ++k) {
    EXPECT_LT(curve.value[k], curve.value[k - 1]);
  }
}

TEST(Decay, BoundarySensitivityTrend) {
  auto pde = small_pde(12);
  auto snap = random_snapshot(pde.model, 8);
  auto dec = build_decomposition(pde.model.graph(), pde.parts, 3);
  auto d1 = zero_boundary(snap, dec, 0);
  auto d2 = d1;
  d2.primal.values().setConstant(1.0);
  d2.dual.values().setConstant(-1.0);
  auto prof = boundary_sensitivity(snap, dec, 0, 1.0, d1, d2);
  EXPECT_EQ(prof.distance.size(), dec[0].nodes.size());
  EXPECT_LT(spearman(prof.distance, prof.difference), -0.5);
}

TEST(Descent, MarginIsConsistent) {
  auto model = toy_chain_model(12);
  auto x = uniform_blocks(model.primal_layout(), 5, DrawKind::primal, -1.0, 1.0);
  auto lam = uniform_blocks(model.dual_layout(), 5, DrawKind::dual, -1.0, 1.0);
  auto snap = evaluate(model, x, lam);
  auto exact = exact_newton_direction(snap);
  auto rep = regularity_report(snap);
  auto m = descent_margin(snap, exact, exact, 5.0, 0.1, rep.gamma_g);
  EXPECT_LT(m.directional_derivative, 0.0);
  EXPECT_DOUBLE_EQ(m.slack, m.directional_derivative - m.bound);
  EXPECT_DOUBLE_EQ(m.directional_derivative,
                   directional_derivative(merit_gradient(snap, 5.0, 0.1), exact));
}

}  // namespace
}  // namespace fogd

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fogd/driver.hpp"
#include "fogd/pde.hpp"
#include "fogd/rng.hpp"
#include "fogd/toy_chain.hpp"
#include "test_util.hpp"

namespace fogd {
namespace {

GsNlpModel nonlinear_chain(int n) {
  GraphQuadraticConfig cfg;
  cfg.nonlinearity = 0.4;
  return toy_chain_model(n, cfg);
}

double merit_at(const GsNlpModel& model, const Eigen::VectorXd& z, double eta1, double eta2) {
  int n = model.primal_dim();
  NodeBlockVector x{model.primal_layout(), z.head(n)};
  NodeBlockVector lam{model.dual_layout(), z.tail(model.dual_dim())};
  auto ev = evaluate_first_order(model, x, lam);
  return merit_value(ev.objective, lam.values(), ev.constraints.values(),
                     ev.lagrangian_gradient.values(), eta1, eta2);
}

TEST(Merit, PdeZeroPoint) {
  auto pde = build_pde_model(PdeConfig{});
  auto snap = evaluate(pde.model, pde.model.zero_primal(), pde.model.zero_dual(),
                       HessianOptions{HessianMode::none});
  EXPECT_DOUBLE_EQ(merit_value(snap, 5.0, 0.1), 48000.0);
  EXPECT_DOUBLE_EQ(merit_value(snap, 0.0, 0.0), snap.lagrangian());
}

TEST(Merit, EqualsObjectiveAtKktPoint) {
  auto model = toy_chain_model(8);
  auto snap0 = evaluate(model, model.zero_primal(), model.zero_dual());
  auto d = exact_newton_direction(snap0);
  auto snap = evaluate(model, d.primal, d.dual);
  ASSERT_LE(snap.kkt_residual(), 1e-12);
  EXPECT_NEAR(merit_value(snap, 5.0, 0.1), snap.objective, 1e-12);
}

TEST(Merit, GradientMatchesFiniteDifferences) {
  PdeConfig cfg;
  cfg.rows = 4;
  cfg.cols = 4;
  cfg.strips = 2;
  auto pde = build_pde_model(cfg);
  auto chain = nonlinear_chain(7);
  for (const GsNlpModel* model : {&pde.model, &chain}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto x = uniform_blocks(model->primal_layout(), seed, DrawKind::primal, -1.5, 1.5);
      auto lam = uniform_blocks(model->dual_layout(), seed, DrawKind::dual, -1.5, 1.5);
      auto snap = evaluate(*model, x, lam, HessianOptions{HessianMode::none});
      auto grad = merit_gradient(snap, 5.0, 0.1);
      auto fd = testing_util::fd_gradient(
          [&](const Eigen::VectorXd& z) { return merit_at(*model, z, 5.0, 0.1); },
          stack(x, lam));
      EXPECT_LE(testing_util::rel_error(stack(grad.primal, grad.dual), fd), 1e-5);
    }
  }
}

TEST(LineSearch, NewtonStepOnQuadraticIsAcceptedAtOnce) {
  auto model = toy_chain_model(6);
  auto snap = evaluate(model, model.zero_primal(), model.zero_dual());
  auto dir = exact_newton_direction(snap);
  FogdConfig cfg;
  auto ls = armijo_linesearch(model, snap, dir, cfg);
  EXPECT_EQ(ls.alpha, 1.0);
  EXPECT_EQ(ls.backtracks, 0);
  EXPECT_LT(ls.directional_derivative, 0.0);
  EXPECT_LE(ls.merit_change, cfg.beta * ls.directional_derivative);
  EXPECT_NEAR(ls.merit_change, ls.merit - merit_value(snap, cfg.eta1, cfg.eta2),
              1e-12 * std::abs(ls.merit));
}

TEST(LineSearch, RejectsAscentAndExhaustion) {
  auto model = nonlinear_chain(6);
  auto snap = evaluate(model, model.zero_primal(), model.zero_dual());
  auto dir = exact_newton_direction(snap);
  FogdConfig cfg;
  Direction up{NodeBlockVector{dir.primal.layout(), -dir.primal.values()},
               NodeBlockVector{dir.dual.layout(), -dir.dual.values()}};
  EXPECT_THROW(armijo_linesearch(model, snap, up, cfg), NonDescentError);
  Direction far{NodeBlockVector{dir.primal.layout(), 1e3 * dir.primal.values()},
                NodeBlockVector{dir.dual.layout(), 1e3 * dir.dual.values()}};
  cfg.max_backtracks = 2;
  EXPECT_THROW(armijo_linesearch(model, snap, far, cfg), LineSearchError);
}

TEST(Driver, StopsImmediatelyAtKktPoint) {
  auto model = toy_chain_model(8);
  auto snap0 = evaluate(model, model.zero_primal(), model.zero_dual());
  auto d = exact_newton_direction(snap0);
  FogdConfig cfg;
  cfg.direction = DirectionMode::exact;
  auto res = run_fogd(model, nullptr, cfg, d.primal, d.dual);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 0);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_TRUE(std::isnan(res.trace[0].alpha));
}

TEST(Driver, ExactModeConvergesFast) {
  auto model = nonlinear_chain(20);
  FogdConfig cfg;
  cfg.direction = DirectionMode::exact;
  cfg.kkt_tolerance = 1e-10;
  auto res = run_fogd(model, nullptr, cfg, model.zero_primal(), model.zero_dual());
  ASSERT_TRUE(res.converged);
  EXPECT_LE(res.final_residual, 1e-10);
  const auto& t = res.trace;
  ASSERT_GE(t.size(), 3u);
  EXPECT_LT(t[t.size() - 1].kkt_residual, 1e-2 * t[t.size() - 2].kkt_residual);
}

TEST(Driver, OgdRunSatisfiesDescentAndArmijo) {
  PdeConfig pc;
  pc.rows = 10;
  pc.cols = 10;
  pc.strips = 2;
  auto pde = build_pde_model(pc);
  const auto& model = pde.model;
  auto dec = build_decomposition(model.graph(), pde.parts, 2);
  FogdConfig cfg;
  auto res = run_fogd(model, &dec, cfg, pde_constant_point(model, -10.0, -10.0),
                      model.zero_dual());
  ASSERT_TRUE(res.converged);
  EXPECT_GE(res.iterations, 3);
  for (std::size_t k = 0; k + 1 < res.trace.size(); ++k) {
    const auto& r = res.trace[k];
    EXPECT_LT(r.dir_deriv, 0.0);
    EXPECT_LE(r.merit_change, cfg.beta * r.alpha * r.dir_deriv);
    double scale = std::max(std::abs(r.merit), std::abs(res.trace[k + 1].merit));
    EXPECT_NEAR(res.trace[k + 1].merit - r.merit, r.merit_change, 1e-14 * scale);
    EXPECT_EQ(r.iter, static_cast<int>(k));
  }
}

TEST(Driver, ConfigurationErrors) {
  auto model = toy_chain_model(4);
  FogdConfig cfg;
  EXPECT_THROW(run_fogd(model, nullptr, cfg, model.zero_primal(), model.zero_dual()),
               InputError);
  cfg.direction = DirectionMode::exact;
  cfg.beta = 0.7;
  EXPECT_THROW(run_fogd(model, nullptr, cfg, model.zero_primal(), model.zero_dual()),
               InputError);
  EXPECT_EQ(parse_direction_mode("exact"), DirectionMode::exact);
  EXPECT_THROW(parse_direction_mode("spectral"), InputError);
}

TEST(Driver, ErrorsCarryIteration) {
  GraphQuadraticConfig qc;
  qc.rank_deficient = true;
  auto model = toy_chain_model(6, qc);
  FogdConfig cfg;
  cfg.direction = DirectionMode::exact;
  try {
    run_fogd(model, nullptr, cfg, model.zero_primal(), model.zero_dual());
    FAIL() << "expected a modification failure";
  } catch (const ModificationError& e) {
    ASSERT_TRUE(e.iteration().has_value());
    EXPECT_EQ(*e.iteration(), 0);
    EXPECT_EQ(std::string{e.what()}.rfind("iteration 0: ", 0), 0u);
  }
}

TEST(Rate, GeometricTail) {
  std::vector<IterateRecord> trace;
  for (int k = 0; k < 20; ++k) {
    IterateRecord r;
    r.iter = k;
    r.psi = std::pow(0.5, k);
    trace.push_back(r);
  }
  EXPECT_NEAR(estimate_linear_rate(trace), 0.5, 1e-12);

  // 0.1^k reaches the floor at k = 12; that point counts as 1e-12 and
  // everything after it is ignored.
  std::vector<IterateRecord> fast = trace;
  for (int k = 0; k < 20; ++k) {
    fast[k].psi = std::pow(0.1, k) * (k == 12 ? 1e-3 : 1.0);
  }
  EXPECT_NEAR(estimate_linear_rate(fast), 0.1, 1e-9);

  trace.resize(2);
  EXPECT_THROW(estimate_linear_rate(trace), InsufficientDataError);
  EXPECT_THROW(estimate_linear_rate(trace, 1.5), InputError);
}

TEST(Rate, NodewiseError) {
  auto model = toy_chain_model(3);
  ReferenceSolution ref{model.zero_primal(), model.zero_dual()};
  auto x = model.zero_primal();
  auto lam = model.zero_dual();
  x.block(1) << 3.0, 0.0;
  lam.block(1) << 4.0;
  x.block(2) << 1.0, 1.0;
  EXPECT_DOUBLE_EQ(nodewise_error(x, lam, ref), 5.0);
}

TEST(Trace, CsvFormat) {
  std::vector<IterateRecord> trace(2);
  trace[0].iter = 0;
  trace[0].kkt_residual = 2.5;
  trace[0].merit = 1.0;
  trace[0].alpha = 1.0;
  trace[0].backtracks = 0;
  trace[0].dir_norm = 3.0;
  trace[0].dir_deriv = -4.0;
  trace[0].merit_change = -0.75;
  trace[1].iter = 1;
  trace[1].kkt_residual = 0.5;
  trace[1].merit = 0.25;
  std::string path = ::testing::TempDir() + "trace.csv";
  write_trace_csv(path, trace, "abc123");
  std::ifstream in{path};
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    lines.push_back(line);
  }
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0],
            "iter,kkt_residual,merit,alpha,backtracks,dir_norm,dir_deriv,sigma,psi,wall_ms,"
            "merit_change");
  EXPECT_EQ(lines[1], "0,2.5,1,1,0,3,-4,0,,0,-0.75");
  EXPECT_EQ(lines[2], "1,0.5,0.25,,,,,0,,0,");
  EXPECT_EQ(lines[3], "# spec_hash=abc123");
}

}  // namespace
}  // namespace fogd

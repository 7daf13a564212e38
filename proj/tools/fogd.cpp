#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fogd/error.hpp"
#include "fogd/experiment.hpp"

int main(int argc, char** argv) {
  fogd::ExperimentSpec spec;
  CLI::App app{"Overlapping graph decomposition SQP experiment runner"};
  app.set_config("--config", "", "flat key=value file using the long flag names");
  app.get_config_formatter_base()->arrayDelimiter(',');

  app.add_option("--problem", spec.problem, "pde | toy-chain | edge-list")
      ->capture_default_str();
  app.add_option("--rows", spec.rows)->capture_default_str();
  app.add_option("--cols", spec.cols)->capture_default_str();
  app.add_option("--ud", spec.ud, "desired state")->capture_default_str();
  app.add_option("--alpha", spec.alpha, "control weight")->capture_default_str();
  app.add_option("--p", spec.p, "state exponent")->capture_default_str();
  app.add_option("--spacing", spec.spacing, "mesh spacing")->capture_default_str();
  app.add_option("--strips", spec.strips, "number of disjoint parts")->capture_default_str();
  app.add_option("--nodes", spec.nodes, "toy chain length")->capture_default_str();
  app.add_option("--nonlinearity", spec.nonlinearity, "graph model nonlinearity")
      ->capture_default_str();
  app.add_flag("--rank-deficient", spec.rank_deficient,
               "graph model with two nodes sharing one constraint");
  app.add_option("--edges", spec.edges, "edge list file for --problem edge-list");
  app.add_option("--partition", spec.partition, "node part_id file");
  app.add_option("--b", spec.b, "overlap size (repeatable)")->capture_default_str();
  app.add_option("--eta1", spec.eta1)->capture_default_str();
  app.add_option("--eta2", spec.eta2)->capture_default_str();
  app.add_option("--beta", spec.beta)->capture_default_str();
  app.add_option("--mu", spec.mu)->capture_default_str();
  app.add_option("--tol", spec.tol, "KKT residual tolerance")->capture_default_str();
  app.add_option("--ref-tol", spec.ref_tol, "reference solve tolerance")
      ->capture_default_str();
  app.add_option("--max-iters", spec.max_iters)->capture_default_str();
  app.add_option("--hessian", spec.hessian, "none | levenberg | adaptive")
      ->capture_default_str();
  app.add_option("--direction", spec.direction, "ogd | exact")->capture_default_str();
  app.add_option("--init", spec.init, "uniform:lo,hi | constant:u,z,l | file:path")
      ->capture_default_str();
  app.add_option("--seed", spec.seed, "seed for uniform init (repeatable)")
      ->capture_default_str();
  app.add_option("--reference", spec.reference, "none | exact-sqp")->capture_default_str();
  app.add_flag("--measure,!--no-measure", spec.measure,
               "record gamma_G, gamma_H, mu_hat at each initial point");
  app.add_flag("--diagnostics", spec.diagnostics, "run the dense diagnostics instead");
  app.add_option("--workers", spec.workers, "subproblem threads, 0 = all cores")
      ->capture_default_str();
  app.add_option("--out", spec.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fogd::kExitInvalid;
  }

  try {
    if (spec.diagnostics) {
      int code = fogd::run_diagnostics(spec);
      std::cout << "diagnostics written to " << spec.out << " (exit " << code << ")\n";
      return code;
    }
    auto result = fogd::run_experiment(spec);
    int converged = 0;
    for (const auto& r : result.runs) {
      converged += r.converged() ? 1 : 0;
      std::cout << "b=" << (r.b >= 0 ? std::to_string(r.b) : std::string{"-"})
                << " seed=" << r.seed << " " << r.status << " iters=" << r.iterations
                << " residual=" << r.final_residual;
      if (!r.message.empty()) {
        std::cout << " (" << r.message << ")";
      }
      std::cout << '\n';
    }
    std::cout << converged << "/" << result.runs.size() << " runs converged; summary in "
              << spec.out << "/summary.csv (spec hash " << result.hash << ")\n";
    return result.exit_code;
  } catch (const fogd::InputError& e) {
    std::cerr << "invalid experiment: " << e.what() << '\n';
    return fogd::kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fogd::kExitInvalid;
  }
}

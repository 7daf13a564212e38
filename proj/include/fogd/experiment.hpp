#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fogd/decomposition.hpp"
#include "fogd/diagnostics.hpp"
#include "fogd/driver.hpp"
#include "fogd/error.hpp"
#include "fogd/graph.hpp"
#include "fogd/model.hpp"
#include "fogd/ogd.hpp"
#include "fogd/pde.hpp"
#include "fogd/rng.hpp"
#include "fogd/toy_chain.hpp"

namespace fogd {

/// Exit statuses of the experiment runner.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNotConverged = 2;

/**
 * Initial point. `uniform` draws every primal and dual entry from
 * U(lo, hi) per seed. `constant` sets primal component 0 to `u`, the other
 * primal components to `z` and all duals to `lambda`. `file` reads a point
 * written by a previous run.
 */
struct InitSpec {
  enum class Kind { uniform, constant, file };
  Kind kind = Kind::uniform;
  double lo = -100.0;
  double hi = 100.0;
  double u = 0.0;
  double z = 0.0;
  double lambda = 0.0;
  std::string path;
};

namespace detail {

inline std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::string item;
  std::istringstream in{text};
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) {
        throw std::invalid_argument{item};
      }
    } catch (const std::logic_error&) {
      throw InputError{"bad number '" + item + "' in " + what};
    }
  }
  return out;
}

}  // namespace detail

/// Accepts "uniform:lo,hi", "constant:u,z,l", "file:path" and the
/// parenthesized forms "uniform(lo,hi)", "constant(u,z,l)".
inline InitSpec parse_init(const std::string& text) {
  std::string name;
  std::string args;
  if (auto colon = text.find(':'); colon != std::string::npos) {
    name = text.substr(0, colon);
    args = text.substr(colon + 1);
  } else if (auto open = text.find('('); open != std::string::npos && text.back() == ')') {
    name = text.substr(0, open);
    args = text.substr(open + 1, text.size() - open - 2);
  } else {
    name = text;
  }
  InitSpec init;
  if (name == "uniform") {
    auto v = args.empty() ? std::vector<double>{-100.0, 100.0}
                          : detail::parse_numbers(args, "uniform init");
    if (v.size() != 2 || !(v[0] < v[1])) {
      throw InputError{"uniform init needs lo,hi with lo < hi"};
    }
    init.kind = InitSpec::Kind::uniform;
    init.lo = v[0];
    init.hi = v[1];
  } else if (name == "constant") {
    auto v = detail::parse_numbers(args, "constant init");
    if (v.size() != 3) {
      throw InputError{"constant init needs u,z,lambda"};
    }
    init.kind = InitSpec::Kind::constant;
    init.u = v[0];
    init.z = v[1];
    init.lambda = v[2];
  } else if (name == "file") {
    if (args.empty()) {
      throw InputError{"file init needs a path"};
    }
    init.kind = InitSpec::Kind::file;
    init.path = args;
  } else {
    throw InputError{"unknown init '" + text + "' (uniform:lo,hi | constant:u,z,l | file:path)"};
  }
  return init;
}

inline std::string to_string(const InitSpec& init) {
  std::ostringstream out;
  out << std::setprecision(17);
  switch (init.kind) {
    case InitSpec::Kind::uniform:
      out << "uniform:" << init.lo << ',' << init.hi;
      break;
    case InitSpec::Kind::constant:
      out << "constant:" << init.u << ',' << init.z << ',' << init.lambda;
      break;
    case InitSpec::Kind::file:
      out << "file:" << init.path;
      break;
  }
  return out.str();
}

/// Everything that determines an experiment. Key names double as CLI flags.
struct ExperimentSpec {
  std::string problem = "pde";
  // pde
  int rows = 40;
  int cols = 40;
  double ud = -5.0;
  double alpha = 0.5;
  int p = 4;
  double spacing = 1.0;
  int strips = 5;
  // toy-chain and edge-list
  int nodes = 30;
  double nonlinearity = 0.4;
  bool rank_deficient = false;
  std::string edges;
  std::string partition;

  std::vector<int> b{6};
  double eta1 = 5.0;
  double eta2 = 0.1;
  double beta = 0.1;
  double mu = 1.0;
  double tol = 1e-6;
  double ref_tol = 1e-10;
  int max_iters = 500;
  std::string hessian = "adaptive";
  std::string direction = "ogd";
  std::string init = "uniform:-100,100";
  std::vector<std::uint64_t> seed{1};
  std::string reference = "none";
  /// Measure γ_G, γ_H and μ̂ at each initial point for the run metadata.
  bool measure = true;
  bool diagnostics = false;
  int workers = 1;
  std::string out = "fogd_out";

  void validate() const {
    if (problem != "pde" && problem != "toy-chain" && problem != "edge-list") {
      throw InputError{"problem must be pde, toy-chain or edge-list"};
    }
    if (problem == "edge-list" && edges.empty()) {
      throw InputError{"edge-list problem needs --edges FILE"};
    }
    if (problem == "toy-chain" && nodes < 2) {
      throw InputError{"toy chain needs at least 2 nodes"};
    }
    if (b.empty()) {
      throw InputError{"at least one overlap size b is required"};
    }
    for (int v : b) {
      if (v < 0) {
        throw InputError{"overlap sizes must be nonnegative"};
      }
    }
    if (seed.empty()) {
      throw InputError{"at least one seed is required"};
    }
    if (reference != "none" && reference != "exact-sqp") {
      throw InputError{"reference must be none or exact-sqp"};
    }
    if (!(ref_tol > 0.0)) {
      throw InputError{"reference tolerance must be positive"};
    }
    if (workers < 0) {
      throw InputError{"workers must be nonnegative"};
    }
    if (out.empty()) {
      throw InputError{"output directory must be set"};
    }
    parse_init(init);
    parse_hessian_mode(hessian);
    parse_direction_mode(direction);
    solver_config().validate();
  }

  FogdConfig solver_config() const {
    FogdConfig cfg;
    cfg.eta1 = eta1;
    cfg.eta2 = eta2;
    cfg.beta = beta;
    cfg.mu = mu;
    cfg.kkt_tolerance = tol;
    cfg.max_iters = max_iters;
    cfg.hessian.mode = parse_hessian_mode(hessian);
    cfg.direction = parse_direction_mode(direction);
    cfg.workers = workers;
    return cfg;
  }

  PdeConfig pde_config() const {
    PdeConfig cfg;
    cfg.rows = rows;
    cfg.cols = cols;
    cfg.desired_state = ud;
    cfg.control_weight = alpha;
    cfg.exponent = p;
    cfg.spacing = spacing;
    cfg.strips = strips;
    return cfg;
  }
};

/// Fields that change results, in canonical form. Output location and
/// thread count are excluded so they do not alter the hash.
inline nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  j["problem"] = s.problem;
  if (s.problem == "pde") {
    j["rows"] = s.rows;
    j["cols"] = s.cols;
    j["ud"] = s.ud;
    j["alpha"] = s.alpha;
    j["p"] = s.p;
    j["spacing"] = s.spacing;
  } else {
    j["nonlinearity"] = s.nonlinearity;
    j["rank_deficient"] = s.rank_deficient;
    if (s.problem == "toy-chain") {
      j["nodes"] = s.nodes;
    } else {
      j["edges"] = s.edges;
    }
  }
  j["strips"] = s.strips;
  j["partition"] = s.partition;
  j["b"] = s.b;
  j["eta1"] = s.eta1;
  j["eta2"] = s.eta2;
  j["beta"] = s.beta;
  j["mu"] = s.mu;
  j["tol"] = s.tol;
  j["ref_tol"] = s.ref_tol;
  j["max_iters"] = s.max_iters;
  j["hessian"] = s.hessian;
  j["direction"] = s.direction;
  j["init"] = to_string(parse_init(s.init));
  j["seed"] = s.seed;
  j["reference"] = s.reference;
  j["measure"] = s.measure;
  j["diagnostics"] = s.diagnostics;
  return j;
}

/// FNV-1a over the canonical JSON, as 16 hex digits.
inline std::string spec_hash(const ExperimentSpec& s) {
  std::string text = to_json(s).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct ExperimentProblem {
  GsNlpModel model;
  std::vector<NodeSet> parts;
};

inline ExperimentProblem build_problem(const ExperimentSpec& s) {
  if (s.problem == "pde") {
    auto pde = build_pde_model(s.pde_config());
    if (s.partition.empty()) {
      return {std::move(pde.model), std::move(pde.parts)};
    }
    auto parts = read_partition(s.partition, pde.model.graph());
    return {std::move(pde.model), std::move(parts)};
  }
  GraphQuadraticConfig qc;
  qc.nonlinearity = s.nonlinearity;
  qc.rank_deficient = s.rank_deficient;
  Graph g = s.problem == "toy-chain" ? path_graph(s.nodes) : read_edge_list(s.edges);
  std::vector<NodeSet> parts;
  if (!s.partition.empty()) {
    parts = read_partition(s.partition, g);
  } else {
    if (s.strips < 1 || s.strips > g.node_count()) {
      throw InputError{"strip count must lie in [1, node count]"};
    }
    parts = block_partition(g.node_count(), s.strips);
  }
  return {graph_quadratic_model(g, qc), std::move(parts)};
}

/// Point file: a hash comment, then all primal values, then all dual values.
inline void write_point(std::ostream& out, const NodeBlockVector& x,
                        const NodeBlockVector& lambda) {
  out << std::setprecision(17);
  for (Eigen::Index k = 0; k < x.values().size(); ++k) {
    out << x.values()[k] << '\n';
  }
  for (Eigen::Index k = 0; k < lambda.values().size(); ++k) {
    out << lambda.values()[k] << '\n';
  }
}

inline std::pair<NodeBlockVector, NodeBlockVector> read_point(const GsNlpModel& model,
                                                              const std::string& path) {
  std::ifstream in{path};
  if (!in) {
    throw InputError{"cannot open point file " + path};
  }
  std::vector<double> v;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields{line};
    for (double d = 0.0; fields >> d;) {
      v.push_back(d);
    }
  }
  auto n = static_cast<std::size_t>(model.primal_dim());
  auto m = static_cast<std::size_t>(model.dual_dim());
  if (v.size() != n + m) {
    throw InputError{"point file " + path + " has " + std::to_string(v.size()) +
                     " values, model needs " + std::to_string(n + m)};
  }
  Eigen::Map<const Eigen::VectorXd> all{v.data(), static_cast<Eigen::Index>(v.size())};
  return {NodeBlockVector{model.primal_layout(), all.head(model.primal_dim())},
          NodeBlockVector{model.dual_layout(), all.tail(model.dual_dim())}};
}

inline std::pair<NodeBlockVector, NodeBlockVector> initial_point(const GsNlpModel& model,
                                                                 const InitSpec& init,
                                                                 std::uint64_t seed) {
  switch (init.kind) {
    case InitSpec::Kind::uniform:
      return {uniform_blocks(model.primal_layout(), seed, DrawKind::primal, init.lo, init.hi),
              uniform_blocks(model.dual_layout(), seed, DrawKind::dual, init.lo, init.hi)};
    case InitSpec::Kind::constant: {
      auto x = model.zero_primal();
      for (NodeId i = 0; i < model.node_count(); ++i) {
        auto blk = x.block(i);
        for (Eigen::Index c = 0; c < blk.size(); ++c) {
          blk[c] = c == 0 ? init.u : init.z;
        }
      }
      auto lam = model.zero_dual();
      lam.values().setConstant(init.lambda);
      return {std::move(x), std::move(lam)};
    }
    case InitSpec::Kind::file:
      return read_point(model, init.path);
  }
  throw InputError{"unhandled init kind"};
}

namespace detail {

/// Writes through a temporary file and renames, so readers never see a
/// partially written artifact.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out{tmp, std::ios::binary};
    if (!out) {
      throw InputError{"cannot write " + tmp.string()};
    }
    out << content;
    if (!out) {
      throw InputError{"write failed for " + tmp.string()};
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::string csv_text(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), ',', ';');
  std::replace(out.begin(), out.end(), '\n', ' ');
  return out;
}

inline nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const RegularityReport& r) {
  return {{"primal_dim", r.primal_dim},
          {"dual_dim", r.dual_dim},
          {"gamma_g", finite_or_null(r.gamma_g)},
          {"gamma_h", finite_or_null(r.gamma_h)},
          {"norm_modified_hessian", r.norm_modified_hessian},
          {"norm_hessian", r.norm_hessian},
          {"norm_jacobian", r.norm_jacobian},
          {"upsilon", r.upsilon},
          {"mu_hat", finite_or_null(r.mu_hat)},
          {"licq_violated", r.licq_violated}};
}

inline std::string curve_csv(const DecayCurve& c, const std::string& x_name,
                             const std::string& y_name, const std::string& hash) {
  std::ostringstream out;
  out << std::setprecision(17) << x_name << ',' << y_name << '\n';
  for (std::size_t k = 0; k < c.abscissa.size(); ++k) {
    out << c.abscissa[k] << ',' << c.value[k] << '\n';
  }
  out << "# spec_hash=" << hash << '\n';
  return out.str();
}

inline nlohmann::json fit_json(DecayCurve& c, double floor = 1e-14) {
  nlohmann::json j;
  try {
    fit_log_linear(c, floor);
    j["slope"] = c.slope;
    j["r_squared"] = finite_or_null(c.r_squared);
  } catch (const InsufficientDataError&) {
    j["slope"] = nullptr;
    j["r_squared"] = nullptr;
  }
  j["skipped"] = c.skipped;
  return j;
}

/**
 * Constants at one point for the run metadata: the full model when it fits
 * under the dense cap, otherwise the worst case over subproblems.
 */
inline nlohmann::json measure_constants(const EvaluationSnapshot& snap,
                                        const OverlapDecomposition* dec, double mu) {
  constexpr int kFullCap = 2000;
  nlohmann::json j;
  if (snap.x.size() + snap.lambda.size() <= kFullCap) {
    j = to_json(regularity_report(snap, kFullCap));
    j["scope"] = "full";
    return j;
  }
  if (dec == nullptr) {
    j["scope"] = "skipped";
    j["reason"] = "model above the dense cap and no decomposition";
    return j;
  }
  double gg = std::numeric_limits<double>::infinity();
  double gh = std::numeric_limits<double>::infinity();
  double ups = 0.0;
  for (std::size_t l = 0; l < dec->size(); ++l) {
    auto sp = assemble_subproblem(snap, *dec, l, mu);
    if (sp.system.dimension() > kFullCap) {
      j["scope"] = "skipped";
      j["reason"] = "subproblem above the dense cap";
      return j;
    }
    auto cert = subproblem_certificate(sp, kFullCap);
    gg = std::min(gg, cert.gamma_g);
    gh = std::min(gh, cert.reduced_min_eig);
    ups = std::max({ups, dense_norm(sp.system.hessian().to_dense()),
                    dense_norm(sp.system.jacobian().to_dense())});
  }
  j["scope"] = "subproblems";
  j["gamma_g"] = finite_or_null(gg);
  j["gamma_h"] = finite_or_null(gh);
  j["upsilon"] = ups;
  j["mu_hat"] = finite_or_null(mu_threshold(ups, gg, gh));
  return j;
}

}  // namespace detail

/// One row of the summary table.
struct RunSummary {
  int b = -1;
  std::uint64_t seed = 0;
  std::string status;
  int iterations = 0;
  double final_residual = std::numeric_limits<double>::quiet_NaN();
  double final_merit = std::numeric_limits<double>::quiet_NaN();
  double rate = std::numeric_limits<double>::quiet_NaN();
  std::string message;
  std::vector<IterateRecord> trace;

  bool converged() const { return status == "converged"; }
};

struct ExperimentResult {
  int exit_code = kExitOk;
  std::string hash;
  std::vector<RunSummary> runs;
};

inline std::string summary_csv(const ExperimentSpec& s, const std::vector<RunSummary>& runs,
                               const std::string& hash) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "problem,b,seed,status,iterations,final_residual,final_merit,rate,message\n";
  for (const auto& r : runs) {
    out << s.problem << ',';
    if (r.b >= 0) {
      out << r.b;
    }
    out << ',' << r.seed << ',' << r.status << ',' << r.iterations << ',';
    detail::write_field(out, r.final_residual);
    out << ',';
    detail::write_field(out, r.final_merit);
    out << ',';
    detail::write_field(out, r.rate);
    out << ',' << detail::csv_text(r.message) << '\n';
  }
  out << "# spec_hash=" << hash << '\n';
  return out.str();
}

/**
 * One run per (b, seed). Exact direction mode ignores b and random seeds
 * matter only for uniform initialization, so the grid collapses
 * accordingly. Artifacts land in `spec.out`.
 */
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  ExperimentResult result;
  result.hash = spec_hash(spec);
  const std::string& hash = result.hash;
  fs::create_directories(spec.out);

  auto problem = build_problem(spec);
  const auto& model = problem.model;
  FogdConfig cfg = spec.solver_config();
  InitSpec init = parse_init(spec.init);

  std::vector<int> overlaps = spec.b;
  if (cfg.direction == DirectionMode::exact) {
    overlaps = {-1};
  }
  std::vector<std::uint64_t> seeds = spec.seed;
  if (init.kind != InitSpec::Kind::uniform) {
    seeds = {0};
  }

  std::map<std::uint64_t, std::optional<ReferenceSolution>> references;
  std::map<std::uint64_t, std::string> reference_errors;
  auto reference_for = [&](std::uint64_t seed) -> const ReferenceSolution* {
    if (spec.reference == "none") {
      return nullptr;
    }
    if (!references.count(seed)) {
      auto [x0, l0] = initial_point(model, init, seed);
      try {
        references[seed] = solve_reference(model, cfg, x0, l0, spec.ref_tol);
      } catch (const Error& e) {
        references[seed] = std::nullopt;
        reference_errors[seed] = e.what();
      }
    }
    return references[seed] ? &*references[seed] : nullptr;
  };

  for (int b : overlaps) {
    std::optional<OverlapDecomposition> dec;
    std::string dec_error;
    if (b >= 0) {
      try {
        dec = build_decomposition(model.graph(), problem.parts, b);
      } catch (const DegenerateSubdomainError& e) {
        dec_error = e.what();
      }
    }
    for (std::uint64_t seed : seeds) {
      RunSummary run;
      run.b = b;
      run.seed = seed;
      std::string stem = (b >= 0 ? "run_b" + std::to_string(b) : std::string{"run_exact"}) +
                         "_seed" + std::to_string(seed);
      nlohmann::json meta;
      meta["spec"] = to_json(spec);
      meta["spec_hash"] = hash;
      meta["run"] = {{"b", b >= 0 ? nlohmann::json(b) : nlohmann::json(nullptr)},
                     {"seed", seed}};
      meta["graph"] = {{"nodes", model.node_count()},
                       {"edges", model.graph().edge_count()},
                       {"primal_dim", model.primal_dim()},
                       {"dual_dim", model.dual_dim()},
                       {"parts", problem.parts.size()}};
      if (spec.problem == "pde") {
        meta["discretization"] =
            "finite differences, 5-point Laplacian, zero ghost values outside the grid, "
            "h^2 quadrature weights";
      }
      if (dec) {
        nlohmann::json sizes = nlohmann::json::array();
        for (const auto& s : dec->subdomains()) {
          sizes.push_back(s.nodes.size());
        }
        meta["subdomain_sizes"] = sizes;
      }

      try {
        if (b >= 0 && !dec) {
          throw DegenerateSubdomainError{dec_error};
        }
        auto [x0, l0] = initial_point(model, init, seed);
        if (spec.measure) {
          try {
            auto snap0 = evaluate(model, x0, l0, cfg.hessian);
            meta["measured"] = detail::measure_constants(snap0, dec ? &*dec : nullptr, cfg.mu);
          } catch (const Error& e) {
            meta["measured"] = {{"scope", "failed"}, {"reason", e.what()}};
          }
        }
        const ReferenceSolution* ref = reference_for(seed);
        if (spec.reference != "none" && !ref) {
          meta["reference_error"] = reference_errors[seed];
        }
        auto res = run_fogd(model, dec ? &*dec : nullptr, cfg, x0, l0, ref,
                            [&](const IterateRecord& r) { run.trace.push_back(r); });
        run.status = res.converged ? "converged" : "max_iters";
        std::ostringstream point;
        point << "# spec_hash=" << hash << '\n';
        write_point(point, res.x, res.lambda);
        detail::write_atomic(fs::path{spec.out} / (stem + ".point"), point.str());
      } catch (const Error& e) {
        run.status = "failed";
        run.message = e.what();
      }
      if (!run.trace.empty()) {
        run.iterations = run.trace.back().iter;
        run.final_residual = run.trace.back().kkt_residual;
        run.final_merit = run.trace.back().merit;
      }
      if (spec.reference != "none") {
        try {
          run.rate = estimate_linear_rate(run.trace);
        } catch (const InsufficientDataError&) {
        }
      }
      meta["result"] = {{"status", run.status},
                        {"iterations", run.iterations},
                        {"final_residual", detail::finite_or_null(run.final_residual)},
                        {"rate", detail::finite_or_null(run.rate)},
                        {"message", run.message}};

      auto csv = fs::path{spec.out} / (stem + ".csv");
      write_trace_csv(csv.string() + ".tmp", run.trace, hash);
      fs::rename(csv.string() + ".tmp", csv);
      detail::write_atomic(fs::path{spec.out} / (stem + ".json"), meta.dump(2) + "\n");
      if (!run.converged()) {
        result.exit_code = kExitNotConverged;
      }
      result.runs.push_back(std::move(run));
    }
  }
  detail::write_atomic(fs::path{spec.out} / "summary.csv",
                       summary_csv(spec, result.runs, hash));
  return result;
}

/**
 * Dense diagnostics at the first initial point: regularity report,
 * error-vs-overlap curve, KKT-inverse decay of subproblem 0 per b, and the
 * descent margin of each OGD direction. Exit 2 when LICQ fails.
 */
inline int run_diagnostics(const ExperimentSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  std::string hash = spec_hash(spec);
  auto problem = build_problem(spec);
  const auto& model = problem.model;
  require_dense_size(model.primal_dim() + model.dual_dim());
  fs::create_directories(spec.out);
  FogdConfig cfg = spec.solver_config();
  auto [x0, l0] = initial_point(model, parse_init(spec.init), spec.seed.front());

  nlohmann::json summary;
  summary["spec"] = to_json(spec);
  summary["spec_hash"] = hash;
  auto snap = [&]() {
    try {
      return evaluate(model, x0, l0, cfg.hessian);
    } catch (const ModificationError& e) {
      summary["hessian_modification_error"] = e.what();
      return evaluate(model, x0, l0, HessianOptions{HessianMode::none});
    }
  }();
  auto report = regularity_report(snap);
  summary["regularity"] = detail::to_json(report);
  auto finish = [&](int code) {
    summary["exit_code"] = code;
    detail::write_atomic(fs::path{spec.out} / "diagnostics.json", summary.dump(2) + "\n");
    return code;
  };
  if (report.licq_violated) {
    return finish(kExitNotConverged);
  }

  bool all_pass = true;
  auto check = [&](const std::string& name, bool ok) {
    summary["checks"][name] = ok ? "PASS" : "FAIL";
    all_pass = all_pass && ok;
  };

  auto errors = error_vs_overlap(model, problem.parts, snap, cfg.mu, spec.b, cfg.workers);
  detail::write_atomic(fs::path{spec.out} / "error_vs_b.csv",
                       detail::curve_csv(errors, "b", "direction_error", hash));
  summary["error_vs_b"] = detail::fit_json(errors);
  if (errors.value.size() >= 2) {
    check("error_vs_b_slope_negative", errors.slope < 0.0);
  }

  Direction exact = exact_newton_direction(snap);
  std::ostringstream margins;
  margins << std::setprecision(17) << "b,dir_deriv,bound,slack\n";
  for (int b : spec.b) {
    std::optional<OverlapDecomposition> built;
    try {
      built = build_decomposition(model.graph(), problem.parts, b);
    } catch (const DegenerateSubdomainError&) {
      continue;
    }
    const auto& dec = *built;
    auto decay = kkt_inverse_decay(assemble_subproblem(snap, dec, 0, cfg.mu), model.graph());
    detail::write_atomic(
        fs::path{spec.out} / ("kkt_decay_b" + std::to_string(b) + ".csv"),
        detail::curve_csv(decay.curve, "distance", "max_block_norm", hash));
    auto& entry = summary["kkt_decay"][std::to_string(b)];
    entry = detail::fit_json(decay.curve, 1e-300);
    entry["closed_form_error"] = decay.closed_form_error;
    check("kkt_closed_form_b" + std::to_string(b), decay.closed_form_error <= 1e-8);

    auto m = descent_margin(snap, ogd_direction(snap, dec, cfg.mu, cfg.workers), exact,
                            cfg.eta1, cfg.eta2, report.gamma_g);
    margins << b << ',' << m.directional_derivative << ',' << m.bound << ',' << m.slack
            << '\n';
    summary["descent_margin"][std::to_string(b)] = {
        {"dir_deriv", m.directional_derivative}, {"bound", m.bound}, {"slack", m.slack}};
  }
  margins << "# spec_hash=" << hash << '\n';
  detail::write_atomic(fs::path{spec.out} / "descent_margins.csv", margins.str());
  summary["all_checks_pass"] = all_pass;
  return finish(kExitOk);
}

}  // namespace fogd

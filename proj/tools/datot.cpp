// datot: scenarios, feasibility, solving and export for departure-arrival transport.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dat/dat.hpp"

namespace fs = std::filesystem;
using namespace dat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitUnreachable = 4;

struct Overrides {
  std::optional<double> tol;
  std::optional<double> epsilon;
  std::optional<std::size_t> max_iter;
  std::optional<std::string> sweep;
  std::optional<bool> log_domain;
  std::string output;
};

void apply(const Overrides& o, SolverConfig& cfg) {
  if (o.tol) cfg.tol = *o.tol;
  if (o.epsilon) cfg.epsilon = *o.epsilon;
  if (o.max_iter) cfg.max_iter = *o.max_iter;
  if (o.sweep) cfg.sweep = *o.sweep == "jacobi" ? SweepOrder::Jacobi : SweepOrder::GaussSeidel;
  if (o.log_domain) cfg.domain = *o.log_domain ? DomainChoice::Log : DomainChoice::Linear;
}

int exit_code_for(const Error& e) {
  return e.code() == ErrorCode::UnreachableMass ? kExitUnreachable : kExitInvalid;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_scenario(const std::string& name, const std::string& emit) {
  const auto spec = make_scenario(name);
  if (emit.empty()) {
    std::cout << to_json(spec).dump(2) << '\n';
  } else {
    save_scenario(spec, emit);
    std::cout << "wrote " << emit << '\n';
  }
  return kExitOk;
}

int cmd_feasibility(const std::string& file, std::optional<double> delta) {
  auto spec = load_scenario(file);
  if (delta) spec.delta = delta;
  const auto problem = to_problem(spec);
  if (problem.mode == DAMode::Coupled) {
    std::cout << "coupled mode: departure/arrival law is prescribed jointly, no marginal test\n";
    return kExitOk;
  }
  bool all = true;
  const auto& net = problem.network;
  auto normalized = [&](const Measure& m) {
    std::vector<double> v(m.mass().begin(), m.mass().end());
    const double total = m.total();
    for (double& x : v) x /= total;
    return Measure(net.grid(), v);
  };
  for (std::size_t p = 0; p < problem.paths.size(); ++p) {
    const auto& path = problem.paths[p];
    const double d = path_delta(spec, path);
    const auto mu0 = normalized(*net.boundary_marginal(path.source()));
    const auto muT = normalized(*net.boundary_marginal(path.sink()));
    const auto v = check_da_feasibility(mu0, muT, d);
    all = all && v.feasible;
    std::printf("path %zu %s->%s delta=%s: %s margin=%s", p, path.source().c_str(), path.sink().c_str(),
                io::format_number(d).c_str(), v.feasible ? "feasible" : "infeasible",
                io::format_number(v.margin).c_str());
    if (v.violation_time) std::printf(" violation_at=%s", io::format_number(*v.violation_time).c_str());
    std::printf("\n");
  }
  return all ? kExitOk : kExitInvalid;
}

int cmd_solve(const std::string& file, const Overrides& o) {
  auto spec = load_scenario(file);
  apply(o, spec.solver);
  const auto problem = to_problem(spec);
  const auto result = solve(problem, spec.solver);
  const fs::path out = o.output.empty() ? fs::path(".") : fs::path(o.output);
  fs::create_directories(out);

  const auto& grid = problem.network.grid();
  json manifest = json::array();
  json roles = json::object();
  for (const auto& m : result.marginals) {
    std::ostringstream csv;
    io::write_node_marginal(csv, grid, m);
    const auto name = m.node + ".csv";
    io::write_file((out / name).string(), csv.str());
    manifest.push_back(name);
    roles[m.node] = to_string(m.role);
  }
  std::ostringstream trace;
  io::write_trace(trace, result.report);
  io::write_file((out / "trace.csv").string(), trace.str());
  manifest.push_back("trace.csv");
  manifest.push_back("summary.json");

  const auto& f = result.report.final_state;
  json summary;
  summary["scenario"] = spec.name;
  summary["config"] = to_json(spec.solver);
  summary["final"] = {{"E0", f.e0}, {"ET", f.eT}, {"V", f.v}};
  summary["iterations"] = result.report.iterations;
  summary["wall_seconds"] = result.report.wall_seconds;
  summary["converged"] = result.report.converged;
  summary["domain"] = result.report.domain;
  summary["nodes"] = roles;
  summary["files"] = manifest;
  io::write_file((out / "summary.json").string(), summary.dump(2) + "\n");

  std::printf("%s: %s after %zu iterations (E0=%s ET=%s V=%s)\n", spec.name.c_str(),
              result.report.converged ? "converged" : "NOT_CONVERGED", result.report.iterations,
              io::format_number(f.e0).c_str(), io::format_number(f.eT).c_str(), io::format_number(f.v).c_str());
  return result.report.converged ? kExitOk : kExitNotConverged;
}

int cmd_extract_plan(const std::string& file, const Overrides& o, std::size_t path_index, std::size_t top_k,
                     double floor) {
  auto spec = load_scenario(file);
  apply(o, spec.solver);
  const auto problem = to_problem(spec);
  if (path_index >= problem.paths.size()) throw Error(ErrorCode::InvalidScenario, "path index out of range");
  ExtractOptions opt;
  opt.top_k = top_k;
  opt.mass_floor = floor;
  auto run = [&](auto& engine) {
    const auto report = engine.run(spec.solver);
    const auto cells = engine.extract_plan(path_index, opt);
    std::ostringstream csv;
    io::write_plan(csv, problem.network.grid(), problem.paths[path_index].size(), cells);
    if (o.output.empty()) {
      std::cout << csv.str();
    } else {
      io::write_file(o.output, csv.str());
    }
    return report.converged ? kExitOk : kExitNotConverged;
  };
  if (uses_log_domain(problem, spec.solver)) {
    PathSinkhorn<LogDomain> engine(problem, spec.solver.epsilon);
    return run(engine);
  }
  PathSinkhorn<LinearDomain> engine(problem, spec.solver.epsilon);
  return run(engine);
}

int cmd_plotdata(const std::string& dir, const std::string& output) {
  const fs::path run(dir);
  const auto summary_path = run / "summary.json";
  if (!fs::exists(summary_path)) throw Error(ErrorCode::InvalidScenario, "no summary.json in '" + dir + "'");
  json summary;
  try {
    summary = json::parse(read_text(summary_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidScenario, std::string("malformed summary.json: ") + e.what());
  }
  if (!summary.contains("nodes") || !summary["nodes"].is_object()) {
    throw Error(ErrorCode::InvalidScenario, "summary.json lacks a node table");
  }
  std::ostringstream csv;
  io::write_row(csv, {"node", "bin_center", "mass", "cap", "role"});
  for (const auto& [node, role] : summary["nodes"].items()) {
    const auto rows = io::read_csv((run / (node + ".csv")).string());
    if (rows.empty() || rows.front() != std::vector<std::string>{"bin_center", "mass", "cap"}) {
      throw Error(ErrorCode::InvalidScenario, "unexpected header in " + node + ".csv");
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != 3) throw Error(ErrorCode::InvalidScenario, "short row in " + node + ".csv");
      io::write_row(csv, {node, rows[r][0], rows[r][1], rows[r][2], role.get<std::string>()});
    }
  }
  if (output.empty()) {
    std::cout << csv.str();
  } else {
    io::write_file(output, csv.str());
  }
  return kExitOk;
}

// Dense reference solve of a single-path scenario (small grids only).
int cmd_oracle(const std::string& file, const Overrides& o, std::size_t sweeps) {
  auto spec = load_scenario(file);
  apply(o, spec.solver);
  const auto problem = to_problem(spec);
  if (problem.paths.size() != 1 || problem.mode != DAMode::Independent) {
    throw Error(ErrorCode::InvalidScenario, "oracle handles one independent-mode path");
  }
  const auto& net = problem.network;
  const auto& path = problem.paths.front();
  const auto w = path_cost_terms(net, path);
  const auto& grid = net.grid();
  const auto cost = oracle::chain_cost_tensor(grid.size(), grid.dt(), w);
  std::vector<oracle::Constraint> cons;
  auto mass_of = [](const Measure& m) { return std::vector<double>(m.mass().begin(), m.mass().end()); };
  cons.push_back(oracle::Constraint::equality(0, mass_of(*net.boundary_marginal(path.source()))));
  for (std::size_t l = 1; l + 1 < path.size(); ++l) {
    const auto& cap = net.capacity(path.nodes[l]);
    if (!cap.is_unconstrained()) cons.push_back(oracle::Constraint::upper_bound(l, cap.per_bin()));
  }
  cons.push_back(oracle::Constraint::equality(path.size() - 1, mass_of(*net.boundary_marginal(path.sink()))));
  const auto res = oracle::dense_sinkhorn(cost, cons, spec.solver.epsilon, sweeps);
  std::ostringstream csv;
  io::write_row(csv, {"node", "bin_center", "mass"});
  for (std::size_t l = 0; l < path.size(); ++l) {
    const auto m = oracle::marginal(res.plan, l);
    for (std::size_t k = 0; k < m.size(); ++k) {
      io::write_row(csv, {path.nodes[l], io::format_number(grid.center(k)), io::format_number(m[k])});
    }
  }
  if (o.output.empty()) {
    std::cout << csv.str();
  } else {
    io::write_file(o.output, csv.str());
  }
  return kExitOk;
}

int cmd_inspect_kernel(double t_f, std::size_t n_t, double weight, double epsilon, const std::string& output) {
  const auto k = build_pair_kernel(TimeGrid(t_f, n_t), weight, epsilon);
  std::ostringstream csv;
  io::write_kernel(csv, k);
  if (output.empty()) {
    std::cout << csv.str();
  } else {
    io::write_file(output, csv.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Departure-arrival optimal transport on networks"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--tol", o.tol, "Stopping tolerance on E0+ET+V");
  app.add_option("--epsilon", o.epsilon, "Entropic regularization")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", o.max_iter, "Maximum number of sweeps");
  app.add_option("--sweep", o.sweep, "gauss-seidel or jacobi")->check(CLI::IsMember({"gauss-seidel", "jacobi"}));
  app.add_option("--log-domain", o.log_domain, "Force log-domain (true) or linear (false) messages");
  app.add_option("--output", o.output, "Output file or directory");

  auto* scenario = app.add_subcommand("scenario", "Generate a built-in scenario file");
  std::string scenario_name;
  std::string emit;
  scenario->add_option("name", scenario_name, "scenario_61, scenario_62_line, scenario_63_network, scenario_64_convergence")
      ->required();
  scenario->add_option("--emit", emit, "Write the scenario JSON here (stdout otherwise)");

  auto* feasibility = app.add_subcommand("feasibility", "Check the departure/arrival shift-dominance condition");
  std::string scenario_file;
  std::optional<double> delta;
  feasibility->add_option("scenario", scenario_file)->required();
  feasibility->add_option("--delta", delta, "Minimum travel time (defaults to the grid bound per path)");

  auto* solve_cmd = app.add_subcommand("solve", "Run path-wise Sinkhorn and write marginals, trace and summary");
  solve_cmd->add_option("scenario", scenario_file)->required();

  auto* extract = app.add_subcommand("extract-plan", "Solve and write the sparse plan of one path");
  std::size_t path_index = 0;
  std::size_t top_k = 0;
  double floor = 0.0;
  extract->add_option("scenario", scenario_file)->required();
  extract->add_option("--path", path_index, "Path index");
  extract->add_option("--top-k", top_k, "Keep only the k heaviest cells");
  extract->add_option("--mass-floor", floor, "Drop cells below this mass");

  auto* plotdata = app.add_subcommand("plotdata", "Join a solve run's marginals into one long-format CSV");
  std::string run_dir;
  plotdata->add_option("run_dir", run_dir)->required();

  auto* oracle_cmd = app.add_subcommand("oracle", "Dense reference solve (small single-path scenarios)");
  std::size_t sweeps = 200;
  oracle_cmd->add_option("scenario", scenario_file)->required();
  oracle_cmd->add_option("--sweeps", sweeps);
  oracle_cmd->group("");

  auto* kernel = app.add_subcommand("inspect-kernel", "Dump a pair kernel as CSV");
  double t_f = 1.0;
  std::size_t n_t = 10;
  double weight = 1.0;
  double kernel_eps = 0.05;
  kernel->add_option("--t-f", t_f);
  kernel->add_option("--n-t", n_t);
  kernel->add_option("--weight", weight);
  kernel->add_option("--eps", kernel_eps);
  kernel->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*scenario) return cmd_scenario(scenario_name, emit.empty() ? o.output : emit);
    if (*feasibility) return cmd_feasibility(scenario_file, delta);
    if (*solve_cmd) return cmd_solve(scenario_file, o);
    if (*extract) return cmd_extract_plan(scenario_file, o, path_index, top_k, floor);
    if (*plotdata) return cmd_plotdata(run_dir, o.output);
    if (*oracle_cmd) return cmd_oracle(scenario_file, o, sweeps);
    if (*kernel) return cmd_inspect_kernel(t_f, n_t, weight, kernel_eps, o.output);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}

#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dat/analysis.hpp"
#include "dat/error.hpp"
#include "dat/grid.hpp"
#include "dat/network.hpp"
#include "dat/sinkhorn.hpp"

namespace dat {

using json = nlohmann::json;

/// Boundary time marginal as given in a scenario: explicit per-bin masses or
/// a Gaussian mixture evaluated on the grid.
struct MarginalSpec {
  std::variant<std::vector<double>, std::vector<MixtureComponent>> value;

  Measure realize(const TimeGrid& grid) const {
    if (const auto* mass = std::get_if<std::vector<double>>(&value)) return {grid, *mass};
    return gaussian_mixture(grid, std::get<std::vector<MixtureComponent>>(value));
  }
};

/// Rate bound at a node: constant density, per-bin densities, or none.
struct CapacitySpec {
  std::variant<double, std::vector<double>> density;

  CapacityProfile realize(const TimeGrid& grid) const {
    if (const auto* d = std::get_if<double>(&density)) {
      if (std::isinf(*d)) return CapacityProfile::unconstrained(grid);
      return CapacityProfile::from_density(grid, *d);
    }
    return CapacityProfile::from_density(grid, std::get<std::vector<double>>(density));
  }
};

struct BoundarySpec {
  NodeId node;
  MarginalSpec marginal;
};

struct JointSpec {
  NodeId source;
  NodeId sink;
  std::vector<std::vector<double>> matrix;
};

/// Machine-checkable property attached to a scenario.
struct Expectation {
  std::string kind;  // capacity_satisfied | boundary_preserved | total_mass | monotone_strand | linear_convergence
  double tol = 0.0;
  std::size_t top_k = 0;
  std::size_t from_iter = 0;
  double r2_min = 0.0;
};

struct ScenarioSpec {
  std::string name;
  double t_f = 1.0;
  std::size_t n_t = 100;
  std::vector<NodeId> nodes;
  std::vector<Edge> edges;
  std::vector<BoundarySpec> sources;
  std::vector<BoundarySpec> sinks;
  std::map<NodeId, CapacitySpec> capacities;
  std::vector<Path> paths;
  DAMode mode = DAMode::Independent;
  std::vector<JointSpec> joint_marginals;
  std::optional<double> delta;  // physical minimum travel time, if larger than the grid bound
  SolverConfig solver;
  std::vector<Expectation> expected;

  TimeGrid grid() const { return {t_f, n_t}; }
};

// ---- JSON -------------------------------------------------------------------

namespace detail {

inline json number_or_inf(double x) {
  if (std::isinf(x)) return "inf";
  return x;
}

inline double read_number_or_inf(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw Error(ErrorCode::InvalidScenario, "expected a number or \"inf\"");
  }
  return j.get<double>();
}

inline const char* sweep_name(SweepOrder s) { return s == SweepOrder::Jacobi ? "jacobi" : "gauss-seidel"; }

}  // namespace detail

inline json to_json(const SolverConfig& cfg) {
  json j;
  j["epsilon"] = cfg.epsilon;
  j["max_iter"] = cfg.max_iter;
  j["tol"] = cfg.tol;
  j["sweep"] = detail::sweep_name(cfg.sweep);
  switch (cfg.domain) {
    case DomainChoice::Auto: j["log_domain"] = "auto"; break;
    case DomainChoice::Linear: j["log_domain"] = false; break;
    case DomainChoice::Log: j["log_domain"] = true; break;
  }
  if (cfg.anneal) {
    j["anneal"] = {{"factor", cfg.anneal->factor},
                   {"every", cfg.anneal->every},
                   {"epsilon_min", cfg.anneal->epsilon_min}};
  }
  return j;
}

inline SolverConfig solver_config_from_json(const json& j) {
  SolverConfig cfg;
  if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
  if (j.contains("max_iter")) cfg.max_iter = j.at("max_iter").get<std::size_t>();
  if (j.contains("tol")) cfg.tol = j.at("tol").get<double>();
  if (j.contains("sweep")) {
    const auto s = j.at("sweep").get<std::string>();
    if (s == "gauss-seidel") {
      cfg.sweep = SweepOrder::GaussSeidel;
    } else if (s == "jacobi") {
      cfg.sweep = SweepOrder::Jacobi;
    } else {
      throw Error(ErrorCode::InvalidScenario, "sweep must be gauss-seidel or jacobi");
    }
  }
  if (j.contains("log_domain")) {
    const auto& l = j.at("log_domain");
    if (l.is_boolean()) {
      cfg.domain = l.get<bool>() ? DomainChoice::Log : DomainChoice::Linear;
    } else if (l.is_string() && l.get<std::string>() == "auto") {
      cfg.domain = DomainChoice::Auto;
    } else {
      throw Error(ErrorCode::InvalidScenario, "log_domain must be true, false or \"auto\"");
    }
  }
  if (j.contains("anneal") && !j.at("anneal").is_null()) {
    const auto& a = j.at("anneal");
    AnnealSchedule s;
    s.factor = a.value("factor", s.factor);
    s.every = a.value("every", s.every);
    s.epsilon_min = a.value("epsilon_min", s.epsilon_min);
    cfg.anneal = s;
  }
  if (!(cfg.epsilon > 0.0)) throw Error(ErrorCode::InvalidScenario, "solver.epsilon must be positive");
  if (!(cfg.tol >= 0.0)) throw Error(ErrorCode::InvalidScenario, "solver.tol must be nonnegative");
  return cfg;
}

inline json to_json(const ScenarioSpec& s) {
  json j;
  j["name"] = s.name;
  j["grid"] = {{"t_f", s.t_f}, {"n_t", s.n_t}};
  j["nodes"] = s.nodes;
  j["edges"] = json::array();
  for (const auto& e : s.edges) j["edges"].push_back(json::array({e.tail, e.head, e.weight}));
  auto boundary = [](const std::vector<BoundarySpec>& side) {
    json arr = json::array();
    for (const auto& b : side) {
      json item{{"node", b.node}};
      if (const auto* mass = std::get_if<std::vector<double>>(&b.marginal.value)) {
        item["marginal"] = *mass;
      } else {
        json mix = json::array();
        for (const auto& c : std::get<std::vector<MixtureComponent>>(b.marginal.value)) {
          mix.push_back(json::array({c.weight, c.mean, c.stddev}));
        }
        item["mixture"] = mix;
      }
      arr.push_back(item);
    }
    return arr;
  };
  j["sources"] = boundary(s.sources);
  j["sinks"] = boundary(s.sinks);
  j["capacities"] = json::object();
  for (const auto& [node, cap] : s.capacities) {
    if (const auto* d = std::get_if<double>(&cap.density)) {
      j["capacities"][node] = detail::number_or_inf(*d);
    } else {
      json arr = json::array();
      for (double d : std::get<std::vector<double>>(cap.density)) arr.push_back(detail::number_or_inf(d));
      j["capacities"][node] = arr;
    }
  }
  j["paths"] = json::array();
  for (const auto& p : s.paths) j["paths"].push_back(p.nodes);
  j["mode"] = s.mode == DAMode::Coupled ? "coupled" : "independent";
  if (!s.joint_marginals.empty()) {
    j["joint_marginals"] = json::array();
    for (const auto& jm : s.joint_marginals) {
      j["joint_marginals"].push_back({{"source", jm.source}, {"sink", jm.sink}, {"matrix", jm.matrix}});
    }
  }
  if (s.delta) j["delta"] = *s.delta;
  j["solver"] = to_json(s.solver);
  j["expected"] = json::array();
  for (const auto& e : s.expected) {
    json item{{"kind", e.kind}};
    if (e.tol != 0.0) item["tol"] = e.tol;
    if (e.top_k != 0) item["top_k"] = e.top_k;
    if (e.from_iter != 0) item["from_iter"] = e.from_iter;
    if (e.r2_min != 0.0) item["r2_min"] = e.r2_min;
    j["expected"].push_back(item);
  }
  return j;
}

inline ScenarioSpec scenario_from_json(const json& j) {
  try {
    ScenarioSpec s;
    s.name = j.value("name", std::string("scenario"));
    s.t_f = j.at("grid").at("t_f").get<double>();
    s.n_t = j.at("grid").at("n_t").get<std::size_t>();
    s.nodes = j.at("nodes").get<std::vector<NodeId>>();
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 3) throw Error(ErrorCode::InvalidScenario, "edges are [tail, head, weight]");
      s.edges.push_back({e[0].get<NodeId>(), e[1].get<NodeId>(), e[2].get<double>()});
    }
    auto boundary = [](const json& arr) {
      std::vector<BoundarySpec> out;
      for (const auto& b : arr) {
        BoundarySpec spec{b.at("node").get<NodeId>(), {}};
        if (b.contains("marginal")) {
          spec.marginal.value = b.at("marginal").get<std::vector<double>>();
        } else if (b.contains("mixture")) {
          std::vector<MixtureComponent> mix;
          for (const auto& c : b.at("mixture")) mix.push_back({c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()});
          spec.marginal.value = std::move(mix);
        } else {
          throw Error(ErrorCode::InvalidScenario, "boundary node needs 'marginal' or 'mixture'");
        }
        out.push_back(std::move(spec));
      }
      return out;
    };
    s.sources = boundary(j.at("sources"));
    s.sinks = boundary(j.at("sinks"));
    if (j.contains("capacities")) {
      for (const auto& [node, cap] : j.at("capacities").items()) {
        if (cap.is_array()) {
          std::vector<double> d;
          for (const auto& x : cap) d.push_back(detail::read_number_or_inf(x));
          s.capacities[node] = CapacitySpec{d};
        } else {
          s.capacities[node] = CapacitySpec{detail::read_number_or_inf(cap)};
        }
      }
    }
    for (const auto& p : j.at("paths")) s.paths.push_back(Path{p.get<std::vector<NodeId>>()});
    const auto mode = j.value("mode", std::string("independent"));
    if (mode == "coupled") {
      s.mode = DAMode::Coupled;
    } else if (mode != "independent") {
      throw Error(ErrorCode::InvalidScenario, "mode must be independent or coupled");
    }
    if (j.contains("joint_marginals")) {
      for (const auto& jm : j.at("joint_marginals")) {
        s.joint_marginals.push_back({jm.at("source").get<NodeId>(), jm.at("sink").get<NodeId>(),
                                     jm.at("matrix").get<std::vector<std::vector<double>>>()});
      }
    }
    if (j.contains("delta") && !j.at("delta").is_null()) s.delta = j.at("delta").get<double>();
    if (j.contains("solver")) s.solver = solver_config_from_json(j.at("solver"));
    if (j.contains("expected")) {
      for (const auto& e : j.at("expected")) {
        Expectation x;
        x.kind = e.at("kind").get<std::string>();
        x.tol = e.value("tol", 0.0);
        x.top_k = e.value("top_k", std::size_t{0});
        x.from_iter = e.value("from_iter", std::size_t{0});
        x.r2_min = e.value("r2_min", 0.0);
        s.expected.push_back(x);
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidScenario, e.what());
  }
}

inline ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidScenario, "cannot read scenario file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidScenario, std::string("malformed JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

inline void save_scenario(const ScenarioSpec& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidScenario, "cannot write '" + path + "'");
  out << to_json(s).dump(2) << '\n';
}

// ---- realization --------------------------------------------------------------

/// Builds the network (validating balance) and solver problem.
inline DAProblem to_problem(const ScenarioSpec& s) {
  const TimeGrid grid = s.grid();
  std::vector<BoundaryMarginal> sources;
  std::vector<BoundaryMarginal> sinks;
  std::vector<JointTarget> joints;
  for (const auto& jm : s.joint_marginals) {
    if (jm.matrix.size() != grid.size()) throw Error(ErrorCode::GridMismatch, "joint marginal row count");
    Matrix m(grid.size(), grid.size());
    for (std::size_t r = 0; r < grid.size(); ++r) {
      if (jm.matrix[r].size() != grid.size()) throw Error(ErrorCode::GridMismatch, "joint marginal column count");
      for (std::size_t c = 0; c < grid.size(); ++c) m(r, c) = jm.matrix[r][c];
    }
    joints.push_back({jm.source, jm.sink, JointMeasure(grid, std::move(m))});
  }
  if (s.mode == DAMode::Coupled) {
    // boundary laws follow from the joint targets
    std::map<NodeId, std::vector<double>> dep;
    std::map<NodeId, std::vector<double>> arr;
    for (const auto& jt : joints) {
      const auto f = jt.target.first_marginal();
      const auto g = jt.target.second_marginal();
      auto& d = dep.try_emplace(jt.source, grid.size(), 0.0).first->second;
      auto& a = arr.try_emplace(jt.sink, grid.size(), 0.0).first->second;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        d[k] += f[k];
        a[k] += g[k];
      }
    }
    for (const auto& b : s.sources) {
      if (!dep.contains(b.node)) dep[b.node] = std::vector<double>(grid.size(), 0.0);
    }
    for (const auto& b : s.sinks) {
      if (!arr.contains(b.node)) arr[b.node] = std::vector<double>(grid.size(), 0.0);
    }
    for (auto& [n, m] : dep) sources.push_back({n, Measure(grid, m)});
    for (auto& [n, m] : arr) sinks.push_back({n, Measure(grid, m)});
  } else {
    for (const auto& b : s.sources) sources.push_back({b.node, b.marginal.realize(grid)});
    for (const auto& b : s.sinks) sinks.push_back({b.node, b.marginal.realize(grid)});
  }
  std::map<NodeId, CapacityProfile> caps;
  for (const auto& [node, c] : s.capacities) caps.emplace(node, c.realize(grid));
  TransportNetwork net(grid, s.nodes, s.edges, std::move(sources), std::move(sinks), std::move(caps));
  DAProblem problem{std::move(net), s.paths, s.mode, std::move(joints)};
  require_valid_paths(problem.network, problem.paths);
  return problem;
}

/// Minimum travel time used for the departure/arrival feasibility test of a
/// path: the grid-enforced m * dt for m edges, or the scenario's delta if larger.
inline double path_delta(const ScenarioSpec& s, const Path& p) {
  const double grid_bound = static_cast<double>(p.edge_count()) * s.grid().dt();
  return s.delta ? std::max(*s.delta, grid_bound) : grid_bound;
}

// ---- generators ---------------------------------------------------------------

namespace detail {

inline std::vector<MixtureComponent> default_departures(double t_f) {
  return {{0.5, 0.15 * t_f, 0.05 * t_f}, {0.5, 0.25 * t_f, 0.05 * t_f}};
}

inline std::vector<MixtureComponent> default_arrivals(double t_f) {
  return {{0.5, 0.75 * t_f, 0.05 * t_f}, {0.5, 0.85 * t_f, 0.05 * t_f}};
}

// Mixture masses restricted to bins [lo, hi) and renormalized. A path with m
// edges cannot leave its source in the last m bins nor reach its sink in the
// first m, so the far Gaussian tails there are cut instead of left unreachable.
inline MarginalSpec realized(const TimeGrid& grid, const std::vector<MixtureComponent>& mix, std::size_t lo,
                             std::size_t hi) {
  const auto m = gaussian_mixture(grid, mix);
  std::vector<double> mass(grid.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = lo; k < hi; ++k) total += m[k];
  for (std::size_t k = lo; k < hi; ++k) mass[k] = m[k] / total;
  return {mass};
}

inline void set_boundaries(ScenarioSpec& s, std::size_t edges) {
  const auto grid = s.grid();
  s.sources = {{"v0", realized(grid, default_departures(s.t_f), 0, grid.size() - edges)}};
  s.sinks = {{"vT", realized(grid, default_arrivals(s.t_f), edges, grid.size())}};
}

}  // namespace detail

/// Single interior node, independent DA, per-bin cap 2/100.
inline ScenarioSpec scenario_61() {
  ScenarioSpec s;
  s.name = "scenario_61";
  s.t_f = 1.0;
  s.n_t = 100;
  s.nodes = {"v0", "v1", "vT"};
  s.edges = {{"v0", "v1", 1.0}, {"v1", "vT", 1.0}};
  detail::set_boundaries(s, 2);
  s.capacities["v1"] = CapacitySpec{2.0};
  s.paths = {Path{{"v0", "v1", "vT"}}};
  s.solver.epsilon = 0.02;
  s.solver.tol = 1e-9;
  s.solver.max_iter = 20000;
  s.expected = {{"capacity_satisfied", 1e-8},
                {"boundary_preserved", 1e-6},
                {"total_mass", 1e-8},
                {"monotone_strand", 0.0, 20}};
  return s;
}

/// Seven-node line with five capacitated interior crossings and time-varying caps.
inline ScenarioSpec scenario_62_line() {
  ScenarioSpec s;
  s.name = "scenario_62_line";
  s.t_f = 1.0;
  s.n_t = 100;
  const auto grid = s.grid();
  s.nodes = {"v0", "v1", "v2", "v3", "v4", "v5", "vT"};
  for (std::size_t i = 0; i + 1 < s.nodes.size(); ++i) s.edges.push_back({s.nodes[i], s.nodes[i + 1], 1.0});
  detail::set_boundaries(s, 6);
  const double pi = std::acos(-1.0);
  for (std::size_t k = 1; k <= 5; ++k) {
    std::vector<double> density(grid.size());
    for (std::size_t b = 0; b < grid.size(); ++b) {
      const double phase = 2.0 * pi * grid.center(b) / s.t_f + static_cast<double>(k) * pi / 5.0;
      density[b] = 2.5 * (1.0 + 0.3 * std::sin(phase));
    }
    s.capacities[s.nodes[k]] = CapacitySpec{density};
  }
  s.paths = {Path{s.nodes}};
  s.solver.epsilon = 0.2;
  s.solver.tol = 1e-7;
  s.solver.max_iter = 20000;
  s.expected = {{"capacity_satisfied", 1e-7}, {"boundary_preserved", 1e-6}, {"total_mass", 1e-8}};
  return s;
}

namespace detail {

inline void three_path_grid(ScenarioSpec& s) {
  s.t_f = 1.0;
  s.n_t = 100;
  s.nodes = {"v0", "v1", "v2", "v3", "v4", "v5", "v6", "vT"};
  s.edges = {{"v0", "v1", 1.0}, {"v0", "v2", 1.0}, {"v1", "v3", 1.0}, {"v2", "v3", 1.0}, {"v3", "v4", 1.0},
             {"v4", "v5", 1.0}, {"v4", "v6", 1.0}, {"v5", "vT", 1.0}, {"v6", "vT", 1.0}};
  set_boundaries(s, 5);
  for (const auto& n : {"v1", "v2", "v3", "v4", "v5", "v6"}) s.capacities[n] = CapacitySpec{1.4};
  s.paths = {Path{{"v0", "v2", "v3", "v4", "v6", "vT"}},
             Path{{"v0", "v1", "v3", "v4", "v5", "vT"}},
             Path{{"v0", "v2", "v3", "v4", "v5", "vT"}}};
}

}  // namespace detail

/// Three admissible paths merging at v3 and v4; every interior node capped at density 1.4.
inline ScenarioSpec scenario_63_network() {
  ScenarioSpec s;
  s.name = "scenario_63_network";
  detail::three_path_grid(s);
  s.solver.epsilon = 3.0;
  s.solver.tol = 1e-9;
  s.solver.max_iter = 20000;
  s.expected = {{"capacity_satisfied", 1e-8}, {"boundary_preserved", 1e-6}, {"total_mass", 1e-8}};
  return s;
}

/// Same topology as scenario_63_network, forced to run 1500 sweeps for the trace.
inline ScenarioSpec scenario_64_convergence() {
  ScenarioSpec s;
  s.name = "scenario_64_convergence";
  detail::three_path_grid(s);
  s.solver.epsilon = 3.0;
  s.solver.tol = 0.0;
  s.solver.max_iter = 1500;
  Expectation lin{"linear_convergence"};
  lin.from_iter = 200;
  lin.r2_min = 0.95;
  s.expected = {lin};
  return s;
}

inline std::vector<std::string> scenario_names() {
  return {"scenario_61", "scenario_62_line", "scenario_63_network", "scenario_64_convergence"};
}

inline ScenarioSpec make_scenario(const std::string& name) {
  auto matches = [&](const std::string& full, const std::string& shortname) {
    return name == full || name == shortname || name == full.substr(std::string("scenario_").size());
  };
  if (matches("scenario_61", "61")) return scenario_61();
  if (matches("scenario_62_line", "62")) return scenario_62_line();
  if (matches("scenario_63_network", "63")) return scenario_63_network();
  if (matches("scenario_64_convergence", "64")) return scenario_64_convergence();
  throw Error(ErrorCode::InvalidScenario, "unknown scenario '" + name + "'");
}

// ---- expectation checks -------------------------------------------------------

struct ExpectationResult {
  std::string kind;
  bool passed;
  std::string detail;
};

inline double max_capacity_excess(const SolveResult& r) {
  double worst = 0.0;
  for (const auto& m : r.marginals) {
    if (m.role != NodeRole::Interior) continue;
    for (std::size_t t = 0; t < m.mass.size(); ++t) worst = std::max(worst, m.mass[t] - m.cap[t]);
  }
  return worst;
}

inline double total_delivered(const SolveResult& r) {
  double total = 0.0;
  for (const auto& m : r.marginals)
    if (m.role == NodeRole::Sink)
      for (double x : m.mass) total += x;
  return total;
}

/// Linear fit of log10 of a trace column over iterations >= from_iter.
inline LinearFit trace_log_fit(const ConvergenceReport& report, std::size_t from_iter,
                               double Diagnostics::*column) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& row : report.trace) {
    if (row.iter < from_iter) continue;
    const double v = row.residual.*column;
    if (!(v > 0.0)) continue;
    x.push_back(static_cast<double>(row.iter));
    y.push_back(std::log10(v));
  }
  return fit_line(x, y);
}

/// Plan cells are needed only for monotone_strand checks (path 0, top_k cells).
inline std::vector<ExpectationResult> check_expectations(const ScenarioSpec& s, const SolveResult& r) {
  std::vector<ExpectationResult> out;
  for (const auto& e : s.expected) {
    std::ostringstream msg;
    bool ok = false;
    if (e.kind == "capacity_satisfied") {
      const double worst = max_capacity_excess(r);
      ok = worst <= e.tol;
      msg << "max excess " << worst;
    } else if (e.kind == "boundary_preserved") {
      ok = r.report.final_state.e0 <= e.tol && r.report.final_state.eT <= e.tol;
      msg << "E0 " << r.report.final_state.e0 << " ET " << r.report.final_state.eT;
    } else if (e.kind == "total_mass") {
      const double total = total_delivered(r);
      ok = std::abs(total - 1.0) <= e.tol;
      msg << "delivered " << total;
    } else if (e.kind == "monotone_strand") {
      if (r.plans.empty()) {
        msg << "no plan extracted";
      } else {
        std::vector<PlanCell> cells = r.plans.front();
        if (e.top_k > 0 && cells.size() > e.top_k) cells.resize(e.top_k);
        const auto c01 = count_crossings(cells, [](const PlanCell& c) { return c.bins.front(); },
                                         [](const PlanCell& c) { return c.bins[1]; });
        const auto c1T = count_crossings(cells, [](const PlanCell& c) { return c.bins[1]; },
                                         [](const PlanCell& c) { return c.bins.back(); });
        ok = c01 == 0 && c1T == 0;
        msg << "crossings (t0,t1) " << c01 << " (t1,tT) " << c1T << " over " << cells.size() << " cells";
      }
    } else if (e.kind == "linear_convergence") {
      const auto f0 = trace_log_fit(r.report, e.from_iter, &Diagnostics::e0);
      const auto fT = trace_log_fit(r.report, e.from_iter, &Diagnostics::eT);
      ok = f0.slope < 0.0 && fT.slope < 0.0 && f0.r2 >= e.r2_min && fT.r2 >= e.r2_min;
      msg << "E0 slope " << f0.slope << " r2 " << f0.r2 << "; ET slope " << fT.slope << " r2 " << fT.r2;
    } else {
      msg << "unknown expectation";
    }
    out.push_back({e.kind, ok, msg.str()});
  }
  return out;
}

}  // namespace dat

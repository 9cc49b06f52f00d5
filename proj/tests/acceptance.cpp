// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dat/dat.hpp"
#include "support/flow_oracles.hpp"
#include "support/instances.hpp"

using namespace dat;

namespace {

struct Outcome {
  bool passed;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class Engine>
std::vector<std::vector<double>> engine_marginals(Engine& engine) {
  std::vector<std::vector<double>> out;
  for (const auto& n : engine.node_ids()) out.push_back(engine.marginal(n));
  return out;
}

// 1. capacity satisfaction on the single-interior-node scenario
Outcome capacity_satisfaction() {
  const auto s = scenario_61();
  const auto problem = to_problem(s);
  const auto start = Clock::now();
  const auto r = solve(problem, s.solver);
  const double secs = seconds_since(start);
  const double excess = max_capacity_excess(r);
  const auto& f = r.report.final_state;
  std::ostringstream msg;
  msg << "max cap excess " << excess << ", E0 " << f.e0 << ", ET " << f.eT << ", " << r.report.iterations
      << " sweeps in " << secs << " s";
  return {r.report.converged && excess <= 1e-8 && f.e0 <= 1e-6 && f.eT <= 1e-6 && secs <= 10.0, msg.str()};
}

// 2. linear convergence of the boundary residuals over sweeps 200..1500
Outcome linear_convergence() {
  const auto s = scenario_64_convergence();
  const auto problem = to_problem(s);
  const auto r = solve(problem, s.solver);
  const auto f0 = trace_log_fit(r.report, 200, &Diagnostics::e0);
  const auto fT = trace_log_fit(r.report, 200, &Diagnostics::eT);
  bool nonneg = true;
  for (const auto& row : r.report.trace) nonneg = nonneg && row.residual.e0 >= 0.0 && row.residual.eT >= 0.0;
  std::ostringstream msg;
  msg << r.report.trace.size() << " sweeps; log10 E0 slope " << f0.slope << " R2 " << f0.r2 << "; log10 ET slope "
      << fT.slope << " R2 " << fT.r2;
  const bool ok = r.report.trace.size() == 1500 && nonneg && f0.slope < 0.0 && fT.slope < 0.0 && f0.r2 >= 0.95 &&
                  fT.r2 >= 0.95;
  return {ok, msg.str()};
}

// 3. message passing against the dense tensor oracle
Outcome oracle_equivalence() {
  std::mt19937_64 rng(20240601);
  const double eps_values[] = {0.05, 0.2, 1.0};
  const std::size_t sweeps = 25;
  double worst = 0.0;
  const auto start = Clock::now();
  for (int i = 0; i < 50; ++i) {
    const std::size_t len = 2 + i % 3;
    const std::size_t n_t = 6 + (i / 3) % 5;
    const double eps = eps_values[i % 3];
    const auto in = dat::testing::random_line_instance(rng, len, n_t, eps);
    const auto problem = dat::testing::make_line_problem(in);
    std::vector<std::vector<double>> fast;
    auto run = [&](auto& engine) {
      for (std::size_t k = 0; k < sweeps; ++k) engine.sweep(SweepOrder::GaussSeidel);
      fast = engine_marginals(engine);
    };
    if (auto_selects_log_domain(problem, eps)) {
      PathSinkhorn<LogDomain> engine(problem, eps);
      run(engine);
    } else {
      PathSinkhorn<LinearDomain> engine(problem, eps);
      run(engine);
    }
    const auto cost = oracle::chain_cost_tensor(n_t, 1.0 / double(n_t), in.weights);
    const auto dense = oracle::dense_sinkhorn(cost, dat::testing::oracle_constraints(in), eps, sweeps);
    for (std::size_t l = 0; l < len; ++l) {
      worst = std::max(worst, dat::testing::relative_error(fast[l], oracle::marginal(dense.plan, l)));
    }
  }
  const double secs = seconds_since(start);
  std::ostringstream msg;
  msg << "50 instances, max relative error " << worst << " in " << secs << " s";
  return {worst <= 1e-10 && secs <= 60.0, msg.str()};
}

// 4. shift-dominance test against an exhaustive bipartite flow check
Outcome feasibility_correctness() {
  std::mt19937_64 rng(777);
  std::uniform_int_distribution<int> weight(0, 5);
  std::uniform_int_distribution<int> offset(0, 4);
  const std::size_t n = 10;
  const TimeGrid grid(1.0, n);
  std::size_t agree = 0;
  std::size_t cases = 0;
  std::size_t feasible = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<int> a(n, 0);
    std::vector<int> b(n, 0);
    int ta = 0;
    while (ta == 0) {
      ta = 0;
      for (auto& x : a) ta += (x = weight(rng));
    }
    if (i % 2 == 0) {
      // shifted copy of the departures, clipped to the grid, lightly perturbed
      const int o = offset(rng);
      for (std::size_t k = 0; k < n; ++k) b[std::min<std::size_t>(n - 1, k + o)] += a[k];
      b[weight(rng) % n] += weight(rng) % 2;
    } else {
      for (auto& x : b) x = weight(rng);
    }
    int tb = 0;
    for (int x : b) tb += x;
    if (tb == 0) b[n - 1] = tb = 1;
    std::vector<double> mu0(n);
    std::vector<double> muT(n);
    for (std::size_t k = 0; k < n; ++k) {
      mu0[k] = double(a[k]) / ta;
      muT[k] = double(b[k]) / tb;
    }
    for (std::size_t shift : {0u, 1u, 3u}) {
      const auto v = check_da_feasibility(Measure(grid, mu0), Measure(grid, muT), double(shift) * grid.dt());
      const bool exact = dat::testing::coupling_exists(mu0, muT, shift);
      agree += v.feasible == exact;
      feasible += exact;
      ++cases;
    }
  }
  std::ostringstream msg;
  msg << agree << "/" << cases << " verdicts agree (" << feasible << " feasible)";
  return {agree == cases, msg.str()};
}

// 5. dominant cells of the single-node plan lie on one monotone strand
Outcome monotone_strand() {
  const auto s = scenario_61();
  const auto problem = to_problem(s);
  std::size_t top_k = 20;
  for (const auto& e : s.expected)
    if (e.kind == "monotone_strand") top_k = e.top_k;
  ExtractOptions opt;
  opt.top_k = top_k;
  const auto r = solve(problem, s.solver, opt);
  const auto& cells = r.plans.front();
  const auto c01 = count_crossings(cells, [](const PlanCell& c) { return c.bins[0]; },
                                   [](const PlanCell& c) { return c.bins[1]; });
  const auto c1T = count_crossings(cells, [](const PlanCell& c) { return c.bins[1]; },
                                   [](const PlanCell& c) { return c.bins[2]; });
  double mass = 0.0;
  for (const auto& c : cells) mass += c.mass;
  std::ostringstream msg;
  msg << "eps " << s.solver.epsilon << ", top " << cells.size() << " cells (mass " << mass << "): crossings (t0,t1) "
      << c01 << ", (t1,tT) " << c1T;
  return {s.solver.epsilon <= 0.02 && r.report.converged && cells.size() == top_k && c01 == 0 && c1T == 0,
          msg.str()};
}

// 6. coupled boundary update and full coupled solve against the dense oracle
Outcome coupled_exactness() {
  const std::size_t n = 8;
  const TimeGrid g(1.0, n);
  Matrix joint(n, n, 0.0);
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = s + 2; t < n; ++t)
      if (u(rng) < 0.6) total += (joint(s, t) = u(rng));
  for (double& x : joint.data()) x /= total;
  std::vector<double> mu0(n, 0.0);
  std::vector<double> muT(n, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t) {
      mu0[s] += joint(s, t);
      muT[t] += joint(s, t);
    }
  const std::vector<double> cap{0.3, 0.08, 0.1, 0.12, 0.1, 0.15, 0.3, 0.3};
  std::map<NodeId, CapacityProfile> caps;
  caps.emplace("v1", CapacityProfile(g, cap));
  TransportNetwork net(g, {"v0", "v1", "vT"}, {{"v0", "v1", 0.6}, {"v1", "vT", 0.9}}, {{"v0", Measure(g, mu0)}},
                       {{"vT", Measure(g, muT)}}, std::move(caps));
  const DAProblem problem{std::move(net), {Path{{"v0", "v1", "vT"}}}, DAMode::Coupled,
                          {{"v0", "vT", JointMeasure(g, joint)}}};
  const double eps = 0.3;
  const std::size_t sweeps = 300;

  PathSinkhorn<LogDomain> engine(problem, eps);
  engine.update_joint("v0", "vT");
  double after_update = 0.0;
  const auto model = engine.joint_marginal("v0", "vT");
  for (std::size_t k = 0; k < model.data().size(); ++k)
    after_update = std::max(after_update, std::abs(model.data()[k] - joint.data()[k]));
  engine.update_capacity("v1");
  for (std::size_t k = 1; k < sweeps; ++k) engine.sweep(SweepOrder::GaussSeidel);

  const auto cost = oracle::chain_cost_tensor(n, g.dt(), std::vector<double>{0.6, 0.9});
  const auto dense = oracle::dense_sinkhorn(
      cost, {oracle::Constraint::joint_pair(0, 2, joint), oracle::Constraint::upper_bound(1, cap)}, eps, sweeps);
  const auto dense_joint = oracle::pair_marginal(dense.plan, 0, 2);
  const auto fast_joint = engine.joint_marginal("v0", "vT");
  const double joint_err = dat::testing::relative_error(fast_joint.data(), dense_joint.data());
  const double mid_err = dat::testing::relative_error(engine.marginal("v1"), oracle::marginal(dense.plan, 1));
  std::ostringstream msg;
  msg << "after update max |m - mu| " << after_update << "; vs dense oracle: joint " << joint_err << ", interior "
      << mid_err;
  return {after_update <= 1e-10 && joint_err <= 1e-10 && mid_err <= 1e-10, msg.str()};
}

// 7. single sign of the reciprocal-gap cross-differences
Outcome monge_sign() {
  const auto q = sample_ordered_quadruples(1.0, 10000, 4242);
  const auto r = check_generalized_monge([](double t, double s) { return 1.0 / (s - t); }, q);
  std::ostringstream msg;
  msg << r.total() << " quadruples: " << r.negative << " negative, " << r.zero << " zero, " << r.positive
      << " positive (max " << r.max_difference << ")";
  return {r.total() == 10000 && r.single_sign(), msg.str()};
}

// 8. shared-node aggregation on the three-route network
Outcome shared_nodes() {
  const auto s = scenario_63_network();
  const auto problem = to_problem(s);
  const auto r = solve(problem, s.solver);
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& m : r.marginals) {
    if (m.node != "v3" && m.node != "v4") continue;
    for (std::size_t k = 0; k < m.mass.size(); ++k) worst = std::max(worst, m.mass[k] - m.cap[k]);
  }
  const double delivered = total_delivered(r);
  std::ostringstream msg;
  msg << "max excess at v3/v4 " << worst << ", delivered " << delivered << ", " << r.report.iterations << " sweeps";
  return {r.report.converged && worst <= 1e-8 && std::abs(delivered - 1.0) <= 1e-8, msg.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"capacity satisfaction", capacity_satisfaction},
      {"linear convergence", linear_convergence},
      {"oracle equivalence", oracle_equivalence},
      {"feasibility correctness", feasibility_correctness},
      {"monotone strand", monotone_strand},
      {"coupled exactness", coupled_exactness},
      {"generalized Monge sign", monge_sign},
      {"shared-node aggregation", shared_nodes},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.passed;
    std::printf("%s %zu %s: %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dat/error.hpp"
#include "dat/grid.hpp"
#include "dat/kernels.hpp"
#include "dat/matrix.hpp"
#include "dat/network.hpp"
#include "dat/semiring.hpp"

namespace dat {

enum class SweepOrder { GaussSeidel, Jacobi };
enum class DAMode { Independent, Coupled };
enum class DomainChoice { Auto, Linear, Log };

/// Geometric epsilon annealing; not part of the plain scaling scheme.
struct AnnealSchedule {
  double factor = 0.5;
  std::size_t every = 100;  // sweeps between reductions
  double epsilon_min = 1e-3;
};

struct SolverConfig {
  double epsilon = 0.05;
  std::size_t max_iter = 5000;
  double tol = 1e-6;
  SweepOrder sweep = SweepOrder::GaussSeidel;
  DomainChoice domain = DomainChoice::Auto;
  std::optional<AnnealSchedule> anneal;
};

/// Prescribed joint departure/arrival law for one (source, sink) pair.
struct JointTarget {
  NodeId source;
  NodeId sink;
  JointMeasure target;
};

struct DAProblem {
  TransportNetwork network;
  std::vector<Path> paths;
  DAMode mode = DAMode::Independent;
  std::vector<JointTarget> joint_targets;  // coupled mode only
};

struct Diagnostics {
  double e0 = 0.0;  // source marginal violation (joint violation in coupled mode)
  double eT = 0.0;  // sink marginal violation (unused in coupled mode)
  double v = 0.0;   // capacity excess

  double sum() const noexcept { return e0 + eT + v; }
};

struct TraceRow {
  std::size_t iter;
  // Violation of each block measured right before that block is projected.
  Diagnostics residual;
  double objective;  // dual objective at the end of the sweep
};

struct ConvergenceReport {
  std::vector<TraceRow> trace;
  Diagnostics final_state;  // violations of the returned state
  std::size_t iterations = 0;
  bool converged = false;
  bool annealed = false;
  double final_epsilon = 0.0;
  double wall_seconds = 0.0;
  std::string domain;
};

/// Snapshot of the scalings. log_scaling holds log u / log v / log w per node
/// (= alpha/eps, beta/eps, gamma/eps); coupled mode keeps log Lambda per pair.
struct SinkhornState {
  double epsilon = 0.0;
  std::size_t iteration = 0;
  std::map<NodeId, std::vector<double>> log_scaling;
  std::map<std::pair<NodeId, NodeId>, Matrix> log_lambda;

  std::vector<double> scaling(const NodeId& node) const {
    const auto& l = log_scaling.at(node);
    std::vector<double> out(l.size());
    std::transform(l.begin(), l.end(), out.begin(), [](double x) { return std::exp(x); });
    return out;
  }
};

struct PlanCell {
  std::vector<std::size_t> bins;  // one grid index per path node
  double mass;
};

struct ExtractOptions {
  std::size_t max_cells = 2'000'000;  // bound on enumerated ordered tuples
  std::size_t top_k = 0;              // 0 keeps every cell above the floor
  double mass_floor = 0.0;
};

/// Number of strictly increasing index tuples of length k on n bins.
inline double ordered_tuple_count(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return std::round(c);
}

/// Smallest cost any tuple on a path can achieve over the horizon:
/// min sum w_l / g_l subject to sum g_l = t_f is (sum sqrt w_l)^2 / t_f.
inline double min_chain_cost(std::span<const double> weights, double horizon) {
  double root_sum = 0.0;
  for (double w : weights) root_sum += std::sqrt(w);
  return root_sum * root_sum / horizon;
}

/// Path-wise Sinkhorn scaling with nodal multipliers shared across paths.
/// Each path keeps forward/backward chain messages that are refreshed lazily:
/// changing the scaling of the node at position l only invalidates forward
/// messages past l and backward messages before l.
template <class D>
class PathSinkhorn {
 public:
  PathSinkhorn(const DAProblem& problem, double epsilon)
      : problem_(&problem), grid_(problem.network.grid()), epsilon_(epsilon) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::BadParam, "epsilon must be positive");
    const auto& net = problem.network;
    auto incidence = require_valid_paths(net, problem.paths);
    (void)incidence;

    // Node order: first appearance along the paths.
    for (const auto& path : problem.paths) {
      for (const auto& n : path.nodes) {
        if (!node_index_.contains(n)) {
          node_index_.emplace(n, node_ids_.size());
          node_ids_.push_back(n);
        }
      }
    }
    const std::size_t n_t = grid_.size();
    log_scaling_.assign(node_ids_.size(), std::vector<double>(n_t, 0.0));
    caps_.reserve(node_ids_.size());
    for (const auto& n : node_ids_) caps_.push_back(net.capacity(n));

    for (const auto& s : net.sources())
      if (node_index_.contains(s.node)) sources_.push_back(node_index_.at(s.node));
    for (const auto& s : net.sinks())
      if (node_index_.contains(s.node)) sinks_.push_back(node_index_.at(s.node));
    // Boundary marginals must be reachable through some path.
    for (const auto& s : net.sources())
      if (!node_index_.contains(s.node) && s.marginal.total() > 0.0)
        throw Error(ErrorCode::UnreachableMass, "source '" + s.node + "' is on no path");
    for (const auto& s : net.sinks())
      if (!node_index_.contains(s.node) && s.marginal.total() > 0.0)
        throw Error(ErrorCode::UnreachableMass, "sink '" + s.node + "' is on no path");

    for (std::size_t i = 0; i < node_ids_.size(); ++i) {
      if (net.role(node_ids_[i]) == NodeRole::Interior && !caps_[i].is_unconstrained()) {
        capacitated_.push_back(i);
      }
    }

    paths_.resize(problem.paths.size());
    for (std::size_t p = 0; p < problem.paths.size(); ++p) {
      auto& pd = paths_[p];
      const auto& nodes = problem.paths[p].nodes;
      for (std::size_t l = 0; l < nodes.size(); ++l) {
        const std::size_t idx = node_index_.at(nodes[l]);
        pd.nodes.push_back(idx);
        positions_[idx].push_back({p, l});
      }
      pd.weights = path_cost_terms(net, problem.paths[p]);
    }

    if (problem.mode == DAMode::Coupled) {
      if (problem.joint_targets.empty()) {
        throw Error(ErrorCode::InvalidScenario, "coupled mode needs joint departure-arrival targets");
      }
      for (std::size_t j = 0; j < problem.joint_targets.size(); ++j) {
        const auto& jt = problem.joint_targets[j];
        if (!(jt.target.grid() == grid_)) throw Error(ErrorCode::GridMismatch, "joint target on another grid");
        pair_index_[{jt.source, jt.sink}] = j;
      }
      lambda_.assign(problem.joint_targets.size(), Matrix(n_t, n_t, D::one()));
      for (std::size_t p = 0; p < paths_.size(); ++p) {
        const auto key = std::make_pair(problem.paths[p].source(), problem.paths[p].sink());
        auto it = pair_index_.find(key);
        if (it == pair_index_.end()) {
          throw Error(ErrorCode::InvalidScenario,
                      "no joint target for pair " + key.first + "->" + key.second);
        }
        paths_[p].pair = it->second;
      }
      for (const auto& [key, j] : pair_index_) {
        bool used = false;
        for (const auto& pd : paths_) used = used || pd.pair == j;
        if (!used && problem.joint_targets[j].target.total() > 0.0) {
          throw Error(ErrorCode::UnreachableMass, "joint target " + key.first + "->" + key.second + " has no path");
        }
      }
    }
    rebuild_kernels();
  }

  DAMode mode() const noexcept { return problem_->mode; }
  double epsilon() const noexcept { return epsilon_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<NodeId>& node_ids() const noexcept { return node_ids_; }
  std::size_t path_count() const noexcept { return paths_.size(); }

  /// Interior nodes with a finite capacity somewhere, in first-appearance order.
  std::vector<NodeId> capacitated_nodes() const {
    std::vector<NodeId> out;
    for (auto i : capacitated_) out.push_back(node_ids_[i]);
    return out;
  }
  std::vector<NodeId> source_nodes() const {
    std::vector<NodeId> out;
    for (auto i : sources_) out.push_back(node_ids_[i]);
    return out;
  }
  std::vector<NodeId> sink_nodes() const {
    std::vector<NodeId> out;
    for (auto i : sinks_) out.push_back(node_ids_[i]);
    return out;
  }

  /// Change epsilon, keeping the dual potentials (eps * log scaling) fixed.
  void set_epsilon(double epsilon) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::BadParam, "epsilon must be positive");
    const double ratio = epsilon_ / epsilon;
    for (auto& v : log_scaling_)
      for (double& x : v)
        if (std::isfinite(x)) x *= ratio;
    for (auto& m : lambda_)
      for (double& x : m.data()) {
        const double l = D::to_log(x);
        if (std::isfinite(l)) x = D::from_log(l * ratio);
      }
    epsilon_ = epsilon;
    rebuild_kernels();
  }

  SinkhornState state() const {
    SinkhornState s;
    s.epsilon = epsilon_;
    s.iteration = iteration_;
    for (std::size_t i = 0; i < node_ids_.size(); ++i) s.log_scaling[node_ids_[i]] = log_scaling_[i];
    for (const auto& [key, j] : pair_index_) {
      Matrix m(grid_.size(), grid_.size());
      for (std::size_t k = 0; k < m.data().size(); ++k) m.data()[k] = D::to_log(lambda_[j].data()[k]);
      s.log_lambda[key] = std::move(m);
    }
    return s;
  }

  /// Replace scalings (e.g. to start from a previous solve or a test fixture).
  void set_log_scaling(const NodeId& node, std::vector<double> log_values) {
    const std::size_t idx = index_of(node);
    if (log_values.size() != grid_.size()) throw Error(ErrorCode::GridMismatch, "scaling length mismatch");
    log_scaling_[idx] = std::move(log_values);
    invalidate_node(idx);
  }

  // ---- messages and marginals -------------------------------------------

  /// Flux profile of path p at the node in position `pos`: every factor of the
  /// path integrated out except that node's time, excluding its own scaling.
  std::vector<double> flux_profile(std::size_t p, std::size_t pos) {
    return linearize(flux_repr(p, pos));
  }

  std::vector<double> flux_profile(std::size_t p, const NodeId& node) {
    const std::size_t idx = index_of(node);
    for (const auto& [q, pos] : positions_.at(idx))
      if (q == p) return flux_profile(p, pos);
    throw Error(ErrorCode::BadParam, "node '" + node + "' is not on path " + std::to_string(p));
  }

  /// Aggregated model marginal m_v = s_v * sum over incident paths of A_v.
  std::vector<double> marginal(const NodeId& node) { return linearize(marginal_repr(index_of(node))); }

  /// Total mass carried by path p.
  double path_mass(std::size_t p) {
    const auto a = flux_repr(p, 0);
    const auto& pd = paths_[p];
    if (problem_->mode == DAMode::Coupled) return D::to_linear(D::sum(a));
    std::vector<double> terms(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) terms[t] = D::mul(a[t], scale(pd.nodes[0], t));
    return D::to_linear(D::sum(terms));
  }

  /// Interior chain matrix M(t0, tT) of path p (coupled mode).
  Matrix chain_matrix(std::size_t p) {
    require_coupled();
    ensure_forward(p, paths_[p].nodes.size() - 1);
    return linearize(paths_[p].fwd_mat.back());
  }

  /// Model joint boundary marginal Lambda * sum_p M^(p) for one pair (coupled mode).
  Matrix joint_marginal(const NodeId& source, const NodeId& sink) {
    require_coupled();
    const std::size_t j = pair_of(source, sink);
    Matrix agg = aggregate_chain(j);
    Matrix out(grid_.size(), grid_.size(), 0.0);
    for (std::size_t k = 0; k < agg.data().size(); ++k) {
      out.data()[k] = D::to_linear(D::mul(agg.data()[k], lambda_[j].data()[k]));
    }
    return out;
  }

  // ---- block updates ------------------------------------------------------

  /// u <- mu0 / A (source) or v <- muT / A (sink), recomputed from scratch.
  /// Returns the L1 violation of the block before the update.
  double update_boundary(const NodeId& node) {
    const std::size_t idx = index_of(node);
    const auto role = problem_->network.role(node);
    if (role == NodeRole::Interior) throw Error(ErrorCode::BadParam, "'" + node + "' is not a boundary node");
    if (problem_->mode == DAMode::Coupled) throw Error(ErrorCode::BadParam, "coupled mode uses update_joint");
    const auto a = aggregate_flux(idx);
    const double violation = block_violation(idx, a);
    log_scaling_[idx] = boundary_scaling(idx, a);
    invalidate_node(idx);
    return violation;
  }

  /// w <- min(cap / A, 1). Returns the capacity excess before the update.
  double update_capacity(const NodeId& node) {
    const std::size_t idx = index_of(node);
    if (problem_->network.role(node) != NodeRole::Interior) {
      throw Error(ErrorCode::BadParam, "'" + node + "' is not an interior node");
    }
    const auto a = aggregate_flux(idx);
    const double violation = block_violation(idx, a);
    log_scaling_[idx] = capacity_scaling(idx, a);
    invalidate_node(idx);
    return violation;
  }

  /// Lambda <- mu^{0,T} / sum_p M^(p) on the support of the target, 0 elsewhere.
  double update_joint(const NodeId& source, const NodeId& sink) {
    require_coupled();
    const std::size_t j = pair_of(source, sink);
    const Matrix agg = aggregate_chain(j);
    const double violation = joint_violation(j, agg);
    lambda_[j] = joint_scaling(j, agg);
    invalidate_pair(j);
    return violation;
  }

  // ---- sweeps ---------------------------------------------------------------

  /// One pass over all constraint blocks; returns the pre-projection residuals.
  Diagnostics sweep(SweepOrder order) {
    Diagnostics r;
    if (order == SweepOrder::GaussSeidel) {
      if (problem_->mode == DAMode::Coupled) {
        for (const auto& [key, j] : pair_index_) r.e0 += update_joint(key.first, key.second);
      } else {
        for (auto i : sources_) r.e0 += update_boundary(node_ids_[i]);
      }
      for (auto i : capacitated_) r.v += update_capacity(node_ids_[i]);
      if (problem_->mode == DAMode::Independent) {
        for (auto i : sinks_) r.eT += update_boundary(node_ids_[i]);
      }
    } else {
      r = jacobi_sweep();
    }
    ++iteration_;
    return r;
  }

  /// Violations of the current state.
  Diagnostics diagnostics() {
    Diagnostics d;
    if (problem_->mode == DAMode::Coupled) {
      for (const auto& [key, j] : pair_index_) d.e0 += joint_violation(j, aggregate_chain(j));
    } else {
      for (auto i : sources_) d.e0 += block_violation(i, aggregate_flux(i));
      for (auto i : sinks_) d.eT += block_violation(i, aggregate_flux(i));
    }
    for (auto i : capacitated_) d.v += block_violation(i, aggregate_flux(i));
    return d;
  }

  /// Entropic dual objective
  ///   eps * (<log u, mu0> + <log v, muT> + <log w, cap>) - eps * total plan mass
  /// with 0 * (-inf) = 0 and inf * 0 = 0.
  double dual_objective() {
    auto pair_term = [](double weight, double log_value) {
      if (weight == 0.0 || log_value == 0.0) return 0.0;
      return weight * log_value;
    };
    double value = 0.0;
    if (problem_->mode == DAMode::Coupled) {
      for (const auto& [key, j] : pair_index_) {
        const auto& target = problem_->joint_targets[j].target.mass().data();
        for (std::size_t k = 0; k < target.size(); ++k) {
          value += pair_term(target[k], D::to_log(lambda_[j].data()[k]));
        }
      }
    } else {
      for (auto i : sources_) value += boundary_dual(i);
      for (auto i : sinks_) value += boundary_dual(i);
    }
    for (auto i : capacitated_) {
      for (std::size_t t = 0; t < grid_.size(); ++t) value += pair_term(caps_[i][t], log_scaling_[i][t]);
    }
    double mass = 0.0;
    for (std::size_t p = 0; p < paths_.size(); ++p) mass += path_mass(p);
    return epsilon_ * (value - mass);
  }

  /// Full solve: sweeps until the state violation E0 + ET + V <= tol or max_iter.
  ConvergenceReport run(const SolverConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    ConvergenceReport report;
    report.domain = D::name;
    report.annealed = cfg.anneal.has_value();
    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
      if (cfg.anneal && it > 1 && cfg.anneal->every > 0 && (it - 1) % cfg.anneal->every == 0) {
        const double next = std::max(epsilon_ * cfg.anneal->factor, cfg.anneal->epsilon_min);
        if (next < epsilon_) set_epsilon(next);
      }
      const Diagnostics residual = sweep(cfg.sweep);
      report.final_state = diagnostics();
      report.trace.push_back({it, residual, dual_objective()});
      report.iterations = it;
      const bool annealing_done = !cfg.anneal || epsilon_ <= cfg.anneal->epsilon_min;
      if (annealing_done && report.final_state.sum() <= cfg.tol) {
        report.converged = true;
        break;
      }
    }
    if (report.iterations == 0) report.final_state = diagnostics();
    report.converged = report.final_state.sum() <= cfg.tol;
    report.final_epsilon = epsilon_;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }

  // ---- plan extraction ------------------------------------------------------

  /// Enumerates the path plan K * u * prod w * v (coupled: K * Lambda * prod w)
  /// over all strictly increasing time tuples, largest cells first.
  std::vector<PlanCell> extract_plan(std::size_t p, const ExtractOptions& opt) {
    const auto& pd = paths_.at(p);
    const std::size_t len = pd.nodes.size();
    const std::size_t n = grid_.size();
    if (ordered_tuple_count(n, len) > static_cast<double>(opt.max_cells)) {
      throw Error(ErrorCode::TooLarge, "plan enumeration exceeds max_cells");
    }
    const bool coupled = problem_->mode == DAMode::Coupled;
    std::vector<PlanCell> cells;
    std::vector<std::size_t> bins(len);
    // log-mass accumulated along the prefix
    std::vector<double> prefix(len + 1, 0.0);
    auto node_log = [&](std::size_t l, std::size_t t) {
      const bool boundary = l == 0 || l + 1 == len;
      if (coupled && boundary) return 0.0;
      return log_scaling_[pd.nodes[l]][t];
    };
    auto recurse = [&](auto&& self, std::size_t l, std::size_t lo) -> void {
      if (l == len) {
        double lm = prefix[len];
        if (coupled) lm += D::to_log(lambda_[pd.pair](bins.front(), bins.back()));
        const double mass = std::exp(lm);
        if (mass > opt.mass_floor) cells.push_back({bins, mass});
        return;
      }
      // leave room for the remaining strictly increasing indices
      for (std::size_t t = lo; t + (len - l - 1) < n; ++t) {
        bins[l] = t;
        double lm = prefix[l] + node_log(l, t);
        if (l > 0) lm += pd.kernels[l - 1]->log_k(bins[l - 1], t);
        if (lm == -std::numeric_limits<double>::infinity()) continue;
        prefix[l + 1] = lm;
        self(self, l + 1, t + 1);
      }
    };
    recurse(recurse, 0, 0);
    std::sort(cells.begin(), cells.end(), [](const PlanCell& a, const PlanCell& b) {
      if (a.mass != b.mass) return a.mass > b.mass;
      return a.bins < b.bins;
    });
    if (opt.top_k > 0 && cells.size() > opt.top_k) cells.resize(opt.top_k);
    return cells;
  }

 private:
  struct PathData {
    std::vector<std::size_t> nodes;
    std::vector<double> weights;
    std::vector<const PairKernel*> kernels;
    std::size_t pair = 0;
    // independent mode: vector messages, one per position
    std::vector<std::vector<double>> fwd;
    std::vector<std::vector<double>> bwd;
    // coupled mode: fwd_mat[l] maps t0 -> t_l (l >= 1), bwd_mat[l] maps t_l -> tT (l <= last-1)
    std::vector<Matrix> fwd_mat;
    std::vector<Matrix> bwd_mat;
    std::size_t fwd_valid = 0;      // fwd[0..fwd_valid-1] are current
    std::size_t bwd_valid_from = 0;  // bwd[bwd_valid_from..] are current
  };

  struct Position {
    std::size_t path;
    std::size_t pos;
  };

  std::size_t index_of(const NodeId& node) const {
    auto it = node_index_.find(node);
    if (it == node_index_.end()) throw Error(ErrorCode::BadParam, "node '" + node + "' is on no path");
    return it->second;
  }

  std::size_t pair_of(const NodeId& source, const NodeId& sink) const {
    auto it = pair_index_.find({source, sink});
    if (it == pair_index_.end()) throw Error(ErrorCode::BadParam, "unknown pair " + source + "->" + sink);
    return it->second;
  }

  void require_coupled() const {
    if (problem_->mode != DAMode::Coupled) throw Error(ErrorCode::BadParam, "only available in coupled mode");
  }

  double scale(std::size_t node, std::size_t t) const { return D::from_log(log_scaling_[node][t]); }

  template <class V>
  static std::vector<double> linearize(const V& v) {
    std::vector<double> out(v.size());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return D::to_linear(x); });
    return out;
  }

  static Matrix linearize(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    std::transform(m.data().begin(), m.data().end(), out.data().begin(),
                   [](double x) { return D::to_linear(x); });
    return out;
  }

  void rebuild_kernels() {
    kernels_.clear();
    for (auto& pd : paths_) {
      pd.kernels.clear();
      for (std::size_t l = 1; l < pd.nodes.size(); ++l) {
        const auto key = std::make_pair(pd.nodes[l - 1], pd.nodes[l]);
        auto it = kernels_.find(key);
        if (it == kernels_.end()) {
          it = kernels_.emplace(key, build_pair_kernel(grid_, pd.weights[l - 1], epsilon_)).first;
        }
        pd.kernels.push_back(&it->second);
      }
      const std::size_t len = pd.nodes.size();
      pd.fwd.assign(len, std::vector<double>(grid_.size(), D::one()));
      pd.bwd.assign(len, std::vector<double>(grid_.size(), D::one()));
      if (problem_->mode == DAMode::Coupled) {
        pd.fwd_mat.assign(len, Matrix());
        pd.bwd_mat.assign(len, Matrix());
      }
      pd.fwd_valid = 1;
      pd.bwd_valid_from = len - 1;
    }
  }

  void invalidate_node(std::size_t idx) {
    auto it = positions_.find(idx);
    if (it == positions_.end()) return;
    for (const auto& [p, pos] : it->second) {
      auto& pd = paths_[p];
      pd.fwd_valid = std::min(pd.fwd_valid, pos + 1);
      pd.bwd_valid_from = std::max(pd.bwd_valid_from, pos);
    }
  }

  // Lambda only enters the coupled interior fluxes, which read it directly.
  void invalidate_pair(std::size_t) {}

  // Independent mode: phi_l(t) = sum_s phi_{l-1}(s) s_{l-1}(s) K_l(s,t).
  // Coupled mode: F_1 = K_1, F_l = F_{l-1} diag(s_{l-1}) K_l.
  void ensure_forward(std::size_t p, std::size_t pos) {
    auto& pd = paths_[p];
    const std::size_t n = grid_.size();
    const bool coupled = problem_->mode == DAMode::Coupled;
    if (coupled && pd.fwd_valid < 2 && pos >= 1) {
      pd.fwd_mat[1] = D::kernel(*pd.kernels[0]);
      pd.fwd_valid = 2;
    }
    std::vector<double> scaled(n);
    while (pd.fwd_valid <= pos) {
      const std::size_t l = pd.fwd_valid;
      const std::size_t prev = pd.nodes[l - 1];
      if (coupled) {
        Matrix f = pd.fwd_mat[l - 1];
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < n; ++c) f(r, c) = D::mul(f(r, c), scale(prev, c));
        pd.fwd_mat[l] = D::matmul(f, D::kernel(*pd.kernels[l - 1]));
      } else {
        for (std::size_t t = 0; t < n; ++t) scaled[t] = D::mul(pd.fwd[l - 1][t], scale(prev, t));
        D::forward(scaled, D::kernel(*pd.kernels[l - 1]), pd.fwd[l]);
      }
      ++pd.fwd_valid;
    }
  }

  // Independent mode: beta_l(s) = sum_t K_{l+1}(s,t) s_{l+1}(t) beta_{l+1}(t).
  // Coupled mode: B_{last-1} = K_last, B_l = K_{l+1} diag(s_{l+1}) B_{l+1}.
  void ensure_backward(std::size_t p, std::size_t pos) {
    auto& pd = paths_[p];
    const std::size_t n = grid_.size();
    const std::size_t last = pd.nodes.size() - 1;
    const bool coupled = problem_->mode == DAMode::Coupled;
    if (coupled && pd.bwd_valid_from > last - 1 && pos <= last - 1) {
      pd.bwd_mat[last - 1] = D::kernel(*pd.kernels[last - 1]);
      pd.bwd_valid_from = last - 1;
    }
    std::vector<double> scaled(n);
    while (pd.bwd_valid_from > pos) {
      const std::size_t l = pd.bwd_valid_from - 1;
      const std::size_t next = pd.nodes[l + 1];
      if (coupled) {
        Matrix b = pd.bwd_mat[l + 1];
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < n; ++c) b(r, c) = D::mul(b(r, c), scale(next, r));
        pd.bwd_mat[l] = D::matmul(D::kernel(*pd.kernels[l]), b);
      } else {
        for (std::size_t t = 0; t < n; ++t) scaled[t] = D::mul(pd.bwd[l + 1][t], scale(next, t));
        D::backward(D::kernel(*pd.kernels[l]), scaled, pd.bwd[l]);
      }
      --pd.bwd_valid_from;
    }
  }

  // Flux profile in domain representation.
  std::vector<double> flux_repr(std::size_t p, std::size_t pos) {
    auto& pd = paths_[p];
    const std::size_t n = grid_.size();
    const std::size_t last = pd.nodes.size() - 1;
    std::vector<double> a(n);
    if (problem_->mode == DAMode::Coupled) {
      const Matrix& lambda = lambda_[pd.pair];
      if (pos == 0 || pos == last) {
        ensure_forward(p, last);
        const Matrix& m = pd.fwd_mat[last];
        std::vector<double> terms(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            terms[j] = pos == 0 ? D::mul(lambda(i, j), m(i, j)) : D::mul(lambda(j, i), m(j, i));
          }
          a[i] = D::sum(terms);
        }
        return a;
      }
      ensure_forward(p, pos);
      ensure_backward(p, pos);
      // G(t0, t) = sum_tT Lambda(t0, tT) B(t, tT); A(t) = sum_t0 F(t0, t) G(t0, t)
      const Matrix g = D::matmul_bt(lambda, pd.bwd_mat[pos]);
      const Matrix& f = pd.fwd_mat[pos];
      std::vector<double> terms(n);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t t0 = 0; t0 < n; ++t0) terms[t0] = D::mul(f(t0, t), g(t0, t));
        a[t] = D::sum(terms);
      }
      return a;
    }
    ensure_forward(p, pos);
    ensure_backward(p, pos);
    for (std::size_t t = 0; t < n; ++t) a[t] = D::mul(pd.fwd[pos][t], pd.bwd[pos][t]);
    return a;
  }

  // Sum of flux profiles over the paths through a node (excluding its scaling).
  std::vector<double> aggregate_flux(std::size_t idx) {
    const std::size_t n = grid_.size();
    const auto& where = positions_.at(idx);
    std::vector<std::vector<double>> per_path;
    per_path.reserve(where.size());
    for (const auto& [p, pos] : where) per_path.push_back(flux_repr(p, pos));
    std::vector<double> out(n);
    std::vector<double> terms(per_path.size());
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t k = 0; k < per_path.size(); ++k) terms[k] = per_path[k][t];
      out[t] = D::sum(terms);
    }
    return out;
  }

  std::vector<double> marginal_repr(std::size_t idx) {
    auto a = aggregate_flux(idx);
    const bool coupled = problem_->mode == DAMode::Coupled;
    const bool boundary = problem_->network.role(node_ids_[idx]) != NodeRole::Interior;
    if (coupled && boundary) return a;
    for (std::size_t t = 0; t < a.size(); ++t) a[t] = D::mul(a[t], scale(idx, t));
    return a;
  }

  Matrix aggregate_chain(std::size_t j) {
    const std::size_t n = grid_.size();
    Matrix out(n, n, D::zero());
    bool first = true;
    for (std::size_t p = 0; p < paths_.size(); ++p) {
      if (paths_[p].pair != j) continue;
      ensure_forward(p, paths_[p].nodes.size() - 1);
      const Matrix& m = paths_[p].fwd_mat.back();
      if (first) {
        out = m;
        first = false;
        continue;
      }
      for (std::size_t k = 0; k < out.data().size(); ++k) {
        const double pair[2] = {out.data()[k], m.data()[k]};
        out.data()[k] = D::sum(pair);
      }
    }
    return out;
  }

  const Measure& target_of(std::size_t idx) const {
    const Measure* m = problem_->network.boundary_marginal(node_ids_[idx]);
    return *m;
  }

  // L1 violation of the node's constraint given its aggregated flux.
  double block_violation(std::size_t idx, const std::vector<double>& a) const {
    const auto role = problem_->network.role(node_ids_[idx]);
    double v = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
      const double m = D::to_linear(D::mul(a[t], scale(idx, t)));
      if (role == NodeRole::Interior) {
        v += std::max(m - caps_[idx][t], 0.0);
      } else {
        v += std::abs(m - target_of(idx)[t]);
      }
    }
    return v;
  }

  std::vector<double> boundary_scaling(std::size_t idx, const std::vector<double>& a) const {
    const auto& target = target_of(idx);
    std::vector<double> out(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
      if (target[t] == 0.0) {
        out[t] = -std::numeric_limits<double>::infinity();  // 0/0 := 0
      } else if (D::is_zero(a[t])) {
        throw Error(ErrorCode::UnreachableMass,
                    "marginal at '" + node_ids_[idx] + "' has mass at t=" +
                        std::to_string(grid_.center(t)) + " that no admissible time tuple reaches");
      } else {
        out[t] = std::log(target[t]) - D::to_log(a[t]);
      }
    }
    return out;
  }

  std::vector<double> capacity_scaling(std::size_t idx, const std::vector<double>& a) const {
    std::vector<double> out(a.size(), 0.0);
    for (std::size_t t = 0; t < a.size(); ++t) {
      const double cap = caps_[idx][t];
      if (D::is_zero(a[t]) || !std::isfinite(cap)) continue;
      if (cap == 0.0) {
        out[t] = -std::numeric_limits<double>::infinity();
        continue;
      }
      out[t] = std::min(std::log(cap) - D::to_log(a[t]), 0.0);
    }
    return out;
  }

  double joint_violation(std::size_t j, const Matrix& agg) const {
    const auto& target = problem_->joint_targets[j].target.mass().data();
    double v = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
      v += std::abs(D::to_linear(D::mul(agg.data()[k], lambda_[j].data()[k])) - target[k]);
    }
    return v;
  }

  Matrix joint_scaling(std::size_t j, const Matrix& agg) const {
    const auto& jt = problem_->joint_targets[j];
    const auto& target = jt.target.mass();
    const std::size_t n = grid_.size();
    Matrix out(n, n, D::zero());
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double mu = target(r, c);
        if (mu == 0.0) continue;
        if (D::is_zero(agg(r, c))) {
          throw Error(ErrorCode::UnreachableMass,
                      "joint target " + jt.source + "->" + jt.sink + " puts mass on (" +
                          std::to_string(grid_.center(r)) + ", " + std::to_string(grid_.center(c)) +
                          ") which no admissible path can realize");
        }
        out(r, c) = D::from_log(std::log(mu) - D::to_log(agg(r, c)));
      }
    }
    return out;
  }

  double boundary_dual(std::size_t idx) const {
    const auto& target = target_of(idx);
    double value = 0.0;
    for (std::size_t t = 0; t < grid_.size(); ++t) {
      if (target[t] == 0.0) continue;
      value += target[t] * log_scaling_[idx][t];
    }
    return value;
  }

  Diagnostics jacobi_sweep() {
    Diagnostics r;
    const bool coupled = problem_->mode == DAMode::Coupled;
    // every block sees the messages of the same state
    std::vector<std::pair<std::size_t, std::vector<double>>> node_updates;
    std::vector<std::pair<std::size_t, Matrix>> pair_updates;
    if (coupled) {
      for (const auto& [key, j] : pair_index_) {
        const Matrix agg = aggregate_chain(j);
        r.e0 += joint_violation(j, agg);
        pair_updates.emplace_back(j, joint_scaling(j, agg));
      }
    } else {
      for (auto i : sources_) {
        const auto a = aggregate_flux(i);
        r.e0 += block_violation(i, a);
        node_updates.emplace_back(i, boundary_scaling(i, a));
      }
      for (auto i : sinks_) {
        const auto a = aggregate_flux(i);
        r.eT += block_violation(i, a);
        node_updates.emplace_back(i, boundary_scaling(i, a));
      }
    }
    for (auto i : capacitated_) {
      const auto a = aggregate_flux(i);
      r.v += block_violation(i, a);
      node_updates.emplace_back(i, capacity_scaling(i, a));
    }
    for (auto& [i, values] : node_updates) {
      log_scaling_[i] = std::move(values);
      invalidate_node(i);
    }
    for (auto& [j, values] : pair_updates) lambda_[j] = std::move(values);
    return r;
  }

  const DAProblem* problem_;
  TimeGrid grid_;
  double epsilon_;
  std::size_t iteration_ = 0;
  std::vector<NodeId> node_ids_;
  std::map<NodeId, std::size_t> node_index_;
  std::vector<std::vector<double>> log_scaling_;
  std::vector<CapacityProfile> caps_;
  std::vector<std::size_t> sources_;
  std::vector<std::size_t> sinks_;
  std::vector<std::size_t> capacitated_;
  std::map<std::size_t, std::vector<Position>> positions_;
  std::vector<PathData> paths_;
  std::map<std::pair<std::size_t, std::size_t>, PairKernel> kernels_;
  std::map<std::pair<NodeId, NodeId>, std::size_t> pair_index_;
  std::vector<Matrix> lambda_;  // coupled mode, domain representation
};

/// Whether the automatic choice would run message passing in log space: the
/// per-edge kernel guard, a near-diagonal kernel entry below e^-100, or a
/// chain whose cheapest tuple already underflows.
inline bool auto_selects_log_domain(const DAProblem& problem, double epsilon) {
  const auto& grid = problem.network.grid();
  double w_max = 0.0;
  for (const auto& e : problem.network.edges()) w_max = std::max(w_max, e.weight);
  if (kernel_needs_log_domain(grid, w_max, epsilon)) return true;
  // one-bin gaps this small leave no headroom for tail masses and scalings
  if (w_max / (epsilon * grid.dt()) > 100.0) return true;
  for (const auto& path : problem.paths) {
    const auto w = path_cost_terms(problem.network, path);
    // exp(-300) leaves ~8 decades above the double underflow threshold
    if (min_chain_cost(w, grid.horizon()) / epsilon > 300.0) return true;
  }
  return false;
}

inline bool uses_log_domain(const DAProblem& problem, const SolverConfig& cfg) {
  switch (cfg.domain) {
    case DomainChoice::Linear: return false;
    case DomainChoice::Log: return true;
    case DomainChoice::Auto: break;
  }
  const double eps = cfg.anneal ? std::min(cfg.epsilon, cfg.anneal->epsilon_min) : cfg.epsilon;
  return auto_selects_log_domain(problem, eps);
}

struct NodeMarginal {
  NodeId node;
  NodeRole role;
  std::vector<double> mass;
  std::vector<double> cap;  // per-bin cap, +inf where unconstrained
};

struct SolveResult {
  SinkhornState state;
  ConvergenceReport report;
  std::vector<NodeMarginal> marginals;          // nodes in first-appearance order
  std::vector<std::vector<PlanCell>> plans;     // filled only when requested
};

/// Runs the solver with the domain chosen by `cfg` and collects the marginals.
/// `extract` (if set) is applied to every path after convergence.
inline SolveResult solve(const DAProblem& problem, const SolverConfig& cfg,
                         const std::optional<ExtractOptions>& extract = std::nullopt) {
  auto run = [&](auto& engine) {
    SolveResult out;
    out.report = engine.run(cfg);
    out.state = engine.state();
    for (const auto& node : engine.node_ids()) {
      NodeMarginal m{node, problem.network.role(node), engine.marginal(node),
                     problem.network.capacity(node).per_bin()};
      out.marginals.push_back(std::move(m));
    }
    if (extract) {
      for (std::size_t p = 0; p < engine.path_count(); ++p) out.plans.push_back(engine.extract_plan(p, *extract));
    }
    return out;
  };
  if (uses_log_domain(problem, cfg)) {
    PathSinkhorn<LogDomain> engine(problem, cfg.epsilon);
    return run(engine);
  }
  PathSinkhorn<LinearDomain> engine(problem, cfg.epsilon);
  return run(engine);
}

}  // namespace dat

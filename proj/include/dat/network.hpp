#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dat/error.hpp"
#include "dat/grid.hpp"

namespace dat {

using NodeId = std::string;

struct Edge {
  NodeId tail;
  NodeId head;
  double weight;
};

/// Per-bin mass cap at a node; +inf marks an unconstrained bin.
class CapacityProfile {
 public:
  CapacityProfile(TimeGrid grid, std::vector<double> per_bin_cap)
      : grid_(grid), cap_(std::move(per_bin_cap)) {
    if (cap_.size() != grid_.size()) {
      throw Error(ErrorCode::GridMismatch, "capacity length does not match grid");
    }
    for (double c : cap_) {
      if (std::isnan(c) || c < 0.0) throw Error(ErrorCode::BadParam, "capacity must be nonnegative");
    }
  }

  static CapacityProfile unconstrained(TimeGrid grid) {
    return {grid, std::vector<double>(grid.size(), std::numeric_limits<double>::infinity())};
  }

  /// Constant rate bound r, i.e. a cap of r * dt per bin.
  static CapacityProfile from_density(TimeGrid grid, double density) {
    return {grid, std::vector<double>(grid.size(), density * grid.dt())};
  }

  static CapacityProfile from_density(TimeGrid grid, const std::vector<double>& density) {
    if (density.size() != grid.size()) {
      throw Error(ErrorCode::GridMismatch, "capacity density length does not match grid");
    }
    std::vector<double> cap(density.size());
    for (std::size_t k = 0; k < density.size(); ++k) cap[k] = density[k] * grid.dt();
    return {grid, std::move(cap)};
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<double>& per_bin() const noexcept { return cap_; }
  double operator[](std::size_t k) const noexcept { return cap_[k]; }

  bool is_unconstrained() const noexcept {
    for (double c : cap_)
      if (std::isfinite(c)) return false;
    return true;
  }

 private:
  TimeGrid grid_;
  std::vector<double> cap_;
};

struct BoundaryMarginal {
  NodeId node;
  Measure marginal;
};

enum class NodeRole { Source, Interior, Sink };

inline const char* to_string(NodeRole role) {
  switch (role) {
    case NodeRole::Source: return "source";
    case NodeRole::Interior: return "interior";
    case NodeRole::Sink: return "sink";
  }
  return "interior";
}

/// Weighted directed graph with source/sink time marginals and nodal
/// capacity profiles. Immutable after construction.
class TransportNetwork {
 public:
  TransportNetwork(TimeGrid grid, std::vector<NodeId> nodes, std::vector<Edge> edges,
                   std::vector<BoundaryMarginal> sources, std::vector<BoundaryMarginal> sinks,
                   std::map<NodeId, CapacityProfile> capacities = {})
      : grid_(grid),
        nodes_(std::move(nodes)),
        edges_(std::move(edges)),
        sources_(std::move(sources)),
        sinks_(std::move(sinks)),
        capacities_(std::move(capacities)) {
    std::set<NodeId> seen;
    for (const auto& n : nodes_) {
      if (!seen.insert(n).second) throw Error(ErrorCode::InvalidScenario, "duplicate node '" + n + "'");
    }
    for (const auto& e : edges_) {
      if (!seen.contains(e.tail) || !seen.contains(e.head)) {
        throw Error(ErrorCode::InvalidScenario,
                    "edge " + e.tail + "->" + e.head + " references an unknown node");
      }
      if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
        throw Error(ErrorCode::InvalidScenario,
                    "edge " + e.tail + "->" + e.head + " must have a positive weight");
      }
      if (!adjacency_.emplace(std::make_pair(e.tail, e.head), e.weight).second) {
        throw Error(ErrorCode::InvalidScenario, "duplicate edge " + e.tail + "->" + e.head);
      }
    }
    auto check_boundary = [&](const std::vector<BoundaryMarginal>& side, NodeRole role) {
      for (const auto& b : side) {
        if (!seen.contains(b.node)) {
          throw Error(ErrorCode::InvalidScenario, "boundary node '" + b.node + "' is unknown");
        }
        if (!(b.marginal.grid() == grid_)) {
          throw Error(ErrorCode::GridMismatch, "marginal at '" + b.node + "' is on another grid");
        }
        if (!roles_.emplace(b.node, role).second) {
          throw Error(ErrorCode::InvalidScenario, "node '" + b.node + "' listed twice as boundary");
        }
      }
    };
    check_boundary(sources_, NodeRole::Source);
    check_boundary(sinks_, NodeRole::Sink);
    if (sources_.empty() || sinks_.empty()) {
      throw Error(ErrorCode::InvalidScenario, "network needs at least one source and one sink");
    }

    double supply = 0.0;
    double demand = 0.0;
    for (const auto& s : sources_) supply += s.marginal.total();
    for (const auto& s : sinks_) demand += s.marginal.total();
    if (std::abs(supply - demand) > 1e-9) {
      throw Error(ErrorCode::MassMismatch, "total supply does not match total demand");
    }
    for (const auto& [node, cap] : capacities_) {
      if (!seen.contains(node)) throw Error(ErrorCode::InvalidScenario, "capacity on unknown node '" + node + "'");
      if (!(cap.grid() == grid_)) throw Error(ErrorCode::GridMismatch, "capacity at '" + node + "' is on another grid");
    }
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<NodeId>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<BoundaryMarginal>& sources() const noexcept { return sources_; }
  const std::vector<BoundaryMarginal>& sinks() const noexcept { return sinks_; }
  const std::map<NodeId, CapacityProfile>& capacities() const noexcept { return capacities_; }

  bool has_node(const NodeId& n) const {
    for (const auto& x : nodes_)
      if (x == n) return true;
    return false;
  }

  std::optional<double> edge_weight(const NodeId& tail, const NodeId& head) const {
    auto it = adjacency_.find({tail, head});
    if (it == adjacency_.end()) return std::nullopt;
    return it->second;
  }

  NodeRole role(const NodeId& n) const {
    auto it = roles_.find(n);
    return it == roles_.end() ? NodeRole::Interior : it->second;
  }

  const Measure* boundary_marginal(const NodeId& n) const {
    for (const auto& s : sources_)
      if (s.node == n) return &s.marginal;
    for (const auto& s : sinks_)
      if (s.node == n) return &s.marginal;
    return nullptr;
  }

  /// Capacity at n; boundary nodes and nodes without a profile are unconstrained.
  CapacityProfile capacity(const NodeId& n) const {
    auto it = capacities_.find(n);
    if (it == capacities_.end()) return CapacityProfile::unconstrained(grid_);
    return it->second;
  }

 private:
  TimeGrid grid_;
  std::vector<NodeId> nodes_;
  std::vector<Edge> edges_;
  std::vector<BoundaryMarginal> sources_;
  std::vector<BoundaryMarginal> sinks_;
  std::map<NodeId, CapacityProfile> capacities_;
  std::map<std::pair<NodeId, NodeId>, double> adjacency_;
  std::map<NodeId, NodeRole> roles_;
};

/// Ordered node sequence from a source to a sink.
struct Path {
  std::vector<NodeId> nodes;

  std::size_t size() const noexcept { return nodes.size(); }
  std::size_t edge_count() const noexcept { return nodes.empty() ? 0 : nodes.size() - 1; }
  const NodeId& source() const { return nodes.front(); }
  const NodeId& sink() const { return nodes.back(); }

  friend bool operator==(const Path&, const Path&) = default;
};

struct PathIssue {
  ErrorCode code;
  std::size_t path_index;
  std::string message;
};

struct PathValidation {
  std::vector<PathIssue> issues;
  // node -> indices of the paths visiting it
  std::map<NodeId, std::vector<std::size_t>> incidence;

  bool ok() const noexcept { return issues.empty(); }
};

inline PathValidation validate_paths(const TransportNetwork& net, const std::vector<Path>& paths) {
  PathValidation out;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& nodes = paths[p].nodes;
    auto issue = [&](ErrorCode code, std::string msg) {
      out.issues.push_back({code, p, "path " + std::to_string(p) + ": " + std::move(msg)});
    };
    if (nodes.size() < 2) {
      issue(ErrorCode::BrokenPath, "needs at least two nodes");
      continue;
    }
    bool broken = false;
    std::set<NodeId> visited;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!net.has_node(nodes[i])) {
        issue(ErrorCode::BrokenPath, "unknown node '" + nodes[i] + "'");
        broken = true;
      } else if (!visited.insert(nodes[i]).second) {
        issue(ErrorCode::BrokenPath, "repeats node '" + nodes[i] + "'");
        broken = true;
      }
      if (i > 0 && !net.edge_weight(nodes[i - 1], nodes[i])) {
        issue(ErrorCode::BrokenPath, "missing edge " + nodes[i - 1] + "->" + nodes[i]);
        broken = true;
      }
    }
    if (net.role(nodes.front()) != NodeRole::Source) {
      issue(ErrorCode::BadEndpoint, "does not start at a source");
      broken = true;
    }
    if (net.role(nodes.back()) != NodeRole::Sink) {
      issue(ErrorCode::BadEndpoint, "does not end at a sink");
      broken = true;
    }
    for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
      if (net.role(nodes[i]) != NodeRole::Interior) {
        issue(ErrorCode::BadEndpoint, "passes through boundary node '" + nodes[i] + "'");
        broken = true;
      }
    }
    if (broken) continue;
    for (const auto& n : nodes) out.incidence[n].push_back(p);
  }
  if (!out.ok()) out.incidence.clear();
  return out;
}

/// Throws the first issue found, otherwise returns the incidence map.
inline std::map<NodeId, std::vector<std::size_t>> require_valid_paths(const TransportNetwork& net,
                                                                     const std::vector<Path>& paths) {
  auto v = validate_paths(net, paths);
  if (!v.ok()) throw Error(v.issues.front().code, v.issues.front().message);
  if (paths.empty()) throw Error(ErrorCode::InvalidScenario, "no admissible paths given");
  return std::move(v.incidence);
}

/// Edge weights w(v_{l-1}, v_l) in path order.
inline std::vector<double> path_cost_terms(const TransportNetwork& net, const Path& path) {
  std::vector<double> out;
  out.reserve(path.edge_count());
  for (std::size_t i = 1; i < path.size(); ++i) {
    auto w = net.edge_weight(path.nodes[i - 1], path.nodes[i]);
    if (!w) throw Error(ErrorCode::BrokenPath, "missing edge " + path.nodes[i - 1] + "->" + path.nodes[i]);
    out.push_back(*w);
  }
  return out;
}

}  // namespace dat

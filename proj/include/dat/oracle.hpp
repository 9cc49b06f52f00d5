#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dat/error.hpp"
#include "dat/matrix.hpp"

// Dense-tensor multi-marginal entropic scaling for small instances. Shares
// no code with the message-passing engine so that agreement between the two
// is evidence of correctness.

namespace dat::oracle {

inline constexpr std::size_t kMaxAxes = 4;
inline constexpr std::size_t kMaxAxisLength = 16;
inline constexpr std::size_t kMaxElements = 1'000'000;

/// Row-major tensor with up to four axes.
class DenseTensor {
 public:
  DenseTensor() = default;
  DenseTensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > kMaxAxes) throw Error(ErrorCode::SizeCap, "tensor needs 1 to 4 axes");
    std::size_t count = 1;
    for (auto n : shape_) {
      if (n == 0 || n > kMaxAxisLength) throw Error(ErrorCode::SizeCap, "tensor axis length must be in [1, 16]");
      count *= n;
    }
    if (count > kMaxElements) throw Error(ErrorCode::SizeCap, "tensor exceeds element cap");
    values_.assign(count, fill);
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t axes() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  // Multi-index of a flat position.
  std::vector<std::size_t> unravel(std::size_t flat) const {
    std::vector<std::size_t> idx(shape_.size());
    for (std::size_t a = shape_.size(); a-- > 0;) {
      idx[a] = flat % shape_[a];
      flat /= shape_[a];
    }
    return idx;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

/// Chain cost sum_l w_l / (t_l - t_{l-1}) on bin centers (k + 1/2) * dt; +inf
/// unless the bin indices are strictly increasing.
inline DenseTensor chain_cost_tensor(std::size_t n_t, double dt, std::span<const double> weights) {
  DenseTensor c(std::vector<std::size_t>(weights.size() + 1, n_t), 0.0);
  for (std::size_t flat = 0; flat < c.size(); ++flat) {
    const auto idx = c.unravel(flat);
    double cost = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (idx[l + 1] <= idx[l]) {
        cost = std::numeric_limits<double>::infinity();
        break;
      }
      cost += weights[l] / ((static_cast<double>(idx[l + 1]) - static_cast<double>(idx[l])) * dt);
    }
    c.values()[flat] = cost;
  }
  return c;
}

enum class ConstraintKind { Equality, UpperBound, Joint };

/// One marginal constraint. Joint constraints fix the two-axis marginal
/// (axis, axis2) to `joint`.
struct Constraint {
  ConstraintKind kind = ConstraintKind::Equality;
  std::size_t axis = 0;
  std::vector<double> target;  // equality target or per-bin upper bound
  std::size_t axis2 = 0;
  Matrix joint;

  static Constraint equality(std::size_t axis, std::vector<double> target) {
    return {ConstraintKind::Equality, axis, std::move(target), 0, {}};
  }
  static Constraint upper_bound(std::size_t axis, std::vector<double> cap) {
    return {ConstraintKind::UpperBound, axis, std::move(cap), 0, {}};
  }
  static Constraint joint_pair(std::size_t axis, std::size_t axis2, Matrix target) {
    return {ConstraintKind::Joint, axis, {}, axis2, std::move(target)};
  }
};

struct DenseResult {
  DenseTensor plan;
  std::vector<double> objective_trace;  // <c, pi> - eps * D(pi) after every sweep
};

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log-sum-exp of the entries of `logp` grouped by `key`, for keys in [0, bins).
template <class KeyFn>
std::vector<double> grouped_logsumexp(const DenseTensor& logp, std::size_t bins, KeyFn key) {
  std::vector<double> peak(bins, kNegInf);
  for (std::size_t f = 0; f < logp.size(); ++f) {
    const std::size_t k = key(f);
    peak[k] = std::max(peak[k], logp.values()[f]);
  }
  std::vector<double> acc(bins, 0.0);
  for (std::size_t f = 0; f < logp.size(); ++f) {
    const std::size_t k = key(f);
    if (peak[k] == kNegInf) continue;
    acc[k] += std::exp(logp.values()[f] - peak[k]);
  }
  std::vector<double> out(bins, kNegInf);
  for (std::size_t k = 0; k < bins; ++k)
    if (peak[k] != kNegInf) out[k] = peak[k] + std::log(acc[k]);
  return out;
}

}  // namespace detail

/// Entropy -sum pi (log pi - 1) with 0 log 0 = 0.
inline double entropy(std::span<const double> plan) {
  double h = 0.0;
  for (double p : plan) {
    if (p < 0.0) throw Error(ErrorCode::BadParam, "plan entries must be nonnegative");
    if (p > 0.0) h -= p * (std::log(p) - 1.0);
  }
  return h;
}

inline double entropy(const DenseTensor& plan) { return entropy(std::span<const double>(plan.values())); }

inline double transport_cost(const DenseTensor& cost, const DenseTensor& plan) {
  double total = 0.0;
  for (std::size_t f = 0; f < plan.size(); ++f) {
    if (plan.values()[f] > 0.0) total += cost.values()[f] * plan.values()[f];
  }
  return total;
}

/// One-axis marginal of a plan.
inline std::vector<double> marginal(const DenseTensor& plan, std::size_t axis) {
  std::vector<double> out(plan.shape().at(axis), 0.0);
  for (std::size_t f = 0; f < plan.size(); ++f) out[plan.unravel(f)[axis]] += plan.values()[f];
  return out;
}

/// Two-axis marginal of a plan, rows indexing `axis`.
inline Matrix pair_marginal(const DenseTensor& plan, std::size_t axis, std::size_t axis2) {
  Matrix out(plan.shape().at(axis), plan.shape().at(axis2), 0.0);
  for (std::size_t f = 0; f < plan.size(); ++f) {
    const auto idx = plan.unravel(f);
    out(idx[axis], idx[axis2]) += plan.values()[f];
  }
  return out;
}

/// Entropic multi-marginal scaling: pi = exp(-c/eps) * prod of scalings, with
/// each constraint re-fitted in list order once per sweep. Equality blocks
/// set u = mu / P(pi without u); upper bounds set u = min(r / P, 1); joint
/// blocks rescale a whole two-axis slice. Runs in log space throughout.
inline DenseResult dense_sinkhorn(const DenseTensor& cost, const std::vector<Constraint>& constraints,
                                  double epsilon, std::size_t sweeps) {
  using detail::kNegInf;
  if (!(epsilon > 0.0)) throw Error(ErrorCode::BadParam, "epsilon must be positive");
  const std::size_t axes = cost.axes();
  for (const auto& c : constraints) {
    if (c.axis >= axes || (c.kind == ConstraintKind::Joint && (c.axis2 >= axes || c.axis2 == c.axis))) {
      throw Error(ErrorCode::BadParam, "constraint axis out of range");
    }
  }

  // precomputed multi-indices
  std::vector<std::vector<std::size_t>> index(cost.size());
  for (std::size_t f = 0; f < cost.size(); ++f) index[f] = cost.unravel(f);

  // log scaling per constraint (vector, or flattened matrix for joint blocks)
  std::vector<std::vector<double>> log_u(constraints.size());
  for (std::size_t k = 0; k < constraints.size(); ++k) {
    const auto& c = constraints[k];
    const std::size_t n = cost.shape()[c.axis];
    log_u[k].assign(c.kind == ConstraintKind::Joint ? n * cost.shape()[c.axis2] : n, 0.0);
  }
  auto slot = [&](std::size_t k, std::size_t f) {
    const auto& c = constraints[k];
    if (c.kind == ConstraintKind::Joint) return index[f][c.axis] * cost.shape()[c.axis2] + index[f][c.axis2];
    return index[f][c.axis];
  };

  // log plan excluding constraint `skip` (skip == size() excludes nothing)
  auto log_plan = [&](std::size_t skip) {
    DenseTensor lp(cost.shape(), kNegInf);
    for (std::size_t f = 0; f < cost.size(); ++f) {
      const double c = cost.values()[f];
      if (std::isinf(c)) continue;
      double v = -c / epsilon;
      for (std::size_t k = 0; k < constraints.size(); ++k) {
        if (k != skip) v += log_u[k][slot(k, f)];
      }
      lp.values()[f] = v;
    }
    return lp;
  };

  DenseResult result;
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t k = 0; k < constraints.size(); ++k) {
      const auto& c = constraints[k];
      const auto lp = log_plan(k);
      const std::size_t bins = log_u[k].size();
      const auto logp = detail::grouped_logsumexp(lp, bins, [&](std::size_t f) { return slot(k, f); });
      for (std::size_t b = 0; b < bins; ++b) {
        const double target = c.kind == ConstraintKind::Joint ? c.joint.data()[b] : c.target[b];
        switch (c.kind) {
          case ConstraintKind::Equality:
          case ConstraintKind::Joint:
            if (target == 0.0) {
              log_u[k][b] = kNegInf;
            } else if (logp[b] == kNegInf) {
              throw Error(ErrorCode::UnreachableMass, "oracle target mass on an unreachable bin");
            } else {
              log_u[k][b] = std::log(target) - logp[b];
            }
            break;
          case ConstraintKind::UpperBound:
            if (logp[b] == kNegInf || std::isinf(target)) {
              log_u[k][b] = 0.0;
            } else if (target == 0.0) {
              log_u[k][b] = kNegInf;
            } else {
              log_u[k][b] = std::min(std::log(target) - logp[b], 0.0);
            }
            break;
        }
      }
    }
    DenseTensor plan = log_plan(constraints.size());
    for (double& v : plan.values()) v = std::exp(v);
    result.objective_trace.push_back(transport_cost(cost, plan) - epsilon * entropy(plan));
    result.plan = std::move(plan);
  }
  if (sweeps == 0) {
    result.plan = log_plan(constraints.size());
    for (double& v : result.plan.values()) v = std::exp(v);
  }
  return result;
}

}  // namespace dat::oracle

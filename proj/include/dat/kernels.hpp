#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "dat/error.hpp"
#include "dat/grid.hpp"
#include "dat/matrix.hpp"

namespace dat {

/// Gibbs kernel of the reciprocal-gap transit cost w / (t - s) on one edge.
/// Entries with index(t) <= index(s) are zero (-inf in the log representation).
struct PairKernel {
  TimeGrid grid;
  double weight;
  double epsilon;
  Matrix k;      // K[s,t]
  Matrix log_k;  // log K[s,t]
};

inline PairKernel build_pair_kernel(const TimeGrid& grid, double weight, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error(ErrorCode::BadParam, "epsilon must be positive");
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw Error(ErrorCode::BadParam, "edge weight must be nonnegative");
  const std::size_t n = grid.size();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  PairKernel k{grid, weight, epsilon, Matrix(n, n, 0.0), Matrix(n, n, kNegInf)};
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = s + 1; t < n; ++t) {
      const double gap = static_cast<double>(t - s) * grid.dt();
      const double logk = -weight / (epsilon * gap);
      k.log_k(s, t) = logk;
      k.k(s, t) = std::exp(logk);
    }
  }
  return k;
}

/// Underflow guard: kernels with epsilon < 0.05 * w_max * t_f are handled in log space.
inline bool kernel_needs_log_domain(const TimeGrid& grid, double max_weight, double epsilon) {
  return epsilon < 0.05 * max_weight * grid.horizon();
}

/// Sum of w_l / (t_l - t_{l-1}) along a path.
inline double path_cost(std::span<const double> weights, std::span<const double> times) {
  if (times.size() != weights.size() + 1) throw Error(ErrorCode::BadParam, "need one more time than weights");
  double cost = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const double gap = times[l + 1] - times[l];
    if (!(gap > 0.0)) throw Error(ErrorCode::NonIncreasingTimes, "times must be strictly increasing");
    cost += weights[l] / gap;
  }
  return cost;
}

inline double path_cost(std::initializer_list<double> weights, std::initializer_list<double> times) {
  return path_cost(std::span<const double>(weights.begin(), weights.size()),
                   std::span<const double>(times.begin(), times.size()));
}

/// Two departure times t < t2 and two arrival times s < s2.
struct Quadruple {
  double t;
  double t2;
  double s;
  double s2;
};

struct MongeReport {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t zero = 0;
  double min_difference = std::numeric_limits<double>::infinity();
  double max_difference = -std::numeric_limits<double>::infinity();

  std::size_t total() const noexcept { return positive + negative + zero; }
  // Every cross-difference carries the same (weak) sign.
  bool single_sign() const noexcept { return positive == 0 || negative == 0; }
};

using PairCost = std::function<double(double, double)>;

/// Cross-differences c(t,s) + c(t',s') - c(t,s') - c(t',s) over the samples.
/// Nonpositive everywhere means pairing early with early is never beaten by a
/// swap (co-monotone optimal couplings).
inline MongeReport check_generalized_monge(const PairCost& cost, std::span<const Quadruple> samples,
                                           double zero_tol = 0.0) {
  MongeReport r;
  for (const auto& q : samples) {
    const double d = cost(q.t, q.s) + cost(q.t2, q.s2) - cost(q.t, q.s2) - cost(q.t2, q.s);
    r.min_difference = std::min(r.min_difference, d);
    r.max_difference = std::max(r.max_difference, d);
    if (d > zero_tol) {
      ++r.positive;
    } else if (d < -zero_tol) {
      ++r.negative;
    } else {
      ++r.zero;
    }
  }
  return r;
}

/// Quadruples with t < t' < s < s' drawn uniformly on [0, horizon]: the region
/// where a reciprocal-gap cost w / (s - t) is finite for all four pairings.
inline std::vector<Quadruple> sample_ordered_quadruples(double horizon, std::size_t count,
                                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, horizon);
  std::vector<Quadruple> out;
  out.reserve(count);
  while (out.size() < count) {
    std::array<double, 4> x{unif(rng), unif(rng), unif(rng), unif(rng)};
    std::sort(x.begin(), x.end());
    if (!(x[0] < x[1] && x[1] < x[2] && x[2] < x[3])) continue;
    out.push_back({x[0], x[1], x[2], x[3]});
  }
  return out;
}

/// Departure/arrival pair with two candidate crossing times.
struct TwistSample {
  double t0;
  double t1;
  double t1_alt;
  double t2;
};

struct TwistEntry {
  std::array<double, 2> grad;      // (dc/dt0, dc/dt2) at t1
  std::array<double, 2> grad_alt;  // same at t1_alt
  std::array<double, 2> difference;
  std::array<double, 2> mixed;     // (d2c/dt0dt1, d2c/dt2dt1) at t1
  double fd_rel_error;             // analytic vs central differences, gradient and mixed
  bool injective;                  // difference nonzero, or t1 == t1_alt
};

struct TwistReport {
  std::vector<TwistEntry> entries;
  double max_fd_rel_error = 0.0;
  bool all_injective = true;
  bool all_nondegenerate = true;  // mixed-partial vector has full rank (=1)
};

/// Gradient of c(t0,t1,t2) = w01/(t1-t0) + w12/(t2-t1) with respect to the
/// departure-arrival pair (t0, t2).
inline std::array<double, 2> da_gradient(std::array<double, 2> w, double t0, double t1, double t2) {
  const double a = t1 - t0;
  const double b = t2 - t1;
  return {w[0] / (a * a), -w[1] / (b * b)};
}

/// Mixed partials d/dt1 of da_gradient.
inline std::array<double, 2> da_mixed_partials(std::array<double, 2> w, double t0, double t1, double t2) {
  const double a = t1 - t0;
  const double b = t2 - t1;
  return {-2.0 * w[0] / (a * a * a), -2.0 * w[1] / (b * b * b)};
}

/// Checks injectivity of t1 -> grad_{(t0,t2)} c and the rank of the mixed
/// Hessian block, cross-checking both against central finite differences.
inline TwistReport check_xtwist(std::array<double, 2> w, std::span<const TwistSample> samples,
                                double fd_step = 1e-5) {
  auto cost = [&](double t0, double t1, double t2) { return w[0] / (t1 - t0) + w[1] / (t2 - t1); };
  auto rel = [](double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-300);
  };
  TwistReport report;
  for (const auto& s : samples) {
    if (!(s.t0 < s.t1 && s.t1 < s.t2 && s.t0 < s.t1_alt && s.t1_alt < s.t2)) {
      throw Error(ErrorCode::NonIncreasingTimes, "twist samples must satisfy t0 < t1 < t2");
    }
    TwistEntry e{};
    e.grad = da_gradient(w, s.t0, s.t1, s.t2);
    e.grad_alt = da_gradient(w, s.t0, s.t1_alt, s.t2);
    e.difference = {e.grad[0] - e.grad_alt[0], e.grad[1] - e.grad_alt[1]};
    e.mixed = da_mixed_partials(w, s.t0, s.t1, s.t2);

    const double h = fd_step;
    const double g0 = (cost(s.t0 + h, s.t1, s.t2) - cost(s.t0 - h, s.t1, s.t2)) / (2 * h);
    const double g2 = (cost(s.t0, s.t1, s.t2 + h) - cost(s.t0, s.t1, s.t2 - h)) / (2 * h);
    // mixed partials by differencing the analytic gradient in t1
    const double m0 = (da_gradient(w, s.t0, s.t1 + h, s.t2)[0] - da_gradient(w, s.t0, s.t1 - h, s.t2)[0]) / (2 * h);
    const double m2 = (da_gradient(w, s.t0, s.t1 + h, s.t2)[1] - da_gradient(w, s.t0, s.t1 - h, s.t2)[1]) / (2 * h);
    e.fd_rel_error = std::max({rel(e.grad[0], g0), rel(e.grad[1], g2), rel(e.mixed[0], m0), rel(e.mixed[1], m2)});

    const bool same = s.t1 == s.t1_alt;
    e.injective = same ? (e.difference[0] == 0.0 && e.difference[1] == 0.0)
                       : (e.difference[0] != 0.0 || e.difference[1] != 0.0);
    report.max_fd_rel_error = std::max(report.max_fd_rel_error, e.fd_rel_error);
    report.all_injective = report.all_injective && e.injective;
    report.all_nondegenerate = report.all_nondegenerate && (e.mixed[0] != 0.0 || e.mixed[1] != 0.0);
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace dat

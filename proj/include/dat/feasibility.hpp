#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "dat/error.hpp"
#include "dat/grid.hpp"

namespace dat {

// Slack below which a CDF deficit still counts as dominance.
inline constexpr double kDominanceSlack = 1e-12;

struct FeasibilityVerdict {
  bool feasible = false;
  std::optional<double> violation_time;  // first bin center with F0(t) < FT(t + delta); 0 if arrivals precede delta
  double margin = 0.0;                   // min_t F0(t) - FT(t + delta)
  std::size_t shift_bins = 0;
};

/// Whole-bin offset used for a physical minimum travel time; rounds up so the
/// grid test never accepts a pair that the continuous test would reject.
inline std::size_t shift_in_bins(const TimeGrid& grid, double delta) {
  if (!(delta >= 0.0)) throw Error(ErrorCode::BadParam, "travel time must be nonnegative");
  const double bins = delta / grid.dt();
  return static_cast<std::size_t>(std::ceil(bins - 1e-9));
}

/// Departure law must dominate the delta-shifted arrival law: F0(t) >= FT(t + delta).
inline FeasibilityVerdict check_da_feasibility(const Measure& mu0, const Measure& muT, double delta) {
  if (!(mu0.grid() == muT.grid())) throw Error(ErrorCode::GridMismatch, "marginals on different grids");
  if (!mu0.is_probability() || !muT.is_probability()) {
    throw Error(ErrorCode::NonProbability, "feasibility test expects probability measures");
  }
  const auto& grid = mu0.grid();
  const std::size_t shift = shift_in_bins(grid, delta);
  const auto f0 = cdf(mu0);
  const auto fT = cdf(muT);

  FeasibilityVerdict v;
  v.shift_bins = shift;
  v.margin = std::numeric_limits<double>::infinity();
  // arrivals in the first `shift` bins have no admissible departure
  if (shift > 0) {
    const double early = fT[std::min(shift, grid.size()) - 1];
    v.margin = -early;
    if (early > kDominanceSlack) v.violation_time = 0.0;
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    // beyond the horizon all arrivals have happened
    const double arrived = (k + shift < grid.size()) ? fT[k + shift] : fT.back();
    const double gap = f0[k] - arrived;
    if (gap < v.margin) v.margin = gap;
    if (gap < -kDominanceSlack && !v.violation_time) v.violation_time = grid.center(k);
  }
  v.feasible = v.margin >= -kDominanceSlack;
  return v;
}

struct TripletCell {
  std::size_t t0;
  std::size_t t1;
  std::size_t tT;
  double mass;
};

/// Discrete three-time coupling stored as sparse cells (bin indices).
struct TripletCoupling {
  TimeGrid grid;
  std::vector<TripletCell> cells;

  std::vector<double> marginal(int axis) const {
    std::vector<double> out(grid.size(), 0.0);
    for (const auto& c : cells) {
      const std::size_t k = axis == 0 ? c.t0 : (axis == 1 ? c.t1 : c.tT);
      out[k] += c.mass;
    }
    return out;
  }
};

/// Explicit feasible schedule through one intermediate node: departures and
/// arrivals paired by quantile level u, crossing time t1 = t0 + gap + s with the
/// waiting time s spread uniformly over [0, 1/rate]. Both u and s are sampled
/// at stratum midpoints on an n_samples x n_samples lattice.
inline TripletCoupling quantile_coupling_witness(const Measure& mu0, const Measure& muT, double delta,
                                                 double transit_gap, double rate,
                                                 std::size_t n_samples) {
  if (n_samples < 1) throw Error(ErrorCode::BadParam, "need at least one sample");
  if (!(rate > 0.0) || !(transit_gap >= 0.0)) throw Error(ErrorCode::BadParam, "bad witness parameters");
  if (transit_gap + 1.0 / rate >= delta) {
    throw Error(ErrorCode::InfeasiblePrecondition, "transit gap plus 1/rate must be below delta");
  }
  const auto verdict = check_da_feasibility(mu0, muT, delta);
  if (!verdict.feasible) throw Error(ErrorCode::InfeasiblePrecondition, "DA pair is not delta-feasible");

  const auto& grid = mu0.grid();
  const double n = static_cast<double>(n_samples);
  const double weight = 1.0 / (n * n);
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> acc;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / n;
    const std::size_t b0 = quantile_bin(mu0, u);
    const std::size_t bT = quantile_bin(muT, u);
    const double t0 = grid.center(b0);
    for (std::size_t j = 0; j < n_samples; ++j) {
      const double s = (static_cast<double>(j) + 0.5) / n / rate;
      const std::size_t b1 = grid.bin_of(t0 + transit_gap + s);
      acc[{b0, b1, bT}] += weight;
    }
  }
  TripletCoupling out{grid, {}};
  out.cells.reserve(acc.size());
  for (const auto& [key, mass] : acc) {
    out.cells.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), mass});
  }
  return out;
}

struct PairCell {
  std::size_t src;
  std::size_t dst;
  double mass;
};

/// CDF-matching (north-west corner) coupling of two measures with equal totals.
/// Its support is co-monotone: no two cells cross.
inline std::vector<PairCell> monotone_rearrangement(const Measure& src, const Measure& dst) {
  if (!(src.grid() == dst.grid())) throw Error(ErrorCode::GridMismatch, "measures on different grids");
  const double total = src.total();
  if (std::abs(total - dst.total()) > 1e-12 * std::max(1.0, total)) {
    throw Error(ErrorCode::MassMismatch, "rearrangement needs equal totals");
  }
  std::vector<PairCell> cells;
  std::vector<double> a(src.mass().begin(), src.mass().end());
  std::vector<double> b(dst.mass().begin(), dst.mass().end());
  std::size_t i = 0;
  std::size_t j = 0;
  const std::size_t n = a.size();
  while (i < n && j < n) {
    if (a[i] <= 0.0) { ++i; continue; }
    if (b[j] <= 0.0) { ++j; continue; }
    const double moved = std::min(a[i], b[j]);
    cells.push_back({i, j, moved});
    a[i] -= moved;
    b[j] -= moved;
    // exhaust whichever side is (numerically) spent
    if (a[i] <= 1e-15 * total) { a[i] = 0.0; }
    if (b[j] <= 1e-15 * total) { b[j] = 0.0; }
  }
  return cells;
}

}  // namespace dat

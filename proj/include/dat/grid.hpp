#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dat/error.hpp"
#include "dat/matrix.hpp"

namespace dat {

/// Uniform discretization of [0, t_f] into n_t bins; bin k is represented
/// by its center (k + 1/2) * dt.
class TimeGrid {
 public:
  TimeGrid(double t_f, std::size_t n_t) : t_f_(t_f), n_t_(n_t) {
    if (!(t_f > 0.0) || !std::isfinite(t_f)) {
      throw Error(ErrorCode::BadParam, "time horizon must be positive");
    }
    if (n_t < 2) throw Error(ErrorCode::BadParam, "grid needs at least two bins");
  }

  double horizon() const noexcept { return t_f_; }
  std::size_t size() const noexcept { return n_t_; }
  double dt() const noexcept { return t_f_ / static_cast<double>(n_t_); }
  double center(std::size_t k) const noexcept { return (static_cast<double>(k) + 0.5) * dt(); }

  // Bin containing time t, clamped to the grid.
  std::size_t bin_of(double t) const noexcept {
    if (t <= 0.0) return 0;
    const auto k = static_cast<std::size_t>(std::floor(t / dt()));
    return std::min(k, n_t_ - 1);
  }

  std::vector<double> centers() const {
    std::vector<double> out(n_t_);
    for (std::size_t k = 0; k < n_t_; ++k) out[k] = center(k);
    return out;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
    return a.n_t_ == b.n_t_ && a.t_f_ == b.t_f_;
  }

 private:
  double t_f_;
  std::size_t n_t_;
};

/// Nonnegative mass per grid bin.
class Measure {
 public:
  Measure(TimeGrid grid, std::vector<double> mass) : grid_(grid), mass_(std::move(mass)) {
    if (mass_.size() != grid_.size()) {
      throw Error(ErrorCode::GridMismatch, "measure length does not match grid");
    }
    for (double m : mass_) {
      if (!(m >= 0.0) || !std::isfinite(m)) {
        throw Error(ErrorCode::BadParam, "measure entries must be finite and nonnegative");
      }
    }
  }

  static Measure dirac(TimeGrid grid, std::size_t bin, double total = 1.0) {
    std::vector<double> mass(grid.size(), 0.0);
    mass.at(bin) = total;
    return {grid, std::move(mass)};
  }

  static Measure uniform(TimeGrid grid) {
    return {grid, std::vector<double>(grid.size(), 1.0 / static_cast<double>(grid.size()))};
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return mass_.size(); }
  std::span<const double> mass() const noexcept { return mass_; }
  double operator[](std::size_t k) const noexcept { return mass_[k]; }
  double total() const noexcept { return std::accumulate(mass_.begin(), mass_.end(), 0.0); }

  bool is_probability(double tol = 1e-9) const noexcept { return std::abs(total() - 1.0) <= tol; }

  // Translate by a whole number of bins; mass pushed past the horizon is lost.
  Measure shifted(std::size_t bins) const {
    std::vector<double> out(mass_.size(), 0.0);
    for (std::size_t k = 0; k + bins < mass_.size(); ++k) out[k + bins] = mass_[k];
    return {grid_, std::move(out)};
  }

 private:
  TimeGrid grid_;
  std::vector<double> mass_;
};

/// Nonnegative mass per pair of bins, rows indexing the first time.
class JointMeasure {
 public:
  JointMeasure(TimeGrid grid, Matrix mass) : grid_(grid), mass_(std::move(mass)) {
    if (mass_.rows() != grid_.size() || mass_.cols() != grid_.size()) {
      throw Error(ErrorCode::GridMismatch, "joint measure shape does not match grid");
    }
    for (double m : mass_.data()) {
      if (!(m >= 0.0) || !std::isfinite(m)) {
        throw Error(ErrorCode::BadParam, "joint measure entries must be finite and nonnegative");
      }
    }
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const Matrix& mass() const noexcept { return mass_; }
  double total() const noexcept {
    return std::accumulate(mass_.data().begin(), mass_.data().end(), 0.0);
  }

  Measure first_marginal() const {
    std::vector<double> out(grid_.size(), 0.0);
    for (std::size_t i = 0; i < grid_.size(); ++i)
      for (std::size_t j = 0; j < grid_.size(); ++j) out[i] += mass_(i, j);
    return {grid_, std::move(out)};
  }

  Measure second_marginal() const {
    std::vector<double> out(grid_.size(), 0.0);
    for (std::size_t i = 0; i < grid_.size(); ++i)
      for (std::size_t j = 0; j < grid_.size(); ++j) out[j] += mass_(i, j);
    return {grid_, std::move(out)};
  }

 private:
  TimeGrid grid_;
  Matrix mass_;
};

/// Cumulative mass F(t_k) = sum of mass over bins 0..k.
inline std::vector<double> cdf(const Measure& m) {
  std::vector<double> out(m.size());
  std::partial_sum(m.mass().begin(), m.mass().end(), out.begin());
  return out;
}

/// Index of the smallest bin whose cumulative mass reaches u (left-continuous
/// generalized inverse restricted to the grid).
inline std::size_t quantile_bin(const Measure& m, double u) {
  if (!m.is_probability()) {
    throw Error(ErrorCode::NonProbability, "quantile requires total mass 1");
  }
  if (!(u > 0.0) || u > 1.0) throw Error(ErrorCode::BadParam, "quantile level must lie in (0,1]");
  const auto f = cdf(m);
  // Cumulative rounding can leave F(last) a hair below 1.
  const double level = std::min(u, f.back());
  const auto it = std::lower_bound(f.begin(), f.end(), level);
  return static_cast<std::size_t>(std::distance(f.begin(), it));
}

inline double quantile(const Measure& m, double u) { return m.grid().center(quantile_bin(m, u)); }

struct MixtureComponent {
  double weight;
  double mean;
  double stddev;
};

/// Gaussian mixture density evaluated at bin centers and renormalized to
/// unit mass. Evaluation runs in log space, so a component much narrower than
/// a bin collapses onto the bin containing its mean instead of underflowing.
inline Measure gaussian_mixture(const TimeGrid& grid, std::span<const MixtureComponent> components) {
  if (components.empty()) throw Error(ErrorCode::BadMixture, "mixture has no components");
  for (const auto& c : components) {
    if (!(c.weight >= 0.0)) throw Error(ErrorCode::BadMixture, "negative mixture weight");
    if (!(c.stddev > 0.0)) throw Error(ErrorCode::BadMixture, "nonpositive mixture stddev");
  }

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> log_density(grid.size(), kNegInf);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double peak = kNegInf;
    std::vector<double> terms;
    terms.reserve(components.size());
    for (const auto& c : components) {
      if (c.weight == 0.0) continue;
      const double z = (grid.center(k) - c.mean) / c.stddev;
      terms.push_back(std::log(c.weight) - std::log(c.stddev) - 0.5 * z * z);
      peak = std::max(peak, terms.back());
    }
    if (peak == kNegInf) continue;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - peak);
    log_density[k] = peak + std::log(acc);
  }
  const double top = *std::max_element(log_density.begin(), log_density.end());
  if (top == kNegInf) throw Error(ErrorCode::BadMixture, "mixture weights sum to zero");

  std::vector<double> mass(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) mass[k] = std::exp(log_density[k] - top);
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (double& m : mass) m /= total;
  return {grid, std::move(mass)};
}

inline Measure gaussian_mixture(const TimeGrid& grid, std::initializer_list<MixtureComponent> components) {
  return gaussian_mixture(grid, std::span<const MixtureComponent>(components.begin(), components.size()));
}

}  // namespace dat

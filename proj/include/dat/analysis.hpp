#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dat/error.hpp"

namespace dat {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y ~ slope * x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::BadParam, "line fit needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

/// Number of pairs (i, j) whose coordinates cross: (a_j - a_i)(b_j - b_i) < 0.
template <class Cells, class A, class B>
std::size_t count_crossings(const Cells& cells, A coord_a, B coord_b) {
  std::size_t crossings = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      const double da = static_cast<double>(coord_a(cells[j])) - static_cast<double>(coord_a(cells[i]));
      const double db = static_cast<double>(coord_b(cells[j])) - static_cast<double>(coord_b(cells[i]));
      if (da * db < 0.0) ++crossings;
    }
  }
  return crossings;
}

}  // namespace dat

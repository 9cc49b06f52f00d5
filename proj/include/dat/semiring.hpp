#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "dat/kernels.hpp"
#include "dat/matrix.hpp"

namespace dat {

// Arithmetic policies for chain message passing. Both operate on pair kernels
// that vanish on and below the diagonal, so sums only run over s < t.

struct LinearDomain {
  static constexpr bool is_log = false;
  static constexpr const char* name = "linear";

  static double zero() noexcept { return 0.0; }
  static double one() noexcept { return 1.0; }
  static double from_log(double x) noexcept { return std::exp(x); }
  static double to_linear(double x) noexcept { return x; }
  static double to_log(double x) noexcept { return std::log(x); }
  static double mul(double a, double b) noexcept { return a * b; }
  static bool is_zero(double x) noexcept { return x == 0.0; }
  static const Matrix& kernel(const PairKernel& k) noexcept { return k.k; }

  static double sum(std::span<const double> x) noexcept {
    double acc = 0.0;
    for (double v : x) acc += v;
    return acc;
  }

  // out[t] = sum_{s<t} x[s] K[s,t]
  static void forward(std::span<const double> x, const Matrix& k, std::span<double> out) noexcept {
    const std::size_t n = out.size();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double xs = x[s];
      if (xs == 0.0) continue;
      const auto row = k.row(s);
      for (std::size_t t = s + 1; t < n; ++t) out[t] += xs * row[t];
    }
  }

  // out[s] = sum_{t>s} K[s,t] y[t]
  static void backward(const Matrix& k, std::span<const double> y, std::span<double> out) noexcept {
    const std::size_t n = out.size();
    for (std::size_t s = 0; s < n; ++s) {
      const auto row = k.row(s);
      double acc = 0.0;
      for (std::size_t t = s + 1; t < n; ++t) acc += row[t] * y[t];
      out[s] = acc;
    }
  }

  // C = A B
  static Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      auto ci = c.row(i);
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        const auto bk = b.row(k);
        for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
      }
    }
    return c;
  }

  // C = A B^T
  static Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const auto ai = a.row(i);
      for (std::size_t j = 0; j < b.rows(); ++j) {
        const auto bj = b.row(j);
        double acc = 0.0;
        for (std::size_t k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
        c(i, j) = acc;
      }
    }
    return c;
  }
};

struct LogDomain {
  static constexpr bool is_log = true;
  static constexpr const char* name = "log";
  static constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  static double zero() noexcept { return kNegInf; }
  static double one() noexcept { return 0.0; }
  static double from_log(double x) noexcept { return x; }
  static double to_linear(double x) noexcept { return std::exp(x); }
  static double to_log(double x) noexcept { return x; }
  static double mul(double a, double b) noexcept { return a + b; }
  static bool is_zero(double x) noexcept { return x == kNegInf; }
  static const Matrix& kernel(const PairKernel& k) noexcept { return k.log_k; }

  static double sum(std::span<const double> x) noexcept {
    double peak = kNegInf;
    for (double v : x) peak = std::max(peak, v);
    if (peak == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - peak);
    return peak + std::log(acc);
  }

  static void forward(std::span<const double> x, const Matrix& k, std::span<double> out) noexcept {
    const std::size_t n = out.size();
    for (std::size_t t = 0; t < n; ++t) {
      double peak = kNegInf;
      for (std::size_t s = 0; s < t; ++s) peak = std::max(peak, x[s] + k(s, t));
      if (peak == kNegInf) {
        out[t] = kNegInf;
        continue;
      }
      double acc = 0.0;
      for (std::size_t s = 0; s < t; ++s) acc += std::exp(x[s] + k(s, t) - peak);
      out[t] = peak + std::log(acc);
    }
  }

  static void backward(const Matrix& k, std::span<const double> y, std::span<double> out) noexcept {
    const std::size_t n = out.size();
    for (std::size_t s = 0; s < n; ++s) {
      const auto row = k.row(s);
      double peak = kNegInf;
      for (std::size_t t = s + 1; t < n; ++t) peak = std::max(peak, row[t] + y[t]);
      if (peak == kNegInf) {
        out[s] = kNegInf;
        continue;
      }
      double acc = 0.0;
      for (std::size_t t = s + 1; t < n; ++t) acc += std::exp(row[t] + y[t] - peak);
      out[s] = peak + std::log(acc);
    }
  }

  static Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols(), kNegInf);
    std::vector<double> terms(a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < b.cols(); ++j) {
        for (std::size_t k = 0; k < a.cols(); ++k) terms[k] = a(i, k) + b(k, j);
        c(i, j) = sum(terms);
      }
    }
    return c;
  }

  static Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.rows(), kNegInf);
    std::vector<double> terms(a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
      const auto ai = a.row(i);
      for (std::size_t j = 0; j < b.rows(); ++j) {
        const auto bj = b.row(j);
        for (std::size_t k = 0; k < a.cols(); ++k) terms[k] = ai[k] + bj[k];
        c(i, j) = sum(terms);
      }
    }
    return c;
  }
};

}  // namespace dat

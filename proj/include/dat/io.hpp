#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dat/error.hpp"
#include "dat/grid.hpp"
#include "dat/kernels.hpp"
#include "dat/sinkhorn.hpp"

namespace dat::io {

/// Shortest round-trip text for a double; infinities print as "inf".
inline std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidScenario, "bad number '" + s + "' in CSV");
  }
  if (used != s.size()) throw Error(ErrorCode::InvalidScenario, "bad number '" + s + "' in CSV");
  return x;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  out << '\n';
}

// bin_center,mass,cap
inline void write_node_marginal(std::ostream& out, const TimeGrid& grid, const NodeMarginal& m) {
  write_row(out, {"bin_center", "mass", "cap"});
  for (std::size_t k = 0; k < grid.size(); ++k) {
    write_row(out, {format_number(grid.center(k)), format_number(m.mass[k]), format_number(m.cap[k])});
  }
}

// iter,E0,ET,V,objective
inline void write_trace(std::ostream& out, const ConvergenceReport& report) {
  write_row(out, {"iter", "E0", "ET", "V", "objective"});
  for (const auto& r : report.trace) {
    write_row(out, {std::to_string(r.iter), format_number(r.residual.e0), format_number(r.residual.eT),
                    format_number(r.residual.v), format_number(r.objective)});
  }
}

/// Plan cells as bin-center times, one column per path node: t0,t1,...,tT,mass.
inline void write_plan(std::ostream& out, const TimeGrid& grid, std::size_t path_length,
                       const std::vector<PlanCell>& cells) {
  std::vector<std::string> header;
  for (std::size_t l = 0; l < path_length; ++l) {
    header.push_back(l + 1 == path_length ? "tT" : "t" + std::to_string(l));
  }
  header.push_back("mass");
  write_row(out, header);
  for (const auto& c : cells) {
    std::vector<std::string> row;
    for (auto b : c.bins) row.push_back(format_number(grid.center(b)));
    row.push_back(format_number(c.mass));
    write_row(out, row);
  }
}

/// Dense kernel dump: s,t,K,logK for every ordered pair.
inline void write_kernel(std::ostream& out, const PairKernel& k) {
  write_row(out, {"s", "t", "K", "logK"});
  for (std::size_t s = 0; s < k.grid.size(); ++s) {
    for (std::size_t t = 0; t < k.grid.size(); ++t) {
      write_row(out, {format_number(k.grid.center(s)), format_number(k.grid.center(t)), format_number(k.k(s, t)),
                      format_number(k.log_k(s, t))});
    }
  }
}

/// Splits a CSV file into rows of fields; the first row is the header.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidScenario, "cannot read '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidScenario, "cannot write '" + path + "'");
  out << contents;
}

}  // namespace dat::io

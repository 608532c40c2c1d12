// SPDX-License-Identifier: Apache-2.0
//
// JSON config loaders. Problem files carry (dim, interval, breakpoints,
// P/Q/W per piece); real symmetric matrices may be written as lower
// triangles or full squares. Boundary conditions come either as explicit
// [A|B] matrices (entries real or [re,im]) or in chart form {K, S}.

#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slspec/bc.hpp"
#include "slspec/problem.hpp"

namespace slspec {

using json = nlohmann::json;

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw parse_error(path + ": " + e.what());
  }
  return j;
}

inline json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const std::exception& e) {
    throw parse_error(std::string("json: ") + e.what());
  }
}

namespace detail {

inline complex complex_entry(const json& v, const std::string& where) {
  if (v.is_number()) return complex(v.get<double>(), 0.0);
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return complex(v[0].get<double>(), v[1].get<double>());
  throw parse_error(where + ": entry must be a number or [re, im]");
}

// Lower-triangle rows (row i has i+1 entries) or a full square; result is
// symmetric real. Asymmetry up to 1e-12 relative is symmetrized with a
// warning, anything larger is rejected.
inline rmatrix symmetric_real_matrix(const json& m, int dim, const std::string& where,
                                     std::vector<std::string>* warnings) {
  if (!m.is_array() || static_cast<int>(m.size()) != dim)
    throw parse_error(where + ": expected " + std::to_string(dim) + " rows");
  rmatrix out(dim, dim);
  bool lower = true, full = true;
  for (int i = 0; i < dim; ++i) {
    if (!m[i].is_array()) throw parse_error(where + ": row " + std::to_string(i));
    if (static_cast<int>(m[i].size()) != i + 1) lower = false;
    if (static_cast<int>(m[i].size()) != dim) full = false;
  }
  if (dim == 1) full = true;
  if (!lower && !full)
    throw parse_error(where + ": rows must form a lower triangle or a full square");
  if (lower && !full) {
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j) {
        if (!m[i][j].is_number()) throw parse_error(where + ": non-numeric entry");
        out(i, j) = out(j, i) = m[i][j].get<double>();
      }
    return out;
  }
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      if (!m[i][j].is_number()) throw parse_error(where + ": non-numeric entry");
      out(i, j) = m[i][j].get<double>();
    }
  const double asym = (out - out.transpose()).cwiseAbs().maxCoeff();
  if (asym > 0.0 && asym <= 1e-12 * std::max(1.0, out.cwiseAbs().maxCoeff()) && warnings)
    warnings->push_back(where + ": symmetrized (asymmetry " + std::to_string(asym) + ")");
  return out;  // make_field rejects larger asymmetry
}

inline cmatrix complex_matrix(const json& m, int rows, int cols, const std::string& where) {
  if (!m.is_array() || static_cast<int>(m.size()) != rows)
    throw parse_error(where + ": expected " + std::to_string(rows) + " rows");
  cmatrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!m[i].is_array() || static_cast<int>(m[i].size()) != cols)
      throw parse_error(where + ": row " + std::to_string(i) + " must have " +
                        std::to_string(cols) + " entries");
    for (int j = 0; j < cols; ++j)
      out(i, j) = complex_entry(m[i][j], where + "[" + std::to_string(i) + "]");
  }
  return out;
}

// Hermitian matrix: full square, or a lower triangle completed by conjugation.
inline cmatrix hermitian_matrix(const json& m, int n, const std::string& where) {
  if (!m.is_array() || static_cast<int>(m.size()) != n)
    throw parse_error(where + ": expected " + std::to_string(n) + " rows");
  bool lower = true;
  for (int i = 0; i < n; ++i)
    if (!m[i].is_array() || static_cast<int>(m[i].size()) != i + 1) lower = false;
  if (lower && n > 1) {
    cmatrix out(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        const complex v = complex_entry(m[i][j], where);
        out(i, j) = v;
        out(j, i) = std::conj(v);
        if (i == j && std::abs(v.imag()) > 1e-12 * std::max(1.0, std::abs(v)))
          throw parse_error(where + ": diagonal entries must be real");
      }
    return out;
  }
  return complex_matrix(m, n, n, where);
}

}  // namespace detail

inline coefficient_field problem_from_json(const json& j,
                                           std::vector<std::string>* warnings = nullptr) {
  if (!j.is_object()) throw parse_error("problem: expected an object");
  if (!j.contains("dim") || !j["dim"].is_number_integer())
    throw parse_error("problem: missing integer key 'dim'");
  const int dim = j["dim"].get<int>();
  if (!j.contains("interval") || !j["interval"].is_array() || j["interval"].size() != 2)
    throw parse_error("problem: missing key 'interval' = [a, b]");
  const double a = j["interval"][0].get<double>();
  const double b = j["interval"][1].get<double>();

  std::vector<double> grid;
  if (j.contains("breakpoints")) {
    for (const auto& t : j["breakpoints"]) grid.push_back(t.get<double>());
    if (grid.size() < 2 || std::abs(grid.front() - a) > 1e-12 * std::max(1.0, std::abs(a)) ||
        std::abs(grid.back() - b) > 1e-12 * std::max(1.0, std::abs(b)))
      throw parse_error("problem: breakpoints must run from a to b");
  } else {
    grid = {a, b};
  }
  const int pieces = static_cast<int>(grid.size()) - 1;

  auto read_pieces = [&](const char* key) {
    if (!j.contains(key)) throw parse_error(std::string("problem: missing key '") + key + "'");
    const json& arr = j[key];
    if (!arr.is_array() || static_cast<int>(arr.size()) != pieces)
      throw parse_error(std::string("problem: '") + key + "' must have one matrix per piece (" +
                        std::to_string(pieces) + ")");
    std::vector<rmatrix> out;
    for (int i = 0; i < pieces; ++i)
      out.push_back(detail::symmetric_real_matrix(
          arr[i], dim, std::string(key) + " piece " + std::to_string(i), warnings));
    return out;
  };

  return make_field(dim, grid, read_pieces("P"), read_pieces("Q"), read_pieces("W"));
}

inline coefficient_field load_problem(const std::string& path,
                                      std::vector<std::string>* warnings = nullptr) {
  return problem_from_json(read_json_file(path), warnings);
}

inline coefficient_field parse_problem(const std::string& text,
                                       std::vector<std::string>* warnings = nullptr) {
  return problem_from_json(parse_json_text(text), warnings);
}

inline boundary_condition bc_from_json(const json& j) {
  if (!j.is_object()) throw parse_error("bc: expected an object");
  if (!j.contains("dim") || !j["dim"].is_number_integer())
    throw parse_error("bc: missing integer key 'dim'");
  const int d = j["dim"].get<int>();
  const int two_d = 2 * d;
  if (j.contains("chart")) {
    const json& c = j["chart"];
    if (!c.contains("K") || !c["K"].is_array())
      throw parse_error("bc: chart form needs 'K' (1-based indices)");
    std::vector<int> K;
    for (const auto& k : c["K"]) K.push_back(k.get<int>());
    std::sort(K.begin(), K.end());
    if (!c.contains("S")) throw parse_error("bc: chart form needs 'S'");
    return chart_compose(K, detail::hermitian_matrix(c["S"], two_d, "chart S"));
  }
  if (!j.contains("A") || !j.contains("B"))
    throw parse_error("bc: need either 'chart' or both 'A' and 'B'");
  return validate(detail::complex_matrix(j["A"], two_d, two_d, "A"),
                  detail::complex_matrix(j["B"], two_d, two_d, "B"));
}

inline boundary_condition load_bc(const std::string& path) {
  return bc_from_json(read_json_file(path));
}

// Chart form, without composing: used where the chart coordinates themselves
// are the input (derivative and monotonicity checks).
inline chart_repr chart_from_json(const json& j) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("chart"))
    throw parse_error("chart: expected {dim, chart:{K,S}}");
  const int d = j["dim"].get<int>();
  const json& c = j["chart"];
  std::vector<int> K;
  for (const auto& k : c["K"]) K.push_back(k.get<int>());
  std::sort(K.begin(), K.end());
  chart_repr out;
  out.dim = d;
  out.K = K;
  out.S = detail::hermitian_matrix(c["S"], 2 * d, "chart S");
  return out;
}

inline chart_repr load_chart(const std::string& path) {
  return chart_from_json(read_json_file(path));
}

inline cmatrix hermitian_from_json(const json& j, const std::string& where = "H") {
  if (j.is_object() && j.contains("H")) {
    const json& h = j["H"];
    return detail::hermitian_matrix(h, static_cast<int>(h.size()), where);
  }
  if (j.is_array()) return detail::hermitian_matrix(j, static_cast<int>(j.size()), where);
  throw parse_error(where + ": expected {\"H\": [...]} or a bare matrix");
}

inline cmatrix load_hermitian(const std::string& path) {
  return hermitian_from_json(read_json_file(path));
}

}  // namespace slspec

#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dilatron/dilation.hpp"
#include "dilatron/error.hpp"
#include "dilatron/markov_core.hpp"
#include "dilatron/quantum.hpp"
#include "dilatron/simulator.hpp"

// JSON and CSV surfaces. States are 1-based on every external surface;
// map indices ℓ are 0-based labels.

namespace dilatron::io {

using json = nlohmann::json;

enum class MatrixFormat { Json, Csv };

/// {"n": int, "rows": [[...], ...]}
inline Eigen::MatrixXd parse_matrix_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("rows") || !doc["rows"].is_array()) {
    throw Error(ErrorCode::ParseError, "expected object with \"rows\" array");
  }
  const auto& rows = doc["rows"];
  const std::size_t n = rows.size();
  if (doc.contains("n") && (!doc["n"].is_number_integer() || doc["n"].get<std::size_t>() != n)) {
    throw Error(ErrorCode::ParseError, "\"n\" does not match number of rows");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!rows[i].is_array() || rows[i].size() != n) {
      throw Error(ErrorCode::NonSquare, "row " + std::to_string(i + 1) + " has wrong length");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!rows[i][j].is_number()) throw Error(ErrorCode::ParseError, "non-numeric entry in row " + std::to_string(i + 1));
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
    }
  }
  return m;
}

/// n rows of n comma-separated decimals. Blank lines are skipped; errors
/// name the 1-based line.
inline Eigen::MatrixXd parse_matrix_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      if (b == std::string::npos) throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": empty field");
      const std::string tok = cell.substr(b, e - b + 1);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": not a number: '" + tok + "'");
      row.push_back(v);
    }
    if (!line.empty() && line.back() == ',') throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": trailing comma");
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected " + std::to_string(rows.front().size()) + " fields, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::ParseError, "no rows");
  if (rows.size() != rows.front().size()) throw Error(ErrorCode::NonSquare, std::to_string(rows.size()) + " rows of " + std::to_string(rows.front().size()));
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline Eigen::MatrixXd read_matrix(const std::string& path, MatrixFormat format) {
  const std::string text = read_file(path);
  return format == MatrixFormat::Json ? parse_matrix_json(text) : parse_matrix_csv(text);
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return {{"n", m.rows()}, {"rows", std::move(rows)}};
}

inline json image_json(const DeterministicMap& beta) {
  json img = json::array();
  for (State s : beta.image()) img.push_back(s + 1);
  return img;
}

/// {"atoms": [{"index", "image", "weight"}, ...]}
inline json decomposition_json(const Decomposition& d) {
  json atoms = json::array();
  for (const auto& a : d.atoms) atoms.push_back({{"index", a.map.index()}, {"image", image_json(a.map)}, {"weight", a.weight}});
  return {{"n", d.n}, {"atoms", std::move(atoms)}};
}

inline Decomposition decomposition_from_json(const json& j) {
  try {
    Decomposition d{j.at("n").get<std::size_t>(), {}};
    for (const auto& a : j.at("atoms")) {
      std::vector<State> image;
      for (const auto& s : a.at("image")) {
        const auto v = s.get<long long>();
        if (v < 1 || static_cast<std::size_t>(v) > d.n) throw Error(ErrorCode::ParseError, "image state out of range");
        image.push_back(static_cast<State>(v - 1));
      }
      auto map = DeterministicMap::from_image(std::move(image));
      if (a.contains("index") && a["index"].get<MapIndex>() != map.index()) throw Error(ErrorCode::ParseError, "index does not match image");
      d.atoms.push_back({std::move(map), a.at("weight").get<double>()});
    }
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline json mark_json(const Mark& g) { return {{"j", g.j + 1}, {"ell", g.ell}}; }

inline Mark mark_from_json(const json& j) {
  const auto js = j.at("j").get<long long>();
  if (js < 1) throw Error(ErrorCode::ParseError, "mark j must be >= 1");
  return {static_cast<State>(js - 1), j.at("ell").get<MapIndex>()};
}

/// {"n", "lambda", "q": [{"j", "ell", "weight"}], "coupling": {"prescribed_only", "table"?}}
/// The table lists φ(i, g) for every domain point in lexicographic order of
/// (i, j, ℓ), each as [i', j', ℓ'].
inline json dilation_json(const Dilation& d, bool include_table = true) {
  json q = json::array();
  for (const auto& w : d.law.support()) {
    json e = mark_json(w.mark);
    e["weight"] = w.weight;
    q.push_back(std::move(e));
  }
  json coupling = {{"prescribed_only", !d.coupling.is_dense()}};
  if (d.coupling.is_dense() && include_table) {
    json table = json::array();
    for (auto x : d.coupling.forward_table()) {
      const auto p = d.coupling.decode(x);
      table.push_back({p.state + 1, p.mark.j + 1, p.mark.ell});
    }
    coupling["table"] = std::move(table);
  }
  return {{"n", d.states()}, {"lambda", d.law.rate()}, {"q", std::move(q)}, {"coupling", std::move(coupling)}};
}

inline json time_json(Time t) {
  if (t == Time::infinity()) return "inf";
  if (t == Time::neg_infinity()) return "-inf";
  return t.seconds();
}

inline Time time_from_json(const json& j) {
  if (j.is_null()) throw Error(ErrorCode::ParseError, "null time");
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return Time::infinity();
    if (s == "-inf") return Time::neg_infinity();
    throw Error(ErrorCode::ParseError, "bad time '" + s + "'");
  }
  return Time::from_seconds(j.get<double>());
}

/// {"window": [lo, hi], "points": [{"j", "ell", "t"}, ...]}
inline json configuration_json(const MarkedConfiguration& c) {
  json pts = json::array();
  for (const auto& p : c.points()) {
    json e = mark_json(p.mark);
    e["t"] = p.time.seconds();
    pts.push_back(std::move(e));
  }
  return {{"window", {time_json(c.window_lo()), time_json(c.window_hi())}}, {"points", std::move(pts)}};
}

inline MarkedConfiguration configuration_from_json(const json& j) {
  try {
    std::vector<MarkedPoint> pts;
    for (const auto& p : j.at("points")) pts.push_back({mark_from_json(p), time_from_json(p.at("t"))});
    const auto& w = j.at("window");
    return MarkedConfiguration(std::move(pts), time_from_json(w.at(0)), time_from_json(w.at(1)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline json trajectory_json(const Trajectory& t) {
  json jumps = json::array();
  for (const auto& j : t.jumps) {
    json e = mark_json(j.mark);
    e["t"] = j.time.seconds();
    e["state"] = j.state + 1;
    jumps.push_back(std::move(e));
  }
  return {{"initial", t.initial + 1}, {"horizon", t.horizon.seconds()}, {"jumps", std::move(jumps)}};
}

inline json complex_array(const Eigen::MatrixXcd& m) {
  // Row-major, interleaved re/im.
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      a.push_back(m(i, j).real());
      a.push_back(m(i, j).imag());
    }
  }
  return a;
}

inline json operator_json(const quantum::Operator& a) {
  return {{"dim", a.rows()}, {"basis", "canonical |i>, i = 1..dim"}, {"layout", "row-major, interleaved re/im"}, {"data", complex_array(a)}};
}

inline json superoperator_json(const quantum::Superoperator& s) {
  return {{"dim", s.dim()},
          {"matrix_dim", s.dim() * s.dim()},
          {"ordering", "column-stacking: vec(a)[i + j*dim] = a(i,j), 0-based"},
          {"layout", "row-major, interleaved re/im"},
          {"data", complex_array(s.matrix())}};
}

inline quantum::Operator operator_from_json(const json& j) {
  const auto d = j.at("dim").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (data.size() != static_cast<std::size_t>(2 * d * d)) throw Error(ErrorCode::ParseError, "operator data length");
  quantum::Operator a(d, d);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = 0; c < d; ++c, k += 2) a(r, c) = {data[k].get<double>(), data[k + 1].get<double>()};
  }
  return a;
}

inline json semigroup_report_json(const SemigroupReport& r) {
  return {{"k", r.k + 1},
          {"t", r.t},
          {"paths", r.paths},
          {"empirical", r.empirical},
          {"exact", r.exact},
          {"max_abs_dev", r.max_abs_dev},
          {"max_z", r.max_z},
          {"chi2", std::isfinite(r.chi2) ? json(r.chi2) : json("inf")},
          {"p_value", r.p_value},
          {"se_factor", r.se_factor},
          {"alpha", r.alpha},
          {"verdict", r.pass ? "pass" : "fail"}};
}

}  // namespace dilatron::io

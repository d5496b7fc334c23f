#pragma once

// File formats: JSON measures/problems (nlohmann) and the small CSV schemas
// used by the command-line tool (measures, transport plans, region curves,
// iteration trajectories).

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "partrans/measure.hpp"

namespace partrans {

using nlohmann::json;

// Uniform numeric formatting so identical runs emit identical bytes.
inline std::string fmt(double v) {
  if (v == 0.0) v = 0.0;  // normalize -0
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open file for writing: " + path);
  out << body;
}

// ---- JSON measure schema -------------------------------------------------
// { "dim": d, "points": [[id, x1, ..., xd], ...], "weights": [w1, ...] }

inline DiscreteMeasure measure_from_json(const json& j) {
  require(j.contains("dim") && j.contains("points") && j.contains("weights"),
          "measure json needs dim/points/weights");
  int dim = j.at("dim").get<int>();
  std::vector<int> ids;
  Mat pts;
  for (const auto& row : j.at("points")) {
    require(static_cast<int>(row.size()) == dim + 1,
            "measure json: point row must be [id, x1..xd]");
    ids.push_back(row.at(0).get<int>());
    Vec p(dim);
    for (int d = 0; d < dim; ++d) p[d] = row.at(d + 1).get<double>();
    pts.push_back(std::move(p));
  }
  Vec w = j.at("weights").get<Vec>();
  return DiscreteMeasure(dim, std::move(ids), std::move(pts), std::move(w));
}

inline json measure_to_json(const DiscreteMeasure& mu) {
  json j;
  j["dim"] = mu.dim;
  json pts = json::array();
  for (int k = 0; k < mu.size(); ++k) {
    json row = json::array();
    row.push_back(mu.ids[k]);
    for (double x : mu.points[k]) row.push_back(x);
    pts.push_back(std::move(row));
  }
  j["points"] = std::move(pts);
  j["weights"] = mu.weights;
  return j;
}

inline DiscreteMeasure load_measure(const std::string& path) {
  std::string body = read_file(path);
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
    // header: id,x1,...,xd,weight
    std::istringstream in(body);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "empty csv: " + path);
    int ncols = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
    int dim = ncols - 2;
    require(dim >= 1, "measure csv needs id,x...,weight columns");
    std::vector<int> ids;
    Mat pts;
    Vec w;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string cell;
      std::getline(ls, cell, ',');
      ids.push_back(std::stoi(cell));
      Vec p(dim);
      for (int d = 0; d < dim; ++d) {
        std::getline(ls, cell, ',');
        p[d] = std::stod(cell);
      }
      std::getline(ls, cell, ',');
      w.push_back(std::stod(cell));
      pts.push_back(std::move(p));
    }
    return DiscreteMeasure(dim, std::move(ids), std::move(pts), std::move(w));
  }
  return measure_from_json(json::parse(body));
}

inline std::string measure_to_csv(const DiscreteMeasure& mu) {
  std::ostringstream out;
  out << "id";
  for (int d = 1; d <= mu.dim; ++d) out << ",x" << d;
  out << ",weight\n";
  for (int k = 0; k < mu.size(); ++k) {
    out << mu.ids[k];
    for (double x : mu.points[k]) out << ',' << fmt(x);
    out << ',' << fmt(mu.weights[k]) << '\n';
  }
  return out.str();
}

// ---- plan / curve / trajectory CSV ---------------------------------------

inline std::string plan_to_csv(const std::vector<PlanEntry>& plan) {
  std::ostringstream out;
  out << "i,j,mass\n";
  for (const auto& e : plan)
    out << e.i << ',' << e.j << ',' << fmt(e.mass) << '\n';
  return out.str();
}

inline json plan_to_json(const std::vector<PlanEntry>& plan) {
  json arr = json::array();
  for (const auto& e : plan) arr.push_back({{"i", e.i}, {"j", e.j}, {"mass", e.mass}});
  return arr;
}

inline std::string region_to_csv(const std::vector<std::array<double, 3>>& rows) {
  std::ostringstream out;
  out << "r,mJ,mP\n";
  for (const auto& row : rows)
    out << fmt(row[0]) << ',' << fmt(row[1]) << ',' << fmt(row[2]) << '\n';
  return out.str();
}

inline std::string trajectory_to_csv(const Vec& values) {
  std::ostringstream out;
  out << "iter,value\n";
  for (std::size_t k = 0; k < values.size(); ++k)
    out << k << ',' << fmt(values[k]) << '\n';
  return out.str();
}

// ---- generic helpers ------------------------------------------------------

inline Mat json_to_mat(const json& j) {
  Mat m;
  for (const auto& row : j) m.push_back(row.get<Vec>());
  return m;
}

inline json mat_to_json(const Mat& m) {
  json j = json::array();
  for (const auto& row : m) j.push_back(row);
  return j;
}

// Emit either pretty JSON or caller-provided CSV to stdout or --out.
inline void emit(const std::string& out_path, const std::string& body) {
  if (out_path.empty())
    std::fputs(body.c_str(), stdout);
  else
    write_file(out_path, body);
}

}  // namespace partrans

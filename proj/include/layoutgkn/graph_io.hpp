#pragma once

// JSON-lines graph files: one graph per line,
//   {"id": str, "nodes": [{"category": int, "shape": [6 floats], "polygon": [[x,y],...]}],
//    "edges": [{"u": int, "v": int, "kind": "door"|"wall"}]}

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "graph.hpp"
#include "json.hpp"

namespace lgkn {

struct Rejection {
  std::size_t record = 0;  // 1-based line number
  std::string id;
  ValidationReport violations;
};

struct ReadResult {
  std::vector<FloorPlanGraph> graphs;
  std::vector<Rejection> rejected;
};

inline nlohmann::json graph_to_json(const FloorPlanGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const Room& r : g.nodes) {
    nlohmann::json poly = nlohmann::json::array();
    for (const Point& p : r.polygon) poly.push_back({p.x, p.y});
    auto s = r.shape.as_vector();
    nodes.push_back({{"category", static_cast<int>(r.category)},
                     {"shape", std::vector<double>(s.begin(), s.end())},
                     {"polygon", std::move(poly)}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : g.edges)
    edges.push_back({{"u", e.u}, {"v", e.v}, {"kind", e.kind == EdgeKind::Door ? "door" : "wall"}});
  return {{"id", g.id}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

// Throws nlohmann::json exceptions or std::runtime_error on schema mismatch.
inline FloorPlanGraph graph_from_json(const nlohmann::json& j) {
  FloorPlanGraph g;
  g.id = j.at("id").get<std::string>();
  for (const auto& jn : j.at("nodes")) {
    Room r;
    r.category = static_cast<RoomCategory>(jn.at("category").get<int>());
    const auto& js = jn.at("shape");
    if (!js.is_array() || js.size() != kShapeDim) throw std::runtime_error("shape must have 6 entries");
    std::array<double, kShapeDim> s{};
    for (int i = 0; i < kShapeDim; ++i) s[i] = js[i].get<double>();
    r.shape = RoomShape::from_vector(s);
    for (const auto& jp : jn.at("polygon")) {
      if (!jp.is_array() || jp.size() != 2) throw std::runtime_error("polygon vertex must be [x, y]");
      r.polygon.push_back({jp[0].get<double>(), jp[1].get<double>()});
    }
    g.nodes.push_back(std::move(r));
  }
  for (const auto& je : j.at("edges")) {
    Edge e;
    e.u = je.at("u").get<int>();
    e.v = je.at("v").get<int>();
    const std::string kind = je.at("kind").get<std::string>();
    if (kind == "door")
      e.kind = EdgeKind::Door;
    else if (kind == "wall")
      e.kind = EdgeKind::Wall;
    else
      throw std::runtime_error("unknown edge kind '" + kind + "'");
    if (e.u > e.v) std::swap(e.u, e.v);
    g.edges.push_back(e);
  }
  return g;
}

inline ReadResult parse_graphs(std::istream& in) {
  ReadResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    FloorPlanGraph g;
    try {
      g = graph_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw MalformedInput(lineno, e.what());
    }
    auto report = validate(g);
    if (report.empty())
      result.graphs.push_back(std::move(g));
    else
      result.rejected.push_back({lineno, g.id, std::move(report)});
  }
  return result;
}

inline ReadResult read_graphs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file " + path.string());
  return parse_graphs(in);
}

inline void write_graphs(const std::vector<FloorPlanGraph>& graphs, std::ostream& out) {
  for (const auto& g : graphs) out << graph_to_json(g).dump() << '\n';
}

inline void write_graphs(const std::vector<FloorPlanGraph>& graphs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write graph file " + path.string());
  write_graphs(graphs, out);
  if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

}  // namespace lgkn

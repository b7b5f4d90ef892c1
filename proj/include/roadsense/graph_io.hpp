#pragma once

// CSV and JSON containers for NetworkGraph.
//
// nodes.csv: header `id,road_class,volume,f_0,...,f_{d-1}`
// edges.csv: header `u,v,e_0,...,e_{d_e-1}`
// UTF-8, comma separated, '.' decimal point, one header row. Reals are written
// in shortest round-trip form so save/load is lossless.
//
// JSON mirror: {"schema_version":1, "feature_dim":d, "edge_dim":d_e,
//   "nodes":[{"id","road_class","volume","features":[...]}],
//   "edges":[{"u","v","attrs":[...]}]}

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "roadsense/error.hpp"
#include "roadsense/graph.hpp"

namespace roadsense {

namespace csv {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

inline double parse_real(std::string_view s, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

inline std::size_t parse_index(std::string_view s, std::size_t line) {
  s = trim(s);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad node id '" + std::string(s) + "'");
  return v;
}

inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Checks `prefix0,prefix1,...` style column names starting at `first`.
/// Returns the number of indexed columns.
inline std::size_t indexed_columns(const std::vector<std::string_view>& header, std::size_t first,
                                   std::string_view prefix) {
  for (std::size_t i = first; i < header.size(); ++i) {
    const std::string expected = std::string(prefix) + std::to_string(i - first);
    if (trim(header[i]) != expected)
      fail(ErrorCode::ParseError, "line 1: expected column '" + expected + "', found '" + std::string(header[i]) + "'");
  }
  return header.size() - first;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace csv

inline NetworkGraph load_graph(const std::filesystem::path& node_path, const std::filesystem::path& edge_path) {
  if (!std::filesystem::exists(node_path)) fail(ErrorCode::MissingFile, node_path.string());
  if (!std::filesystem::exists(edge_path)) fail(ErrorCode::MissingFile, edge_path.string());

  const auto node_lines = csv::read_lines(node_path);
  if (node_lines.empty()) fail(ErrorCode::ParseError, node_path.string() + " line 1: missing header");
  const auto node_header = csv::split(node_lines[0]);
  if (node_header.size() < 3 || csv::trim(node_header[0]) != "id" || csv::trim(node_header[1]) != "road_class" ||
      csv::trim(node_header[2]) != "volume")
    fail(ErrorCode::ParseError, node_path.string() + " line 1: header must start with id,road_class,volume");
  const std::size_t d = csv::indexed_columns(node_header, 3, "f_");

  std::vector<RoadNode> nodes;
  for (std::size_t ln = 1; ln < node_lines.size(); ++ln) {
    if (csv::trim(node_lines[ln]).empty()) continue;
    const auto cells = csv::split(node_lines[ln]);
    if (cells.size() != 3 + d)
      fail(ErrorCode::ParseError, node_path.string() + " line " + std::to_string(ln + 1) + ": expected " +
                                      std::to_string(3 + d) + " columns, found " + std::to_string(cells.size()));
    RoadNode n;
    n.id = csv::parse_index(cells[0], ln + 1);
    try {
      n.road_class = road_class_from_string(csv::trim(cells[1]));
    } catch (const Error& e) {
      fail(ErrorCode::ParseError, node_path.string() + " line " + std::to_string(ln + 1) + ": " + e.what());
    }
    n.true_volume = csv::parse_real(cells[2], ln + 1);
    for (std::size_t k = 0; k < d; ++k) n.features.push_back(csv::parse_real(cells[3 + k], ln + 1));
    nodes.push_back(std::move(n));
  }
  if (nodes.empty()) fail(ErrorCode::EmptyGraph, node_path.string() + " has no nodes");
  {
    std::vector<bool> seen(nodes.size(), false);
    for (const auto& n : nodes) {
      if (n.id < seen.size()) {
        if (seen[n.id]) fail(ErrorCode::DuplicateNodeId, "node id " + std::to_string(n.id));
        seen[n.id] = true;
      }
    }
  }

  const auto edge_lines = csv::read_lines(edge_path);
  if (edge_lines.empty()) fail(ErrorCode::ParseError, edge_path.string() + " line 1: missing header");
  const auto edge_header = csv::split(edge_lines[0]);
  if (edge_header.size() < 2 || csv::trim(edge_header[0]) != "u" || csv::trim(edge_header[1]) != "v")
    fail(ErrorCode::ParseError, edge_path.string() + " line 1: header must start with u,v");
  const std::size_t de = csv::indexed_columns(edge_header, 2, "e_");

  std::vector<RoadEdge> edges;
  for (std::size_t ln = 1; ln < edge_lines.size(); ++ln) {
    if (csv::trim(edge_lines[ln]).empty()) continue;
    const auto cells = csv::split(edge_lines[ln]);
    if (cells.size() != 2 + de)
      fail(ErrorCode::ParseError, edge_path.string() + " line " + std::to_string(ln + 1) + ": expected " +
                                      std::to_string(2 + de) + " columns, found " + std::to_string(cells.size()));
    RoadEdge e;
    e.u = csv::parse_index(cells[0], ln + 1);
    e.v = csv::parse_index(cells[1], ln + 1);
    for (std::size_t k = 0; k < de; ++k) e.attrs.push_back(csv::parse_real(cells[2 + k], ln + 1));
    edges.push_back(std::move(e));
  }
  return NetworkGraph(std::move(nodes), std::move(edges), d, de);
}

inline void save_graph(const NetworkGraph& g, const std::filesystem::path& node_path,
                       const std::filesystem::path& edge_path) {
  if (g.empty()) fail(ErrorCode::EmptyGraph, "refusing to save a graph with no nodes");
  {
    std::ofstream out(node_path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + node_path.string());
    out << "id,road_class,volume";
    for (std::size_t k = 0; k < g.feature_dim(); ++k) out << ",f_" << k;
    out << '\n';
    for (const auto& n : g.nodes()) {
      out << n.id << ',' << to_string(n.road_class) << ',' << csv::format_real(n.true_volume);
      for (double f : n.features) out << ',' << csv::format_real(f);
      out << '\n';
    }
    if (!out) fail(ErrorCode::IoError, "write failed for " + node_path.string());
  }
  std::ofstream out(edge_path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + edge_path.string());
  out << "u,v";
  for (std::size_t k = 0; k < g.edge_dim(); ++k) out << ",e_" << k;
  out << '\n';
  for (const auto& e : g.edges()) {
    out << e.u << ',' << e.v;
    for (double a : e.attrs) out << ',' << csv::format_real(a);
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed for " + edge_path.string());
}

inline nlohmann::json graph_to_json(const NetworkGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes())
    nodes.push_back({{"id", n.id}, {"road_class", to_string(n.road_class)}, {"volume", n.true_volume},
                     {"features", n.features}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges()) edges.push_back({{"u", e.u}, {"v", e.v}, {"attrs", e.attrs}});
  return {{"schema_version", 1},
          {"feature_dim", g.feature_dim()},
          {"edge_dim", g.edge_dim()},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)}};
}

inline NetworkGraph graph_from_json(const nlohmann::json& doc) {
  try {
    std::vector<RoadNode> nodes;
    for (const auto& jn : doc.at("nodes")) {
      RoadNode n;
      n.id = jn.at("id").get<NodeId>();
      n.road_class = road_class_from_string(jn.at("road_class").get<std::string>());
      n.true_volume = jn.at("volume").get<double>();
      n.features = jn.at("features").get<std::vector<double>>();
      nodes.push_back(std::move(n));
    }
    std::vector<RoadEdge> edges;
    for (const auto& je : doc.at("edges"))
      edges.push_back({je.at("u").get<NodeId>(), je.at("v").get<NodeId>(), je.at("attrs").get<std::vector<double>>()});
    const std::size_t d = doc.contains("feature_dim") ? doc["feature_dim"].get<std::size_t>()
                                                      : (nodes.empty() ? 0 : nodes[0].features.size());
    const std::size_t de = doc.contains("edge_dim") ? doc["edge_dim"].get<std::size_t>()
                                                    : (edges.empty() ? 0 : edges[0].attrs.size());
    if (nodes.empty()) fail(ErrorCode::EmptyGraph, "JSON graph has no nodes");
    return NetworkGraph(std::move(nodes), std::move(edges), d, de);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("graph JSON: ") + e.what());
  }
}

inline NetworkGraph load_graph_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  try {
    return graph_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

inline void save_graph_json(const NetworkGraph& g, const std::filesystem::path& path) {
  if (g.empty()) fail(ErrorCode::EmptyGraph, "refusing to save a graph with no nodes");
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << graph_to_json(g).dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Sensor files: `id,set` with set in {existing,new}; unlisted nodes are unlabeled.

inline void save_sensors(const SensorPartition& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "id,set\n";
  for (NodeId id : p.existing()) out << id << ",existing\n";
  for (NodeId id : p.added()) out << id << ",new\n";
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

inline SensorPartition load_sensors(const std::filesystem::path& path, std::size_t num_nodes) {
  const auto lines = csv::read_lines(path);
  if (lines.empty() || csv::trim(lines[0]) != "id,set")
    fail(ErrorCode::ParseError, path.string() + " line 1: header must be id,set");
  std::vector<NodeId> existing, added;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (csv::trim(lines[ln]).empty()) continue;
    const auto cells = csv::split(lines[ln]);
    if (cells.size() != 2) fail(ErrorCode::ParseError, path.string() + " line " + std::to_string(ln + 1));
    const NodeId id = csv::parse_index(cells[0], ln + 1);
    if (id >= num_nodes) fail(ErrorCode::GraphMismatch, "sensor on node " + std::to_string(id) + " outside the graph");
    const auto set = csv::trim(cells[1]);
    if (set == "existing")
      existing.push_back(id);
    else if (set == "new")
      added.push_back(id);
    else
      fail(ErrorCode::ParseError, path.string() + " line " + std::to_string(ln + 1) + ": unknown set");
  }
  return SensorPartition(num_nodes, std::move(existing), std::move(added));
}

}  // namespace roadsense

#pragma once

// Hop-count centralities on the undirected segment graph.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <queue>
#include <stack>
#include <string_view>
#include <utility>
#include <vector>

#include "roadsense/error.hpp"
#include "roadsense/graph.hpp"
#include "roadsense/graph_io.hpp"

namespace roadsense {

enum class CentralityKind { Betweenness, Closeness };

constexpr std::string_view to_string(CentralityKind k) {
  return k == CentralityKind::Betweenness ? "betweenness" : "closeness";
}

struct CentralityScores {
  CentralityKind kind = CentralityKind::Betweenness;
  std::vector<double> score;
};

using Adjacency = std::vector<std::vector<NodeId>>;

inline Adjacency adjacency_lists(const NetworkGraph& g) {
  Adjacency adj(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto nb = g.neighbors(v);
    adj[v].assign(nb.begin(), nb.end());
  }
  return adj;
}

/// BFS hop distances from `src`; unreachable nodes get -1.
inline std::vector<long> bfs_distances(const Adjacency& adj, NodeId src) {
  std::vector<long> dist(adj.size(), -1);
  std::queue<NodeId> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const NodeId v = q.front();
    q.pop();
    for (NodeId w : adj[v])
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push(w);
      }
  }
  return dist;
}

/// Brandes accumulation, unnormalized, each unordered pair counted once.
inline std::vector<double> betweenness(const Adjacency& adj) {
  const std::size_t n = adj.size();
  std::vector<double> cb(n, 0.0);
  std::vector<std::vector<NodeId>> pred(n);
  std::vector<double> sigma(n);
  std::vector<long> dist(n);
  std::vector<double> delta(n);
  for (NodeId s = 0; s < n; ++s) {
    for (auto& p : pred) p.clear();
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(delta.begin(), delta.end(), 0.0);
    std::stack<NodeId> order;
    std::queue<NodeId> q;
    sigma[s] = 1.0;
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const NodeId v = q.front();
      q.pop();
      order.push(v);
      for (NodeId w : adj[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          pred[w].push_back(v);
        }
      }
    }
    while (!order.empty()) {
      const NodeId w = order.top();
      order.pop();
      for (NodeId v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) cb[w] += delta[w];
    }
  }
  for (auto& c : cb) c /= 2.0;
  return cb;
}

/// Component-corrected closeness: ((r-1)/Σd) * ((r-1)/(n-1)), r = reachable
/// count including v; 0 for isolated nodes.
inline std::vector<double> closeness(const Adjacency& adj) {
  const std::size_t n = adj.size();
  std::vector<double> c(n, 0.0);
  if (n < 2) return c;
  for (NodeId v = 0; v < n; ++v) {
    const auto dist = bfs_distances(adj, v);
    double total = 0.0;
    std::size_t reach = 0;
    for (long d : dist)
      if (d > 0) {
        total += static_cast<double>(d);
        ++reach;
      }
    if (reach == 0) continue;
    const double r = static_cast<double>(reach);
    c[v] = (r / total) * (r / static_cast<double>(n - 1));
  }
  return c;
}

inline CentralityScores betweenness(const NetworkGraph& g) {
  return {CentralityKind::Betweenness, betweenness(adjacency_lists(g))};
}

inline CentralityScores closeness(const NetworkGraph& g) {
  return {CentralityKind::Closeness, closeness(adjacency_lists(g))};
}

inline void save_scores_csv(const std::filesystem::path& path, const CentralityScores& s) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "id," << to_string(s.kind) << '\n';
  for (std::size_t i = 0; i < s.score.size(); ++i) out << i << ',' << csv::format_real(s.score[i]) << '\n';
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace roadsense

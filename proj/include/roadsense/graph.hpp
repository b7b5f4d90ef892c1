#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "roadsense/error.hpp"
#include "roadsense/tensor.hpp"

namespace roadsense {

using NodeId = std::size_t;

enum class RoadClass {
  ProtectedBikeLane,
  PaintedLaneArterialCollector,
  OffRoadPath,
  LocalMixed,
  ArterialMixed,
  Other,
};

inline constexpr std::size_t kNumRoadClasses = 6;

inline constexpr std::array<std::string_view, kNumRoadClasses> kRoadClassNames = {
    "protected_bike_lane", "painted_lane_arterial_collector", "off_road_path", "local_mixed", "arterial_mixed", "other",
};

constexpr std::string_view to_string(RoadClass c) { return kRoadClassNames[static_cast<std::size_t>(c)]; }

inline RoadClass road_class_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kNumRoadClasses; ++i)
    if (kRoadClassNames[i] == s) return static_cast<RoadClass>(i);
  fail(ErrorCode::ParseError, "unknown road class '" + std::string(s) + "'");
}

struct RoadNode {
  NodeId id = 0;
  std::vector<double> features;
  double true_volume = 0.0;  // riders/day
  RoadClass road_class = RoadClass::Other;

  bool operator==(const RoadNode&) const = default;
};

struct RoadEdge {
  NodeId u = 0;
  NodeId v = 0;
  std::vector<double> attrs;

  bool operator==(const RoadEdge&) const = default;
};

/// Undirected road network: one node per segment, one edge per pair of
/// segments that touch. Validated on construction and immutable afterwards.
class NetworkGraph {
 public:
  NetworkGraph() = default;

  NetworkGraph(std::vector<RoadNode> nodes, std::vector<RoadEdge> edges, std::size_t feature_dim,
               std::size_t edge_dim)
      : nodes_(std::move(nodes)), edges_(std::move(edges)), feature_dim_(feature_dim), edge_dim_(edge_dim) {
    const std::size_t n = nodes_.size();
    std::vector<bool> seen(n, false);
    for (const auto& node : nodes_) {
      if (node.id >= n) fail(ErrorCode::InvalidGraph, "node ids must be 0..N-1; got " + std::to_string(node.id));
      if (seen[node.id]) fail(ErrorCode::DuplicateNodeId, "node id " + std::to_string(node.id));
      seen[node.id] = true;
      if (node.features.size() != feature_dim_)
        fail(ErrorCode::InvalidGraph, "node " + std::to_string(node.id) + " has " +
                                          std::to_string(node.features.size()) + " features, expected " +
                                          std::to_string(feature_dim_));
      if (!std::isfinite(node.true_volume) || node.true_volume < 0.0)
        fail(ErrorCode::InvalidGraph, "node " + std::to_string(node.id) + " volume must be finite and >= 0");
      for (double f : node.features)
        if (!std::isfinite(f)) fail(ErrorCode::InvalidGraph, "non-finite feature on node " + std::to_string(node.id));
    }
    std::sort(nodes_.begin(), nodes_.end(), [](const RoadNode& a, const RoadNode& b) { return a.id < b.id; });

    neighbors_.assign(n, {});
    std::set<std::pair<NodeId, NodeId>> pairs;
    for (const auto& e : edges_) {
      if (e.u >= n || e.v >= n)
        fail(ErrorCode::DanglingEdgeEndpoint,
             "edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") references a missing node");
      if (e.u == e.v) fail(ErrorCode::InvalidGraph, "self edge on node " + std::to_string(e.u));
      if (e.attrs.size() != edge_dim_)
        fail(ErrorCode::InvalidGraph, "edge attribute width " + std::to_string(e.attrs.size()) + ", expected " +
                                          std::to_string(edge_dim_));
      if (!pairs.emplace(std::min(e.u, e.v), std::max(e.u, e.v)).second)
        fail(ErrorCode::DuplicateEdge, "(" + std::to_string(e.u) + "," + std::to_string(e.v) + ")");
      neighbors_[e.u].push_back(e.v);
      neighbors_[e.v].push_back(e.u);
    }
    for (auto& adj : neighbors_) std::sort(adj.begin(), adj.end());
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t edge_dim() const { return edge_dim_; }
  bool empty() const { return nodes_.empty(); }

  const std::vector<RoadNode>& nodes() const { return nodes_; }
  const std::vector<RoadEdge>& edges() const { return edges_; }
  const RoadNode& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<NodeId>& neighbors(NodeId id) const { return neighbors_.at(id); }

  std::vector<double> volumes() const {
    std::vector<double> y(nodes_.size());
    for (const auto& n : nodes_) y[n.id] = n.true_volume;
    return y;
  }

  /// N x d node feature matrix.
  Tensor feature_matrix() const {
    std::vector<double> x;
    x.reserve(nodes_.size() * feature_dim_);
    for (const auto& n : nodes_) x.insert(x.end(), n.features.begin(), n.features.end());
    return Tensor(nodes_.size(), feature_dim_, std::move(x));
  }

  /// |E| x d_e raw edge attribute matrix, rows in edge-list order.
  Tensor edge_matrix() const {
    std::vector<double> e;
    e.reserve(edges_.size() * edge_dim_);
    for (const auto& edge : edges_) e.insert(e.end(), edge.attrs.begin(), edge.attrs.end());
    return Tensor(edges_.size(), edge_dim_, std::move(e));
  }

  bool operator==(const NetworkGraph& o) const {
    return feature_dim_ == o.feature_dim_ && edge_dim_ == o.edge_dim_ && nodes_ == o.nodes_ && edges_ == o.edges_;
  }

 private:
  std::vector<RoadNode> nodes_;
  std::vector<RoadEdge> edges_;
  std::vector<std::vector<NodeId>> neighbors_;
  std::size_t feature_dim_ = 0;
  std::size_t edge_dim_ = 0;
};

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
inline SparseMatrix normalized_adjacency(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
  std::vector<std::vector<NodeId>> adj(n);
  for (NodeId i = 0; i < n; ++i) adj[i].push_back(i);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<double> inv_sqrt_deg(n);
  for (NodeId i = 0; i < n; ++i) {
    std::sort(adj[i].begin(), adj[i].end());
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(adj[i].size()));
  }
  SparseMatrix s;
  s.rows = s.cols = n;
  s.row_ptr.assign(1, 0);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j : adj[i]) {
      s.col_idx.push_back(j);
      s.values.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    s.row_ptr.push_back(s.col_idx.size());
  }
  return s;
}

inline std::vector<std::pair<NodeId, NodeId>> edge_pairs(const NetworkGraph& g) {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(g.num_edges());
  for (const auto& e : g.edges()) out.emplace_back(e.u, e.v);
  return out;
}

inline SparseMatrix normalized_adjacency(const NetworkGraph& g) { return normalized_adjacency(g.num_nodes(), edge_pairs(g)); }

// ---------------------------------------------------------------------------
// Sensor partitions and splits

enum class SensorStatus : std::uint8_t { Existing, New, Unlabeled };

/// Disjoint cover of the node set: existing sensors, newly placed sensors and
/// unlabeled nodes. Node lists are kept sorted.
class SensorPartition {
 public:
  SensorPartition() = default;

  SensorPartition(std::size_t num_nodes, std::vector<NodeId> existing, std::vector<NodeId> added)
      : status_(num_nodes, SensorStatus::Unlabeled) {
    for (NodeId id : existing) mark(id, SensorStatus::Existing);
    for (NodeId id : added) mark(id, SensorStatus::New);
    if (existing.empty() && added.empty()) fail(ErrorCode::InvalidFraction, "partition has no labeled nodes");
    rebuild();
  }

  std::size_t num_nodes() const { return status_.size(); }
  const std::vector<NodeId>& existing() const { return existing_; }
  const std::vector<NodeId>& added() const { return new_; }
  const std::vector<NodeId>& unlabeled() const { return unlabeled_; }
  SensorStatus status(NodeId id) const { return status_.at(id); }
  bool is_labeled(NodeId id) const { return status(id) != SensorStatus::Unlabeled; }

  /// existing ∪ new, sorted.
  std::vector<NodeId> train() const {
    std::vector<NodeId> t;
    std::merge(existing_.begin(), existing_.end(), new_.begin(), new_.end(), std::back_inserter(t));
    return t;
  }

  /// Copy with `id` moved from unlabeled to new.
  SensorPartition with_new_sensor(NodeId id) const {
    if (id >= num_nodes() || status_[id] != SensorStatus::Unlabeled)
      fail(ErrorCode::InvalidAction, "node " + std::to_string(id) + " is not unlabeled");
    SensorPartition p = *this;
    p.status_[id] = SensorStatus::New;
    p.rebuild();
    return p;
  }

  SensorPartition with_new_sensors(const std::vector<NodeId>& ids) const {
    SensorPartition p = *this;
    for (NodeId id : ids) p = p.with_new_sensor(id);
    return p;
  }

  /// Same existing sensors, no new ones.
  SensorPartition reset() const {
    SensorPartition p = *this;
    for (auto& s : p.status_)
      if (s == SensorStatus::New) s = SensorStatus::Unlabeled;
    p.rebuild();
    return p;
  }

  bool operator==(const SensorPartition&) const = default;

 private:
  void mark(NodeId id, SensorStatus s) {
    if (id >= status_.size()) fail(ErrorCode::InvalidGraph, "sensor on missing node " + std::to_string(id));
    if (status_[id] != SensorStatus::Unlabeled)
      fail(ErrorCode::InvalidGraph, "node " + std::to_string(id) + " listed twice in partition");
    status_[id] = s;
  }

  void rebuild() {
    existing_.clear();
    new_.clear();
    unlabeled_.clear();
    for (NodeId i = 0; i < status_.size(); ++i) {
      switch (status_[i]) {
        case SensorStatus::Existing: existing_.push_back(i); break;
        case SensorStatus::New: new_.push_back(i); break;
        case SensorStatus::Unlabeled: unlabeled_.push_back(i); break;
      }
    }
  }

  std::vector<SensorStatus> status_;
  std::vector<NodeId> existing_;
  std::vector<NodeId> new_;
  std::vector<NodeId> unlabeled_;
};

/// Fraction of nodes without a sensor.
inline double sparsity(const SensorPartition& p) {
  if (p.num_nodes() == 0) return 1.0;
  return static_cast<double>(p.unlabeled().size()) / static_cast<double>(p.num_nodes());
}

/// Uniform sample of round(fraction * N) existing sensors; nothing new yet.
inline SensorPartition make_partition(const NetworkGraph& g, double existing_fraction, std::uint64_t seed) {
  if (!(existing_fraction > 0.0 && existing_fraction <= 1.0))
    fail(ErrorCode::InvalidFraction, "existing fraction must be in (0, 1], got " + std::to_string(existing_fraction));
  const auto count = static_cast<std::size_t>(std::llround(existing_fraction * static_cast<double>(g.num_nodes())));
  if (count == 0) fail(ErrorCode::InvalidFraction, "existing fraction selects no nodes");
  std::vector<NodeId> ids(g.num_nodes());
  std::iota(ids.begin(), ids.end(), NodeId{0});
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return SensorPartition(g.num_nodes(), std::move(ids), {});
}

/// Partition with exactly `count` existing sensors.
inline SensorPartition make_partition_count(const NetworkGraph& g, std::size_t count, std::uint64_t seed) {
  if (count == 0 || count > g.num_nodes())
    fail(ErrorCode::InvalidFraction, "sensor count must be in [1, N], got " + std::to_string(count));
  return make_partition(g, static_cast<double>(count) / static_cast<double>(g.num_nodes()), seed);
}

struct SplitAssignment {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  bool operator==(const SplitAssignment&) const = default;

  /// val ∪ test, sorted.
  std::vector<NodeId> holdout() const {
    std::vector<NodeId> h;
    std::merge(val.begin(), val.end(), test.begin(), test.end(), std::back_inserter(h));
    return h;
  }
};

/// train = existing ∪ new; val and test are disjoint uniform samples of the
/// unlabeled nodes with floor(frac * |unlabeled|) members each.
inline SplitAssignment make_splits(const SensorPartition& p, std::uint64_t seed, double val_frac = 0.15,
                                   double test_frac = 0.15) {
  if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0)
    fail(ErrorCode::InvalidFraction, "val_frac + test_frac must be < 1");
  const auto& pool = p.unlabeled();
  if (pool.size() < 2) fail(ErrorCode::TooFewUnlabeled, std::to_string(pool.size()) + " unlabeled nodes");
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(pool.size())));
  const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(pool.size())));
  if (n_val == 0 || n_test == 0)
    fail(ErrorCode::TooFewUnlabeled, std::to_string(pool.size()) + " unlabeled nodes leave an empty val or test set");
  std::vector<NodeId> shuffled = pool;
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  SplitAssignment s;
  s.train = p.train();
  s.val.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val),
                shuffled.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline SplitAssignment make_splits(const NetworkGraph& g, const SensorPartition& p, std::uint64_t seed,
                                   double val_frac = 0.15, double test_frac = 0.15) {
  if (p.num_nodes() != g.num_nodes()) fail(ErrorCode::GraphMismatch, "partition size differs from graph");
  return make_splits(p, seed, val_frac, test_frac);
}

/// Split with the same val/test sets and the train set of `p`.
inline SplitAssignment with_train(SplitAssignment s, const SensorPartition& p) {
  s.train = p.train();
  return s;
}

}  // namespace roadsense

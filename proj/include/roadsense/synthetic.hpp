#pragma once

// Planted-signal road networks for desk-scale experiments.
//
// Nodes are points in the unit square joined into a connected geometric
// graph (Euclidean spanning tree plus the shortest remaining candidate pairs
// up to the requested mean degree). Volumes come from a hidden process:
// `source_count` nodes get a random intensity, then `diffusion_steps` rounds of
//   x <- s + decay * mean(x over the closed neighborhood)
// spread them, and Gaussian noise (clamped at 0) is added. Features are the
// road-class one-hot followed by two noisy volume covariates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <limits>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "roadsense/error.hpp"
#include "roadsense/graph.hpp"

namespace roadsense {

struct VolumeProcess {
  std::size_t diffusion_steps = 8;
  std::size_t source_count = 6;
  double intensity_min = 50.0;
  double intensity_max = 400.0;
  double decay = 0.85;
  double noise_sd = 5.0;
};

struct SyntheticConfig {
  std::size_t n_nodes = 200;
  double avg_degree = 4.0;
  std::array<double, kNumRoadClasses> class_mix = {0.10, 0.15, 0.10, 0.40, 0.10, 0.15};
  VolumeProcess volume;
  double covariate_noise_sd = 0.3;
  std::uint64_t seed = 7;
};

/// Feature layout of generated graphs.
inline constexpr std::size_t kSyntheticFeatureDim = kNumRoadClasses + 2;
inline constexpr std::size_t kSyntheticEdgeDim = 2;

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

struct Candidate {
  double dist;
  NodeId u;
  NodeId v;
  bool operator<(const Candidate& o) const {
    if (dist != o.dist) return dist < o.dist;
    if (u != o.u) return u < o.u;
    return v < o.v;
  }
};

}  // namespace detail

inline void validate(const SyntheticConfig& c) {
  if (c.n_nodes < 2) fail(ErrorCode::InvalidConfig, "n_nodes must be >= 2");
  if (!(c.avg_degree > 0.0) || !std::isfinite(c.avg_degree)) fail(ErrorCode::InvalidConfig, "avg_degree must be > 0");
  double total = 0.0;
  for (double p : c.class_mix) {
    if (p < 0.0) fail(ErrorCode::InvalidConfig, "class_mix entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::InvalidConfig, "class_mix must sum to 1");
  const auto& v = c.volume;
  if (v.source_count == 0 || v.source_count > c.n_nodes)
    fail(ErrorCode::InvalidConfig, "source_count must be in [1, n_nodes]");
  if (v.intensity_min < 0.0 || v.intensity_max < v.intensity_min)
    fail(ErrorCode::InvalidConfig, "need 0 <= intensity_min <= intensity_max");
  if (v.noise_sd < 0.0 || c.covariate_noise_sd < 0.0) fail(ErrorCode::InvalidConfig, "noise sd must be >= 0");
  if (v.decay < 0.0 || v.decay >= 1.0) fail(ErrorCode::InvalidConfig, "decay must be in [0, 1)");
}

inline NetworkGraph generate_synthetic(const SyntheticConfig& config) {
  validate(config);
  const std::size_t n = config.n_nodes;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::array<double, 2>> pos(n);
  for (auto& p : pos) p = {unit(rng), unit(rng)};
  auto dist = [&](NodeId a, NodeId b) { return std::hypot(pos[a][0] - pos[b][0], pos[a][1] - pos[b][1]); };

  // Candidate pairs: each node's k nearest neighbours.
  const std::size_t k = std::min<std::size_t>(n - 1, std::max<std::size_t>(8, 3 * static_cast<std::size_t>(
                                                                                      std::ceil(config.avg_degree))));
  std::vector<detail::Candidate> cands;
  cands.reserve(n * k);
  std::vector<std::pair<double, NodeId>> row(n);
  for (NodeId i = 0; i < n; ++i) {
    row.clear();
    for (NodeId j = 0; j < n; ++j)
      if (j != i) row.emplace_back(dist(i, j), j);
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    for (std::size_t t = 0; t < k; ++t) {
      const NodeId j = row[t].second;
      cands.push_back({row[t].first, std::min(i, j), std::max(i, j)});
    }
  }
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end(),
                          [](const auto& a, const auto& b) { return a.u == b.u && a.v == b.v; }),
              cands.end());

  const auto target_edges = static_cast<std::size_t>(std::llround(config.avg_degree * static_cast<double>(n) / 2.0));
  std::vector<bool> used(cands.size(), false);
  std::vector<std::pair<NodeId, NodeId>> chosen;
  detail::DisjointSets sets(n);
  for (std::size_t c = 0; c < cands.size(); ++c)
    if (sets.unite(cands[c].u, cands[c].v)) {
      used[c] = true;
      chosen.emplace_back(cands[c].u, cands[c].v);
    }
  // Join leftover components through their closest cross pair.
  for (std::size_t comps = n - chosen.size(); comps > 1; --comps) {
    const std::size_t root0 = sets.find(0);
    detail::Candidate best{std::numeric_limits<double>::infinity(), 0, 0};
    for (NodeId a = 0; a < n; ++a) {
      if (sets.find(a) != root0) continue;
      for (NodeId b = 0; b < n; ++b)
        if (sets.find(b) != root0) {
          detail::Candidate c{dist(a, b), std::min(a, b), std::max(a, b)};
          if (c < best) best = c;
        }
    }
    sets.unite(best.u, best.v);
    chosen.emplace_back(best.u, best.v);
  }
  std::set<std::pair<NodeId, NodeId>> present(chosen.begin(), chosen.end());
  for (std::size_t c = 0; c < cands.size() && chosen.size() < target_edges; ++c) {
    if (used[c]) continue;
    if (present.emplace(cands[c].u, cands[c].v).second) chosen.emplace_back(cands[c].u, cands[c].v);
  }
  std::sort(chosen.begin(), chosen.end());

  // Road classes.
  std::discrete_distribution<std::size_t> class_dist(config.class_mix.begin(), config.class_mix.end());
  std::vector<RoadClass> classes(n);
  for (auto& c : classes) c = static_cast<RoadClass>(class_dist(rng));

  // Hidden volume process.
  std::vector<std::vector<NodeId>> adj(n);
  for (const auto& [u, v] : chosen) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  const auto& vp = config.volume;
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> source(n, 0.0);
  std::uniform_real_distribution<double> intensity(vp.intensity_min, vp.intensity_max);
  for (std::size_t s = 0; s < vp.source_count; ++s)
    source[order[s]] = vp.intensity_min == vp.intensity_max ? vp.intensity_min : intensity(rng);
  std::vector<double> x = source;
  for (std::size_t step = 0; step < vp.diffusion_steps; ++step) {
    std::vector<double> next(n);
    for (NodeId i = 0; i < n; ++i) {
      double acc = x[i];
      for (NodeId j : adj[i]) acc += x[j];
      next[i] = source[i] + vp.decay * acc / static_cast<double>(adj[i].size() + 1);
    }
    x = std::move(next);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> volume(n);
  for (NodeId i = 0; i < n; ++i) volume[i] = std::max(0.0, x[i] + vp.noise_sd * noise(rng));

  const double vmax = std::max(1.0, *std::max_element(volume.begin(), volume.end()));
  std::vector<RoadNode> nodes(n);
  for (NodeId i = 0; i < n; ++i) {
    RoadNode& node = nodes[i];
    node.id = i;
    node.road_class = classes[i];
    node.true_volume = volume[i];
    node.features.assign(kSyntheticFeatureDim, 0.0);
    node.features[static_cast<std::size_t>(classes[i])] = 1.0;
    const double rel = volume[i] / vmax;
    node.features[kNumRoadClasses] = rel + config.covariate_noise_sd * noise(rng);
    node.features[kNumRoadClasses + 1] = std::sqrt(rel) + config.covariate_noise_sd * noise(rng);
  }

  double mean_len = 0.0;
  for (const auto& [u, v] : chosen) mean_len += dist(u, v);
  mean_len = chosen.empty() ? 1.0 : mean_len / static_cast<double>(chosen.size());
  std::vector<RoadEdge> edges;
  edges.reserve(chosen.size());
  for (const auto& [u, v] : chosen)
    edges.push_back({u, v, {dist(u, v) / mean_len, classes[u] == classes[v] ? 1.0 : 0.0}});

  return NetworkGraph(std::move(nodes), std::move(edges), kSyntheticFeatureDim, kSyntheticEdgeDim);
}

}  // namespace roadsense

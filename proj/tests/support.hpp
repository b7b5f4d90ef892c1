#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "roadsense/graph.hpp"
#include "roadsense/optim.hpp"
#include "roadsense/tensor.hpp"

namespace roadsense::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Relative error between autodiff and central differences, floored so that
/// vanishing gradients compare on an absolute scale.
inline double rel_error(double a, double n, double floor = 1e-3) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Central differences (step h) over every element of every tensor in `params`.
inline GradCheck check_gradients(const ParamSet& params, const std::function<Tensor(const ParamSet&)>& loss_fn,
                                 double h = 1e-4) {
  const Tensor loss = loss_fn(params);
  const Gradients grads = backward(loss);
  GradCheck out;
  for (const auto& [name, t] : params) {
    const auto analytic = grads.of(t);
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto eval = [&](double delta) {
        ParamSet p = params;
        auto v = t.values();
        v[i] += delta;
        p[name] = Tensor(t.rows(), t.cols(), std::move(v), true);
        return loss_fn(p).item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double err = rel_error(analytic[i], numeric);
      ++out.checked;
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

inline Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(rng);
  return Tensor(r, c, std::move(v), requires_grad);
}

/// Small graph with the given edges, d features, 2 edge attrs, random values.
inline NetworkGraph small_graph(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges,
                                std::uint64_t seed = 1, std::size_t d = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RoadNode> nodes(n);
  for (NodeId i = 0; i < n; ++i) {
    nodes[i].id = i;
    nodes[i].features.resize(d);
    for (auto& f : nodes[i].features) f = u(rng);
    nodes[i].true_volume = 100.0 * u(rng);
    nodes[i].road_class = static_cast<RoadClass>(i % kNumRoadClasses);
  }
  std::vector<RoadEdge> es;
  for (auto [a, b] : edges) es.push_back({a, b, {u(rng), u(rng)}});
  return NetworkGraph(std::move(nodes), std::move(es), d, 2);
}

inline std::vector<std::pair<NodeId, NodeId>> path_edges(std::size_t n) {
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return e;
}

/// Erdős–Rényi edge list.
inline std::vector<std::pair<NodeId, NodeId>> random_edges(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<NodeId, NodeId>> e;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (coin(rng)) e.emplace_back(i, j);
  return e;
}

}  // namespace roadsense::testing

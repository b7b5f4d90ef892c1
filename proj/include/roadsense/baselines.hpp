#pragma once

// Rule-based placement and feature-only regressors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "roadsense/centrality.hpp"
#include "roadsense/error.hpp"
#include "roadsense/graph.hpp"
#include "roadsense/model.hpp"
#include "roadsense/optim.hpp"
#include "roadsense/tensor.hpp"

namespace roadsense {

enum class StrategyKind { Random, Betweenness, Closeness, ObservedActivity, RLGreedy };

constexpr std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Random: return "random";
    case StrategyKind::Betweenness: return "betweenness";
    case StrategyKind::Closeness: return "closeness";
    case StrategyKind::ObservedActivity: return "observed_activity";
    case StrategyKind::RLGreedy: return "rl_greedy";
  }
  return "unknown";
}

inline StrategyKind strategy_from_string(std::string_view s) {
  for (auto k : {StrategyKind::Random, StrategyKind::Betweenness, StrategyKind::Closeness,
                 StrategyKind::ObservedActivity, StrategyKind::RLGreedy})
    if (to_string(k) == s) return k;
  fail(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(s) + "'");
}

struct PlacementStrategy {
  StrategyKind kind = StrategyKind::Random;
  std::uint64_t seed = 0;
};

/// Unlabeled nodes not in `excluded` (if given), ascending.
inline std::vector<NodeId> candidate_pool(const SensorPartition& p, const std::vector<NodeId>& excluded = {}) {
  std::vector<bool> skip(p.num_nodes(), false);
  for (NodeId id : excluded) skip.at(id) = true;
  std::vector<NodeId> pool;
  for (NodeId id : p.unlabeled())
    if (!skip[id]) pool.push_back(id);
  return pool;
}

/// Top-k of `pool` by descending score, ties to the lower id.
inline std::vector<NodeId> top_k(std::vector<NodeId> pool, const std::vector<double>& score, std::size_t k) {
  std::stable_sort(pool.begin(), pool.end(), [&](NodeId a, NodeId b) { return score[a] > score[b]; });
  pool.resize(k);
  return pool;
}

/// K nodes from the unlabeled set (minus `excluded`). Random draws a
/// uniform sample; the others rank by their score.
inline std::vector<NodeId> select_by_strategy(const NetworkGraph& g, const SensorPartition& p,
                                              const PlacementStrategy& strategy, std::size_t k,
                                              const std::optional<std::vector<double>>& activity = std::nullopt,
                                              const std::vector<NodeId>& excluded = {}) {
  if (p.num_nodes() != g.num_nodes()) fail(ErrorCode::GraphMismatch, "partition size differs from graph");
  if (strategy.kind == StrategyKind::ObservedActivity && !activity)
    fail(ErrorCode::MissingActivityVector, "observed_activity needs a per-node activity vector");
  auto pool = candidate_pool(p, excluded);
  if (k > pool.size())
    fail(ErrorCode::BudgetTooLarge,
         "budget " + std::to_string(k) + " exceeds " + std::to_string(pool.size()) + " candidate nodes");
  switch (strategy.kind) {
    case StrategyKind::Random: {
      std::mt19937_64 rng(strategy.seed);
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(k);
      std::sort(pool.begin(), pool.end());
      return pool;
    }
    case StrategyKind::Betweenness: return top_k(std::move(pool), betweenness(g).score, k);
    case StrategyKind::Closeness: return top_k(std::move(pool), closeness(g).score, k);
    case StrategyKind::ObservedActivity:
      if (activity->size() != g.num_nodes()) fail(ErrorCode::LengthMismatch, "activity vector length != node count");
      return top_k(std::move(pool), *activity, k);
    case StrategyKind::RLGreedy: break;
  }
  fail(ErrorCode::InvalidConfig, "rl_greedy placements come from a trained agent, not a fixed rule");
}

/// Noisy copy of the true volumes, clamped at 0; stands in for a biased
/// crowd-sourced activity signal.
inline std::vector<double> proxy_activity(const NetworkGraph& g, double noise_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sd);
  auto v = g.volumes();
  for (auto& x : v) x = std::max(0.0, x + (noise_sd > 0.0 ? noise(rng) : 0.0));
  return v;
}

// ---------------------------------------------------------------------------
// Feature-only regressors

enum class TabularKind { Linear, MLP };

constexpr std::string_view to_string(TabularKind k) { return k == TabularKind::Linear ? "linear" : "mlp"; }

struct TabularConfig {
  double ridge = 1e-6;
  std::size_t hidden = 64;
  std::size_t epochs = 300;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct TabularModel {
  TabularKind kind = TabularKind::Linear;
  std::vector<double> coef;  // Linear: intercept first
  ParamSet mlp;
  std::vector<double> feature_mean, feature_std;
  double target_mean = 0.0, target_std = 1.0;

  std::vector<double> predict(const std::vector<std::vector<double>>& x) const {
    std::vector<double> out;
    out.reserve(x.size());
    if (kind == TabularKind::Linear) {
      for (const auto& row : x) {
        if (row.size() + 1 != coef.size()) fail(ErrorCode::ShapeMismatch, "feature width differs from fit");
        double y = coef[0];
        for (std::size_t j = 0; j < row.size(); ++j) y += coef[j + 1] * row[j];
        out.push_back(y);
      }
      return out;
    }
    const auto z = mlp_forward(mlp, standardize(x)).values();
    for (double v : z) out.push_back(target_mean + target_std * v);
    return out;
  }

  Tensor standardize(const std::vector<std::vector<double>>& x) const {
    const std::size_t d = feature_mean.size();
    std::vector<double> flat;
    flat.reserve(x.size() * d);
    for (const auto& row : x) {
      if (row.size() != d) fail(ErrorCode::ShapeMismatch, "feature width differs from fit");
      for (std::size_t j = 0; j < d; ++j) flat.push_back((row[j] - feature_mean[j]) / feature_std[j]);
    }
    return Tensor(x.size(), d, std::move(flat));
  }

  static Tensor mlp_forward(const ParamSet& p, const Tensor& x) {
    Tensor h = relu(add_rowwise(matmul(x, p.at("fc1.weight")), p.at("fc1.bias")));
    h = relu(add_rowwise(matmul(h, p.at("fc2.weight")), p.at("fc2.bias")));
    return add_rowwise(matmul(h, p.at("out.weight")), p.at("out.bias"));
  }
};

inline TabularModel train_tabular(TabularKind kind, const std::vector<std::vector<double>>& x,
                                  const std::vector<double>& y, const TabularConfig& config = {}) {
  if (x.empty()) fail(ErrorCode::EmptyTrainSet, "tabular fit needs at least one row");
  if (x.size() != y.size()) fail(ErrorCode::LengthMismatch, "feature rows != label count");
  const std::size_t m = x.size(), d = x.front().size();
  for (const auto& row : x)
    if (row.size() != d) fail(ErrorCode::ShapeMismatch, "ragged feature matrix");

  TabularModel model;
  model.kind = kind;
  if (kind == TabularKind::Linear) {
    Eigen::MatrixXd a(m, d + 1);
    Eigen::VectorXd b(m);
    for (std::size_t i = 0; i < m; ++i) {
      a(i, 0) = 1.0;
      for (std::size_t j = 0; j < d; ++j) a(i, j + 1) = x[i][j];
      b(i) = y[i];
    }
    Eigen::MatrixXd gram = a.transpose() * a;
    gram.diagonal().array() += config.ridge;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      fail(ErrorCode::DegenerateDesignMatrix, "normal equations are not positive definite");
    const Eigen::VectorXd beta = ldlt.solve(a.transpose() * b);
    if (!beta.allFinite()) fail(ErrorCode::DegenerateDesignMatrix, "least-squares solution is not finite");
    model.coef.assign(beta.data(), beta.data() + beta.size());
    return model;
  }

  model.feature_mean.assign(d, 0.0);
  model.feature_std.assign(d, 0.0);
  for (const auto& row : x)
    for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] += row[j] / static_cast<double>(m);
  for (const auto& row : x)
    for (std::size_t j = 0; j < d; ++j)
      model.feature_std[j] += (row[j] - model.feature_mean[j]) * (row[j] - model.feature_mean[j]) / static_cast<double>(m);
  for (auto& s : model.feature_std) s = s > 1e-24 ? std::sqrt(s) : 1.0;
  model.target_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(m);
  double var = 0.0;
  for (double v : y) var += (v - model.target_mean) * (v - model.target_mean) / static_cast<double>(m);
  model.target_std = var > 1e-24 ? std::sqrt(var) : 1.0;

  std::mt19937_64 rng(config.seed);
  model.mlp["fc1.weight"] = detail::glorot(d, config.hidden, rng);
  model.mlp["fc1.bias"] = detail::filled(1, config.hidden, 0.0);
  model.mlp["fc2.weight"] = detail::glorot(config.hidden, config.hidden, rng);
  model.mlp["fc2.bias"] = detail::filled(1, config.hidden, 0.0);
  model.mlp["out.weight"] = detail::glorot(config.hidden, 1, rng);
  model.mlp["out.bias"] = detail::filled(1, 1, 0.0);

  const Tensor xs = model.standardize(x);
  std::vector<double> z(m);
  for (std::size_t i = 0; i < m; ++i) z[i] = (y[i] - model.target_mean) / model.target_std;
  const Tensor target = Tensor::column(std::move(z));
  AdamState adam(AdamConfig{config.learning_rate});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const Tensor loss = mean(square(sub(TabularModel::mlp_forward(model.mlp, xs), target)));
    if (!std::isfinite(loss.item())) fail(ErrorCode::NonFiniteLoss, "tabular MLP loss diverged");
    model.mlp = adam_step(model.mlp, backward(loss), adam);
  }
  return model;
}

}  // namespace roadsense

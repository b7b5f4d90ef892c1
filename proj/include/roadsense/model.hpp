#pragma once

// Hybrid GCN + GAT volume regressor.
//
// Forward pass, per graph:
//   H0 = X W_in + b_in                                   (input projection)
//   H1 = GCN stack, each layer ReLU(LN(Â H W + b)) + H    (residual)
//   E' = ReLU(E W_e + b_e)                               (edge encoder)
//   H2 = ReLU(LN(GAT(H1, E')))                           (per-node embeddings)
//   H3, A', E'' = TopK(H2)                               (pooled graph)
//   HL = GAT(GCN(H3, A'), E'')
//   g  = mean(HL) || max(HL)
//   ŷ_i = FC(H2_i || g), mapped back from standardized units.
//
// The pooled branch only feeds the global vector; every node, pooled or not,
// gets a prediction from its own H2 row.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "roadsense/error.hpp"
#include "roadsense/graph.hpp"
#include "roadsense/optim.hpp"
#include "roadsense/tensor.hpp"

namespace roadsense {

struct ModelConfig {
  std::size_t hidden_dim = 64;
  std::size_t gcn_layers = 2;
  std::size_t gat_heads = 4;
  std::size_t edge_hidden = 16;
  double topk_ratio = 0.5;
  std::size_t head_hidden = 64;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 300;
  std::size_t patience = 30;
  double leaky_slope = 0.2;
  bool use_gcn = true;
  bool use_gat = true;
  std::uint64_t seed = 0;
};

inline void validate(const ModelConfig& c) {
  if (c.hidden_dim == 0 || c.gat_heads == 0 || c.head_hidden == 0 || c.edge_hidden == 0)
    fail(ErrorCode::InvalidConfig, "model dimensions must be >= 1");
  if (c.hidden_dim % c.gat_heads != 0) fail(ErrorCode::InvalidConfig, "hidden_dim must be divisible by gat_heads");
  if (!(c.topk_ratio > 0.0 && c.topk_ratio <= 1.0)) fail(ErrorCode::InvalidConfig, "topk_ratio must be in (0, 1]");
  if (!c.use_gcn && !c.use_gat) fail(ErrorCode::InvalidConfig, "at least one of GCN and GAT must be enabled");
  if (!(c.learning_rate > 0.0)) fail(ErrorCode::InvalidConfig, "learning_rate must be > 0");
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"hidden_dim", c.hidden_dim},   {"gcn_layers", c.gcn_layers},       {"gat_heads", c.gat_heads},
          {"edge_hidden", c.edge_hidden}, {"topk_ratio", c.topk_ratio},       {"head_hidden", c.head_hidden},
          {"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
          {"leaky_slope", c.leaky_slope}, {"use_gcn", c.use_gcn},             {"use_gat", c.use_gat},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.gcn_layers = j.value("gcn_layers", c.gcn_layers);
  c.gat_heads = j.value("gat_heads", c.gat_heads);
  c.edge_hidden = j.value("edge_hidden", c.edge_hidden);
  c.topk_ratio = j.value("topk_ratio", c.topk_ratio);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.use_gcn = j.value("use_gcn", c.use_gcn);
  c.use_gat = j.value("use_gat", c.use_gat);
  c.seed = j.value("seed", c.seed);
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Graph structure as the layers consume it

struct GraphTopology {
  std::size_t num_nodes = 0;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::shared_ptr<const SparseMatrix> adjacency;
  // Directed message list: both directions of every edge, then one self loop
  // per node. edge_row indexes the edge-embedding table; self loops use row
  // edges.size() (the learned default embedding).
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::vector<std::size_t> edge_row;

  static GraphTopology build(std::size_t n, std::vector<std::pair<NodeId, NodeId>> edges) {
    GraphTopology t;
    t.num_nodes = n;
    t.adjacency = std::make_shared<const SparseMatrix>(normalized_adjacency(n, edges));
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto [u, v] = edges[k];
      t.src.push_back(u);
      t.dst.push_back(v);
      t.edge_row.push_back(k);
      t.src.push_back(v);
      t.dst.push_back(u);
      t.edge_row.push_back(k);
    }
    for (std::size_t i = 0; i < n; ++i) {
      t.src.push_back(i);
      t.dst.push_back(i);
      t.edge_row.push_back(edges.size());
    }
    t.edges = std::move(edges);
    return t;
  }
};

/// Constant per-graph inputs, built once and reused across epochs.
struct GraphInputs {
  Tensor features;
  Tensor edge_attrs;
  GraphTopology topology;
  std::vector<double> volumes;

  static GraphInputs from(const NetworkGraph& g) {
    return {g.feature_matrix(), g.edge_matrix(), GraphTopology::build(g.num_nodes(), edge_pairs(g)), g.volumes()};
  }
  std::size_t num_nodes() const { return topology.num_nodes; }
};

// ---------------------------------------------------------------------------
// Parameters

struct HybridModelParams {
  ModelConfig config;
  std::size_t feature_dim = 0;
  std::size_t edge_dim = 0;
  ParamSet tensors;
  // Labels are standardized for training; predictions are mapped back.
  double target_mean = 0.0;
  double target_std = 1.0;

  const Tensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(ErrorCode::ShapeMismatch, "missing parameter '" + name + "'");
    return it->second;
  }
  bool all_finite() const {
    return std::all_of(tensors.begin(), tensors.end(), [](const auto& kv) { return kv.second.all_finite(); });
  }
};

namespace detail {

inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(1, fan_in + fan_out)));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> d(fan_in * fan_out);
  for (auto& v : d) v = u(rng);
  return Tensor(fan_in, fan_out, std::move(d), true);
}

inline Tensor filled(std::size_t rows, std::size_t cols, double v) {
  return Tensor(rows, cols, std::vector<double>(rows * cols, v), true);
}

inline void add_gcn(ParamSet& p, const std::string& prefix, std::size_t h, std::mt19937_64& rng) {
  p[prefix + ".weight"] = glorot(h, h, rng);
  p[prefix + ".bias"] = filled(1, h, 0.0);
  p[prefix + ".ln_gain"] = filled(1, h, 1.0);
  p[prefix + ".ln_bias"] = filled(1, h, 0.0);
}

inline void add_gat(ParamSet& p, const std::string& prefix, const ModelConfig& c, std::mt19937_64& rng) {
  const std::size_t h = c.hidden_dim, dh = c.hidden_dim / c.gat_heads;
  for (std::size_t k = 0; k < c.gat_heads; ++k) {
    const std::string hp = prefix + ".head" + std::to_string(k);
    p[hp + ".weight"] = glorot(h, dh, rng);
    p[hp + ".att_src"] = glorot(dh, 1, rng);
    p[hp + ".att_dst"] = glorot(dh, 1, rng);
    p[hp + ".att_edge"] = glorot(c.edge_hidden, 1, rng);
  }
  p[prefix + ".ln_gain"] = filled(1, h, 1.0);
  p[prefix + ".ln_bias"] = filled(1, h, 0.0);
}

}  // namespace detail

inline std::string gcn_prefix(std::size_t layer) { return "gcn" + std::to_string(layer); }

/// Fresh parameters, Glorot-uniform weights, unit LayerNorm gains, zero biases.
inline HybridModelParams init_params(const ModelConfig& config, std::size_t feature_dim, std::size_t edge_dim) {
  validate(config);
  std::mt19937_64 rng(config.seed);
  const std::size_t h = config.hidden_dim;
  HybridModelParams m;
  m.config = config;
  m.feature_dim = feature_dim;
  m.edge_dim = edge_dim;
  auto& p = m.tensors;
  p["input.weight"] = detail::glorot(feature_dim, h, rng);
  p["input.bias"] = detail::filled(1, h, 0.0);
  if (config.use_gcn) {
    for (std::size_t l = 0; l < config.gcn_layers; ++l) detail::add_gcn(p, gcn_prefix(l), h, rng);
    detail::add_gcn(p, "pooled_gcn", h, rng);
  }
  if (config.use_gat) {
    p["edge.weight"] = detail::glorot(edge_dim, config.edge_hidden, rng);
    p["edge.bias"] = detail::filled(1, config.edge_hidden, 0.0);
    p["edge.self_loop"] = detail::glorot(1, config.edge_hidden, rng);
    detail::add_gat(p, "gat", config, rng);
    detail::add_gat(p, "pooled_gat", config, rng);
  }
  p["pool.score"] = detail::glorot(h, 1, rng);
  p["head.fc1.weight"] = detail::glorot(3 * h, config.head_hidden, rng);
  p["head.fc1.bias"] = detail::filled(1, config.head_hidden, 0.0);
  p["head.fc2.weight"] = detail::glorot(config.head_hidden, 1, rng);
  p["head.fc2.bias"] = detail::filled(1, 1, 0.0);
  return m;
}

inline HybridModelParams init_params(const ModelConfig& config, const NetworkGraph& g) {
  return init_params(config, g.feature_dim(), g.edge_dim());
}

// ---------------------------------------------------------------------------
// Layers

struct GcnWeights {
  Tensor weight, bias, ln_gain, ln_bias;
};

/// ReLU(LayerNorm(Â H W + b)) + H.
inline Tensor gcn_layer(const Tensor& h, const std::shared_ptr<const SparseMatrix>& a_hat, const GcnWeights& w,
                        double ln_eps = 1e-5) {
  if (w.weight.rows() != h.cols() || w.weight.cols() != h.cols())
    fail(ErrorCode::ShapeMismatch, "gcn_layer: residual needs a square weight matching the input width");
  const Tensor agg = add_rowwise(sparse_matmul(a_hat, matmul(h, w.weight)), w.bias);
  const Tensor normed = add_rowwise(mul_rowwise(layer_norm(agg, ln_eps), w.ln_gain), w.ln_bias);
  return add(relu(normed), h);
}

/// ReLU(E W_e + b_e), row per edge.
inline Tensor encode_edges(const Tensor& e_raw, const Tensor& w_e, const Tensor& b_e) {
  if (e_raw.cols() != w_e.rows())
    fail(ErrorCode::ShapeMismatch, "encode_edges: attrs " + detail::shape_str(e_raw) + " vs W_e " +
                                       detail::shape_str(w_e));
  return relu(add_rowwise(matmul(e_raw, w_e), b_e));
}

struct GatHead {
  Tensor weight, att_src, att_dst, att_edge;
};

struct GatWeights {
  std::vector<GatHead> heads;
  Tensor ln_gain, ln_bias;
};

struct GatOutput {
  Tensor out;
  std::vector<Tensor> attention;  // per head, one weight per directed message
};

/// Edge-aware multi-head attention followed by ReLU(LayerNorm(.)).
/// `edge_table` holds one embedding row per undirected edge plus the self-loop
/// row last.
inline GatOutput gat_layer(const Tensor& h, const GraphTopology& topo, const Tensor& edge_table, const GatWeights& w,
                           double leaky_slope = 0.2, double ln_eps = 1e-5) {
  if (h.rows() != topo.num_nodes) fail(ErrorCode::ShapeMismatch, "gat_layer: feature rows != node count");
  if (edge_table.rows() != topo.edges.size() + 1)
    fail(ErrorCode::ShapeMismatch, "gat_layer: edge table needs |E|+1 rows");
  const Tensor e_dir = gather_rows(edge_table, topo.edge_row);
  GatOutput result;
  std::vector<Tensor> outs;
  for (const auto& head : w.heads) {
    if (head.weight.rows() != h.cols()) fail(ErrorCode::ShapeMismatch, "gat_layer: head weight rows != input width");
    const Tensor wh = matmul(h, head.weight);
    const Tensor s_src = gather_rows(matmul(wh, head.att_src), topo.src);
    const Tensor s_dst = gather_rows(matmul(wh, head.att_dst), topo.dst);
    const Tensor s_edge = matmul(e_dir, head.att_edge);
    const Tensor score = leaky_relu(add(add(s_src, s_dst), s_edge), leaky_slope);
    const Tensor alpha = softmax_over_segments(score, topo.dst, topo.num_nodes);
    const Tensor msg = mul_colwise(gather_rows(wh, topo.src), alpha);
    outs.push_back(scatter_add_rows(msg, topo.dst, topo.num_nodes));
    result.attention.push_back(alpha);
  }
  const Tensor cat = outs.size() == 1 ? outs[0] : concat(outs, 1);
  result.out = relu(add_rowwise(mul_rowwise(layer_norm(cat, ln_eps), w.ln_gain), w.ln_bias));
  return result;
}

struct PoolResult {
  Tensor features;
  GraphTopology topology;
  std::optional<Tensor> edge_embeddings;  // rows of E' for surviving edges
  std::vector<NodeId> kept;               // ascending original ids
  std::vector<double> scores;             // projection score of every input node
};

/// Keeps the ceil(ratio * N) highest-scoring nodes under s = H p / ||p||
/// (ties to the lower id) and gates them by sigmoid(s); returns the induced
/// subgraph.
inline PoolResult topk_pool(const Tensor& h, const GraphTopology& topo, const std::optional<Tensor>& edge_emb,
                            double ratio, const Tensor& p) {
  if (!(ratio > 0.0 && ratio <= 1.0)) fail(ErrorCode::InvalidConfig, "topk ratio must be in (0, 1]");
  const std::size_t n = h.rows();
  const Tensor score = scale(matmul(h, p), reciprocal(add_scalar(l2_norm(p), 1e-12)));
  std::size_t k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, n == 0 ? 0 : 1, n);
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  const auto& sv = score.values();
  std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) { return sv[a] > sv[b]; });
  std::vector<NodeId> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(kept.begin(), kept.end());

  PoolResult r;
  r.scores = sv;
  r.features = mul_colwise(gather_rows(h, kept), sigmoid(gather_rows(score, kept)));
  std::vector<std::size_t> remap(n, n);
  for (std::size_t i = 0; i < kept.size(); ++i) remap[kept[i]] = i;
  std::vector<std::pair<NodeId, NodeId>> sub_edges;
  std::vector<std::size_t> sub_rows;
  for (std::size_t e = 0; e < topo.edges.size(); ++e) {
    const auto [u, v] = topo.edges[e];
    if (remap[u] < n && remap[v] < n) {
      sub_edges.emplace_back(remap[u], remap[v]);
      sub_rows.push_back(e);
    }
  }
  r.topology = GraphTopology::build(kept.size(), std::move(sub_edges));
  if (edge_emb) r.edge_embeddings = gather_rows(*edge_emb, sub_rows);
  r.kept = std::move(kept);
  return r;
}

/// mean(H) || max(H), a (1 x 2h) row.
inline Tensor global_readout(const Tensor& h) {
  if (h.rows() == 0) fail(ErrorCode::EmptyPooledGraph, "readout over zero nodes");
  return concat({mean_reduce(h, 0), max_reduce(h, 0)}, 1);
}

// ---------------------------------------------------------------------------
// Full model

namespace detail {

inline GcnWeights gcn_weights(const HybridModelParams& m, const std::string& prefix) {
  return {m.at(prefix + ".weight"), m.at(prefix + ".bias"), m.at(prefix + ".ln_gain"), m.at(prefix + ".ln_bias")};
}

inline GatWeights gat_weights(const HybridModelParams& m, const std::string& prefix) {
  GatWeights w;
  for (std::size_t k = 0; k < m.config.gat_heads; ++k) {
    const std::string hp = prefix + ".head" + std::to_string(k);
    w.heads.push_back({m.at(hp + ".weight"), m.at(hp + ".att_src"), m.at(hp + ".att_dst"), m.at(hp + ".att_edge")});
  }
  w.ln_gain = m.at(prefix + ".ln_gain");
  w.ln_bias = m.at(prefix + ".ln_bias");
  return w;
}

}  // namespace detail

struct ForwardResult {
  Tensor standardized;  // N x 1, in training units
  Tensor prediction;    // N x 1, riders/day
  Tensor embeddings;    // N x h, per-node (pre-pooling) embeddings
  std::vector<NodeId> kept;
};

inline ForwardResult forward(const HybridModelParams& m, const GraphInputs& in) {
  const auto& c = m.config;
  if (in.features.cols() != m.feature_dim || in.edge_attrs.cols() != m.edge_dim)
    fail(ErrorCode::ShapeMismatch, "graph feature widths (" + std::to_string(in.features.cols()) + ", " +
                                       std::to_string(in.edge_attrs.cols()) + ") do not match the model (" +
                                       std::to_string(m.feature_dim) + ", " + std::to_string(m.edge_dim) + ")");
  const std::size_t n = in.num_nodes();
  Tensor h = add_rowwise(matmul(in.features, m.at("input.weight")), m.at("input.bias"));
  if (c.use_gcn)
    for (std::size_t l = 0; l < c.gcn_layers; ++l)
      h = gcn_layer(h, in.topology.adjacency, detail::gcn_weights(m, gcn_prefix(l)));

  std::optional<Tensor> edge_emb;
  Tensor self_loop;
  if (c.use_gat) {
    edge_emb = encode_edges(in.edge_attrs, m.at("edge.weight"), m.at("edge.bias"));
    self_loop = m.at("edge.self_loop");
    h = gat_layer(h, in.topology, concat({*edge_emb, self_loop}, 0), detail::gat_weights(m, "gat"), c.leaky_slope)
            .out;
  }
  const Tensor node_emb = h;

  PoolResult pooled = topk_pool(node_emb, in.topology, edge_emb, c.topk_ratio, m.at("pool.score"));
  Tensor hl = pooled.features;
  if (c.use_gcn) hl = gcn_layer(hl, pooled.topology.adjacency, detail::gcn_weights(m, "pooled_gcn"));
  if (c.use_gat)
    hl = gat_layer(hl, pooled.topology, concat({*pooled.edge_embeddings, self_loop}, 0),
                   detail::gat_weights(m, "pooled_gat"), c.leaky_slope)
             .out;
  const Tensor global = global_readout(hl);

  const Tensor head_in = concat({node_emb, gather_rows(global, std::vector<std::size_t>(n, 0))}, 1);
  const Tensor hidden = relu(add_rowwise(matmul(head_in, m.at("head.fc1.weight")), m.at("head.fc1.bias")));
  const Tensor out = add_rowwise(matmul(hidden, m.at("head.fc2.weight")), m.at("head.fc2.bias"));
  return {out, add_scalar(mul_scalar(out, m.target_std), m.target_mean), node_emb, std::move(pooled.kept)};
}

/// Per-node volume estimates in riders/day.
inline std::vector<double> predict(const HybridModelParams& m, const GraphInputs& in) {
  return forward(m, in).prediction.values();
}

inline std::vector<double> predict(const HybridModelParams& m, const NetworkGraph& g) {
  return predict(m, GraphInputs::from(g));
}

/// Mean squared error of `pred` against `y` over `nodes`.
inline double mse_over(const std::vector<double>& pred, const std::vector<double>& y, const std::vector<NodeId>& nodes) {
  if (nodes.empty()) return 0.0;
  double s = 0.0;
  for (NodeId i : nodes) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return s / static_cast<double>(nodes.size());
}

/// Training loss in standardized units: mean over `nodes` of (ŷ_i - z_i)^2.
inline Tensor standardized_mse(const HybridModelParams& m, const Tensor& standardized, const std::vector<double>& y,
                               const std::vector<NodeId>& nodes) {
  std::vector<double> z(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) z[k] = (y[nodes[k]] - m.target_mean) / m.target_std;
  return mean(square(sub(gather_rows(standardized, nodes), Tensor::column(std::move(z)))));
}

struct EpochStats {
  double train_mse = 0.0;
  double val_mse = 0.0;
  bool operator==(const EpochStats&) const = default;
};

struct TrainReport {
  std::size_t epochs_run = 0;
  double initial_val_mse = 0.0;
  double best_val_mse = 0.0;
  std::size_t best_epoch = 0;
  std::vector<EpochStats> train_curve;
  double wall_seconds = 0.0;

  /// Equality ignoring wall time.
  bool same_trajectory(const TrainReport& o) const {
    return epochs_run == o.epochs_run && initial_val_mse == o.initial_val_mse && best_val_mse == o.best_val_mse &&
           best_epoch == o.best_epoch && train_curve == o.train_curve;
  }
};

inline nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : r.train_curve) curve.push_back({{"train_mse", e.train_mse}, {"val_mse", e.val_mse}});
  return {{"schema_version", 1},          {"epochs_run", r.epochs_run},   {"initial_val_mse", r.initial_val_mse},
          {"best_val_mse", r.best_val_mse}, {"best_epoch", r.best_epoch}, {"wall_seconds", r.wall_seconds},
          {"train_curve", std::move(curve)}};
}

/// Sets the label standardization from the training labels.
inline void fit_target_scaler(HybridModelParams& m, const std::vector<double>& y, const std::vector<NodeId>& train) {
  if (train.empty()) fail(ErrorCode::EmptyTrainSet, "no training nodes");
  double mean = 0.0;
  for (NodeId i : train) mean += y[i];
  mean /= static_cast<double>(train.size());
  double var = 0.0;
  for (NodeId i : train) var += (y[i] - mean) * (y[i] - mean);
  var /= static_cast<double>(train.size());
  m.target_mean = mean;
  m.target_std = var > 1e-12 ? std::sqrt(var) : 1.0;
}

/// Full-batch Adam on the train-node MSE with early stopping on val MSE.
/// Returns the best-validation checkpoint. With an empty val set the train
/// MSE drives model selection.
inline std::pair<HybridModelParams, TrainReport> train(HybridModelParams params, const GraphInputs& in,
                                                       const SplitAssignment& split) {
  const auto started = std::chrono::steady_clock::now();
  if (split.train.empty()) fail(ErrorCode::EmptyTrainSet, "split has no training nodes");
  const auto& c = params.config;
  fit_target_scaler(params, in.volumes, split.train);
  AdamState adam(AdamConfig{c.learning_rate});
  TrainReport report;
  HybridModelParams best = params;
  double best_score = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < c.max_epochs; ++epoch) {
    const ForwardResult f = forward(params, in);
    const Tensor loss = standardized_mse(params, f.standardized, in.volumes, split.train);
    if (!loss.all_finite()) fail(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch));
    EpochStats stats{mse_over(f.prediction.values(), in.volumes, split.train),
                     mse_over(f.prediction.values(), in.volumes, split.val)};
    const double score = split.val.empty() ? stats.train_mse : stats.val_mse;
    if (epoch == 0) report.initial_val_mse = stats.val_mse;
    report.train_curve.push_back(stats);
    if (score < best_score) {
      best_score = score;
      best = params;
      report.best_epoch = epoch;
      report.best_val_mse = stats.val_mse;
      since_best = 0;
    } else if (++since_best >= c.patience) {
      report.epochs_run = epoch + 1;
      break;
    }
    params.tensors = adam_step(params.tensors, backward(loss), adam);
    report.epochs_run = epoch + 1;
  }
  if (report.train_curve.empty()) {
    report.initial_val_mse = report.best_val_mse = mse_over(predict(params, in), in.volumes, split.val);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {best, report};
}

inline std::pair<HybridModelParams, TrainReport> train(HybridModelParams params, const NetworkGraph& g,
                                                       const SplitAssignment& split) {
  return train(std::move(params), GraphInputs::from(g), split);
}

/// Exactly `epochs` Adam updates from the current parameters on split.train,
/// keeping the label standardization fixed. No early stopping.
inline HybridModelParams warm_finetune(HybridModelParams params, const GraphInputs& in, const SplitAssignment& split,
                                       std::size_t epochs) {
  if (epochs == 0) return params;
  if (split.train.empty()) fail(ErrorCode::EmptyTrainSet, "split has no training nodes");
  AdamState adam(AdamConfig{params.config.learning_rate});
  for (std::size_t e = 0; e < epochs; ++e) {
    const ForwardResult f = forward(params, in);
    const Tensor loss = standardized_mse(params, f.standardized, in.volumes, split.train);
    if (!loss.all_finite()) fail(ErrorCode::NonFiniteLoss, "fine-tune epoch " + std::to_string(e));
    params.tensors = adam_step(params.tensors, backward(loss), adam);
  }
  return params;
}

// Checkpoint glue.

inline nlohmann::json model_meta(const HybridModelParams& m) {
  return {{"kind", "hybrid"},          {"config", to_json(m.config)},   {"feature_dim", m.feature_dim},
          {"edge_dim", m.edge_dim},    {"target_mean", m.target_mean}, {"target_std", m.target_std}};
}

inline void save_model(const std::filesystem::path& path, const HybridModelParams& m) {
  save_checkpoint(path, m.tensors, model_meta(m));
}

inline HybridModelParams load_model(const std::filesystem::path& path) {
  auto ck = load_checkpoint(path);
  HybridModelParams m;
  try {
    m.config = model_config_from_json(ck.meta.at("config"));
    m.feature_dim = ck.meta.at("feature_dim").get<std::size_t>();
    m.edge_dim = ck.meta.at("edge_dim").get<std::size_t>();
    m.target_mean = ck.meta.at("target_mean").get<double>();
    m.target_std = ck.meta.at("target_std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  m.tensors = std::move(ck.params);
  return m;
}

}  // namespace roadsense

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "roadsense/model.hpp"
#include "roadsense/synthetic.hpp"
#include "support.hpp"

using namespace roadsense;
using namespace roadsense::testing;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 3) {
  ModelConfig c;
  c.hidden_dim = 4;
  c.gat_heads = 2;
  c.edge_hidden = 3;
  c.head_hidden = 5;
  c.topk_ratio = 0.6;
  c.seed = seed;
  return c;
}

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(1, n, std::move(v), true);
}

Tensor identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor(n, n, std::move(v), true);
}

std::vector<double> layer_norm_ref(const std::vector<double>& v, double eps = 1e-5) {
  const double n = static_cast<double>(v.size());
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu) / n;
  std::vector<double> out;
  for (double x : v) out.push_back((x - mu) / std::sqrt(var + eps));
  return out;
}

// Relabels node i as perm[i]; edge order and attributes are preserved.
NetworkGraph permuted(const NetworkGraph& g, const std::vector<NodeId>& perm) {
  std::vector<RoadNode> nodes = g.nodes();
  for (auto& n : nodes) n.id = perm[n.id];
  std::vector<RoadEdge> edges = g.edges();
  for (auto& e : edges) {
    e.u = perm[e.u];
    e.v = perm[e.v];
  }
  return NetworkGraph(std::move(nodes), std::move(edges), g.feature_dim(), g.edge_dim());
}

SplitAssignment all_train(std::size_t n) {
  SplitAssignment s;
  s.train.resize(n);
  std::iota(s.train.begin(), s.train.end(), NodeId{0});
  return s;
}

}  // namespace

TEST(GcnLayer, IsolatedNodeIdentityWeights) {
  const auto a = std::make_shared<const SparseMatrix>(normalized_adjacency(1, {}));
  const std::vector<double> v{0.5, -1.0, 2.0};
  const Tensor out = gcn_layer(row(v), a, {identity(3), row({0, 0, 0}), row({1, 1, 1}), row({0, 0, 0})});
  const auto ln = layer_norm_ref(v);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out.values()[j], std::max(0.0, ln[j]) + v[j], 1e-12);
}

TEST(GcnLayer, ZeroInputGivesZero) {
  std::mt19937_64 rng(1);
  const auto a = std::make_shared<const SparseMatrix>(normalized_adjacency(4, path_edges(4)));
  const Tensor h(4, 3, std::vector<double>(12, 0.0), false);
  const Tensor out = gcn_layer(h, a, {random_tensor(3, 3, rng), row({0, 0, 0}), row({1, 1, 1}), row({0, 0, 0})});
  for (double x : out.values()) EXPECT_EQ(x, 0.0);
}

TEST(GcnLayer, WeightGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const auto a = std::make_shared<const SparseMatrix>(normalized_adjacency(4, path_edges(4)));
  const Tensor h = random_tensor(4, 3, rng, -1, 1, false);
  ParamSet p{{"w", random_tensor(3, 3, rng)}, {"b", random_tensor(1, 3, rng)}};
  const Tensor gain = random_tensor(1, 3, rng, 0.5, 1.5, false), bias = random_tensor(1, 3, rng, -0.1, 0.1, false);
  const Tensor probe = random_tensor(4, 3, rng, -1, 1, false);
  const auto check = check_gradients(p, [&](const ParamSet& q) {
    return sum(mul(gcn_layer(h, a, {q.at("w"), q.at("b"), gain, bias}), probe));
  });
  EXPECT_LT(check.max_rel_error, 1e-4) << check.worst;
}

TEST(GcnLayer, RejectsNonSquareWeight) {
  std::mt19937_64 rng(3);
  const auto a = std::make_shared<const SparseMatrix>(normalized_adjacency(2, {{0, 1}}));
  EXPECT_THROW(gcn_layer(random_tensor(2, 3, rng), a,
                         {random_tensor(3, 2, rng), row({0, 0}), row({1, 1}), row({0, 0})}),
               Error);
}

TEST(EncodeEdges, IdentityOnNonNegativeAttrs) {
  const Tensor e(3, 2, {0.0, 1.0, 2.5, 0.3, 4.0, 0.0}, false);
  EXPECT_EQ(encode_edges(e, identity(2), row({0, 0})).values(), e.values());
}

TEST(EncodeEdges, NegativePreActivationIsZero) {
  const Tensor e(2, 2, {1.0, 2.0, 3.0, 0.5}, false);
  const Tensor w(2, 2, {-1.0, -2.0, -0.5, -1.0}, false);
  const Tensor out = encode_edges(e, w, row({0.0, -0.1}));
  for (double x : out.values()) EXPECT_EQ(x, 0.0);
}

TEST(EncodeEdges, MatchesHandArithmetic) {
  std::mt19937_64 rng(4);
  const Tensor e = random_tensor(3, 2, rng), w = random_tensor(2, 4, rng), b = random_tensor(1, 4, rng);
  const auto out = encode_edges(e, w, b);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const double z = e(r, 0) * w(0, c) + e(r, 1) * w(1, c) + b(0, c);
      EXPECT_NEAR(out(r, c), std::max(0.0, z), 1e-14);
    }
  EXPECT_THROW(encode_edges(e, random_tensor(3, 4, rng), b), Error);
}

namespace {

GatWeights random_gat(std::size_t in, std::size_t heads, std::size_t dh, std::size_t de, std::mt19937_64& rng) {
  GatWeights w;
  for (std::size_t k = 0; k < heads; ++k)
    w.heads.push_back({random_tensor(in, dh, rng), random_tensor(dh, 1, rng), random_tensor(dh, 1, rng),
                       random_tensor(de, 1, rng)});
  w.ln_gain = Tensor(1, heads * dh, std::vector<double>(heads * dh, 1.0), true);
  w.ln_bias = Tensor(1, heads * dh, std::vector<double>(heads * dh, 0.0), true);
  return w;
}

}  // namespace

TEST(GatLayer, SelfLoopOnlyNode) {
  std::mt19937_64 rng(5);
  const auto topo = GraphTopology::build(1, {});
  const Tensor h = random_tensor(1, 4, rng);
  const auto w = random_gat(4, 2, 2, 3, rng);
  const auto r = gat_layer(h, topo, random_tensor(1, 3, rng), w);
  std::vector<double> cat;
  for (const auto& head : w.heads) {
    const auto wh = matmul(h, head.weight).values();
    cat.insert(cat.end(), wh.begin(), wh.end());
  }
  const auto ln = layer_norm_ref(cat);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r.out.values()[j], std::max(0.0, ln[j]), 1e-12);
  for (const auto& a : r.attention) EXPECT_DOUBLE_EQ(a.item(), 1.0);
}

TEST(GatLayer, IdenticalScoresSplitEvenly) {
  std::mt19937_64 rng(6);
  const auto topo = GraphTopology::build(2, {{0, 1}});
  const Tensor h(2, 3, {0.3, -0.2, 0.9, 0.3, -0.2, 0.9}, false);
  const Tensor edge = random_tensor(1, 2, rng);
  const Tensor table = concat({edge, edge}, 0);  // edge embedding equals the self-loop embedding
  const auto r = gat_layer(h, topo, table, random_gat(3, 1, 2, 2, rng));
  for (double a : r.attention[0].values()) EXPECT_NEAR(a, 0.5, 1e-15);
}

TEST(GatLayer, AttentionSumsToOnePerNodeAndHead) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 6 + static_cast<std::size_t>(seed);
    const auto topo = GraphTopology::build(n, random_edges(n, 0.3, rng));
    const auto r = gat_layer(random_tensor(n, 4, rng, -3, 3), topo, random_tensor(topo.edges.size() + 1, 3, rng),
                             random_gat(4, 2, 2, 3, rng));
    for (const auto& alpha : r.attention) {
      std::vector<double> total(n, 0.0);
      for (std::size_t m = 0; m < topo.dst.size(); ++m) total[topo.dst[m]] += alpha.values()[m];
      for (double t : total) EXPECT_NEAR(t, 1.0, 1e-12);
    }
  }
}

TEST(TopkPool, KeepAllGatesBySigmoid) {
  std::mt19937_64 rng(7);
  const auto topo = GraphTopology::build(4, path_edges(4));
  const Tensor h = random_tensor(4, 3, rng), p = random_tensor(3, 1, rng);
  const auto r = topk_pool(h, topo, std::nullopt, 1.0, p);
  EXPECT_EQ(r.kept, (std::vector<NodeId>{0, 1, 2, 3}));
  const double norm = std::sqrt(p(0, 0) * p(0, 0) + p(1, 0) * p(1, 0) + p(2, 0) * p(2, 0));
  for (std::size_t i = 0; i < 4; ++i) {
    const double s = (h(i, 0) * p(0, 0) + h(i, 1) * p(1, 0) + h(i, 2) * p(2, 0)) / norm;
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(r.features(i, j), h(i, j) / (1.0 + std::exp(-s)), 1e-12);
  }
  EXPECT_EQ(r.topology.edges, topo.edges);
}

TEST(TopkPool, ArgmaxAndTieBreak) {
  const auto two = topk_pool(Tensor(2, 1, {0.9, 0.1}, false), GraphTopology::build(2, {{0, 1}}), std::nullopt, 0.5,
                             Tensor(1, 1, {1.0}, true));
  EXPECT_EQ(two.kept, std::vector<NodeId>{0});
  const Tensor h(6, 1, {0.1, 0.2, 0.8, 0.3, 0.0, 0.8}, false);
  for (int rep = 0; rep < 5; ++rep) {
    const auto r = topk_pool(h, GraphTopology::build(6, {}), std::nullopt, 1.0 / 6.0, Tensor(1, 1, {2.0}, true));
    EXPECT_EQ(r.kept, std::vector<NodeId>{2});
  }
}

TEST(TopkPool, InducedSubgraphCarriesEdgeRows) {
  const auto topo = GraphTopology::build(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  const Tensor h(4, 1, {1.0, 0.9, -1.0, 0.8}, false);
  const Tensor emb(4, 1, {10.0, 11.0, 12.0, 13.0}, false);
  const auto r = topk_pool(h, topo, emb, 0.75, Tensor(1, 1, {1.0}, true));
  EXPECT_EQ(r.kept, (std::vector<NodeId>{0, 1, 3}));
  // Surviving edges (0,1) and (0,3) remapped to local ids.
  EXPECT_EQ(r.topology.edges, (std::vector<std::pair<NodeId, NodeId>>{{0, 1}, {0, 2}}));
  EXPECT_EQ(r.edge_embeddings->values(), (std::vector<double>{10.0, 13.0}));
}

TEST(Readout, Examples) {
  EXPECT_EQ(global_readout(Tensor(1, 2, {3.0, -1.0}, false)).values(), (std::vector<double>{3, -1, 3, -1}));
  EXPECT_EQ(global_readout(Tensor(2, 2, {3.0, -1.0, 3.0, -1.0}, false)).values(),
            (std::vector<double>{3, -1, 3, -1}));
  EXPECT_EQ(global_readout(Tensor(2, 2, {0.0, 1.0, 2.0, 3.0}, false)).values(), (std::vector<double>{1, 2, 2, 3}));
  try {
    global_readout(Tensor(0, 2, {}, false));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyPooledGraph);
  }
}

TEST(HybridModel, EveryParameterGradientMatchesFiniteDifferences) {
  const auto g = small_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 2}}, 11);
  const auto in = GraphInputs::from(g);
  auto m = init_params(tiny_config(), g);
  m.target_mean = 40.0;
  m.target_std = 25.0;
  const std::vector<NodeId> nodes{0, 1, 2, 3, 4};
  const auto check = check_gradients(m.tensors, [&](const ParamSet& p) {
    HybridModelParams q = m;
    q.tensors = p;
    return standardized_mse(q, forward(q, in).standardized, in.volumes, nodes);
  }, 1e-5);
  EXPECT_EQ(check.checked, [&] {
    std::size_t n = 0;
    for (const auto& [name, t] : m.tensors) n += t.size();
    return n;
  }());
  EXPECT_LT(check.max_rel_error, 1e-4) << check.worst;
}

TEST(HybridModel, AblatedVariantsGradientsMatch) {
  const auto g = small_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 12);
  const auto in = GraphInputs::from(g);
  for (int variant = 0; variant < 2; ++variant) {
    auto c = tiny_config(5);
    (variant == 0 ? c.use_gat : c.use_gcn) = false;
    const auto m = init_params(c, g);
    const auto check = check_gradients(m.tensors, [&](const ParamSet& p) {
      HybridModelParams q = m;
      q.tensors = p;
      return standardized_mse(q, forward(q, in).standardized, in.volumes, {0, 2, 4});
    }, 1e-5);
    EXPECT_LT(check.max_rel_error, 1e-4) << variant << " " << check.worst;
  }
}

TEST(HybridModel, ZeroParametersGiveFinalBias) {
  const auto g = small_graph(6, path_edges(6), 13);
  auto m = init_params(tiny_config(), g);
  for (auto& [name, t] : m.tensors) t = Tensor(t.rows(), t.cols(), std::vector<double>(t.size(), 0.0), true);
  m.tensors["head.fc2.bias"] = Tensor(1, 1, {0.7}, true);
  for (double y : predict(m, g)) EXPECT_DOUBLE_EQ(y, 0.7);
}

TEST(HybridModel, PermutationEquivariant) {
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto g = small_graph(10, random_edges(10, 0.3, rng), 200 + seed);
    std::vector<NodeId> perm(10);
    std::iota(perm.begin(), perm.end(), NodeId{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto m = init_params(tiny_config(seed), g);
    const auto y = predict(m, g);
    const auto yp = predict(m, permuted(g, perm));
    for (NodeId i = 0; i < 10; ++i) EXPECT_NEAR(yp[perm[i]], y[i], 1e-9);
  }
}

TEST(HybridModel, TwinNodesPredictAlike) {
  // Nodes 3 and 4 share features and both touch only nodes 0 and 1 with the same attributes.
  auto g0 = small_graph(5, {{0, 1}, {0, 2}, {0, 3}, {1, 3}, {0, 4}, {1, 4}}, 14);
  auto nodes = g0.nodes();
  nodes[4].features = nodes[3].features;
  auto edges = g0.edges();
  edges[4].attrs = edges[2].attrs;
  edges[5].attrs = edges[3].attrs;
  const NetworkGraph g(nodes, edges, g0.feature_dim(), g0.edge_dim());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto y = predict(init_params(tiny_config(seed), g), g);
    EXPECT_NEAR(y[3], y[4], 1e-12);
  }
}

TEST(HybridModel, ShapeMismatchOnWrongWidth) {
  const auto g = small_graph(4, path_edges(4), 15, 3);
  const auto m = init_params(tiny_config(), 5, 2);
  try {
    predict(m, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(HybridModel, ConfigValidation) {
  auto c = tiny_config();
  c.topk_ratio = 0.0;
  EXPECT_THROW(init_params(c, 3, 2), Error);
  c = tiny_config();
  c.hidden_dim = 5;
  EXPECT_THROW(init_params(c, 3, 2), Error);
  c = tiny_config();
  c.use_gcn = c.use_gat = false;
  EXPECT_THROW(init_params(c, 3, 2), Error);
}

TEST(Training, SingleNodeFitsConstant) {
  std::vector<RoadNode> nodes{{0, {0.2, 0.4, 0.6}, 37.0, RoadClass::Other}};
  const NetworkGraph g(nodes, {}, 3, 2);
  auto c = tiny_config();
  c.max_epochs = 200;
  c.patience = 200;
  const auto [m, report] = train(init_params(c, g), g, all_train(1));
  EXPECT_LE(report.epochs_run, 200u);
  EXPECT_LT(report.train_curve.back().train_mse, 1e-4);
  EXPECT_NEAR(predict(m, g)[0], 37.0, 1e-2);
}

TEST(Training, EmptyTrainSetThrows) {
  const auto g = small_graph(3, path_edges(3));
  try {
    train(init_params(tiny_config(), g), g, SplitAssignment{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTrainSet);
  }
}

namespace {

struct Instance {
  NetworkGraph graph;
  GraphInputs inputs;
  SensorPartition partition;
  SplitAssignment split;
};

Instance planted(std::uint64_t seed, double labeled) {
  SyntheticConfig sc;
  sc.seed = seed;
  auto g = generate_synthetic(sc);
  auto p = make_partition(g, labeled, seed + 1);
  auto s = make_splits(g, p, seed + 2);
  auto in = GraphInputs::from(g);
  return {std::move(g), std::move(in), std::move(p), std::move(s)};
}

ModelConfig desk_config(std::uint64_t seed) {
  ModelConfig c;
  c.hidden_dim = 32;
  c.head_hidden = 32;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Training, HalvesValidationErrorOnPlantedSignal) {
  const auto inst = planted(7, 0.5);
  const auto [m, report] = train(init_params(desk_config(1), inst.graph), inst.inputs, inst.split);
  EXPECT_LT(report.best_val_mse, 0.5 * report.initial_val_mse)
      << report.best_val_mse << " vs " << report.initial_val_mse;
  double best = report.train_curve.front().val_mse;
  for (const auto& e : report.train_curve) best = std::min(best, e.val_mse);
  EXPECT_DOUBLE_EQ(report.best_val_mse, best);
  EXPECT_DOUBLE_EQ(mse_over(predict(m, inst.inputs), inst.inputs.volumes, inst.split.val), report.best_val_mse);
}

TEST(Training, DeterministicForSeed) {
  const auto g = small_graph(20, path_edges(20), 16);
  const auto p = make_partition_count(g, 6, 1);
  const auto split = make_splits(g, p, 2);
  auto c = tiny_config();
  c.max_epochs = 40;
  const auto a = train(init_params(c, g), g, split);
  const auto b = train(init_params(c, g), g, split);
  EXPECT_EQ(a.second.train_curve, b.second.train_curve);
  EXPECT_EQ(a.second.best_epoch, b.second.best_epoch);
  EXPECT_EQ(a.second.epochs_run, b.second.epochs_run);
  EXPECT_EQ(predict(a.first, g), predict(b.first, g));
}

TEST(WarmFinetune, ZeroEpochsLeavesParamsUnchanged) {
  const auto g = small_graph(8, path_edges(8), 17);
  const auto m = init_params(tiny_config(), g);
  const auto in = GraphInputs::from(g);
  const auto out = warm_finetune(m, in, all_train(8), 0);
  for (const auto& [name, t] : m.tensors) EXPECT_EQ(out.at(name).values(), t.values()) << name;
}

TEST(WarmFinetune, PerfectlyPredictedSensorChangesNothing) {
  const auto inst = planted(21, 0.3);
  const auto m = train(init_params(desk_config(2), inst.graph), inst.inputs, inst.split).first;
  auto in = inst.inputs;
  auto pred = predict(m, in);
  NodeId extra = 0;
  const auto holdout = inst.split.holdout();
  for (NodeId id : inst.partition.unlabeled())
    if (!std::binary_search(holdout.begin(), holdout.end(), id)) {
      extra = id;
      break;
    }
  in.volumes[extra] = pred[extra];
  const auto split = with_train(inst.split, inst.partition.with_new_sensor(extra));
  const double before = mse_over(pred, in.volumes, split.val);
  const double after = mse_over(predict(warm_finetune(m, in, split, 0), in), in.volumes, split.val);
  EXPECT_LT(std::abs(after - before), 1e-6);
}

TEST(WarmFinetune, UsuallyLowersValidationLoss) {
  int improved = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto inst = planted(1000 + trial, 0.1);
    const auto m = train(init_params(desk_config(trial), inst.graph), inst.inputs, inst.split).first;
    const double before = mse_over(predict(m, inst.inputs), inst.inputs.volumes, inst.split.val);
    const auto holdout = inst.split.holdout();
    std::vector<NodeId> pool;
    for (NodeId id : inst.partition.unlabeled())
      if (!std::binary_search(holdout.begin(), holdout.end(), id)) pool.push_back(id);
    std::mt19937_64 rng(trial);
    std::vector<NodeId> chosen;
    std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), 5, rng);
    const auto split = with_train(inst.split, inst.partition.with_new_sensors(chosen));
    const double after = mse_over(predict(warm_finetune(m, inst.inputs, split, 10), inst.inputs),
                                  inst.inputs.volumes, split.val);
    if (after <= before) ++improved;
  }
  EXPECT_GE(improved, 16);
}

TEST(ModelFile, SaveLoadRoundTrip) {
  const auto g = small_graph(6, path_edges(6), 18);
  auto m = init_params(tiny_config(), g);
  m.target_mean = 12.5;
  m.target_std = 3.25;
  const auto path = std::filesystem::temp_directory_path() / "roadsense_model_rt.json";
  save_model(path, m);
  const auto back = load_model(path);
  std::filesystem::remove(path);
  EXPECT_EQ(predict(back, g), predict(m, g));
  EXPECT_EQ(back.config.hidden_dim, 4u);
  EXPECT_EQ(back.target_std, 3.25);
}

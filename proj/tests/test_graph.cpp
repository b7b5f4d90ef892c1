#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "roadsense/graph.hpp"
#include "roadsense/graph_io.hpp"
#include "roadsense/synthetic.hpp"
#include "support.hpp"

using namespace roadsense;
using roadsense::testing::random_edges;
using roadsense::testing::small_graph;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::IoError;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("roadsense_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& f) const { return path / f; }
};

void write_file(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

NetworkGraph isolated_nodes(std::size_t n) {
  std::vector<RoadNode> nodes(n);
  for (NodeId i = 0; i < n; ++i) nodes[i].id = i;
  return NetworkGraph(std::move(nodes), {}, 0, 0);
}

}  // namespace

TEST(Graph, LoadsMinimalFiles) {
  TempDir dir("graph_min");
  write_file(dir / "n.csv", "id,road_class,volume,f_0\n0,local_mixed,10,0.5\n1,other,20,1.5\n");
  write_file(dir / "e.csv", "u,v,e_0\n0,1,1.0\n");
  const auto g = load_graph(dir / "n.csv", dir / "e.csv");
  EXPECT_EQ(g.num_nodes(), 2u);
  EXPECT_EQ(g.num_edges(), 1u);
  EXPECT_EQ(g.feature_dim(), 1u);
  EXPECT_EQ(g.node(1).road_class, RoadClass::Other);
}

TEST(Graph, LoadErrors) {
  TempDir dir("graph_err");
  write_file(dir / "n.csv", "id,road_class,volume\n0,local_mixed,10\n1,other,20\n");
  write_file(dir / "dangling.csv", "u,v\n0,99\n");
  write_file(dir / "dup_edge.csv", "u,v\n0,1\n1,0\n");
  write_file(dir / "dup_node.csv", "id,road_class,volume\n0,local_mixed,10\n0,other,20\n");
  write_file(dir / "bad.csv", "id,road_class,volume\n0,local_mixed,ten\n");
  write_file(dir / "e.csv", "u,v\n");
  EXPECT_EQ(code_of([&] { load_graph(dir / "n.csv", dir / "dangling.csv"); }), ErrorCode::DanglingEdgeEndpoint);
  EXPECT_EQ(code_of([&] { load_graph(dir / "n.csv", dir / "dup_edge.csv"); }), ErrorCode::DuplicateEdge);
  EXPECT_EQ(code_of([&] { load_graph(dir / "dup_node.csv", dir / "e.csv"); }), ErrorCode::DuplicateNodeId);
  EXPECT_EQ(code_of([&] { load_graph(dir / "bad.csv", dir / "e.csv"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([&] { load_graph(dir / "missing.csv", dir / "e.csv"); }), ErrorCode::MissingFile);
}

TEST(Graph, ParseErrorNamesTheLine) {
  TempDir dir("graph_line");
  write_file(dir / "n.csv", "id,road_class,volume\n0,local_mixed,10\n1,other,x\n");
  write_file(dir / "e.csv", "u,v\n");
  try {
    load_graph(dir / "n.csv", dir / "e.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Graph, SaveLoadRoundTrip) {
  TempDir dir("graph_rt");
  SyntheticConfig c;
  c.n_nodes = 60;
  const auto g = generate_synthetic(c);
  save_graph(g, dir / "n.csv", dir / "e.csv");
  EXPECT_EQ(load_graph(dir / "n.csv", dir / "e.csv"), g);
  save_graph_json(g, dir / "g.json");
  EXPECT_EQ(load_graph_json(dir / "g.json"), g);
}

TEST(Graph, ZeroWidthFeaturesRoundTrip) {
  TempDir dir("graph_d0");
  const auto g = isolated_nodes(3);
  save_graph(g, dir / "n.csv", dir / "e.csv");
  const auto back = load_graph(dir / "n.csv", dir / "e.csv");
  EXPECT_EQ(back, g);
  EXPECT_EQ(back.feature_dim(), 0u);
}

TEST(Graph, SaveEmptyGraphFails) {
  TempDir dir("graph_empty");
  EXPECT_EQ(code_of([&] { save_graph(NetworkGraph{}, dir / "n.csv", dir / "e.csv"); }), ErrorCode::EmptyGraph);
}

TEST(Graph, ConstructorValidates) {
  RoadNode a{0, {}, 1.0, RoadClass::Other}, b{1, {}, -1.0, RoadClass::Other};
  EXPECT_EQ(code_of([&] { NetworkGraph({a, b}, {}, 0, 0); }), ErrorCode::InvalidGraph);
  b.true_volume = 2.0;
  EXPECT_EQ(code_of([&] { NetworkGraph({a, b}, {{0, 0, {}}}, 0, 0); }), ErrorCode::InvalidGraph);
  RoadNode gap{5, {}, 1.0, RoadClass::Other};
  EXPECT_EQ(code_of([&] { NetworkGraph({a, gap}, {}, 0, 0); }), ErrorCode::InvalidGraph);
}

TEST(Adjacency, SingleNodeIsOne) {
  const auto s = normalized_adjacency(1, {});
  EXPECT_EQ(s.to_dense(), std::vector<double>({1.0}));
}

TEST(Adjacency, TwoNodesAllHalf) {
  const auto s = normalized_adjacency(2, {{0, 1}});
  for (double v : s.to_dense()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Adjacency, SymmetricWithSpectralRadiusAtMostOne) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 5 + seed * 2;
    const auto s = normalized_adjacency(n, random_edges(n, 0.2, rng));
    const auto d = s.to_dense();
    Eigen::MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(i, j) = d[i * n + j];
    EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    const double dense_radius = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().cwiseAbs().maxCoeff();
    // Power iteration on M^2 gives the largest |λ| without sign oscillation.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n) + Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
    double radius = 0.0;
    for (int it = 0; it < 2000; ++it) {
      v = m * (m * v);
      radius = std::sqrt(v.norm());
      v.normalize();
    }
    EXPECT_NEAR(radius, dense_radius, 1e-6);
    EXPECT_LE(dense_radius, 1.0 + 1e-12);
  }
}

TEST(Partition, MelbourneSparsity) {
  const auto g = isolated_nodes(15933);
  const auto p = make_partition_count(g, 141, 3);
  EXPECT_EQ(p.existing().size(), 141u);
  EXPECT_EQ(p.unlabeled().size(), 15792u);
  EXPECT_NEAR(sparsity(p), 0.99115, 1e-5);
  const auto s = make_splits(g, p, 4);
  EXPECT_EQ(s.val.size(), 2368u);
  EXPECT_EQ(s.test.size(), 2368u);
}

TEST(Partition, FullCoverageAndDeterminism) {
  const auto g = isolated_nodes(20);
  EXPECT_TRUE(make_partition(g, 1.0, 1).unlabeled().empty());
  EXPECT_DOUBLE_EQ(sparsity(make_partition(g, 1.0, 1)), 0.0);
  EXPECT_EQ(make_partition(g, 0.3, 9), make_partition(g, 0.3, 9));
  EXPECT_EQ(code_of([&] { make_partition(g, 0.0, 1); }), ErrorCode::InvalidFraction);
  EXPECT_EQ(code_of([&] { make_partition(g, 0.01, 1); }), ErrorCode::InvalidFraction);
  EXPECT_EQ(code_of([&] { make_partition(g, 1.5, 1); }), ErrorCode::InvalidFraction);
}

TEST(Splits, TooFewUnlabeled) {
  const auto g = isolated_nodes(4);
  const SensorPartition p(4, {0, 1}, {});
  EXPECT_EQ(code_of([&] { make_splits(g, p, 1); }), ErrorCode::TooFewUnlabeled);
  const SensorPartition q(4, {0, 1, 2}, {});
  EXPECT_EQ(code_of([&] { make_splits(g, q, 1); }), ErrorCode::TooFewUnlabeled);
}

TEST(Splits, DisjointCoverAfterAnySequenceOfPlacements) {
  const auto g = isolated_nodes(100);
  for (int seed = 0; seed < 20; ++seed) {
    auto p = make_partition_count(g, 10, seed);
    std::mt19937_64 rng(seed);
    for (int step = 0; step < 30; ++step) {
      const auto& u = p.unlabeled();
      p = p.with_new_sensor(u[std::uniform_int_distribution<std::size_t>(0, u.size() - 1)(rng)]);
      std::set<NodeId> all;
      for (const auto* set : {&p.existing(), &p.added(), &p.unlabeled()})
        for (NodeId id : *set) EXPECT_TRUE(all.insert(id).second);
      EXPECT_EQ(all.size(), 100u);
      const auto s = make_splits(g, p, seed + 100);
      std::set<NodeId> seen;
      for (const auto* set : {&s.train, &s.val, &s.test})
        for (NodeId id : *set) EXPECT_TRUE(seen.insert(id).second);
      for (NodeId id : s.holdout()) EXPECT_FALSE(p.is_labeled(id));
    }
  }
}

TEST(Splits, NewSensorMovesToTrain) {
  const auto g = isolated_nodes(50);
  const auto p = make_partition_count(g, 5, 1);
  const NodeId a = p.unlabeled().front();
  const auto s = make_splits(g, p.with_new_sensor(a), 2);
  EXPECT_TRUE(std::binary_search(s.train.begin(), s.train.end(), a));
  EXPECT_FALSE(std::binary_search(s.val.begin(), s.val.end(), a));
  EXPECT_FALSE(std::binary_search(s.test.begin(), s.test.end(), a));
  EXPECT_EQ(code_of([&] { (void)p.with_new_sensor(p.existing().front()); }), ErrorCode::InvalidAction);
}

TEST(Sensors, FileRoundTrip) {
  TempDir dir("sensors");
  const SensorPartition p(10, {1, 4}, {7});
  save_sensors(p, dir / "s.csv");
  EXPECT_EQ(load_sensors(dir / "s.csv", 10), p);
  EXPECT_EQ(code_of([&] { load_sensors(dir / "s.csv", 5); }), ErrorCode::GraphMismatch);
}

TEST(Synthetic, DeterministicForSeed) {
  SyntheticConfig c;
  c.seed = 7;
  TempDir dir("synth_det");
  save_graph(generate_synthetic(c), dir / "a_n.csv", dir / "a_e.csv");
  save_graph(generate_synthetic(c), dir / "b_n.csv", dir / "b_e.csv");
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir / "a_n.csv"), slurp(dir / "b_n.csv"));
  EXPECT_EQ(slurp(dir / "a_e.csv"), slurp(dir / "b_e.csv"));
}

TEST(Synthetic, NoDiffusionSingleSource) {
  SyntheticConfig c;
  c.n_nodes = 30;
  c.volume.noise_sd = 0.0;
  c.volume.diffusion_steps = 0;
  c.volume.source_count = 1;
  c.volume.intensity_min = c.volume.intensity_max = 10.0;
  const auto y = generate_synthetic(c).volumes();
  std::size_t sources = 0;
  for (double v : y) {
    if (v == 10.0)
      ++sources;
    else
      EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(sources, 1u);
}

TEST(Synthetic, MeanDegreeAndConnectivity) {
  SyntheticConfig c;
  c.n_nodes = 500;
  c.avg_degree = 4.0;
  const auto g = generate_synthetic(c);
  const double mean_degree = 2.0 * static_cast<double>(g.num_edges()) / 500.0;
  EXPECT_NEAR(mean_degree, 4.0, 0.5);
  std::vector<bool> seen(500, false);
  std::vector<NodeId> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (NodeId w : g.neighbors(v))
      if (!seen[w]) {
        seen[w] = true;
        ++reached;
        stack.push_back(w);
      }
  }
  EXPECT_EQ(reached, 500u);
}

TEST(Synthetic, RejectsBadConfig) {
  SyntheticConfig c;
  c.n_nodes = 1;
  EXPECT_EQ(code_of([&] { generate_synthetic(c); }), ErrorCode::InvalidConfig);
  c = {};
  c.class_mix[0] += 0.1;
  EXPECT_EQ(code_of([&] { generate_synthetic(c); }), ErrorCode::InvalidConfig);
}

TEST(Synthetic, VolumesAreSpatiallyAutocorrelated) {
  SyntheticConfig c;
  const auto g = generate_synthetic(c);
  const auto y = g.volumes();
  double mean = 0.0;
  for (double v : y) mean += v / static_cast<double>(y.size());
  double num = 0.0, den = 0.0;
  for (const auto& e : g.edges()) num += (y[e.u] - mean) * (y[e.v] - mean);
  for (double v : y) den += (v - mean) * (v - mean);
  // Moran's I numerator/denominator ratio scaled by N/|E|.
  const double moran = static_cast<double>(y.size()) / static_cast<double>(g.num_edges()) * num / den;
  EXPECT_GT(moran, 0.3);
}

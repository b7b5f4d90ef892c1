// Small end-to-end run: synthetic network, pretrained model, a curiosity
// agent choosing 10 new sensors, and a random pick for comparison.

#include <iomanip>
#include <iostream>

#include "roadsense/agent.hpp"
#include "roadsense/baselines.hpp"
#include "roadsense/metrics.hpp"
#include "roadsense/model.hpp"
#include "roadsense/synthetic.hpp"

using namespace roadsense;

int main() {
  SyntheticConfig sc;
  sc.n_nodes = 120;
  const NetworkGraph g = generate_synthetic(sc);
  auto inputs = std::make_shared<const GraphInputs>(GraphInputs::from(g));

  const SensorPartition base = make_partition_count(g, 12, 1);
  const SplitAssignment split = make_splits(g, base, 2);

  ModelConfig mc;
  mc.hidden_dim = 32;
  mc.head_hidden = 32;
  auto retrain = [&](const SensorPartition& p) {
    return train(init_params(mc, g), *inputs, with_train(split, p)).first;
  };
  const HybridModelParams pretrained = retrain(base);
  auto test_mse = [&](const HybridModelParams& m) {
    return compute_metrics(inputs->volumes, predict(m, *inputs), split.test).mse;
  };
  std::cout << std::fixed << std::setprecision(1);
  std::cout << "base sensors " << base.existing().size() << ", test MSE " << test_mse(pretrained) << '\n';

  const std::size_t k = 10;
  AgentConfig ac;
  ac.episodes = 4;
  PlacementEnv env(inputs, base, split, pretrained, k, ac.finetune_epochs);
  const AgentRun run = train_agent(env, PolicyKind::Curiosity, ac, 3);
  for (const auto& ep : run.episodes)
    std::cout << "episode " << ep.episode << ": val MSE " << ep.initial_val_loss << " -> " << ep.final_val_loss
              << '\n';

  const auto rl = final_placement(run.qnet, env, k);
  const auto rnd = select_by_strategy(g, base, {StrategyKind::Random, 5}, k, std::nullopt, split.holdout());
  std::cout << "curiosity agent: test MSE " << test_mse(retrain(base.with_new_sensors(rl))) << '\n';
  std::cout << "random:          test MSE " << test_mse(retrain(base.with_new_sensors(rnd))) << '\n';
}

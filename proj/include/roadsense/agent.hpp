#pragma once

// DQN sensor-placement agent.
//
// The environment wraps (graph, partition, split, model). A step moves one
// unlabeled node into the new-sensor set, fine-tunes the model for a few
// epochs, and pays the drop in validation loss plus an optional count-based
// novelty bonus. The Q-network scores (state, candidate) pairs, so one
// network covers any number of candidate nodes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iterator>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "roadsense/error.hpp"
#include "roadsense/graph.hpp"
#include "roadsense/model.hpp"
#include "roadsense/optim.hpp"
#include "roadsense/tensor.hpp"
#include "roadsense/util.hpp"

namespace roadsense {

enum class PolicyKind { Standard, AdaptiveEpsilon, Curiosity };

constexpr std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Standard: return "standard";
    case PolicyKind::AdaptiveEpsilon: return "adaptive_epsilon";
    case PolicyKind::Curiosity: return "curiosity";
  }
  return "unknown";
}

struct AgentConfig {
  std::size_t q_hidden = 64;
  double learning_rate = 1e-3;
  double gamma = 0.95;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 10000;
  std::size_t sync_period = 25;
  std::size_t finetune_epochs = 10;
  std::size_t episodes = 10;
  double epsilon_start = 1.0;   // AdaptiveEpsilon
  double epsilon_decay = 0.995;  // per environment step
  double epsilon_min = 0.05;
  double epsilon_fixed = 0.1;  // Standard and Curiosity
  double beta = 0.1;           // intrinsic weight, Curiosity only
  double bucket_threshold = 0.1;
  bool exclude_holdout = true;
  bool standardized_reward = false;
};

inline void validate(const AgentConfig& c) {
  if (c.q_hidden == 0 || c.batch_size == 0 || c.buffer_capacity == 0 || c.sync_period == 0)
    fail(ErrorCode::InvalidConfig, "agent sizes must be >= 1");
  if (c.gamma < 0.0 || c.gamma > 1.0) fail(ErrorCode::InvalidConfig, "gamma must be in [0, 1]");
  if (c.epsilon_min < 0.0 || c.epsilon_min > c.epsilon_start || c.epsilon_start > 1.0)
    fail(ErrorCode::InvalidConfig, "need 0 <= epsilon_min <= epsilon_start <= 1");
  if (c.epsilon_decay <= 0.0 || c.epsilon_decay > 1.0) fail(ErrorCode::InvalidConfig, "epsilon_decay must be in (0, 1]");
  if (c.epsilon_fixed < 0.0 || c.epsilon_fixed > 1.0) fail(ErrorCode::InvalidConfig, "epsilon_fixed must be in [0, 1]");
}

inline nlohmann::json to_json(const AgentConfig& c) {
  return {{"q_hidden", c.q_hidden},           {"learning_rate", c.learning_rate},
          {"gamma", c.gamma},                 {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity}, {"sync_period", c.sync_period},
          {"finetune_epochs", c.finetune_epochs}, {"episodes", c.episodes},
          {"epsilon_start", c.epsilon_start}, {"epsilon_decay", c.epsilon_decay},
          {"epsilon_min", c.epsilon_min},     {"epsilon_fixed", c.epsilon_fixed},
          {"beta", c.beta},                   {"bucket_threshold", c.bucket_threshold},
          {"exclude_holdout", c.exclude_holdout}, {"standardized_reward", c.standardized_reward}};
}

inline AgentConfig agent_config_from_json(const nlohmann::json& j, AgentConfig c = {}) {
  c.q_hidden = j.value("q_hidden", c.q_hidden);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.gamma = j.value("gamma", c.gamma);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.sync_period = j.value("sync_period", c.sync_period);
  c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
  c.episodes = j.value("episodes", c.episodes);
  c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
  c.epsilon_decay = j.value("epsilon_decay", c.epsilon_decay);
  c.epsilon_min = j.value("epsilon_min", c.epsilon_min);
  c.epsilon_fixed = j.value("epsilon_fixed", c.epsilon_fixed);
  c.beta = j.value("beta", c.beta);
  c.bucket_threshold = j.value("bucket_threshold", c.bucket_threshold);
  c.exclude_holdout = j.value("exclude_holdout", c.exclude_holdout);
  c.standardized_reward = j.value("standardized_reward", c.standardized_reward);
  validate(c);
  return c;
}

/// Mean embedding of the sensor-equipped nodes.
struct AgentState {
  std::vector<double> embedding;
  std::size_t placements_made = 0;

  bool operator==(const AgentState&) const = default;
};

/// Legal actions at one point in time with their node embeddings (row-major).
struct CandidateSet {
  std::vector<NodeId> ids;
  std::vector<double> embeddings;
  std::size_t dim = 0;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  std::span<const double> row(std::size_t i) const { return {embeddings.data() + i * dim, dim}; }
};

// ---------------------------------------------------------------------------
// Exploration

class ExplorationPolicy {
 public:
  ExplorationPolicy(PolicyKind kind, const AgentConfig& c) : kind_(kind), config_(c) {
    epsilon_ = kind == PolicyKind::AdaptiveEpsilon ? c.epsilon_start : c.epsilon_fixed;
  }

  /// Pure exploitation (ε = 0, no bonus), used for the final greedy rollout.
  static ExplorationPolicy greedy(const AgentConfig& c) {
    ExplorationPolicy p(PolicyKind::Standard, c);
    p.epsilon_ = 0.0;
    return p;
  }

  PolicyKind kind() const { return kind_; }
  double epsilon() const { return epsilon_; }
  double beta() const { return kind_ == PolicyKind::Curiosity ? config_.beta : 0.0; }

  /// Called once per environment step; only AdaptiveEpsilon changes.
  void advance() {
    if (kind_ == PolicyKind::AdaptiveEpsilon)
      epsilon_ = std::max(config_.epsilon_min, epsilon_ * config_.epsilon_decay);
  }

  /// Coordinates quantized to {-, 0, +} at ±threshold.
  static std::string bucket(const AgentState& s, double threshold) {
    std::string key(s.embedding.size(), '0');
    for (std::size_t i = 0; i < key.size(); ++i) {
      if (s.embedding[i] > threshold)
        key[i] = '+';
      else if (s.embedding[i] < -threshold)
        key[i] = '-';
    }
    return key;
  }

  /// Counts a visit to the state's bucket and returns 1/sqrt(count).
  double intrinsic_reward(const AgentState& s) {
    if (kind_ != PolicyKind::Curiosity) fail(ErrorCode::WrongPolicyKind, "intrinsic reward needs a curiosity policy");
    const auto count = ++visits_[bucket(s, config_.bucket_threshold)];
    return 1.0 / std::sqrt(static_cast<double>(count));
  }

  std::size_t visit_count(const AgentState& s) const {
    auto it = visits_.find(bucket(s, config_.bucket_threshold));
    return it == visits_.end() ? 0 : it->second;
  }

 private:
  PolicyKind kind_;
  AgentConfig config_;
  double epsilon_ = 0.0;
  std::map<std::string, std::size_t> visits_;
};

/// r = (L_prev - L_new) + beta * r_int
constexpr double compose_reward(double loss_prev, double loss_new, double beta, double intrinsic) {
  return (loss_prev - loss_new) + beta * intrinsic;
}

// ---------------------------------------------------------------------------
// Replay

struct Transition {
  AgentState s;
  NodeId a = 0;
  std::vector<double> action_embedding;
  double r = 0.0;
  AgentState s_next;
  bool terminal = false;
  std::shared_ptr<const CandidateSet> next_candidates;
};

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) fail(ErrorCode::InvalidConfig, "replay capacity must be >= 1");
  }

  void push(Transition t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const Transition& operator[](std::size_t i) const { return items_[i]; }
  const Transition& front() const { return items_.front(); }
  const Transition& back() const { return items_.back(); }

  /// min(batch, size) distinct transitions, uniformly at random.
  std::vector<const Transition*> sample(std::size_t batch, std::mt19937_64& rng) const {
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<std::size_t> pick;
    std::sample(idx.begin(), idx.end(), std::back_inserter(pick), batch, rng);
    std::vector<const Transition*> out;
    for (auto i : pick) out.push_back(&items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

// ---------------------------------------------------------------------------
// Q-network: concat(state, candidate embedding) -> hidden -> scalar

class QNet {
 public:
  QNet() = default;

  QNet(std::size_t embed_dim, const AgentConfig& c, std::uint64_t seed) : embed_dim_(embed_dim), config_(c) {
    std::mt19937_64 rng(seed);
    online_["fc1.weight"] = detail::glorot(2 * embed_dim, c.q_hidden, rng);
    online_["fc1.bias"] = detail::filled(1, c.q_hidden, 0.0);
    online_["fc2.weight"] = detail::glorot(c.q_hidden, 1, rng);
    online_["fc2.bias"] = detail::filled(1, 1, 0.0);
    target_ = online_;
    adam_ = AdamState(AdamConfig{c.learning_rate});
  }

  std::size_t embed_dim() const { return embed_dim_; }
  const AgentConfig& config() const { return config_; }
  const ParamSet& online() const { return online_; }
  const ParamSet& target() const { return target_; }
  void set_online(ParamSet p) { online_ = std::move(p); }
  std::size_t update_count() const { return updates_; }
  std::size_t sync_count() const { return syncs_; }
  const std::vector<std::size_t>& sync_events() const { return sync_events_; }

  /// Rows of [state || candidate] as a (C x 2h) tensor.
  Tensor pair_inputs(const AgentState& s, const CandidateSet& cands) const {
    check_dims(s, cands.dim);
    std::vector<double> x;
    x.reserve(cands.size() * 2 * embed_dim_);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      x.insert(x.end(), s.embedding.begin(), s.embedding.end());
      const auto r = cands.row(i);
      x.insert(x.end(), r.begin(), r.end());
    }
    return Tensor(cands.size(), 2 * embed_dim_, std::move(x));
  }

  static Tensor score(const ParamSet& p, const Tensor& inputs) {
    const Tensor hidden = relu(add_rowwise(matmul(inputs, p.at("fc1.weight")), p.at("fc1.bias")));
    return add_rowwise(matmul(hidden, p.at("fc2.weight")), p.at("fc2.bias"));
  }

  std::vector<double> q_values(const AgentState& s, const CandidateSet& cands, bool use_target = false) const {
    if (cands.empty()) fail(ErrorCode::EmptyCandidateSet, "no candidates to score");
    return score(use_target ? target_ : online_, pair_inputs(s, cands)).values();
  }

  /// TD targets y = r + γ max_a' Q(s', a'; θ⁻), or y = r on terminal steps.
  std::vector<double> td_targets(const std::vector<const Transition*>& batch) const {
    std::vector<double> y;
    y.reserve(batch.size());
    for (const auto* t : batch) {
      double target = t->r;
      if (!t->terminal && t->next_candidates && !t->next_candidates->empty() && config_.gamma > 0.0) {
        const auto q = q_values(t->s_next, *t->next_candidates, true);
        target += config_.gamma * *std::max_element(q.begin(), q.end());
      }
      y.push_back(target);
    }
    return y;
  }

  /// Mean squared TD error of the online network on `batch`.
  Tensor td_loss(const ParamSet& online, const std::vector<const Transition*>& batch) const {
    std::vector<double> x;
    x.reserve(batch.size() * 2 * embed_dim_);
    for (const auto* t : batch) {
      check_dims(t->s, t->action_embedding.size());
      x.insert(x.end(), t->s.embedding.begin(), t->s.embedding.end());
      x.insert(x.end(), t->action_embedding.begin(), t->action_embedding.end());
    }
    const Tensor q = score(online, Tensor(batch.size(), 2 * embed_dim_, std::move(x)));
    return mean(square(sub(q, Tensor::column(td_targets(batch)))));
  }

  /// One Adam step on a uniform mini-batch; hard target sync every
  /// `sync_period` updates. Returns the batch TD loss before the step.
  double td_update(const ReplayBuffer& buffer, std::mt19937_64& rng) {
    if (buffer.empty()) fail(ErrorCode::EmptyBuffer, "td_update on an empty replay buffer");
    const auto batch = buffer.sample(config_.batch_size, rng);
    const Tensor loss = td_loss(online_, batch);
    online_ = adam_step(online_, backward(loss), adam_);
    ++updates_;
    if (updates_ % config_.sync_period == 0) sync_target();
    return loss.item();
  }

  void sync_target() {
    target_.clear();
    for (const auto& [name, t] : online_) target_.emplace(name, t.detach(false));
    ++syncs_;
    sync_events_.push_back(updates_);
  }

 private:
  void check_dims(const AgentState& s, std::size_t cand_dim) const {
    if (s.embedding.size() != embed_dim_ || cand_dim != embed_dim_)
      fail(ErrorCode::ShapeMismatch, "Q-network expects embeddings of width " + std::to_string(embed_dim_));
  }

  std::size_t embed_dim_ = 0;
  AgentConfig config_;
  ParamSet online_;
  ParamSet target_;
  AdamState adam_;
  std::size_t updates_ = 0;
  std::size_t syncs_ = 0;
  std::vector<std::size_t> sync_events_;
};

/// Greedy argmax; ties go to the lowest node id (candidates are ascending).
inline std::size_t argmax_first(const std::vector<double>& q) {
  return static_cast<std::size_t>(std::distance(q.begin(), std::max_element(q.begin(), q.end())));
}

// ---------------------------------------------------------------------------
// Environment

struct StepOutcome {
  double reward = 0.0;
  double extrinsic = 0.0;
  double intrinsic = 0.0;
  AgentState next_state;
  bool terminal = false;
};

class PlacementEnv {
 public:
  PlacementEnv(std::shared_ptr<const GraphInputs> inputs, SensorPartition initial, SplitAssignment split,
               HybridModelParams pretrained, std::size_t budget, std::size_t finetune_epochs,
               bool exclude_holdout = true, bool standardized_loss = false)
      : inputs_(std::move(inputs)),
        initial_(initial.reset()),
        split_(std::move(split)),
        pretrained_(std::move(pretrained)),
        budget_(budget),
        finetune_epochs_(finetune_epochs),
        exclude_holdout_(exclude_holdout),
        standardized_loss_(standardized_loss) {
    if (initial_.num_nodes() != inputs_->num_nodes()) fail(ErrorCode::GraphMismatch, "partition size != graph size");
    holdout_.assign(inputs_->num_nodes(), false);
    if (exclude_holdout_)
      for (NodeId id : split_.holdout()) holdout_[id] = true;
    std::size_t pool = 0;
    for (NodeId id : initial_.unlabeled()) pool += holdout_[id] ? 0 : 1;
    if (budget_ > pool)
      fail(ErrorCode::BudgetTooLarge,
           "budget " + std::to_string(budget_) + " exceeds " + std::to_string(pool) + " candidate nodes");
    reset();
  }

  /// Back to the original sensors and the pretrained model.
  void reset() {
    partition_ = initial_;
    params_ = pretrained_;
    placed_.clear();
    refresh();
  }

  /// Mean of the current node embeddings over existing ∪ new sensors.
  AgentState observe() const {
    const auto train = partition_.train();
    const std::size_t h = embeddings_.cols();
    AgentState s;
    s.embedding.assign(h, 0.0);
    for (NodeId i : train)
      for (std::size_t j = 0; j < h; ++j) s.embedding[j] += embeddings_(i, j);
    for (auto& v : s.embedding) v /= static_cast<double>(train.size());
    s.placements_made = placed_.size();
    return s;
  }

  std::shared_ptr<const CandidateSet> candidates() const { return candidates_; }

  bool is_candidate(NodeId id) const {
    return id < partition_.num_nodes() && !partition_.is_labeled(id) && !holdout_[id];
  }

  StepOutcome step(NodeId action, ExplorationPolicy& policy) {
    if (placed_.size() >= budget_) fail(ErrorCode::BudgetExhausted, "all " + std::to_string(budget_) + " placed");
    if (!is_candidate(action)) fail(ErrorCode::InvalidAction, "node " + std::to_string(action) + " is not a candidate");
    const double prev = val_loss_;
    partition_ = partition_.with_new_sensor(action);
    placed_.push_back(action);
    params_ = warm_finetune(std::move(params_), *inputs_, current_split(), finetune_epochs_);
    refresh();
    StepOutcome out;
    out.next_state = observe();
    out.extrinsic = prev - val_loss_;
    out.intrinsic = policy.kind() == PolicyKind::Curiosity ? policy.intrinsic_reward(out.next_state) : 0.0;
    out.reward = compose_reward(prev, val_loss_, policy.beta(), out.intrinsic);
    out.terminal = placed_.size() == budget_;
    return out;
  }

  SplitAssignment current_split() const { return with_train(split_, partition_); }

  /// Validation MSE that drives the reward; raw by default, optionally in
  /// the model's standardized target units.
  double val_loss() const { return val_loss_; }
  /// Validation / test MSE in riders/day squared.
  double val_mse() const { return val_mse_; }
  double test_mse() const { return test_mse_; }

  std::size_t budget() const { return budget_; }
  std::size_t placements_made() const { return placed_.size(); }
  bool terminal() const { return placed_.size() == budget_; }
  const std::vector<NodeId>& placed() const { return placed_; }
  const SensorPartition& partition() const { return partition_; }
  const SensorPartition& initial_partition() const { return initial_; }
  const SplitAssignment& split() const { return split_; }
  const HybridModelParams& params() const { return params_; }
  const Tensor& embeddings() const { return embeddings_; }
  std::size_t embed_dim() const { return pretrained_.config.hidden_dim; }
  const GraphInputs& inputs() const { return *inputs_; }

 private:
  void refresh() {
    const ForwardResult f = forward(params_, *inputs_);
    const auto& pred = f.prediction.values();
    val_mse_ = mse_over(pred, inputs_->volumes, split_.val);
    test_mse_ = mse_over(pred, inputs_->volumes, split_.test);
    val_loss_ = standardized_loss_ ? val_mse_ / (params_.target_std * params_.target_std) : val_mse_;
    embeddings_ = f.embeddings.detach();
    auto cands = std::make_shared<CandidateSet>();
    cands->dim = embeddings_.cols();
    for (NodeId id : partition_.unlabeled()) {
      if (holdout_[id]) continue;
      cands->ids.push_back(id);
      const auto* row = &embeddings_.values()[id * cands->dim];
      cands->embeddings.insert(cands->embeddings.end(), row, row + cands->dim);
    }
    candidates_ = std::move(cands);
  }

  std::shared_ptr<const GraphInputs> inputs_;
  SensorPartition initial_;
  SplitAssignment split_;
  HybridModelParams pretrained_;
  std::size_t budget_;
  std::size_t finetune_epochs_;
  bool exclude_holdout_;
  bool standardized_loss_;
  std::vector<bool> holdout_;

  SensorPartition partition_;
  HybridModelParams params_;
  std::vector<NodeId> placed_;
  double val_loss_ = 0.0;
  double val_mse_ = 0.0;
  double test_mse_ = 0.0;
  Tensor embeddings_;
  std::shared_ptr<const CandidateSet> candidates_;
};

// ---------------------------------------------------------------------------
// Training and greedy placement

struct EpisodeResult {
  std::size_t episode = 0;
  std::vector<NodeId> chosen;
  std::vector<double> rewards;
  std::vector<double> extrinsic;
  std::vector<double> intrinsic;
  std::vector<double> epsilons;
  std::vector<double> td_losses;
  std::vector<std::size_t> sync_events;  // update indices at which θ⁻ was refreshed
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
  double final_val_mse = 0.0;
  double final_test_mse = 0.0;
  double gamma = 0.0;
  std::size_t sync_count = 0;  // cumulative at episode end

  bool operator==(const EpisodeResult&) const = default;
};

inline nlohmann::json to_json(const EpisodeResult& e) {
  return {{"episode", e.episode},
          {"chosen", e.chosen},
          {"rewards", e.rewards},
          {"extrinsic_rewards", e.extrinsic},
          {"intrinsic_rewards", e.intrinsic},
          {"epsilon", e.epsilons},
          {"td_losses", e.td_losses},
          {"sync_events", e.sync_events},
          {"sync_count", e.sync_count},
          {"initial_val_loss", e.initial_val_loss},
          {"final_val_loss", e.final_val_loss},
          {"final_val_mse", e.final_val_mse},
          {"final_test_mse", e.final_test_mse},
          {"gamma", e.gamma}};
}

/// Picks an action: uniform with probability ε, otherwise the greedy argmax.
inline NodeId choose_action(const QNet& qnet, const AgentState& s, const CandidateSet& cands, double epsilon,
                            std::mt19937_64& rng) {
  if (cands.empty()) fail(ErrorCode::EmptyCandidateSet, "no legal actions");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (epsilon > 0.0 && coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, cands.size() - 1);
    return cands.ids[pick(rng)];
  }
  return cands.ids[argmax_first(qnet.q_values(s, cands))];
}

struct AgentRun {
  QNet qnet;
  std::vector<EpisodeResult> episodes;
  std::size_t buffer_size = 0;
};

/// Runs `config.episodes` episodes of K = env.budget() placements each,
/// storing every transition and taking a TD step after each placement once
/// the buffer holds a full batch.
inline AgentRun train_agent(PlacementEnv& env, PolicyKind kind, const AgentConfig& config, std::uint64_t seed) {
  validate(config);
  std::mt19937_64 rng(mix_seed(seed, 0));
  AgentRun run{QNet(env.embed_dim(), config, mix_seed(seed, 1)), {}, 0};
  ReplayBuffer buffer(config.buffer_capacity);
  ExplorationPolicy policy(kind, config);
  for (std::size_t ep = 0; ep < config.episodes; ++ep) {
    env.reset();
    EpisodeResult result;
    result.episode = ep;
    result.gamma = config.gamma;
    result.initial_val_loss = env.val_loss();
    const std::size_t syncs_before = run.qnet.sync_events().size();
    AgentState state = env.observe();
    while (!env.terminal()) {
      const auto cands = env.candidates();
      const double eps = policy.epsilon();
      const NodeId action = choose_action(run.qnet, state, *cands, eps, rng);
      const auto pos = std::lower_bound(cands->ids.begin(), cands->ids.end(), action) - cands->ids.begin();
      const auto arow = cands->row(static_cast<std::size_t>(pos));
      StepOutcome out = env.step(action, policy);
      buffer.push({state, action, std::vector<double>(arow.begin(), arow.end()), out.reward, out.next_state,
                   out.terminal, env.candidates()});
      if (buffer.size() >= config.batch_size) result.td_losses.push_back(run.qnet.td_update(buffer, rng));
      policy.advance();
      result.chosen.push_back(action);
      result.rewards.push_back(out.reward);
      result.extrinsic.push_back(out.extrinsic);
      result.intrinsic.push_back(out.intrinsic);
      result.epsilons.push_back(eps);
      state = std::move(out.next_state);
    }
    result.final_val_loss = env.val_loss();
    result.final_val_mse = env.val_mse();
    result.final_test_mse = env.test_mse();
    const auto& ev = run.qnet.sync_events();
    result.sync_events.assign(ev.begin() + static_cast<std::ptrdiff_t>(syncs_before), ev.end());
    result.sync_count = run.qnet.sync_count();
    run.episodes.push_back(std::move(result));
  }
  run.buffer_size = buffer.size();
  return run;
}

/// Greedy (ε = 0) rollout of K placements from a fresh reset.
inline std::vector<NodeId> final_placement(const QNet& qnet, PlacementEnv& env, std::size_t k) {
  env.reset();
  if (k > env.budget()) fail(ErrorCode::BudgetTooLarge, "rollout longer than the environment budget");
  auto policy = ExplorationPolicy::greedy(qnet.config());
  std::mt19937_64 unused(0);
  std::vector<NodeId> chosen;
  for (std::size_t t = 0; t < k; ++t) {
    const NodeId a = choose_action(qnet, env.observe(), *env.candidates(), 0.0, unused);
    env.step(a, policy);
    chosen.push_back(a);
  }
  return chosen;
}

}  // namespace roadsense

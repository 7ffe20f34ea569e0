#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "nppo/diffusion.hpp"
#include "nppo/optim.hpp"
#include "nppo/policy.hpp"
#include "nppo/rewards.hpp"

namespace nppo {

struct PPOConfig {
  double clip = 0.2;
  double kl_weight = 1.0;       // gamma_1
  double entropy_weight = 0.1;  // gamma_2
  std::size_t epochs = 4;       // K
  std::size_t rollout_batch = 64;
  std::size_t minibatch = 16;
  // Minibatches whose gradients are summed before one optimizer step.
  std::size_t grad_accum = 1;
  double max_grad_norm = 1.0;
  std::size_t iterations = 125;
  std::size_t train_steps = 4;  // sampler steps used during training
  bool normalize_advantages = true;
  AdamWConfig policy_optimizer{};
  AdamWConfig value_optimizer{};

  void validate() const;
  // Optimizer steps taken by the policy over a full run.
  std::size_t gradient_steps() const;
};

// A = R - V_old(y)
double advantage(double reward, double value);

struct PpoTerm {
  double value = 0.0;
  double grad = 0.0;  // d value / d logp_new
  double ratio = 1.0;
  bool clipped = false;  // ratio outside [1 - eps, 1 + eps]
};

// min(rho A, clip(rho, 1 - eps, 1 + eps) A), rho = exp(logp_new - logp_old).
// The gradient is zero when the clipped branch is the strict minimum.
PpoTerm ppo_objective(double logp_new, double logp_old, double adv, double clip);

struct RolloutItem {
  PromptId prompt = 0;
  Tensor x0;
  Tensor z;
  Tensor x1;
  double reward = 0.0;
  std::vector<double> components;
  double logp_old = 0.0;
  double value_old = 0.0;
  double advantage = 0.0;
};

struct RolloutBatch {
  std::vector<RolloutItem> items;
  double mean_reward() const;
};

struct PolicyLossTerms {
  double loss = 0.0;
  double objective = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double ratio = 1.0;
  bool clipped = false;
  double clip_frac = 0.0;  // fraction of items with a clipped ratio
};

// -J_PPO + gamma_1 KL(pi || N(0, I)) - gamma_2 H(pi) for one rollout item,
// with its gradient with respect to the policy output. The reward is a
// constant: nothing flows back through the sampler.
PolicyLossTerms policy_loss(const RolloutItem& item, const PolicyOutput& out,
                            const PPOConfig& config, GaussianGrad* grad = nullptr);

// Mean of policy_loss over items; with `accumulate_grad`, scaled gradients
// are added to the policy's grad buffers.
PolicyLossTerms policy_loss(NoisePolicy& policy, std::span<const RolloutItem* const> items,
                            const PPOConfig& config, bool accumulate_grad, double grad_scale = 1.0);

// (V - r)^2
double value_loss(double value, double reward, double* grad = nullptr);
double value_loss(ValueNet& value, std::span<const RolloutItem* const> items, bool accumulate_grad,
                  double grad_scale = 1.0);

// The frozen environment: sampler, reward, prompt set.
struct Environment {
  const PromptTable* table = nullptr;
  const EpsModel* model = nullptr;
  TimeGrid grid{4};
  CompositeReward reward = default_reward();
};

// B tuples (y, x0, r, log pi_old(x0 | y)) with y uniform over the training
// prompts and x0 ~ pi_old(. | y).
RolloutBatch collect_rollout(const NoisePolicy& old_policy, const Environment& env,
                             std::size_t batch, Rng& rng);

// value_old and advantage from a value snapshot taken at collection time.
void assign_advantages(RolloutBatch& batch, const ValueNet& value, bool normalize);

struct IterationMetrics {
  std::size_t iter = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double mean_entropy = 0.0;
  double clip_frac = 0.0;
  double value_loss = 0.0;
  double wall_ms = 0.0;

  nlohmann::json to_json() const;
};

struct TrainHooks {
  // Runs after advantages are assigned, before the K epochs.
  std::function<void(RolloutBatch&)> after_collect;
  std::function<void(const IterationMetrics&)> on_iteration;
};

struct TrainResult {
  std::vector<IterationMetrics> metrics;
  std::size_t policy_steps = 0;
};

// Noise PPO outer loop: snapshot, collect, then K epochs of shuffled
// minibatches with a value step followed by a policy step.
// Throws DivergenceError (with a JSON dump of the minibatch) on NaN loss.
TrainResult train(NoisePolicy& policy, ValueNet& value, const Environment& env,
                  const PPOConfig& config, Rng& rng, const TrainHooks& hooks = {});

}  // namespace nppo

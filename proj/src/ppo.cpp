#include "nppo/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "nppo/error.hpp"

namespace nppo {

void PPOConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo: clip must lie in (0, 1)");
  if (epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
  if (!(kl_weight >= 0.0) || !(entropy_weight >= 0.0)) {
    throw ConfigError("ppo: KL and entropy weights must be >= 0");
  }
  if (rollout_batch < 1 || minibatch < 1 || minibatch > rollout_batch) {
    throw ConfigError("ppo: need 1 <= minibatch <= rollout_batch");
  }
  if (grad_accum < 1) throw ConfigError("ppo: grad_accum must be >= 1");
  if (!(max_grad_norm > 0.0)) throw ConfigError("ppo: max_grad_norm must be > 0");
  if (train_steps < 1) throw ConfigError("ppo: train_steps must be >= 1");
}

std::size_t PPOConfig::gradient_steps() const {
  const std::size_t minibatches = (rollout_batch + minibatch - 1) / minibatch;
  const std::size_t per_epoch = (minibatches + grad_accum - 1) / grad_accum;
  return iterations * epochs * per_epoch;
}

double advantage(double reward, double value) { return reward - value; }

PpoTerm ppo_objective(double logp_new, double logp_old, double adv, double clip) {
  PpoTerm term;
  term.ratio = std::exp(logp_new - logp_old);
  const double clipped_ratio = std::clamp(term.ratio, 1.0 - clip, 1.0 + clip);
  const double surrogate = term.ratio * adv;
  const double clipped = clipped_ratio * adv;
  term.clipped = term.ratio < 1.0 - clip || term.ratio > 1.0 + clip;
  if (surrogate <= clipped) {
    term.value = surrogate;
    term.grad = surrogate;  // d(rho A)/d logp_new = rho A
  } else {
    term.value = clipped;
    term.grad = 0.0;
  }
  return term;
}

double RolloutBatch::mean_reward() const {
  if (items.empty()) return 0.0;
  double s = 0.0;
  for (const auto& it : items) s += it.reward;
  return s / static_cast<double>(items.size());
}

PolicyLossTerms policy_loss(const RolloutItem& item, const PolicyOutput& out,
                            const PPOConfig& config, GaussianGrad* grad) {
  PolicyLossTerms terms;
  GaussianGrad g_lp;
  GaussianGrad g_kl;
  GaussianGrad g_h;
  const double logp = log_prob(out, item.x0.data(), grad ? &g_lp : nullptr);
  const PpoTerm ppo = ppo_objective(logp, item.logp_old, item.advantage, config.clip);
  terms.objective = ppo.value;
  terms.ratio = ppo.ratio;
  terms.clipped = ppo.clipped;
  terms.clip_frac = ppo.clipped ? 1.0 : 0.0;
  terms.kl = kl_to_standard(out, grad ? &g_kl : nullptr);
  terms.entropy = entropy(out, grad ? &g_h : nullptr);
  terms.loss = -terms.objective + config.kl_weight * terms.kl - config.entropy_weight * terms.entropy;
  if (grad) {
    const std::size_t d = out.mean.size();
    grad->mean.assign(d, 0.0);
    grad->logvar.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      grad->mean[i] = -ppo.grad * g_lp.mean[i] + config.kl_weight * g_kl.mean[i] -
                      config.entropy_weight * g_h.mean[i];
      grad->logvar[i] = -ppo.grad * g_lp.logvar[i] + config.kl_weight * g_kl.logvar[i] -
                        config.entropy_weight * g_h.logvar[i];
    }
  }
  return terms;
}

namespace {

std::vector<PromptId> prompts_of(std::span<const RolloutItem* const> items) {
  std::vector<PromptId> out;
  out.reserve(items.size());
  for (const RolloutItem* it : items) out.push_back(it->prompt);
  return out;
}

nlohmann::json dump_items(std::span<const RolloutItem* const> items) {
  nlohmann::json arr = nlohmann::json::array();
  for (const RolloutItem* it : items) {
    arr.push_back({{"prompt", it->prompt},
                   {"x0", it->x0.values()},
                   {"reward", it->reward},
                   {"logp_old", it->logp_old},
                   {"value_old", it->value_old},
                   {"advantage", it->advantage}});
  }
  return arr;
}

}  // namespace

PolicyLossTerms policy_loss(NoisePolicy& policy, std::span<const RolloutItem* const> items,
                            const PPOConfig& config, bool accumulate_grad, double grad_scale) {
  const std::size_t n = items.size();
  if (n == 0) throw DomainError("policy_loss: empty minibatch");
  const std::vector<PromptId> prompts = prompts_of(items);
  const PolicyForward fwd = policy.forward_batch(prompts, accumulate_grad);
  const std::size_t d = policy.dim();
  Tensor g_mean = Tensor::matrix(n, d);
  Tensor g_logvar = Tensor::matrix(n, d);
  PolicyLossTerms total;
  total.ratio = 0.0;
  std::size_t clipped = 0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t b = 0; b < n; ++b) {
    GaussianGrad g;
    const PolicyLossTerms t = policy_loss(*items[b], fwd.row(b), config, accumulate_grad ? &g : nullptr);
    total.loss += t.loss * inv_n;
    total.objective += t.objective * inv_n;
    total.kl += t.kl * inv_n;
    total.entropy += t.entropy * inv_n;
    total.ratio += t.ratio * inv_n;
    clipped += t.clipped ? 1 : 0;
    if (accumulate_grad) {
      for (std::size_t i = 0; i < d; ++i) {
        g_mean.at(b, i) = g.mean[i] * inv_n * grad_scale;
        g_logvar.at(b, i) = g.logvar[i] * inv_n * grad_scale;
      }
    }
  }
  // `ratio` of an aggregate is the mean ratio; `clipped` is set if any item clipped.
  total.clipped = clipped > 0;
  total.clip_frac = static_cast<double>(clipped) * inv_n;
  if (!std::isfinite(total.loss)) {
    throw DivergenceError("policy loss is not finite", dump_items(items).dump());
  }
  if (accumulate_grad) policy.backward(fwd, g_mean, g_logvar);
  return total;
}

double value_loss(double value, double reward, double* grad) {
  const double r = value - reward;
  if (grad) *grad = 2.0 * r;
  return r * r;
}

double value_loss(ValueNet& value, std::span<const RolloutItem* const> items, bool accumulate_grad,
                  double grad_scale) {
  const std::size_t n = items.size();
  if (n == 0) throw DomainError("value_loss: empty minibatch");
  const std::vector<PromptId> prompts = prompts_of(items);
  MlpCache cache;
  const std::vector<double> v = value.forward_batch(prompts, accumulate_grad ? &cache : nullptr);
  std::vector<double> g(n);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t b = 0; b < n; ++b) {
    double gb = 0.0;
    loss += value_loss(v[b], items[b]->reward, &gb) * inv_n;
    g[b] = gb * inv_n * grad_scale;
  }
  if (!std::isfinite(loss)) throw DivergenceError("value loss is not finite", dump_items(items).dump());
  if (accumulate_grad) value.backward(cache, g);
  return loss;
}

// ---------------------------------------------------------------------------

RolloutBatch collect_rollout(const NoisePolicy& old_policy, const Environment& env,
                             std::size_t batch, Rng& rng) {
  if (!env.table || !env.model) throw Error("collect_rollout: environment is incomplete");
  const std::vector<PromptId> candidates = env.table->train_prompts();
  const std::size_t d = env.table->dim();

  std::vector<PromptId> prompts(batch);
  for (auto& y : prompts) y = candidates[rng.below(candidates.size())];
  const PolicyForward fwd = old_policy.forward_batch(prompts, false);

  RolloutBatch out;
  out.items.resize(batch);
  Tensor x0 = Tensor::matrix(batch, d);
  for (std::size_t b = 0; b < batch; ++b) {
    RolloutItem& item = out.items[b];
    item.prompt = prompts[b];
    const PolicyOutput po = fwd.row(b);
    NoiseDraw draw = sample_noise(po, rng);
    item.logp_old = log_prob(po, draw.x0.data());
    std::copy(draw.x0.data().begin(), draw.x0.data().end(), x0.row(b).begin());
    item.x0 = std::move(draw.x0);
    item.z = std::move(draw.z);
  }
  const Tensor x1 = sample(*env.model, x0, prompts, env.grid);
  const RewardContext ctx{env.table, env.model, &env.grid};
  const Tensor comps = reward_components(env.reward, ctx, prompts, x0, x1);
  for (std::size_t b = 0; b < batch; ++b) {
    RolloutItem& item = out.items[b];
    item.x1 = Tensor::vector({x1.row(b).begin(), x1.row(b).end()});
    item.components.assign(comps.row(b).begin(), comps.row(b).end());
    item.reward = composite(env.reward, item.components);
    if (!std::isfinite(item.reward)) throw NonFiniteError("collect_rollout: non-finite reward");
  }
  return out;
}

void assign_advantages(RolloutBatch& batch, const ValueNet& value, bool normalize) {
  std::vector<PromptId> prompts;
  prompts.reserve(batch.items.size());
  for (const auto& it : batch.items) prompts.push_back(it.prompt);
  const std::vector<double> v = value.forward_batch(prompts, nullptr);
  for (std::size_t b = 0; b < batch.items.size(); ++b) {
    batch.items[b].value_old = v[b];
    batch.items[b].advantage = advantage(batch.items[b].reward, v[b]);
  }
  if (normalize && batch.items.size() > 1) {
    double mean = 0.0;
    for (const auto& it : batch.items) mean += it.advantage;
    mean /= static_cast<double>(batch.items.size());
    double var = 0.0;
    for (const auto& it : batch.items) var += (it.advantage - mean) * (it.advantage - mean);
    var /= static_cast<double>(batch.items.size() - 1);
    const double inv_std = 1.0 / (std::sqrt(var) + 1e-8);
    for (auto& it : batch.items) it.advantage = (it.advantage - mean) * inv_std;
  }
}

nlohmann::json IterationMetrics::to_json() const {
  return {{"iter", iter},           {"mean_reward", mean_reward}, {"mean_kl", mean_kl},
          {"mean_entropy", mean_entropy}, {"clip_frac", clip_frac},   {"value_loss", value_loss},
          {"wall_ms", wall_ms}};
}

TrainResult train(NoisePolicy& policy, ValueNet& value, const Environment& env,
                  const PPOConfig& config, Rng& rng, const TrainHooks& hooks) {
  config.validate();
  AdamWState policy_opt;
  policy_opt.config = config.policy_optimizer;
  AdamWState value_opt;
  value_opt.config = config.value_optimizer;
  Rng rollout_rng = rng.split("rollout");
  Rng shuffle_rng = rng.split("minibatch-shuffle");
  TrainResult result;

  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    const auto start = std::chrono::steady_clock::now();
    const NoisePolicy old_policy = policy;
    Rng iter_rng = rollout_rng.split(iter);
    RolloutBatch batch = collect_rollout(old_policy, env, config.rollout_batch, iter_rng);
    assign_advantages(batch, value, config.normalize_advantages);
    if (hooks.after_collect) hooks.after_collect(batch);

    IterationMetrics m;
    m.iter = iter;
    m.mean_reward = batch.mean_reward();
    {
      std::vector<PromptId> prompts;
      for (const auto& it : batch.items) prompts.push_back(it.prompt);
      const PolicyForward fwd = old_policy.forward_batch(prompts, false);
      for (std::size_t b = 0; b < prompts.size(); ++b) {
        const PolicyOutput po = fwd.row(b);
        m.mean_kl += kl_to_standard(po);
        m.mean_entropy += entropy(po);
      }
      m.mean_kl /= static_cast<double>(prompts.size());
      m.mean_entropy /= static_cast<double>(prompts.size());
    }

    std::vector<std::size_t> order(batch.items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double clipped_sum = 0.0;
    std::size_t evaluated = 0;
    double value_loss_sum = 0.0;
    std::size_t value_loss_count = 0;
    const double scale = 1.0 / static_cast<double>(config.grad_accum);
    Rng epoch_rng = shuffle_rng.split(iter);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      epoch_rng.shuffle(std::span<std::size_t>(order));
      std::size_t pending = 0;
      policy.params().zero_grad();
      value.params().zero_grad();
      for (std::size_t startb = 0; startb < order.size(); startb += config.minibatch) {
        const std::size_t endb = std::min(order.size(), startb + config.minibatch);
        std::vector<const RolloutItem*> mb;
        for (std::size_t k = startb; k < endb; ++k) mb.push_back(&batch.items[order[k]]);

        value_loss_sum += value_loss(value, mb, true, scale);
        ++value_loss_count;

        const PolicyLossTerms terms = policy_loss(policy, mb, config, true, scale);
        clipped_sum += terms.clip_frac * static_cast<double>(mb.size());
        evaluated += mb.size();

        ++pending;
        const bool last = endb == order.size();
        if (pending == config.grad_accum || last) {
          clip_grad_norm(value.params(), config.max_grad_norm);
          adamw_step(value.params(), value_opt);
          clip_grad_norm(policy.params(), config.max_grad_norm);
          adamw_step(policy.params(), policy_opt);
          ++result.policy_steps;
          pending = 0;
          policy.params().zero_grad();
          value.params().zero_grad();
        }
      }
    }
    m.clip_frac = evaluated ? clipped_sum / static_cast<double>(evaluated) : 0.0;
    m.value_loss = value_loss_count ? value_loss_sum / static_cast<double>(value_loss_count) : 0.0;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.metrics.push_back(m);
    if (hooks.on_iteration) hooks.on_iteration(m);
  }
  policy.params().zero_grad();
  value.params().zero_grad();
  return result;
}

}  // namespace nppo

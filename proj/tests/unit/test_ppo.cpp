#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "nppo/error.hpp"
#include "nppo/ppo.hpp"
#include "nppo/world.hpp"

using namespace nppo;
using doctest::Approx;

namespace {

struct Fixture {
  PromptTable table{WorldSpec{}};
  OracleDenoiser oracle{table};
  Environment env;

  Fixture() {
    env.table = &table;
    env.model = &oracle;
  }

  NoisePolicy policy(InitMode mode, std::uint64_t seed = 3) const {
    PolicyConfig pc;
    pc.hidden = {16};
    pc.init = mode;
    NoisePolicy p(table.dim(), table.embeddings(), pc);
    Rng rng(seed);
    p.init(rng);
    return p;
  }

  ValueNet value(std::uint64_t seed = 4) const {
    ValueNet v(table.embeddings(), {16});
    Rng rng(seed);
    v.init(rng);
    return v;
  }
};

PPOConfig small_ppo() {
  PPOConfig c;
  c.iterations = 3;
  c.rollout_batch = 32;
  c.minibatch = 8;
  c.epochs = 2;
  return c;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("advantage is reward minus value") {
  CHECK(advantage(0.9, 0.4) == Approx(0.5).epsilon(1e-15));
  CHECK(advantage(0.1, 0.6) == Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("clipped surrogate on hand-computed points") {
  // ratio 1, A = 2: unclipped value 2
  PpoTerm t = ppo_objective(0.0, 0.0, 2.0, 0.2);
  CHECK(std::abs(t.value - 2.0) < 1e-12);
  CHECK(std::abs(t.grad - 2.0) < 1e-12);
  CHECK_FALSE(t.clipped);
  // ratio 1.5, A = 1: capped at 1.2
  t = ppo_objective(std::log(1.5), 0.0, 1.0, 0.2);
  CHECK(std::abs(t.value - 1.2) < 1e-12);
  CHECK(t.grad == 0.0);
  CHECK(t.clipped);
  // ratio 0.5, A = -1: min(-0.5, -0.8) = -0.8
  t = ppo_objective(std::log(0.5), 0.0, -1.0, 0.2);
  CHECK(std::abs(t.value + 0.8) < 1e-12);
  CHECK(t.grad == 0.0);
  // ratio 1.5, A = -1: pessimistic branch keeps the gradient
  t = ppo_objective(std::log(1.5), 0.0, -1.0, 0.2);
  CHECK(std::abs(t.value + 1.5) < 1e-12);
  CHECK(std::abs(t.grad + 1.5) < 1e-12);
}

TEST_CASE("surrogate equals the advantage at ratio one") {
  Rng rng(11);
  bool ok = true;
  for (int i = 0; i < 200; ++i) {
    const double lp = rng.normal();
    const double a = rng.normal();
    const PpoTerm t = ppo_objective(lp, lp, a, 0.2);
    ok = ok && t.ratio == 1.0 && t.value == a && !t.clipped;
  }
  CHECK(ok);
}

TEST_CASE("surrogate is the min of the two branches with a zero gradient dead zone") {
  Rng rng(12);
  bool min_ok = true;
  bool dead_ok = true;
  bool live_ok = true;
  for (int i = 0; i < 2000; ++i) {
    const double lp_new = 0.6 * rng.normal();
    const double lp_old = 0.6 * rng.normal();
    const double a = rng.normal();
    const double eps = 0.05 + 0.4 * rng.uniform();
    const PpoTerm t = ppo_objective(lp_new, lp_old, a, eps);
    const double rho = std::exp(lp_new - lp_old);
    const double expect = std::min(rho * a, std::clamp(rho, 1 - eps, 1 + eps) * a);
    min_ok = min_ok && std::abs(t.value - expect) <= 1e-12 * (1 + std::abs(expect));
    min_ok = min_ok && t.value <= rho * a + 1e-12;
    const bool dead = (a > 0 && rho > 1 + eps) || (a < 0 && rho < 1 - eps);
    if (dead) {
      dead_ok = dead_ok && t.grad == 0.0;
    } else {
      live_ok = live_ok && std::abs(t.grad - rho * a) <= 1e-12 * (1 + std::abs(rho * a));
    }
  }
  CHECK(min_ok);
  CHECK(dead_ok);
  CHECK(live_ok);
}

TEST_CASE("per-item loss for the prior policy") {
  PolicyOutput out;
  out.mean = Tensor::vector({0.0, 0.0});
  out.logvar = Tensor::vector({0.0, 0.0});
  RolloutItem item;
  item.x0 = Tensor::vector({0.3, -0.4});
  item.logp_old = standard_normal_log_prob(item.x0.data());
  item.advantage = 0.7;
  PPOConfig c;
  GaussianGrad g;
  const PolicyLossTerms t = policy_loss(item, out, c, &g);
  CHECK(t.ratio == Approx(1.0).epsilon(1e-15));
  CHECK(t.kl == Approx(0.0));
  CHECK(t.entropy == Approx(2.8378770664093453).epsilon(1e-13));
  CHECK(t.loss == Approx(-0.7 - 0.1 * 2.8378770664093453).epsilon(1e-13));
  CHECK(t.loss == Approx(-0.98379).epsilon(1e-5));
  // d loss / d mean = -A (x - mu) / sigma^2 at ratio one
  CHECK(g.mean[0] == Approx(-0.7 * 0.3).epsilon(1e-13));
  CHECK(g.mean[1] == Approx(-0.7 * -0.4).epsilon(1e-13));
}

TEST_CASE("rollout uses the old policy's density and gives ratio one") {
  Fixture f;
  const NoisePolicy p = f.policy(InitMode::zero);
  Rng rng(21);
  const RolloutBatch batch = collect_rollout(p, f.env, 24, rng);
  REQUIRE(batch.items.size() == 24);
  bool ok = true;
  for (const auto& it : batch.items) {
    ok = ok && std::abs(it.logp_old - standard_normal_log_prob(it.x0.data())) < 1e-12;
    ok = ok && it.reward >= 0.0 && it.reward <= 1.0;
    ok = ok && it.components.size() == default_reward().components.size();
  }
  CHECK(ok);

  NoisePolicy q = f.policy(InitMode::nonzero);
  Rng rng2(22);
  const RolloutBatch b2 = collect_rollout(q, f.env, 16, rng2);
  std::vector<const RolloutItem*> ptrs;
  for (const auto& it : b2.items) ptrs.push_back(&it);
  const PolicyLossTerms t = policy_loss(q, ptrs, PPOConfig{}, false);
  CHECK(t.ratio == Approx(1.0).epsilon(1e-12));
  CHECK(t.clip_frac == 0.0);
}

TEST_CASE("rollout is deterministic given the rng") {
  Fixture f;
  const NoisePolicy p = f.policy(InitMode::nonzero);
  Rng a(5), b(5);
  const RolloutBatch x = collect_rollout(p, f.env, 16, a);
  const RolloutBatch y = collect_rollout(p, f.env, 16, b);
  bool same = true;
  for (std::size_t i = 0; i < x.items.size(); ++i) {
    same = same && x.items[i].prompt == y.items[i].prompt && x.items[i].x0.values() == y.items[i].x0.values() &&
           x.items[i].reward == y.items[i].reward;
  }
  CHECK(same);
}

TEST_CASE("advantage normalization gives zero mean and unit variance") {
  Fixture f;
  const NoisePolicy p = f.policy(InitMode::zero);
  const ValueNet v = f.value();
  Rng rng(8);
  RolloutBatch raw = collect_rollout(p, f.env, 40, rng);
  RolloutBatch norm = raw;
  assign_advantages(raw, v, false);
  assign_advantages(norm, v, true);
  double m = 0.0, var = 0.0;
  for (const auto& it : norm.items) m += it.advantage;
  m /= 40.0;
  for (const auto& it : norm.items) var += (it.advantage - m) * (it.advantage - m);
  var /= 39.0;
  CHECK(std::abs(m) < 1e-12);
  CHECK(var == Approx(1.0).epsilon(1e-4));  // the 1e-8 stabilizer matters at small spreads
  for (const auto& it : raw.items) CHECK(it.advantage == Approx(it.reward - it.value_old).epsilon(1e-15));
}

TEST_CASE("zero advantage and zero regularizers leave the policy untouched") {
  Fixture f;
  NoisePolicy p = f.policy(InitMode::nonzero);
  const ParamSet before = p.params();
  ValueNet v = f.value();
  PPOConfig c = small_ppo();
  c.kl_weight = 0.0;
  c.entropy_weight = 0.0;
  c.policy_optimizer.weight_decay = 0.0;
  c.policy_optimizer.lr = 1e-2;
  TrainHooks hooks;
  hooks.after_collect = [](RolloutBatch& b) {
    for (auto& it : b.items) it.advantage = 0.0;
  };
  Rng rng(31);
  const TrainResult r = train(p, v, f.env, c, rng, hooks);
  CHECK(r.policy_steps == c.gradient_steps());
  CHECK(p.params().same_values(before));
}

TEST_CASE("zero advantage keeps a zero-initialized mean at exactly zero") {
  Fixture f;
  NoisePolicy p = f.policy(InitMode::zero);
  ValueNet v = f.value();
  PPOConfig c = small_ppo();
  c.policy_optimizer.lr = 1e-2;
  TrainHooks hooks;
  hooks.after_collect = [](RolloutBatch& b) {
    for (auto& it : b.items) it.advantage = 0.0;
  };
  Rng rng(32);
  train(p, v, f.env, c, rng, hooks);
  const std::vector<PromptId> prompts = f.table.train_prompts();
  const PolicyForward fwd = p.forward_batch(prompts, false);
  CHECK(max_abs(fwd.mean) == 0.0);
  // The entropy bonus alone pushes the variance up.
  CHECK(fwd.logvar.data()[0] > 0.0);
}

TEST_CASE("first iteration of a zero-initialized run reports zero KL") {
  Fixture f;
  NoisePolicy p = f.policy(InitMode::zero);
  ValueNet v = f.value();
  Rng rng(33);
  const TrainResult r = train(p, v, f.env, small_ppo(), rng);
  REQUIRE(r.metrics.size() == 3);
  CHECK(r.metrics[0].mean_kl == 0.0);
  CHECK(r.metrics[0].mean_entropy == Approx(2.8378770664093453).epsilon(1e-13));
  CHECK(r.metrics[1].mean_kl > 0.0);
  for (const auto& m : r.metrics) {
    CHECK(m.clip_frac >= 0.0);
    CHECK(m.clip_frac <= 1.0);
    CHECK(std::isfinite(m.value_loss));
  }
}

TEST_CASE("KL stays bounded by reward range over KL weight without entropy bonus") {
  Fixture f;
  const double weights[] = {0.5, 1.0, 4.0};
  for (double w : weights) {
    NoisePolicy p = f.policy(InitMode::zero);
    ValueNet v = f.value();
    PPOConfig c = small_ppo();
    c.iterations = 6;
    c.kl_weight = w;
    c.entropy_weight = 0.0;
    c.normalize_advantages = false;
    c.policy_optimizer.lr = 1e-2;
    Rng rng(40);
    const TrainResult r = train(p, v, f.env, c, rng);
    double kl = 0.0;
    for (const auto& m : r.metrics) kl = std::max(kl, m.mean_kl);
    CHECK(kl <= 10.0 * 1.0 / w);
  }
}

TEST_CASE("large KL weight pulls a perturbed policy back to the prior") {
  Fixture f;
  NoisePolicy p = f.policy(InitMode::nonzero);
  const auto prompts = f.table.train_prompts();
  auto mean_kl = [&](const NoisePolicy& q) {
    const PolicyForward fwd = q.forward_batch(prompts, false);
    double s = 0.0;
    for (std::size_t b = 0; b < prompts.size(); ++b) s += kl_to_standard(fwd.row(b));
    return s / static_cast<double>(prompts.size());
  };
  const double kl0 = mean_kl(p);
  REQUIRE(kl0 > 0.0);
  ValueNet v = f.value();
  PPOConfig c = small_ppo();
  c.iterations = 15;
  c.kl_weight = 1e4;
  c.entropy_weight = 0.0;
  c.policy_optimizer.lr = 3e-3;
  Rng rng(41);
  train(p, v, f.env, c, rng);
  CHECK(mean_kl(p) < 0.05 * kl0);
}

TEST_CASE("non-finite advantage raises a divergence error with a dump") {
  Fixture f;
  NoisePolicy p = f.policy(InitMode::zero);
  ValueNet v = f.value();
  TrainHooks hooks;
  hooks.after_collect = [](RolloutBatch& b) { b.items[0].advantage = std::nan(""); };
  Rng rng(50);
  PPOConfig c = small_ppo();
  c.minibatch = c.rollout_batch;
  try {
    train(p, v, f.env, c, rng, hooks);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    const auto dump = nlohmann::json::parse(e.dump());
    REQUIRE(dump.is_array());
    CHECK(dump.size() == c.rollout_batch);
    CHECK(dump[0].contains("advantage"));
    CHECK(dump[0].contains("x0"));
  }
}

TEST_CASE("training is deterministic given the seed") {
  Fixture f;
  auto run = [&] {
    NoisePolicy p = f.policy(InitMode::zero);
    ValueNet v = f.value();
    PPOConfig c = small_ppo();
    c.policy_optimizer.lr = 1e-3;
    Rng rng(60);
    const TrainResult r = train(p, v, f.env, c, rng);
    return std::make_tuple(p.params().flat_values(), v.params().flat_values(), r.metrics.back().mean_reward);
  };
  CHECK(run() == run());
}

TEST_CASE("gradient accumulation reduces the number of optimizer steps") {
  PPOConfig c;
  CHECK(c.gradient_steps() == 2000);
  c.grad_accum = 2;
  CHECK(c.gradient_steps() == 1000);
  c.grad_accum = 3;  // 4 minibatches -> 2 steps per epoch
  CHECK(c.gradient_steps() == 1000);
}

TEST_CASE("ppo config validation") {
  PPOConfig c;
  c.clip = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PPOConfig{};
  c.minibatch = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PPOConfig{};
  c.kl_weight = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PPOConfig{};
  c.grad_accum = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("value baseline converges so raw advantages average to zero") {
  Fixture f;
  NoisePolicy p = f.policy(InitMode::nonzero);
  ValueNet v = f.value();
  PPOConfig c;
  c.iterations = 60;
  c.rollout_batch = 64;
  c.minibatch = 16;
  c.normalize_advantages = false;
  c.policy_optimizer.lr = 0.0;
  c.policy_optimizer.weight_decay = 0.0;
  c.value_optimizer.lr = 1e-2;
  double late_sum = 0.0;
  std::size_t late_n = 0;
  std::size_t iter = 0;
  TrainHooks hooks;
  hooks.after_collect = [&](RolloutBatch& b) {
    if (iter++ >= 40) {
      for (const auto& it : b.items) late_sum += it.advantage;
      late_n += b.items.size();
    }
  };
  const ParamSet before = p.params();
  Rng rng(70);
  train(p, v, f.env, c, rng, hooks);
  CHECK(p.params().same_values(before));
  CHECK(std::abs(late_sum / static_cast<double>(late_n)) < 0.02);
}

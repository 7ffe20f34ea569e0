#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "nppo/error.hpp"
#include "nppo/optim.hpp"
#include "nppo/policy.hpp"
#include "nppo/ppo.hpp"
#include "nppo/rewards.hpp"
#include "nppo/stats.hpp"

using namespace nppo;
using doctest::Approx;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

PolicyOutput gaussian(std::vector<double> mean, std::vector<double> logvar) {
  return {Tensor::vector(std::move(mean)), Tensor::vector(std::move(logvar))};
}

PolicyOutput random_gaussian(std::size_t d, Rng& rng) {
  std::vector<double> m(d), lv(d);
  for (auto& v : m) v = rng.normal();
  for (auto& v : lv) v = 0.8 * rng.normal();
  return gaussian(m, lv);
}

NoisePolicy make_policy(const PromptTable& table, InitMode mode, std::uint64_t seed = 0) {
  PolicyConfig pc;
  pc.init = mode;
  NoisePolicy p(table.dim(), table.embeddings(), pc);
  Rng rng(seed);
  p.init(rng);
  return p;
}

std::string output_bias(const NoisePolicy& p) { return p.net().bias_name(p.net().spec().num_layers() - 1); }

}  // namespace

// ---- closed forms -------------------------------------------------------------------

TEST_CASE("log_prob closed form") {
  CHECK(log_prob(gaussian({0.0}, {0.0}), std::vector<double>{0.0}) == Approx(-0.9189385332046727).epsilon(1e-12));
  CHECK(std::abs(log_prob(gaussian({0.0}, {0.0}), std::vector<double>{0.0}) + 0.9189385) < 1e-7);
  // d = 2, sigma^2 = (e, 1), x - mean = (1, 2)
  const double expected = -0.5 - kHalfLog2Pi - 0.5 / std::exp(1.0) - kHalfLog2Pi - 2.0;
  CHECK(log_prob(gaussian({1.0, -1.0}, {1.0, 0.0}), std::vector<double>{2.0, 1.0}) == Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(log_prob(gaussian({0.0}, {0.0}), std::vector<double>{0.0, 1.0}), ShapeError);
  CHECK_THROWS_AS(log_prob(gaussian({0.0}, {0.0, 1.0}), std::vector<double>{0.0}), ShapeError);
}

TEST_CASE("log_prob symmetry and argmax at the mean") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const PolicyOutput g = random_gaussian(3, rng);
    std::vector<double> plus(3), minus(3), mean(g.mean.values());
    for (int i = 0; i < 3; ++i) {
      const double a = rng.normal();
      plus[i] = mean[i] + a;
      minus[i] = mean[i] - a;
    }
    CHECK(log_prob(g, plus) == Approx(log_prob(g, minus)).epsilon(1e-13));
    CHECK(log_prob(g, mean) > log_prob(g, plus));
  }
}

TEST_CASE("standard normal log density agrees with log_prob at the prior") {
  const std::vector<double> x{0.3, -1.7, 2.2};
  CHECK(standard_normal_log_prob(x) == Approx(log_prob(gaussian({0, 0, 0}, {0, 0, 0}), x)).epsilon(1e-15));
}

TEST_CASE("entropy closed form and scaling law") {
  CHECK(entropy(gaussian({0, 0}, {0, 0})) == Approx(2.8378770664093453).epsilon(1e-13));
  CHECK(std::abs(entropy(gaussian({0, 0}, {0, 0})) - 2.8378771) < 1e-7);
  // Doubling sigma adds log 2 per coordinate (logvar + 2 log 2).
  const double l2 = 2.0 * std::log(2.0);
  const double base = entropy(gaussian({0, 0, 0}, {0.1, -0.3, 0.5}));
  CHECK(entropy(gaussian({5, 5, 5}, {0.1 + l2, -0.3 + l2, 0.5 + l2})) - base == Approx(3 * std::log(2.0)).epsilon(1e-13));
}

TEST_CASE("kl to the standard normal") {
  CHECK(kl_to_standard(gaussian({0, 0}, {0, 0})) == 0.0);
  CHECK(std::abs(kl_to_standard(gaussian({1, 0}, {0, 0})) - 0.5) < 1e-12);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) CHECK(kl_to_standard(random_gaussian(4, rng)) >= 0.0);
}

TEST_CASE("entropy and KL agree with Monte Carlo estimates") {
  Rng rng(3);
  const PolicyOutput g = gaussian({0.4, -1.1}, {0.3, -0.6});
  const int n = 100000;
  std::vector<double> neg_lp(n), log_ratio(n);
  for (int i = 0; i < n; ++i) {
    const NoiseDraw draw = sample_noise(g, rng);
    const double lp = log_prob(g, draw.x0.data());
    neg_lp[i] = -lp;
    log_ratio[i] = lp - standard_normal_log_prob(draw.x0.data());
  }
  const double se_h = stats::stddev(neg_lp) / std::sqrt(double(n));
  const double se_kl = stats::stddev(log_ratio) / std::sqrt(double(n));
  CHECK(std::abs(stats::mean(neg_lp) - entropy(g)) < 3 * se_h);
  CHECK(std::abs(stats::mean(log_ratio) - kl_to_standard(g)) < 3 * se_kl);
}

TEST_CASE("log_prob integrates to one over a 6 sigma box") {
  const PolicyOutput g = gaussian({0.5, -0.2}, {0.2, -0.4});
  Rng rng(4);
  const int n = 200000;
  double lo[2], width[2];
  for (int i = 0; i < 2; ++i) {
    const double sd = std::exp(0.5 * g.logvar[i]);
    lo[i] = g.mean[i] - 6 * sd;
    width[i] = 12 * sd;
  }
  double acc = 0;
  for (int k = 0; k < n; ++k) {
    const std::vector<double> x{lo[0] + width[0] * rng.uniform(), lo[1] + width[1] * rng.uniform()};
    acc += std::exp(log_prob(g, x));
  }
  CHECK(acc / n * width[0] * width[1] == Approx(1.0).epsilon(0.02));
}

TEST_CASE("closed-form gradients match finite differences") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 1 + rng.below(4);
    const PolicyOutput g0 = random_gaussian(d, rng);
    std::vector<double> x(d);
    for (auto& v : x) v = 2 * rng.normal();
    ParamSet p;
    p.add("mean", g0.mean);
    p.add("logvar", g0.logvar);
    auto with = [&](auto fn) {
      return [&p, fn](ParamSet& q) {
        GaussianGrad grad;
        const double v = fn(PolicyOutput{q.value("mean"), q.value("logvar")}, &grad);
        std::copy(grad.mean.begin(), grad.mean.end(), q.grad("mean").data().begin());
        std::copy(grad.logvar.begin(), grad.logvar.end(), q.grad("logvar").data().begin());
        (void)p;
        return v;
      };
    };
    CHECK(grad_check(with([&](const PolicyOutput& o, GaussianGrad* gr) { return log_prob(o, x, gr); }), p)
              .max_rel_error < 1e-6);
    CHECK(grad_check(with([](const PolicyOutput& o, GaussianGrad* gr) { return entropy(o, gr); }), p).max_rel_error <
          1e-6);
    CHECK(grad_check(with([](const PolicyOutput& o, GaussianGrad* gr) { return kl_to_standard(o, gr); }), p)
              .max_rel_error < 1e-6);
  }
}

// ---- sampling -------------------------------------------------------------------------

TEST_CASE("noise from z") {
  const PolicyOutput g = gaussian({1.0, -2.0}, {std::log(4.0), 0.0});
  const std::vector<double> zero{0, 0};
  CHECK(noise_from_z(g, zero).values() == g.mean.values());
  const std::vector<double> z{0.5, 1.5};
  const Tensor x = noise_from_z(g, z);
  CHECK(x[0] == Approx(2.0).epsilon(1e-15));
  CHECK(x[1] == Approx(-0.5).epsilon(1e-15));
  const PolicyOutput prior = gaussian({0, 0}, {0, 0});
  CHECK(noise_from_z(prior, z).values() == z);
}

TEST_CASE("sample_noise moments") {
  const PolicyOutput g = gaussian({0.7, -0.3}, {-0.5, 0.8});
  Rng rng(6);
  const int n = 10000;
  std::vector<double> c0(n), c1(n);
  for (int i = 0; i < n; ++i) {
    const NoiseDraw d = sample_noise(g, rng);
    CHECK_FALSE(d.z.empty());
    c0[i] = d.x0[0];
    c1[i] = d.x0[1];
  }
  const double v0 = std::exp(-0.5), v1 = std::exp(0.8);
  CHECK(std::abs(stats::mean(c0) - 0.7) < 4 * std::sqrt(v0 / n));
  CHECK(std::abs(stats::mean(c1) + 0.3) < 4 * std::sqrt(v1 / n));
  const double s0 = stats::stddev(c0), s1 = stats::stddev(c1);
  CHECK(std::abs(s0 * s0 - v0) < 4 * v0 * std::sqrt(2.0 / n));
  CHECK(std::abs(s1 * s1 - v1) < 4 * v1 * std::sqrt(2.0 / n));
}

// ---- networks ---------------------------------------------------------------------------

TEST_CASE("zero-init policy is exactly the prior") {
  const PromptTable table(WorldSpec{});
  const NoisePolicy p = make_policy(table, InitMode::zero, 11);
  for (PromptId y = 0; y < 8; ++y) {
    const PolicyOutput o = p.forward(y);
    for (double v : o.mean.data()) CHECK(v == 0.0);
    for (double v : o.logvar.data()) CHECK(v == 0.0);
    CHECK(kl_to_standard(o) == 0.0);
    CHECK(entropy(o) == Approx(1 + std::log(2 * std::numbers::pi)).epsilon(1e-15));
  }
  // Sampled noise equals z and passes a KS test per coordinate.
  Rng rng(12);
  std::vector<double> c0, c1;
  const PolicyOutput o = p.forward(3);
  for (int i = 0; i < 10000; ++i) {
    const NoiseDraw d = sample_noise(o, rng);
    if (d.x0.values() != d.z.values()) FAIL("x0 differs from z under the zero-init policy");
    c0.push_back(d.x0[0]);
    c1.push_back(d.x0[1]);
  }
  CHECK(stats::ks_test_standard_normal(c0).p_value > 0.01);
  CHECK(stats::ks_test_standard_normal(c1).p_value > 0.01);
  CHECK_THROWS_AS(p.forward(8), DomainError);
}

TEST_CASE("non-zero init gives seeded, prompt-dependent outputs near the prior") {
  const PromptTable table(WorldSpec{});
  const NoisePolicy a = make_policy(table, InitMode::nonzero, 21);
  const NoisePolicy b = make_policy(table, InitMode::nonzero, 21);
  const NoisePolicy c = make_policy(table, InitMode::nonzero, 22);
  CHECK(a.forward(0).mean.values() != a.forward(1).mean.values());
  CHECK(a.forward(0).mean.values() == b.forward(0).mean.values());
  CHECK(a.forward(0).mean.values() != c.forward(0).mean.values());
  for (PromptId y = 0; y < 8; ++y) {
    const double kl = kl_to_standard(a.forward(y));
    CHECK(kl > 0.0);
    CHECK(kl < 0.5);
  }
  CHECK(a.meta()["init_mode"] == "nonzero");
}

TEST_CASE("log-variance clamp") {
  const PromptTable table(WorldSpec{});
  NoisePolicy p = make_policy(table, InitMode::zero);
  Tensor& bias = p.params().mutable_value(output_bias(p));
  bias[2] = 20.0;   // logvar coordinate 0
  bias[3] = -50.0;  // logvar coordinate 1
  const PolicyOutput o = p.forward(0);
  CHECK(o.logvar[0] == 4.0);
  CHECK(o.logvar[1] == -8.0);
  const double h = entropy(o);
  CHECK(h <= 1 + std::log(2 * std::numbers::pi) + 4.0);
  CHECK(h >= 1 + std::log(2 * std::numbers::pi) - 8.0);

  // Clamped coordinates pass no gradient.
  const std::vector<PromptId> ys{0};
  const PolicyForward fwd = p.forward_batch(ys, true);
  p.params().zero_grad();
  p.backward(fwd, Tensor::matrix(1, 2), Tensor::matrix(1, 2, 1.0));
  const Tensor& g = p.params().grad(output_bias(p));
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("policy backward matches finite differences through the network") {
  const PromptTable table(WorldSpec{});
  PolicyConfig pc;
  pc.hidden = {6, 6};
  pc.init = InitMode::nonzero;
  pc.nonzero_scale = 0.5;
  NoisePolicy p(2, table.embeddings(), pc);
  Rng rng(7);
  p.init(rng);
  const std::vector<PromptId> ys{0, 3, 3, 7};
  const Tensor wm = testutil::random_matrix(4, 2, rng);
  const Tensor wl = testutil::random_matrix(4, 2, rng);
  auto loss = [&](ParamSet&) {
    const PolicyForward fwd = p.forward_batch(ys, true);
    p.backward(fwd, wm, wl);
    return dot(fwd.mean.data(), wm.data()) + dot(fwd.logvar.data(), wl.data());
  };
  CHECK(grad_check(loss, p.params()).max_rel_error < 1e-5);
}

TEST_CASE("value net: zero init, regression, gradient") {
  const PromptTable table(WorldSpec{});
  ValueNet v(table.embeddings(), {16, 16});
  Rng rng(8);
  v.init(rng);
  for (PromptId y = 0; y < 8; ++y) CHECK(v.forward(y) == 0.0);
  CHECK_THROWS_AS(v.forward(8), DomainError);

  std::vector<RolloutItem> items(8);
  for (PromptId y = 0; y < 8; ++y) {
    items[y].prompt = y;
    items[y].reward = 0.73;
  }
  std::vector<const RolloutItem*> ptrs;
  for (const auto& it : items) ptrs.push_back(&it);
  AdamWState opt;
  opt.config.lr = 1e-2;
  for (int step = 0; step < 300; ++step) {
    v.params().zero_grad();
    value_loss(v, ptrs, true);
    adamw_step(v.params(), opt);
  }
  for (PromptId y = 0; y < 8; ++y) CHECK(std::abs(v.forward(y) - 0.73) < 1e-2);

  CHECK(grad_check([&](ParamSet&) { return value_loss(v, ptrs, true); }, v.params()).max_rel_error < 1e-5);
}

TEST_CASE("policy and value checkpoints round trip") {
  testutil::TempDir dir("policy");
  const PromptTable table(WorldSpec{});
  const NoisePolicy p = make_policy(table, InitMode::nonzero, 5);
  save_policy(dir.path / "p.nppo", p);
  const NoisePolicy q = load_policy(dir.path / "p.nppo", table);
  CHECK(q.params().same_values(p.params()));
  CHECK(q.config().init == InitMode::nonzero);
  CHECK(q.forward(4).logvar.values() == p.forward(4).logvar.values());

  ValueNet v(table.embeddings());
  Rng rng(1);
  v.init(rng);
  save_value(dir.path / "v.nppo", v);
  CHECK(load_value(dir.path / "v.nppo", table).params().same_values(v.params()));

  CHECK_THROWS_AS(load_policy(dir.path / "v.nppo", table), CheckpointError);
  CHECK_THROWS_AS(load_value(dir.path / "p.nppo", table), CheckpointError);
  WorldSpec other;
  other.num_prompts = 5;
  CHECK_THROWS_AS(load_policy(dir.path / "p.nppo", PromptTable(other)), CheckpointError);
}

// ---- rewards ------------------------------------------------------------------------------

TEST_CASE("align reward") {
  const PromptTable table(WorldSpec{});
  const auto c = table.center(2);
  CHECK(align_reward(table, 2, c, 0.5) == 1.0);
  const std::vector<double> off{c[0] + 0.5 * std::sqrt(2.0), c[1]};
  CHECK(align_reward(table, 2, off, 0.5) == Approx(std::exp(-1.0)).epsilon(1e-14));
  double prev = 2.0;
  for (double r = 0.0; r < 3.0; r += 0.1) {
    const std::vector<double> x{c[0] + r * 0.6, c[1] - r * 0.8};
    const double v = align_reward(table, 2, x, 0.5);
    CHECK(v <= prev);
    CHECK(v > 0.0);
    prev = v;
  }
  CHECK_THROWS_AS(align_reward(table, 8, c, 0.5), DomainError);
}

TEST_CASE("aesthetic reward") {
  const std::vector<double> on{0.0, 2.0};
  CHECK(aesthetic_reward(on, 2.0, 0.5) == 1.0);
  const std::vector<double> origin{0.0, 0.0};
  CHECK(aesthetic_reward(origin, 2.0, 1.0) == Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK(std::abs(aesthetic_reward(origin, 2.0, 1.0) - 0.1353) < 1e-4);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const double r = 3 * rng.uniform();
    const double a = 2 * std::numbers::pi * rng.uniform();
    const std::vector<double> x{r * std::cos(a), r * std::sin(a)};
    const std::vector<double> y{r, 0.0};
    CHECK(aesthetic_reward(x, 2.0, 0.5) == Approx(aesthetic_reward(y, 2.0, 0.5)).epsilon(1e-13));
  }
}

TEST_CASE("composite reward arithmetic") {
  const CompositeReward r = default_reward();
  REQUIRE(r.components.size() == 3);
  CHECK(r.components[0].weight == 0.2);
  CHECK(r.components[1].weight == 0.4);
  CHECK(r.components[2].weight == 0.4);
  const std::vector<double> ones{1, 1, 1};
  CHECK(composite(r, ones) == Approx(1.0).epsilon(1e-15));
  const std::vector<double> v{1.0, std::exp(-1.0), std::exp(-2.0)};
  CHECK(std::abs(composite(r, v) - 0.40128) < 1e-5);
  CompositeReward single{{{RewardSpec{}, 1.0}}};
  const std::vector<double> x{0.37};
  CHECK(composite(single, x) == 0.37);
  // Linear in each component.
  const std::vector<double> base{0.3, 0.6, 0.9}, scaled{0.3, 1.2, 0.9};
  CHECK(composite(r, scaled) - composite(r, base) == Approx(0.4 * 0.6).epsilon(1e-14));
  CHECK_THROWS_AS(composite(r, x), ShapeError);
  CHECK(r.weight_l1() == Approx(1.0));
  CHECK(r.find(RewardKind::aesthetic) == 0);
  CHECK(r.find(RewardKind::align) == 1);
  CHECK(r.find(RewardKind::golden_cosine) == -1);
}

TEST_CASE("reward spec validation and names") {
  CHECK_THROWS_AS((RewardSpec{RewardKind::align, 0.0, 2.0}.validate()), ConfigError);
  CHECK_THROWS_AS(CompositeReward{}.validate(), ConfigError);
  CompositeReward nan_weight{{{RewardSpec{}, std::nan("")}}};
  CHECK_THROWS_AS(nan_weight.validate(), ConfigError);
  for (RewardKind k : {RewardKind::align, RewardKind::aesthetic, RewardKind::golden_cosine}) {
    CHECK(parse_reward_kind(reward_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_reward_kind("sharpness"), ConfigError);
}

TEST_CASE("reward components are bounded and golden cosine delegates to the sampler") {
  const PromptTable table(WorldSpec{});
  const OracleDenoiser model(table);
  const TimeGrid grid(8);
  CompositeReward r = default_reward();
  r.components.push_back({{RewardKind::golden_cosine}, 0.5});
  Rng rng(10);
  const std::size_t n = 64;
  const Tensor x0 = testutil::random_matrix(n, 2, rng);
  std::vector<PromptId> ys(n);
  for (std::size_t b = 0; b < n; ++b) ys[b] = rng.below(8);
  const Tensor x1 = sample(model, x0, ys, grid);
  const RewardContext ctx{&table, &model, &grid};
  const Tensor comps = reward_components(r, ctx, ys, x0, x1);
  REQUIRE(comps.shape() == Shape{n, 4});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < 3; ++k) CHECK((comps.at(b, k) > 0.0 && comps.at(b, k) <= 1.0));
    CHECK(comps.at(b, 1) == align_reward(table, ys[b], x1.row(b), 0.5));
    CHECK(comps.at(b, 3) == Approx(golden_cosine(model, x0.row(b), ys[b], grid)).epsilon(1e-12));
    CHECK(std::abs(composite(r, comps.row(b))) <= r.weight_l1());
  }
  const RewardContext no_model{&table, nullptr, nullptr};
  CHECK_THROWS_AS(reward_components(r, no_model, ys, x0, x1), Error);
}

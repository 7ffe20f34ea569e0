#include "nppo/policy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "nppo/checkpoint.hpp"
#include "nppo/error.hpp"

namespace nppo {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_output(const PolicyOutput& out) {
  if (!out.mean.same_shape(out.logvar)) throw ShapeError("policy output: mean/logvar shapes differ");
}

void reset_grad(GaussianGrad* grad, std::size_t d) {
  if (!grad) return;
  grad->mean.assign(d, 0.0);
  grad->logvar.assign(d, 0.0);
}

std::string init_mode_name(InitMode mode) { return mode == InitMode::zero ? "zero" : "nonzero"; }

InitMode parse_init_mode(const std::string& name) {
  if (name == "zero") return InitMode::zero;
  if (name == "nonzero") return InitMode::nonzero;
  throw CheckpointError("unknown init mode '" + name + "'");
}

void copy_params(ParamSet& dst, const ParamSet& src, const char* what) {
  for (const auto& [name, value] : dst.values()) {
    if (!src.contains(name) || !src.value(name).same_shape(value)) {
      throw CheckpointError(std::string(what) + " checkpoint parameters do not match its header");
    }
  }
  dst.set_flat_values(src.flat_values());
}

void check_world(const nlohmann::json& meta, const PromptTable& table, const char* what) {
  if (meta.value("num_prompts", std::size_t{0}) != table.num_prompts() ||
      meta.value("embed_dim", std::size_t{0}) != table.embed_dim()) {
    throw CheckpointError(std::string(what) + " checkpoint does not match the configured world");
  }
}

}  // namespace

double log_prob(const PolicyOutput& out, std::span<const double> x, GaussianGrad* grad) {
  check_output(out);
  const std::size_t d = out.mean.size();
  if (x.size() != d) throw ShapeError("log_prob: sample has the wrong dimension");
  reset_grad(grad, d);
  double lp = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double lv = out.logvar[i];
    const double inv_var = std::exp(-lv);
    const double diff = x[i] - out.mean[i];
    lp += -0.5 * lv - 0.5 * kLog2Pi - 0.5 * diff * diff * inv_var;
    if (grad) {
      grad->mean[i] = diff * inv_var;
      grad->logvar[i] = -0.5 + 0.5 * diff * diff * inv_var;
    }
  }
  return lp;
}

double entropy(const PolicyOutput& out, GaussianGrad* grad) {
  check_output(out);
  const std::size_t d = out.mean.size();
  reset_grad(grad, d);
  double h = 0.5 * static_cast<double>(d) * (1.0 + kLog2Pi);
  for (std::size_t i = 0; i < d; ++i) {
    h += 0.5 * out.logvar[i];
    if (grad) grad->logvar[i] = 0.5;
  }
  return h;
}

double kl_to_standard(const PolicyOutput& out, GaussianGrad* grad) {
  check_output(out);
  const std::size_t d = out.mean.size();
  reset_grad(grad, d);
  double kl = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double lv = out.logvar[i];
    const double m = out.mean[i];
    const double var = std::exp(lv);
    kl += 0.5 * (var + m * m - 1.0 - lv);
    if (grad) {
      grad->mean[i] = m;
      grad->logvar[i] = 0.5 * (var - 1.0);
    }
  }
  return kl;
}

double standard_normal_log_prob(std::span<const double> x) {
  double lp = 0.0;
  for (double v : x) lp += -0.5 * kLog2Pi - 0.5 * v * v;
  return lp;
}

Tensor noise_from_z(const PolicyOutput& out, std::span<const double> z) {
  check_output(out);
  if (z.size() != out.mean.size()) throw ShapeError("noise_from_z: z has the wrong dimension");
  Tensor x0(out.mean.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    x0[i] = out.mean[i] + std::exp(0.5 * out.logvar[i]) * z[i];
  }
  return x0;
}

NoiseDraw sample_noise(const PolicyOutput& out, Rng& rng) {
  NoiseDraw draw;
  draw.z = Tensor(out.mean.shape());
  rng.fill_normal(draw.z.data());
  draw.x0 = noise_from_z(out, draw.z.data());
  return draw;
}

// ---------------------------------------------------------------------------

void PolicyConfig::validate() const {
  if (!(logvar_lo < logvar_hi)) throw ConfigError("policy: logvar clamp needs lo < hi");
  if (!(nonzero_scale > 0.0)) throw ConfigError("policy: nonzero_scale must be > 0");
  if (hidden.empty()) throw ConfigError("policy: at least one hidden layer is required");
}

PolicyOutput PolicyForward::row(std::size_t b) const {
  auto m = mean.row(b);
  auto lv = logvar.row(b);
  return {Tensor::vector({m.begin(), m.end()}), Tensor::vector({lv.begin(), lv.end()})};
}

NoisePolicy::NoisePolicy(std::size_t dim, Tensor embeddings, PolicyConfig config)
    : dim_(dim), embeddings_(std::move(embeddings)), config_(std::move(config)) {
  config_.validate();
  net_ = Mlp(MLPSpec{.input_dim = embeddings_.cols(),
                     .hidden_dims = config_.hidden,
                     .output_dim = 2 * dim_,
                     .output_init = config_.init == InitMode::zero ? OutputInit::zero
                                                                   : OutputInit::small_random,
                     .output_scale = config_.nonzero_scale},
             "pi.");
}

void NoisePolicy::init(Rng& rng) { net_.init(params_, rng); }

PolicyForward NoisePolicy::forward_batch(std::span<const PromptId> prompts, bool keep_cache) const {
  Tensor input = Tensor::matrix(prompts.size(), embeddings_.cols());
  for (std::size_t b = 0; b < prompts.size(); ++b) {
    if (prompts[b] >= embeddings_.rows()) {
      throw DomainError("policy: unknown prompt id " + std::to_string(prompts[b]));
    }
    auto e = embeddings_.row(prompts[b]);
    std::copy(e.begin(), e.end(), input.row(b).begin());
  }
  PolicyForward fwd;
  fwd.prompts.assign(prompts.begin(), prompts.end());
  const Tensor out = net_.forward(params_, input, keep_cache ? &fwd.cache : nullptr);
  const std::size_t n = prompts.size();
  fwd.mean = Tensor::matrix(n, dim_);
  fwd.raw_logvar = Tensor::matrix(n, dim_);
  fwd.logvar = Tensor::matrix(n, dim_);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < dim_; ++i) {
      fwd.mean.at(b, i) = out.at(b, i);
      const double raw = out.at(b, dim_ + i);
      fwd.raw_logvar.at(b, i) = raw;
      fwd.logvar.at(b, i) = std::clamp(raw, config_.logvar_lo, config_.logvar_hi);
    }
  }
  return fwd;
}

PolicyOutput NoisePolicy::forward(PromptId y) const {
  const std::array<PromptId, 1> prompts{y};
  return forward_batch(prompts, false).row(0);
}

void NoisePolicy::backward(const PolicyForward& fwd, const Tensor& grad_mean, const Tensor& grad_logvar) {
  const std::size_t n = fwd.prompts.size();
  if (!grad_mean.same_shape(fwd.mean) || !grad_logvar.same_shape(fwd.logvar)) {
    throw ShapeError("policy backward: gradient shapes do not match the forward pass");
  }
  Tensor g = Tensor::matrix(n, 2 * dim_);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < dim_; ++i) {
      g.at(b, i) = grad_mean.at(b, i);
      const double raw = fwd.raw_logvar.at(b, i);
      const bool inside = raw >= config_.logvar_lo && raw <= config_.logvar_hi;
      g.at(b, dim_ + i) = inside ? grad_logvar.at(b, i) : 0.0;
    }
  }
  net_.backward(params_, fwd.cache, g);
}

nlohmann::json NoisePolicy::meta() const {
  return {{"kind", "noise_policy"},
          {"dim", dim_},
          {"embed_dim", embeddings_.cols()},
          {"num_prompts", embeddings_.rows()},
          {"hidden", config_.hidden},
          {"init_mode", init_mode_name(config_.init)},
          {"nonzero_scale", config_.nonzero_scale},
          {"logvar_lo", config_.logvar_lo},
          {"logvar_hi", config_.logvar_hi}};
}

// ---------------------------------------------------------------------------

ValueNet::ValueNet(Tensor embeddings, std::vector<std::size_t> hidden)
    : embeddings_(std::move(embeddings)),
      net_(MLPSpec{.input_dim = embeddings_.cols(),
                   .hidden_dims = std::move(hidden),
                   .output_dim = 1,
                   .output_init = OutputInit::zero},
           "v.") {}

void ValueNet::init(Rng& rng) { net_.init(params_, rng); }

std::vector<double> ValueNet::forward_batch(std::span<const PromptId> prompts, MlpCache* cache) const {
  Tensor input = Tensor::matrix(prompts.size(), embeddings_.cols());
  for (std::size_t b = 0; b < prompts.size(); ++b) {
    if (prompts[b] >= embeddings_.rows()) {
      throw DomainError("value: unknown prompt id " + std::to_string(prompts[b]));
    }
    auto e = embeddings_.row(prompts[b]);
    std::copy(e.begin(), e.end(), input.row(b).begin());
  }
  const Tensor out = net_.forward(params_, input, cache);
  return out.values();
}

double ValueNet::forward(PromptId y) const {
  const std::array<PromptId, 1> prompts{y};
  return forward_batch(prompts, nullptr).front();
}

void ValueNet::backward(const MlpCache& cache, std::span<const double> grad_values) {
  Tensor g(Shape{grad_values.size(), 1}, std::vector<double>(grad_values.begin(), grad_values.end()));
  net_.backward(params_, cache, g);
}

nlohmann::json ValueNet::meta() const {
  return {{"kind", "value_net"},
          {"embed_dim", embeddings_.cols()},
          {"num_prompts", embeddings_.rows()},
          {"hidden", net_.spec().hidden_dims}};
}

// ---------------------------------------------------------------------------

void save_policy(const std::filesystem::path& path, const NoisePolicy& policy) {
  save_checkpoint(path, policy.params(), policy.meta());
}

NoisePolicy load_policy(const std::filesystem::path& path, const PromptTable& table) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "noise_policy") {
    throw CheckpointError("not a policy checkpoint: " + path.string());
  }
  check_world(ckpt.meta, table, "policy");
  if (ckpt.meta.value("dim", std::size_t{0}) != table.dim()) {
    throw CheckpointError("policy checkpoint does not match the configured world");
  }
  PolicyConfig config;
  config.hidden = ckpt.meta.at("hidden").get<std::vector<std::size_t>>();
  config.init = parse_init_mode(ckpt.meta.at("init_mode").get<std::string>());
  config.nonzero_scale = ckpt.meta.at("nonzero_scale").get<double>();
  config.logvar_lo = ckpt.meta.at("logvar_lo").get<double>();
  config.logvar_hi = ckpt.meta.at("logvar_hi").get<double>();
  NoisePolicy policy(table.dim(), table.embeddings(), config);
  Rng scratch(0);
  policy.init(scratch);
  copy_params(policy.params(), ckpt.params, "policy");
  return policy;
}

void save_value(const std::filesystem::path& path, const ValueNet& value) {
  save_checkpoint(path, value.params(), value.meta());
}

ValueNet load_value(const std::filesystem::path& path, const PromptTable& table) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "value_net") {
    throw CheckpointError("not a value checkpoint: " + path.string());
  }
  check_world(ckpt.meta, table, "value");
  ValueNet value(table.embeddings(), ckpt.meta.at("hidden").get<std::vector<std::size_t>>());
  Rng scratch(0);
  value.init(scratch);
  copy_params(value.params(), ckpt.params, "value");
  return value;
}

}  // namespace nppo

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "nppo/mlp.hpp"
#include "nppo/world.hpp"

namespace nppo {

// Diagonal Gaussian N(mean, diag(exp(logvar))) for a single prompt.
struct PolicyOutput {
  Tensor mean;    // [d]
  Tensor logvar;  // [d]
};

// d/d mean and d/d logvar of a scalar function of one PolicyOutput.
struct GaussianGrad {
  std::vector<double> mean;
  std::vector<double> logvar;
};

// sum_i [ -logvar_i/2 - log(2 pi)/2 - (x_i - mean_i)^2 / (2 exp(logvar_i)) ]
double log_prob(const PolicyOutput& out, std::span<const double> x, GaussianGrad* grad = nullptr);
// (d/2)(1 + log 2 pi) + sum_i logvar_i / 2
double entropy(const PolicyOutput& out, GaussianGrad* grad = nullptr);
// KL(N(mean, exp(logvar)) || N(0, I)) = sum_i [exp(logvar_i) + mean_i^2 - 1 - logvar_i] / 2
double kl_to_standard(const PolicyOutput& out, GaussianGrad* grad = nullptr);

// Standard-normal log-density of x.
double standard_normal_log_prob(std::span<const double> x);

// x0 = mean + exp(logvar / 2) * z.
Tensor noise_from_z(const PolicyOutput& out, std::span<const double> z);

struct NoiseDraw {
  Tensor x0;
  Tensor z;
};
NoiseDraw sample_noise(const PolicyOutput& out, Rng& rng);

enum class InitMode { zero, nonzero };

struct PolicyConfig {
  std::vector<std::size_t> hidden{64, 64};
  InitMode init = InitMode::zero;
  double nonzero_scale = 0.1;
  double logvar_lo = -8.0;
  double logvar_hi = 4.0;

  void validate() const;
};

// Batched policy evaluation with everything needed for backward.
struct PolicyForward {
  std::vector<PromptId> prompts;
  Tensor mean;    // [B, d]
  Tensor logvar;  // [B, d], clamped
  Tensor raw_logvar;
  MlpCache cache;

  PolicyOutput row(std::size_t b) const;
};

// pi_theta(x0 | y) = N(mu(y), diag(exp(logvar(y)))). An MLP over the prompt
// embedding emits 2d outputs; the first d form the mean head and the last d
// the log-variance head, i.e. two linear heads on a shared trunk. Zero init
// sets both heads to zero so a fresh policy is exactly N(0, I).
class NoisePolicy {
 public:
  NoisePolicy(std::size_t dim, Tensor embeddings, PolicyConfig config);

  void init(Rng& rng);

  std::size_t dim() const noexcept { return dim_; }
  const PolicyConfig& config() const noexcept { return config_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }
  const Mlp& net() const noexcept { return net_; }

  PolicyOutput forward(PromptId y) const;
  PolicyForward forward_batch(std::span<const PromptId> prompts, bool keep_cache) const;

  // Accumulates parameter gradients given d loss / d mean and d loss / d
  // logvar (post-clamp). Clamped entries pass no gradient.
  void backward(const PolicyForward& fwd, const Tensor& grad_mean, const Tensor& grad_logvar);

  nlohmann::json meta() const;

 private:
  std::size_t dim_;
  Tensor embeddings_;
  PolicyConfig config_;
  Mlp net_;
  ParamSet params_;
};

// V_phi(y): MLP over the prompt embedding, scalar output, zero-initialized
// final layer.
class ValueNet {
 public:
  ValueNet(Tensor embeddings, std::vector<std::size_t> hidden = {64, 64});

  void init(Rng& rng);

  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }
  const Mlp& net() const noexcept { return net_; }

  double forward(PromptId y) const;
  std::vector<double> forward_batch(std::span<const PromptId> prompts, MlpCache* cache) const;
  void backward(const MlpCache& cache, std::span<const double> grad_values);

  nlohmann::json meta() const;

 private:
  Tensor embeddings_;
  Mlp net_;
  ParamSet params_;
};

void save_policy(const std::filesystem::path& path, const NoisePolicy& policy);
NoisePolicy load_policy(const std::filesystem::path& path, const PromptTable& table);
void save_value(const std::filesystem::path& path, const ValueNet& value);
ValueNet load_value(const std::filesystem::path& path, const PromptTable& table);

}  // namespace nppo

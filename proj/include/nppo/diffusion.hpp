#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nppo/mlp.hpp"
#include "nppo/optim.hpp"
#include "nppo/world.hpp"

namespace nppo {

// Linear interpolation schedule x_t = alpha_t x1 + beta_t eps with
// alpha_t = t, beta_t = 1 - t. Sampling starts at t_min (alpha > 0) and the
// state there is taken to be the initial noise x0.
struct NoiseSchedule {
  double t_min = 0.01;

  static double alpha(double t) noexcept { return t; }
  static double beta(double t) noexcept { return 1.0 - t; }
  // Throws DomainError unless 0 <= t <= 1.
  static std::pair<double, double> eval(double t);

  void validate() const;
};

// N + 1 uniformly spaced nodes t_min = t_0 < ... < t_N = 1.
class TimeGrid {
 public:
  TimeGrid(std::size_t steps, NoiseSchedule schedule = {});

  std::size_t steps() const noexcept { return nodes_.size() - 1; }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

 private:
  NoiseSchedule schedule_;
  std::vector<double> nodes_;
};

// Conditional epsilon-predictor eps_hat(x_t, t, y). Implementations are
// immutable once built and safe to call concurrently.
class EpsModel {
 public:
  virtual ~EpsModel() = default;
  virtual std::size_t dim() const = 0;
  // x: [batch, d] states at time t, one prompt per row. Returns [batch, d].
  virtual Tensor predict(const Tensor& x, double t, std::span<const PromptId> prompts) const = 0;
};

// Exact E[eps | x_t, y] when the data for prompt y is N(m_y, s^2 I):
//   eps_hat = beta_t (x - alpha_t m_y) / (alpha_t^2 s^2 + beta_t^2)
class OracleDenoiser final : public EpsModel {
 public:
  OracleDenoiser(Tensor means, double std_dev);
  explicit OracleDenoiser(const PromptTable& table);

  std::size_t dim() const override { return means_.cols(); }
  Tensor predict(const Tensor& x, double t, std::span<const PromptId> prompts) const override;

 private:
  Tensor means_;  // [P, d]
  double std_dev_;
};

// MLP over concat(x_t, time features, prompt embedding).
class MlpDenoiser final : public EpsModel {
 public:
  static constexpr std::size_t kTimeFeatures = 5;  // t, sin(pi t), cos(pi t), sin(2 pi t), cos(2 pi t)

  MlpDenoiser(std::size_t dim, Tensor embeddings, std::vector<std::size_t> hidden);
  // Random initial parameters.
  void init(Rng& rng);

  std::size_t dim() const override { return dim_; }
  Tensor predict(const Tensor& x, double t, std::span<const PromptId> prompts) const override;

  // Per-row times (training draws a different t for each row).
  Tensor features(const Tensor& x, std::span<const double> t, std::span<const PromptId> prompts) const;

  const Mlp& net() const noexcept { return net_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }
  const Tensor& embeddings() const noexcept { return embeddings_; }

  nlohmann::json meta() const;

 private:
  std::size_t dim_;
  Tensor embeddings_;
  Mlp net_;
  ParamSet params_;
};

// Fixed draws for one denoising-score-matching minibatch.
struct DsmBatch {
  std::vector<PromptId> prompts;
  Tensor x1;   // [B, d]
  std::vector<double> t;
  Tensor eps;  // [B, d]
};

// Prompts uniform over `prompts`, x1 from the world, t ~ U[0, 1], eps ~ N(0, I).
DsmBatch draw_dsm_batch(const PromptTable& table, std::span<const PromptId> prompts,
                        std::size_t batch, Rng& rng);
// Keeps (y, x1), redraws t and eps.
void redraw_dsm_noise(DsmBatch& batch, Rng& rng);

// mean_b || eps_hat(alpha_t x1 + beta_t eps, t, y) - eps ||^2. With
// `accumulate_grad`, adds d loss / d psi into the denoiser's grad buffers.
double dsm_loss(MlpDenoiser& denoiser, const DsmBatch& batch, bool accumulate_grad);
// Loss only, for any predictor.
double dsm_loss(const EpsModel& model, const DsmBatch& batch);

// Affine update shared by sampling (t' > t) and inversion (t' < t):
//   x' = (alpha_t'/alpha_t) x - ((alpha_t'/alpha_t) beta_t - beta_t') eps_hat
// Requires t >= t_min so that alpha_t > 0.
Tensor ddim_step(const Tensor& x, double t, double t_next, const Tensor& eps_hat,
                 const NoiseSchedule& schedule = {});

// x1 = Psi(x0, y): starts at x_{t_min} := x0 and steps forward to t = 1.
Tensor sample(const EpsModel& model, const Tensor& x0, std::span<const PromptId> prompts,
              const TimeGrid& grid);
// DDIM inversion from t = 1 down to t_min.
Tensor invert(const EpsModel& model, const Tensor& x1, std::span<const PromptId> prompts,
              const TimeGrid& grid);

// cos(x0, F(x0)) with F = invert . sample. x0 is a single vector.
double golden_cosine(const EpsModel& model, std::span<const double> x0, PromptId y,
                     const TimeGrid& grid);
using NoiseMap = std::function<std::vector<double>(std::span<const double>)>;
double golden_cosine(std::span<const double> x0, const NoiseMap& map);

struct DenoiserTrainConfig {
  std::vector<std::size_t> hidden{128, 128};
  std::size_t steps = 5000;
  std::size_t batch = 256;
  AdamWConfig adamw{.lr = 1e-3, .weight_decay = 0.0};
  double max_grad_norm = 1.0;
  std::size_t log_every = 100;
};

struct DenoiserTrainResult {
  std::unique_ptr<MlpDenoiser> denoiser;
  std::vector<std::pair<std::size_t, double>> loss_log;  // (step, minibatch loss)
  double final_loss = 0.0;
};

// AdamW on dsm_loss minibatches. Throws DivergenceError on a non-finite loss.
DenoiserTrainResult train_denoiser(const PromptTable& table, const DenoiserTrainConfig& config,
                                   Rng& rng);

// Checkpoint I/O. Oracle denoisers are stored as a marker with no weights.
void save_denoiser(const std::filesystem::path& path, const MlpDenoiser& denoiser);
void save_oracle_marker(const std::filesystem::path& path, const PromptTable& table);
std::unique_ptr<EpsModel> load_denoiser(const std::filesystem::path& path, const PromptTable& table);

}  // namespace nppo

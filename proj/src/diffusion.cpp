#include "nppo/diffusion.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "nppo/checkpoint.hpp"
#include "nppo/error.hpp"

namespace nppo {

std::pair<double, double> NoiseSchedule::eval(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("schedule: t must lie in [0, 1]");
  return {alpha(t), beta(t)};
}

void NoiseSchedule::validate() const {
  if (!(t_min > 0.0 && t_min < 0.1)) throw ConfigError("schedule: t_min must lie in (0, 0.1)");
}

TimeGrid::TimeGrid(std::size_t steps, NoiseSchedule schedule) : schedule_(schedule) {
  schedule_.validate();
  if (steps < 1) throw ConfigError("time grid needs at least one step");
  nodes_.resize(steps + 1);
  const double span = 1.0 - schedule_.t_min;
  for (std::size_t i = 0; i <= steps; ++i) {
    nodes_[i] = schedule_.t_min + span * static_cast<double>(i) / static_cast<double>(steps);
  }
  nodes_.back() = 1.0;
}

// ---------------------------------------------------------------------------

OracleDenoiser::OracleDenoiser(Tensor means, double std_dev)
    : means_(std::move(means)), std_dev_(std_dev) {
  if (means_.rank() == 1) means_ = Tensor(Shape{1, means_.size()}, means_.values());
  if (!(std_dev_ >= 0.0)) throw DomainError("oracle denoiser: std must be >= 0");
}

OracleDenoiser::OracleDenoiser(const PromptTable& table)
    : OracleDenoiser(Tensor::matrix(table.num_prompts(), table.dim()), table.std_dev()) {
  for (PromptId y = 0; y < table.num_prompts(); ++y) {
    auto c = table.center(y);
    std::copy(c.begin(), c.end(), means_.row(y).begin());
  }
}

Tensor OracleDenoiser::predict(const Tensor& x, double t, std::span<const PromptId> prompts) const {
  const auto [a, b] = NoiseSchedule::eval(t);
  const std::size_t d = dim();
  if (x.cols() != d || x.rows() != prompts.size()) throw ShapeError("oracle denoiser: bad input shape");
  // b = 0 at t = 1; the limit is 0 even for a point-mass world (s = 0).
  const double scale = b == 0.0 ? 0.0 : b / (a * a * std_dev_ * std_dev_ + b * b);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < prompts.size(); ++r) {
    // A single-Gaussian oracle serves every prompt id.
    const std::size_t row = means_.rows() == 1 ? 0 : prompts[r];
    if (row >= means_.rows()) throw DomainError("oracle denoiser: unknown prompt id");
    for (std::size_t i = 0; i < d; ++i) {
      out[r * d + i] = scale * (x[r * d + i] - a * means_.at(row, i));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

MlpDenoiser::MlpDenoiser(std::size_t dim, Tensor embeddings, std::vector<std::size_t> hidden)
    : dim_(dim),
      embeddings_(std::move(embeddings)),
      net_(MLPSpec{.input_dim = dim + kTimeFeatures + embeddings_.cols(),
                   .hidden_dims = std::move(hidden),
                   .output_dim = dim,
                   .output_init = OutputInit::small_random,
                   .output_scale = 1.0},
           "eps.") {}

void MlpDenoiser::init(Rng& rng) { net_.init(params_, rng); }

Tensor MlpDenoiser::features(const Tensor& x, std::span<const double> t,
                             std::span<const PromptId> prompts) const {
  const std::size_t batch = prompts.size();
  if (x.cols() != dim_ || x.rows() != batch || t.size() != batch) {
    throw ShapeError("denoiser features: inconsistent batch");
  }
  const std::size_t e = embeddings_.cols();
  Tensor f = Tensor::matrix(batch, dim_ + kTimeFeatures + e);
  constexpr double pi = std::numbers::pi;
  for (std::size_t r = 0; r < batch; ++r) {
    if (prompts[r] >= embeddings_.rows()) throw DomainError("denoiser: unknown prompt id");
    auto row = f.row(r);
    auto xr = x.row(r);
    std::copy(xr.begin(), xr.end(), row.begin());
    const double tr = t[r];
    row[dim_ + 0] = tr;
    row[dim_ + 1] = std::sin(pi * tr);
    row[dim_ + 2] = std::cos(pi * tr);
    row[dim_ + 3] = std::sin(2.0 * pi * tr);
    row[dim_ + 4] = std::cos(2.0 * pi * tr);
    auto emb = embeddings_.row(prompts[r]);
    std::copy(emb.begin(), emb.end(), row.begin() + static_cast<std::ptrdiff_t>(dim_ + kTimeFeatures));
  }
  return f;
}

Tensor MlpDenoiser::predict(const Tensor& x, double t, std::span<const PromptId> prompts) const {
  NoiseSchedule::eval(t);
  const std::vector<double> ts(prompts.size(), t);
  Tensor out = net_.forward(params_, features(x, ts, prompts));
  if (x.rank() == 1) return Tensor::vector(out.values());
  return out;
}

nlohmann::json MlpDenoiser::meta() const {
  return {{"kind", "mlp_denoiser"},
          {"dim", dim_},
          {"embed_dim", embeddings_.cols()},
          {"num_prompts", embeddings_.rows()},
          {"hidden", net_.spec().hidden_dims}};
}

// ---------------------------------------------------------------------------

DsmBatch draw_dsm_batch(const PromptTable& table, std::span<const PromptId> prompts,
                        std::size_t batch, Rng& rng) {
  if (batch == 0 || prompts.empty()) throw DomainError("dsm batch must be nonempty");
  DsmBatch out;
  out.prompts.resize(batch);
  out.x1 = Tensor::matrix(batch, table.dim());
  for (std::size_t b = 0; b < batch; ++b) {
    out.prompts[b] = prompts[rng.below(prompts.size())];
    Tensor x = table.sample_data(out.prompts[b], rng);
    std::copy(x.data().begin(), x.data().end(), out.x1.row(b).begin());
  }
  redraw_dsm_noise(out, rng);
  return out;
}

void redraw_dsm_noise(DsmBatch& batch, Rng& rng) {
  const std::size_t n = batch.prompts.size();
  batch.t.resize(n);
  for (double& t : batch.t) t = rng.uniform();
  batch.eps = Tensor(batch.x1.shape());
  rng.fill_normal(batch.eps.data());
}

namespace {

Tensor noised_states(const DsmBatch& batch) {
  Tensor xt(batch.x1.shape());
  const std::size_t d = batch.x1.cols();
  for (std::size_t b = 0; b < batch.prompts.size(); ++b) {
    const double a = NoiseSchedule::alpha(batch.t[b]);
    const double s = NoiseSchedule::beta(batch.t[b]);
    for (std::size_t i = 0; i < d; ++i) {
      xt[b * d + i] = a * batch.x1[b * d + i] + s * batch.eps[b * d + i];
    }
  }
  return xt;
}

}  // namespace

double dsm_loss(MlpDenoiser& denoiser, const DsmBatch& batch, bool accumulate_grad) {
  const std::size_t n = batch.prompts.size();
  if (n == 0) throw DomainError("dsm_loss: empty batch");
  const Tensor input = denoiser.features(noised_states(batch), batch.t, batch.prompts);
  MlpCache cache;
  const Tensor pred = denoiser.net().forward(denoiser.params(), input, accumulate_grad ? &cache : nullptr);
  Tensor grad(pred.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - batch.eps[i];
    loss += r * r;
    grad[i] = 2.0 * r / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NonFiniteError("dsm_loss: non-finite loss");
  if (accumulate_grad) denoiser.net().backward(denoiser.params(), cache, grad);
  return loss;
}

double dsm_loss(const EpsModel& model, const DsmBatch& batch) {
  const std::size_t n = batch.prompts.size();
  if (n == 0) throw DomainError("dsm_loss: empty batch");
  const Tensor xt = noised_states(batch);
  const std::size_t d = batch.x1.cols();
  double loss = 0.0;
  // Rows have distinct t, so the generic interface is queried one row at a time.
  for (std::size_t b = 0; b < n; ++b) {
    Tensor row(Shape{1, d}, std::vector<double>(xt.row(b).begin(), xt.row(b).end()));
    const Tensor pred = model.predict(row, batch.t[b], std::span(batch.prompts).subspan(b, 1));
    for (std::size_t i = 0; i < d; ++i) {
      const double r = pred[i] - batch.eps[b * d + i];
      loss += r * r;
    }
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NonFiniteError("dsm_loss: non-finite loss");
  return loss;
}

// ---------------------------------------------------------------------------

Tensor ddim_step(const Tensor& x, double t, double t_next, const Tensor& eps_hat,
                 const NoiseSchedule& schedule) {
  if (t < schedule.t_min * (1.0 - 1e-12)) {
    throw DomainError("ddim_step: t below t_min (alpha_t -> 0 is singular)");
  }
  const auto [a, b] = NoiseSchedule::eval(t);
  const auto [a_next, b_next] = NoiseSchedule::eval(t_next);
  if (!x.same_shape(eps_hat)) throw ShapeError("ddim_step: x and eps_hat shapes differ");
  const double ratio = a_next / a;
  const double coeff = ratio * b - b_next;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = ratio * x[i] - coeff * eps_hat[i];
  return out;
}

namespace {

Tensor as_batch(const Tensor& x, std::size_t dim, std::size_t batch, const char* what) {
  if (x.cols() != dim || x.rows() != batch) {
    throw ShapeError(std::string(what) + ": state shape " + shape_str(x.shape()) +
                     " does not match " + std::to_string(batch) + " prompts of dim " +
                     std::to_string(dim));
  }
  return Tensor(Shape{batch, dim}, x.values());
}

Tensor restore_rank(Tensor x, const Tensor& like) {
  if (like.rank() == 1) return Tensor::vector(x.values());
  return x;
}

}  // namespace

Tensor sample(const EpsModel& model, const Tensor& x0, std::span<const PromptId> prompts,
              const TimeGrid& grid) {
  x0.require_finite("sample: x0");
  Tensor x = as_batch(x0, model.dim(), prompts.size(), "sample");
  const auto& t = grid.nodes();
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const Tensor eps = model.predict(x, t[i], prompts);
    x = ddim_step(x, t[i], t[i + 1], eps, grid.schedule());
    x.require_finite("sample: intermediate state");
  }
  return restore_rank(std::move(x), x0);
}

Tensor invert(const EpsModel& model, const Tensor& x1, std::span<const PromptId> prompts,
              const TimeGrid& grid) {
  x1.require_finite("invert: x1");
  Tensor x = as_batch(x1, model.dim(), prompts.size(), "invert");
  const auto& t = grid.nodes();
  for (std::size_t i = t.size() - 1; i > 0; --i) {
    const Tensor eps = model.predict(x, t[i], prompts);
    x = ddim_step(x, t[i], t[i - 1], eps, grid.schedule());
    x.require_finite("invert: intermediate state");
  }
  return restore_rank(std::move(x), x1);
}

double golden_cosine(std::span<const double> x0, const NoiseMap& map) {
  if (norm(x0) == 0.0) throw DomainError("golden_cosine: zero-norm noise");
  const std::vector<double> mapped = map(x0);
  return cosine(x0, mapped);
}

double golden_cosine(const EpsModel& model, std::span<const double> x0, PromptId y,
                     const TimeGrid& grid) {
  const std::array<PromptId, 1> prompts{y};
  return golden_cosine(x0, [&](std::span<const double> x) {
    const Tensor start = Tensor::vector(std::vector<double>(x.begin(), x.end()));
    return invert(model, sample(model, start, prompts, grid), prompts, grid).values();
  });
}

// ---------------------------------------------------------------------------

DenoiserTrainResult train_denoiser(const PromptTable& table, const DenoiserTrainConfig& config,
                                   Rng& rng) {
  DenoiserTrainResult result;
  result.denoiser = std::make_unique<MlpDenoiser>(table.dim(), table.embeddings(), config.hidden);
  Rng init_rng = rng.split("denoiser-init");
  result.denoiser->init(init_rng);
  Rng data_rng = rng.split("denoiser-data");

  AdamWState opt;
  opt.config = config.adamw;
  const std::vector<PromptId> prompts = table.train_prompts();
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const DsmBatch batch = draw_dsm_batch(table, prompts, config.batch, data_rng);
    ParamSet& params = result.denoiser->params();
    params.zero_grad();
    double loss = 0.0;
    try {
      loss = dsm_loss(*result.denoiser, batch, true);
    } catch (const NonFiniteError& e) {
      throw DivergenceError("denoiser training diverged at step " + std::to_string(step),
                            nlohmann::json{{"step", step}, {"error", e.what()}}.dump());
    }
    if (config.max_grad_norm > 0.0) clip_grad_norm(params, config.max_grad_norm);
    adamw_step(params, opt);
    result.final_loss = loss;
    if (config.log_every != 0 && (step % config.log_every == 0 || step == config.steps)) {
      result.loss_log.emplace_back(step, loss);
    }
  }
  result.denoiser->params().zero_grad();
  return result;
}

void save_denoiser(const std::filesystem::path& path, const MlpDenoiser& denoiser) {
  save_checkpoint(path, denoiser.params(), denoiser.meta());
}

void save_oracle_marker(const std::filesystem::path& path, const PromptTable& table) {
  nlohmann::json meta = {{"kind", "oracle"},
                         {"dim", table.dim()},
                         {"num_prompts", table.num_prompts()},
                         {"std", table.std_dev()}};
  save_checkpoint(path, ParamSet{}, meta);
}

std::unique_ptr<EpsModel> load_denoiser(const std::filesystem::path& path, const PromptTable& table) {
  Checkpoint ckpt = load_checkpoint(path);
  const std::string kind = ckpt.meta.value("kind", "");
  if (ckpt.meta.value("dim", std::size_t{0}) != table.dim() ||
      ckpt.meta.value("num_prompts", std::size_t{0}) != table.num_prompts()) {
    throw CheckpointError("denoiser checkpoint does not match the configured world");
  }
  if (kind == "oracle") {
    if (ckpt.meta.value("std", -1.0) != table.std_dev()) {
      throw CheckpointError("oracle marker was written for a different data std");
    }
    return std::make_unique<OracleDenoiser>(table);
  }
  if (kind != "mlp_denoiser") throw CheckpointError("not a denoiser checkpoint: " + path.string());
  if (ckpt.meta.value("embed_dim", std::size_t{0}) != table.embed_dim()) {
    throw CheckpointError("denoiser checkpoint embedding width does not match the world");
  }
  auto denoiser = std::make_unique<MlpDenoiser>(
      table.dim(), table.embeddings(), ckpt.meta.at("hidden").get<std::vector<std::size_t>>());
  Rng scratch(0);
  denoiser->init(scratch);
  for (const auto& [name, value] : denoiser->params().values()) {
    if (!ckpt.params.contains(name) || !ckpt.params.value(name).same_shape(value)) {
      throw CheckpointError("denoiser checkpoint parameters do not match its header");
    }
  }
  denoiser->params().set_flat_values(ckpt.params.flat_values());
  return denoiser;
}

}  // namespace nppo

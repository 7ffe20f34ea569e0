#include "nppo/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nppo/error.hpp"
#include "nppo/rng.hpp"

namespace nppo {

void adamw_step(ParamSet& params, AdamWState& state) {
  for (const auto& [name, g] : params.grads()) {
    if (!g.all_finite()) throw NonFiniteError("adamw_step: non-finite gradient for " + name);
  }
  const AdamWConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.lr * c.weight_decay;

  for (const std::string& name : params.names()) {
    const Tensor& g = params.grad(name);
    Tensor& w = params.mutable_value(name);
    auto [mit, m_new] = state.m.try_emplace(name, w.shape(), 0.0);
    auto [vit, v_new] = state.v.try_emplace(name, w.shape(), 0.0);
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (!m.same_shape(w) || !v.same_shape(w)) {
      throw ShapeError("adamw_step: moment buffer shape mismatch for " + name);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      w[i] = w[i] * decay - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

double global_grad_norm(const ParamSet& params) {
  double sq = 0.0;
  for (const auto& [_, g] : params.grads()) {
    for (double v : g.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  if (!(max_norm > 0.0)) throw DomainError("clip_grad_norm: max_norm must be > 0");
  const double total = global_grad_norm(params);
  if (!(total > max_norm)) return 1.0;
  const double factor = max_norm / total;
  for (auto& [_, g] : params.grads()) {
    for (double& v : g.data()) v *= factor;
  }
  return factor;
}

GradCheckResult grad_check(const LossWithGrad& loss, ParamSet& params,
                           const GradCheckOptions& options) {
  const std::vector<double> base = params.flat_values();
  params.zero_grad();
  loss(params);
  const std::vector<double> analytic = params.flat_grads();

  std::vector<std::size_t> coords(base.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coords != 0 && options.max_coords < coords.size()) {
    Rng rng(options.seed);
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(std::max<std::size_t>(options.max_coords, 100));
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  std::vector<double> probe = base;
  for (std::size_t idx : coords) {
    probe[idx] = base[idx] + options.step;
    params.set_flat_values(probe);
    params.zero_grad();
    const double up = loss(params);
    probe[idx] = base[idx] - options.step;
    params.set_flat_values(probe);
    params.zero_grad();
    const double down = loss(params);
    probe[idx] = base[idx];

    const double numeric = (up - down) / (2.0 * options.step);
    const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), options.floor});
    const double rel = std::abs(analytic[idx] - numeric) / denom;
    if (!std::isnan(result.max_rel_error) && !(rel <= result.max_rel_error)) {
      result.max_rel_error = rel;
      result.worst_index = idx;
    }
    ++result.coords_checked;
  }
  params.set_flat_values(base);
  params.zero_grad();
  loss(params);
  return result;
}

}  // namespace nppo

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "nppo/param_set.hpp"

namespace nppo {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-5;
  double eps = 1e-8;
};

struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One AdamW update with decoupled weight decay:
//   w <- w (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
// Throws NonFiniteError if any gradient is NaN/Inf (parameters untouched).
void adamw_step(ParamSet& params, AdamWState& state);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the factor applied (1 when no clipping happened).
double clip_grad_norm(ParamSet& params, double max_norm);

double global_grad_norm(const ParamSet& params);

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset of this many
  // (at least 100) coordinates is checked.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

// `loss` must return the scalar loss and fill params' gradient buffers
// (after zeroing them itself or relying on grad_check to zero them).
using LossWithGrad = std::function<double(ParamSet&)>;

GradCheckResult grad_check(const LossWithGrad& loss, ParamSet& params,
                           const GradCheckOptions& options = {});

}  // namespace nppo

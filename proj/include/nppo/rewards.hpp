#pragma once

#include <span>
#include <string>
#include <vector>

#include "nppo/diffusion.hpp"
#include "nppo/world.hpp"

namespace nppo {

enum class RewardKind { align, aesthetic, golden_cosine };

std::string reward_kind_name(RewardKind kind);
RewardKind parse_reward_kind(const std::string& name);

struct RewardSpec {
  RewardKind kind = RewardKind::align;
  double bandwidth = 0.5;      // align, aesthetic
  double target_radius = 2.0;  // aesthetic
  void validate() const;
};

struct RewardComponent {
  RewardSpec spec;
  double weight = 1.0;
};

// R(y, x0) = sum_i w_i R_i(y, x1), x1 = Psi(x0, y).
struct CompositeReward {
  std::vector<RewardComponent> components;
  void validate() const;
  double weight_l1() const;
  // Index of the first component of `kind`, or -1.
  int find(RewardKind kind) const;
};

// exp(-||x1 - c_y||^2 / (2 h^2))
double align_reward(const PromptTable& table, PromptId y, std::span<const double> x1, double bandwidth);
// exp(-(||x1|| - r*)^2 / (2 h^2)); prompt independent.
double aesthetic_reward(std::span<const double> x1, double target_radius, double bandwidth);

// Everything a component may need beyond (y, x1). The golden-cosine
// component needs the frozen sampler to invert x1.
struct RewardContext {
  const PromptTable* table = nullptr;
  const EpsModel* model = nullptr;
  const TimeGrid* grid = nullptr;
};

// Per-sample component values, [B, M] for M components.
Tensor reward_components(const CompositeReward& reward, const RewardContext& ctx,
                         std::span<const PromptId> prompts, const Tensor& x0, const Tensor& x1);
double composite(const CompositeReward& reward, std::span<const double> component_values);

// Aesthetic 0.2, two alignment stand-ins 0.4 each.
CompositeReward default_reward();

}  // namespace nppo

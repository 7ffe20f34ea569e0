#include "nppo/rewards.hpp"

#include <cmath>

#include "nppo/error.hpp"

namespace nppo {

std::string reward_kind_name(RewardKind kind) {
  switch (kind) {
    case RewardKind::align: return "align";
    case RewardKind::aesthetic: return "aesthetic";
    case RewardKind::golden_cosine: return "golden_cosine";
  }
  return "?";
}

RewardKind parse_reward_kind(const std::string& name) {
  if (name == "align") return RewardKind::align;
  if (name == "aesthetic") return RewardKind::aesthetic;
  if (name == "golden_cosine") return RewardKind::golden_cosine;
  throw ConfigError("unknown reward kind '" + name + "'");
}

void RewardSpec::validate() const {
  if (kind != RewardKind::golden_cosine && !(bandwidth > 0.0)) {
    throw ConfigError("reward " + reward_kind_name(kind) + ": bandwidth must be > 0");
  }
  if (kind == RewardKind::aesthetic && !(target_radius >= 0.0)) {
    throw ConfigError("aesthetic reward: target radius must be >= 0");
  }
}

void CompositeReward::validate() const {
  if (components.empty()) throw ConfigError("composite reward needs at least one component");
  for (const auto& c : components) {
    c.spec.validate();
    if (!std::isfinite(c.weight)) throw ConfigError("reward weights must be finite");
  }
}

double CompositeReward::weight_l1() const {
  double s = 0.0;
  for (const auto& c : components) s += std::abs(c.weight);
  return s;
}

int CompositeReward::find(RewardKind kind) const {
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (components[i].spec.kind == kind) return static_cast<int>(i);
  }
  return -1;
}

double align_reward(const PromptTable& table, PromptId y, std::span<const double> x1, double bandwidth) {
  auto c = table.center(y);
  if (x1.size() != c.size()) throw ShapeError("align_reward: sample has the wrong dimension");
  double sq = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) sq += (x1[i] - c[i]) * (x1[i] - c[i]);
  return std::exp(-sq / (2.0 * bandwidth * bandwidth));
}

double aesthetic_reward(std::span<const double> x1, double target_radius, double bandwidth) {
  const double dr = norm(x1) - target_radius;
  return std::exp(-dr * dr / (2.0 * bandwidth * bandwidth));
}

Tensor reward_components(const CompositeReward& reward, const RewardContext& ctx,
                         std::span<const PromptId> prompts, const Tensor& x0, const Tensor& x1) {
  const std::size_t n = prompts.size();
  const std::size_t m = reward.components.size();
  if (x1.rows() != n || x0.rows() != n) throw ShapeError("reward_components: batch size mismatch");
  if (!ctx.table) throw Error("reward_components: missing prompt table");

  Tensor golden_x0;
  if (reward.find(RewardKind::golden_cosine) >= 0) {
    if (!ctx.model || !ctx.grid) throw Error("golden_cosine reward needs the sampler");
    golden_x0 = invert(*ctx.model, x1, prompts, *ctx.grid);
  }

  Tensor out = Tensor::matrix(n, m);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < m; ++k) {
      const RewardSpec& spec = reward.components[k].spec;
      double v = 0.0;
      switch (spec.kind) {
        case RewardKind::align:
          v = align_reward(*ctx.table, prompts[b], x1.row(b), spec.bandwidth);
          break;
        case RewardKind::aesthetic:
          v = aesthetic_reward(x1.row(b), spec.target_radius, spec.bandwidth);
          break;
        case RewardKind::golden_cosine:
          v = cosine(x0.row(b), golden_x0.row(b));
          break;
      }
      out.at(b, k) = v;
    }
  }
  out.require_finite("reward");
  return out;
}

double composite(const CompositeReward& reward, std::span<const double> component_values) {
  if (component_values.size() != reward.components.size()) {
    throw ShapeError("composite: expected one value per component");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < component_values.size(); ++k) {
    total += reward.components[k].weight * component_values[k];
  }
  return total;
}

CompositeReward default_reward() {
  return CompositeReward{{
      {RewardSpec{.kind = RewardKind::aesthetic, .bandwidth = 0.5, .target_radius = 2.0}, 0.2},
      {RewardSpec{.kind = RewardKind::align, .bandwidth = 0.5}, 0.4},
      {RewardSpec{.kind = RewardKind::align, .bandwidth = 1.0}, 0.4},
  }};
}

}  // namespace nppo

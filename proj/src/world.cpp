#include "nppo/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nppo/error.hpp"

namespace nppo {

void WorldSpec::validate() const {
  if (dim < 1) throw ConfigError("world: dim must be >= 1");
  if (num_prompts < 2) throw ConfigError("world: num_prompts must be >= 2");
  if (!(std_dev > 0.0)) throw ConfigError("world: std must be > 0");
  if (const auto* circle = std::get_if<CircleLayout>(&layout)) {
    if (!(circle->radius > 0.0)) throw ConfigError("world: circle radius must be > 0");
    if (dim < 2) throw ConfigError("world: circle layout needs dim >= 2");
  } else {
    const auto& centers = std::get<ExplicitLayout>(layout).centers;
    if (centers.size() != num_prompts) {
      throw ConfigError("world: explicit layout needs one center per prompt");
    }
    for (const auto& c : centers) {
      if (c.size() != dim) throw ConfigError("world: explicit center has wrong dimension");
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
      for (std::size_t j = i + 1; j < centers.size(); ++j) {
        if (centers[i] == centers[j]) throw ConfigError("world: centers must be distinct");
      }
    }
  }
  if (embedding == EmbeddingMode::one_hot && embed_dim != 0 && embed_dim != num_prompts) {
    throw ConfigError("world: one-hot embeddings have embed_dim == num_prompts");
  }
  for (PromptId y : held_out) {
    if (y >= num_prompts) throw ConfigError("world: held-out prompt id out of range");
  }
  if (held_out.size() >= num_prompts) throw ConfigError("world: no training prompts left");
}

PromptTable::PromptTable(const WorldSpec& spec) : spec_(spec) {
  spec_.validate();
  const std::size_t P = spec_.num_prompts;
  const std::size_t d = spec_.dim;

  centers_ = Tensor::matrix(P, d);
  if (const auto* circle = std::get_if<CircleLayout>(&spec_.layout)) {
    for (std::size_t k = 0; k < P; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(P);
      centers_.at(k, 0) = circle->radius * std::cos(angle);
      centers_.at(k, 1) = circle->radius * std::sin(angle);
    }
  } else {
    const auto& centers = std::get<ExplicitLayout>(spec_.layout).centers;
    for (std::size_t k = 0; k < P; ++k) std::copy(centers[k].begin(), centers[k].end(), centers_.row(k).begin());
  }

  if (spec_.embedding == EmbeddingMode::one_hot) {
    embeddings_ = Tensor::matrix(P, P);
    for (std::size_t k = 0; k < P; ++k) embeddings_.at(k, k) = 1.0;
  } else {
    const std::size_t e = spec_.embed_dim == 0 ? P : spec_.embed_dim;
    embeddings_ = Tensor::matrix(P, e);
    Rng rng = Rng(spec_.embedding_seed).split("prompt-embedding");
    rng.fill_normal(embeddings_.data());
  }
}

void PromptTable::check_prompt(PromptId y) const {
  if (y >= spec_.num_prompts) {
    throw DomainError("unknown prompt id " + std::to_string(y) + " (vocabulary has " +
                      std::to_string(spec_.num_prompts) + ")");
  }
}

std::span<const double> PromptTable::center(PromptId y) const {
  check_prompt(y);
  return centers_.row(y);
}

std::span<const double> PromptTable::embedding(PromptId y) const {
  check_prompt(y);
  return embeddings_.row(y);
}

Tensor PromptTable::embed_batch(std::span<const PromptId> prompts) const {
  Tensor out = Tensor::matrix(prompts.size(), embed_dim());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto src = embedding(prompts[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<PromptId> PromptTable::train_prompts() const {
  std::vector<PromptId> out;
  for (PromptId y = 0; y < spec_.num_prompts; ++y) {
    if (std::find(spec_.held_out.begin(), spec_.held_out.end(), y) == spec_.held_out.end()) {
      out.push_back(y);
    }
  }
  return out;
}

std::vector<PromptId> PromptTable::eval_prompts() const {
  if (spec_.held_out.empty()) return train_prompts();
  std::vector<PromptId> out = spec_.held_out;
  std::sort(out.begin(), out.end());
  return out;
}

Tensor PromptTable::sample_data(PromptId y, Rng& rng) const {
  auto c = center(y);
  Tensor x = Tensor::vector(std::vector<double>(c.begin(), c.end()));
  for (double& v : x.data()) v += spec_.std_dev * rng.normal();
  return x;
}

}  // namespace nppo

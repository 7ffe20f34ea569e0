#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "nppo/rng.hpp"
#include "nppo/tensor.hpp"

namespace nppo {

using PromptId = std::size_t;

struct CircleLayout {
  double radius = 2.0;
};

struct ExplicitLayout {
  std::vector<std::vector<double>> centers;
};

enum class EmbeddingMode {
  one_hot,  // frozen identity rows, embed_dim = num_prompts
  random,   // seeded N(0, 1) rows of width embed_dim
};

struct WorldSpec {
  std::size_t dim = 2;
  std::size_t num_prompts = 8;
  std::variant<CircleLayout, ExplicitLayout> layout = CircleLayout{};
  double std_dev = 0.15;

  EmbeddingMode embedding = EmbeddingMode::one_hot;
  std::size_t embed_dim = 0;  // random mode only; 0 means num_prompts
  std::uint64_t embedding_seed = 0;

  // Empty means every prompt is used for training and evaluation.
  std::vector<PromptId> held_out;

  void validate() const;
};

// Finite prompt vocabulary; prompt y owns the data distribution N(c_y, s^2 I)
// and an embedding row used to condition the networks.
class PromptTable {
 public:
  explicit PromptTable(const WorldSpec& spec);

  const WorldSpec& spec() const noexcept { return spec_; }
  std::size_t num_prompts() const noexcept { return spec_.num_prompts; }
  std::size_t dim() const noexcept { return spec_.dim; }
  std::size_t embed_dim() const noexcept { return embeddings_.cols(); }
  double std_dev() const noexcept { return spec_.std_dev; }

  std::span<const double> center(PromptId y) const;
  std::span<const double> embedding(PromptId y) const;
  const Tensor& embeddings() const noexcept { return embeddings_; }

  // [batch, embed_dim] rows for the given prompts.
  Tensor embed_batch(std::span<const PromptId> prompts) const;

  std::vector<PromptId> train_prompts() const;
  std::vector<PromptId> eval_prompts() const;

  // x1 ~ N(c_y, s^2 I)
  Tensor sample_data(PromptId y, Rng& rng) const;

  void check_prompt(PromptId y) const;

 private:
  WorldSpec spec_;
  Tensor centers_;     // [P, d]
  Tensor embeddings_;  // [P, embed_dim]
};

}  // namespace nppo

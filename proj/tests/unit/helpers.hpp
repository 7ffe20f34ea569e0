#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "nppo/config.hpp"
#include "nppo/rng.hpp"
#include "nppo/tensor.hpp"

namespace testutil {

// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() / ("nppo_test_" + name);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline nppo::Tensor random_matrix(std::size_t rows, std::size_t cols, nppo::Rng& rng, double scale = 1.0) {
  nppo::Tensor t = nppo::Tensor::matrix(rows, cols);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// A small and fast experiment for end-to-end unit tests.
inline nppo::ExperimentConfig tiny_config(const std::filesystem::path& out) {
  nppo::ExperimentConfig c;
  c.out_dir = out.string();
  c.world.num_prompts = 4;
  c.denoiser.hidden = {16, 16};
  c.denoiser.steps = 60;
  c.denoiser.batch = 32;
  c.denoiser.log_every = 20;
  c.policy.hidden = {8};
  c.value_hidden = {8};
  c.ppo.iterations = 3;
  c.ppo.rollout_batch = 16;
  c.ppo.minibatch = 8;
  c.eval.steps = {1, 4};
  c.eval.seeds = {0, 1};
  c.eval.samples_per_prompt = 8;
  c.eval.golden_draws = 12;
  c.eval.golden_steps = 4;
  return c;
}

}  // namespace testutil

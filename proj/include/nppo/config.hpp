#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nppo/diffusion.hpp"
#include "nppo/policy.hpp"
#include "nppo/ppo.hpp"
#include "nppo/rewards.hpp"
#include "nppo/world.hpp"

namespace nppo {

struct EvalConfig {
  std::vector<std::size_t> steps{1, 2, 4, 8, 16, 32};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t samples_per_prompt = 256;
  std::size_t golden_draws = 1000;
  std::size_t golden_steps = 32;
};

struct PathsConfig {
  // Empty means "<out_dir>/denoiser.nppo" etc.
  std::string denoiser;
  std::string policy;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  bool oracle = false;
  WorldSpec world;
  NoiseSchedule schedule;
  DenoiserTrainConfig denoiser;
  PolicyConfig policy;
  std::vector<std::size_t> value_hidden{64, 64};
  CompositeReward reward = default_reward();
  PPOConfig ppo;
  EvalConfig eval;
  PathsConfig paths;

  void validate() const;

  std::filesystem::path out_path(const std::string& name) const;
  std::filesystem::path denoiser_path() const;
  std::filesystem::path policy_path() const;
  std::filesystem::path value_path() const;
};

// Every section and key is optional; missing values keep their defaults.
// Unknown keys are a ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace nppo

#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nppo/config.hpp"
#include "nppo/diffusion.hpp"
#include "nppo/policy.hpp"
#include "nppo/ppo.hpp"

namespace nppo {

// Fixed-format number used in every emitted CSV/JSONL so reruns are byte-identical.
std::string format_number(double v);

// ---- train-denoiser ----------------------------------------------------------

struct DenoiserRunResult {
  std::filesystem::path checkpoint;
  bool oracle = false;
  double final_loss = 0.0;
};
// Writes the checkpoint (or an oracle marker) and denoiser_loss.jsonl.
DenoiserRunResult cmd_train_denoiser(const ExperimentConfig& config, std::ostream& log);

// ---- train-policy ------------------------------------------------------------

struct PolicyRunResult {
  TrainResult train;
  std::string denoiser_hash_before;
  std::string denoiser_hash_after;
};
// Loads the frozen denoiser, runs Noise PPO and writes policy.nppo,
// value.nppo and metrics.jsonl.
PolicyRunResult cmd_train_policy(const ExperimentConfig& config, std::ostream& log);

// ---- eval-sweep --------------------------------------------------------------

struct SweepCell {
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  double policy = 0.0;
  double baseline = 0.0;
  double align_policy = 0.0;
  double align_baseline = 0.0;
  double aes_policy = 0.0;
  double aes_baseline = 0.0;
};

struct SweepRow {
  std::size_t steps = 0;
  double policy_mean = 0.0;
  double policy_std = 0.0;
  double baseline_mean = 0.0;
  double baseline_std = 0.0;
  double align_policy = 0.0;
  double align_baseline = 0.0;
  double aes_policy = 0.0;
  double aes_baseline = 0.0;
  std::size_t seeds = 0;
  double gap() const { return policy_mean - baseline_mean; }
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;
};

// Paired evaluation: every (N, seed) cell draws one z-stream from
// (master seed, N, seed) and feeds it to both the prior (x0 = z) and the
// policy (x0 = mean + sigma * z). A null policy evaluates the prior twice.
SweepResult eval_sweep(const ExperimentConfig& config, const PromptTable& table,
                       const EpsModel& model, const NoisePolicy* policy);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
void write_sweep_cells_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells);
SweepResult cmd_eval_sweep(const ExperimentConfig& config, std::ostream& log);

// ---- gradcheck ---------------------------------------------------------------

struct GradcheckEntry {
  std::string target;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  bool pass = false;
};
struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 1e-5;
  bool all_pass() const;
};
// `corrupt_target` names one target whose analytic gradient is scaled by
// 1.01 before checking, to exercise the failure path.
GradcheckReport cmd_gradcheck(const ExperimentConfig& config, std::ostream& log,
                              const std::string& corrupt_target = {});

// ---- golden-report -----------------------------------------------------------

struct GoldenRecord {
  PromptId prompt = 0;
  double cosine = 0.0;
  double r_align = 0.0;
  double r_composite = 0.0;
};
struct GoldenCorrelation {
  std::string scope;  // prompt id or "pooled"
  std::optional<double> pearson_align, spearman_align;
  std::optional<double> pearson_composite, spearman_composite;
};
struct GoldenReport {
  std::vector<GoldenRecord> records;
  std::vector<GoldenCorrelation> correlations;
};
// Draws golden_draws noises per eval prompt (from the policy when given,
// else N(0, I)) and relates cos(x0, F(x0)) to the rewards of Psi(x0). `map`
// replaces F = invert . sample when set.
GoldenReport golden_report(const ExperimentConfig& config, const PromptTable& table,
                           const EpsModel& model, const NoisePolicy* policy,
                           const NoiseMap* map = nullptr);
// Writes golden.csv and golden_summary.csv. The policy is used when its
// checkpoint exists.
GoldenReport cmd_golden_report(const ExperimentConfig& config, std::ostream& log,
                               const NoiseMap* map = nullptr);

}  // namespace nppo

// nppo: command-line driver for denoiser pretraining, Noise PPO training,
// evaluation sweeps, gradient checks and the golden-noise report.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "nppo/config.hpp"
#include "nppo/error.hpp"
#include "nppo/experiments.hpp"

namespace {

struct GlobalFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool oracle = false;
};

nppo::ExperimentConfig resolve(const GlobalFlags& flags) {
  nppo::ExperimentConfig cfg = flags.config.empty() ? nppo::ExperimentConfig{} : nppo::load_config(flags.config);
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.oracle) cfg.oracle = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-policy PPO on a toy conditional diffusion world"};
  app.require_subcommand(1);

  GlobalFlags flags;
  std::string corrupt;
  app.add_option("--config", flags.config, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", flags.out, "Output directory (overrides out_dir)");
  app.add_option("--seed", flags.seed, "Master seed (overrides seed)");
  app.add_flag("--oracle", flags.oracle, "Use the analytic denoiser instead of training one");

  auto* train_denoiser = app.add_subcommand("train-denoiser", "Pretrain the conditional denoiser");
  auto* train_policy = app.add_subcommand("train-policy", "Train the noise policy against the frozen sampler");
  auto* eval_sweep = app.add_subcommand("eval-sweep", "Paired policy-vs-prior evaluation over step counts");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  gradcheck->add_option("--corrupt", corrupt, "Scale one target's gradient by 1.01 (failure-path test)");
  auto* golden = app.add_subcommand("golden-report", "Correlate inversion cosine with rewards");
  for (auto* sub : {train_denoiser, train_policy, eval_sweep, gradcheck, golden}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const nppo::ExperimentConfig cfg = resolve(flags);
    if (*train_denoiser) {
      nppo::cmd_train_denoiser(cfg, std::cout);
    } else if (*train_policy) {
      const auto r = nppo::cmd_train_policy(cfg, std::cout);
      if (r.denoiser_hash_before != r.denoiser_hash_after) {
        std::cerr << "error: denoiser checkpoint changed during policy training\n";
        return 3;
      }
    } else if (*eval_sweep) {
      nppo::cmd_eval_sweep(cfg, std::cout);
    } else if (*gradcheck) {
      const auto report = nppo::cmd_gradcheck(cfg, std::cout, corrupt);
      if (!report.all_pass()) {
        for (const auto& e : report.entries) {
          if (!e.pass) std::cerr << "gradcheck failed: " << e.target << "\n";
        }
        return 1;
      }
      std::cout << report.entries.size() << " targets passed\n";
    } else if (*golden) {
      nppo::cmd_golden_report(cfg, std::cout);
    }
  } catch (const nppo::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n" << e.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

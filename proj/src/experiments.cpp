#include "nppo/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "nppo/checkpoint.hpp"
#include "nppo/error.hpp"
#include "nppo/stats.hpp"

namespace nppo {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::unique_ptr<EpsModel> load_frozen_denoiser(const ExperimentConfig& config, const PromptTable& table) {
  const auto path = config.denoiser_path();
  if (!std::filesystem::exists(path)) {
    throw ConfigError("denoiser checkpoint " + path.string() + " not found; run train-denoiser first");
  }
  return load_denoiser(path, table);
}

// Mean of component k over rows, or NaN when the reward has no such component.
double component_mean(const Tensor& comps, int k) {
  if (k < 0) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (std::size_t b = 0; b < comps.rows(); ++b) s += comps.at(b, static_cast<std::size_t>(k));
  return s / static_cast<double>(comps.rows());
}

double composite_mean(const CompositeReward& reward, const Tensor& comps) {
  double s = 0.0;
  for (std::size_t b = 0; b < comps.rows(); ++b) s += composite(reward, comps.row(b));
  return s / static_cast<double>(comps.rows());
}

}  // namespace

// ---- train-denoiser ----------------------------------------------------------

DenoiserRunResult cmd_train_denoiser(const ExperimentConfig& config, std::ostream& log) {
  const PromptTable table(config.world);
  DenoiserRunResult result;
  result.checkpoint = config.denoiser_path();
  if (config.oracle) {
    save_oracle_marker(result.checkpoint, table);
    result.oracle = true;
    log << "wrote oracle marker " << result.checkpoint.string() << "\n";
    return result;
  }
  Rng rng = Rng(config.seed).split("denoiser");
  DenoiserTrainResult trained = train_denoiser(table, config.denoiser, rng);
  save_denoiser(result.checkpoint, *trained.denoiser);
  {
    auto out = open_output(config.out_path("denoiser_loss.jsonl"));
    for (const auto& [step, loss] : trained.loss_log) {
      out << "{\"step\":" << step << ",\"loss\":" << format_number(loss) << "}\n";
    }
  }
  result.final_loss = trained.final_loss;
  log << "denoiser trained for " << config.denoiser.steps << " steps, final loss "
      << format_number(result.final_loss) << "\n";
  return result;
}

// ---- train-policy ------------------------------------------------------------

PolicyRunResult cmd_train_policy(const ExperimentConfig& config, std::ostream& log) {
  const PromptTable table(config.world);
  PolicyRunResult result;
  const auto denoiser_path = config.denoiser_path();
  const auto model = load_frozen_denoiser(config, table);
  result.denoiser_hash_before = file_hash(denoiser_path);

  Rng rng = Rng(config.seed).split("policy");
  NoisePolicy policy(table.dim(), table.embeddings(), config.policy);
  Rng init_rng = rng.split("policy-init");
  policy.init(init_rng);
  ValueNet value(table.embeddings(), config.value_hidden);
  Rng value_rng = rng.split("value-init");
  value.init(value_rng);

  Environment env;
  env.table = &table;
  env.model = model.get();
  env.grid = TimeGrid(config.ppo.train_steps, config.schedule);
  env.reward = config.reward;

  auto metrics = open_output(config.out_path("metrics.jsonl"));
  TrainHooks hooks;
  hooks.on_iteration = [&](const IterationMetrics& m) {
    metrics << m.to_json().dump() << "\n";
    metrics.flush();
    if (m.iter % 25 == 0) {
      log << "iter " << m.iter << " reward " << format_number(m.mean_reward) << " kl "
          << format_number(m.mean_kl) << "\n";
    }
  };
  Rng train_rng = rng.split("train");
  result.train = train(policy, value, env, config.ppo, train_rng, hooks);

  save_policy(config.policy_path(), policy);
  save_value(config.value_path(), value);
  result.denoiser_hash_after = file_hash(denoiser_path);
  log << "policy trained: " << result.train.policy_steps << " gradient steps\n";
  return result;
}

// ---- eval-sweep --------------------------------------------------------------

SweepResult eval_sweep(const ExperimentConfig& config, const PromptTable& table,
                       const EpsModel& model, const NoisePolicy* policy) {
  const std::vector<PromptId> eval_prompts = table.eval_prompts();
  const std::size_t per = config.eval.samples_per_prompt;
  const std::size_t n = eval_prompts.size() * per;
  const std::size_t d = table.dim();

  std::vector<PromptId> prompts(n);
  for (std::size_t i = 0; i < eval_prompts.size(); ++i) {
    for (std::size_t j = 0; j < per; ++j) prompts[i * per + j] = eval_prompts[i];
  }
  // Policy outputs are fixed per prompt, so compute them once.
  std::vector<PolicyOutput> outputs;
  if (policy) {
    for (PromptId y : eval_prompts) outputs.push_back(policy->forward(y));
  }

  const int align_k = config.reward.find(RewardKind::align);
  const int aes_k = config.reward.find(RewardKind::aesthetic);
  const Rng root = Rng(config.seed).split("eval");

  SweepResult result;
  for (std::size_t steps : config.eval.steps) {
    const TimeGrid grid(steps, config.schedule);
    const RewardContext ctx{&table, &model, &grid};
    for (std::uint64_t seed : config.eval.seeds) {
      Rng rng = root.split(steps).split(seed);
      Tensor z = Tensor::matrix(n, d);
      rng.fill_normal(z.data());

      Tensor x0_policy = z;
      if (policy) {
        for (std::size_t b = 0; b < n; ++b) {
          const Tensor x = noise_from_z(outputs[b / per], z.row(b));
          std::copy(x.data().begin(), x.data().end(), x0_policy.row(b).begin());
        }
      }
      const Tensor x1_base = sample(model, z, prompts, grid);
      const Tensor x1_pol = sample(model, x0_policy, prompts, grid);
      const Tensor c_base = reward_components(config.reward, ctx, prompts, z, x1_base);
      const Tensor c_pol = reward_components(config.reward, ctx, prompts, x0_policy, x1_pol);

      SweepCell cell;
      cell.steps = steps;
      cell.seed = seed;
      cell.policy = composite_mean(config.reward, c_pol);
      cell.baseline = composite_mean(config.reward, c_base);
      cell.align_policy = component_mean(c_pol, align_k);
      cell.align_baseline = component_mean(c_base, align_k);
      cell.aes_policy = component_mean(c_pol, aes_k);
      cell.aes_baseline = component_mean(c_base, aes_k);
      result.cells.push_back(cell);
    }
  }

  const std::size_t s = config.eval.seeds.size();
  for (std::size_t i = 0; i < config.eval.steps.size(); ++i) {
    std::vector<double> pol, base, ap, ab, ep, eb;
    for (std::size_t j = 0; j < s; ++j) {
      const SweepCell& c = result.cells[i * s + j];
      pol.push_back(c.policy);
      base.push_back(c.baseline);
      ap.push_back(c.align_policy);
      ab.push_back(c.align_baseline);
      ep.push_back(c.aes_policy);
      eb.push_back(c.aes_baseline);
    }
    SweepRow row;
    row.steps = config.eval.steps[i];
    row.policy_mean = stats::mean(pol);
    row.policy_std = stats::stddev(pol);
    row.baseline_mean = stats::mean(base);
    row.baseline_std = stats::stddev(base);
    row.align_policy = stats::mean(ap);
    row.align_baseline = stats::mean(ab);
    row.aes_policy = stats::mean(ep);
    row.aes_baseline = stats::mean(eb);
    row.seeds = s;
    result.rows.push_back(row);
  }
  return result;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  auto out = open_output(path);
  out << "steps,policy_mean,policy_std,baseline_mean,baseline_std,align_policy,align_baseline,"
         "aes_policy,aes_baseline,seeds\n";
  for (const auto& r : rows) {
    out << r.steps << ',' << format_number(r.policy_mean) << ',' << format_number(r.policy_std) << ','
        << format_number(r.baseline_mean) << ',' << format_number(r.baseline_std) << ','
        << format_number(r.align_policy) << ',' << format_number(r.align_baseline) << ','
        << format_number(r.aes_policy) << ',' << format_number(r.aes_baseline) << ',' << r.seeds << "\n";
  }
}

void write_sweep_cells_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
  auto out = open_output(path);
  out << "steps,seed,policy,baseline,align_policy,align_baseline,aes_policy,aes_baseline\n";
  for (const auto& c : cells) {
    out << c.steps << ',' << c.seed << ',' << format_number(c.policy) << ',' << format_number(c.baseline)
        << ',' << format_number(c.align_policy) << ',' << format_number(c.align_baseline) << ','
        << format_number(c.aes_policy) << ',' << format_number(c.aes_baseline) << "\n";
  }
}

SweepResult cmd_eval_sweep(const ExperimentConfig& config, std::ostream& log) {
  const PromptTable table(config.world);
  const auto model = load_frozen_denoiser(config, table);
  const auto policy_path = config.policy_path();
  if (!std::filesystem::exists(policy_path)) {
    throw ConfigError("policy checkpoint " + policy_path.string() + " not found; run train-policy first");
  }
  const NoisePolicy policy = load_policy(policy_path, table);
  SweepResult result = eval_sweep(config, table, *model, &policy);
  write_sweep_csv(config.out_path("sweep.csv"), result.rows);
  write_sweep_cells_csv(config.out_path("sweep_cells.csv"), result.cells);
  for (const auto& r : result.rows) {
    log << "N=" << r.steps << " policy " << format_number(r.policy_mean) << " baseline "
        << format_number(r.baseline_mean) << " gap " << format_number(r.gap()) << "\n";
  }
  return result;
}

// ---- gradcheck ---------------------------------------------------------------

bool GradcheckReport::all_pass() const {
  for (const auto& e : entries) {
    if (!e.pass) return false;
  }
  return !entries.empty();
}

namespace {

// A ParamSet holding a Gaussian's mean and logvar so the closed forms can be
// checked with the generic finite-difference driver.
ParamSet gaussian_params(std::size_t d, Rng& rng) {
  ParamSet p;
  Tensor mean({d});
  Tensor logvar({d});
  for (auto& v : mean.data()) v = rng.normal();
  for (auto& v : logvar.data()) v = 0.5 * rng.normal();
  p.add("mean", mean);
  p.add("logvar", logvar);
  return p;
}

PolicyOutput gaussian_of(const ParamSet& p) { return {p.value("mean"), p.value("logvar")}; }

void store_gaussian_grad(ParamSet& p, const GaussianGrad& g) {
  std::copy(g.mean.begin(), g.mean.end(), p.grad("mean").data().begin());
  std::copy(g.logvar.begin(), g.logvar.end(), p.grad("logvar").data().begin());
}

void scale_grads(ParamSet& p, double factor) {
  for (auto& [name, g] : p.grads()) {
    for (auto& v : g.data()) v *= factor;
  }
}

}  // namespace

GradcheckReport cmd_gradcheck(const ExperimentConfig& config, std::ostream& log,
                              const std::string& corrupt_target) {
  const PromptTable table(config.world);
  const std::size_t d = table.dim();
  Rng rng = Rng(config.seed).split("gradcheck");
  GradcheckReport report;
  GradCheckOptions opts;
  opts.seed = config.seed;

  auto run = [&](const std::string& target, ParamSet& params, LossWithGrad loss) {
    LossWithGrad wrapped = loss;
    if (target == corrupt_target) {
      wrapped = [loss](ParamSet& p) {
        const double v = loss(p);
        scale_grads(p, 1.01);
        return v;
      };
    }
    const GradCheckResult r = grad_check(wrapped, params, opts);
    GradcheckEntry e;
    e.target = target;
    e.max_rel_error = r.max_rel_error;
    e.coords = r.coords_checked;
    e.pass = std::isfinite(r.max_rel_error) && r.max_rel_error < report.tolerance;
    report.entries.push_back(e);
    log << target << " max_rel_error " << format_number(e.max_rel_error) << " over " << e.coords
        << " coords " << (e.pass ? "ok" : "FAIL") << "\n";
  };

  {
    MlpDenoiser den(d, table.embeddings(), {16, 16});
    Rng init = rng.split("dsm-init");
    den.init(init);
    Rng data = rng.split("dsm-data");
    const DsmBatch batch = draw_dsm_batch(table, table.train_prompts(), 8, data);
    run("dsm_loss", den.params(), [&](ParamSet&) { return dsm_loss(den, batch, true); });
  }

  {
    Rng g = rng.split("gaussian");
    ParamSet p = gaussian_params(d, g);
    std::vector<double> x(d);
    for (auto& v : x) v = g.normal();
    run("log_prob", p, [&](ParamSet& q) {
      GaussianGrad grad;
      const double v = log_prob(gaussian_of(q), x, &grad);
      store_gaussian_grad(q, grad);
      return v;
    });
    run("entropy", p, [&](ParamSet& q) {
      GaussianGrad grad;
      const double v = entropy(gaussian_of(q), &grad);
      store_gaussian_grad(q, grad);
      return v;
    });
    run("kl_to_standard", p, [&](ParamSet& q) {
      GaussianGrad grad;
      const double v = kl_to_standard(gaussian_of(q), &grad);
      store_gaussian_grad(q, grad);
      return v;
    });
  }

  {
    // Interior points of both branches and of both advantage signs, away from
    // the kinks at 1 +- clip.
    struct Point {
      double logp_old, adv;
    };
    const Point points[] = {{0.05, 1.3}, {-0.1, -0.7}, {-0.5, 2.0}, {0.6, -1.1}, {-0.5, -0.4}, {0.6, 0.9}};
    ParamSet p;
    p.add("logp_new", Tensor({std::size(points)}, 0.0));
    run("ppo_objective", p, [&](ParamSet& q) {
      double total = 0.0;
      for (std::size_t i = 0; i < std::size(points); ++i) {
        const PpoTerm t =
            ppo_objective(q.value("logp_new")[i], points[i].logp_old, points[i].adv, config.ppo.clip);
        total += t.value;
        q.grad("logp_new")[i] = t.grad;
      }
      return total;
    });
  }

  {
    PolicyConfig pc = config.policy;
    pc.hidden = {16, 16};
    pc.init = InitMode::nonzero;
    pc.nonzero_scale = 0.5;
    NoisePolicy policy(d, table.embeddings(), pc);
    Rng init = rng.split("policy-init");
    policy.init(init);
    // Rollout drawn from a perturbed copy so ratios differ from 1.
    NoisePolicy old = policy;
    {
      std::vector<double> flat = old.params().flat_values();
      Rng jitter = rng.split("policy-jitter");
      for (auto& v : flat) v += 0.05 * jitter.normal();
      old.params().set_flat_values(flat);
    }
    Rng draws = rng.split("policy-draws");
    const std::vector<PromptId> train_prompts = table.train_prompts();
    std::vector<RolloutItem> items(8);
    for (auto& it : items) {
      it.prompt = train_prompts[draws.below(train_prompts.size())];
      const PolicyOutput o = old.forward(it.prompt);
      NoiseDraw nd = sample_noise(o, draws);
      it.logp_old = log_prob(o, nd.x0.data());
      it.x0 = nd.x0;
      it.z = nd.z;
      it.reward = draws.uniform();
      it.advantage = draws.normal();
    }
    std::vector<const RolloutItem*> ptrs;
    for (const auto& it : items) ptrs.push_back(&it);
    run("policy_loss", policy.params(),
        [&](ParamSet&) { return policy_loss(policy, ptrs, config.ppo, true).loss; });

    ValueNet value(table.embeddings(), {16, 16});
    Rng vinit = rng.split("value-init");
    value.init(vinit);
    {
      // The output layer starts at zero; move it off zero so every layer
      // receives a nontrivial gradient.
      std::vector<double> flat = value.params().flat_values();
      for (auto& v : flat) v += 0.1 * vinit.normal();
      value.params().set_flat_values(flat);
    }
    run("value_loss", value.params(), [&](ParamSet&) { return value_loss(value, ptrs, true); });
  }

  if (!corrupt_target.empty()) {
    bool found = false;
    for (const auto& e : report.entries) found = found || e.target == corrupt_target;
    if (!found) throw ConfigError("unknown gradcheck target '" + corrupt_target + "'");
  }
  return report;
}

// ---- golden-report -----------------------------------------------------------

GoldenReport golden_report(const ExperimentConfig& config, const PromptTable& table,
                           const EpsModel& model, const NoisePolicy* policy, const NoiseMap* map) {
  const std::vector<PromptId> eval_prompts = table.eval_prompts();
  const std::size_t m = config.eval.golden_draws;
  const std::size_t d = table.dim();
  const TimeGrid grid(config.eval.golden_steps, config.schedule);
  const RewardContext ctx{&table, &model, &grid};
  const int align_k = config.reward.find(RewardKind::align);
  const Rng root = Rng(config.seed).split("golden");

  GoldenReport report;
  std::vector<double> all_cos, all_align, all_comp;
  for (PromptId y : eval_prompts) {
    Rng rng = root.split(y);
    Tensor x0 = Tensor::matrix(m, d);
    rng.fill_normal(x0.data());
    if (policy) {
      const PolicyOutput out = policy->forward(y);
      for (std::size_t b = 0; b < m; ++b) {
        const Tensor x = noise_from_z(out, x0.row(b));
        std::copy(x.data().begin(), x.data().end(), x0.row(b).begin());
      }
    }
    const std::vector<PromptId> prompts(m, y);
    const Tensor x1 = sample(model, x0, prompts, grid);
    const Tensor comps = reward_components(config.reward, ctx, prompts, x0, x1);
    Tensor back;
    if (!map) back = invert(model, x1, prompts, grid);

    std::vector<double> cs, ra, rc;
    for (std::size_t b = 0; b < m; ++b) {
      GoldenRecord rec;
      rec.prompt = y;
      if (map) {
        rec.cosine = golden_cosine(x0.row(b), *map);
      } else {
        rec.cosine = cosine(x0.row(b), back.row(b));
      }
      rec.r_align = align_k >= 0 ? comps.at(b, static_cast<std::size_t>(align_k))
                                 : align_reward(table, y, x1.row(b), RewardSpec{}.bandwidth);
      rec.r_composite = composite(config.reward, comps.row(b));
      cs.push_back(rec.cosine);
      ra.push_back(rec.r_align);
      rc.push_back(rec.r_composite);
      report.records.push_back(rec);
    }
    report.correlations.push_back({std::to_string(y), stats::pearson(cs, ra), stats::spearman(cs, ra),
                                   stats::pearson(cs, rc), stats::spearman(cs, rc)});
    all_cos.insert(all_cos.end(), cs.begin(), cs.end());
    all_align.insert(all_align.end(), ra.begin(), ra.end());
    all_comp.insert(all_comp.end(), rc.begin(), rc.end());
  }
  report.correlations.push_back({"pooled", stats::pearson(all_cos, all_align),
                                 stats::spearman(all_cos, all_align), stats::pearson(all_cos, all_comp),
                                 stats::spearman(all_cos, all_comp)});
  return report;
}

GoldenReport cmd_golden_report(const ExperimentConfig& config, std::ostream& log, const NoiseMap* map) {
  const PromptTable table(config.world);
  const auto model = load_frozen_denoiser(config, table);
  std::optional<NoisePolicy> policy;
  if (std::filesystem::exists(config.policy_path())) policy.emplace(load_policy(config.policy_path(), table));
  GoldenReport report = golden_report(config, table, *model, policy ? &*policy : nullptr, map);

  {
    auto out = open_output(config.out_path("golden.csv"));
    out << "prompt,cosine,r_align,r_composite\n";
    for (const auto& r : report.records) {
      out << r.prompt << ',' << format_number(r.cosine) << ',' << format_number(r.r_align) << ','
          << format_number(r.r_composite) << "\n";
    }
  }
  auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("undefined"); };
  auto out = open_output(config.out_path("golden_summary.csv"));
  out << "scope,pearson_align,spearman_align,pearson_composite,spearman_composite\n";
  for (const auto& c : report.correlations) {
    const std::string line = c.scope + ',' + cell(c.pearson_align) + ',' + cell(c.spearman_align) + ',' +
                             cell(c.pearson_composite) + ',' + cell(c.spearman_composite);
    out << line << "\n";
    if (c.scope == "pooled") log << "pooled correlations: " << line.substr(7) << "\n";
  }
  log << "noise source: " << (policy ? "policy" : "standard gaussian") << "\n";
  return report;
}

}  // namespace nppo

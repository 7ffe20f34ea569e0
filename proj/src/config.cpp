#include "nppo/config.hpp"

#include <fstream>
#include <set>

#include "nppo/error.hpp"

namespace nppo {

namespace {

using nlohmann::json;

// Reads keys out of one JSON object and rejects anything it was not asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where() + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Section sub(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + where() + "." + key);
    }
  }

  std::string where() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_adamw(Section& s, AdamWConfig& c, const char* lr_key, const char* wd_key, const char* betas_key) {
  s.get(lr_key, c.lr);
  s.get(wd_key, c.weight_decay);
  if (s.has(betas_key)) {
    std::vector<double> betas;
    s.get(betas_key, betas);
    if (betas.size() != 2) throw ConfigError(s.where() + "." + betas_key + " needs two values");
    c.beta1 = betas[0];
    c.beta2 = betas[1];
  }
}

void read_world(Section s, WorldSpec& w) {
  s.get("dim", w.dim);
  s.get("num_prompts", w.num_prompts);
  s.get("std", w.std_dev);
  if (s.has("layout")) {
    Section layout = s.sub("layout");
    if (layout.has("circle")) {
      Section circle = layout.sub("circle");
      CircleLayout c;
      circle.get("radius", c.radius);
      circle.finish();
      w.layout = c;
    } else if (layout.has("explicit")) {
      ExplicitLayout e;
      layout.get("explicit", e.centers);
      w.layout = e;
    } else {
      throw ConfigError("world.layout needs 'circle' or 'explicit'");
    }
    layout.finish();
  }
  if (s.has("embedding")) {
    std::string mode;
    s.get("embedding", mode);
    if (mode == "one_hot") {
      w.embedding = EmbeddingMode::one_hot;
    } else if (mode == "random") {
      w.embedding = EmbeddingMode::random;
    } else {
      throw ConfigError("world.embedding must be 'one_hot' or 'random'");
    }
  }
  s.get("embed_dim", w.embed_dim);
  s.get("embedding_seed", w.embedding_seed);
  s.get("held_out", w.held_out);
  s.finish();
}

void read_denoiser(Section s, DenoiserTrainConfig& d) {
  s.get("hidden", d.hidden);
  s.get("steps", d.steps);
  s.get("batch", d.batch);
  read_adamw(s, d.adamw, "lr", "weight_decay", "betas");
  s.get("max_grad_norm", d.max_grad_norm);
  s.get("log_every", d.log_every);
  s.finish();
}

void read_policy(Section s, PolicyConfig& p) {
  s.get("hidden", p.hidden);
  if (s.has("init")) {
    std::string mode;
    s.get("init", mode);
    if (mode == "zero") {
      p.init = InitMode::zero;
    } else if (mode == "nonzero") {
      p.init = InitMode::nonzero;
    } else {
      throw ConfigError("policy.init must be 'zero' or 'nonzero'");
    }
  }
  s.get("nonzero_scale", p.nonzero_scale);
  if (s.has("logvar_clamp")) {
    std::vector<double> clamp;
    s.get("logvar_clamp", clamp);
    if (clamp.size() != 2) throw ConfigError("policy.logvar_clamp needs [lo, hi]");
    p.logvar_lo = clamp[0];
    p.logvar_hi = clamp[1];
  }
  s.finish();
}

void read_rewards(Section s, CompositeReward& r) {
  if (s.has("components")) {
    const json& arr = s.raw("components");
    if (!arr.is_array()) throw ConfigError("rewards.components must be an array");
    r.components.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section c(arr[i], "rewards.components[" + std::to_string(i) + "]");
      RewardComponent comp;
      std::string kind;
      c.get("kind", kind);
      if (kind.empty()) throw ConfigError(c.where() + ".kind is required");
      comp.spec.kind = parse_reward_kind(kind);
      c.get("weight", comp.weight);
      c.get("bandwidth", comp.spec.bandwidth);
      c.get("target_radius", comp.spec.target_radius);
      c.finish();
      r.components.push_back(comp);
    }
  }
  s.finish();
}

void read_ppo(Section s, PPOConfig& p) {
  s.get("clip", p.clip);
  s.get("kl_weight", p.kl_weight);
  s.get("entropy_weight", p.entropy_weight);
  s.get("epochs", p.epochs);
  s.get("rollout_batch", p.rollout_batch);
  s.get("minibatch", p.minibatch);
  s.get("grad_accum", p.grad_accum);
  s.get("max_grad_norm", p.max_grad_norm);
  s.get("iterations", p.iterations);
  s.get("train_steps", p.train_steps);
  s.get("normalize_advantages", p.normalize_advantages);
  read_adamw(s, p.policy_optimizer, "lr", "weight_decay", "betas");
  read_adamw(s, p.value_optimizer, "value_lr", "value_weight_decay", "value_betas");
  s.finish();
}

void read_eval(Section s, EvalConfig& e) {
  s.get("steps", e.steps);
  s.get("seeds", e.seeds);
  s.get("samples_per_prompt", e.samples_per_prompt);
  s.get("golden_draws", e.golden_draws);
  s.get("golden_steps", e.golden_steps);
  s.finish();
}

json adamw_json(const AdamWConfig& c) {
  return {{"lr", c.lr}, {"weight_decay", c.weight_decay}, {"betas", {c.beta1, c.beta2}}};
}

}  // namespace

void ExperimentConfig::validate() const {
  world.validate();
  schedule.validate();
  policy.validate();
  reward.validate();
  ppo.validate();
  if (eval.steps.empty() || eval.seeds.empty()) throw ConfigError("eval: steps and seeds must be nonempty");
  for (std::size_t n : eval.steps) {
    if (n < 1) throw ConfigError("eval: every step count must be >= 1");
  }
  if (eval.samples_per_prompt < 1) throw ConfigError("eval: samples_per_prompt must be >= 1");
  if (eval.golden_steps < 1) throw ConfigError("eval: golden_steps must be >= 1");
  if (denoiser.steps < 1 || denoiser.batch < 1) throw ConfigError("denoiser: steps and batch must be >= 1");
  if (value_hidden.empty()) throw ConfigError("value: at least one hidden layer is required");
  if (out_dir.empty()) throw ConfigError("out_dir must be set");
}

std::filesystem::path ExperimentConfig::out_path(const std::string& name) const {
  return std::filesystem::path(out_dir) / name;
}

std::filesystem::path ExperimentConfig::denoiser_path() const {
  return paths.denoiser.empty() ? out_path("denoiser.nppo") : std::filesystem::path(paths.denoiser);
}

std::filesystem::path ExperimentConfig::policy_path() const {
  return paths.policy.empty() ? out_path("policy.nppo") : std::filesystem::path(paths.policy);
}

std::filesystem::path ExperimentConfig::value_path() const { return out_path("value.nppo"); }

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "config");
  root.get("seed", c.seed);
  root.get("out_dir", c.out_dir);
  root.get("oracle", c.oracle);
  if (root.has("world")) read_world(root.sub("world"), c.world);
  if (root.has("schedule")) {
    Section s = root.sub("schedule");
    s.get("t_min", c.schedule.t_min);
    s.finish();
  }
  if (root.has("denoiser")) read_denoiser(root.sub("denoiser"), c.denoiser);
  if (root.has("policy")) read_policy(root.sub("policy"), c.policy);
  if (root.has("value")) {
    Section s = root.sub("value");
    s.get("hidden", c.value_hidden);
    s.finish();
  }
  if (root.has("rewards")) read_rewards(root.sub("rewards"), c.reward);
  if (root.has("ppo")) read_ppo(root.sub("ppo"), c.ppo);
  if (root.has("eval")) read_eval(root.sub("eval"), c.eval);
  if (root.has("paths")) {
    Section s = root.sub("paths");
    s.get("denoiser", c.paths.denoiser);
    s.get("policy", c.paths.policy);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json world = {{"dim", c.world.dim},
                {"num_prompts", c.world.num_prompts},
                {"std", c.world.std_dev},
                {"embedding", c.world.embedding == EmbeddingMode::one_hot ? "one_hot" : "random"},
                {"embed_dim", c.world.embed_dim},
                {"embedding_seed", c.world.embedding_seed},
                {"held_out", c.world.held_out}};
  if (const auto* circle = std::get_if<CircleLayout>(&c.world.layout)) {
    world["layout"] = {{"circle", {{"radius", circle->radius}}}};
  } else {
    world["layout"] = {{"explicit", std::get<ExplicitLayout>(c.world.layout).centers}};
  }

  json denoiser = adamw_json(c.denoiser.adamw);
  denoiser.update({{"hidden", c.denoiser.hidden},
                   {"steps", c.denoiser.steps},
                   {"batch", c.denoiser.batch},
                   {"max_grad_norm", c.denoiser.max_grad_norm},
                   {"log_every", c.denoiser.log_every}});

  json components = json::array();
  for (const auto& comp : c.reward.components) {
    json jc = {{"kind", reward_kind_name(comp.spec.kind)}, {"weight", comp.weight}};
    if (comp.spec.kind != RewardKind::golden_cosine) jc["bandwidth"] = comp.spec.bandwidth;
    if (comp.spec.kind == RewardKind::aesthetic) jc["target_radius"] = comp.spec.target_radius;
    components.push_back(jc);
  }

  json ppo = adamw_json(c.ppo.policy_optimizer);
  ppo.update({{"value_lr", c.ppo.value_optimizer.lr},
              {"value_weight_decay", c.ppo.value_optimizer.weight_decay},
              {"value_betas", {c.ppo.value_optimizer.beta1, c.ppo.value_optimizer.beta2}},
              {"clip", c.ppo.clip},
              {"kl_weight", c.ppo.kl_weight},
              {"entropy_weight", c.ppo.entropy_weight},
              {"epochs", c.ppo.epochs},
              {"rollout_batch", c.ppo.rollout_batch},
              {"minibatch", c.ppo.minibatch},
              {"grad_accum", c.ppo.grad_accum},
              {"max_grad_norm", c.ppo.max_grad_norm},
              {"iterations", c.ppo.iterations},
              {"train_steps", c.ppo.train_steps},
              {"normalize_advantages", c.ppo.normalize_advantages}});

  return {{"seed", c.seed},
          {"out_dir", c.out_dir},
          {"oracle", c.oracle},
          {"world", world},
          {"schedule", {{"t_min", c.schedule.t_min}}},
          {"denoiser", denoiser},
          {"policy",
           {{"hidden", c.policy.hidden},
            {"init", c.policy.init == InitMode::zero ? "zero" : "nonzero"},
            {"nonzero_scale", c.policy.nonzero_scale},
            {"logvar_clamp", {c.policy.logvar_lo, c.policy.logvar_hi}}}},
          {"value", {{"hidden", c.value_hidden}}},
          {"rewards", {{"components", components}}},
          {"ppo", ppo},
          {"eval",
           {{"steps", c.eval.steps},
            {"seeds", c.eval.seeds},
            {"samples_per_prompt", c.eval.samples_per_prompt},
            {"golden_draws", c.eval.golden_draws},
            {"golden_steps", c.eval.golden_steps}}},
          {"paths", {{"denoiser", c.paths.denoiser}, {"policy", c.paths.policy}}}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace nppo

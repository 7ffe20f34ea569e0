#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <sstream>

#include "nppo/checkpoint.hpp"
#include "nppo/error.hpp"
#include "nppo/experiments.hpp"

namespace py = pybind11;
using namespace nppo;

namespace {

// Configs cross the boundary as plain dicts, routed through the JSON module.
ExperimentConfig to_config(const py::object& cfg) {
  if (cfg.is_none()) return ExperimentConfig{};
  if (py::isinstance<py::str>(cfg)) return load_config(cfg.cast<std::string>());
  const std::string text = py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
  return config_from_json(nlohmann::json::parse(text));
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::object opt(const std::optional<double>& v) { return v ? py::cast(*v) : py::none(); }

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_matrix(const Array& a, std::size_t dim) {
  if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(1)) != dim) {
    throw ShapeError("expected an array of shape [B, " + std::to_string(dim) + "]");
  }
  Tensor t = Tensor::matrix(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), t.data().begin());
  return t;
}

Array to_array(const Tensor& t) {
  Array out({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

PolicyOutput gaussian(const std::vector<double>& mean, const std::vector<double>& logvar) {
  if (mean.size() != logvar.size()) throw ShapeError("mean and logvar lengths differ");
  return PolicyOutput{Tensor::vector(mean), Tensor::vector(logvar)};
}

// A frozen denoiser together with the world it was trained on.
struct Denoiser {
  PromptTable table;
  std::unique_ptr<EpsModel> model;

  Array run(const Array& x, const std::vector<PromptId>& prompts, std::size_t steps, bool forward) const {
    const Tensor in = to_matrix(x, table.dim());
    if (prompts.size() != in.rows()) throw ShapeError("one prompt per row is required");
    for (PromptId y : prompts) table.check_prompt(y);
    const TimeGrid grid(steps);
    Tensor out;
    {
      py::gil_scoped_release release;
      out = forward ? sample(*model, in, prompts, grid) : invert(*model, in, prompts, grid);
    }
    return to_array(out);
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Noise-policy PPO on a toy conditional diffusion world";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  m.def("default_config", [] { return to_py(config_to_json(ExperimentConfig{})); });
  m.def(
      "normalize_config", [](const py::object& cfg) { return to_py(config_to_json(to_config(cfg))); },
      py::arg("config") = py::none(), "Fill defaults and validate; accepts a dict or a path.");

  m.def(
      "train_denoiser",
      [](const py::object& cfg) {
        const ExperimentConfig c = to_config(cfg);
        std::ostringstream log;
        DenoiserRunResult r;
        {
          py::gil_scoped_release release;
          r = cmd_train_denoiser(c, log);
        }
        py::dict d;
        d["checkpoint"] = r.checkpoint.string();
        d["oracle"] = r.oracle;
        d["final_loss"] = r.final_loss;
        d["log"] = log.str();
        return d;
      },
      py::arg("config") = py::none());

  m.def(
      "train_policy",
      [](const py::object& cfg) {
        const ExperimentConfig c = to_config(cfg);
        std::ostringstream log;
        PolicyRunResult r;
        {
          py::gil_scoped_release release;
          r = cmd_train_policy(c, log);
        }
        py::list metrics;
        for (const auto& it : r.train.metrics) metrics.append(to_py(it.to_json()));
        py::dict d;
        d["metrics"] = metrics;
        d["policy_steps"] = r.train.policy_steps;
        d["denoiser_hash_before"] = r.denoiser_hash_before;
        d["denoiser_hash_after"] = r.denoiser_hash_after;
        d["log"] = log.str();
        return d;
      },
      py::arg("config") = py::none());

  m.def(
      "eval_sweep",
      [](const py::object& cfg) {
        const ExperimentConfig c = to_config(cfg);
        std::ostringstream log;
        SweepResult r;
        {
          py::gil_scoped_release release;
          r = cmd_eval_sweep(c, log);
        }
        py::list rows;
        for (const auto& row : r.rows) {
          py::dict d;
          d["steps"] = row.steps;
          d["policy_mean"] = row.policy_mean;
          d["policy_std"] = row.policy_std;
          d["baseline_mean"] = row.baseline_mean;
          d["baseline_std"] = row.baseline_std;
          d["gap"] = row.gap();
          d["seeds"] = row.seeds;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config") = py::none(), "Writes sweep.csv and returns its rows.");

  m.def(
      "gradcheck",
      [](const py::object& cfg, const std::string& corrupt) {
        const ExperimentConfig c = to_config(cfg);
        std::ostringstream log;
        const GradcheckReport r = cmd_gradcheck(c, log, corrupt);
        py::list out;
        for (const auto& e : r.entries) {
          py::dict d;
          d["target"] = e.target;
          d["max_rel_error"] = e.max_rel_error;
          d["coords"] = e.coords;
          d["pass"] = e.pass;
          out.append(d);
        }
        return out;
      },
      py::arg("config") = py::none(), py::arg("corrupt") = "");

  m.def(
      "golden_report",
      [](const py::object& cfg) {
        const ExperimentConfig c = to_config(cfg);
        std::ostringstream log;
        GoldenReport r;
        {
          py::gil_scoped_release release;
          r = cmd_golden_report(c, log);
        }
        py::list corr;
        for (const auto& g : r.correlations) {
          py::dict d;
          d["scope"] = g.scope;
          d["pearson_align"] = opt(g.pearson_align);
          d["spearman_align"] = opt(g.spearman_align);
          d["pearson_composite"] = opt(g.pearson_composite);
          d["spearman_composite"] = opt(g.spearman_composite);
          corr.append(d);
        }
        Array cosines(static_cast<py::ssize_t>(r.records.size()));
        for (std::size_t i = 0; i < r.records.size(); ++i) cosines.mutable_data()[i] = r.records[i].cosine;
        py::dict d;
        d["cosines"] = cosines;
        d["correlations"] = corr;
        return d;
      },
      py::arg("config") = py::none());

  py::class_<Denoiser>(m, "Denoiser")
      .def_property_readonly("dim", [](const Denoiser& d) { return d.table.dim(); })
      .def_property_readonly("num_prompts", [](const Denoiser& d) { return d.table.num_prompts(); })
      .def(
          "sample",
          [](const Denoiser& d, const Array& x0, const std::vector<PromptId>& prompts, std::size_t steps) {
            return d.run(x0, prompts, steps, true);
          },
          py::arg("x0"), py::arg("prompts"), py::arg("steps"))
      .def(
          "invert",
          [](const Denoiser& d, const Array& x1, const std::vector<PromptId>& prompts, std::size_t steps) {
            return d.run(x1, prompts, steps, false);
          },
          py::arg("x1"), py::arg("prompts"), py::arg("steps"));

  m.def(
      "load_denoiser",
      [](const py::object& cfg) {
        const ExperimentConfig c = to_config(cfg);
        auto d = std::make_unique<Denoiser>(Denoiser{PromptTable(c.world), nullptr});
        d->model = load_denoiser(c.denoiser_path(), d->table);
        return d;
      },
      py::arg("config") = py::none(), "Loads the checkpoint at the config's denoiser path.");
  m.def(
      "oracle_denoiser",
      [](const py::object& cfg) {
        const ExperimentConfig c = to_config(cfg);
        auto d = std::make_unique<Denoiser>(Denoiser{PromptTable(c.world), nullptr});
        d->model = std::make_unique<OracleDenoiser>(d->table);
        return d;
      },
      py::arg("config") = py::none(), "Closed-form denoiser for the config's world.");

  m.def(
      "log_prob",
      [](const std::vector<double>& mean, const std::vector<double>& logvar, const std::vector<double>& x) {
        if (x.size() != mean.size()) throw ShapeError("x and mean lengths differ");
        return log_prob(gaussian(mean, logvar), x);
      },
      py::arg("mean"), py::arg("logvar"), py::arg("x"));
  m.def(
      "entropy",
      [](const std::vector<double>& logvar) {
        return entropy(gaussian(std::vector<double>(logvar.size(), 0.0), logvar));
      },
      py::arg("logvar"));
  m.def(
      "kl_to_standard",
      [](const std::vector<double>& mean, const std::vector<double>& logvar) {
        return kl_to_standard(gaussian(mean, logvar));
      },
      py::arg("mean"), py::arg("logvar"));
  m.def(
      "ppo_objective",
      [](double logp_new, double logp_old, double adv, double clip) {
        const PpoTerm t = ppo_objective(logp_new, logp_old, adv, clip);
        py::dict d;
        d["value"] = t.value;
        d["grad"] = t.grad;
        d["ratio"] = t.ratio;
        d["clipped"] = t.clipped;
        return d;
      },
      py::arg("logp_new"), py::arg("logp_old"), py::arg("advantage"), py::arg("clip") = 0.2);
  m.def("file_hash", [](const std::filesystem::path& p) { return file_hash(p); }, py::arg("path"));
}

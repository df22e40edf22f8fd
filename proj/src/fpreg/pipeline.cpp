// Copyright 2026 The fpreg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fpreg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "fpreg/error.hpp"

namespace fpreg {

AnalysisSummary analyze(const FilterBank& bank, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters, const std::filesystem::path& out_dir) {
  if (bank.empty()) fail(ErrorKind::kEmpty, "analysis of an empty bank");
  if (k == 0 || bank.size() < k)
    fail(ErrorKind::kSize, "analysis needs 1 <= K <= N (N=" + std::to_string(bank.size()) +
                               ", K=" + std::to_string(k) + ")");
  const Matrix x = to_matrix(bank);
  const KMeansModel km = kmeans_fit(x, k, seed, max_iters);
  const ClusterReport report = cluster_moments(x, km.assignments, k);

  AnalysisSummary s;
  s.filters = bank.size();
  s.k = k;
  s.distortion = km.distortion;
  s.iterations = km.iterations;
  s.histogram = report.histogram;
  s.files = render_report(report, out_dir);
  return s;
}

std::vector<double> finite_difference_grad(std::span<const double> w, const GaussianMixture& m,
                                           std::span<const double> steps) {
  std::vector<double> probe(w.begin(), w.end()), g(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double h = steps[j];
    probe[j] = w[j] + h;
    const double up = nll(probe, m);
    probe[j] = w[j] - h;
    const double down = nll(probe, m);
    probe[j] = w[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

GradcheckResult gradcheck(const GaussianMixture& model, const GradcheckOptions& opt) {
  model.validate(1e-9, 0.0);
  const std::size_t d = model.dim, k = model.components();
  std::vector<double> steps(d);
  for (std::size_t j = 0; j < d; ++j) {
    double min_var = model.variances[j];
    for (std::size_t c = 1; c < k; ++c) min_var = std::min(min_var, model.variances[c * d + j]);
    steps[j] = opt.step * std::min(1.0, std::sqrt(min_var));
  }

  GradcheckResult r;
  r.probes = opt.probes;
  Rng rng(opt.seed);
  std::vector<double> w(d);
  for (std::size_t p = 0; p < opt.probes; ++p) {
    // Alternate between probes between components and probes close to one
    // centre, where a single component dominates.
    const std::size_t c = rng.below(k);
    const double spread = p % 2 == 0 ? 1.5 : 0.25;
    for (std::size_t j = 0; j < d; ++j)
      w[j] = model.means[c * d + j] + spread * std::sqrt(model.variances[c * d + j]) * rng.normal();

    const auto exact = grad_exact(w, model);
    const auto approx = grad_approx(w, model);
    const auto fd = finite_difference_grad(w, model, steps);
    for (std::size_t j = 0; j < d; ++j) {
      const double err = std::fabs(exact[j] - fd[j]) / std::max({1.0, std::fabs(exact[j]), std::fabs(fd[j])});
      if (err > r.max_rel_error || !std::isfinite(err)) {
        r.max_rel_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
        r.worst_probe = p;
        r.worst_coord = j;
        r.worst_w = w;
      }
    }
    if (k == 1 && exact != approx) r.single_component_identical = false;

    const auto gamma = responsibilities(w, model);
    if (*std::max_element(gamma.begin(), gamma.end()) > 1.0 - opt.dominance) {
      ++r.dominance_probes;
      for (std::size_t j = 0; j < d; ++j) {
        const double err = std::fabs(approx[j] - exact[j]);
        if (err > r.max_approx_abs_error) {
          r.max_approx_abs_error = err;
          r.worst_dominance_probe = p;
        }
      }
    }
  }
  r.passed = r.max_rel_error <= opt.rel_tol && r.max_approx_abs_error <= opt.approx_abs_tol &&
             (k != 1 || r.single_component_identical);
  return r;
}

namespace {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("config key '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("run configuration is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::kFormat, "run configuration must be a JSON object");

  std::string missing;
  for (const char* key : kRequiredRunKeys)
    if (!j.contains(key)) missing += (missing.empty() ? "" : ", ") + std::string(key);
  if (!missing.empty()) fail(ErrorKind::kConfig, "missing config keys: " + missing);

  RunConfig cfg;
  auto& t = cfg.train;
  t.learning_rate = get_or(j, "learning_rate", 0.01);
  t.batch_size = get_or<std::size_t>(j, "batch_size", 0);
  t.iterations = get_or<std::size_t>(j, "iterations", 0);
  t.seed = get_or<std::uint64_t>(j, "seed", 0);
  t.reg.lambda = get_or(j, "lambda", 0.0);
  t.reg.alpha = get_or(j, "alpha", 0.0);
  t.reg.mode = parse_gradient_mode(get_or<std::string>(j, "gradient_mode", "approximate"));
  if (j.contains("scope")) {
    if (j["scope"].is_string())
      t.reg.scope = {j["scope"].get<std::string>()};
    else
      t.reg.scope = get_or<std::vector<std::string>>(j, "scope", {});
  }
  t.snapshot_iters = get_or<std::vector<std::size_t>>(j, "snapshot_iters", {});
  t.eval_every = get_or<std::size_t>(j, "eval_every", 100);
  t.eval_train_limit = get_or<std::size_t>(j, "eval_train_limit", 0);
  t.freeze_at = get_or<std::size_t>(j, "freeze_at", 0);
  t.freeze_pattern = get_or<std::string>(j, "freeze_pattern", "conv*");
  cfg.layers = get_or<std::string>(j, "architecture", "");
  cfg.model = resolve(base_dir, get_or<std::string>(j, "model", ""));
  cfg.init = resolve(base_dir, get_or<std::string>(j, "init", ""));

  if (t.batch_size == 0) fail(ErrorKind::kConfig, "batch_size must be positive");
  if (!(t.learning_rate > 0.0)) fail(ErrorKind::kConfig, "learning_rate must be positive");
  if (t.eval_every == 0) fail(ErrorKind::kConfig, "eval_every must be positive");
  if (t.reg.lambda < 0.0 || t.reg.alpha < 0.0) fail(ErrorKind::kConfig, "lambda and alpha must be nonnegative");
  if (t.reg.lambda > 0.0 && cfg.model.empty())
    fail(ErrorKind::kConfig, "missing config keys: model (required when lambda > 0)");

  const json& d = j["data"];
  if (!d.is_object()) fail(ErrorKind::kConfig, "'data' must be an object");
  auto& data = cfg.data;
  data.kind = get_or<std::string>(d, "kind", "synthetic");
  if (data.kind == "cifar10") {
    if (!d.contains("dir")) fail(ErrorKind::kConfig, "missing config keys: data.dir");
    data.dir = resolve(base_dir, d["dir"].get<std::string>());
    data.train_limit = get_or<std::size_t>(d, "train", 0);
    data.test_limit = get_or<std::size_t>(d, "test", 0);
  } else if (data.kind == "synthetic") {
    auto& s = data.synth;
    s.classes = get_or<std::size_t>(d, "classes", 10);
    s.per_class = get_or<std::size_t>(d, "per_class", 100);
    s.channels = get_or<std::size_t>(d, "channels", 3);
    s.height = get_or<std::size_t>(d, "height", 32);
    s.width = get_or<std::size_t>(d, "width", 32);
    s.noise = get_or(d, "noise", 0.1);
    s.jitter = get_or(d, "jitter", 1.0);
    s.prototype_seed = get_or<std::uint64_t>(d, "prototype_seed", 1);
    data.test_per_class = get_or<std::size_t>(d, "test_per_class", s.per_class / 5 + 1);
    data.train_seed = get_or<std::uint64_t>(d, "train_seed", 1);
    data.test_seed = get_or<std::uint64_t>(d, "test_seed", 2);
  } else {
    fail(ErrorKind::kConfig, "data.kind must be 'cifar10' or 'synthetic'");
  }

  nlohmann::ordered_json c;
  c["learning_rate"] = t.learning_rate;
  c["batch_size"] = t.batch_size;
  c["iterations"] = t.iterations;
  c["seed"] = t.seed;
  c["lambda"] = t.reg.lambda;
  c["alpha"] = t.reg.alpha;
  c["gradient_mode"] = to_string(t.reg.mode);
  c["scope"] = t.reg.scope;
  c["snapshot_iters"] = t.snapshot_iters;
  c["eval_every"] = t.eval_every;
  c["eval_train_limit"] = t.eval_train_limit;
  c["freeze_at"] = t.freeze_at;
  c["freeze_pattern"] = t.freeze_pattern;
  c["architecture"] = cfg.layers;
  c["model"] = cfg.model.string();
  c["init"] = cfg.init.string();
  nlohmann::ordered_json dc;
  dc["kind"] = data.kind;
  if (data.kind == "cifar10") {
    dc["dir"] = data.dir.string();
    dc["train"] = data.train_limit;
    dc["test"] = data.test_limit;
  } else {
    const auto& s = data.synth;
    dc["classes"] = s.classes;
    dc["per_class"] = s.per_class;
    dc["test_per_class"] = data.test_per_class;
    dc["channels"] = s.channels;
    dc["height"] = s.height;
    dc["width"] = s.width;
    dc["noise"] = s.noise;
    dc["jitter"] = s.jitter;
    dc["prototype_seed"] = s.prototype_seed;
    dc["train_seed"] = data.train_seed;
    dc["test_seed"] = data.test_seed;
  }
  c["data"] = dc;
  cfg.canonical = c.dump(2) + "\n";
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                          path.parent_path());
}

LoadedData load_data(const DataConfig& cfg) {
  if (cfg.kind == "cifar10") {
    auto splits = load_cifar10(cfg.dir, cfg.train_limit, cfg.test_limit);
    return {std::move(splits.train), std::move(splits.test)};
  }
  SynthSpec test_spec = cfg.synth;
  test_spec.per_class = cfg.test_per_class;
  return {synth_dataset(cfg.synth, cfg.train_seed, Split::kTrain),
          synth_dataset(test_spec, cfg.test_seed, Split::kTest)};
}

Architecture resolve_architecture(const RunConfig& cfg, const Dataset& data) {
  if (cfg.layers.empty()) {
    auto a = Architecture::reference(data.classes);
    a.channels = data.channels;
    a.height = data.height;
    a.width = data.width;
    return a;
  }
  return Architecture::parse(cfg.layers, data.channels, data.height, data.width);
}

TrainRunSummary run_training(const RunConfig& cfg, const std::filesystem::path& out_dir,
                             const std::function<void(const EvalRecord&)>& on_eval) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + out_dir.string() + "': " + ec.message());
  write_text_file(out_dir / "run_config.json", cfg.canonical);

  const LoadedData data = load_data(cfg.data);
  if (data.train.size() == 0 || data.test.size() == 0) fail(ErrorKind::kEmpty, "dataset is empty");
  Network net = Network::build(resolve_architecture(cfg, data.train), cfg.train.seed);
  if (net.num_classes() != data.train.classes)
    fail(ErrorKind::kConfig, "network head has " + std::to_string(net.num_classes()) +
                                 " outputs for " + std::to_string(data.train.classes) + " classes");
  if (!cfg.init.empty()) net.load(from_archive(read_tarc(cfg.init)));

  std::optional<GaussianMixture> model;
  if (!cfg.model.empty()) model = read_gmm(cfg.model);

  TrainRunSummary summary;
  summary.parameters = net.parameter_count();
  TrainHooks hooks;
  hooks.on_eval = [&](const EvalRecord& rec) {
    summary.log.push_back(rec);
    write_text_file(out_dir / "train_log.csv", render_train_log_csv(summary.log));
    if (on_eval) on_eval(rec);
  };
  hooks.on_snapshot = [&](std::size_t it, const Network& n) {
    const std::string name = "snapshot_" + std::to_string(it) + ".tarc";
    write_tarc(to_archive(n.params()), out_dir / name);
    summary.snapshots.push_back(name);
  };
  hooks.on_freeze = [&](std::size_t, std::size_t matched) { summary.frozen_matched = matched; };

  train(net, data.train, data.test, cfg.train, model ? &*model : nullptr, hooks);
  write_tarc(to_archive(net.params()), out_dir / "final.tarc");
  return summary;
}

}  // namespace fpreg

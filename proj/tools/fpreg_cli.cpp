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

// fpreg command-line tool: extract -> analyze -> fit -> score/gradcheck ->
// train -> report. Every command writes a manifest before any other output.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpreg/fpreg.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

enum ExitCode { kOk = 0, kInputError = 2, kEmptyResult = 3, kSizeError = 4, kInvariantError = 5 };

int exit_code(fpreg_status s) {
  switch (s) {
    case FPREG_OK: return kOk;
    case FPREG_ERR_EMPTY: return kEmptyResult;
    case FPREG_ERR_SIZE: return kSizeError;
    case FPREG_ERR_NUMERIC:
    case FPREG_ERR_INVARIANT:
    case FPREG_ERR_INTERNAL: return kInvariantError;
    default: return kInputError;
  }
}

// Thrown to unwind out of a command with a status already reported.
struct CommandFailed {
  int code;
};

void check(fpreg_status s, const char* what) {
  if (s == FPREG_OK) return;
  std::fprintf(stderr, "fpreg: %s: %s: %s\n", what, fpreg_status_string(s), fpreg_last_error());
  throw CommandFailed{exit_code(s)};
}

fs::path output_root() {
  const char* env = std::getenv("FPREG_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path(".");
}

// Relative output paths land under $FPREG_OUTPUT_ROOT when it is set.
fs::path resolve_output(const std::string& p) {
  fs::path path(p);
  const char* env = std::getenv("FPREG_OUTPUT_ROOT");
  if (path.is_relative() && env && *env) return fs::path(env) / path;
  return path;
}

std::string digest(const fs::path& p) {
  char hex[65];
  check(fpreg_sha256_file(p.string().c_str(), hex), ("hashing " + p.string()).c_str());
  return hex;
}

class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> args) {
    doc_["tool"] = "fpreg";
    doc_["version"] = fpreg_version();
    doc_["command"] = std::move(command);
    doc_["args"] = std::move(args);
    doc_["inputs"] = ordered_json::array();
    doc_["parameters"] = ordered_json::object();
  }

  void input(const fs::path& p) {
    ordered_json e;
    e["path"] = p.string();
    e["sha256"] = digest(p);
    doc_["inputs"].push_back(e);
  }
  template <typename T>
  void param(const char* key, const T& value) {
    doc_["parameters"][key] = value;
  }
  void output(const fs::path& p) { doc_["output"] = p.string(); }

  void write(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << doc_.dump(2) << "\n";
    if (!out) {
      std::fprintf(stderr, "fpreg: cannot write manifest %s\n", path.string().c_str());
      throw CommandFailed{kInputError};
    }
  }

 private:
  ordered_json doc_;
};

fs::path sibling_manifest(const fs::path& out) {
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

struct Handle {
  fpreg_archive* archive = nullptr;
  fpreg_bank* bank = nullptr;
  fpreg_gmm* gmm = nullptr;
  fpreg_run_config* config = nullptr;
  ~Handle() {
    fpreg_archive_free(archive);
    fpreg_bank_free(bank);
    fpreg_gmm_free(gmm);
    fpreg_run_config_free(config);
  }
};

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

int cmd_extract(const std::vector<std::string>& args, const std::string& tarc, const std::string& out_arg,
                const std::vector<std::string>& include, const std::vector<std::string>& exclude) {
  const fs::path out = resolve_output(out_arg);
  Manifest m("extract", args);
  m.input(tarc);
  m.param("include", include);
  m.param("exclude", exclude);
  m.output(out);
  m.write(sibling_manifest(out));

  Handle h;
  check(fpreg_archive_read(tarc.c_str(), &h.archive), "reading archive");
  const auto inc = c_strings(include), exc = c_strings(exclude);
  check(fpreg_bank_extract(h.archive, inc.data(), inc.size(), exc.data(), exc.size(), &h.bank),
        "extracting filters");
  for (size_t g = 0; g < fpreg_bank_group_count(h.bank); ++g) {
    const char* name = nullptr;
    size_t count = 0;
    check(fpreg_bank_group(h.bank, g, &name, &count), "grouping");
    std::printf("  %s: %zu\n", name, count);
  }
  check(fpreg_bank_write(h.bank, out.string().c_str()), "writing bank");
  std::printf("extracted %zu filters\n", fpreg_bank_size(h.bank));
  return kOk;
}

int cmd_analyze(const std::vector<std::string>& args, const std::string& bank_path, size_t k,
                uint64_t seed, size_t max_iters, const std::string& out_arg) {
  const fs::path out = resolve_output(out_arg);
  Manifest m("analyze", args);
  m.input(bank_path);
  m.param("k", k);
  m.param("seed", seed);
  m.param("max_iters", max_iters);
  m.output(out);
  m.write(out / "manifest.json");

  Handle h;
  int odd = 0;
  check(fpreg_bank_read(bank_path.c_str(), &h.bank, &odd), "reading bank");
  if (odd) std::fprintf(stderr, "fpreg: warning: bank dim is %zu, not 9\n", fpreg_bank_dim(h.bank));
  fpreg_analysis_summary s{};
  check(fpreg_analyze(h.bank, k, seed, max_iters, out.string().c_str(), &s), "analysis");
  std::printf("filters %zu\nclusters %zu\niterations %zu\ndistortion %.17g\n", s.filters, s.k,
              s.iterations, s.distortion);
  std::printf("wrote %zu mean grids, %zu covariance matrices, histogram total %zu\n", s.mean_grids,
              s.covariance_files, s.histogram_total);
  return kOk;
}

void print_em_iteration(void*, size_t it, double ll, int reseeded, int monotone) {
  std::printf("iter %zu loglik %.17g%s%s\n", it, ll, reseeded ? " reseed" : "",
              monotone ? "" : " NON-MONOTONE");
}

int cmd_fit(const std::vector<std::string>& args, const std::string& bank_path,
            const fpreg_em_options& opt, const std::string& out_arg) {
  const fs::path out = resolve_output(out_arg);
  Manifest m("fit", args);
  m.input(bank_path);
  m.param("k", opt.components);
  m.param("seed", opt.seed);
  m.param("max_iters", opt.max_iters);
  m.param("tol", opt.rel_tol);
  m.param("variance_floor", opt.variance_floor);
  m.output(out);
  m.write(sibling_manifest(out));

  Handle h;
  check(fpreg_bank_read(bank_path.c_str(), &h.bank, nullptr), "reading bank");
  fpreg_em_summary s{};
  check(fpreg_gmm_fit(h.bank, &opt, print_em_iteration, nullptr, &h.gmm, &s), "fitting");
  check(fpreg_gmm_write(h.gmm, out.string().c_str()), "writing model");
  std::printf("iterations %zu converged %s final loglik %.17g\n", s.iterations,
              s.converged ? "yes" : "no", s.final_log_likelihood);
  if (!s.monotone) {
    std::fprintf(stderr, "fpreg: log-likelihood decreased outside a re-seed iteration\n");
    return kInvariantError;
  }
  return kOk;
}

fs::path default_manifest(const std::string& command, const std::string& override_path) {
  if (!override_path.empty()) return resolve_output(override_path);
  return output_root() / (command + ".manifest.json");
}

int cmd_score(const std::vector<std::string>& args, const std::string& bank_path,
              const std::string& model_path, const std::string& manifest) {
  Manifest m("score", args);
  m.input(bank_path);
  m.input(model_path);
  m.write(default_manifest("score", manifest));

  Handle h;
  check(fpreg_bank_read(bank_path.c_str(), &h.bank, nullptr), "reading bank");
  check(fpreg_gmm_read(model_path.c_str(), &h.gmm), "reading model");
  double total = 0.0, mean = 0.0;
  check(fpreg_gmm_score_bank(h.gmm, h.bank, &total, &mean), "scoring");
  std::printf("filters %zu\ntotal_nll %.17g\nmean_nll %.17g\n", fpreg_bank_size(h.bank), total, mean);
  return kOk;
}

int cmd_gradcheck(const std::vector<std::string>& args, const std::string& model_path,
                  const fpreg_gradcheck_options& opt, const std::string& manifest) {
  Manifest m("gradcheck", args);
  m.input(model_path);
  m.param("probes", opt.probes);
  m.param("seed", opt.seed);
  m.param("step", opt.step);
  m.write(default_manifest("gradcheck", manifest));

  Handle h;
  check(fpreg_gmm_read(model_path.c_str(), &h.gmm), "reading model");
  fpreg_gradcheck_result r{};
  check(fpreg_gradcheck(h.gmm, &opt, &r), "gradient check");
  std::printf("probes %zu\nexact_vs_fd_max_rel_error %.3e (tol %.1e)\n", r.probes, r.max_rel_error, opt.rel_tol);
  std::printf("dominant_probes %zu\napprox_vs_exact_max_abs_error %.3e (tol %.1e)\n", r.dominance_probes,
              r.max_approx_abs_error, opt.approx_abs_tol);
  if (fpreg_gmm_components(h.gmm) == 1)
    std::printf("single_component_identical %s\n", r.single_component_identical ? "yes" : "no");
  if (!r.passed) {
    std::printf("FAIL worst exact probe %zu coordinate %zu; worst approx probe %zu\n", r.worst_probe,
                r.worst_coord, r.worst_dominance_probe);
    return kInvariantError;
  }
  std::printf("PASS\n");
  return kOk;
}

void print_eval(void*, size_t it, double train_loss, double test_loss, double acc) {
  std::printf("iter %zu train_loss %.6f test_loss %.6f gap %.6f test_acc %.4f\n", it, train_loss, test_loss,
              test_loss - train_loss, acc);
  std::fflush(stdout);
}

int cmd_train(const std::vector<std::string>& args, const std::string& config_path, const std::string& out_arg) {
  const fs::path out = resolve_output(out_arg.empty() ? fs::path(config_path).stem().string() : out_arg);
  Handle h;
  check(fpreg_run_config_read(config_path.c_str(), &h.config), "reading run configuration");
  const auto canonical = ordered_json::parse(fpreg_run_config_canonical(h.config));

  Manifest m("train", args);
  m.input(config_path);
  for (const char* key : {"model", "init"}) {
    const auto p = canonical[key].get<std::string>();
    if (!p.empty()) m.input(p);
  }
  m.param("config", canonical);
  m.output(out);
  m.write(out / "manifest.json");

  fpreg_train_summary s{};
  check(fpreg_train(h.config, out.string().c_str(), print_eval, nullptr, &s), "training");
  std::printf("parameters %zu evaluations %zu snapshots %zu\n", s.parameters, s.evaluations, s.snapshots);
  return kOk;
}

int cmd_report(const std::vector<std::string>& args, const std::string& logs, const std::string& out_arg) {
  const fs::path out = resolve_output(out_arg);
  Manifest m("report", args);
  std::vector<fs::path> inputs;
  if (fs::is_directory(logs))
    for (const auto& e : fs::directory_iterator(logs))
      if (fs::exists(e.path() / "train_log.csv")) inputs.push_back(e.path() / "train_log.csv");
  std::sort(inputs.begin(), inputs.end());
  for (const auto& p : inputs) m.input(p);
  m.output(out);
  m.write(out / "manifest.json");

  fpreg_report_summary s{};
  check(fpreg_report(logs.c_str(), out.string().c_str(), &s), "report");
  std::printf("runs %zu aligned iterations %zu\n", s.runs, s.aligned_iterations);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Filter statistics and mixture-prior regularisation toolkit"};
  app.set_version_flag("--version", std::string(fpreg_version()));
  app.require_subcommand(1);
  std::vector<std::string> args(argv + 1, argv + argc);

  std::string tarc, bank, out, model, config, logs, manifest;
  std::vector<std::string> include, exclude;
  auto* extract = app.add_subcommand("extract", "Extract every 3x3 filter from a tensor archive");
  extract->add_option("--tarc", tarc, "Input TARC archive")->required();
  extract->add_option("--out", out, "Output FBNK bank")->required();
  extract->add_option("--include", include, "Glob over tensor names to keep (repeatable)");
  extract->add_option("--exclude", exclude, "Glob over tensor names to drop (repeatable)");

  size_t k_analyze = 10, analyze_iters = 300;
  uint64_t seed = 0;
  auto* analyze = app.add_subcommand("analyze", "k-means cluster analysis of a filter bank");
  analyze->add_option("--bank", bank, "Input FBNK bank")->required();
  analyze->add_option("--k", k_analyze, "Number of clusters")->capture_default_str();
  analyze->add_option("--seed", seed, "Seed")->capture_default_str();
  analyze->add_option("--max-iters", analyze_iters, "Lloyd iteration cap")->capture_default_str();
  analyze->add_option("--out", out, "Output directory")->required();

  fpreg_em_options em{};
  fpreg_em_options_default(&em);
  auto* fit = app.add_subcommand("fit", "Fit a diagonal Gaussian mixture by EM");
  fit->add_option("--bank", bank, "Input FBNK bank")->required();
  fit->add_option("--k", em.components, "Mixture components")->capture_default_str();
  fit->add_option("--seed", em.seed, "Seed")->capture_default_str();
  fit->add_option("--max-iters", em.max_iters, "EM iteration cap")->capture_default_str();
  fit->add_option("--tol", em.rel_tol, "Relative log-likelihood tolerance")->capture_default_str();
  fit->add_option("--variance-floor", em.variance_floor, "Minimum variance")->capture_default_str();
  fit->add_option("--out", out, "Output mixture file")->required();

  auto* score = app.add_subcommand("score", "Total and mean negative log-likelihood of a bank");
  score->add_option("--bank", bank, "Input FBNK bank")->required();
  score->add_option("--model", model, "Mixture file")->required();
  score->add_option("--manifest", manifest, "Manifest path");

  fpreg_gradcheck_options gc{};
  fpreg_gradcheck_options_default(&gc);
  auto* gradcheck = app.add_subcommand("gradcheck", "Audit regulariser gradients on random probes");
  gradcheck->add_option("--model", model, "Mixture file")->required();
  gradcheck->add_option("--probes", gc.probes, "Number of probes")->capture_default_str();
  gradcheck->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  gradcheck->add_option("--step", gc.step, "Finite-difference step")->capture_default_str();
  gradcheck->add_option("--manifest", manifest, "Manifest path");

  auto* train = app.add_subcommand("train", "Train the CNN from a run configuration");
  train->add_option("--config", config, "JSON run configuration")->required();
  train->add_option("--out", out, "Output directory (default: config file stem)");

  auto* report = app.add_subcommand("report", "Train/test gap curves and comparison table");
  report->add_option("--logs", logs, "Directory of run directories")->required();
  report->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (*extract) return cmd_extract(args, tarc, out, include, exclude);
    if (*analyze) return cmd_analyze(args, bank, k_analyze, seed, analyze_iters, out);
    if (*fit) return cmd_fit(args, bank, em, out);
    if (*score) return cmd_score(args, bank, model, manifest);
    if (*gradcheck) return cmd_gradcheck(args, model, gc, manifest);
    if (*train) return cmd_train(args, config, out);
    if (*report) return cmd_report(args, logs, out);
  } catch (const CommandFailed& f) {
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fpreg: %s\n", e.what());
    return kInputError;
  }
  return kInputError;
}

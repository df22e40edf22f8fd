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

// End-to-end operations behind the command-line tool: cluster analysis,
// gradient audits, configured training runs and run reports.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fpreg/data.hpp"
#include "fpreg/gmm.hpp"
#include "fpreg/nn.hpp"
#include "fpreg/stats.hpp"

namespace fpreg {

struct AnalysisSummary {
  std::size_t filters = 0;
  std::size_t k = 0;
  double distortion = 0.0;
  std::size_t iterations = 0;
  std::vector<std::size_t> histogram;
  ReportFiles files;
};

// k-means, cluster moments and the rendered report. kSize when N < K.
AnalysisSummary analyze(const FilterBank& bank, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters, const std::filesystem::path& out_dir);

struct GradcheckOptions {
  std::size_t probes = 100;
  std::uint64_t seed = 0;
  // Central-difference step, scaled per coordinate by min(1, min_k sd_kj).
  double step = 1e-5;
  double rel_tol = 1e-6;       // exact vs finite differences
  double dominance = 1e-12;    // probes with top responsibility > 1 - this
  double approx_abs_tol = 1e-9;
};

struct GradcheckResult {
  std::size_t probes = 0;
  // Relative error |a - f| / max(1, |a|, |f|), worst over all coordinates.
  double max_rel_error = 0.0;
  std::size_t worst_probe = 0;
  std::size_t worst_coord = 0;
  std::vector<double> worst_w;
  std::size_t dominance_probes = 0;
  double max_approx_abs_error = 0.0;
  std::size_t worst_dominance_probe = 0;
  bool single_component_identical = true;  // only meaningful for K == 1
  bool passed = false;
};

// Central finite difference of nll along each coordinate.
std::vector<double> finite_difference_grad(std::span<const double> w, const GaussianMixture& m,
                                           std::span<const double> steps);

GradcheckResult gradcheck(const GaussianMixture& model, const GradcheckOptions& options);

struct DataConfig {
  std::string kind = "synthetic";  // "synthetic" or "cifar10"
  std::filesystem::path dir;       // cifar10
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  SynthSpec synth;                 // synthetic
  std::size_t test_per_class = 0;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 2;
};

struct RunConfig {
  TrainConfig train;
  std::string layers;  // empty: reference architecture with the data's classes
  DataConfig data;
  std::filesystem::path model;  // donor mixture; required when lambda > 0
  std::filesystem::path init;   // optional TARC snapshot to start from
  std::string canonical;        // normalised JSON echo of every setting
};

inline constexpr const char* kRequiredRunKeys[] = {"batch_size", "iterations", "seed", "lambda", "data"};

// Parses the JSON run configuration. Relative paths resolve against
// base_dir. kConfig listing every missing required key.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir);
RunConfig read_run_config(const std::filesystem::path& path);

struct LoadedData {
  Dataset train;
  Dataset test;
};
LoadedData load_data(const DataConfig& cfg);

Architecture resolve_architecture(const RunConfig& cfg, const Dataset& data);

struct TrainRunSummary {
  std::vector<EvalRecord> log;
  std::vector<std::string> snapshots;
  std::size_t parameters = 0;
  std::size_t frozen_matched = 0;
};

// Trains per the configuration and writes train_log.csv (rewritten after
// every evaluation), snapshot_<iter>.tarc, final.tarc and run_config.json.
TrainRunSummary run_training(const RunConfig& cfg, const std::filesystem::path& out_dir,
                             const std::function<void(const EvalRecord&)>& on_eval = {});

std::vector<EvalRecord> parse_train_log_csv(std::string_view text);

struct ReportSummary {
  std::vector<std::string> runs;
  std::vector<std::string> gap_csv;
  std::string comparison_csv;
  std::string plot_svg;
  std::vector<std::size_t> aligned_iterations;
};

// Reads every immediate subdirectory of logs_dir holding a train_log.csv and
// writes per-run gap curves, a plot and a comparison table to out_dir.
ReportSummary build_report(const std::filesystem::path& logs_dir, const std::filesystem::path& out_dir);

// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace fpreg

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

#include "fpreg/fpreg.h"

#include <algorithm>
#include <functional>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include "fpreg/error.hpp"
#include "fpreg/gmm.hpp"
#include "fpreg/pipeline.hpp"
#include "fpreg/tensorio.hpp"

struct fpreg_archive {
  fpreg::TensorArchive archive;
};

struct fpreg_bank {
  fpreg::FilterBank bank;
  std::vector<std::pair<std::string, std::size_t>> groups;

  void regroup() {
    groups.clear();
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const auto& name = bank.meta(i).tensor;
      auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == name; });
      if (it == groups.end())
        groups.emplace_back(name, 1);
      else
        ++it->second;
    }
  }
};

struct fpreg_gmm {
  fpreg::GaussianMixture model;
};

struct fpreg_run_config {
  fpreg::RunConfig config;
};

namespace {

thread_local std::string g_last_error;

fpreg_status to_status(fpreg::ErrorKind kind) {
  using fpreg::ErrorKind;
  switch (kind) {
    case ErrorKind::kFormat: return FPREG_ERR_FORMAT;
    case ErrorKind::kTruncated: return FPREG_ERR_TRUNCATED;
    case ErrorKind::kValidation: return FPREG_ERR_VALIDATION;
    case ErrorKind::kInput: return FPREG_ERR_INPUT;
    case ErrorKind::kEmpty: return FPREG_ERR_EMPTY;
    case ErrorKind::kSize: return FPREG_ERR_SIZE;
    case ErrorKind::kConfig: return FPREG_ERR_CONFIG;
    case ErrorKind::kIo: return FPREG_ERR_IO;
    case ErrorKind::kNumeric: return FPREG_ERR_NUMERIC;
    case ErrorKind::kInvariant: return FPREG_ERR_INVARIANT;
  }
  return FPREG_ERR_INTERNAL;
}

// Runs f, translating exceptions into status codes at the C boundary.
template <typename F>
fpreg_status guard(F&& f) {
  try {
    g_last_error.clear();
    f();
    return FPREG_OK;
  } catch (const fpreg::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FPREG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FPREG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return FPREG_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) fpreg::fail(fpreg::ErrorKind::kInput, std::string(what) + " is NULL");
}

std::vector<std::string> strings(const char* const* v, std::size_t n) {
  std::vector<std::string> out;
  if (n) require(v, "glob list");
  for (std::size_t i = 0; i < n; ++i) {
    require(v[i], "glob");
    out.emplace_back(v[i]);
  }
  return out;
}

std::span<const double> vec(const fpreg_gmm* m, const double* w, std::size_t dim) {
  require(m, "model");
  require(w, "vector");
  if (dim != m->model.dim)
    fpreg::fail(fpreg::ErrorKind::kInput, "vector of dim " + std::to_string(dim) +
                                              " against a mixture of dim " + std::to_string(m->model.dim));
  return {w, dim};
}

}  // namespace

extern "C" {

const char* fpreg_version(void) { return FPREG_VERSION; }

const char* fpreg_status_string(fpreg_status status) {
  switch (status) {
    case FPREG_OK: return "ok";
    case FPREG_ERR_FORMAT: return "format error";
    case FPREG_ERR_TRUNCATED: return "truncation error";
    case FPREG_ERR_VALIDATION: return "validation error";
    case FPREG_ERR_INPUT: return "input error";
    case FPREG_ERR_EMPTY: return "empty result";
    case FPREG_ERR_SIZE: return "size constraint";
    case FPREG_ERR_CONFIG: return "configuration error";
    case FPREG_ERR_IO: return "i/o error";
    case FPREG_ERR_NUMERIC: return "numeric fault";
    case FPREG_ERR_INVARIANT: return "invariant violation";
    case FPREG_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* fpreg_last_error(void) { return g_last_error.c_str(); }

fpreg_status fpreg_archive_create(fpreg_archive** out) {
  return guard([&] {
    require(out, "out");
    *out = new fpreg_archive{};
  });
}

fpreg_status fpreg_archive_read(const char* path, fpreg_archive** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new fpreg_archive{fpreg::read_tarc(path)};
  });
}

fpreg_status fpreg_archive_write(const fpreg_archive* archive, const char* path) {
  return guard([&] {
    require(archive, "archive");
    require(path, "path");
    fpreg::write_tarc(archive->archive, path);
  });
}

fpreg_status fpreg_archive_add(fpreg_archive* archive, const char* name, const uint32_t* shape,
                               size_t rank, const float* data) {
  return guard([&] {
    require(archive, "archive");
    require(name, "name");
    if (rank) require(shape, "shape");
    fpreg::Tensor t;
    t.name = name;
    t.shape.assign(shape, shape + rank);
    const std::size_t n = fpreg::shape_numel(t.shape);
    if (n) require(data, "data");
    t.data.assign(data, data + n);
    archive->archive.add(std::move(t));
  });
}

size_t fpreg_archive_size(const fpreg_archive* archive) { return archive ? archive->archive.size() : 0; }

fpreg_status fpreg_archive_tensor(const fpreg_archive* archive, size_t index, const char** name,
                                  size_t* rank, const uint32_t** shape, const float** data) {
  return guard([&] {
    require(archive, "archive");
    if (index >= archive->archive.size()) fpreg::fail(fpreg::ErrorKind::kInput, "tensor index out of range");
    const auto& t = archive->archive.entries()[index];
    if (name) *name = t.name.c_str();
    if (rank) *rank = t.shape.size();
    if (shape) *shape = t.shape.data();
    if (data) *data = t.data.data();
  });
}

void fpreg_archive_free(fpreg_archive* archive) { delete archive; }

fpreg_status fpreg_bank_extract(const fpreg_archive* archive, const char* const* include,
                                size_t n_include, const char* const* exclude, size_t n_exclude,
                                fpreg_bank** out) {
  return guard([&] {
    require(archive, "archive");
    require(out, "out");
    fpreg::ExtractOptions opt{strings(include, n_include), strings(exclude, n_exclude)};
    auto* b = new fpreg_bank{fpreg::extract_filters(archive->archive, opt), {}};
    b->regroup();
    *out = b;
  });
}

fpreg_status fpreg_bank_create(size_t dim, fpreg_bank** out) {
  return guard([&] {
    require(out, "out");
    if (dim == 0) fpreg::fail(fpreg::ErrorKind::kInput, "bank dim must be positive");
    *out = new fpreg_bank{fpreg::FilterBank(dim), {}};
  });
}

fpreg_status fpreg_bank_append(fpreg_bank* bank, const float* values, const char* tensor,
                               uint32_t out_index, uint32_t in_index) {
  return guard([&] {
    require(bank, "bank");
    require(values, "values");
    bank->bank.append(std::span<const float>(values, bank->bank.dim()),
                      {tensor ? tensor : "", out_index, in_index});
    bank->regroup();
  });
}

fpreg_status fpreg_bank_read(const char* path, fpreg_bank** out, int* nonstandard_dim) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    bool odd = false;
    auto* b = new fpreg_bank{fpreg::read_fbank(path, &odd), {}};
    b->regroup();
    if (nonstandard_dim) *nonstandard_dim = odd ? 1 : 0;
    *out = b;
  });
}

fpreg_status fpreg_bank_write(const fpreg_bank* bank, const char* path) {
  return guard([&] {
    require(bank, "bank");
    require(path, "path");
    fpreg::write_fbank(bank->bank, path);
  });
}

size_t fpreg_bank_size(const fpreg_bank* bank) { return bank ? bank->bank.size() : 0; }
size_t fpreg_bank_dim(const fpreg_bank* bank) { return bank ? bank->bank.dim() : 0; }

fpreg_status fpreg_bank_row(const fpreg_bank* bank, size_t index, float* out) {
  return guard([&] {
    require(bank, "bank");
    require(out, "out");
    if (index >= bank->bank.size()) fpreg::fail(fpreg::ErrorKind::kInput, "row index out of range");
    const auto r = bank->bank.row(index);
    std::copy(r.begin(), r.end(), out);
  });
}

size_t fpreg_bank_group_count(const fpreg_bank* bank) { return bank ? bank->groups.size() : 0; }

fpreg_status fpreg_bank_group(const fpreg_bank* bank, size_t group, const char** tensor, size_t* count) {
  return guard([&] {
    require(bank, "bank");
    if (group >= bank->groups.size()) fpreg::fail(fpreg::ErrorKind::kInput, "group index out of range");
    if (tensor) *tensor = bank->groups[group].first.c_str();
    if (count) *count = bank->groups[group].second;
  });
}

void fpreg_bank_free(fpreg_bank* bank) { delete bank; }

void fpreg_em_options_default(fpreg_em_options* options) {
  if (!options) return;
  const fpreg::EmConfig d;
  *options = {d.components, d.max_iters, d.rel_tol, d.seed, d.variance_floor};
}

fpreg_status fpreg_gmm_fit(const fpreg_bank* bank, const fpreg_em_options* options,
                           fpreg_em_callback callback, void* user, fpreg_gmm** out,
                           fpreg_em_summary* summary) {
  return guard([&] {
    require(bank, "bank");
    require(options, "options");
    require(out, "out");
    if (bank->bank.size() < options->components)
      fpreg::fail(fpreg::ErrorKind::kSize, "EM needs N >= K (N=" + std::to_string(bank->bank.size()) +
                                               ", K=" + std::to_string(options->components) + ")");
    fpreg::EmConfig cfg;
    cfg.components = options->components;
    cfg.max_iters = options->max_iters;
    cfg.rel_tol = options->rel_tol;
    cfg.seed = options->seed;
    cfg.variance_floor = options->variance_floor;
    fpreg::EmObserver obs;
    if (callback)
      obs = [&](const fpreg::EmIteration& it) {
        callback(user, it.iteration, it.log_likelihood, it.reseeded ? 1 : 0, it.monotone ? 1 : 0);
      };
    auto result = fpreg::em_fit(bank->bank, cfg, obs);
    if (summary) {
      summary->iterations = result.trace.size();
      summary->converged = result.converged ? 1 : 0;
      summary->monotone = result.monotone() ? 1 : 0;
      summary->final_log_likelihood = result.trace.empty() ? 0.0 : result.trace.back().log_likelihood;
    }
    *out = new fpreg_gmm{std::move(result.model)};
  });
}

fpreg_status fpreg_gmm_create(size_t dim, size_t components, const double* weights,
                              const double* means, const double* variances, fpreg_gmm** out) {
  return guard([&] {
    require(weights, "weights");
    require(means, "means");
    require(variances, "variances");
    require(out, "out");
    fpreg::GaussianMixture m;
    m.dim = dim;
    m.weights.assign(weights, weights + components);
    m.means.assign(means, means + components * dim);
    m.variances.assign(variances, variances + components * dim);
    m.validate(1e-9, 0.0);
    *out = new fpreg_gmm{std::move(m)};
  });
}

fpreg_status fpreg_gmm_read(const char* path, fpreg_gmm** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new fpreg_gmm{fpreg::read_gmm(path)};
  });
}

fpreg_status fpreg_gmm_write(const fpreg_gmm* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    fpreg::write_gmm(model->model, path);
  });
}

size_t fpreg_gmm_dim(const fpreg_gmm* model) { return model ? model->model.dim : 0; }
size_t fpreg_gmm_components(const fpreg_gmm* model) { return model ? model->model.components() : 0; }

fpreg_status fpreg_gmm_get(const fpreg_gmm* model, double* weights, double* means, double* variances) {
  return guard([&] {
    require(model, "model");
    const auto& m = model->model;
    if (weights) std::copy(m.weights.begin(), m.weights.end(), weights);
    if (means) std::copy(m.means.begin(), m.means.end(), means);
    if (variances) std::copy(m.variances.begin(), m.variances.end(), variances);
  });
}

fpreg_status fpreg_gmm_logpdf(const fpreg_gmm* model, const double* w, size_t dim, double* out) {
  return guard([&] {
    require(out, "out");
    *out = fpreg::gmm_logpdf(vec(model, w, dim), model->model);
  });
}

fpreg_status fpreg_gmm_nll(const fpreg_gmm* model, const double* w, size_t dim, double* out) {
  return guard([&] {
    require(out, "out");
    *out = fpreg::nll(vec(model, w, dim), model->model);
  });
}

fpreg_status fpreg_gmm_grad(const fpreg_gmm* model, const double* w, size_t dim,
                            fpreg_gradient_mode mode, double* out) {
  return guard([&] {
    require(out, "out");
    const auto v = vec(model, w, dim);
    const auto g = mode == FPREG_GRAD_EXACT ? fpreg::grad_exact(v, model->model)
                                            : fpreg::grad_approx(v, model->model);
    std::copy(g.begin(), g.end(), out);
  });
}

fpreg_status fpreg_gmm_responsibilities(const fpreg_gmm* model, const double* w, size_t dim, double* out) {
  return guard([&] {
    require(out, "out");
    const auto g = fpreg::responsibilities(vec(model, w, dim), model->model);
    std::copy(g.begin(), g.end(), out);
  });
}

fpreg_status fpreg_gmm_select(const fpreg_gmm* model, const double* w, size_t dim, size_t* out) {
  return guard([&] {
    require(out, "out");
    *out = fpreg::select_component(vec(model, w, dim), model->model);
  });
}

fpreg_status fpreg_gmm_score_bank(const fpreg_gmm* model, const fpreg_bank* bank, double* total,
                                  double* mean) {
  return guard([&] {
    require(model, "model");
    require(bank, "bank");
    if (bank->bank.dim() != model->model.dim)
      fpreg::fail(fpreg::ErrorKind::kInput, "bank dim " + std::to_string(bank->bank.dim()) +
                                                " does not match model dim " + std::to_string(model->model.dim));
    const double t = fpreg::nll_total(bank->bank, model->model);
    if (total) *total = t;
    if (mean) *mean = bank->bank.empty() ? 0.0 : t / static_cast<double>(bank->bank.size());
  });
}

void fpreg_gmm_free(fpreg_gmm* model) { delete model; }

void fpreg_gradcheck_options_default(fpreg_gradcheck_options* options) {
  if (!options) return;
  const fpreg::GradcheckOptions d;
  *options = {d.probes, d.seed, d.step, d.rel_tol, d.approx_abs_tol};
}

fpreg_status fpreg_gradcheck(const fpreg_gmm* model, const fpreg_gradcheck_options* options,
                             fpreg_gradcheck_result* result) {
  return guard([&] {
    require(model, "model");
    require(options, "options");
    require(result, "result");
    fpreg::GradcheckOptions opt;
    opt.probes = options->probes;
    opt.seed = options->seed;
    opt.step = options->step;
    opt.rel_tol = options->rel_tol;
    opt.approx_abs_tol = options->approx_abs_tol;
    const auto r = fpreg::gradcheck(model->model, opt);
    *result = {r.probes,           r.max_rel_error,         r.worst_probe,
               r.worst_coord,      r.dominance_probes,      r.max_approx_abs_error,
               r.worst_dominance_probe, r.single_component_identical ? 1 : 0, r.passed ? 1 : 0};
  });
}

fpreg_status fpreg_analyze(const fpreg_bank* bank, size_t k, uint64_t seed, size_t max_iters,
                           const char* out_dir, fpreg_analysis_summary* summary) {
  return guard([&] {
    require(bank, "bank");
    require(out_dir, "out_dir");
    const auto s = fpreg::analyze(bank->bank, k, seed, max_iters, out_dir);
    if (summary) {
      std::size_t total = 0;
      for (auto h : s.histogram) total += h;
      *summary = {s.filters, s.k, s.iterations, s.distortion, s.files.mean_pgm.size(),
                  s.files.covariance_csv.size(), total};
    }
  });
}

fpreg_status fpreg_run_config_read(const char* path, fpreg_run_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new fpreg_run_config{fpreg::read_run_config(path)};
  });
}

const char* fpreg_run_config_canonical(const fpreg_run_config* config) {
  return config ? config->config.canonical.c_str() : "";
}

void fpreg_run_config_free(fpreg_run_config* config) { delete config; }

fpreg_status fpreg_train(const fpreg_run_config* config, const char* out_dir, fpreg_eval_callback callback,
                         void* user, fpreg_train_summary* summary) {
  return guard([&] {
    require(config, "config");
    require(out_dir, "out_dir");
    std::function<void(const fpreg::EvalRecord&)> on_eval;
    if (callback)
      on_eval = [&](const fpreg::EvalRecord& r) {
        callback(user, r.iteration, r.train_loss, r.test_loss, r.test_accuracy);
      };
    const auto s = fpreg::run_training(config->config, out_dir, on_eval);
    if (summary) {
      const auto& last = s.log.back();
      *summary = {s.log.size(),    s.snapshots.size(), s.parameters,        s.frozen_matched,
                  last.train_loss, last.test_loss,     last.test_accuracy};
    }
  });
}

fpreg_status fpreg_report(const char* logs_dir, const char* out_dir, fpreg_report_summary* summary) {
  return guard([&] {
    require(logs_dir, "logs_dir");
    require(out_dir, "out_dir");
    const auto s = fpreg::build_report(logs_dir, out_dir);
    if (summary) *summary = {s.runs.size(), s.aligned_iterations.size()};
  });
}

fpreg_status fpreg_sha256_file(const char* path, char out_hex[65]) {
  return guard([&] {
    require(path, "path");
    require(out_hex, "out_hex");
    const auto h = fpreg::sha256_file(path);
    std::copy(h.begin(), h.end(), out_hex);
    out_hex[h.size()] = '\0';
  });
}

}  // extern "C"

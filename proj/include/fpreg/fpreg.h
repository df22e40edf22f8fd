/*
 * Copyright 2026 The fpreg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface to the fpreg library: filter banks extracted from tensor
 * archives, diagonal Gaussian mixtures fitted to them, the mixture
 * regulariser and its gradients, and the small CNN training harness.
 *
 * Objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every fallible call returns an fpreg_status;
 * on failure fpreg_last_error() describes the problem (per thread, valid
 * until the next call on that thread). Borrowed pointers returned by
 * accessors live as long as the handle they came from.
 */

#ifndef FPREG_FPREG_H_
#define FPREG_FPREG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(FPREG_BUILDING_LIBRARY)
#define FPREG_API __declspec(dllexport)
#else
#define FPREG_API __declspec(dllimport)
#endif
#else
#define FPREG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fpreg_status {
  FPREG_OK = 0,
  FPREG_ERR_FORMAT = 1,     /* bad magic, version or syntax */
  FPREG_ERR_TRUNCATED = 2,  /* payload ends early */
  FPREG_ERR_VALIDATION = 3, /* well-formed data violating an invariant */
  FPREG_ERR_INPUT = 4,      /* bad argument, dimension mismatch */
  FPREG_ERR_EMPTY = 5,      /* nothing to work on, e.g. no 3x3 filters */
  FPREG_ERR_SIZE = 6,       /* size constraint such as N < K */
  FPREG_ERR_CONFIG = 7,     /* incomplete or inconsistent configuration */
  FPREG_ERR_IO = 8,
  FPREG_ERR_NUMERIC = 9,    /* non-finite values or divergence */
  FPREG_ERR_INVARIANT = 10, /* internal invariant violated at runtime */
  FPREG_ERR_INTERNAL = 11
} fpreg_status;

FPREG_API const char* fpreg_version(void);
FPREG_API const char* fpreg_status_string(fpreg_status status);
FPREG_API const char* fpreg_last_error(void);

typedef struct fpreg_archive fpreg_archive;
typedef struct fpreg_bank fpreg_bank;
typedef struct fpreg_gmm fpreg_gmm;
typedef struct fpreg_run_config fpreg_run_config;

/* ---- Tensor archives (TARC) ---------------------------------------------- */

FPREG_API fpreg_status fpreg_archive_create(fpreg_archive** out);
FPREG_API fpreg_status fpreg_archive_read(const char* path, fpreg_archive** out);
FPREG_API fpreg_status fpreg_archive_write(const fpreg_archive* archive, const char* path);
/* Copies rank dims and prod(shape) floats. Names must be unique. */
FPREG_API fpreg_status fpreg_archive_add(fpreg_archive* archive, const char* name,
                                         const uint32_t* shape, size_t rank, const float* data);
FPREG_API size_t fpreg_archive_size(const fpreg_archive* archive);
FPREG_API fpreg_status fpreg_archive_tensor(const fpreg_archive* archive, size_t index,
                                            const char** name, size_t* rank,
                                            const uint32_t** shape, const float** data);
FPREG_API void fpreg_archive_free(fpreg_archive* archive);

/* ---- Filter banks (FBNK + metadata sidecar) ------------------------------ */

/* Every 3x3 slice of the selected tensors. Globs may be NULL when their
 * count is 0; an empty include list selects every tensor. */
FPREG_API fpreg_status fpreg_bank_extract(const fpreg_archive* archive,
                                          const char* const* include, size_t n_include,
                                          const char* const* exclude, size_t n_exclude,
                                          fpreg_bank** out);
FPREG_API fpreg_status fpreg_bank_create(size_t dim, fpreg_bank** out);
FPREG_API fpreg_status fpreg_bank_append(fpreg_bank* bank, const float* values,
                                         const char* tensor, uint32_t out_index,
                                         uint32_t in_index);
/* nonstandard_dim (may be NULL) is set to 1 when the bank is not 9-dim. */
FPREG_API fpreg_status fpreg_bank_read(const char* path, fpreg_bank** out, int* nonstandard_dim);
FPREG_API fpreg_status fpreg_bank_write(const fpreg_bank* bank, const char* path);
FPREG_API size_t fpreg_bank_size(const fpreg_bank* bank);
FPREG_API size_t fpreg_bank_dim(const fpreg_bank* bank);
FPREG_API fpreg_status fpreg_bank_row(const fpreg_bank* bank, size_t index, float* out);
/* Filters grouped by source tensor, in order of first appearance. */
FPREG_API size_t fpreg_bank_group_count(const fpreg_bank* bank);
FPREG_API fpreg_status fpreg_bank_group(const fpreg_bank* bank, size_t group,
                                        const char** tensor, size_t* count);
FPREG_API void fpreg_bank_free(fpreg_bank* bank);

/* ---- Gaussian mixtures --------------------------------------------------- */

typedef struct fpreg_em_options {
  size_t components;
  size_t max_iters;
  double rel_tol;
  uint64_t seed;
  double variance_floor;
} fpreg_em_options;

typedef struct fpreg_em_summary {
  size_t iterations;
  int converged;
  int monotone; /* 0 if the log-likelihood dropped outside a re-seed step */
  double final_log_likelihood;
} fpreg_em_summary;

typedef void (*fpreg_em_callback)(void* user, size_t iteration, double log_likelihood,
                                  int reseeded, int monotone);

typedef enum fpreg_gradient_mode {
  FPREG_GRAD_APPROXIMATE = 0,
  FPREG_GRAD_EXACT = 1
} fpreg_gradient_mode;

FPREG_API void fpreg_em_options_default(fpreg_em_options* options);
FPREG_API fpreg_status fpreg_gmm_fit(const fpreg_bank* bank, const fpreg_em_options* options,
                                     fpreg_em_callback callback, void* user, fpreg_gmm** out,
                                     fpreg_em_summary* summary);
FPREG_API fpreg_status fpreg_gmm_create(size_t dim, size_t components, const double* weights,
                                        const double* means, const double* variances,
                                        fpreg_gmm** out);
FPREG_API fpreg_status fpreg_gmm_read(const char* path, fpreg_gmm** out);
FPREG_API fpreg_status fpreg_gmm_write(const fpreg_gmm* model, const char* path);
FPREG_API size_t fpreg_gmm_dim(const fpreg_gmm* model);
FPREG_API size_t fpreg_gmm_components(const fpreg_gmm* model);
/* Copies parameters out; any destination may be NULL. */
FPREG_API fpreg_status fpreg_gmm_get(const fpreg_gmm* model, double* weights, double* means,
                                     double* variances);
FPREG_API fpreg_status fpreg_gmm_logpdf(const fpreg_gmm* model, const double* w, size_t dim,
                                        double* out);
FPREG_API fpreg_status fpreg_gmm_nll(const fpreg_gmm* model, const double* w, size_t dim,
                                     double* out);
FPREG_API fpreg_status fpreg_gmm_grad(const fpreg_gmm* model, const double* w, size_t dim,
                                      fpreg_gradient_mode mode, double* out);
/* out receives fpreg_gmm_components(model) values. */
FPREG_API fpreg_status fpreg_gmm_responsibilities(const fpreg_gmm* model, const double* w,
                                                  size_t dim, double* out);
FPREG_API fpreg_status fpreg_gmm_select(const fpreg_gmm* model, const double* w, size_t dim,
                                        size_t* out);
FPREG_API fpreg_status fpreg_gmm_score_bank(const fpreg_gmm* model, const fpreg_bank* bank,
                                            double* total, double* mean);
FPREG_API void fpreg_gmm_free(fpreg_gmm* model);

/* ---- Gradient audit ------------------------------------------------------ */

typedef struct fpreg_gradcheck_options {
  size_t probes;
  uint64_t seed;
  double step;           /* central-difference step before per-coordinate scaling */
  double rel_tol;        /* exact gradient vs finite differences */
  double approx_abs_tol; /* single-component gradient vs exact, dominant probes */
} fpreg_gradcheck_options;

typedef struct fpreg_gradcheck_result {
  size_t probes;
  double max_rel_error;
  size_t worst_probe;
  size_t worst_coord;
  size_t dominance_probes;
  double max_approx_abs_error;
  size_t worst_dominance_probe;
  int single_component_identical;
  int passed;
} fpreg_gradcheck_result;

FPREG_API void fpreg_gradcheck_options_default(fpreg_gradcheck_options* options);
FPREG_API fpreg_status fpreg_gradcheck(const fpreg_gmm* model, const fpreg_gradcheck_options* options,
                                       fpreg_gradcheck_result* result);

/* ---- Cluster analysis ---------------------------------------------------- */

typedef struct fpreg_analysis_summary {
  size_t filters;
  size_t k;
  size_t iterations;
  double distortion;
  size_t mean_grids;       /* PGM renderings written */
  size_t covariance_files; /* covariance CSVs written */
  size_t histogram_total;  /* sum of the histogram, equals filters */
} fpreg_analysis_summary;

FPREG_API fpreg_status fpreg_analyze(const fpreg_bank* bank, size_t k, uint64_t seed,
                                     size_t max_iters, const char* out_dir,
                                     fpreg_analysis_summary* summary);

/* ---- Training ------------------------------------------------------------ */

typedef struct fpreg_train_summary {
  size_t evaluations;
  size_t snapshots;
  size_t parameters;
  size_t frozen_matched;
  double final_train_loss;
  double final_test_loss;
  double final_test_accuracy;
} fpreg_train_summary;

typedef void (*fpreg_eval_callback)(void* user, size_t iteration, double train_loss,
                                    double test_loss, double test_accuracy);

/* JSON run configuration; FPREG_ERR_CONFIG names every missing key. */
FPREG_API fpreg_status fpreg_run_config_read(const char* path, fpreg_run_config** out);
/* Normalised JSON echo of all settings, including defaults. */
FPREG_API const char* fpreg_run_config_canonical(const fpreg_run_config* config);
FPREG_API void fpreg_run_config_free(fpreg_run_config* config);
FPREG_API fpreg_status fpreg_train(const fpreg_run_config* config, const char* out_dir,
                                   fpreg_eval_callback callback, void* user,
                                   fpreg_train_summary* summary);

typedef struct fpreg_report_summary {
  size_t runs;
  size_t aligned_iterations;
} fpreg_report_summary;

FPREG_API fpreg_status fpreg_report(const char* logs_dir, const char* out_dir,
                                    fpreg_report_summary* summary);

/* ---- Misc ---------------------------------------------------------------- */

/* Writes 64 lower-case hex digits and a terminating NUL. */
FPREG_API fpreg_status fpreg_sha256_file(const char* path, char out_hex[65]);

#ifdef __cplusplus
}
#endif

#endif /* FPREG_FPREG_H_ */

/* Copyright 2026 The dmrom Authors.
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the dmrom library. Matrices are passed as row-major double
 * arrays. Every call returns a dmrom_status; on failure dmrom_last_error()
 * describes the problem until the next call on the same thread.
 */
#ifndef DMROM_DMROM_H
#define DMROM_DMROM_H

#include <stddef.h>
#include <stdint.h>

#if defined(DMROM_BUILDING_LIBRARY)
#define DMROM_API __attribute__((visibility("default")))
#else
#define DMROM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dmrom_status {
  DMROM_OK = 0,
  DMROM_ERR_RUNTIME = 1,
  DMROM_ERR_VALIDATION = 2
} dmrom_status;

typedef enum dmrom_command {
  DMROM_CMD_SYNTH = 0,
  DMROM_CMD_GLM,
  DMROM_CMD_EMBED,
  DMROM_CMD_TRAIN_FNN,
  DMROM_CMD_TRAIN_KOOPMAN,
  DMROM_CMD_TRAIN_ALL,
  DMROM_CMD_FORECAST,
  DMROM_CMD_EVALUATE,
  DMROM_CMD_RUN_ALL
} dmrom_command;

typedef void (*dmrom_message_fn)(const char* message, void* user);

DMROM_API const char* dmrom_version(void);
DMROM_API const char* dmrom_last_error(void);

/* Routes library warnings to fn; NULL restores the default (stderr). */
DMROM_API void dmrom_set_warning_handler(dmrom_message_fn fn, void* user);

/* Run configuration */
typedef struct dmrom_config dmrom_config;

DMROM_API dmrom_status dmrom_config_load(const char* path, dmrom_config** out);
/* Relative paths in json_text resolve against base_dir (may be NULL). */
DMROM_API dmrom_status dmrom_config_parse(const char* json_text, const char* base_dir,
                                          dmrom_config** out);
DMROM_API dmrom_status dmrom_config_set_seed(dmrom_config* cfg, uint64_t seed);
DMROM_API dmrom_status dmrom_config_set_output_dir(dmrom_config* cfg, const char* dir);
/* Writes 16 hex digits and a terminating NUL. */
DMROM_API dmrom_status dmrom_config_hash(const dmrom_config* cfg, char out[17]);
DMROM_API void dmrom_config_free(dmrom_config* cfg);

/* Progress lines go to log (may be NULL). */
DMROM_API dmrom_status dmrom_run_command(const dmrom_config* cfg, dmrom_command cmd,
                                         dmrom_message_fn log, void* user);

/* Diffusion-maps embedding */
typedef struct dmrom_embedding dmrom_embedding;

/* sigma <= 0 selects the median heuristic. */
DMROM_API dmrom_status dmrom_embedding_compute(const double* x, size_t n, size_t m, double sigma,
                                               double alpha, size_t k, dmrom_embedding** out);
DMROM_API dmrom_status dmrom_embedding_shape(const dmrom_embedding* e, size_t* n, size_t* k);
DMROM_API dmrom_status dmrom_embedding_sigma(const dmrom_embedding* e, double* sigma);
/* k + 1 values, descending. */
DMROM_API dmrom_status dmrom_embedding_eigenvalues(const dmrom_embedding* e, double* out);
/* n x (k + 1). */
DMROM_API dmrom_status dmrom_embedding_eigenvectors(const dmrom_embedding* e, double* out);
/* Extends eigenvectors indices[0..d) (1-based) to n_new points; out is n_new x d. */
DMROM_API dmrom_status dmrom_nystrom(const dmrom_embedding* e, const double* x_train, size_t m,
                                     const double* x_new, size_t n_new, const size_t* indices,
                                     size_t d, double* out);
DMROM_API void dmrom_embedding_free(dmrom_embedding* e);

/* er for each column of psi (n x k); er[0] is 1 by definition. */
DMROM_API dmrom_status dmrom_parsimony_errors(const double* psi, size_t n, size_t k,
                                              double scale_fraction, double* er);

/* Koopman / EDMD */
typedef struct dmrom_koopman dmrom_koopman;

DMROM_API dmrom_status dmrom_koopman_fit(const double* coords, size_t n, size_t d,
                                         const double* x_train, size_t m, double svd_tol,
                                         dmrom_koopman** out);
DMROM_API dmrom_status dmrom_koopman_shape(const dmrom_koopman* k, size_t* d, size_t* m);
/* d x d. */
DMROM_API dmrom_status dmrom_koopman_operator(const dmrom_koopman* k, double* out);
DMROM_API dmrom_status dmrom_koopman_eigenvalues(const dmrom_koopman* k, double* re, double* im);
/* reduced is h x d, ambient h x m; either may be NULL. */
DMROM_API dmrom_status dmrom_koopman_forecast(const dmrom_koopman* k, const double* init, size_t h,
                                              double* reduced, double* ambient);
DMROM_API void dmrom_koopman_free(dmrom_koopman* k);

/* Geometric Harmonics lift */
typedef struct dmrom_gh dmrom_gh;

/* sigma <= 0 selects the median heuristic. */
DMROM_API dmrom_status dmrom_gh_fit(const double* y, size_t n, size_t d, const double* x, size_t m,
                                    double sigma, double eig_floor, dmrom_gh** out);
DMROM_API dmrom_status dmrom_gh_lift(const dmrom_gh* g, const double* y_new, size_t n_new,
                                     double* out);
DMROM_API void dmrom_gh_free(dmrom_gh* g);

#ifdef __cplusplus
}
#endif

#endif

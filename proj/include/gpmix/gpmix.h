#ifndef GPMIX_H
#define GPMIX_H

/* C interface to the gpmix library. Every function returns a gpmix_status;
 * on failure gpmix_last_error() describes the problem for the calling thread.
 * Handles are opaque and released with the matching _free function. Strings
 * returned through char ** are released with gpmix_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GPMIX_BUILDING)
#    define GPMIX_API __declspec(dllexport)
#  else
#    define GPMIX_API __declspec(dllimport)
#  endif
#else
#  define GPMIX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  GPMIX_OK = 0,
  GPMIX_ERR_ARGUMENT = 1,   /* null handle or out-of-range option */
  GPMIX_ERR_VALIDATION = 2, /* malformed input data or infeasible request */
  GPMIX_ERR_NUMERICAL = 3,  /* numerical failure, e.g. loss of positive definiteness */
  GPMIX_ERR_IO = 4,
  GPMIX_ERR_INTERNAL = 5
} gpmix_status;

typedef enum { GPMIX_SAMPLER_HMC = 0, GPMIX_SAMPLER_MH = 1, GPMIX_SAMPLER_EB = 2 } gpmix_sampler;
typedef enum { GPMIX_MODE_SAMPLED = 0, GPMIX_MODE_MARGINALISED = 1 } gpmix_mode;

GPMIX_API const char *gpmix_version(void);
GPMIX_API const char *gpmix_last_error(void);
GPMIX_API void gpmix_string_free(char *s);

/* datasets */

typedef struct gpmix_dataset gpmix_dataset;

GPMIX_API int gpmix_dataset_load(const char *path, int center, gpmix_dataset **out);
GPMIX_API int gpmix_dataset_save(const gpmix_dataset *ds, const char *path);
/* id,component,outlier; simulated datasets only */
GPMIX_API int gpmix_dataset_save_truth(const gpmix_dataset *ds, const char *path);
GPMIX_API int gpmix_dataset_shape(const gpmix_dataset *ds, size_t *proteins, size_t *fractions,
                                  size_t *niches);
/* Row-major N x D copy into out, which must hold proteins * fractions doubles. */
GPMIX_API int gpmix_dataset_profiles(const gpmix_dataset *ds, double *out);
GPMIX_API void gpmix_dataset_free(gpmix_dataset *ds);

typedef struct {
  int components;
  int fractions;
  int per_component;
  double theta[3]; /* shared by every component */
  double eps;
  double marker_fraction;
  uint64_t seed;
  double outlier_scale;
  int low_noise_markers;
} gpmix_sim_options;

GPMIX_API void gpmix_sim_options_default(gpmix_sim_options *opts);
GPMIX_API int gpmix_simulate(const gpmix_sim_options *opts, gpmix_dataset **out);

/* fitting */

typedef struct {
  int iterations;
  int burnin;
  int thin;
  int hyper_every;
  int sampler; /* gpmix_sampler */
  int mode;    /* gpmix_mode */
  int chains;
  uint64_t seed;
  int outlier_component;
  int semi_supervised_hypers;
  double prior_mean[3];
  double prior_sd[3];
  double mh_proposal_sd;
  int leapfrog_steps;
  double step_min;
  double step_max;
  double refresh;
} gpmix_run_options;

GPMIX_API void gpmix_run_options_default(gpmix_run_options *opts);

typedef struct gpmix_fit gpmix_fit;

GPMIX_API int gpmix_fit_run(const gpmix_dataset *ds, const gpmix_run_options *opts,
                            gpmix_fit **out);
/* Row-major N x (K + 1) posterior allocation; the last column is the outlier. */
GPMIX_API int gpmix_fit_allocation(const gpmix_fit *fit, double *out);
GPMIX_API int gpmix_fit_entropy(const gpmix_fit *fit, double *out);
GPMIX_API int gpmix_fit_summary_json(const gpmix_fit *fit, char **json);
/* allocations.csv, summary.json, pca.csv, traces.csv, timing.json */
GPMIX_API int gpmix_fit_write(const gpmix_fit *fit, const char *dir);
GPMIX_API void gpmix_fit_free(gpmix_fit *fit);

/* cross-validation */

typedef struct {
  int splits;
  uint64_t seed;
  double test_fraction;
  int permutation_control;
  int threads; /* 0 = hardware concurrency */
} gpmix_cv_options;

GPMIX_API void gpmix_cv_options_default(gpmix_cv_options *opts);
/* losses, when not null, receives opts->splits values. */
GPMIX_API int gpmix_cross_validate(const gpmix_dataset *ds, const gpmix_run_options *run,
                                   const gpmix_cv_options *opts, double *losses, char **json,
                                   double *seconds);

/* benchmarks: suite is "linalg" or "sampler" */

typedef struct {
  uint64_t seed;
  int repeats;    /* linalg */
  int max_dim;    /* linalg, largest D in the doubling grid from 16 */
  int iterations; /* sampler */
  int burnin;     /* sampler */
} gpmix_bench_options;

GPMIX_API void gpmix_bench_options_default(gpmix_bench_options *opts);
GPMIX_API int gpmix_bench(const char *suite, const gpmix_bench_options *opts, char **json);

/* R-hat and ESS for every column of a traces.csv */
GPMIX_API int gpmix_diagnose(const char *traces_path, char **json);

/* low-level helpers */

GPMIX_API int gpmix_quadratic_loss(const double *pred, size_t k, int truth, double *out);
/* log det of sigma2 I + J_n (x) A, A symmetric Toeplitz with first row a_row */
GPMIX_API int gpmix_structured_logdet(const double *a_row, size_t d, double sigma2, int n,
                                      double *out);
/* chains: m traces of length len, stored back to back */
GPMIX_API int gpmix_gelman_rubin(const double *chains, size_t m, size_t len, double *rhat,
                                 double *upper95);
GPMIX_API int gpmix_ess(const double *trace, size_t len, double *out);

#ifdef __cplusplus
}
#endif

#endif

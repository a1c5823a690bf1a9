/* C interface to the sparse domination toolkit. Every function returns an
 * sd_status; on failure sd_last_error() describes the problem (per thread).
 * Objects are opaque and owned by the caller, who releases them with the
 * matching *_destroy function. Strings returned through char** are released
 * with sd_string_free. */
#ifndef SPARSEDOM_H
#define SPARSEDOM_H

#include <stddef.h>
#include <stdint.h>

#if defined(SPARSEDOM_BUILDING)
#define SD_API __attribute__((visibility("default")))
#else
#define SD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sd_status {
  SD_OK = 0,
  SD_ERR_INVALID_ARGUMENT = 1,
  SD_ERR_DOMAIN = 2,
  SD_ERR_IO = 3,
  SD_ERR_PARSE = 4,
  SD_ERR_PRECONDITION = 5,
  SD_ERR_INTERNAL = 6,
  /* The computation finished but one of its checks failed. */
  SD_ERR_ASSERTION = 7
} sd_status;

typedef struct sd_geometry sd_geometry;
typedef struct sd_gridfn sd_gridfn;
typedef struct sd_report sd_report;
typedef struct sd_run sd_run;

SD_API const char* sd_last_error(void);
SD_API const char* sd_version(void);
SD_API void sd_string_free(char* s);

/* Root cube [origin, origin + side)^n split into 2^L cells per axis.
 * origin may be NULL (all zeros). */
SD_API sd_status sd_geometry_create(int n, int L, double side, const double* origin, sd_geometry** out);
SD_API void sd_geometry_destroy(sd_geometry* g);
SD_API sd_status sd_geometry_leaf_count(const sd_geometry* g, uint64_t* out);

/* values: 2^(nL) doubles in row-major order (axis 0 slowest). */
SD_API sd_status sd_gridfn_create(const sd_geometry* g, const double* values, size_t count, sd_gridfn** out);
SD_API sd_status sd_gridfn_load(const char* path, sd_gridfn** out);
SD_API sd_status sd_gridfn_save(const sd_gridfn* f, const char* path, int binary);
SD_API void sd_gridfn_destroy(sd_gridfn* f);
/* Borrowed pointer, valid until f is destroyed. */
SD_API sd_status sd_gridfn_values(const sd_gridfn* f, const double** values, size_t* count);
/* <|f|^p>_Q^(1/p) for the cube with address "k:i1,...,in". */
SD_API sd_status sd_gridfn_p_average(const sd_gridfn* f, const char* cube, double p, double* out);
/* Nonincreasing rearrangement of f over the root at t >= 0. */
SD_API sd_status sd_gridfn_rearrangement(const sd_gridfn* f, double t, double* out);

/* Writes one generated input file. spec_json is an input section of the
 * experiment config with an additional "type": grid | measure | halfspace | weight. */
SD_API sd_status sd_generate_inputs(const sd_geometry* g, const char* spec_json, uint64_t seed, const char* path);

/* Runs the pointwise construction on the whole root for the family given as a
 * family section of the experiment config; f is its input. Returns
 * SD_ERR_ASSERTION (with *out still set) when a check fails. */
SD_API sd_status sd_build_sparse(const sd_gridfn* f, const char* family_json, double eta, double r,
                                 sd_report** out);
SD_API sd_status sd_report_json(const sd_report* report, char** out);
SD_API sd_status sd_report_family_json(const sd_report* report, char** out);
SD_API sd_status sd_report_empirical_constant(const sd_report* report, double* out);
SD_API int sd_report_passed(const sd_report* report);
SD_API void sd_report_destroy(sd_report* report);

/* Runs a subcommand on a JSON config. When out_dir is not NULL the report,
 * curves and timing are written there. Returns SD_ERR_ASSERTION (with *out
 * set) when the run completed but some check failed. */
SD_API sd_status sd_run_experiment(const char* subcommand, const char* config_json, const char* out_dir,
                                   sd_run** out);
SD_API int sd_run_passed(const sd_run* run);
/* Borrowed string, valid until the run is destroyed. */
SD_API sd_status sd_run_report_json(const sd_run* run, const char** out);
SD_API void sd_run_destroy(sd_run* run);

#ifdef __cplusplus
}
#endif

#endif

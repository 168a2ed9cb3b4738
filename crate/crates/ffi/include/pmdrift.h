#ifndef PMDRIFT_H
#define PMDRIFT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bits of `PmdVerdict::theorems`.
 */
#define PMD_PME_ADMISSIBLE 1

#define PMD_FDE_ADMISSIBLE (1 << 1)

#define PMD_DIVFREE_PME_ADMISSIBLE (1 << 2)

#define PMD_DIVFREE_FDE_ADMISSIBLE (1 << 3)

#define PMD_COMPACTNESS_ADMISSIBLE (1 << 4)

typedef enum PmdStatus {
  PMD_STATUS_OK = 0,
  PMD_STATUS_NULL_POINTER = 1,
  PMD_STATUS_INVALID_ARGUMENT = 2,
  PMD_STATUS_CONFIG = 3,
  PMD_STATUS_SOLVER = 4,
  PMD_STATUS_BUFFER_TOO_SMALL = 5,
  PMD_STATUS_PANIC = 6,
} PmdStatus;

typedef enum PmdLevel {
  PMD_LEVEL_ON_LINE = 0,
  PMD_LEVEL_SUBCLASS = 1,
  PMD_LEVEL_SUPERCRITICAL = 2,
  PMD_LEVEL_NOT_APPLICABLE = 3,
} PmdLevel;

/**
 * One scenario solved on one grid, with its estimate reports.
 */
typedef struct PmdRun PmdRun;

/**
 * A parsed, validated scenario suite.
 */
typedef struct PmdSuite PmdSuite;

typedef struct PmdVerdict {
  double scaling_sum;
  enum PmdLevel plain;
  enum PmdLevel sigma;
  uint32_t theorems;
  bool near_boundary;
} PmdVerdict;

typedef struct PmdRunSummary {
  size_t cells;
  size_t steps;
  double data_mass;
  double sup_mass;
  double budget_residual;
  double runtime_s;
  size_t literal_failures;
} PmdRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *pmd_version(void);

/**
 * Copies the calling thread's last error message, NUL included; `needed`
 * receives its size in bytes.
 */
enum PmdStatus pmd_last_error(char *buf, size_t cap, size_t *needed);

/**
 * Classifies the reciprocal exponent pair `(1/q1, 1/q2)` for diffusion
 * exponent `m` in dimension `d`.
 */
enum PmdStatus pmd_classify(double m,
                            size_t d,
                            double inv_q1,
                            double inv_q2,
                            bool divergence_free,
                            struct PmdVerdict *out);

/**
 * Parses a suite from TOML text.
 */
enum PmdStatus pmd_suite_parse(const char *text, struct PmdSuite **out);

/**
 * Loads a suite from a TOML file.
 */
enum PmdStatus pmd_suite_load(const char *path, struct PmdSuite **out);

enum PmdStatus pmd_suite_count(const struct PmdSuite *suite, size_t *out);

void pmd_suite_free(struct PmdSuite *suite);

/**
 * Solves scenario `id` (the first one when null) with `n` cells per side
 * (the scenario's finest grid when 0) and evaluates its estimates.
 */
enum PmdStatus pmd_run_grid(const struct PmdSuite *suite,
                            const char *id,
                            size_t n,
                            struct PmdRun **out);

enum PmdStatus pmd_run_summary(const struct PmdRun *run, struct PmdRunSummary *out);

/**
 * Density at the final time, one value per cell in row-major order.
 */
enum PmdStatus pmd_run_final_density(const struct PmdRun *run,
                                     double *buf,
                                     size_t cap,
                                     size_t *needed);

/**
 * Estimate reports as a JSON array, NUL included.
 */
enum PmdStatus pmd_run_reports_json(const struct PmdRun *run,
                                    char *buf,
                                    size_t cap,
                                    size_t *needed);

void pmd_run_free(struct PmdRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PMDRIFT_H */

#ifndef TIMESYM_H
#define TIMESYM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_PARSE = 1,
  TS_STATUS_NOT_PHYSICAL = 2,
  TS_STATUS_DIRECTION_MISMATCH = 3,
  TS_STATUS_NUMERIC = 4,
  TS_STATUS_INVALID_ARGUMENT = 5,
  TS_STATUS_NOT_FOUND = 6,
  TS_STATUS_PANIC = 7,
} TsStatus;

typedef enum TsDirection {
  TS_DIRECTION_FORWARD = 0,
  TS_DIRECTION_BACKWARD = 1,
  /**
   * Both foliations; fails with `DirectionMismatch` if they disagree.
   */
  TS_DIRECTION_BOTH = 2,
} TsDirection;

/**
 * A parsed circuit file.
 */
typedef struct TsFile TsFile;

/**
 * Joint distribution of a circuit, outcomes on rows and incomes on columns.
 */
typedef struct TsJoint TsJoint;

typedef struct TsCheckReport {
  bool t_positive;
  double min_eig;
  double fwd_residual;
  double bwd_residual;
  bool physical;
} TsCheckReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *ts_version(void);

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ts_last_error(void);

/**
 * Parses circuit-file text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_file_parse(const char *text, struct TsFile **out);

/**
 * # Safety
 * `f` must come from this library and not be freed twice. Null is ignored.
 */
void ts_file_free(struct TsFile *f);

/**
 * Time-reversed copy of every tensor and circuit in `f`.
 *
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
enum TsStatus ts_file_reverse(const struct TsFile *f, struct TsFile **out);

/**
 * Serializes `f` back to circuit-file text. Release with [`ts_string_free`].
 *
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
enum TsStatus ts_file_serialize(const struct TsFile *f, char **out);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. Null is ignored.
 */
void ts_string_free(char *s);

/**
 * Probability of the closed circuit `name`.
 *
 * # Safety
 * `f` must be a live handle, `name` NUL-terminated and `out` valid.
 */
enum TsStatus ts_probability(const struct TsFile *f,
                             const char *name,
                             enum TsDirection direction,
                             double tol,
                             double *out);

/**
 * Physicality report for tensor `name`. Returns `Ok` whether or not the
 * tensor is physical; read `physical` in the report.
 *
 * # Safety
 * `f` must be a live handle, `name` NUL-terminated and `out` valid.
 */
enum TsStatus ts_check_tensor(const struct TsFile *f,
                              const char *name,
                              double tol,
                              struct TsCheckReport *out);

/**
 * Joint distribution of circuit `name` over its placeholders.
 *
 * # Safety
 * `f` must be a live handle, `name` NUL-terminated and `out` valid.
 */
enum TsStatus ts_joint(const struct TsFile *f, const char *name, struct TsJoint **out);

/**
 * Row (outcome combination) and column (income combination) counts.
 *
 * # Safety
 * `j` must be a live handle; `rows` and `cols` valid pointers.
 */
enum TsStatus ts_joint_shape(const struct TsJoint *j, size_t *rows, size_t *cols);

/**
 * Copies the table row-major into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `j` must be a live handle and `buf` valid for `len` writes.
 */
enum TsStatus ts_joint_copy(const struct TsJoint *j, double *buf, size_t len);

/**
 * # Safety
 * `j` must come from this library and not be freed twice. Null is ignored.
 */
void ts_joint_free(struct TsJoint *j);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIMESYM_H */

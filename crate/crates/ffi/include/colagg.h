/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef COLAGG_H
#define COLAGG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Aggregate kinds. `COLAGG_AGGREGATE_STD` is the population standard deviation.
typedef enum ColaggAggregate {
  COLAGG_AGGREGATE_SUM = 0,
  COLAGG_AGGREGATE_COUNT = 1,
  COLAGG_AGGREGATE_MIN = 2,
  COLAGG_AGGREGATE_MAX = 3,
  COLAGG_AGGREGATE_MEAN = 4,
  COLAGG_AGGREGATE_STD = 5,
} ColaggAggregate;

typedef enum ColaggDataType {
  COLAGG_DATA_TYPE_INT64 = 0,
  COLAGG_DATA_TYPE_FLOAT64 = 1,
  COLAGG_DATA_TYPE_UTF8 = 2,
} ColaggDataType;

typedef enum ColaggScalarTag {
  COLAGG_SCALAR_TAG_INT64 = 0,
  COLAGG_SCALAR_TAG_FLOAT64 = 1,
  // Aggregate of an empty input (every kind except count).
  COLAGG_SCALAR_TAG_NO_VALUE = 2,
} ColaggScalarTag;

// Result of every fallible call. One code per core error, plus boundary
// misuse (`NULL_POINTER`, `USAGE_ERROR`) and caught panics (`INTERNAL`).
typedef enum ColaggStatus {
  COLAGG_STATUS_OK = 0,
  COLAGG_STATUS_LENGTH_MISMATCH = 1,
  COLAGG_STATUS_SCHEMA_MISMATCH = 2,
  COLAGG_STATUS_UNSUPPORTED_KEY_TYPE = 3,
  COLAGG_STATUS_UNSUPPORTED_VALUE_TYPE = 4,
  COLAGG_STATUS_INDEX_OUT_OF_BOUNDS = 5,
  COLAGG_STATUS_COLUMN_OUT_OF_RANGE = 6,
  COLAGG_STATUS_MALFORMED_PAYLOAD = 7,
  COLAGG_STATUS_OVERFLOW = 8,
  COLAGG_STATUS_KIND_MISMATCH = 9,
  COLAGG_STATUS_INVALID_FLOAT = 10,
  COLAGG_STATUS_NOT_SORTED = 11,
  COLAGG_STATUS_TRANSPORT_FAILURE = 12,
  COLAGG_STATUS_PROTOCOL_VIOLATION = 13,
  COLAGG_STATUS_BIND_FAILURE = 14,
  COLAGG_STATUS_HANDSHAKE_TIMEOUT = 15,
  COLAGG_STATUS_RANK_COLLISION = 16,
  COLAGG_STATUS_PARSE_ERROR = 17,
  COLAGG_STATUS_IO_FAILURE = 18,
  COLAGG_STATUS_VERIFICATION_FAILURE = 19,
  COLAGG_STATUS_INVALID_ARGUMENT = 20,
  // A required pointer argument was NULL.
  COLAGG_STATUS_NULL_POINTER = 21,
  // The context has been finalized.
  COLAGG_STATUS_USAGE_ERROR = 22,
  // An output buffer is too small; the required size was reported.
  COLAGG_STATUS_BUFFER_TOO_SMALL = 23,
  // A panic was caught at the boundary.
  COLAGG_STATUS_INTERNAL = 24,
} ColaggStatus;

// Opaque handle to one rank's worker context.
typedef struct ColaggContext ColaggContext;

// Opaque handle to a table shard. Usable only while its context is live.
typedef struct ColaggTable ColaggTable;

// An aggregate result. Only the field selected by `tag` is meaningful.
typedef struct ColaggScalar {
  enum ColaggScalarTag tag;
  int64_t int_value;
  double float_value;
} ColaggScalar;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a context. With `distributed` false the context is a single
// rank; with it true, rank, world size and peer addresses are read from
// `COLAGG_RANK`, `COLAGG_WORLD_SIZE` and `COLAGG_HOSTS` and the call blocks
// until every peer has connected over TCP.
//
// # Safety
// `out` must be NULL or valid for writes.
enum ColaggStatus colagg_context_new(bool distributed, struct ColaggContext **out_ctx);

// # Safety
// `ctx` must be NULL or a live context handle; `out_rank` NULL or writable.
enum ColaggStatus colagg_context_rank(const struct ColaggContext *ctx, size_t *out_rank);

// # Safety
// `ctx` must be NULL or a live context handle; `out_size` NULL or writable.
enum ColaggStatus colagg_context_world_size(const struct ColaggContext *ctx, size_t *out_size);

// # Safety
// `ctx` must be NULL or a live context handle; `out_flag` NULL or writable.
enum ColaggStatus colagg_context_is_distributed(const struct ColaggContext *ctx, bool *out_flag);

// # Safety
// `ctx` must be NULL or a live context handle; `out_flag` NULL or writable.
enum ColaggStatus colagg_context_is_finalized(const struct ColaggContext *ctx, bool *out_flag);

// Shuts the worker context down. Idempotent. Every later operation on the
// context or its tables fails with `COLAGG_STATUS_USAGE_ERROR`; handles
// must still be freed.
//
// # Safety
// `ctx` must be NULL or a live context handle.
enum ColaggStatus colagg_context_finalize(struct ColaggContext *ctx);

// Finalizes (if needed) and releases the context. NULL is ignored.
//
// # Safety
// `ctx` must be NULL or a context handle not yet freed.
void colagg_context_free(struct ColaggContext *ctx);

// Reads a CSV file with a header row into a new table.
//
// # Safety
// `ctx` must be a live context handle, `path` a NUL-terminated string and
// `out_table` writable (each may be NULL, which is reported).
enum ColaggStatus colagg_read_csv(const struct ColaggContext *ctx,
                                  const char *path,
                                  struct ColaggTable **out_table);

// Creates a table with no columns and no rows; add columns with the
// `colagg_table_add_*_column` functions.
//
// # Safety
// `ctx` must be a live context handle and `out_table` writable.
enum ColaggStatus colagg_table_new(const struct ColaggContext *ctx, struct ColaggTable **out_table);

// Appends a copy of `len` Int64 values as a new column.
//
// # Safety
// `table` must be a live table handle, `name` NUL-terminated, and
// `values` valid for `len` reads.
enum ColaggStatus colagg_table_add_int64_column(struct ColaggTable *table,
                                                const char *name,
                                                const int64_t *values,
                                                size_t len);

// Appends a copy of `len` Float64 values as a new column.
//
// # Safety
// As for [`colagg_table_add_int64_column`].
enum ColaggStatus colagg_table_add_float64_column(struct ColaggTable *table,
                                                  const char *name,
                                                  const double *values,
                                                  size_t len);

// Appends `len` NUL-terminated UTF-8 strings as a new column.
//
// # Safety
// As for [`colagg_table_add_int64_column`]; every element of `values`
// must be a NUL-terminated string.
enum ColaggStatus colagg_table_add_utf8_column(struct ColaggTable *table,
                                               const char *name,
                                               const char *const *values,
                                               size_t len);

// Writes the table as CSV with a header row.
//
// # Safety
// `table` must be a live table handle and `path` NUL-terminated.
enum ColaggStatus colagg_table_write_csv(const struct ColaggTable *table, const char *path);

// # Safety
// `table` must be a live table handle and `out_rows` writable.
enum ColaggStatus colagg_table_num_rows(const struct ColaggTable *table, size_t *out_rows);

// # Safety
// `table` must be a live table handle and `out_columns` writable.
enum ColaggStatus colagg_table_num_columns(const struct ColaggTable *table, size_t *out_columns);

// # Safety
// `table` must be a live table handle and `out_type` writable.
enum ColaggStatus colagg_table_column_type(const struct ColaggTable *table,
                                           size_t col,
                                           enum ColaggDataType *out_type);

// Copies the column name, NUL-terminated, into `buf`. `needed` (may be
// NULL) receives the required capacity including the NUL; a smaller `cap`
// gives `COLAGG_STATUS_BUFFER_TOO_SMALL`.
//
// # Safety
// `table` must be a live table handle and `buf` valid for `cap` writes.
enum ColaggStatus colagg_table_column_name(const struct ColaggTable *table,
                                           size_t col,
                                           char *buf,
                                           size_t cap,
                                           size_t *needed);

// Copies every value of an Int64 column into `buf`, which must hold at
// least `num_rows` elements.
//
// # Safety
// `table` must be a live table handle and `buf` valid for `cap` writes.
enum ColaggStatus colagg_table_copy_int64(const struct ColaggTable *table,
                                          size_t col,
                                          int64_t *buf,
                                          size_t cap);

// Copies every value of a Float64 column into `buf`, which must hold at
// least `num_rows` elements.
//
// # Safety
// `table` must be a live table handle and `buf` valid for `cap` writes.
enum ColaggStatus colagg_table_copy_float64(const struct ColaggTable *table,
                                            size_t col,
                                            double *buf,
                                            size_t cap);

// Copies one string of a Utf8 column, NUL-terminated, into `buf`; see
// [`colagg_table_column_name`] for the `cap`/`needed` protocol.
//
// # Safety
// `table` must be a live table handle and `buf` valid for `cap` writes.
enum ColaggStatus colagg_table_utf8_value(const struct ColaggTable *table,
                                          size_t col,
                                          size_t row,
                                          char *buf,
                                          size_t cap,
                                          size_t *needed);

// Aggregates column `col` across every rank of the table's context.
// `kind` is a [`ColaggAggregate`] value.
//
// # Safety
// `table` must be a live table handle and `out_value` writable.
enum ColaggStatus colagg_table_aggregate(const struct ColaggTable *table,
                                         size_t col,
                                         uint32_t kind,
                                         struct ColaggScalar *out_value);

// Shorthand for [`colagg_table_aggregate`] with `COLAGG_AGGREGATE_SUM`.
//
// # Safety
// As for [`colagg_table_aggregate`].
enum ColaggStatus colagg_table_sum(const struct ColaggTable *table,
                                   size_t col,
                                   struct ColaggScalar *out_value);

// Groups by `key_cols` and computes `ops[i]` over `value_cols[i]` for each
// of the `num_aggregates` pairs, across every rank of the context. Each
// rank receives the groups whose keys hash to it: key columns first, then
// one column per aggregate named `op(column)`.
//
// # Safety
// `table` must be a live table handle; `key_cols` valid for `num_keys`
// reads; `value_cols` and `ops` valid for `num_aggregates` reads;
// `out_table` writable.
enum ColaggStatus colagg_table_groupby(const struct ColaggTable *table,
                                       const size_t *key_cols,
                                       size_t num_keys,
                                       const size_t *value_cols,
                                       const uint32_t *ops,
                                       size_t num_aggregates,
                                       struct ColaggTable **out_table);

// Releases a table. NULL is ignored. Allowed after the context is finalized.
//
// # Safety
// `table` must be NULL or a table handle not yet freed.
void colagg_table_free(struct ColaggTable *table);

// Name of the error from the calling thread's most recent failed call
// (e.g. `"ParseError"`), or NULL if that call succeeded. Valid until the
// next call on this thread.
const char *colagg_last_error_name(void);

// Human-readable message for [`colagg_last_error_name`], or NULL.
const char *colagg_last_error_message(void);

// Static name of a status code; `"Unknown"` for values outside the enum.
const char *colagg_status_name(int32_t status);

// Number of guarded calls made across the boundary since load, for
// measuring per-call overhead.
uint64_t colagg_boundary_calls(void);

// Library version, e.g. `"0.1.0"`.
const char *colagg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLAGG_H */

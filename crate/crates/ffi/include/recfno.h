#ifndef RECFNO_H
#define RECFNO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum RecfnoStatus {
  RECFNO_STATUS_OK = 0,
  RECFNO_STATUS_NULL_POINTER = 1,
  RECFNO_STATUS_INVALID_ARGUMENT = 2,
  RECFNO_STATUS_SHAPE = 3,
  RECFNO_STATUS_CONFIG = 4,
  RECFNO_STATUS_IO = 5,
  RECFNO_STATUS_FORMAT = 6,
  RECFNO_STATUS_RESOLUTION = 7,
  RECFNO_STATUS_NUMERIC = 8,
  RECFNO_STATUS_SOLVER = 9,
  RECFNO_STATUS_DIVERGED = 10,
  RECFNO_STATUS_BUFFER_TOO_SMALL = 11,
  RECFNO_STATUS_PANIC = 12,
} RecfnoStatus;

/*
 A dataset of fields on one grid.
 */
typedef struct RecfnoDataset RecfnoDataset;

/*
 A trained RecFNO or POD-MLP model with its sensor layout.
 */
typedef struct RecfnoModel RecfnoModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *recfno_version(void);

/*
 Copies the calling thread's last error message into `buf` (truncated,
 always NUL-terminated when `len > 0`). Returns the full message length
 without the terminator.
 */
size_t recfno_last_error(char *buf, size_t len);

/*
 Mean and maximum absolute error between two arrays of `len` values.
 */
enum RecfnoStatus recfno_metrics(const double *truth,
                                 const double *pred,
                                 size_t len,
                                 double *mae,
                                 double *max_ae);

/*
 Generates a dataset of `count` snapshots for `task` ("darcy", "heat" or
 "wake") on an `n_y` x `n_x` grid; zero sizes select the task's default
 grid. Split 5:1:1 into train, val and test.
 */
enum RecfnoStatus recfno_dataset_generate(const char *task,
                                          size_t n_y,
                                          size_t n_x,
                                          size_t count,
                                          uint64_t seed,
                                          struct RecfnoDataset **out);

/*
 Reads a dataset directory written by `recfno gen`.
 */
enum RecfnoStatus recfno_dataset_load(const char *dir, struct RecfnoDataset **out);

/*
 Writes the dataset to `dir`.
 */
enum RecfnoStatus recfno_dataset_save(const struct RecfnoDataset *ds, const char *dir);

/*
 Number of fields and grid size.
 */
enum RecfnoStatus recfno_dataset_shape(const struct RecfnoDataset *ds,
                                       size_t *count,
                                       size_t *n_y,
                                       size_t *n_x);

/*
 Copies field `index` into `out`, which holds `len >= n_y * n_x` values.
 */
enum RecfnoStatus recfno_dataset_field(const struct RecfnoDataset *ds,
                                       size_t index,
                                       double *out,
                                       size_t len);

void recfno_dataset_free(struct RecfnoDataset *ds);

/*
 Loads a checkpoint written by `recfno train` or `recfno baseline`.
 */
enum RecfnoStatus recfno_model_load(const char *path, struct RecfnoModel **out);

void recfno_model_free(struct RecfnoModel *m);

/*
 Training grid of the model.
 */
enum RecfnoStatus recfno_model_grid(const struct RecfnoModel *m, size_t *n_y, size_t *n_x);

/*
 Number of sensors the model reads.
 */
enum RecfnoStatus recfno_model_sensor_count(const struct RecfnoModel *m, size_t *count);

/*
 Sensor coordinates as `x0, y0, x1, y1, ...` into `xy` of `len >= 2n`.
 */
enum RecfnoStatus recfno_model_sensors(const struct RecfnoModel *m, double *xy, size_t len);

/*
 Reconstructs a field from `n_values` sensor readings (in the order of
 [`recfno_model_sensors`]) on the training grid refined `scale` times.
 `out` must hold `scale^2 * n_y * n_x` values.
 */
enum RecfnoStatus recfno_model_predict(const struct RecfnoModel *m,
                                       const double *values,
                                       size_t n_values,
                                       size_t scale,
                                       double *out,
                                       size_t len);

/*
 Reads the model's sensors from a full field of `n_y * n_x` values into
 `values` (one per sensor).
 */
enum RecfnoStatus recfno_model_observe(const struct RecfnoModel *m,
                                       const double *field,
                                       size_t len,
                                       double *values,
                                       size_t n_values);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECFNO_H */

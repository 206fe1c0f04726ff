#ifndef ZONESEG_H
#define ZONESEG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit-code convention: usage and
 * configuration problems map to `Usage`, malformed or inconsistent inputs
 * to `Data`.
 */
typedef enum ZsStatus {
  Ok = 0,
  Usage = 1,
  Data = 2,
  NullPointer = 3,
  Panic = 4,
} ZsStatus;

/**
 * A trained network checkpoint.
 */
typedef struct ZsModel ZsModel;

/**
 * An image or label volume.
 */
typedef struct ZsVolume ZsVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; valid until the next
 * failing call. Never NULL.
 */
const char *zs_last_error(void);

/**
 * Reads a `.zvol` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ZsStatus zs_volume_read(const char *path, struct ZsVolume **out);

/**
 * Writes a volume as `.zvol`.
 *
 * # Safety
 * `vol` must be a live handle and `path` a NUL-terminated string.
 */
enum ZsStatus zs_volume_write(const struct ZsVolume *vol, const char *path);

/**
 * Releases a volume handle; NULL is a no-op.
 *
 * # Safety
 * `vol` must have come from this library and not be freed twice.
 */
void zs_volume_free(struct ZsVolume *vol);

/**
 * Extents in voxels, x/y/z.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ZsStatus zs_volume_dims(const struct ZsVolume *vol, uint64_t *nx, uint64_t *ny, uint64_t *nz);

/**
 * 1 if the volume holds labels, 0 if it is an image.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ZsStatus zs_volume_is_labels(const struct ZsVolume *vol, int32_t *out);

/**
 * Generates a deterministic synthetic phantom pair. `n_labels` is 3 or 6,
 * `difficulty` in [0,1].
 *
 * # Safety
 * Output pointers must be valid.
 */
enum ZsStatus zs_phantom(uint64_t seed,
                         uint64_t nx,
                         uint64_t ny,
                         uint64_t nz,
                         double sx,
                         double sy,
                         double sz,
                         uint32_t n_labels,
                         double difficulty,
                         struct ZsVolume **out_image,
                         struct ZsVolume **out_labels);

/**
 * Loads a checkpoint written by the trainer.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ZsStatus zs_model_load(const char *path, struct ZsModel **out);

/**
 * Releases a model handle; NULL is a no-op.
 *
 * # Safety
 * `model` must have come from this library and not be freed twice.
 */
void zs_model_free(struct ZsModel *model);

/**
 * Segments an image volume; the result is a label volume of the same dims.
 *
 * # Safety
 * All pointers must be valid handles from this library.
 */
enum ZsStatus zs_model_predict(const struct ZsModel *model,
                               const struct ZsVolume *image,
                               struct ZsVolume **out);

/**
 * Dice overlap of one label value between two label volumes of equal dims;
 * 1.0 when the label is absent from both.
 *
 * # Safety
 * All pointers must be valid.
 */
enum ZsStatus zs_dice(const struct ZsVolume *pred,
                      const struct ZsVolume *truth,
                      uint8_t label,
                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZONESEG_H */

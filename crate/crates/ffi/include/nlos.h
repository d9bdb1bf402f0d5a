#ifndef NLOS_H
#define NLOS_H

#include <stddef.h>
#include <stdint.h>

typedef enum NlosStatus {
  NLOS_STATUS_OK = 0,
  NLOS_STATUS_NULL_POINTER = 1,
  NLOS_STATUS_CONFIG = 2,
  NLOS_STATUS_DATA = 3,
  NLOS_STATUS_NUMERICAL = 4,
  NLOS_STATUS_OUT_OF_RANGE = 5,
  NLOS_STATUS_PANIC = 6,
} NlosStatus;

// Sequence of sensor frames with optional ground truth.
typedef struct NlosDataset NlosDataset;

// Camera `(x, y)` in world coordinates plus height per estimated frame.
typedef struct NlosLocalization NlosLocalization;

// Parsed scene file.
typedef struct NlosScene NlosScene;

typedef struct NlosTrack NlosTrack;

typedef struct NlosVolume NlosVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, empty after a success.
// Valid until the next call into this library from the same thread.
const char *nlos_last_error(void);

// Library version, static storage.
const char *nlos_version(void);

// Parses a scene from TOML text. Relative paths in it are kept as written.
//
// # Safety
// `toml` must be a nul-terminated string; `out` must be writable.
enum NlosStatus nlos_scene_from_toml(const char *toml, struct NlosScene **out);

// Loads a scene file, resolving its paths against its directory.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum NlosStatus nlos_scene_load(const char *path, struct NlosScene **out);

// Replaces the scene seed.
//
// # Safety
// `scene` must be a live handle or null.
enum NlosStatus nlos_scene_set_seed(struct NlosScene *scene, uint64_t seed);

// # Safety
// `scene` must come from this library and not be used afterwards.
void nlos_scene_free(struct NlosScene *scene);

// Renders the scene.
//
// # Safety
// `scene` must be a live handle; `out` must be writable.
enum NlosStatus nlos_simulate(const struct NlosScene *scene, struct NlosDataset **out);

// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum NlosStatus nlos_dataset_read(const char *path, struct NlosDataset **out);

// # Safety
// `dataset` must be a live handle; `path` a nul-terminated string.
enum NlosStatus nlos_dataset_write(const struct NlosDataset *dataset, const char *path);

// Number of frames; 0 for a null handle.
//
// # Safety
// `dataset` must be a live handle or null.
size_t nlos_dataset_frame_count(const struct NlosDataset *dataset);

// # Safety
// `dataset` must come from this library and not be used afterwards.
void nlos_dataset_free(struct NlosDataset *dataset);

// Tracks the scene objects, computing their STIRs on the fly.
//
// # Safety
// Handles must be live; `out` must be writable.
enum NlosStatus nlos_track(const struct NlosScene *scene,
                           const struct NlosDataset *dataset,
                           struct NlosTrack **out);

// Number of estimated frames.
//
// # Safety
// `track` must be a live handle or null.
size_t nlos_track_len(const struct NlosTrack *track);

// Number of tracked objects.
//
// # Safety
// `track` must be a live handle or null.
size_t nlos_track_objects(const struct NlosTrack *track);

// Estimate `i` of object `object`: its frame index and world position.
//
// # Safety
// `track` must be a live handle; `frame` and `xyz` (3 doubles) writable.
enum NlosStatus nlos_track_get(const struct NlosTrack *track,
                               size_t i,
                               size_t object,
                               size_t *frame,
                               double *xyz);

// # Safety
// `track` must come from this library and not be used afterwards.
void nlos_track_free(struct NlosTrack *track);

// Localizes the camera against the scene's landmark. Poses stored in the
// dataset are ignored.
//
// # Safety
// Handles must be live; `out` must be writable.
enum NlosStatus nlos_localize(const struct NlosScene *scene,
                              const struct NlosDataset *dataset,
                              struct NlosLocalization **out);

// Number of estimated frames.
//
// # Safety
// `loc` must be a live handle or null.
size_t nlos_localization_len(const struct NlosLocalization *loc);

// Estimate `i`: frame index, world `(x, y)` and camera height.
//
// # Safety
// `loc` must be a live handle; `frame`, `xy` (2 doubles) and `z` writable.
enum NlosStatus nlos_localization_get(const struct NlosLocalization *loc,
                                      size_t i,
                                      size_t *frame,
                                      double *xy,
                                      double *z);

// # Safety
// `loc` must come from this library and not be used afterwards.
void nlos_localization_free(struct NlosLocalization *loc);

// Fuses every posed frame and backprojects onto the scene's volume grid.
//
// # Safety
// Handles must be live; `out` must be writable.
enum NlosStatus nlos_reconstruct(const struct NlosScene *scene,
                                 const struct NlosDataset *dataset,
                                 struct NlosVolume **out);

// Writes `(n_x, n_y, n_z)` into `shape` and the voxel-centre bounds
// `(x_min, x_max, y_min, y_max, z_min, z_max)` into `bounds` when non-null.
//
// # Safety
// `volume` must be a live handle; `shape` holds 3 values, `bounds` 6.
enum NlosStatus nlos_volume_shape(const struct NlosVolume *volume, size_t *shape, double *bounds);

// Copies the voxels, `z` fastest, into `out[0..len]`. `len` must equal
// `n_x * n_y * n_z`.
//
// # Safety
// `volume` must be a live handle; `out` must hold `len` doubles.
enum NlosStatus nlos_volume_copy(const struct NlosVolume *volume, double *out, size_t len);

// # Safety
// `volume` must come from this library and not be used afterwards.
void nlos_volume_free(struct NlosVolume *volume);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLOS_H */

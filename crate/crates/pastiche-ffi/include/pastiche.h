/* C API for the pastiche dataset-synthesis pipeline. */

#ifndef PASTICHE_H
#define PASTICHE_H

/* Generated by cbindgen from crates/pastiche-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible entry point.
typedef enum PasticheStatus {
  PASTICHE_STATUS_OK = 0,
  PASTICHE_STATUS_NULL_ARGUMENT = 1,
  PASTICHE_STATUS_INVALID_UTF8 = 2,
  PASTICHE_STATUS_PARSE_ERROR = 3,
  PASTICHE_STATUS_MASK_ERROR = 4,
  PASTICHE_STATUS_INTEGRITY_ERROR = 5,
  PASTICHE_STATUS_VALIDATION_ERROR = 6,
  PASTICHE_STATUS_CONFIG_ERROR = 7,
  PASTICHE_STATUS_IO_ERROR = 8,
  // A panic crossed the boundary; state is still consistent but the
  // operation did nothing.
  PASTICHE_STATUS_INTERNAL_ERROR = 9,
} PasticheStatus;

// Opaque handle to a parsed dataset.
typedef struct PasticheDataset PasticheDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *pastiche_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pastiche_version(void);

// Parses COCO/LVIS JSON bytes into a dataset handle.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be a valid
// pointer to receive the handle. Free the handle with
// [`pastiche_dataset_free`].
enum PasticheStatus pastiche_dataset_parse(const uint8_t *bytes,
                                           size_t len,
                                           struct PasticheDataset **out);

// Reads and parses a dataset JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum PasticheStatus pastiche_dataset_parse_file(const char *path, struct PasticheDataset **out);

// Serializes the dataset to canonical JSON. The buffer is allocated by
// the library; release it with [`pastiche_buffer_free`].
//
// # Safety
// `dataset`, `out_bytes` and `out_len` must be valid pointers.
enum PasticheStatus pastiche_dataset_serialize(const struct PasticheDataset *dataset,
                                               uint8_t **out_bytes,
                                               size_t *out_len);

// Element counts of a dataset. Null out-pointers are skipped.
//
// # Safety
// `dataset` must be a live handle from this library.
enum PasticheStatus pastiche_dataset_counts(const struct PasticheDataset *dataset,
                                            uint64_t *out_images,
                                            uint64_t *out_annotations,
                                            uint64_t *out_categories);

// Runs the invariant validator; `Ok` means the dataset is clean,
// `ValidationError` puts the violation list into the error message.
//
// # Safety
// `dataset` must be a live handle from this library.
enum PasticheStatus pastiche_dataset_validate(const struct PasticheDataset *dataset);

// Releases a dataset handle. Null is a no-op.
//
// # Safety
// `dataset` must have come from this library and not been freed before.
void pastiche_dataset_free(struct PasticheDataset *dataset);

// Releases a buffer returned by this library.
//
// # Safety
// `(bytes, len)` must match a buffer handed out by this library.
void pastiche_buffer_free(uint8_t *bytes, size_t len);

// Releases a string returned by this library.
//
// # Safety
// `s` must have come from this library and not been freed before.
void pastiche_string_free(char *s);

// Encodes a dense column-major binary mask (`width * height` bytes, any
// nonzero byte is foreground) into a compressed counts string. Release the
// string with [`pastiche_string_free`].
//
// # Safety
// `pixels` must point to `width * height` readable bytes and `out_counts`
// must be valid.
enum PasticheStatus pastiche_mask_encode(const uint8_t *pixels,
                                         uint32_t width,
                                         uint32_t height,
                                         char **out_counts);

// Decodes a compressed counts string into a caller-provided dense buffer
// of `width * height` bytes (column-major, 0/1).
//
// # Safety
// `counts` must be NUL-terminated; `out_pixels` must point to
// `width * height` writable bytes.
enum PasticheStatus pastiche_mask_decode(const char *counts,
                                         uint32_t width,
                                         uint32_t height,
                                         uint8_t *out_pixels);

// Tight bounding box (`out_bbox = [x, y, w, h]`) and foreground pixel
// count of a compressed mask. Null out-pointers are skipped.
//
// # Safety
// `counts` must be NUL-terminated; `out_bbox`, when given, must point to
// four writable `uint32_t`s.
enum PasticheStatus pastiche_mask_stats(const char *counts,
                                        uint32_t width,
                                        uint32_t height,
                                        uint32_t *out_bbox,
                                        uint64_t *out_area);

// Runs the compose stage from a pipeline-config JSON string (same schema
// as the CLI config file; environment overrides are not consulted).
// Images, plan traces and `dataset.json` land in the configured
// `output_dir`.
//
// # Safety
// `config_json` must be a NUL-terminated string.
enum PasticheStatus pastiche_compose_run(const char *config_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASTICHE_H */

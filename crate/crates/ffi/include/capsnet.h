#ifndef CAPSNET_H
#define CAPSNET_H

/* Generated by cbindgen from capsnet-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call. Anything other than `Ok` sets the thread-local
 * error message.
 */
typedef enum {
  /**
   * The call succeeded and all out parameters are valid.
   */
  CAPSNET_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CAPSNET_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  CAPSNET_STATUS_INVALID_UTF8 = 2,
  /**
   * An argument was structurally valid but semantically wrong
   * (bad configuration text, wrong buffer length, corrupt checkpoint).
   */
  CAPSNET_STATUS_INVALID_ARGUMENT = 3,
  /**
   * The operating system reported an I/O failure.
   */
  CAPSNET_STATUS_IO_ERROR = 4,
  /**
   * An unexpected internal failure; report these as bugs.
   */
  CAPSNET_STATUS_INTERNAL_ERROR = 5,
} CapsnetStatus;

/**
 * Opaque handle to a network instance.
 */
typedef struct CapsnetNetwork CapsnetNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the most recent failure on the calling thread.
 *
 * Never null; the empty string before any failure. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *capsnet_last_error(void);

/**
 * NUL-terminated name of a class index, or null if out of range.
 *
 * The returned pointer is static and must not be freed.
 */
const char *capsnet_class_name(uint32_t class_);

/**
 * Build a freshly initialized network.
 *
 * `config` is UTF-8 `key=value` text in the run-configuration format
 * (unknown keys are rejected); pass null or an empty string for the
 * default architecture. `seed` drives parameter initialization: equal
 * seeds and configurations produce bitwise-identical networks.
 *
 * # Safety
 * `config` must be null or NUL-terminated; `out` must be a valid pointer.
 */
CapsnetStatus capsnet_network_new(const char *config, uint64_t seed, CapsnetNetwork **out);

/**
 * Load a network from a checkpoint file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be a valid pointer.
 */
CapsnetStatus capsnet_network_load(const char *path, CapsnetNetwork **out);

/**
 * Write a network to a checkpoint file.
 *
 * # Safety
 * `network` must be a live handle; `path` must be NUL-terminated.
 */
CapsnetStatus capsnet_network_save(const CapsnetNetwork *network, const char *path);

/**
 * Total number of trainable parameters.
 *
 * # Safety
 * `network` must be a live handle; `out` must be a valid pointer.
 */
CapsnetStatus capsnet_network_parameter_count(const CapsnetNetwork *network, uint64_t *out);

/**
 * Side length of the square input the network expects.
 *
 * # Safety
 * `network` must be a live handle; `out` must be a valid pointer.
 */
CapsnetStatus capsnet_network_input_side(const CapsnetNetwork *network, uintptr_t *out);

/**
 * Number of output classes (the length `capsnet_network_forward` writes).
 *
 * # Safety
 * `network` must be a live handle; `out` must be a valid pointer.
 */
CapsnetStatus capsnet_network_class_count(const CapsnetNetwork *network, uintptr_t *out);

/**
 * Run inference and write one capsule norm per class into `norms`.
 *
 * `pixels` holds `channels * side * side` values in channel-major order,
 * scaled to `[0, 1]`; `pixel_count` and `norm_count` must match the
 * network (`norm_count` equals the class count). Norms lie in `(0, 1)`
 * and the predicted class is the argmax.
 *
 * # Safety
 * `network` must be a live handle; `pixels` must hold `pixel_count`
 * readable values; `norms` must hold `norm_count` writable values.
 */
CapsnetStatus capsnet_network_forward(const CapsnetNetwork *network,
                                      const float *pixels,
                                      uintptr_t pixel_count,
                                      float *norms,
                                      uintptr_t norm_count);

/**
 * Run inference and write the predicted class index (argmax of the
 * per-class capsule norms; ties resolve to the lowest index).
 *
 * # Safety
 * `network` must be a live handle; `pixels` must hold `pixel_count`
 * readable values; `out` must be a valid pointer.
 */
CapsnetStatus capsnet_network_predict(const CapsnetNetwork *network,
                                      const float *pixels,
                                      uintptr_t pixel_count,
                                      uint32_t *out);

/**
 * Release a handle. Null is a no-op; a handle must not be used after.
 *
 * # Safety
 * `network` must be null or a pointer obtained from this library that has
 * not been freed before.
 */
void capsnet_network_free(CapsnetNetwork *network);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CAPSNET_H */

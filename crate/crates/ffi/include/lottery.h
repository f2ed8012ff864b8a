#ifndef LOTTERY_H
#define LOTTERY_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum LtStatus {
  LT_STATUS_OK = 0,
  LT_STATUS_INVALID_ARGUMENT = 1,
  LT_STATUS_NULL_POINTER = 2,
  LT_STATUS_SHAPE = 3,
  LT_STATUS_DIVERGED = 4,
  LT_STATUS_IO = 5,
  LT_STATUS_FORMAT = 6,
  LT_STATUS_INTERNAL = 7,
} LtStatus;

/**
 * A network, its initialization snapshot and its mask.
 */
typedef struct LtNetwork LtNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *lt_last_error(void);

/**
 * Standard deviation of the Glorot Gaussian for a layer.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum LtStatus lt_glorot_std(size_t fan_in, size_t fan_out, double *out);

/**
 * Creates a preset network ("lenet", "conv-2", "conv-4", "conv-6") with a
 * Glorot Gaussian initialization drawn from `seed` and a full mask.
 *
 * # Safety
 * `name` must be null or a NUL-terminated string; `out` must be null or
 * writable. The handle written to `out` must be released with
 * [`lt_network_free`].
 */
enum LtStatus lt_network_preset(const char *name, uint64_t seed, struct LtNetwork **out);

/**
 * Creates a fully-connected ReLU network `input → hidden… → classes`.
 *
 * # Safety
 * `hidden` must point to `hidden_len` values (or be null when it is 0);
 * `out` as for [`lt_network_preset`].
 */
enum LtStatus lt_network_mlp(size_t input,
                             const size_t *hidden,
                             size_t hidden_len,
                             size_t classes,
                             uint64_t seed,
                             struct LtNetwork **out);

/**
 * Releases a network. Null is ignored.
 *
 * # Safety
 * `net` must be null or a handle from this library not yet freed.
 */
void lt_network_free(struct LtNetwork *net);

/**
 * Input length per example and number of classes.
 *
 * # Safety
 * `net` must be a live handle; the out pointers null or writable.
 */
enum LtStatus lt_network_dims(const struct LtNetwork *net, size_t *input_len, size_t *classes);

/**
 * Total prunable weights and how many the mask keeps.
 *
 * # Safety
 * As for [`lt_network_dims`].
 */
enum LtStatus lt_network_sparsity(const struct LtNetwork *net, size_t *total, size_t *remaining);

/**
 * One round of layer-wise magnitude pruning on the current weights: each
 * layer loses `fc_rate` (dense), `conv_rate` (convolutional) or
 * `fc_rate / 2` (output) of its surviving weights. Pruned weights are zeroed.
 *
 * # Safety
 * `net` must be a live handle.
 */
enum LtStatus lt_network_prune(struct LtNetwork *net, double fc_rate, double conv_rate);

/**
 * Resets surviving weights and all biases to their initial values.
 *
 * # Safety
 * `net` must be a live handle.
 */
enum LtStatus lt_network_rewind(struct LtNetwork *net);

/**
 * Logits for `batch` examples laid out row-major in `input`
 * (`batch * input_len` values). Writes `batch * classes` values.
 *
 * # Safety
 * `input` must hold `input_len` values and `logits` room for `logits_len`.
 */
enum LtStatus lt_network_forward(const struct LtNetwork *net,
                                 const double *input,
                                 size_t input_len,
                                 size_t batch,
                                 double *logits,
                                 size_t logits_len);

/**
 * Trains the current weights under the mask with Adam on synthetic
 * Gaussian blobs sized to the network (`per_class` examples per class, a
 * fifth held out for validation and as many again for test). Writes the
 * early-stopping iteration and the test accuracy there; the network keeps
 * the weights from the end of training.
 *
 * # Safety
 * `net` must be a live handle; the out pointers null or writable.
 */
enum LtStatus lt_network_train_blobs(struct LtNetwork *net,
                                     size_t per_class,
                                     double separation,
                                     double learning_rate,
                                     uint64_t iterations,
                                     uint64_t seed,
                                     uint64_t *early_iteration,
                                     double *test_accuracy);

/**
 * Writes the mask in the library's binary mask format.
 *
 * # Safety
 * `net` must be a live handle and `path` a NUL-terminated string.
 */
enum LtStatus lt_mask_save(const struct LtNetwork *net, const char *path);

/**
 * Replaces the mask with one read from `path` and zeroes the weights it
 * removes. The mask must match the network's layers.
 *
 * # Safety
 * As for [`lt_mask_save`].
 */
enum LtStatus lt_mask_load(struct LtNetwork *net, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOTTERY_H */

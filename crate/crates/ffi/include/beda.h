#ifndef BEDA_H
#define BEDA_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define BEDA_ACT_ADVERSARIAL 0

#define BEDA_ACT_ALIGNMENT 1

/**
 * Largest state space a model handle accepts.
 */
#define BEDA_MAX_STATES 64

typedef enum BedaStatus {
  BEDA_STATUS_OK = 0,
  BEDA_STATUS_NULL_ARGUMENT = 1,
  BEDA_STATUS_INVALID_UTF8 = 2,
  BEDA_STATUS_INVALID_ARGUMENT = 3,
  BEDA_STATUS_CONFIG = 4,
  BEDA_STATUS_BACKEND = 5,
  BEDA_STATUS_DATA = 6,
  BEDA_STATUS_IO = 7,
  /**
   * Every episode was excluded from the metrics.
   */
  BEDA_STATUS_EMPTY = 8,
  BEDA_STATUS_BUFFER_TOO_SMALL = 9,
  BEDA_STATUS_PANIC = 10,
} BedaStatus;

/**
 * Opaque two-agent partition model.
 */
typedef struct BedaModel BedaModel;

/**
 * Opaque experiment runner.
 */
typedef struct BedaRunner BedaRunner;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *beda_last_error(void);

/**
 * Library version as a static string.
 */
const char *beda_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void beda_string_free(char *s);

/**
 * Builds a model from `{"states": [..], "cells_a": [[..]], "cells_b": [[..]], "prior_a": [..]}`.
 * A missing prior is uniform.
 *
 * # Safety
 * `model_json` must be a NUL-terminated string; `out` must be writable.
 */
enum BedaStatus beda_model_new(const char *model_json, struct BedaModel **out);

/**
 * # Safety
 * `model` must come from [`beda_model_new`] and not have been freed.
 */
void beda_model_free(struct BedaModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum BedaStatus beda_model_num_states(const struct BedaModel *model, size_t *out);

/**
 * Whether the event with bit mask `event` is an ε-act of kind `act`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum BedaStatus beda_model_act_feasible(const struct BedaModel *model,
                                        uint64_t event,
                                        uint32_t act,
                                        double epsilon,
                                        bool *out);

/**
 * The second agent's knowledge of an event, as a bit mask.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum BedaStatus beda_model_knowledge_b(const struct BedaModel *model,
                                       uint64_t event,
                                       uint64_t *out);

/**
 * Every feasible event as a bit mask, ascending. Writes the count to
 * `out_len`; returns `BufferTooSmall` when it exceeds `capacity`.
 *
 * # Safety
 * `model` must be a live handle; `out_masks` must hold `capacity` values
 * (it may be null when `capacity` is 0); `out_len` must be writable.
 */
enum BedaStatus beda_model_feasible_events(const struct BedaModel *model,
                                           uint32_t act,
                                           double epsilon,
                                           uint64_t *out_masks,
                                           size_t capacity,
                                           size_t *out_len);

/**
 * Indices whose beliefs satisfy the act constraint, ascending.
 *
 * # Safety
 * `self_truth` and `opp_knows` must each hold `len` values; `out_indices`
 * must hold `capacity` values; `out_len` must be writable.
 */
enum BedaStatus beda_feasible_set(const double *self_truth,
                                  const double *opp_knows,
                                  size_t len,
                                  uint32_t act,
                                  double epsilon,
                                  size_t *out_indices,
                                  size_t capacity,
                                  size_t *out_len);

/**
 * Symmetric difference between the events predicted known (value ≥ 0.5)
 * and the `truth_len` ground-truth indices.
 *
 * # Safety
 * `predicted` must hold `len` values and `truth` `truth_len` indices;
 * `out` must be writable.
 */
enum BedaStatus beda_belief_gap(const double *predicted,
                                size_t len,
                                const size_t *truth,
                                size_t truth_len,
                                size_t *out);

/**
 * Points earned by the preference with index `preference` (0..6, in the
 * canonical permutation order) from keeping the given packages.
 *
 * # Safety
 * `out` must be writable.
 */
enum BedaStatus beda_casino_reward(uint32_t preference,
                                   uint32_t food,
                                   uint32_t water,
                                   uint32_t firewood,
                                   uint32_t *out);

/**
 * Fraction of item pairs ordered alike by two comma-separated rankings.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out` must be writable.
 */
enum BedaStatus beda_pairwise_agreement(const char *predicted, const char *truth, double *out);

/**
 * Parses an utterance under a grammar document such as
 * `{"ckbg": {"containers": [..]}}`, `{"mf": {"friends": [[..]]}}` or
 * `"casino"`. Writes the parsed action as JSON.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out_json` must be writable. The
 * result is freed with [`beda_string_free`].
 */
enum BedaStatus beda_parse_action(const char *grammar_json, const char *text, char **out_json);

/**
 * Validates an experiment config document (JSON) and prepares its
 * scenarios.
 *
 * # Safety
 * `config_json` must be NUL-terminated; `out` must be writable.
 */
enum BedaStatus beda_runner_new(const char *config_json, struct BedaRunner **out);

/**
 * # Safety
 * `runner` must come from [`beda_runner_new`] and not have been freed.
 */
void beda_runner_free(struct BedaRunner *runner);

/**
 * Runs every episode, writing records to the configured output, and
 * writes the metrics report as JSON. When no episode survived exclusion
 * the report is still written and the status is `Backend` if every
 * episode hit an infrastructure failure, `Empty` otherwise.
 *
 * # Safety
 * `runner` must be a live handle; `out_report_json` must be writable. The
 * report is freed with [`beda_string_free`].
 */
enum BedaStatus beda_runner_run(const struct BedaRunner *runner, char **out_report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEDA_H */

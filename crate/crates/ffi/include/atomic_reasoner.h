#ifndef ATOMIC_REASONER_H
#define ATOMIC_REASONER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum ArStatus {
  AR_STATUS_OK = 0,
  AR_STATUS_NULL_ARGUMENT = 1,
  AR_STATUS_INVALID_UTF8 = 2,
  AR_STATUS_INVALID_ARGUMENT = 3,
  AR_STATUS_PARSE = 4,
  AR_STATUS_BACKEND = 5,
  AR_STATUS_PANIC = 6,
} ArStatus;

// A reasoning tree owned by the caller.
typedef struct ArTree ArTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *ar_last_error(void);

// Library version as a static string.
const char *ar_version(void);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void ar_string_free(char *s);

// Parses a trace document (JSON) into a tree handle.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum ArStatus ar_tree_from_json(const char *json, struct ArTree **out);

// # Safety
// `tree` must be null or a handle from this library that was not yet freed.
void ar_tree_free(struct ArTree *tree);

// Serializes the tree as a trace document.
//
// # Safety
// `tree` must be a live handle; `out` must be writable.
enum ArStatus ar_tree_to_json(const struct ArTree *tree, char **out);

// Per-trace statistics as a JSON object.
//
// # Safety
// `tree` must be a live handle; `out` must be writable.
enum ArStatus ar_tree_stats_json(const struct ArTree *tree, char **out);

// Text rendering of the tree, truncated to roughly `budget` characters.
//
// # Safety
// `tree` must be a live handle; `out` must be writable.
enum ArStatus ar_tree_render(const struct ArTree *tree, size_t budget, char **out);

// Number of nodes in the tree; 0 for a null handle.
//
// # Safety
// `tree` must be null or a live handle.
size_t ar_tree_round_count(const struct ArTree *tree);

// Number of chains in the tree; 0 for a null handle.
//
// # Safety
// `tree` must be null or a live handle.
size_t ar_tree_chain_count(const struct ArTree *tree);

// Runs one session on a task record with a response script (both JSON).
// Writes the resulting tree to `out_tree` and, when `out_answer` is not
// null, the final answer text. A `max_rounds` of 0 keeps the default limit.
//
// # Safety
// String arguments must be NUL-terminated; `out_tree` must be writable and
// `out_answer` null or writable.
enum ArStatus ar_solve_scripted(const char *task_json,
                                const char *script_json,
                                size_t max_rounds,
                                struct ArTree **out_tree,
                                char **out_answer);

// Generates a unique-solution logic-grid puzzle as a task record (JSON).
//
// # Safety
// `out` must be writable.
enum ArStatus ar_gen_puzzle(uint64_t seed, size_t houses, size_t attributes, char **out);

// Scores an answer text against a task record.
//
// # Safety
// Strings must be NUL-terminated; `correct` and `partial` must be writable.
enum ArStatus ar_score(const char *task_json, const char *answer, bool *correct, double *partial);

// Extracts a multiple-choice letter from free text. `options` holds
// `n_options` option strings.
//
// # Safety
// `text` and every option must be NUL-terminated; `out` must be writable.
enum ArStatus ar_extract_mcq(const char *text,
                             const char *const *options,
                             size_t n_options,
                             char *out);

// Shannon entropy in bits of a probability vector.
//
// # Safety
// `ps` must point to `n` doubles; `out` must be writable.
enum ArStatus ar_entropy(const double *ps, size_t n, double *out);

// Dot product of an action-selection row with per-action entropies.
//
// # Safety
// `row` and `entropies` must each point to `n` doubles; `out` must be writable.
enum ArStatus ar_weighted_step_entropy(const double *row,
                                       const double *entropies,
                                       size_t n,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATOMIC_REASONER_H */

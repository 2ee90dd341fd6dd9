#ifndef HRC_H
#define HRC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HrcStatus {
  HRC_STATUS_OK = 0,
  // Null pointer or unparsable argument.
  HRC_STATUS_INVALID_ARGUMENT = 1,
  // Unreadable or inconsistent input data.
  HRC_STATUS_INPUT_ERROR = 2,
  // The analysis itself failed (calibration, solver).
  HRC_STATUS_COMPUTATION_ERROR = 3,
  // A bug surfaced as a panic; the handle arguments are left untouched.
  HRC_STATUS_PANIC = 4,
} HrcStatus;

typedef struct HrcDataset HrcDataset;

typedef struct HrcReport HrcReport;

typedef struct HrcRule HrcRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static string.
const char *hrc_version(void);

// Message for the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *hrc_last_error(void);

// Reads an observation CSV. `n_items` of 0 infers the item count.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum HrcStatus hrc_dataset_load(const char *path, uintptr_t n_items, struct HrcDataset **out);

// # Safety
// `ds` must come from [`hrc_dataset_load`] and not be used afterwards.
void hrc_dataset_free(struct HrcDataset *ds);

// Number of observations.
//
// # Safety
// `ds` must be a live dataset handle.
uintptr_t hrc_dataset_len(const struct HrcDataset *ds);

// Tabulates one treatment; a null `treatment` pools all of them.
//
// # Safety
// `ds` must be a live dataset handle, `treatment` null or NUL-terminated,
// `out` valid.
enum HrcStatus hrc_dataset_rule(const struct HrcDataset *ds,
                                const char *treatment,
                                struct HrcRule **out);

// # Safety
// `rule` must come from [`hrc_dataset_rule`] and not be used afterwards.
void hrc_rule_free(struct HrcRule *rule);

// Number of items (the default excluded).
//
// # Safety
// `rule` must be a live rule handle.
uintptr_t hrc_rule_items(const struct HrcRule *rule);

// Observed share of `alternative` in the menu given by bit mask `menu`
// (bit `i` is item `i`); `alternative == items` is the default.
//
// # Safety
// `rule` must be a live rule handle and `out` valid.
enum HrcStatus hrc_rule_frequency(const struct HrcRule *rule,
                                  uintptr_t alternative,
                                  uint32_t menu,
                                  double *out);

// Calibrated attention index, consideration rule and well-definedness as a
// JSON string released with [`hrc_string_free`].
//
// # Safety
// `rule` must be a live rule handle, `link` NUL-terminated, `out` valid.
enum HrcStatus hrc_calibrate_json(const struct HrcRule *rule, const char *link, char **out);

// Runs the bootstrap test. `model` is rum, eu-rum, la, mm, rcg or fc;
// `prefs` is all, eu or crra; a negative `tau` selects the default rule.
//
// # Safety
// `rule` must be a live rule handle, strings NUL-terminated, `out` valid.
enum HrcStatus hrc_test_run(const struct HrcRule *rule,
                            const char *model,
                            const char *prefs,
                            double tau,
                            uintptr_t replications,
                            uint64_t seed,
                            struct HrcReport **out);

// # Safety
// `report` must be a live report handle.
double hrc_report_statistic(const struct HrcReport *report);

// # Safety
// `report` must be a live report handle.
double hrc_report_p_value(const struct HrcReport *report);

// Full report as JSON, released with [`hrc_string_free`]; null on failure.
//
// # Safety
// `report` must be a live report handle.
char *hrc_report_to_json(const struct HrcReport *report);

// # Safety
// `report` must come from [`hrc_test_run`] and not be used afterwards.
void hrc_report_free(struct HrcReport *report);

// # Safety
// `s` must be a string returned by this library and not be used afterwards.
void hrc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HRC_H */

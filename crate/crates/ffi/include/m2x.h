#ifndef M2X_H
#define M2X_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum M2xStatus {
  M2X_STATUS_OK = 0,
  M2X_STATUS_NULL_POINTER = 1,
  M2X_STATUS_INVALID_UTF8 = 2,
  M2X_STATUS_INVALID_JSON = 3,
  M2X_STATUS_INVALID_SCENARIO = 4,
  M2X_STATUS_SIMULATION_FAILED = 5,
  M2X_STATUS_LEDGER_INVALID = 6,
  M2X_STATUS_NO_AGREEMENT = 7,
  M2X_STATUS_PANIC = 99,
} M2xStatus;

// Metrics and ledger of a finished run.
typedef struct M2xOutcome M2xOutcome;

// Parsed scenario.
typedef struct M2xScenario M2xScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *m2x_last_error(void);

// Parses a scenario from JSON. `out` receives a handle on success.
//
// # Safety
// `json` must be a nul-terminated string and `out` a valid pointer.
enum M2xStatus m2x_scenario_from_json(const char *json, struct M2xScenario **out);

// Checks scenario invariants. `count` receives the number of violations;
// when there are any, the last error lists them one per line.
//
// # Safety
// `scenario` must come from [`m2x_scenario_from_json`]; `count` must be valid.
enum M2xStatus m2x_scenario_validate(const struct M2xScenario *scenario, size_t *count);

// # Safety
// `scenario` must be null or a handle not yet freed.
void m2x_scenario_free(struct M2xScenario *scenario);

// Runs the scenario with `seed`.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum M2xStatus m2x_run(const struct M2xScenario *scenario, uint64_t seed, struct M2xOutcome **out);

// Metrics as a JSON string, released with [`m2x_string_free`].
//
// # Safety
// `outcome` must be a live handle and `out` a valid pointer.
enum M2xStatus m2x_outcome_metrics_json(const struct M2xOutcome *outcome, char **out);

// Serialized ledger file contents, released with [`m2x_bytes_free`].
//
// # Safety
// `outcome` must be a live handle; `data` and `len` must be valid pointers.
enum M2xStatus m2x_outcome_ledger_bytes(const struct M2xOutcome *outcome,
                                        uint8_t **data,
                                        size_t *len);

// # Safety
// `outcome` must be null or a handle not yet freed.
void m2x_outcome_free(struct M2xOutcome *outcome);

// Verifies a ledger file image. On [`M2xStatus::LedgerInvalid`],
// `bad_index` receives the first invalid block index.
//
// # Safety
// `data` must point to `len` readable bytes; `bad_index` must be valid.
enum M2xStatus m2x_ledger_verify(const uint8_t *data, size_t len, uint64_t *bad_index);

// One buyer against one seller. Returns [`M2xStatus::NoAgreement`] when
// the bid is below the reserve, otherwise writes the clearing price.
//
// # Safety
// `clearing_price` must be a valid pointer.
enum M2xStatus m2x_settle_one_to_one(uint32_t bid, uint32_t reserve, uint32_t *clearing_price);

// Settles a many-to-many market. Both sides are JSON arrays of
// `[id, price]` pairs; the outcome is written as JSON.
//
// # Safety
// `buyers` and `sellers` must be nul-terminated strings; `out` must be valid.
enum M2xStatus m2x_settle_many_json(const char *buyers, const char *sellers, char **out);

// # Safety
// `s` must be null or a string returned by this library.
void m2x_string_free(char *s);

// # Safety
// `data`/`len` must be null or exactly as returned by this library.
void m2x_bytes_free(uint8_t *data, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* M2X_H */

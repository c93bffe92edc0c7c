#ifndef PEAKED_H
#define PEAKED_H

/* Generated by cbindgen from peaked-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for fallible entry points.
typedef enum PeakedStatus {
  PEAKED_OK = 0,
  // A required pointer argument was null.
  PEAKED_NULL_ARGUMENT = 1,
  // A `char*` argument was not valid UTF-8.
  PEAKED_INVALID_UTF8 = 2,
  // JSON or bitstring input failed to parse or validate.
  PEAKED_PARSE_ERROR = 3,
  // Simulation failed (qubit count too large, inconsistent circuit).
  PEAKED_SIM_ERROR = 4,
  // Forging failed (bad recipe, training stagnated).
  PEAKED_FORGE_ERROR = 5,
  // An output buffer had the wrong length.
  PEAKED_BUFFER_MISMATCH = 6,
  // A panic was caught at the boundary.
  PEAKED_INTERNAL_ERROR = 7,
} PeakedStatus;

// Opaque circuit handle.
typedef struct PeakedCircuit PeakedCircuit;

// Opaque forge-result handle (circuit plus certificate).
typedef struct PeakedForge PeakedForge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. The pointer stays
// valid until the next failing call on the same thread; do not free it.
const char *peaked_last_error(void);

// Parse a circuit from its JSON description. Returns null on failure.
//
// # Safety
// `json` must be a valid NUL-terminated C string.
struct PeakedCircuit *peaked_circuit_parse(const char *json);

// Serialize a circuit to JSON. Free the result with `peaked_string_free`.
//
// # Safety
// `circuit` must be a live handle from this library.
char *peaked_circuit_to_json(const struct PeakedCircuit *circuit);

// Number of qubits, or 0 for a null handle.
//
// # Safety
// `circuit` must be a live handle or null.
size_t peaked_circuit_n_qubits(const struct PeakedCircuit *circuit);

// Number of gates, or 0 for a null handle.
//
// # Safety
// `circuit` must be a live handle or null.
size_t peaked_circuit_gate_count(const struct PeakedCircuit *circuit);

// Release a circuit handle. Null is a no-op.
//
// # Safety
// `circuit` must be a handle from this library, released at most once.
void peaked_circuit_free(struct PeakedCircuit *circuit);

// Simulate the circuit on the all-zeros input and write the 2^n basis-state
// probabilities into `out_probs` (length `out_len`, which must equal 2^n,
// indexed with qubit 0 as the most significant bit).
//
// # Safety
// `circuit` must be a live handle; `out_probs` must point to `out_len`
// writable doubles.
enum PeakedStatus peaked_simulate(const struct PeakedCircuit *circuit,
                                  double *out_probs,
                                  size_t out_len);

// Find the most probable output bitstring and its probability. `out_bits`
// receives one 0/1 byte per qubit (length `n_bits` must equal the qubit
// count); `out_weight` receives the peak probability.
//
// # Safety
// `circuit` must be a live handle; `out_bits` must point to `n_bits`
// writable bytes; `out_weight` must be writable.
enum PeakedStatus peaked_find_peak(const struct PeakedCircuit *circuit,
                                   uint8_t *out_bits,
                                   size_t n_bits,
                                   double *out_weight);

// Probability of one specific output bitstring (`bits`: one 0/1 byte per
// qubit, length `n_bits` equal to the qubit count).
//
// # Safety
// `circuit` must be a live handle; `bits` must point to `n_bits` readable
// bytes; `out_weight` must be writable.
enum PeakedStatus peaked_peak_weight(const struct PeakedCircuit *circuit,
                                     const uint8_t *bits,
                                     size_t n_bits,
                                     double *out_weight);

// Forge an obfuscated peaked circuit from a recipe JSON document. Returns
// null on failure.
//
// # Safety
// `recipe_json` must be a valid NUL-terminated C string.
struct PeakedForge *peaked_forge(const char *recipe_json);

// Copy of the forged circuit as a fresh handle (free separately).
//
// # Safety
// `forge` must be a live handle from `peaked_forge`.
struct PeakedCircuit *peaked_forge_circuit(const struct PeakedForge *forge);

// Peak certificate (secret bitstring, peak weight, provenance) as JSON.
// Free with `peaked_string_free`.
//
// # Safety
// `forge` must be a live handle from `peaked_forge`.
char *peaked_forge_certificate_json(const struct PeakedForge *forge);

// Release a forge handle. Null is a no-op.
//
// # Safety
// `forge` must be a handle from this library, released at most once.
void peaked_forge_free(struct PeakedForge *forge);

// Release a string returned by this library. Null is a no-op.
//
// # Safety
// `text` must come from this library, released at most once.
void peaked_string_free(char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PEAKED_H */

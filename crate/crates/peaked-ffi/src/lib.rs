//! C ABI for the peaked-circuit toolkit.
//!
//! Conventions:
//! - Handles (`PeakedCircuit`, `PeakedForge`) are opaque pointers owned by the
//!   caller and released with the matching `*_free`.
//! - Fallible functions return `PeakedStatus` (0 = OK) or a null pointer; the
//!   failure detail is available from `peaked_last_error` until the next
//!   failing call on the same thread.
//! - Strings returned as `char*` are NUL-terminated UTF-8 owned by the caller
//!   and released with `peaked_string_free`.
//! - Bitstrings cross the boundary as `uint8_t` arrays of 0/1 bytes, one per
//!   qubit, qubit 0 first.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use peaked::bits::BitString;
use peaked::circuit::Circuit;
use peaked::forge::{forge_hqap, ForgeOutput, HqapRecipe};
use peaked::statevector::{find_peak, peak_weight, simulate};

/// Result codes for fallible entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakedStatus {
    PeakedOk = 0,
    /// A required pointer argument was null.
    PeakedNullArgument = 1,
    /// A `char*` argument was not valid UTF-8.
    PeakedInvalidUtf8 = 2,
    /// JSON or bitstring input failed to parse or validate.
    PeakedParseError = 3,
    /// Simulation failed (qubit count too large, inconsistent circuit).
    PeakedSimError = 4,
    /// Forging failed (bad recipe, training stagnated).
    PeakedForgeError = 5,
    /// An output buffer had the wrong length.
    PeakedBufferMismatch = 6,
    /// A panic was caught at the boundary.
    PeakedInternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn peaked_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque circuit handle.
pub struct PeakedCircuit(Circuit);

/// Opaque forge-result handle (circuit plus certificate).
pub struct PeakedForge(ForgeOutput);

fn guard<T, F: FnOnce() -> T>(fallback: T, body: F) -> T {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(value) => value,
        Err(_) => {
            set_error("internal panic at FFI boundary");
            fallback
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, PeakedStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PeakedStatus::PeakedNullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        set_error(&format!("invalid UTF-8: {e}"));
        PeakedStatus::PeakedInvalidUtf8
    })
}

fn leak_string(text: String) -> *mut c_char {
    match CString::new(text.replace('\0', " ")) {
        Ok(c) => c.into_raw(),
        Err(_) => {
            set_error("string contained interior NUL");
            std::ptr::null_mut()
        }
    }
}

/// Parse a circuit from its JSON description. Returns null on failure.
///
/// # Safety
/// `json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn peaked_circuit_parse(json: *const c_char) -> *mut PeakedCircuit {
    guard(std::ptr::null_mut(), || {
        let text = match read_str(json) {
            Ok(t) => t,
            Err(_) => return std::ptr::null_mut(),
        };
        match Circuit::from_json(text) {
            Ok(c) => Box::into_raw(Box::new(PeakedCircuit(c))),
            Err(e) => {
                set_error(&e.to_string());
                std::ptr::null_mut()
            }
        }
    })
}

/// Serialize a circuit to JSON. Free the result with `peaked_string_free`.
///
/// # Safety
/// `circuit` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn peaked_circuit_to_json(circuit: *const PeakedCircuit) -> *mut c_char {
    guard(std::ptr::null_mut(), || {
        if circuit.is_null() {
            set_error("null circuit handle");
            return std::ptr::null_mut();
        }
        leak_string((*circuit).0.to_json())
    })
}

/// Number of qubits, or 0 for a null handle.
///
/// # Safety
/// `circuit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn peaked_circuit_n_qubits(circuit: *const PeakedCircuit) -> usize {
    if circuit.is_null() {
        return 0;
    }
    (*circuit).0.n_qubits
}

/// Number of gates, or 0 for a null handle.
///
/// # Safety
/// `circuit` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn peaked_circuit_gate_count(circuit: *const PeakedCircuit) -> usize {
    if circuit.is_null() {
        return 0;
    }
    (*circuit).0.len()
}

/// Release a circuit handle. Null is a no-op.
///
/// # Safety
/// `circuit` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn peaked_circuit_free(circuit: *mut PeakedCircuit) {
    if !circuit.is_null() {
        drop(Box::from_raw(circuit));
    }
}

/// Simulate the circuit on the all-zeros input and write the 2^n basis-state
/// probabilities into `out_probs` (length `out_len`, which must equal 2^n,
/// indexed with qubit 0 as the most significant bit).
///
/// # Safety
/// `circuit` must be a live handle; `out_probs` must point to `out_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn peaked_simulate(
    circuit: *const PeakedCircuit,
    out_probs: *mut f64,
    out_len: usize,
) -> PeakedStatus {
    guard(PeakedStatus::PeakedInternalError, || {
        if circuit.is_null() || out_probs.is_null() {
            set_error("null argument");
            return PeakedStatus::PeakedNullArgument;
        }
        let c = &(*circuit).0;
        let expected = 1usize << c.n_qubits;
        if out_len != expected {
            set_error(&format!("buffer holds {out_len} values, circuit needs {expected}"));
            return PeakedStatus::PeakedBufferMismatch;
        }
        match simulate(c, &BitString::zeros(c.n_qubits)) {
            Ok(state) => {
                let probs = state.probabilities();
                std::ptr::copy_nonoverlapping(probs.as_ptr(), out_probs, expected);
                PeakedStatus::PeakedOk
            }
            Err(e) => {
                set_error(&e.to_string());
                PeakedStatus::PeakedSimError
            }
        }
    })
}

/// Find the most probable output bitstring and its probability. `out_bits`
/// receives one 0/1 byte per qubit (length `n_bits` must equal the qubit
/// count); `out_weight` receives the peak probability.
///
/// # Safety
/// `circuit` must be a live handle; `out_bits` must point to `n_bits`
/// writable bytes; `out_weight` must be writable.
#[no_mangle]
pub unsafe extern "C" fn peaked_find_peak(
    circuit: *const PeakedCircuit,
    out_bits: *mut u8,
    n_bits: usize,
    out_weight: *mut f64,
) -> PeakedStatus {
    guard(PeakedStatus::PeakedInternalError, || {
        if circuit.is_null() || out_bits.is_null() || out_weight.is_null() {
            set_error("null argument");
            return PeakedStatus::PeakedNullArgument;
        }
        let c = &(*circuit).0;
        if n_bits != c.n_qubits {
            set_error(&format!("buffer holds {n_bits} bits, circuit has {} qubits", c.n_qubits));
            return PeakedStatus::PeakedBufferMismatch;
        }
        match find_peak(c) {
            Ok((bits, weight)) => {
                for i in 0..n_bits {
                    *out_bits.add(i) = bits.bit(i);
                }
                *out_weight = weight;
                PeakedStatus::PeakedOk
            }
            Err(e) => {
                set_error(&e.to_string());
                PeakedStatus::PeakedSimError
            }
        }
    })
}

/// Probability of one specific output bitstring (`bits`: one 0/1 byte per
/// qubit, length `n_bits` equal to the qubit count).
///
/// # Safety
/// `circuit` must be a live handle; `bits` must point to `n_bits` readable
/// bytes; `out_weight` must be writable.
#[no_mangle]
pub unsafe extern "C" fn peaked_peak_weight(
    circuit: *const PeakedCircuit,
    bits: *const u8,
    n_bits: usize,
    out_weight: *mut f64,
) -> PeakedStatus {
    guard(PeakedStatus::PeakedInternalError, || {
        if circuit.is_null() || bits.is_null() || out_weight.is_null() {
            set_error("null argument");
            return PeakedStatus::PeakedNullArgument;
        }
        let c = &(*circuit).0;
        if n_bits != c.n_qubits {
            set_error(&format!("buffer holds {n_bits} bits, circuit has {} qubits", c.n_qubits));
            return PeakedStatus::PeakedBufferMismatch;
        }
        let mut s = BitString::zeros(n_bits);
        for i in 0..n_bits {
            let b = *bits.add(i);
            if b > 1 {
                set_error(&format!("bit {i} is {b}, expected 0 or 1"));
                return PeakedStatus::PeakedParseError;
            }
            s.set_bit(i, b);
        }
        match peak_weight(c, &s) {
            Ok(weight) => {
                *out_weight = weight;
                PeakedStatus::PeakedOk
            }
            Err(e) => {
                set_error(&e.to_string());
                PeakedStatus::PeakedSimError
            }
        }
    })
}

/// Forge an obfuscated peaked circuit from a recipe JSON document. Returns
/// null on failure.
///
/// # Safety
/// `recipe_json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn peaked_forge(recipe_json: *const c_char) -> *mut PeakedForge {
    guard(std::ptr::null_mut(), || {
        let text = match read_str(recipe_json) {
            Ok(t) => t,
            Err(_) => return std::ptr::null_mut(),
        };
        let recipe = match HqapRecipe::from_json(text) {
            Ok(r) => r,
            Err(e) => {
                set_error(&e.to_string());
                return std::ptr::null_mut();
            }
        };
        match forge_hqap(&recipe) {
            Ok(out) => Box::into_raw(Box::new(PeakedForge(out))),
            Err(e) => {
                set_error(&e.to_string());
                std::ptr::null_mut()
            }
        }
    })
}

/// Copy of the forged circuit as a fresh handle (free separately).
///
/// # Safety
/// `forge` must be a live handle from `peaked_forge`.
#[no_mangle]
pub unsafe extern "C" fn peaked_forge_circuit(forge: *const PeakedForge) -> *mut PeakedCircuit {
    guard(std::ptr::null_mut(), || {
        if forge.is_null() {
            set_error("null forge handle");
            return std::ptr::null_mut();
        }
        Box::into_raw(Box::new(PeakedCircuit((*forge).0.circuit.clone())))
    })
}

/// Peak certificate (secret bitstring, peak weight, provenance) as JSON.
/// Free with `peaked_string_free`.
///
/// # Safety
/// `forge` must be a live handle from `peaked_forge`.
#[no_mangle]
pub unsafe extern "C" fn peaked_forge_certificate_json(forge: *const PeakedForge) -> *mut c_char {
    guard(std::ptr::null_mut(), || {
        if forge.is_null() {
            set_error("null forge handle");
            return std::ptr::null_mut();
        }
        leak_string((*forge).0.certificate.to_json_pretty())
    })
}

/// Release a forge handle. Null is a no-op.
///
/// # Safety
/// `forge` must be a handle from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn peaked_forge_free(forge: *mut PeakedForge) {
    if !forge.is_null() {
        drop(Box::from_raw(forge));
    }
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `text` must come from this library, released at most once.
#[no_mangle]
pub unsafe extern "C" fn peaked_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

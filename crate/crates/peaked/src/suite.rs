//! Attack orchestration: run a selection of attacks against one circuit,
//! aggregate recovery fractions, and persist machine-readable records.
//!
//! Attacks run as independent jobs; the merged report is ordered by attack
//! tag, so identical configurations produce byte-identical reports except
//! for wall-clock fields, which all live under keys named `timing` or
//! `seconds` and can be stripped with [`strip_volatile`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

use crate::attack::{recovery_fraction, statevector_attack};
use crate::bits::BitString;
use crate::circuit::Circuit;
use crate::mpo::middle_mpo_attack;
use crate::mps::mps_attack;
use crate::pps::{default_delta_schedule, pps_convergence_scan, pps_crack, PpsConfig};
use crate::ttn::ttn_attack;

/// The attack tags the suite understands, in report order.
pub const KNOWN_ATTACKS: [&str; 5] = ["mpo", "mps", "pps", "sv", "tnsbp"];

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown attack tag {0:?} (known: {KNOWN_ATTACKS:?})")]
    UnknownAttack(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Budgets and selection for one suite run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Attack tags to run, any subset of [`KNOWN_ATTACKS`].
    pub attacks: Vec<String>,
    pub seed: u64,
    /// Bond cap for the chain attack.
    pub mps_chi: usize,
    /// Reorder qubits by bandwidth reduction before the chain attack.
    pub mps_reorder: bool,
    /// Bond cap for the tree attack.
    pub tns_chi: usize,
    /// Bond cap for the middle-operator attack.
    pub mpo_chi: usize,
    /// Path-propagation budget and crack threshold.
    pub pps: PpsConfig,
    /// Coefficient-truncation schedule for the path attack.
    pub pps_schedule: Vec<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            attacks: KNOWN_ATTACKS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            mps_chi: 64,
            mps_reorder: true,
            tns_chi: 64,
            mpo_chi: 64,
            pps: PpsConfig { cap: 1 << 20, ..PpsConfig::default() },
            pps_schedule: default_delta_schedule(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<(), SuiteError> {
        for tag in &self.attacks {
            if !KNOWN_ATTACKS.contains(&tag.as_str()) {
                return Err(SuiteError::UnknownAttack(tag.clone()));
            }
        }
        Ok(())
    }

    pub fn sha256(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialization");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// One attack's outcome. `detail` is attack-specific; failures are recorded
/// here rather than aborting the suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attack: String,
    pub candidate: Option<BitString>,
    /// Fraction of correct bits; present only when a certificate was given.
    pub recovery: Option<f64>,
    /// True when `recovery == 1`.
    pub cracked: bool,
    pub error: Option<String>,
    pub detail: Value,
    /// Wall-clock payload; excluded from determinism comparisons.
    pub timing: Value,
}

/// Consolidated result of one suite run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    /// Code version stamped into every report.
    pub version: String,
    pub n_qubits: usize,
    pub gate_count: usize,
    pub seed: u64,
    pub config_sha256: String,
    pub circuit_sha256: String,
    pub certificate: Option<BitString>,
    /// Records ordered by attack tag.
    pub attacks: Vec<AttackRecord>,
    /// True when any attack recovered every certificate bit.
    pub any_cracked: bool,
    /// Wall-clock payload; excluded from determinism comparisons.
    pub timing: Value,
}

/// Process exit code for a finished run: failure only when a certificate
/// was supplied and no attack fully recovered it.
pub fn exit_code(report: &SuiteReport) -> i32 {
    if report.certificate.is_some() && !report.any_cracked {
        1
    } else {
        0
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn finish_record(
    attack: &str,
    started: Instant,
    outcome: Result<(Option<BitString>, Value), String>,
    cert: Option<&BitString>,
) -> AttackRecord {
    let (candidate, detail, error) = match outcome {
        Ok((candidate, detail)) => (candidate, detail, None),
        Err(message) => (None, Value::Null, Some(message)),
    };
    let recovery = match (&candidate, cert) {
        (Some(c), Some(s)) => Some(recovery_fraction(c, s)),
        _ => None,
    };
    AttackRecord {
        attack: attack.to_string(),
        candidate,
        recovery,
        cracked: recovery == Some(1.0),
        error,
        detail,
        timing: json!({ "seconds": started.elapsed().as_secs_f64() }),
    }
}

fn run_one_attack(tag: &str, c: &Circuit, cert: Option<&BitString>, cfg: &SuiteConfig) -> AttackRecord {
    let started = Instant::now();
    let outcome: Result<(Option<BitString>, Value), String> = match tag {
        "sv" => statevector_attack(c, cert)
            .map(|r| (Some(r.candidate.clone()), json!(r)))
            .map_err(|e| e.to_string()),
        "mps" => mps_attack(c, cfg.mps_chi, cfg.mps_reorder)
            .map(|(candidate, m)| {
                let detail = json!({
                    "chi": cfg.mps_chi,
                    "reorder": cfg.mps_reorder,
                    "max_bond": m.max_bond_seen(),
                    "discarded_weight": m.discarded_weight(),
                });
                (Some(candidate), detail)
            })
            .map_err(|e| e.to_string()),
        "mpo" => middle_mpo_attack(c, c.len() / 2, cfg.mpo_chi)
            .map(|report| (Some(report.candidate.clone()), json!(report)))
            .map_err(|e| e.to_string()),
        "tnsbp" => ttn_attack(c, cfg.tns_chi, cert)
            .map(|report| {
                let mut detail = json!(report);
                detail["topology"] = json!("tree");
                (Some(report.best_candidate.clone()), detail)
            })
            .map_err(|e| e.to_string()),
        "pps" => run_pps(c, cert, cfg),
        other => Err(format!("unknown attack tag {other:?}")),
    };
    finish_record(tag, started, outcome, cert)
}

/// Path-propagation runner: with a certificate this produces the full crack
/// profile; without one it scans every qubit and reads candidate bits off
/// the converged (or final surviving) estimates.
fn run_pps(
    c: &Circuit,
    cert: Option<&BitString>,
    cfg: &SuiteConfig,
) -> Result<(Option<BitString>, Value), String> {
    if let Some(s) = cert {
        let profile = pps_crack(c, s, &cfg.pps_schedule, &cfg.pps).map_err(|e| e.to_string())?;
        let bits: Vec<u8> = (0..c.n_qubits)
            .map(|q| profile.bits[q].unwrap_or(0))
            .collect();
        let candidate = BitString::from_bits(bits);
        return Ok((Some(candidate), json!(profile)));
    }
    let mut reports = Vec::with_capacity(c.n_qubits);
    let mut bits = Vec::with_capacity(c.n_qubits);
    for q in 0..c.n_qubits {
        let report = pps_convergence_scan(c, q, &cfg.pps_schedule, None, &cfg.pps)
            .map_err(|e| e.to_string())?;
        let bit = report.bit.unwrap_or_else(|| {
            report
                .entries
                .iter()
                .rev()
                .find_map(|e| e.estimate)
                .map(|est| u8::from(est < 0.0))
                .unwrap_or(0)
        });
        bits.push(bit);
        reports.push(report);
    }
    Ok((Some(BitString::from_bits(bits)), json!({ "qubits": reports })))
}

/// Run the selected attacks as independent parallel jobs and merge the
/// records in tag order.
pub fn run_attack_suite(
    c: &Circuit,
    cert: Option<&BitString>,
    cfg: &SuiteConfig,
) -> Result<SuiteReport, SuiteError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut tags = cfg.attacks.clone();
    tags.sort();
    tags.dedup();
    let mut attacks: Vec<AttackRecord> = tags
        .par_iter()
        .map(|tag| run_one_attack(tag, c, cert, cfg))
        .collect();
    attacks.sort_by(|a, b| a.attack.cmp(&b.attack));
    let any_cracked = attacks.iter().any(|r| r.cracked);
    Ok(SuiteReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        n_qubits: c.n_qubits,
        gate_count: c.len(),
        seed: cfg.seed,
        config_sha256: cfg.sha256(),
        circuit_sha256: sha256_hex(&c.to_json()),
        certificate: cert.cloned(),
        attacks,
        any_cracked,
        timing: json!({ "seconds": started.elapsed().as_secs_f64() }),
    })
}

/// Remove every object entry named `timing` or `seconds`, recursively.
/// These are the only fields that may differ between identical runs.
pub fn strip_volatile(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|key, _| key != "timing" && key != "seconds");
            for v in map.values_mut() {
                strip_volatile(v);
            }
        }
        Value::Array(items) => {
            for v in items {
                strip_volatile(v);
            }
        }
        _ => {}
    }
}

/// The deterministic portion of a report as canonical JSON.
pub fn deterministic_json<T: Serialize>(value: &T) -> Result<String, SuiteError> {
    let mut v = serde_json::to_value(value)?;
    strip_volatile(&mut v);
    Ok(serde_json::to_string(&v)?)
}

/// Append one JSON line per attack record (plus run metadata) to `path`.
pub fn append_jsonl(path: &Path, report: &SuiteReport) -> Result<(), SuiteError> {
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for record in &report.attacks {
        let line = json!({
            "version": report.version,
            "seed": report.seed,
            "config_sha256": report.config_sha256,
            "circuit_sha256": report.circuit_sha256,
            "n_qubits": report.n_qubits,
            "gate_count": report.gate_count,
            "record": record,
        });
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{forge_hqap, HqapRecipe, PStructure, TrainConfig};

    fn forged_ten_qubit() -> (Circuit, BitString) {
        static FORGED: std::sync::OnceLock<(Circuit, BitString)> = std::sync::OnceLock::new();
        FORGED.get_or_init(forge_ten_qubit_uncached).clone()
    }

    fn forge_ten_qubit_uncached() -> (Circuit, BitString) {
        let recipe = HqapRecipe {
            n_qubits: 10,
            r_rzz: 10,
            p_rzz: 10,
            u_rzz: 12,
            p_structure: PStructure::Random,
            window_gates: 6,
            window_qubits: 3,
            sweep_rounds: 1,
            masks: 1,
            swaps: 3,
            seed: 424242,
            train: TrainConfig { delta_target: 0.3, delta_min: 0.2, ..TrainConfig::default() },
            ..HqapRecipe::default()
        };
        let out = forge_hqap(&recipe).expect("forge succeeds");
        (out.circuit, out.certificate.bitstring)
    }

    #[test]
    fn forged_circuit_with_certificate_cracks() {
        let (c, s) = forged_ten_qubit();
        let cfg = SuiteConfig {
            pps: PpsConfig { cap: 1 << 14, ..PpsConfig::default() },
            mpo_chi: 16,
            ..SuiteConfig::default()
        };
        let report = run_attack_suite(&c, Some(&s), &cfg).unwrap();
        assert_eq!(report.attacks.len(), 5);
        let tags: Vec<&str> = report.attacks.iter().map(|r| r.attack.as_str()).collect();
        assert_eq!(tags, vec!["mpo", "mps", "pps", "sv", "tnsbp"]);

        let sv = report.attacks.iter().find(|r| r.attack == "sv").unwrap();
        assert_eq!(sv.recovery, Some(1.0), "oracle attack must crack a forged circuit");
        assert!(sv.cracked);
        assert!(report.any_cracked);
        assert_eq!(exit_code(&report), 0);
        assert_eq!(report.n_qubits, 10);
        assert!(!report.config_sha256.is_empty());
    }

    #[test]
    fn without_certificate_only_candidates() {
        let (c, _) = forged_ten_qubit();
        let cfg = SuiteConfig {
            attacks: vec!["sv".to_string(), "mps".to_string(), "tnsbp".to_string()],
            ..SuiteConfig::default()
        };
        let report = run_attack_suite(&c, None, &cfg).unwrap();
        for record in &report.attacks {
            assert!(record.candidate.is_some(), "{} lacks a candidate", record.attack);
            assert!(record.recovery.is_none());
            assert!(!record.cracked);
        }
        assert!(!report.any_cracked);
        assert_eq!(exit_code(&report), 0, "no certificate, no failure signal");
    }

    #[test]
    fn unknown_attack_tag_is_fatal() {
        let cfg = SuiteConfig {
            attacks: vec!["sv".to_string(), "warp".to_string()],
            ..SuiteConfig::default()
        };
        let c = Circuit::new(4);
        assert!(matches!(
            run_attack_suite(&c, None, &cfg),
            Err(SuiteError::UnknownAttack(tag)) if tag == "warp"
        ));
    }

    #[test]
    fn per_attack_failures_are_recorded_not_fatal() {
        // 3 qubits: the tree attack needs at least 4 and must fail alone
        let (c, s) = {
            let mut c = Circuit::new(3);
            c.push(crate::circuit::Gate::X { q: 1 });
            (c, BitString::parse("010").unwrap())
        };
        let cfg = SuiteConfig {
            attacks: vec!["sv".to_string(), "tnsbp".to_string()],
            ..SuiteConfig::default()
        };
        let report = run_attack_suite(&c, Some(&s), &cfg).unwrap();
        let sv = report.attacks.iter().find(|r| r.attack == "sv").unwrap();
        let tns = report.attacks.iter().find(|r| r.attack == "tnsbp").unwrap();
        assert!(sv.cracked);
        assert!(tns.error.is_some());
        assert!(tns.candidate.is_none());
        assert!(report.any_cracked);
    }

    #[test]
    fn reports_are_deterministic_modulo_timing() {
        let (c, s) = forged_ten_qubit();
        let cfg = SuiteConfig {
            attacks: vec!["mps".to_string(), "sv".to_string(), "mpo".to_string()],
            mpo_chi: 16,
            ..SuiteConfig::default()
        };
        let a = run_attack_suite(&c, Some(&s), &cfg).unwrap();
        let b = run_attack_suite(&c, Some(&s), &cfg).unwrap();
        assert_eq!(deterministic_json(&a).unwrap(), deterministic_json(&b).unwrap());

        // volatile fields really are stripped
        let stripped = deterministic_json(&a).unwrap();
        assert!(!stripped.contains("seconds"));
        assert!(!stripped.contains("timing"));
        // but are present in the full report
        assert!(serde_json::to_string(&a).unwrap().contains("seconds"));
    }

    #[test]
    fn jsonl_appends_one_line_per_attack() {
        let (c, s) = forged_ten_qubit();
        let cfg = SuiteConfig {
            attacks: vec!["sv".to_string(), "mpo".to_string()],
            mpo_chi: 16,
            ..SuiteConfig::default()
        };
        let report = run_attack_suite(&c, Some(&s), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        append_jsonl(&path, &report).unwrap();
        append_jsonl(&path, &report).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        for line in lines {
            let v: Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
            assert!(v["record"]["attack"].is_string());
        }
    }
}

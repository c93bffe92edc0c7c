//! Command-line surface for the peaked-circuit toolkit.
//!
//! Verbs: `forge`, `attack`, `fit`, `extrapolate`, `pcbs`, `crypt`,
//! `report`. All outputs are JSON (single documents) or JSONL (run logs);
//! fit tables can additionally be exported as CSV. Wall-clock numbers are
//! confined to `timing`/`seconds` fields so identical runs produce
//! byte-identical records once those are stripped.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};

use peaked::attack::majority_vote_attack;
use peaked::bits::BitString;
use peaked::circuit::Circuit;
use peaked::crypto::{decrypt, encrypt, CiphertextBlock, CryptoError, DecryptionConfig, Key};
use peaked::fits::{
    extrapolate_chi_break, fit_r_vs_logchi, fit_time_cubic, predicted_gate_time, t_break,
    FitModel, FitResult,
};
use peaked::forge::{forge_hqap, HqapRecipe, PeakCertificate};
use peaked::pcbs::{
    build_pcbs_gadget, pcbs_decide, pcbs_thresholds, Decision, PcbsInstance, RegisterPartition,
    VerifierSpec,
};
use peaked::pps::PpsConfig;
use peaked::suite::{
    append_jsonl, deterministic_json, exit_code, run_attack_suite, strip_volatile, SuiteConfig,
};

#[derive(Parser)]
#[command(name = "peaked", version, about = "Forge and attack peaked quantum circuits")]
struct Cli {
    /// Base seed for seeded stages (forge override, decryption sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the main JSON output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forge an obfuscated peaked circuit from a recipe.
    Forge(ForgeArgs),
    /// Run classical attacks against a circuit (or a shots file).
    Attack(AttackArgs),
    /// Fit a recovery or timing model to sampled points.
    Fit(FitArgs),
    /// Extrapolate the bond dimension (and optionally time) to full recovery.
    Extrapolate(ExtrapolateArgs),
    /// Build or check peak-detection gadget instances.
    #[command(subcommand)]
    Pcbs(PcbsCommand),
    /// Encrypt or decrypt with forged peaked circuits.
    #[command(subcommand)]
    Crypt(CryptCommand),
    /// Summarize a JSONL run log.
    Report(ReportArgs),
}

#[derive(Args)]
struct ForgeArgs {
    /// Recipe JSON file.
    #[arg(long)]
    recipe: PathBuf,
    /// Write the forged circuit JSON here.
    #[arg(long)]
    circuit_out: Option<PathBuf>,
    /// Write the peak certificate JSON here.
    #[arg(long)]
    cert_out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Circuit JSON file (required unless --shots is given with --n-qubits).
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Peak certificate JSON; enables recovery scoring and the exit signal.
    #[arg(long)]
    cert: Option<PathBuf>,
    /// Secret bitstring literal; alternative to --cert.
    #[arg(long)]
    secret: Option<String>,
    /// Plain-text shots file, one bitstring per line: runs the majority-vote
    /// readout instead of the simulation suite.
    #[arg(long)]
    shots: Option<PathBuf>,
    /// Comma-separated attack tags (sv, mps, pps, tnsbp, mpo).
    #[arg(long, default_value = "sv,mps,pps,tnsbp,mpo")]
    attacks: String,
    #[arg(long, default_value_t = 64)]
    mps_chi: usize,
    /// Disable bandwidth reordering before the chain attack.
    #[arg(long)]
    no_reorder: bool,
    #[arg(long, default_value_t = 64)]
    tns_chi: usize,
    #[arg(long, default_value_t = 64)]
    mpo_chi: usize,
    /// Path-propagation term cap.
    #[arg(long, default_value_t = 1 << 20)]
    pps_cap: usize,
    /// Path-propagation crack threshold.
    #[arg(long, default_value_t = 0.1)]
    pps_f_min: f64,
    /// Append per-attack records to this JSONL run log.
    #[arg(long)]
    jsonl: Option<PathBuf>,
    /// Emit the deterministic portion only (volatile timing stripped).
    #[arg(long)]
    strip_timing: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Model: "linear-logchi" (recovery vs bond) or "cubic-time" (seconds per gate vs bond).
    #[arg(long)]
    model: String,
    /// JSON file: {"points": [[x, y], ...]}.
    #[arg(long)]
    input: PathBuf,
    /// Export the fit table (x, y, predicted) as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExtrapolateArgs {
    /// Accepted linear-logchi fit JSON (from `peaked fit`).
    #[arg(long)]
    fit: PathBuf,
    /// Qubit count, for the saturation bond dimension.
    #[arg(long)]
    n_qubits: usize,
    /// Optional cubic timing fit JSON: converts the break point to seconds.
    #[arg(long)]
    timing_fit: Option<PathBuf>,
    /// Gate count used for the time conversion.
    #[arg(long)]
    gate_count: Option<usize>,
}

#[derive(Subcommand)]
enum PcbsCommand {
    /// Wrap a verifier circuit into a peak-detection instance.
    Build(PcbsBuildArgs),
    /// Enumerate canonical witnesses of an instance and decide.
    Check(PcbsCheckArgs),
}

#[derive(Args)]
struct PcbsBuildArgs {
    /// Verifier circuit JSON.
    #[arg(long)]
    circuit: PathBuf,
    /// Register partition sidecar JSON: {"y": [..], "a": [..], "b": k}.
    #[arg(long)]
    registers: PathBuf,
    /// Rotation angle in (0, pi/2).
    #[arg(long)]
    phi: f64,
    /// Also write the bare gadget circuit JSON here.
    #[arg(long)]
    circuit_out: Option<PathBuf>,
}

#[derive(Args)]
struct PcbsCheckArgs {
    /// Instance JSON produced by `pcbs build`.
    #[arg(long)]
    instance: PathBuf,
    /// Maximum number of canonical witnesses to enumerate.
    #[arg(long, default_value_t = 1 << 20)]
    limit: usize,
    /// Override the YES threshold.
    #[arg(long)]
    delta_yes: Option<f64>,
    /// Override the NO threshold.
    #[arg(long)]
    delta_no: Option<f64>,
}

#[derive(Subcommand)]
enum CryptCommand {
    Encrypt(EncryptArgs),
    Decrypt(DecryptArgs),
}

#[derive(Args)]
struct EncryptArgs {
    /// Key file: hex text, at least 128 bits.
    #[arg(long)]
    key_file: PathBuf,
    /// Block recipe JSON (target and seed are overridden per block).
    #[arg(long)]
    recipe: PathBuf,
    /// Plaintext input file (raw bytes).
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct DecryptArgs {
    /// Key file: hex text, at least 128 bits.
    #[arg(long)]
    key_file: PathBuf,
    /// Ciphertext container JSON (array of {desc, ctr}).
    #[arg(long = "in")]
    input: PathBuf,
    /// Shot budget per block.
    #[arg(long)]
    shots: usize,
    /// Acceptance threshold on the mode frequency.
    #[arg(long)]
    delta_min: f64,
    /// Write the recovered plaintext here (stdout JSON otherwise).
    #[arg(long)]
    plaintext_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSONL run log produced by `peaked attack --jsonl`.
    #[arg(long)]
    jsonl: PathBuf,
}

/// On-disk form of a gadget instance: metadata plus the circuit as JSON text.
#[derive(Serialize, Deserialize)]
struct PcbsInstanceFile {
    phi: f64,
    marker: usize,
    guard: usize,
    delta_yes: f64,
    delta_no: f64,
    gap: f64,
    registers: RegisterPartition,
    n_qubits: usize,
    gate_count: usize,
    circuit: String,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool built before any parallel work");
    }
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Forge(args) => cmd_forge(&cli.out, cli.seed, args),
        Command::Attack(args) => cmd_attack(&cli.out, cli.seed, args),
        Command::Fit(args) => cmd_fit(&cli.out, args),
        Command::Extrapolate(args) => cmd_extrapolate(&cli.out, args),
        Command::Pcbs(PcbsCommand::Build(args)) => cmd_pcbs_build(&cli.out, args),
        Command::Pcbs(PcbsCommand::Check(args)) => cmd_pcbs_check(&cli.out, args),
        Command::Crypt(CryptCommand::Encrypt(args)) => cmd_encrypt(&cli.out, cli.seed, args),
        Command::Crypt(CryptCommand::Decrypt(args)) => cmd_decrypt(&cli.out, cli.seed, args),
        Command::Report(args) => cmd_report(&cli.out, args),
    }
}

fn cmd_forge(out: &Option<PathBuf>, seed: Option<u64>, args: ForgeArgs) -> Result<i32> {
    let mut recipe = HqapRecipe::from_json(&read_to_string(&args.recipe)?)?;
    if let Some(seed) = seed {
        recipe.seed = seed;
    }
    let forged = forge_hqap(&recipe)?;
    if let Some(path) = &args.circuit_out {
        std::fs::write(path, forged.circuit.to_json_pretty())?;
    }
    if let Some(path) = &args.cert_out {
        std::fs::write(path, forged.certificate.to_json_pretty())?;
    }
    let summary = json!({
        "n_qubits": forged.circuit.n_qubits,
        "gate_count": forged.circuit.len(),
        "peak": forged.certificate.bitstring,
        "delta": forged.certificate.delta,
        "stage_deltas": forged.certificate.stage_deltas,
        "seed": recipe.seed,
        "recipe_sha256": recipe.sha256(),
        "train_iterations": forged.train_iterations,
        "train_restarts": forged.train_restarts,
    });
    write_output(out, &serde_json::to_string_pretty(&summary)?)?;
    Ok(0)
}

fn load_secret(args: &AttackArgs) -> Result<Option<BitString>> {
    if let Some(path) = &args.cert {
        let cert = PeakCertificate::from_json(&read_to_string(path)?)?;
        return Ok(Some(cert.bitstring));
    }
    if let Some(text) = &args.secret {
        return Ok(Some(BitString::parse(text)?));
    }
    Ok(None)
}

fn cmd_attack(out: &Option<PathBuf>, seed: Option<u64>, args: AttackArgs) -> Result<i32> {
    let secret = load_secret(&args)?;

    // shots-file path: majority vote readout, no simulation
    if let Some(shots_path) = &args.shots {
        let text = read_to_string(shots_path)?;
        let samples: Vec<BitString> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(BitString::parse)
            .collect::<Result<_, _>>()?;
        let result = majority_vote_attack(&samples, secret.as_ref())?;
        write_output(out, &serde_json::to_string_pretty(&result)?)?;
        let cracked = result.recovery == Some(1.0);
        return Ok(if secret.is_some() && !cracked { 1 } else { 0 });
    }

    let circuit_path = args
        .circuit
        .as_ref()
        .context("--circuit is required unless --shots is given")?;
    let circuit = Circuit::from_json(&read_to_string(circuit_path)?)?;
    let cfg = SuiteConfig {
        attacks: args.attacks.split(',').map(|s| s.trim().to_string()).collect(),
        seed: seed.unwrap_or(0),
        mps_chi: args.mps_chi,
        mps_reorder: !args.no_reorder,
        tns_chi: args.tns_chi,
        mpo_chi: args.mpo_chi,
        pps: PpsConfig { cap: args.pps_cap, f_min: args.pps_f_min, ..PpsConfig::default() },
        ..SuiteConfig::default()
    };
    let report = run_attack_suite(&circuit, secret.as_ref(), &cfg)?;
    if let Some(path) = &args.jsonl {
        append_jsonl(path, &report)?;
    }
    let text = if args.strip_timing {
        deterministic_json(&report)?
    } else {
        serde_json::to_string_pretty(&report)?
    };
    write_output(out, &text)?;
    Ok(exit_code(&report))
}

#[derive(Deserialize)]
struct FitInput {
    points: Vec<(f64, f64)>,
}

fn cmd_fit(out: &Option<PathBuf>, args: FitArgs) -> Result<i32> {
    let input: FitInput = serde_json::from_str(&read_to_string(&args.input)?)?;
    let fit = match args.model.as_str() {
        "linear-logchi" => {
            let points: Vec<(usize, f64)> =
                input.points.iter().map(|&(x, y)| (x as usize, y)).collect();
            fit_r_vs_logchi(&points)?
        }
        "cubic-time" => {
            let points: Vec<(usize, f64)> =
                input.points.iter().map(|&(x, y)| (x as usize, y)).collect();
            fit_time_cubic(&points)?
        }
        other => bail!("unknown model {other:?} (use linear-logchi or cubic-time)"),
    };
    if let Some(csv_path) = &args.csv {
        let mut table = String::from("x,y,predicted\n");
        for &(x, y) in &input.points {
            let predicted = match fit.model {
                FitModel::LinearLogChi => fit.intercept() + fit.slope() * (x.max(1.0)).log2(),
                FitModel::CubicTime => predicted_gate_time(&fit, x),
            };
            table.push_str(&format!("{x},{y},{predicted}\n"));
        }
        std::fs::write(csv_path, table)?;
    }
    write_output(out, &serde_json::to_string_pretty(&fit)?)?;
    Ok(if fit.accepted { 0 } else { 1 })
}

fn cmd_extrapolate(out: &Option<PathBuf>, args: ExtrapolateArgs) -> Result<i32> {
    let fit: FitResult = serde_json::from_str(&read_to_string(&args.fit)?)?;
    let report = extrapolate_chi_break(&fit, args.n_qubits)?;
    let mut doc = serde_json::to_value(&report)?;
    if let Some(timing_path) = &args.timing_fit {
        let timing: FitResult = serde_json::from_str(&read_to_string(timing_path)?)?;
        let gates = args
            .gate_count
            .context("--gate-count is required with --timing-fit")?;
        doc["t_break_seconds"] = json!(t_break(&timing, gates, report.chi_break_hat));
        doc["t_break_gate_count"] = json!(gates);
    }
    write_output(out, &serde_json::to_string_pretty(&doc)?)?;
    Ok(0)
}

fn cmd_pcbs_build(out: &Option<PathBuf>, args: PcbsBuildArgs) -> Result<i32> {
    let circuit = Circuit::from_json(&read_to_string(&args.circuit)?)?;
    let registers: RegisterPartition = serde_json::from_str(&read_to_string(&args.registers)?)?;
    let verifier = VerifierSpec { circuit, registers };
    let instance = build_pcbs_gadget(&verifier, args.phi)?;
    if let Some(path) = &args.circuit_out {
        std::fs::write(path, instance.circuit.to_json_pretty())?;
    }
    let file = PcbsInstanceFile {
        phi: instance.phi,
        marker: instance.marker,
        guard: instance.guard,
        delta_yes: instance.delta_yes,
        delta_no: instance.delta_no,
        gap: instance.gap,
        registers: instance.registers.clone(),
        n_qubits: instance.circuit.n_qubits,
        gate_count: instance.circuit.len(),
        circuit: instance.circuit.to_json(),
    };
    write_output(out, &serde_json::to_string_pretty(&file)?)?;
    Ok(0)
}

fn cmd_pcbs_check(out: &Option<PathBuf>, args: PcbsCheckArgs) -> Result<i32> {
    let file: PcbsInstanceFile = serde_json::from_str(&read_to_string(&args.instance)?)?;
    let instance = PcbsInstance {
        circuit: Circuit::from_json(&file.circuit)?,
        phi: file.phi,
        registers: file.registers,
        marker: file.marker,
        guard: file.guard,
        delta_yes: file.delta_yes,
        delta_no: file.delta_no,
        gap: file.gap,
    };
    // allow threshold overrides, e.g. from a custom completeness/soundness pair
    let delta_yes = args.delta_yes.unwrap_or(instance.delta_yes);
    let delta_no = args.delta_no.unwrap_or(instance.delta_no);
    if args.delta_yes.is_some() || args.delta_no.is_some() {
        // sanity-check custom thresholds against the angle
        let _ = pcbs_thresholds(2.0 / 3.0, 1.0 / 3.0, instance.phi)?;
    }
    let report = pcbs_decide(&instance, delta_yes, delta_no, args.limit)?;
    write_output(out, &serde_json::to_string_pretty(&report)?)?;
    Ok(match report.decision {
        Decision::Yes => 0,
        Decision::No => 1,
        Decision::Unknown => 3,
    })
}

fn cmd_encrypt(out: &Option<PathBuf>, seed: Option<u64>, args: EncryptArgs) -> Result<i32> {
    let key = Key::from_hex(&read_to_string(&args.key_file)?)?;
    let recipe = HqapRecipe::from_json(&read_to_string(&args.recipe)?)?;
    let message = std::fs::read(&args.input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
    let blocks = encrypt(&key, &message, &recipe, &mut rng)?;
    write_output(out, &serde_json::to_string_pretty(&blocks)?)?;
    Ok(0)
}

fn cmd_decrypt(out: &Option<PathBuf>, seed: Option<u64>, args: DecryptArgs) -> Result<i32> {
    let key = Key::from_hex(&read_to_string(&args.key_file)?)?;
    let blocks: Vec<CiphertextBlock> = serde_json::from_str(&read_to_string(&args.input)?)?;
    let cfg = DecryptionConfig { n_shots: args.shots, delta_min: args.delta_min };
    match decrypt(&key, &blocks, &cfg, seed.unwrap_or(0)) {
        Ok((message, report)) => {
            if let Some(path) = &args.plaintext_out {
                std::fs::write(path, &message)?;
            }
            let doc = json!({
                "accepted": true,
                "bytes": message.len(),
                "plaintext_hex": hex::encode(&message),
                "blocks": report,
            });
            write_output(out, &serde_json::to_string_pretty(&doc)?)?;
            Ok(0)
        }
        Err(CryptoError::BlocksRejected { rejected, report }) => {
            let doc = json!({
                "accepted": false,
                "rejected_blocks": rejected,
                "blocks": report,
            });
            write_output(out, &serde_json::to_string_pretty(&doc)?)?;
            Ok(1)
        }
        Err(other) => Err(other.into()),
    }
}

fn cmd_report(out: &Option<PathBuf>, args: ReportArgs) -> Result<i32> {
    let text = read_to_string(&args.jsonl)?;
    let mut by_key: std::collections::BTreeMap<(String, String), (usize, usize, Option<f64>)> =
        std::collections::BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: serde_json::Value = serde_json::from_str(line)?;
        strip_volatile(&mut v);
        let circuit = v["circuit_sha256"].as_str().unwrap_or("?").to_string();
        let attack = v["record"]["attack"].as_str().unwrap_or("?").to_string();
        let recovery = v["record"]["recovery"].as_f64();
        let cracked = v["record"]["cracked"].as_bool().unwrap_or(false);
        let entry = by_key.entry((circuit, attack)).or_insert((0, 0, None));
        entry.0 += 1;
        entry.1 += usize::from(cracked);
        entry.2 = match (entry.2, recovery) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (None, r) => r,
            (r, None) => r,
        };
    }
    let rows: Vec<_> = by_key
        .into_iter()
        .map(|((circuit, attack), (runs, cracked, best))| {
            json!({
                "circuit_sha256": circuit,
                "attack": attack,
                "runs": runs,
                "cracked_runs": cracked,
                "best_recovery": best,
            })
        })
        .collect();
    write_output(out, &serde_json::to_string_pretty(&json!({ "rows": rows }))?)?;
    Ok(0)
}

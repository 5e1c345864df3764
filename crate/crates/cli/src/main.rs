//! `smr` - command-line front door for the ride-monitoring simulator.
//!
//! Subcommands: `run` a scenario under one strategy, `compare` strategies
//! side by side, replay labeled pairs with `metrics`, and poke envelope
//! sealing/opening with `vault seal|open`. Exit code is 0 on success and
//! nonzero with a named error (`error[Name]: ...` on stderr) otherwise.

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use smr_core::agent::AgentError;
use smr_core::detector::DetectionClass;
use smr_core::dss::DssError;
use smr_core::metrics::{ConfusionMatrix, MetricsError};
use smr_core::quantkit::QuantError;
use smr_core::session::SessionId;
use smr_core::simcore::{
    compare_strategies, run_session_with, DeviceProfile, Scenario, SessionReport, SimError,
    SimOptions, Strategy,
};
use smr_core::transport::TransportError;
use smr_core::vault::{open_incident, seal_incident, EncryptionKey, IncidentMeta, VaultError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "smr", version, about = "Ride-monitoring pipeline simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Onload,
    Offload,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Driver,
    Passenger,
    Violation,
}

impl From<ClassArg> for DetectionClass {
    fn from(value: ClassArg) -> Self {
        match value {
            ClassArg::Driver => DetectionClass::Driver,
            ClassArg::Passenger => DetectionClass::Passenger,
            ClassArg::Violation => DetectionClass::Violation,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one session and emit its report files.
    Run {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Device preset: default, s10plus, or lgv30.
        #[arg(long, default_value = "default")]
        device: String,
        /// Output directory for report files and simulated stores.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run onload vs offload (per device preset) and tabulate.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Device presets to include; repeatable.
        #[arg(long = "device")]
        devices: Vec<String>,
    },
    /// Replay a labeled-pair file into a confusion matrix.
    Metrics {
        /// CSV of `predicted,actual` boolean pairs, one per line.
        #[arg(long)]
        labels: PathBuf,
    },
    /// Envelope debugging tools.
    Vault {
        #[command(subcommand)]
        command: VaultCommand,
    },
}

#[derive(Subcommand)]
enum VaultCommand {
    /// Encrypt a payload file into an incident envelope.
    Seal {
        /// File holding the plaintext payload.
        #[arg(long)]
        payload: PathBuf,
        /// Key bytes as hex.
        #[arg(long)]
        key: String,
        #[arg(long, default_value_t = 1)]
        key_id: u8,
        /// Session id as 32 hex characters.
        #[arg(long)]
        session: String,
        #[arg(long)]
        timestamp_ms: u64,
        #[arg(long, value_enum, default_value = "violation")]
        class: ClassArg,
        #[arg(long)]
        confidence: f64,
        /// Where to write the envelope.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt and verify an envelope, printing its metadata.
    Open {
        #[arg(long)]
        envelope: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long, default_value_t = 1)]
        key_id: u8,
        /// Where to write the decrypted payload (stdout summary only if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {:#}", error_name(&err), err);
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            scenario,
            strategy,
            device,
            out,
        } => run_command(&scenario, strategy, &device, &out),
        Command::Compare {
            scenario,
            out,
            devices,
        } => compare_command(&scenario, &out, devices),
        Command::Metrics { labels } => metrics_command(&labels),
        Command::Vault { command } => vault_command(command),
    }
}

fn parse_device(name: &str) -> Result<DeviceProfile> {
    DeviceProfile::preset(name).ok_or_else(|| {
        anyhow!(
            "unknown device preset {name:?}; known presets: {}",
            DeviceProfile::preset_names().join(", ")
        )
    })
}

fn parse_key(hex_bytes: &str, key_id: u8) -> Result<EncryptionKey> {
    let bytes = hex::decode(hex_bytes).context("key must be hex")?;
    Ok(EncryptionKey::new(bytes, key_id)?)
}

fn run_command(
    scenario_path: &Path,
    strategy: StrategyArg,
    device: &str,
    out: &Path,
) -> Result<()> {
    let scenario = Scenario::from_file(scenario_path)?;
    let device = parse_device(device)?;
    let strategy = match strategy {
        StrategyArg::Onload => Strategy::Onload,
        StrategyArg::Offload => Strategy::offload_from(&scenario.strategy),
    };
    let options = SimOptions {
        work_dir: Some(out.to_path_buf()),
        ..SimOptions::default()
    };
    let stem = format!("session_{}", scenario.session_id);

    match run_session_with(&scenario, &strategy, &device, &options) {
        Ok(outcome) => {
            let path = outcome.report.write_files(out, &stem)?;
            println!(
                "{} frames, {} warnings, {} incidents recorded, {} delivered",
                outcome.report.frames,
                outcome.report.warnings,
                outcome.report.incidents_recorded,
                outcome.report.incidents_delivered
            );
            println!("report: {}", path.display());
            Ok(())
        }
        Err(err @ SimError::ConsentWithheld { .. }) => {
            // the empty flagged report is still emitted for the session ledger
            let report = SessionReport::withheld(
                scenario.session_id,
                &scenario.vehicle_id,
                strategy.label(),
                &device.name,
            );
            report.write_files(out, &stem)?;
            Err(err.into())
        }
        Err(err) => Err(err.into()),
    }
}

fn compare_command(scenario_path: &Path, out: &Path, devices: Vec<String>) -> Result<()> {
    let scenario = Scenario::from_file(scenario_path)?;
    let device_names = if devices.is_empty() {
        vec!["default".to_string()]
    } else {
        devices
    };
    let mut pairs = Vec::new();
    for name in &device_names {
        let device = parse_device(name)?;
        pairs.push((Strategy::Onload, device.clone()));
        pairs.push((Strategy::offload_from(&scenario.strategy), device));
    }
    let options = SimOptions {
        work_dir: Some(out.join("runs")),
        ..SimOptions::default()
    };
    let report = compare_strategies(&scenario, &pairs, &options)?;
    let path = report.write_files(out, "comparison")?;
    for row in &report.rows {
        println!(
            "{:>8} on {:<8} mean latency {:>10} ms, {} bytes off-device",
            row.strategy,
            row.device,
            row.mean_latency_ms
                .map(|v| format!("{v:.1}"))
                .unwrap_or_else(|| "-".to_string()),
            row.bytes_off_device
        );
    }
    println!("report: {}", path.display());
    Ok(())
}

fn parse_bool(field: &str, line_no: usize) -> Result<bool> {
    match field.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(anyhow!("line {line_no}: expected boolean, got {other:?}")),
    }
}

fn metrics_command(labels: &Path) -> Result<()> {
    let text = std::fs::read_to_string(labels)
        .with_context(|| format!("reading {}", labels.display()))?;
    let mut matrix = ConfusionMatrix::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "predicted,actual" {
            continue;
        }
        let (predicted, actual) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("line {}: expected `predicted,actual`", i + 1))?;
        matrix.update(parse_bool(predicted, i + 1)?, parse_bool(actual, i + 1)?);
    }
    println!(
        "{}",
        serde_json::json!({
            "tp": matrix.tpc, "fp": matrix.fpc, "fn": matrix.fnc, "tn": matrix.tnc,
        })
    );
    let scores = matrix.scores()?;
    println!(
        "{}",
        serde_json::json!({
            "precision": scores.precision,
            "recall": scores.recall,
            "accuracy": scores.accuracy,
        })
    );
    Ok(())
}

fn vault_command(command: VaultCommand) -> Result<()> {
    match command {
        VaultCommand::Seal {
            payload,
            key,
            key_id,
            session,
            timestamp_ms,
            class,
            confidence,
            out,
        } => {
            let key = parse_key(&key, key_id)?;
            let session_id: SessionId = session
                .parse()
                .map_err(|e| anyhow!("bad session id: {e}"))?;
            let payload_bytes = std::fs::read(&payload)
                .with_context(|| format!("reading {}", payload.display()))?;
            let meta = IncidentMeta::new(session_id, timestamp_ms, class.into(), confidence)?;
            let envelope = seal_incident(&payload_bytes, &meta, &key);
            std::fs::write(&out, &envelope)?;
            println!(
                "sealed {} payload bytes into {} ({} bytes)",
                payload_bytes.len(),
                out.display(),
                envelope.len()
            );
            Ok(())
        }
        VaultCommand::Open {
            envelope,
            key,
            key_id,
            out,
        } => {
            let key = parse_key(&key, key_id)?;
            let bytes = std::fs::read(&envelope)
                .with_context(|| format!("reading {}", envelope.display()))?;
            let (meta, payload) = open_incident(&bytes, &key)?;
            println!(
                "{}",
                serde_json::json!({
                    "session_id": meta.session_id.to_hex(),
                    "timestamp_ms": meta.timestamp_ms,
                    "class": meta.class.name(),
                    "confidence": meta.confidence(),
                    "payload_len": payload.len(),
                })
            );
            if let Some(out) = out {
                std::fs::write(&out, &payload)?;
                println!("payload written to {}", out.display());
            }
            Ok(())
        }
    }
}

/// Stable error names for scripting against exit output.
fn error_name(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<SimError>() {
        return match e {
            SimError::ConsentWithheld { .. } => "ConsentWithheld",
            SimError::InvalidScenario(_) => "InvalidScenario",
            SimError::InsufficientStrategies(_) => "InsufficientStrategies",
            SimError::Detector(_) => "Detector",
            SimError::Dss(_) => "Dss",
            SimError::Vault(_) => "Vault",
            SimError::Transport(_) => "Transport",
            SimError::Agent(_) => "Agent",
            SimError::Metrics(_) => "Metrics",
            SimError::Io(_) => "Io",
        };
    }
    if let Some(e) = err.downcast_ref::<VaultError>() {
        return match e {
            VaultError::BadMagic(_) => "BadMagic",
            VaultError::UnsupportedVersion(_) => "UnsupportedVersion",
            VaultError::KeyMismatch { .. } => "KeyMismatch",
            VaultError::IntegrityFailure { .. } => "IntegrityFailure",
            VaultError::Malformed(_) => "MalformedEnvelope",
            VaultError::InvalidConfidence(_) => "InvalidConfidence",
            VaultError::EmptyKey => "EmptyKey",
            VaultError::StorageFull { .. } => "StorageFull",
            VaultError::DuplicateIncident(_) => "DuplicateIncident",
            VaultError::Io(_) => "Io",
        };
    }
    if let Some(e) = err.downcast_ref::<MetricsError>() {
        return match e {
            MetricsError::ZeroDenominator { .. } => "ZeroDenominator",
            MetricsError::EmptySampleSet => "EmptySampleSet",
        };
    }
    if err.downcast_ref::<AgentError>().is_some() {
        return "Agent";
    }
    if err.downcast_ref::<TransportError>().is_some() {
        return "Transport";
    }
    if err.downcast_ref::<DssError>().is_some() {
        return "Dss";
    }
    if err.downcast_ref::<QuantError>().is_some() {
        return "Quant";
    }
    "Error"
}

//! Session and comparison reports, emitted as JSON and flat CSV records.

use crate::metrics::{ConfusionMatrix, LatencyStats, Scores};
use crate::session::SessionId;
use serde::{Deserialize, Serialize};
use std::io;
use std::path::{Path, PathBuf};

/// Bytes that left the device, by channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteCounters {
    /// Raw (unencrypted) frame bytes shipped to an edge node; nonzero only
    /// under the offload strategy and the report's privacy-exposure figure.
    pub raw_frame_bytes_tx: u64,
    /// Sealed envelope bytes delivered to the agent.
    pub envelope_bytes_tx: u64,
    /// Payload bytes on the text fallback channel; zero by construction.
    pub fallback_payload_bytes_tx: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub end_to_end: Option<LatencyStats>,
    pub inference: Option<LatencyStats>,
    pub upload: Option<LatencyStats>,
}

/// Everything one simulated session produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: SessionId,
    pub vehicle_id: String,
    pub strategy: String,
    pub device: String,
    pub consent_withheld: bool,
    pub frames: usize,
    pub warnings: u64,
    pub incidents_recorded: u64,
    pub incidents_delivered: u64,
    pub incidents_pending: u64,
    pub fallback_records: u64,
    pub bytes: ByteCounters,
    pub confusion: ConfusionMatrix,
    /// Absent when a score denominator is zero (e.g. no violations at all).
    pub scores: Option<Scores>,
    pub latency: LatencyBreakdown,
    pub per_frame_latency_ms: Vec<f64>,
    /// Session log: `WARN <session> <t_ms>` and `SMS ...` lines in order.
    pub log: Vec<String>,
}

impl SessionReport {
    /// Report for a session whose passenger withheld consent; the pipeline
    /// never ran.
    pub fn withheld(
        session_id: SessionId,
        vehicle_id: &str,
        strategy: &str,
        device: &str,
    ) -> Self {
        SessionReport {
            session_id,
            vehicle_id: vehicle_id.to_string(),
            strategy: strategy.to_string(),
            device: device.to_string(),
            consent_withheld: true,
            frames: 0,
            warnings: 0,
            incidents_recorded: 0,
            incidents_delivered: 0,
            incidents_pending: 0,
            fallback_records: 0,
            bytes: ByteCounters::default(),
            confusion: ConfusionMatrix::new(),
            scores: None,
            latency: LatencyBreakdown::default(),
            per_frame_latency_ms: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header() -> &'static str {
        "session_id,vehicle_id,strategy,device,consent_withheld,frames,warnings,\
         incidents_recorded,incidents_delivered,incidents_pending,fallback_records,\
         raw_frame_bytes_tx,envelope_bytes_tx,fallback_payload_bytes_tx,\
         tp,fp,fn,tn,precision,recall,accuracy,\
         end_to_end_mean_ms,end_to_end_p50_ms,end_to_end_p95_ms,\
         inference_mean_ms,upload_mean_ms"
    }

    /// One flat comma-separated record; undefined scores stay empty.
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let score = |f: fn(&Scores) -> f64| opt(self.scores.as_ref().map(f));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.session_id,
            self.vehicle_id,
            self.strategy,
            self.device,
            self.consent_withheld,
            self.frames,
            self.warnings,
            self.incidents_recorded,
            self.incidents_delivered,
            self.incidents_pending,
            self.fallback_records,
            self.bytes.raw_frame_bytes_tx,
            self.bytes.envelope_bytes_tx,
            self.bytes.fallback_payload_bytes_tx,
            self.confusion.tpc,
            self.confusion.fpc,
            self.confusion.fnc,
            self.confusion.tnc,
            score(|s| s.precision),
            score(|s| s.recall),
            score(|s| s.accuracy),
            opt(self.latency.end_to_end.map(|s| s.mean_ms)),
            opt(self.latency.end_to_end.map(|s| s.p50_ms)),
            opt(self.latency.end_to_end.map(|s| s.p95_ms)),
            opt(self.latency.inference.map(|s| s.mean_ms)),
            opt(self.latency.upload.map(|s| s.mean_ms)),
        )
    }

    /// Write `<stem>.report.json`, `<stem>.report.csv`, and `<stem>.log`
    /// under `dir`; returns the JSON path.
    pub fn write_files(&self, dir: &Path, stem: &str) -> io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let json_path = dir.join(format!("{stem}.report.json"));
        std::fs::write(&json_path, self.to_json())?;
        std::fs::write(
            dir.join(format!("{stem}.report.csv")),
            format!("{}\n{}\n", Self::csv_header(), self.to_csv_row()),
        )?;
        std::fs::write(dir.join(format!("{stem}.log")), self.log.join("\n") + "\n")?;
        Ok(json_path)
    }
}

/// Published mean-latency figure of a prior monitoring system, carried as a
/// labeled constant for context in comparison reports. These are citations
/// of measurements, never recomputed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLatency {
    pub system: String,
    pub latency_ms: f64,
    pub media: String,
}

/// One strategy/device combination summarized for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub device: String,
    pub mean_latency_ms: Option<f64>,
    pub bytes_off_device: u64,
    /// Raw frame bytes shipped off-device: the privacy-exposure figure.
    pub privacy_exposure_bytes: u64,
    pub incidents_recorded: u64,
    pub incidents_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub session_id: SessionId,
    pub rows: Vec<ComparisonRow>,
    pub reference_latencies: Vec<ReferenceLatency>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header() -> &'static str {
        "strategy,device,mean_latency_ms,bytes_off_device,privacy_exposure_bytes,\
         incidents_recorded,incidents_delivered"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.strategy,
                row.device,
                row.mean_latency_ms.map(|v| v.to_string()).unwrap_or_default(),
                row.bytes_off_device,
                row.privacy_exposure_bytes,
                row.incidents_recorded,
                row.incidents_delivered,
            ));
        }
        out.push_str("\nreference_system,latency_ms,media\n");
        for r in &self.reference_latencies {
            out.push_str(&format!("{},{},{}\n", r.system, r.latency_ms, r.media));
        }
        out
    }

    pub fn write_files(&self, dir: &Path, stem: &str) -> io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&json_path, self.to_json())?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        Ok(json_path)
    }
}

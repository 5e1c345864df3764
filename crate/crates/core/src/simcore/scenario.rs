//! Scenario files: one simulated session per JSON file.
//!
//! Layout:
//!
//! ```json
//! {
//!   "session_id": "32 hex chars",
//!   "vehicle_id": "veh-1",
//!   "consent": true,
//!   "seed": 7,
//!   "detector_profile": {"inference_ms": 28.0, "noise_sigma": 0.0,
//!                        "night_penalty": 0.0, "base_confidence": 0.9},
//!   "link_schedule": [{"from_ms": 0, "to_ms": 60000,
//!                      "bandwidth_bytes_per_s": 1000000.0, "rtt_ms": 50.0}],
//!   "strategy": {"frame_bytes": 1000000, "bandwidth_bytes_per_s": 1000000.0,
//!                "rtt_ms": 50.0, "edge_inference_ms": 100.0},
//!   "frames": [{"frame_id": 0, "t_ms": 0, "lighting": "day",
//!               "features": [0.0, ...], "truth": [{"class": "Violation",
//!               "bbox": {"x": 0.1, "y": 0.1, "w": 0.5, "h": 0.5}}]}]
//! }
//! ```

use crate::detector::{DetectorProfile, SceneFrame, ScriptedDetector};
use crate::session::SessionId;
use crate::transport::{LinkInterval, LinkModel};
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::SimError;

fn default_inference_ms() -> f64 {
    28.0
}

fn default_base_confidence() -> f64 {
    0.9
}

/// Scripted-detector settings carried by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default = "default_inference_ms")]
    pub inference_ms: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub night_penalty: f64,
    #[serde(default = "default_base_confidence")]
    pub base_confidence: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            inference_ms: default_inference_ms(),
            noise_sigma: 0.0,
            night_penalty: 0.0,
            base_confidence: default_base_confidence(),
        }
    }
}

impl DetectorConfig {
    pub fn build(&self) -> ScriptedDetector {
        ScriptedDetector::new(
            self.base_confidence,
            DetectorProfile {
                inference_ms: self.inference_ms,
                noise_sigma: self.noise_sigma,
                night_penalty: self.night_penalty,
            },
        )
    }
}

fn default_frame_bytes() -> u64 {
    1_000_000
}

fn default_bandwidth() -> f64 {
    1_000_000.0
}

fn default_rtt_ms() -> f64 {
    50.0
}

fn default_edge_inference_ms() -> f64 {
    100.0
}

/// Offload parameters a scenario may pin; all have documented defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyDefaults {
    #[serde(default = "default_frame_bytes")]
    pub frame_bytes: u64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_bytes_per_s: f64,
    #[serde(default = "default_rtt_ms")]
    pub rtt_ms: f64,
    #[serde(default = "default_edge_inference_ms")]
    pub edge_inference_ms: f64,
}

impl Default for StrategyDefaults {
    fn default() -> Self {
        StrategyDefaults {
            frame_bytes: default_frame_bytes(),
            bandwidth_bytes_per_s: default_bandwidth(),
            rtt_ms: default_rtt_ms(),
            edge_inference_ms: default_edge_inference_ms(),
        }
    }
}

/// One simulated ridesharing session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub session_id: SessionId,
    pub vehicle_id: String,
    pub consent: bool,
    pub seed: u64,
    #[serde(default)]
    pub detector_profile: DetectorConfig,
    #[serde(default)]
    pub link_schedule: Vec<LinkInterval>,
    #[serde(default)]
    pub strategy: StrategyDefaults,
    pub frames: Vec<SceneFrame>,
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, SimError> {
        let scenario: Scenario =
            serde_json::from_str(json).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json(&json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Link model built from the schedule; an empty schedule means the link
    /// is up the whole session at the strategy-default bandwidth and rtt.
    pub fn link_model(&self) -> Result<LinkModel, SimError> {
        if self.link_schedule.is_empty() {
            return Ok(LinkModel::always_up(
                self.strategy.bandwidth_bytes_per_s,
                self.strategy.rtt_ms,
            ));
        }
        Ok(LinkModel::new(self.link_schedule.clone())?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for window in self.frames.windows(2) {
            if window[1].t_ms <= window[0].t_ms {
                return Err(SimError::InvalidScenario(format!(
                    "frame times must be strictly increasing ({} then {})",
                    window[0].t_ms, window[1].t_ms
                )));
            }
        }
        if let Some(first) = self.frames.first() {
            let dim = first.features.len();
            if let Some(bad) = self.frames.iter().find(|f| f.features.len() != dim) {
                return Err(SimError::InvalidScenario(format!(
                    "frame {} has {} features, expected {dim}",
                    bad.frame_id,
                    bad.features.len()
                )));
            }
        }
        for frame in &self.frames {
            for label in frame.truth.as_deref().unwrap_or(&[]) {
                let b = label.bbox;
                if crate::detector::BBox::new(b.x, b.y, b.w, b.h).is_none() {
                    return Err(SimError::InvalidScenario(format!(
                        "frame {} carries an out-of-frame bounding box",
                        frame.frame_id
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.detector_profile.base_confidence) {
            return Err(SimError::InvalidScenario(
                "base_confidence must be in [0, 1]".to_string(),
            ));
        }
        if self.detector_profile.inference_ms <= 0.0 {
            return Err(SimError::InvalidScenario(
                "inference_ms must be positive".to_string(),
            ));
        }
        self.link_model()?;
        Ok(())
    }
}

/// Convenience constructor for tests, demo files, and the comparison sweep.
#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    scenario: Scenario,
    feature_dim: usize,
}

impl ScenarioBuilder {
    pub fn new(session_byte: u8, vehicle_id: &str) -> Self {
        ScenarioBuilder {
            scenario: Scenario {
                session_id: SessionId::from_bytes([session_byte; 16]),
                vehicle_id: vehicle_id.to_string(),
                consent: true,
                seed: 1,
                detector_profile: DetectorConfig::default(),
                link_schedule: Vec::new(),
                strategy: StrategyDefaults::default(),
                frames: Vec::new(),
            },
            feature_dim: 16,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self
    }

    pub fn consent(mut self, consent: bool) -> Self {
        self.scenario.consent = consent;
        self
    }

    pub fn detector(mut self, config: DetectorConfig) -> Self {
        self.scenario.detector_profile = config;
        self
    }

    pub fn link_schedule(mut self, schedule: Vec<LinkInterval>) -> Self {
        self.scenario.link_schedule = schedule;
        self
    }

    pub fn strategy_defaults(mut self, defaults: StrategyDefaults) -> Self {
        self.scenario.strategy = defaults;
        self
    }

    pub fn frame(mut self, frame: SceneFrame) -> Self {
        self.scenario.frames.push(frame);
        self
    }

    /// Append a frame at `t_ms` carrying the given truth labels.
    pub fn labeled_frame(
        mut self,
        t_ms: u64,
        lighting: crate::detector::Lighting,
        truth: Vec<crate::detector::TruthLabel>,
    ) -> Self {
        let frame_id = self.scenario.frames.len() as u64;
        self.scenario.frames.push(SceneFrame {
            frame_id,
            t_ms,
            lighting,
            features: vec![0.0; self.feature_dim],
            truth: Some(truth),
        });
        self
    }

    pub fn build(self) -> Result<Scenario, SimError> {
        self.scenario.validate()?;
        Ok(self.scenario)
    }
}

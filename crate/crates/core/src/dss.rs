//! Per-session decision-support state machine.
//!
//! The machine warns on the first above-threshold violation, records an
//! encrypted incident when the violation is seen again within the warn
//! window, then cools down so one episode yields at most one incident.
//! Only detections of class Violation with confidence strictly greater
//! than the threshold drive transitions; Driver and Passenger detections
//! never do.
//!
//! Transitions, with `hit` = any violation detection above threshold and
//! `elapsed` = frame time minus the time the current phase was entered:
//!
//! | phase      | condition                       | next       | action         |
//! |------------|---------------------------------|------------|----------------|
//! | Monitoring | hit                             | Warned     | Warn           |
//! | Warned     | hit, elapsed <= warn_window_ms  | Cooldown   | RecordIncident |
//! | Warned     | no hit, elapsed > warn_window_ms| Monitoring | none           |
//! | Cooldown   | elapsed >= cooldown_ms          | Monitoring | none (hits ignored) |
//! | any other  |                                 | unchanged  | none           |

use crate::detector::{Detection, DetectionClass, SceneFrame};
use crate::session::SessionId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DssError {
    #[error("frame at t={frame_t_ms}ms precedes current phase entry at t={phase_entered_at}ms")]
    TimeRegression {
        frame_t_ms: u64,
        phase_entered_at: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DssConfig {
    /// Violations trigger only with confidence strictly greater than this.
    pub confidence_threshold: f64,
    /// How long a warning waits for a second violation before expiring.
    pub warn_window_ms: u64,
    /// Quiet period after recording an incident.
    pub cooldown_ms: u64,
}

impl Default for DssConfig {
    fn default() -> Self {
        DssConfig {
            confidence_threshold: 0.80,
            warn_window_ms: 30_000,
            cooldown_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Monitoring,
    Warned,
    Cooldown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DssState {
    pub phase: Phase,
    pub phase_entered_at: u64,
    pub session_id: SessionId,
    pub incident_count: u64,
}

impl DssState {
    pub fn new(session_id: SessionId) -> Self {
        DssState {
            phase: Phase::Monitoring,
            phase_entered_at: 0,
            session_id,
            incident_count: 0,
        }
    }
}

/// Action the device must take after a step. Absence of an action is the
/// common case and is modeled as `None` at the call site.
#[derive(Debug, Clone, PartialEq)]
pub enum DssAction {
    /// Voice a warning; emitted as a `WARN <session> <t_ms>` log line.
    Warn,
    /// Capture, encrypt, and report the triggering scene.
    RecordIncident {
        frame: SceneFrame,
        detection: Detection,
    },
}

/// `WARN <session> <t_ms>` session-log line for an emitted warning.
pub fn warn_log_line(session_id: &SessionId, t_ms: u64) -> String {
    format!("WARN {} {}", session_id, t_ms)
}

fn best_violation<'a>(detections: &'a [Detection], config: &DssConfig) -> Option<&'a Detection> {
    detections
        .iter()
        .filter(|d| d.class == DetectionClass::Violation && d.confidence > config.confidence_threshold)
        .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
}

/// Advance the machine by one frame. Pure: the same
/// (state, frame, detections, config) always yields the same result.
pub fn step(
    state: DssState,
    frame: &SceneFrame,
    detections: &[Detection],
    config: &DssConfig,
) -> Result<(DssState, Option<DssAction>), DssError> {
    if frame.t_ms < state.phase_entered_at {
        return Err(DssError::TimeRegression {
            frame_t_ms: frame.t_ms,
            phase_entered_at: state.phase_entered_at,
        });
    }

    let hit = best_violation(detections, config);
    let elapsed = frame.t_ms - state.phase_entered_at;
    let mut next = state;

    let action = match state.phase {
        Phase::Monitoring => {
            if hit.is_some() {
                next.phase = Phase::Warned;
                next.phase_entered_at = frame.t_ms;
                Some(DssAction::Warn)
            } else {
                None
            }
        }
        Phase::Warned => match hit {
            Some(detection) if elapsed <= config.warn_window_ms => {
                next.phase = Phase::Cooldown;
                next.phase_entered_at = frame.t_ms;
                next.incident_count += 1;
                Some(DssAction::RecordIncident {
                    frame: frame.clone(),
                    detection: detection.clone(),
                })
            }
            None if elapsed > config.warn_window_ms => {
                next.phase = Phase::Monitoring;
                next.phase_entered_at = frame.t_ms;
                None
            }
            _ => None,
        },
        Phase::Cooldown => {
            // hits are ignored here so one episode records once
            if elapsed >= config.cooldown_ms {
                next.phase = Phase::Monitoring;
                next.phase_entered_at = frame.t_ms;
            }
            None
        }
    };

    Ok((next, action))
}

/// Owns the evolving state for one session; thin wrapper over [`step`].
#[derive(Debug, Clone)]
pub struct DssSession {
    state: DssState,
    config: DssConfig,
}

impl DssSession {
    pub fn new(session_id: SessionId, config: DssConfig) -> Self {
        DssSession {
            state: DssState::new(session_id),
            config,
        }
    }

    pub fn state(&self) -> &DssState {
        &self.state
    }

    pub fn step(
        &mut self,
        frame: &SceneFrame,
        detections: &[Detection],
    ) -> Result<Option<DssAction>, DssError> {
        let (next, action) = step(self.state, frame, detections, &self.config)?;
        self.state = next;
        Ok(action)
    }
}

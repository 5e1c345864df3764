//! Decentralized-control ride monitoring: on-device violation detection,
//! an escalation state machine, encrypted incident capture, store-and-forward
//! reporting to an agent service, and a discrete-event simulator that compares
//! onload vs offload computation strategies.
//!
//! Module map:
//!
//! - [`quantkit`]: post-training int8 affine quantization and magnitude pruning
//! - [`detector`]: pluggable violation detectors over simulated scene frames
//! - [`dss`]: per-session decision-support state machine (warn, record, cool down)
//! - [`vault`]: XOR-encrypted incident envelopes and the hidden on-device store
//! - [`transport`]: store-and-forward delivery over an intermittent link
//! - [`agent`]: agent-side ingest service, incident log, and vehicle registry
//! - [`metrics`]: confusion-matrix scores and latency statistics
//! - [`simcore`]: scenario files, the session simulator, and strategy comparison

pub mod agent;
pub mod detector;
pub mod dss;
pub mod metrics;
pub mod quantkit;
pub mod session;
pub mod simcore;
pub mod transport;
pub mod vault;

pub use session::SessionId;

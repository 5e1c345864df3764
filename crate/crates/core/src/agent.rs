//! Ridesharing-agent service: ingests envelopes, decrypts and verifies them
//! with the shared key, persists incidents, and hosts the vehicle registry.
//!
//! Incidents are persisted to an append-only log (each record is the raw
//! envelope bytes prefixed by an 8-byte big-endian receive timestamp) plus an
//! in-memory index rebuilt by replaying the log on open, so the service is
//! crash-recoverable without a database. Duplicate envelopes are rejected
//! keyed on (session_id, timestamp_ms, crc32).
//!
//! The request/response surface is HTTP-style with five verbs:
//!
//! ```text
//! POST /incidents               body = envelope bytes -> incident id
//! GET  /incidents?session=<id>  -> incident metadata for the session
//! GET  /incidents/<id>/payload  -> decrypted payload bytes
//! PUT  /vehicles/<id>           body = vehicle record JSON
//! GET  /vehicles/<id>           -> vehicle record JSON
//! ```
//!
//! [`AgentRequest::parse`] maps those verb/path pairs onto typed requests;
//! any carrier that moves the typed pairs is equivalent.

use crate::session::SessionId;
use crate::vault::{self, EncryptionKey, IncidentMeta, VaultError};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use thiserror::Error;

pub const INCIDENT_LOG_NAME: &str = "incidents.log";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no key registered for key id {0}")]
    UnknownKeyId(u8),
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
    #[error(transparent)]
    Vault(VaultError),
    #[error("duplicate incident for session {session_id} at t={timestamp_ms} (crc {crc32:#010x})")]
    DuplicateIncident {
        session_id: SessionId,
        timestamp_ms: u64,
        crc32: u32,
    },
    #[error("unknown vehicle {0:?}")]
    UnknownVehicle(String),
    #[error("invalid vehicle record: {0}")]
    InvalidRecord(String),
    #[error("unknown incident id {0}")]
    UnknownIncident(u64),
    #[error("agent persistence io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt incident log: {0}")]
    CorruptLog(&'static str),
}

impl From<VaultError> for AgentError {
    fn from(err: VaultError) -> Self {
        match err {
            VaultError::Malformed(msg) => AgentError::MalformedEnvelope(msg.to_string()),
            other => AgentError::Vault(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleCondition {
    Proper,
    Improper,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub vehicle_id: String,
    pub title_valid: bool,
    pub insurance_valid: bool,
    pub condition: VehicleCondition,
    pub driver_id: String,
}

/// One ingested incident; the decrypted payload never leaves the agent
/// except through an explicit per-id fetch.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredIncident {
    pub incident_id: u64,
    pub session_id: SessionId,
    pub vehicle_id: Option<String>,
    pub received_at_ms: u64,
    pub meta: IncidentMeta,
    payload: Vec<u8>,
}

impl StoredIncident {
    pub fn summary(&self) -> IncidentSummary {
        IncidentSummary {
            incident_id: self.incident_id,
            session_id: self.session_id,
            vehicle_id: self.vehicle_id.clone(),
            received_at_ms: self.received_at_ms,
            timestamp_ms: self.meta.timestamp_ms,
            class: self.meta.class.name().to_string(),
            confidence_x1e4: self.meta.confidence_x1e4,
            payload_len: self.payload.len() as u64,
        }
    }
}

/// Payload-free listing entry returned by queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentSummary {
    pub incident_id: u64,
    pub session_id: SessionId,
    pub vehicle_id: Option<String>,
    pub received_at_ms: u64,
    pub timestamp_ms: u64,
    pub class: String,
    pub confidence_x1e4: u16,
    pub payload_len: u64,
}

#[derive(Debug)]
pub struct AgentService {
    keys: HashMap<u8, EncryptionKey>,
    incidents: Vec<StoredIncident>,
    dedup: HashSet<(SessionId, u64, u32)>,
    vehicles: HashMap<String, VehicleRecord>,
    sessions: HashMap<SessionId, String>,
    next_incident_id: u64,
    log: Option<File>,
    log_path: Option<PathBuf>,
}

impl AgentService {
    /// In-memory service with no on-disk log.
    pub fn new(keys: Vec<EncryptionKey>) -> Self {
        AgentService {
            keys: keys.into_iter().map(|k| (k.key_id(), k)).collect(),
            incidents: Vec::new(),
            dedup: HashSet::new(),
            vehicles: HashMap::new(),
            sessions: HashMap::new(),
            next_incident_id: 1,
            log: None,
            log_path: None,
        }
    }

    /// Open a persistent service rooted at `dir`, replaying any existing
    /// incident log into the in-memory index.
    pub fn open(dir: &Path, keys: Vec<EncryptionKey>) -> Result<Self, AgentError> {
        std::fs::create_dir_all(dir)?;
        let log_path = dir.join(INCIDENT_LOG_NAME);
        let mut service = Self::new(keys);

        if log_path.exists() {
            let mut bytes = Vec::new();
            File::open(&log_path)?.read_to_end(&mut bytes)?;
            let mut offset = 0usize;
            while offset < bytes.len() {
                if bytes.len() - offset < 8 + vault::ENVELOPE_HEADER_LEN {
                    return Err(AgentError::CorruptLog("truncated record"));
                }
                let received_at_ms =
                    u64::from_be_bytes(bytes[offset..offset + 8].try_into().unwrap());
                // payload_len sits at bytes 37..41 of the envelope header
                let len_at = offset + 8 + 37;
                let payload_len =
                    u32::from_be_bytes(bytes[len_at..len_at + 4].try_into().unwrap()) as usize;
                let total = vault::ENVELOPE_HEADER_LEN + payload_len;
                if bytes.len() - offset - 8 < total {
                    return Err(AgentError::CorruptLog("truncated envelope body"));
                }
                let envelope = &bytes[offset + 8..offset + 8 + total];
                vault::peek_header(envelope)
                    .map_err(|_| AgentError::CorruptLog("unparseable envelope header"))?;
                service.ingest_internal(envelope, received_at_ms, false)?;
                offset += 8 + total;
            }
        }

        service.log = Some(OpenOptions::new().create(true).append(true).open(&log_path)?);
        service.log_path = Some(log_path);
        Ok(service)
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    pub fn incident_count(&self) -> usize {
        self.incidents.len()
    }

    /// Tell the agent which vehicle hosts a session, so ingested incidents
    /// can be attributed. Envelopes themselves carry no vehicle id.
    pub fn bind_session(&mut self, session_id: SessionId, vehicle_id: &str) {
        self.sessions.insert(session_id, vehicle_id.to_string());
    }

    /// Verify, decrypt, persist, and index one envelope.
    pub fn ingest(&mut self, envelope: &[u8], received_at_ms: u64) -> Result<u64, AgentError> {
        self.ingest_internal(envelope, received_at_ms, true)
    }

    fn ingest_internal(
        &mut self,
        envelope: &[u8],
        received_at_ms: u64,
        append_to_log: bool,
    ) -> Result<u64, AgentError> {
        let header = vault::peek_header(envelope)?;
        let key = self
            .keys
            .get(&header.key_id)
            .ok_or(AgentError::UnknownKeyId(header.key_id))?;
        let (meta, payload) = vault::open_incident(envelope, key)?;

        let dedup_key = (meta.session_id, meta.timestamp_ms, header.plaintext_crc32);
        if self.dedup.contains(&dedup_key) {
            return Err(AgentError::DuplicateIncident {
                session_id: meta.session_id,
                timestamp_ms: meta.timestamp_ms,
                crc32: header.plaintext_crc32,
            });
        }

        if append_to_log {
            if let Some(log) = self.log.as_mut() {
                log.write_all(&received_at_ms.to_be_bytes())?;
                log.write_all(envelope)?;
                log.flush()?;
            }
        }

        let incident_id = self.next_incident_id;
        self.next_incident_id += 1;
        self.dedup.insert(dedup_key);
        self.incidents.push(StoredIncident {
            incident_id,
            session_id: meta.session_id,
            vehicle_id: self.sessions.get(&meta.session_id).cloned(),
            received_at_ms,
            meta,
            payload,
        });
        Ok(incident_id)
    }

    /// Registered vehicles must carry a valid title.
    pub fn register_vehicle(&mut self, record: VehicleRecord) -> Result<(), AgentError> {
        if !record.title_valid {
            return Err(AgentError::InvalidRecord(format!(
                "vehicle {} has no valid title",
                record.vehicle_id
            )));
        }
        self.vehicles.insert(record.vehicle_id.clone(), record);
        Ok(())
    }

    pub fn lookup_vehicle(&self, vehicle_id: &str) -> Result<&VehicleRecord, AgentError> {
        self.vehicles
            .get(vehicle_id)
            .ok_or_else(|| AgentError::UnknownVehicle(vehicle_id.to_string()))
    }

    /// Incident metadata for a session in arrival (incident id) order;
    /// payloads are excluded from listings.
    pub fn query_incidents(&self, session_id: SessionId) -> Vec<IncidentSummary> {
        self.incidents
            .iter()
            .filter(|i| i.session_id == session_id)
            .map(StoredIncident::summary)
            .collect()
    }

    /// Explicit per-id payload fetch.
    pub fn incident_payload(&self, incident_id: u64) -> Result<&[u8], AgentError> {
        self.incidents
            .iter()
            .find(|i| i.incident_id == incident_id)
            .map(|i| i.payload.as_slice())
            .ok_or(AgentError::UnknownIncident(incident_id))
    }

    /// Route one typed request.
    pub fn handle(&mut self, request: AgentRequest, now_ms: u64) -> AgentResponse {
        match request {
            AgentRequest::IngestIncident { envelope } => match self.ingest(&envelope, now_ms) {
                Ok(id) => AgentResponse::IncidentAccepted { incident_id: id },
                Err(err) => AgentResponse::error(&err),
            },
            AgentRequest::QueryIncidents { session_id } => AgentResponse::Incidents {
                incidents: self.query_incidents(session_id),
            },
            AgentRequest::FetchPayload { incident_id } => {
                match self.incident_payload(incident_id) {
                    Ok(payload) => AgentResponse::Payload {
                        payload: payload.to_vec(),
                    },
                    Err(err) => AgentResponse::error(&err),
                }
            }
            AgentRequest::PutVehicle { record } => match self.register_vehicle(record) {
                Ok(()) => AgentResponse::VehicleStored,
                Err(err) => AgentResponse::error(&err),
            },
            AgentRequest::GetVehicle { vehicle_id } => match self.lookup_vehicle(&vehicle_id) {
                Ok(record) => AgentResponse::Vehicle {
                    record: record.clone(),
                },
                Err(err) => AgentResponse::error(&err),
            },
        }
    }
}

/// The five verbs of the agent protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentRequest {
    /// `POST /incidents` with the envelope bytes as body.
    IngestIncident { envelope: Vec<u8> },
    /// `GET /incidents?session=<hex id>`.
    QueryIncidents { session_id: SessionId },
    /// `GET /incidents/<id>/payload`.
    FetchPayload { incident_id: u64 },
    /// `PUT /vehicles/<id>` with a vehicle-record JSON body.
    PutVehicle { record: VehicleRecord },
    /// `GET /vehicles/<id>`.
    GetVehicle { vehicle_id: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum RequestParseError {
    #[error("no route for {method} {path}")]
    NoRoute { method: String, path: String },
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl AgentRequest {
    /// Map an HTTP-style (method, path, body) triple onto a typed request.
    pub fn parse(method: &str, path: &str, body: &[u8]) -> Result<Self, RequestParseError> {
        let no_route = || RequestParseError::NoRoute {
            method: method.to_string(),
            path: path.to_string(),
        };
        match (method, path) {
            ("POST", "/incidents") => Ok(AgentRequest::IngestIncident {
                envelope: body.to_vec(),
            }),
            ("GET", _) if path.starts_with("/incidents?session=") => {
                let hex = &path["/incidents?session=".len()..];
                let session_id = hex
                    .parse()
                    .map_err(|_| RequestParseError::BadRequest(format!("bad session id {hex:?}")))?;
                Ok(AgentRequest::QueryIncidents { session_id })
            }
            ("GET", _) if path.starts_with("/incidents/") && path.ends_with("/payload") => {
                let id_str = &path["/incidents/".len()..path.len() - "/payload".len()];
                let incident_id = id_str.parse().map_err(|_| {
                    RequestParseError::BadRequest(format!("bad incident id {id_str:?}"))
                })?;
                Ok(AgentRequest::FetchPayload { incident_id })
            }
            ("PUT", _) if path.starts_with("/vehicles/") => {
                let vehicle_id = &path["/vehicles/".len()..];
                let mut record: VehicleRecord = serde_json::from_slice(body)
                    .map_err(|e| RequestParseError::BadRequest(e.to_string()))?;
                record.vehicle_id = vehicle_id.to_string();
                Ok(AgentRequest::PutVehicle { record })
            }
            ("GET", _) if path.starts_with("/vehicles/") => Ok(AgentRequest::GetVehicle {
                vehicle_id: path["/vehicles/".len()..].to_string(),
            }),
            _ => Err(no_route()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentResponse {
    IncidentAccepted { incident_id: u64 },
    Incidents { incidents: Vec<IncidentSummary> },
    Payload { payload: Vec<u8> },
    VehicleStored,
    Vehicle { record: VehicleRecord },
    Error { name: String, message: String },
}

impl AgentResponse {
    fn error(err: &AgentError) -> Self {
        let name = match err {
            AgentError::UnknownKeyId(_) => "UnknownKeyId",
            AgentError::MalformedEnvelope(_) => "MalformedEnvelope",
            AgentError::Vault(VaultError::IntegrityFailure { .. }) => "IntegrityFailure",
            AgentError::Vault(_) => "MalformedEnvelope",
            AgentError::DuplicateIncident { .. } => "DuplicateIncident",
            AgentError::UnknownVehicle(_) => "UnknownVehicle",
            AgentError::InvalidRecord(_) => "InvalidRecord",
            AgentError::UnknownIncident(_) => "UnknownIncident",
            AgentError::Io(_) | AgentError::CorruptLog(_) => "Internal",
        };
        AgentResponse::Error {
            name: name.to_string(),
            message: err.to_string(),
        }
    }
}

/// Thread-safe facade: writes serialize behind the lock, reads share it and
/// observe a consistent prefix of the incident sequence.
#[derive(Clone)]
pub struct SharedAgent {
    inner: Arc<RwLock<AgentService>>,
}

impl SharedAgent {
    pub fn new(service: AgentService) -> Self {
        SharedAgent {
            inner: Arc::new(RwLock::new(service)),
        }
    }

    pub fn ingest(&self, envelope: &[u8], received_at_ms: u64) -> Result<u64, AgentError> {
        self.inner.write().unwrap().ingest(envelope, received_at_ms)
    }

    pub fn query_incidents(&self, session_id: SessionId) -> Vec<IncidentSummary> {
        self.inner.read().unwrap().query_incidents(session_id)
    }

    pub fn incident_count(&self) -> usize {
        self.inner.read().unwrap().incident_count()
    }
}

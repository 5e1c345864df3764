//! Store-and-forward delivery of sealed envelopes over a simulated
//! intermittent cellular link, with a metadata-only text-message fallback.
//!
//! Envelopes wait in FIFO order while the link is down. When a tick finds
//! the link up, whole envelopes are handed to the sink as long as their full
//! transmission fits in the remaining connected interval; there are no
//! partial transfers across outages. An envelope whose age passes the
//! fallback deadline during an outage emits one text record carrying header
//! metadata and zero payload bytes, and still delivers in full later.

use crate::detector::DetectionClass;
use crate::session::SessionId;
use crate::vault::{self, VaultError};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;
pub const DEFAULT_FALLBACK_DEADLINE_MS: u64 = 300_000;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("outbound queue is full ({capacity} envelopes)")]
    QueueFull { capacity: usize },
    #[error("link schedule invalid: {0}")]
    InvalidSchedule(&'static str),
    #[error("tick time {now_ms} precedes previous tick {last_ms}")]
    NonMonotonicTick { now_ms: u64, last_ms: u64 },
    #[error("envelope rejected at enqueue: {0}")]
    BadEnvelope(#[from] VaultError),
    #[error("delivery sink failed: {0}")]
    Sink(String),
}

/// One connected interval: the link is up for `from_ms <= t < to_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkInterval {
    pub from_ms: u64,
    pub to_ms: u64,
    pub bandwidth_bytes_per_s: f64,
    pub rtt_ms: f64,
}

/// Connectivity schedule; outside every interval the link is down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkModel {
    schedule: Vec<LinkInterval>,
}

impl LinkModel {
    pub fn new(schedule: Vec<LinkInterval>) -> Result<Self, TransportError> {
        for window in schedule.windows(2) {
            if window[0].to_ms > window[1].from_ms {
                return Err(TransportError::InvalidSchedule(
                    "intervals overlap or are unsorted",
                ));
            }
        }
        for interval in &schedule {
            if interval.from_ms >= interval.to_ms {
                return Err(TransportError::InvalidSchedule("interval is empty"));
            }
            let bandwidth = interval.bandwidth_bytes_per_s;
            if bandwidth.is_nan() || bandwidth <= 0.0 {
                return Err(TransportError::InvalidSchedule("bandwidth must be positive"));
            }
            if interval.rtt_ms < 0.0 {
                return Err(TransportError::InvalidSchedule("rtt must be non-negative"));
            }
        }
        Ok(LinkModel { schedule })
    }

    /// Link that is up the whole time with the given parameters.
    pub fn always_up(bandwidth_bytes_per_s: f64, rtt_ms: f64) -> Self {
        LinkModel::new(vec![LinkInterval {
            from_ms: 0,
            to_ms: u64::MAX,
            bandwidth_bytes_per_s,
            rtt_ms,
        }])
        .expect("single unbounded interval is valid")
    }

    pub fn interval_at(&self, now_ms: u64) -> Option<&LinkInterval> {
        self.schedule
            .iter()
            .find(|i| i.from_ms <= now_ms && now_ms < i.to_ms)
    }

    pub fn is_up(&self, now_ms: u64) -> bool {
        self.interval_at(now_ms).is_some()
    }

    pub fn schedule(&self) -> &[LinkInterval] {
        &self.schedule
    }
}

/// Metadata-only record sent over the degraded text channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextFallbackRecord {
    pub session_id: SessionId,
    pub timestamp_ms: u64,
    pub class: DetectionClass,
    pub confidence_x1e4: u16,
}

impl TextFallbackRecord {
    /// `SMS <session> <t_ms> <class> <confidence_x1e4>` wire line.
    pub fn to_line(&self) -> String {
        format!(
            "SMS {} {} {} {}",
            self.session_id, self.timestamp_ms, self.class, self.confidence_x1e4
        )
    }

    /// Payload bytes carried by the text channel; zero by construction.
    pub fn payload_bytes(&self) -> u64 {
        0
    }
}

#[derive(Debug)]
struct PendingEnvelope {
    id: u64,
    bytes: Vec<u8>,
    enqueued_at_ms: u64,
    fallback_notified: bool,
}

/// One full delivery handed to the sink.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub envelope_id: u64,
    /// Transmission latency: bytes / bandwidth * 1000 + rtt.
    pub latency_ms: f64,
    pub bytes: u64,
}

#[derive(Debug, Default, PartialEq)]
pub struct TickOutcome {
    pub transfers: Vec<Transfer>,
    pub fallbacks: Vec<TextFallbackRecord>,
}

/// Receives fully delivered envelopes, e.g. the agent ingest endpoint.
pub trait DeliverySink {
    fn deliver(&mut self, envelope: &[u8]) -> Result<(), String>;
}

/// Collects envelopes in memory; handy default sink.
#[derive(Debug, Default)]
pub struct CollectSink {
    pub delivered: Vec<Vec<u8>>,
}

impl DeliverySink for CollectSink {
    fn deliver(&mut self, envelope: &[u8]) -> Result<(), String> {
        self.delivered.push(envelope.to_vec());
        Ok(())
    }
}

/// FIFO of sealed envelopes awaiting upload.
///
/// Single producer, single consumer: wrap in a mutex to drive `enqueue` and
/// `tick` from two threads of control.
#[derive(Debug)]
pub struct OutboundQueue {
    pending: VecDeque<PendingEnvelope>,
    capacity: usize,
    deadline_ms: u64,
    next_id: u64,
    delivered: u64,
    fallback_sent: u64,
    last_tick_ms: Option<u64>,
}

impl Default for OutboundQueue {
    fn default() -> Self {
        Self::new(DEFAULT_QUEUE_CAPACITY, DEFAULT_FALLBACK_DEADLINE_MS)
    }
}

impl OutboundQueue {
    pub fn new(capacity: usize, deadline_ms: u64) -> Self {
        OutboundQueue {
            pending: VecDeque::new(),
            capacity,
            deadline_ms,
            next_id: 1,
            delivered: 0,
            fallback_sent: 0,
            last_tick_ms: None,
        }
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn fallback_sent(&self) -> u64 {
        self.fallback_sent
    }

    /// Append an envelope; it must at least parse as one.
    pub fn enqueue(&mut self, envelope: Vec<u8>, now_ms: u64) -> Result<u64, TransportError> {
        if self.pending.len() >= self.capacity {
            return Err(TransportError::QueueFull {
                capacity: self.capacity,
            });
        }
        vault::peek_header(&envelope)?;
        let id = self.next_id;
        self.next_id += 1;
        self.pending.push_back(PendingEnvelope {
            id,
            bytes: envelope,
            enqueued_at_ms: now_ms,
            fallback_notified: false,
        });
        Ok(id)
    }

    /// Advance the queue to `now_ms`.
    ///
    /// Link up: deliver whole envelopes from the head while each one's
    /// transmission (bytes / bandwidth * 1000 + rtt) fits before the
    /// interval closes. Link down: emit one fallback record for each pending
    /// envelope whose age exceeded the deadline.
    pub fn tick(
        &mut self,
        link: &LinkModel,
        now_ms: u64,
        sink: &mut dyn DeliverySink,
    ) -> Result<TickOutcome, TransportError> {
        if let Some(last_ms) = self.last_tick_ms {
            if now_ms < last_ms {
                return Err(TransportError::NonMonotonicTick { now_ms, last_ms });
            }
        }
        self.last_tick_ms = Some(now_ms);

        let mut outcome = TickOutcome::default();
        match link.interval_at(now_ms) {
            Some(interval) => {
                let mut clock_ms = now_ms as f64;
                while let Some(head) = self.pending.front() {
                    let latency_ms = head.bytes.len() as f64
                        / interval.bandwidth_bytes_per_s
                        * 1000.0
                        + interval.rtt_ms;
                    if clock_ms + latency_ms > interval.to_ms as f64 {
                        break;
                    }
                    let head = self.pending.pop_front().expect("front checked above");
                    sink.deliver(&head.bytes).map_err(TransportError::Sink)?;
                    clock_ms += latency_ms;
                    self.delivered += 1;
                    outcome.transfers.push(Transfer {
                        envelope_id: head.id,
                        latency_ms,
                        bytes: head.bytes.len() as u64,
                    });
                }
            }
            None => {
                for pending in self
                    .pending
                    .iter_mut()
                    .filter(|p| !p.fallback_notified)
                {
                    if now_ms.saturating_sub(pending.enqueued_at_ms) > self.deadline_ms {
                        pending.fallback_notified = true;
                        self.fallback_sent += 1;
                        let header = vault::peek_header(&pending.bytes)
                            .expect("validated at enqueue");
                        outcome.fallbacks.push(TextFallbackRecord {
                            session_id: header.meta.session_id,
                            timestamp_ms: header.meta.timestamp_ms,
                            class: header.meta.class,
                            confidence_x1e4: header.meta.confidence_x1e4,
                        });
                    }
                }
            }
        }
        Ok(outcome)
    }
}

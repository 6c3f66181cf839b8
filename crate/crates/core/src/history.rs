//! Execution histories: transaction records plus the full event trace, and
//! their versioned JSON form.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ProcessId, SequentialState, TxnId, TxnRecord, Value};
use crate::wire::Message;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("malformed trace json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported trace format {0}, expected {FORMAT_VERSION}")]
    UnsupportedFormat(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum EventKind {
    /// Opens an atomic step; every event until the next one belongs to it.
    HandlerStep,
    Inv,
    Resp,
    Send,
    Recv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub proc: ProcessId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txn_id: Option<TxnId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg_id: Option<u64>,
    /// Destination of a SEND, source of a RECV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Event {
    pub fn payload_kind(&self) -> Option<&'static str> {
        self.payload.as_ref().map(Message::kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryConfig {
    pub protocol: String,
    pub k: usize,
    pub writers: Vec<ProcessId>,
    pub readers: Vec<ProcessId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinator: Option<ProcessId>,
    pub initial: Vec<Value>,
}

impl HistoryConfig {
    pub fn initial_state(&self) -> SequentialState {
        SequentialState::new(self.initial.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub format: u32,
    pub config: HistoryConfig,
    pub records: Vec<TxnRecord>,
    pub events: Vec<Event>,
}

impl History {
    pub fn new(config: HistoryConfig) -> Self {
        Self { format: FORMAT_VERSION, config, records: Vec::new(), events: Vec::new() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("history serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HistoryError> {
        let h: History = serde_json::from_str(s)?;
        if h.format != FORMAT_VERSION {
            return Err(HistoryError::UnsupportedFormat(h.format));
        }
        Ok(h)
    }

    /// Hex SHA-256 of the serialized history.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn record(&self, txn: TxnId) -> Option<&TxnRecord> {
        self.records.iter().find(|r| r.txn_id == txn)
    }

    pub fn is_complete(&self) -> bool {
        self.records.iter().all(TxnRecord::is_complete)
    }

    /// Events grouped into atomic handler steps. Events before the first
    /// HANDLER-STEP marker (none in simulator output) form their own group.
    pub fn steps(&self) -> Vec<&[Event]> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, e) in self.events.iter().enumerate() {
            if e.kind == EventKind::HandlerStep && i > start {
                out.push(&self.events[start..i]);
                start = i;
            }
        }
        if start < self.events.len() {
            out.push(&self.events[start..]);
        }
        out
    }

    /// Copy where incomplete READs are dropped and incomplete WRITEs are
    /// given a response after the last event, so that checkers requiring a
    /// complete history can run on a truncated execution.
    pub fn closed(&self) -> History {
        let end = self.events.last().map_or(0, |e| e.seq) + 1;
        let mut out = self.clone();
        out.records.retain(|r| r.is_complete() || r.is_write());
        for (i, r) in out.records.iter_mut().filter(|r| !r.is_complete()).enumerate() {
            r.resp_seq = Some(end + i as u64);
            r.response = Some(crate::model::Response::Ack);
        }
        out
    }
}

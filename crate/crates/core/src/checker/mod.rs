//! History verification: the tag-witness conditions, an exhaustive
//! strict-serializability oracle, and trace monitors for the read-shape and
//! liveness properties.

mod monitors;
mod oracle;
mod witness;

pub use monitors::{
    check_key_availability, check_nonblocking, check_shape, check_w_liveness, count_rounds_and_versions,
    detect_snapshot_races, tag_gaps, ReadShape,
};
pub use oracle::{brute_force, brute_force_prefix, DEFAULT_CAP};
pub use witness::{check_witness, Witness};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TxnId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("no tag recorded for {0}")]
    MissingTag(TxnId),
    #[error("{0} is incomplete; close the history first")]
    Incomplete(TxnId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    P1,
    P2,
    P3,
    P4,
    #[serde(rename = "NO-SERIALIZATION")]
    NoSerialization,
    #[serde(rename = "NON-BLOCKING")]
    NonBlocking,
    #[serde(rename = "READ-SHAPE")]
    ReadShape,
    #[serde(rename = "W-LIVENESS")]
    Liveness,
    #[serde(rename = "KEY-AVAILABILITY")]
    KeyAvailability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub txns: Vec<TxnId>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<Violation>,
    /// A serialization order, for oracle passes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<TxnId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    pub fn pass() -> Self {
        Self { status: Status::Pass, violation: None, order: None, note: None }
    }

    pub fn pass_with_order(order: Vec<TxnId>) -> Self {
        Self { order: Some(order), ..Self::pass() }
    }

    pub fn fail(condition: Condition, txns: Vec<TxnId>, detail: impl Into<String>) -> Self {
        Self {
            status: Status::Fail,
            violation: Some(Violation { condition, txns, detail: detail.into() }),
            order: None,
            note: None,
        }
    }

    pub fn skipped(reason: impl Into<String>) -> Self {
        Self { status: Status::Skipped, violation: None, order: None, note: Some(reason.into()) }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn is_pass(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn is_fail(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn condition(&self) -> Option<Condition> {
        self.violation.as_ref().map(|v| v.condition)
    }
}


/// Hand-built histories for checker tests.
#[cfg(test)]
pub(crate) mod synth {
    use crate::history::{History, HistoryConfig};
    use crate::model::{Invocation, ObjectId, ProcessId, Response, Tag, TxnId, TxnRecord, Value};

    pub struct Builder {
        h: History,
    }

    impl Builder {
        /// `k` objects with initial values `"0"`.
        pub fn new(k: usize) -> Self {
            Builder {
                h: History::new(HistoryConfig {
                    protocol: "synthetic".into(),
                    k,
                    writers: vec![],
                    readers: vec![],
                    coordinator: None,
                    initial: vec![Value::from("0"); k],
                }),
            }
        }

        fn push(&mut self, client: ProcessId, invocation: Invocation, span: (u64, u64), response: Response, tag: Option<u64>) -> TxnId {
            let seq = self.h.records.iter().filter(|r| r.client == client).count() as u32 + 1;
            let txn_id = TxnId { client, seq };
            self.h.records.push(TxnRecord {
                txn_id,
                client,
                invocation,
                inv_seq: span.0,
                resp_seq: Some(span.1),
                response: Some(response),
                tag: tag.map(Tag),
                fallback: false,
            });
            txn_id
        }

        pub fn write(&mut self, w: u32, items: &[(u32, &str)], span: (u64, u64), tag: Option<u64>) -> TxnId {
            let inv = Invocation::write(items.iter().map(|&(o, v)| (ObjectId(o), Value::from(v))));
            self.push(ProcessId::writer(w), inv, span, Response::Ack, tag)
        }

        pub fn read(&mut self, r: u32, ids: &[u32], values: &[&str], span: (u64, u64), tag: Option<u64>) -> TxnId {
            let inv = Invocation::read(ids.iter().map(|&o| ObjectId(o)));
            let resp = Response::Values(values.iter().map(|&v| Value::from(v)).collect());
            self.push(ProcessId::reader(r), inv, span, resp, tag)
        }

        pub fn build(self) -> History {
            self.h
        }
    }
}

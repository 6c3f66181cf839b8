//! Simulation laboratory for multi-object read-only transaction protocols:
//! a deterministic asynchronous network, three coordinator/log based
//! protocols plus a naive baseline, and checkers for strict
//! serializability, non-blocking reads, round/version counts and write
//! liveness.

pub mod checker;
pub mod harness;
pub mod history;
pub mod model;
pub mod proto;
pub mod simnet;
pub mod wire;

pub use history::{Event, EventKind, History, HistoryConfig};
pub use model::{Invocation, Key, ObjectId, ProcessId, Response, Tag, TxnId, TxnRecord, Value};

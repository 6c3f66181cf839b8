//! Trace monitors: non-blocking servers, per-READ rounds and versions,
//! snapshot races, write liveness, key availability and tag gaps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::checker::{Condition, Verdict};
use crate::history::{Event, EventKind, History};
use crate::model::{Key, ObjectId, ProcessId, Role, Tag, TxnId};
use crate::wire::Message;

/// A server step that receives a read request must send its reply to the
/// requester within that same step.
pub fn check_nonblocking(h: &History, read_request_kinds: &[&str]) -> Verdict {
    for step in h.steps() {
        let Some(recv) = step.iter().find(|e| e.kind == EventKind::Recv) else {
            continue;
        };
        if recv.proc.role != Role::Server || !recv.payload_kind().is_some_and(|k| read_request_kinds.contains(&k)) {
            continue;
        }
        let replied = step
            .iter()
            .any(|e| e.kind == EventKind::Send && e.proc == recv.proc && e.peer == recv.peer);
        if !replied {
            return Verdict::fail(
                Condition::NonBlocking,
                vec![],
                format!(
                    "{} received {} (m{}) from {} without replying in the same step",
                    recv.proc,
                    recv.payload_kind().unwrap_or("?"),
                    recv.msg_id.unwrap_or(0),
                    recv.peer.map_or("?".to_string(), |p| p.to_string()),
                ),
            );
        }
    }
    Verdict::pass()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadShape {
    pub txn_id: TxnId,
    /// Client steps of this READ that sent requests to servers.
    pub rounds: usize,
    /// Most object versions carried by one reply to this READ.
    pub max_versions: usize,
    pub fallback: bool,
}

pub fn count_rounds_and_versions(h: &History) -> Vec<ReadShape> {
    let mut shapes: BTreeMap<TxnId, ReadShape> = h
        .records
        .iter()
        .filter(|r| r.is_read())
        .map(|r| (r.txn_id, ReadShape { txn_id: r.txn_id, rounds: 0, max_versions: 0, fallback: r.fallback }))
        .collect();
    for step in h.steps() {
        let mut counted = None;
        for e in step {
            let Some(shape) = e.txn_id.and_then(|t| shapes.get_mut(&t)) else { continue };
            if e.proc != shape.txn_id.client {
                continue;
            }
            match e.kind {
                EventKind::Send if e.peer.is_some_and(|p| p.role == Role::Server) && counted != Some(shape.txn_id) => {
                    shape.rounds += 1;
                    counted = Some(shape.txn_id);
                }
                EventKind::Recv => {
                    let versions = e.payload.as_ref().map_or(0, Message::versions);
                    shape.max_versions = shape.max_versions.max(versions);
                }
                _ => {}
            }
        }
    }
    h.records.iter().filter_map(|r| shapes.remove(&r.txn_id)).collect()
}

/// Compares READ shapes with what a protocol promises: A and the naive
/// baseline one round of single versions, B two rounds of single versions,
/// C one round (two when flagged as fallback) of any number of versions.
pub fn check_shape(protocol: &str, shapes: &[ReadShape]) -> Verdict {
    for s in shapes {
        let ok = match protocol {
            "a" | "naive" => s.rounds == 1 && s.max_versions == 1,
            "b" => s.rounds == 2 && s.max_versions == 1,
            "c" => s.rounds == if s.fallback { 2 } else { 1 },
            _ => true,
        };
        if !ok {
            return Verdict::fail(
                Condition::ReadShape,
                vec![s.txn_id],
                format!("{} took {} rounds with up to {} versions", s.txn_id, s.rounds, s.max_versions),
            );
        }
    }
    Verdict::pass()
}

/// READs whose key array names a version that reached some server only
/// after that server had sent its snapshot to the READ. Works from the
/// trace alone, independently of the reader's own fallback logic.
pub fn detect_snapshot_races(h: &History) -> Vec<TxnId> {
    let mut send_seq: BTreeMap<u64, &Event> = BTreeMap::new();
    let mut stored_at: BTreeMap<(ProcessId, Key), u64> = BTreeMap::new();
    for e in &h.events {
        match (&e.kind, &e.payload) {
            (EventKind::Send, _) => {
                if let Some(id) = e.msg_id {
                    send_seq.insert(id, e);
                }
            }
            (EventKind::Recv, Some(Message::WriteValue { key, .. })) => {
                stored_at.entry((e.proc, *key)).or_insert(e.seq);
            }
            _ => {}
        }
    }
    let mut racy = Vec::new();
    for r in h.records.iter().filter(|r| r.is_read()) {
        let recvs: Vec<&Event> = h
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Recv && e.proc == r.client && e.txn_id == Some(r.txn_id))
            .collect();
        let Some(keys) = recvs.iter().find_map(|e| e.payload.as_ref().and_then(Message::key_array)) else {
            continue;
        };
        let raced = recvs.iter().any(|e| {
            let (Some(_), Some(peer), Some(id)) = (e.payload.as_ref().and_then(Message::snapshot), e.peer, e.msg_id)
            else {
                return false;
            };
            let Some(sent) = send_seq.get(&id) else { return false };
            let key = keys[ObjectId(peer.index).slot()];
            !key.is_initial() && stored_at.get(&(peer, key)).is_none_or(|&s| s > sent.seq)
        });
        if raced {
            racy.push(r.txn_id);
        }
    }
    racy
}

/// Every WRITE completes, and so does every READ overlapping a WRITE.
pub fn check_w_liveness(h: &History) -> Verdict {
    let pending: Vec<TxnId> = h.records.iter().filter(|r| r.is_write() && !r.is_complete()).map(|r| r.txn_id).collect();
    if !pending.is_empty() {
        return Verdict::fail(Condition::Liveness, pending, "WRITE never completed");
    }
    for r in h.records.iter().filter(|r| r.is_read() && !r.is_complete()) {
        let overlapping: Vec<TxnId> = h
            .records
            .iter()
            .filter(|w| w.is_write() && w.resp_seq.is_some_and(|e| e > r.inv_seq))
            .map(|w| w.txn_id)
            .collect();
        if !overlapping.is_empty() {
            let mut txns = vec![r.txn_id];
            txns.extend(overlapping);
            return Verdict::fail(Condition::Liveness, txns, "READ concurrent with a WRITE never completed");
        }
    }
    Verdict::pass()
}

/// When a key is announced to the log holder (INFORM-READER or
/// UPDATE-COORD arriving), every server it covers already stores it.
pub fn check_key_availability(h: &History) -> Verdict {
    let mut stored: BTreeMap<(ProcessId, Key), u64> = BTreeMap::new();
    for e in h.events.iter().filter(|e| e.kind == EventKind::Recv) {
        match &e.payload {
            Some(Message::WriteValue { key, .. }) => {
                stored.entry((e.proc, *key)).or_insert(e.seq);
            }
            Some(Message::InformReader { key, bitmap }) | Some(Message::UpdateCoord { key, bitmap }) => {
                for i in 1..=bitmap.len() as u32 {
                    let server = ProcessId::server(i);
                    if bitmap.get(ObjectId(i)) && !stored.contains_key(&(server, *key)) {
                        return Verdict::fail(
                            Condition::KeyAvailability,
                            vec![],
                            format!("{key} logged at seq {} before {server} stored it", e.seq),
                        );
                    }
                }
            }
            _ => {}
        }
    }
    Verdict::pass()
}

/// Tags 2, 3, ... that no WRITE received, plus tags received more than once.
pub fn tag_gaps(h: &History) -> (Vec<Tag>, Vec<Tag>) {
    let mut count: BTreeMap<Tag, usize> = BTreeMap::new();
    for t in h.records.iter().filter(|r| r.is_write()).filter_map(|r| r.tag) {
        *count.entry(t).or_default() += 1;
    }
    let Some(&max) = count.keys().next_back() else {
        return (vec![], vec![]);
    };
    let missing = (2..=max.0).map(Tag).filter(|t| !count.contains_key(t)).collect();
    let dup = count.iter().filter(|(_, &c)| c > 1).map(|(t, _)| *t).collect();
    (missing, dup)
}

//! Protocol C: like B, but a READ asks the coordinator for keys and every
//! server for its whole version store in the same round, then picks the
//! wanted versions out of the snapshots.
//!
//! A snapshot can predate the arrival of a value whose key the coordinator
//! already hands out: the server answered before the WRITE-VALUE reached it
//! while the coordinator answered after the write was logged. The reader
//! then fetches the missing versions with one extra READ-VALUE round and
//! flags the transaction as a fallback read.

use std::collections::BTreeMap;

use crate::model::{Invocation, Key, ObjectId, ProcessId, Tag, TxnId, Value};
use crate::proto::common::{read_set, unexpected, CommitTo, CoordLog, Gather, ServerCore, Writer};
use crate::proto::{delegate_actor, Protocol, SystemSpec};
use crate::simnet::{Actor, Ctx, ProtocolError};
use crate::wire::Message;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum ReadPhase {
    Idle,
    Collect {
        ids: Vec<ObjectId>,
        tags: Option<(Tag, Vec<Key>)>,
        snaps: BTreeMap<ObjectId, Vec<(Key, Value)>>,
    },
    Fallback { tag: Tag, gather: Gather },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReaderC {
    id: u32,
    coordinator: ProcessId,
    phase: ReadPhase,
}

impl ReaderC {
    pub fn new(id: u32, coordinator: ProcessId) -> Self {
        Self { id, coordinator, phase: ReadPhase::Idle }
    }

    fn me(&self) -> ProcessId {
        ProcessId::reader(self.id)
    }

    /// Resolves keys against snapshots once everything has arrived.
    fn try_finish(&mut self, ctx: &mut Ctx) {
        let ReadPhase::Collect { ids, tags: Some((tag, keys)), snaps } = &self.phase else {
            return;
        };
        if snaps.len() < ids.len() {
            return;
        }
        let tag = *tag;
        let selected: Vec<Key> = ids.iter().map(|o| keys[o.slot()]).collect();
        let mut gather = Gather::new(ids.clone(), selected);
        for (o, snap) in snaps {
            let key = gather.keys()[gather.ids().iter().position(|x| x == o).expect("snapshot of a read object")];
            if let Some((_, v)) = snap.iter().find(|(k, _)| *k == key) {
                gather.fill(*o, key, v.clone());
            }
        }
        if let Some(resp) = gather.response() {
            ctx.complete(resp, Some(tag));
            self.phase = ReadPhase::Idle;
            return;
        }
        for (o, key) in gather.missing() {
            ctx.send(ProcessId::server_of(o), Message::ReadValue { key });
        }
        ctx.mark_fallback();
        self.phase = ReadPhase::Fallback { tag, gather };
    }
}

impl Actor for ReaderC {
    fn on_invoke(&mut self, _: TxnId, inv: &Invocation, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let ids = read_set(self.me(), inv)?;
        let coord_obj = ObjectId(self.coordinator.index);
        for &o in &ids {
            if o == coord_obj {
                ctx.send(self.coordinator, Message::GetTagArrayReadValues { ids: ids.clone() });
            } else {
                ctx.send(ProcessId::server_of(o), Message::ReadValues);
            }
        }
        if !ids.contains(&coord_obj) {
            ctx.send(self.coordinator, Message::GetTagArray { ids: ids.clone() });
        }
        self.phase = ReadPhase::Collect { ids, tags: None, snaps: BTreeMap::new() };
        Ok(())
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let me = self.me();
        let coordinator = self.coordinator;
        match (&mut self.phase, msg) {
            (ReadPhase::Collect { tags: tags @ None, .. }, Message::TagArray { tag, keys }) if from == coordinator => {
                *tags = Some((tag, keys));
            }
            (ReadPhase::Collect { tags: tags @ None, snaps, .. }, Message::TagArraySnapshot { tag, keys, vals })
                if from == coordinator =>
            {
                *tags = Some((tag, keys));
                snaps.insert(ObjectId(from.index), vals);
            }
            (ReadPhase::Collect { ids, snaps, .. }, Message::ValuesSnapshot { vals })
                if ids.contains(&ObjectId(from.index)) && !snaps.contains_key(&ObjectId(from.index)) =>
            {
                snaps.insert(ObjectId(from.index), vals);
            }
            (ReadPhase::Fallback { tag, gather }, Message::Value { key, value }) => {
                if !gather.fill(ObjectId(from.index), key, value.clone()) {
                    return Err(unexpected(me, from, &Message::Value { key, value }));
                }
                if let Some(resp) = gather.response() {
                    ctx.complete(resp, Some(*tag));
                    self.phase = ReadPhase::Idle;
                }
                return Ok(());
            }
            (_, msg) => return Err(unexpected(me, from, &msg)),
        }
        self.try_finish(ctx);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServerC {
    core: ServerCore,
    coord: Option<CoordLog>,
}

impl ServerC {
    pub fn new(core: ServerCore, coord: Option<CoordLog>) -> Self {
        Self { core, coord }
    }

    pub fn core(&self) -> &ServerCore {
        &self.core
    }
}

impl Actor for ServerC {
    fn on_invoke(&mut self, _: TxnId, _: &Invocation, _: &mut Ctx) -> Result<(), ProtocolError> {
        Err(ProtocolError::BadInvocation { proc: self.core.me(), detail: "servers run no transactions".into() })
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match (msg, &mut self.coord) {
            (Message::WriteValue { key, value }, _) => self.core.store(from, key, value, ctx),
            (Message::ReadValue { key }, _) => self.core.read_value(from, key, ctx),
            (Message::ReadValues, _) => {
                ctx.send(from, Message::ValuesSnapshot { vals: self.core.vals().snapshot() });
                Ok(())
            }
            (Message::UpdateCoord { key, bitmap }, Some(coord)) => {
                coord.update(from, key, bitmap, ctx);
                Ok(())
            }
            (Message::GetTagArray { .. }, Some(coord)) => {
                let (tag, keys) = coord.tag_array();
                ctx.send(from, Message::TagArray { tag, keys });
                Ok(())
            }
            (Message::GetTagArrayReadValues { .. }, Some(coord)) => {
                let (tag, keys) = coord.tag_array();
                ctx.send(from, Message::TagArraySnapshot { tag, keys, vals: self.core.vals().snapshot() });
                Ok(())
            }
            (other, _) => Err(self.core.unexpected(from, &other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeC {
    Writer(Writer),
    Reader(ReaderC),
    Server(ServerC),
}

delegate_actor!(NodeC { Writer, Reader, Server });

pub struct ProtoC;

impl Protocol for ProtoC {
    type Node = NodeC;
    const NAME: &'static str = "c";
    const CLIENT_TO_CLIENT: bool = false;
    const READ_REQUEST_KINDS: &'static [&'static str] =
        &["GET-TAG-ARRAY", "READ-VALUES", "GET-TAG-ARRAY+READ-VALUES", "READ-VALUE"];
    const USES_COORDINATOR: bool = true;

    fn nodes(spec: &SystemSpec) -> Vec<(ProcessId, NodeC)> {
        let coord = ProcessId::server_of(spec.coordinator);
        let mut out: Vec<(ProcessId, NodeC)> = spec
            .writer_ids()
            .into_iter()
            .map(|p| (p, NodeC::Writer(Writer::new(p.index, spec.k, CommitTo::Coordinator(coord)))))
            .collect();
        out.extend(spec.reader_ids().into_iter().map(|p| (p, NodeC::Reader(ReaderC::new(p.index, coord)))));
        for (i, v) in spec.initial.iter().enumerate() {
            let o = ObjectId(i as u32 + 1);
            let log = (o == spec.coordinator).then(|| CoordLog::new(spec.k));
            out.push((ProcessId::server_of(o), NodeC::Server(ServerC::new(ServerCore::new(o, v.clone()), log))));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::EventKind;
    use crate::model::Bitmap;
    use crate::proto::build_world;
    use crate::proto::testutil::{outcome, r, run_in_order, scripts, vals, w};
    use crate::simnet::{run_to_quiescence, ArrivalPlan, Scheduler, SchedulerPolicy, ScriptChoice};

    const W1: ProcessId = ProcessId::writer(1);
    const R1: ProcessId = ProcessId::reader(1);
    const S1: ProcessId = ProcessId::server(1);
    const S2: ProcessId = ProcessId::server(2);

    fn deliver(to: ProcessId, from: Option<ProcessId>, kind: Option<&str>) -> ScriptChoice {
        ScriptChoice::Deliver { to, from, kind: kind.map(str::to_string) }
    }

    #[test]
    fn sequential_reads_take_one_round() {
        let spec = SystemSpec::new(2, 1, 1);
        let h = run_in_order::<ProtoC>(&spec, &[(R1, r(&[1, 2])), (W1, w(&[(1, "5"), (2, "7")])), (R1, r(&[1, 2]))]);
        assert_eq!(outcome(&h, 0), (vals(&["v1^0", "v2^0"]), Some(Tag(1))));
        assert_eq!(outcome(&h, 1).1, Some(Tag(2)));
        assert_eq!(outcome(&h, 2), (vals(&["5", "7"]), Some(Tag(2))));
        assert!(h.records.iter().all(|r| !r.fallback));
        let reader_sending_steps = h
            .steps()
            .iter()
            .filter(|s| s.iter().any(|e| e.kind == EventKind::Send && e.proc == R1))
            .count();
        assert_eq!(reader_sending_steps, 2);
    }

    #[test]
    fn merged_request_only_when_coordinator_object_is_read() {
        let spec = SystemSpec::new(3, 0, 1);
        let h = run_in_order::<ProtoC>(&spec, &[(R1, r(&[2, 3])), (R1, r(&[1, 3]))]);
        let kinds: Vec<(u32, &str)> = h
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Send && e.proc == R1)
            .map(|e| (e.txn_id.unwrap().seq, e.payload_kind().unwrap()))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (1, "READ-VALUES"),
                (1, "READ-VALUES"),
                (1, "GET-TAG-ARRAY"),
                (2, "GET-TAG-ARRAY+READ-VALUES"),
                (2, "READ-VALUES"),
            ]
        );
        assert_eq!(outcome(&h, 0), (vals(&["v2^0", "v3^0"]), Some(Tag(1))));
    }

    #[test]
    fn snapshot_race_falls_back_to_one_extra_round() {
        let spec = SystemSpec::new(2, 1, 1);
        let world = build_world::<ProtoC>(
            &spec,
            scripts(&[(W1, w(&[(1, "5"), (2, "7")])), (R1, r(&[1, 2]))]),
            ArrivalPlan::AllAtStart,
        );
        let script = vec![
            ScriptChoice::Invoke(W1),
            deliver(S1, Some(W1), Some("WRITE-VALUE")),
            ScriptChoice::Invoke(R1),
            deliver(S2, Some(R1), Some("READ-VALUES")),
            deliver(S2, Some(W1), Some("WRITE-VALUE")),
            deliver(W1, None, Some("ACK-VALUE")),
            deliver(W1, None, Some("ACK-VALUE")),
            deliver(S1, Some(W1), Some("UPDATE-COORD")),
            deliver(S1, Some(R1), Some("GET-TAG-ARRAY+READ-VALUES")),
            deliver(R1, Some(S2), Some("VALUES-SNAPSHOT")),
            deliver(R1, Some(S1), Some("TAG-ARRAY+VALUES-SNAPSHOT")),
        ];
        let h = run_to_quiescence(world, &mut Scheduler::new(&SchedulerPolicy::Scripted(script)), 1000).unwrap();
        let read = h.records.iter().find(|r| r.is_read()).unwrap();
        assert!(read.fallback);
        assert_eq!(read.response, Some(crate::model::Response::Values(vals(&["5", "7"]))));
        assert_eq!(read.tag, Some(Tag(2)));
        let fallback_sends: Vec<_> = h
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Send && e.proc == R1 && e.payload_kind() == Some("READ-VALUE"))
            .collect();
        assert_eq!(fallback_sends.len(), 1);
        assert_eq!(fallback_sends[0].peer, Some(S2));
    }

    #[test]
    fn snapshot_sizes_grow_with_writes() {
        let mut s = ServerC::new(ServerCore::new(ObjectId(2), "v2^0".into()), None);
        let mut ctx = Ctx::new(S2);
        s.on_message(R1, Message::ReadValues, &mut ctx).unwrap();
        assert_eq!(ctx.sent()[0].1.versions(), 1);
        for z in 1..=3 {
            s.on_message(W1, Message::WriteValue { key: Key::new(z, 1), value: format!("x{z}").into() }, &mut ctx)
                .unwrap();
        }
        s.on_message(R1, Message::ReadValues, &mut ctx).unwrap();
        assert_eq!(ctx.sent().last().unwrap().1.versions(), 4);
    }

    #[test]
    fn single_object_write_bitmap() {
        let spec = SystemSpec::new(4, 1, 0);
        let h = run_in_order::<ProtoC>(&spec, &[(W1, w(&[(3, "4")]))]);
        let bitmap = h.events.iter().find_map(|e| match &e.payload {
            Some(Message::UpdateCoord { bitmap, .. }) => Some(bitmap.clone()),
            _ => None,
        });
        assert_eq!(bitmap, Some(Bitmap::from_objects(4, [ObjectId(3)])));
        assert_eq!(bitmap.unwrap().to_string(), "0010");
    }
}

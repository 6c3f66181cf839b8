//! Protocol B: many writers, many readers, no client-to-client messages.
//! The coordinator server keeps the write log; a READ first asks it for the
//! key array, then fetches one version from each server.

use crate::model::{Invocation, ObjectId, ProcessId, Tag, TxnId};
use crate::proto::common::{read_set, unexpected, CommitTo, CoordLog, Gather, ServerCore, Writer};
use crate::proto::{delegate_actor, Protocol, SystemSpec};
use crate::simnet::{Actor, Ctx, ProtocolError};
use crate::wire::Message;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum ReadPhase {
    Idle,
    Tags { ids: Vec<ObjectId> },
    Values { tag: Tag, gather: Gather },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReaderB {
    id: u32,
    coordinator: ProcessId,
    phase: ReadPhase,
}

impl ReaderB {
    pub fn new(id: u32, coordinator: ProcessId) -> Self {
        Self { id, coordinator, phase: ReadPhase::Idle }
    }

    fn me(&self) -> ProcessId {
        ProcessId::reader(self.id)
    }
}

impl Actor for ReaderB {
    fn on_invoke(&mut self, _: TxnId, inv: &Invocation, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let ids = read_set(self.me(), inv)?;
        ctx.send(self.coordinator, Message::GetTagArray { ids: ids.clone() });
        self.phase = ReadPhase::Tags { ids };
        Ok(())
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let me = self.me();
        match (&mut self.phase, msg) {
            (ReadPhase::Tags { ids }, Message::TagArray { tag, keys }) if from == self.coordinator => {
                let ids = std::mem::take(ids);
                let selected: Vec<_> = ids.iter().map(|o| keys[o.slot()]).collect();
                for (&o, &key) in ids.iter().zip(&selected) {
                    ctx.send(ProcessId::server_of(o), Message::ReadValue { key });
                }
                self.phase = ReadPhase::Values { tag, gather: Gather::new(ids, selected) };
                Ok(())
            }
            (ReadPhase::Values { tag, gather }, Message::Value { key, value }) => {
                if !gather.fill(ObjectId(from.index), key, value.clone()) {
                    return Err(unexpected(me, from, &Message::Value { key, value }));
                }
                if let Some(resp) = gather.response() {
                    ctx.complete(resp, Some(*tag));
                    self.phase = ReadPhase::Idle;
                }
                Ok(())
            }
            (_, msg) => Err(unexpected(me, from, &msg)),
        }
    }
}

/// Object server; the coordinator additionally holds the write log.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServerB {
    core: ServerCore,
    coord: Option<CoordLog>,
}

impl ServerB {
    pub fn new(core: ServerCore, coord: Option<CoordLog>) -> Self {
        Self { core, coord }
    }

    pub fn core(&self) -> &ServerCore {
        &self.core
    }

    pub fn coord(&self) -> Option<&CoordLog> {
        self.coord.as_ref()
    }
}

impl Actor for ServerB {
    fn on_invoke(&mut self, _: TxnId, _: &Invocation, _: &mut Ctx) -> Result<(), ProtocolError> {
        Err(ProtocolError::BadInvocation { proc: self.core.me(), detail: "servers run no transactions".into() })
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match (msg, &mut self.coord) {
            (Message::WriteValue { key, value }, _) => self.core.store(from, key, value, ctx),
            (Message::ReadValue { key }, _) => self.core.read_value(from, key, ctx),
            (Message::UpdateCoord { key, bitmap }, Some(coord)) => {
                coord.update(from, key, bitmap, ctx);
                Ok(())
            }
            // The read set is carried on the wire but the tag is the log length.
            (Message::GetTagArray { .. }, Some(coord)) => {
                let (tag, keys) = coord.tag_array();
                ctx.send(from, Message::TagArray { tag, keys });
                Ok(())
            }
            (other, _) => Err(self.core.unexpected(from, &other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeB {
    Writer(Writer),
    Reader(ReaderB),
    Server(ServerB),
}

delegate_actor!(NodeB { Writer, Reader, Server });

pub struct ProtoB;

impl Protocol for ProtoB {
    type Node = NodeB;
    const NAME: &'static str = "b";
    const CLIENT_TO_CLIENT: bool = false;
    const READ_REQUEST_KINDS: &'static [&'static str] = &["GET-TAG-ARRAY", "READ-VALUE"];
    const USES_COORDINATOR: bool = true;

    fn nodes(spec: &SystemSpec) -> Vec<(ProcessId, NodeB)> {
        let coord = ProcessId::server_of(spec.coordinator);
        let mut out: Vec<(ProcessId, NodeB)> = spec
            .writer_ids()
            .into_iter()
            .map(|p| (p, NodeB::Writer(Writer::new(p.index, spec.k, CommitTo::Coordinator(coord)))))
            .collect();
        out.extend(spec.reader_ids().into_iter().map(|p| (p, NodeB::Reader(ReaderB::new(p.index, coord)))));
        for (i, v) in spec.initial.iter().enumerate() {
            let o = ObjectId(i as u32 + 1);
            let log = (o == spec.coordinator).then(|| CoordLog::new(spec.k));
            out.push((ProcessId::server_of(o), NodeB::Server(ServerB::new(ServerCore::new(o, v.clone()), log))));
        }
        out
    }
}

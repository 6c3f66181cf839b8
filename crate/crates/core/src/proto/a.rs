//! Protocol A: many writers, one reader. The reader itself keeps the write
//! log, so writers inform it directly once their values are stored and a
//! READ needs a single round of READ-VALUE requests.

use crate::model::{Invocation, Key, ObjectId, ProcessId, Tag, TxnId, Value, WriteLog};
use crate::proto::common::{read_set, unexpected, CommitTo, Gather, ServerCore, Writer};
use crate::proto::{delegate_actor, Protocol, SystemSpec};
use crate::simnet::{Actor, Ctx, ProtocolError};
use crate::wire::Message;

/// The single reader and its write log.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReaderA {
    log: WriteLog,
    active: Option<(Tag, Gather)>,
}

impl ReaderA {
    pub fn new(k: usize) -> Self {
        Self { log: WriteLog::new(k), active: None }
    }

    pub fn log(&self) -> &WriteLog {
        &self.log
    }

    fn me() -> ProcessId {
        ProcessId::reader(1)
    }
}

impl Actor for ReaderA {
    fn on_invoke(&mut self, _: TxnId, inv: &Invocation, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let ids = read_set(Self::me(), inv)?;
        let keys: Vec<Key> = ids.iter().map(|&o| self.log.latest_key(o)).collect();
        for (&o, &key) in ids.iter().zip(&keys) {
            ctx.send(ProcessId::server_of(o), Message::ReadValue { key });
        }
        self.active = Some((self.log.len(), Gather::new(ids, keys)));
        Ok(())
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match msg {
            // Served even while a READ is outstanding; that READ keeps the
            // keys it already selected.
            Message::InformReader { key, bitmap } => {
                let tag = self.log.append(key, bitmap);
                ctx.send(from, Message::AckInform { key, tag });
                Ok(())
            }
            Message::Value { key, value } => {
                let Some((tag, gather)) = &mut self.active else {
                    return Err(unexpected(Self::me(), from, &Message::Value { key, value }));
                };
                if !gather.fill(ObjectId(from.index), key, value.clone()) {
                    return Err(unexpected(Self::me(), from, &Message::Value { key, value }));
                }
                if let Some(resp) = gather.response() {
                    ctx.complete(resp, Some(*tag));
                    self.active = None;
                }
                Ok(())
            }
            other => Err(unexpected(Self::me(), from, &other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServerA(pub ServerCore);

impl Actor for ServerA {
    fn on_invoke(&mut self, _: TxnId, _: &Invocation, _: &mut Ctx) -> Result<(), ProtocolError> {
        Err(ProtocolError::BadInvocation { proc: self.0.me(), detail: "servers run no transactions".into() })
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match msg {
            Message::WriteValue { key, value } => self.0.store(from, key, value, ctx),
            Message::ReadValue { key } => self.0.read_value(from, key, ctx),
            other => Err(self.0.unexpected(from, &other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeA {
    Writer(Writer),
    Reader(ReaderA),
    Server(ServerA),
}

delegate_actor!(NodeA { Writer, Reader, Server });

pub struct ProtoA;

impl Protocol for ProtoA {
    type Node = NodeA;
    const NAME: &'static str = "a";
    const CLIENT_TO_CLIENT: bool = true;
    const READ_REQUEST_KINDS: &'static [&'static str] = &["READ-VALUE"];
    const USES_COORDINATOR: bool = false;

    fn nodes(spec: &SystemSpec) -> Vec<(ProcessId, NodeA)> {
        let reader = ProcessId::reader(1);
        let mut out: Vec<(ProcessId, NodeA)> = spec
            .writer_ids()
            .into_iter()
            .map(|p| (p, NodeA::Writer(Writer::new(p.index, spec.k, CommitTo::Reader(reader)))))
            .collect();
        out.push((reader, NodeA::Reader(ReaderA::new(spec.k))));
        out.extend(spec.initial.iter().enumerate().map(|(i, v): (usize, &Value)| {
            let o = ObjectId(i as u32 + 1);
            (ProcessId::server_of(o), NodeA::Server(ServerA(ServerCore::new(o, v.clone()))))
        }));
        out
    }
}

//! Coordinator-free baseline. Servers keep only their latest version, writes
//! take one phase, and reads send one request per server. Reads are one
//! round, one version and non-blocking, and writes always finish, so strict
//! serializability is the property that has to give.

use crate::model::{Invocation, Key, ObjectId, ProcessId, Response, TxnId, Value};
use crate::proto::common::{read_set, unexpected, CommitTo, Writer};
use crate::proto::{delegate_actor, Protocol, SystemSpec};
use crate::simnet::{Actor, Ctx, ProtocolError};
use crate::wire::Message;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NaiveServer {
    object: ObjectId,
    latest: (Key, Value),
}

impl NaiveServer {
    pub fn new(object: ObjectId, initial: Value) -> Self {
        Self { object, latest: (Key::INITIAL, initial) }
    }

    pub fn latest(&self) -> &(Key, Value) {
        &self.latest
    }

    fn me(&self) -> ProcessId {
        ProcessId::server_of(self.object)
    }
}

impl Actor for NaiveServer {
    fn on_invoke(&mut self, _: TxnId, _: &Invocation, _: &mut Ctx) -> Result<(), ProtocolError> {
        Err(ProtocolError::BadInvocation { proc: self.me(), detail: "servers run no transactions".into() })
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match msg {
            Message::WriteValue { key, value } => {
                self.latest = (key, value);
                ctx.send(from, Message::AckValue { key });
                Ok(())
            }
            Message::ReadReq => {
                let (key, value) = self.latest.clone();
                ctx.send(from, Message::Value { key, value });
                Ok(())
            }
            other => Err(unexpected(self.me(), from, &other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NaiveReader {
    id: u32,
    /// Read set and the values received so far.
    active: Option<(Vec<ObjectId>, Vec<Option<Value>>)>,
}

impl NaiveReader {
    pub fn new(id: u32) -> Self {
        Self { id, active: None }
    }

    fn me(&self) -> ProcessId {
        ProcessId::reader(self.id)
    }
}

impl Actor for NaiveReader {
    fn on_invoke(&mut self, _: TxnId, inv: &Invocation, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let ids = read_set(self.me(), inv)?;
        for &o in &ids {
            ctx.send(ProcessId::server_of(o), Message::ReadReq);
        }
        let n = ids.len();
        self.active = Some((ids, vec![None; n]));
        Ok(())
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let me = self.me();
        let (Some((ids, values)), Message::Value { value, .. }) = (&mut self.active, &msg) else {
            return Err(unexpected(me, from, &msg));
        };
        match ids.iter().position(|&o| o == ObjectId(from.index)) {
            Some(i) if values[i].is_none() => values[i] = Some(value.clone()),
            _ => return Err(unexpected(me, from, &msg)),
        }
        if let Some(all) = values.iter().cloned().collect::<Option<Vec<_>>>() {
            ctx.complete(Response::Values(all), None);
            self.active = None;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeNaive {
    Writer(Writer),
    Reader(NaiveReader),
    Server(NaiveServer),
}

delegate_actor!(NodeNaive { Writer, Reader, Server });

pub struct ProtoNaive;

impl Protocol for ProtoNaive {
    type Node = NodeNaive;
    const NAME: &'static str = "naive";
    const CLIENT_TO_CLIENT: bool = false;
    const READ_REQUEST_KINDS: &'static [&'static str] = &["READ-REQ"];
    const USES_COORDINATOR: bool = false;

    fn nodes(spec: &SystemSpec) -> Vec<(ProcessId, NodeNaive)> {
        let mut out: Vec<(ProcessId, NodeNaive)> = spec
            .writer_ids()
            .into_iter()
            .map(|p| (p, NodeNaive::Writer(Writer::new(p.index, spec.k, CommitTo::Nobody))))
            .collect();
        out.extend(spec.reader_ids().into_iter().map(|p| (p, NodeNaive::Reader(NaiveReader::new(p.index)))));
        for (i, v) in spec.initial.iter().enumerate() {
            let o = ObjectId(i as u32 + 1);
            out.push((ProcessId::server_of(o), NodeNaive::Server(NaiveServer::new(o, v.clone()))));
        }
        out
    }
}

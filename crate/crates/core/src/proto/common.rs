//! Pieces shared by several protocols: the two-phase writer and the
//! version-store server.

use std::collections::BTreeSet;

use crate::model::{Bitmap, Invocation, Key, ObjectId, ProcessId, Response, Tag, TxnId, Value, VersionStore, WriteLog};
use crate::simnet::{Actor, Ctx, ProtocolError};
use crate::wire::Message;

/// Where a writer announces a fully stored write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommitTo {
    /// INFORM-READER to the single reader.
    Reader(ProcessId),
    /// UPDATE-COORD to the coordinator server.
    Coordinator(ProcessId),
    /// Complete as soon as every value is acknowledged.
    Nobody,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Phase {
    Idle,
    Values { key: Key, bitmap: Bitmap, awaiting: BTreeSet<ObjectId> },
    Commit { key: Key },
}

/// Writer client: stores the new value at every written server, then
/// (unless [`CommitTo::Nobody`]) announces the key and takes the tag from
/// the acknowledgement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Writer {
    id: u32,
    k: usize,
    z: u64,
    commit: CommitTo,
    phase: Phase,
}

impl Writer {
    pub fn new(id: u32, k: usize, commit: CommitTo) -> Self {
        Self { id, k, z: 0, commit, phase: Phase::Idle }
    }

    /// Number of WRITEs begun so far.
    pub fn z(&self) -> u64 {
        self.z
    }

    fn me(&self) -> ProcessId {
        ProcessId::writer(self.id)
    }

    fn unexpected(&self, from: ProcessId, msg: &Message) -> ProtocolError {
        ProtocolError::Unexpected { proc: self.me(), from, kind: msg.kind() }
    }
}

impl Actor for Writer {
    fn on_invoke(&mut self, _: TxnId, inv: &Invocation, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let Invocation::Write { write_set } = inv else {
            return Err(ProtocolError::BadInvocation { proc: self.me(), detail: "READ at a writer".into() });
        };
        self.z += 1;
        let key = Key::new(self.z, self.id);
        let objects: BTreeSet<ObjectId> = write_set.iter().map(|(o, _)| *o).collect();
        for (o, v) in write_set {
            ctx.send(ProcessId::server_of(*o), Message::WriteValue { key, value: v.clone() });
        }
        let bitmap = Bitmap::from_objects(self.k, objects.iter().copied());
        self.phase = Phase::Values { key, bitmap, awaiting: objects };
        Ok(())
    }

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        match (&mut self.phase, &msg) {
            (Phase::Values { key, bitmap, awaiting }, Message::AckValue { key: acked })
                if acked == key && awaiting.contains(&ObjectId(from.index)) =>
            {
                awaiting.remove(&ObjectId(from.index));
                if !awaiting.is_empty() {
                    return Ok(());
                }
                let (key, bitmap) = (*key, bitmap.clone());
                match self.commit {
                    CommitTo::Reader(r) => {
                        ctx.send(r, Message::InformReader { key, bitmap });
                        self.phase = Phase::Commit { key };
                    }
                    CommitTo::Coordinator(c) => {
                        ctx.send(c, Message::UpdateCoord { key, bitmap });
                        self.phase = Phase::Commit { key };
                    }
                    CommitTo::Nobody => {
                        ctx.complete(Response::Ack, None);
                        self.phase = Phase::Idle;
                    }
                }
                Ok(())
            }
            (Phase::Commit { key }, Message::AckInform { key: acked, tag })
            | (Phase::Commit { key }, Message::AckCoord { key: acked, tag })
                if acked == key =>
            {
                ctx.complete(Response::Ack, Some(*tag));
                self.phase = Phase::Idle;
                Ok(())
            }
            _ => Err(self.unexpected(from, &msg)),
        }
    }
}

/// Server of one object holding every version it has received.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServerCore {
    object: ObjectId,
    vals: VersionStore,
}

impl ServerCore {
    pub fn new(object: ObjectId, initial: Value) -> Self {
        Self { object, vals: VersionStore::new(initial) }
    }

    pub fn me(&self) -> ProcessId {
        ProcessId::server_of(self.object)
    }

    pub fn vals(&self) -> &VersionStore {
        &self.vals
    }

    /// WRITE-VALUE: store and acknowledge.
    pub fn store(&mut self, from: ProcessId, key: Key, value: Value, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        if !self.vals.insert(key, value) {
            return Err(ProtocolError::KeyConflict { proc: self.me(), key });
        }
        ctx.send(from, Message::AckValue { key });
        Ok(())
    }

    /// READ-VALUE: reply the version stored under `key`.
    pub fn read_value(&self, from: ProcessId, key: Key, ctx: &mut Ctx) -> Result<(), ProtocolError> {
        let value = self
            .vals
            .get(&key)
            .ok_or(ProtocolError::MissingKey { proc: self.me(), key })?
            .clone();
        ctx.send(from, Message::Value { key, value });
        Ok(())
    }

    pub fn unexpected(&self, from: ProcessId, msg: &Message) -> ProtocolError {
        ProtocolError::Unexpected { proc: self.me(), from, kind: msg.kind() }
    }
}

/// The coordinator's write log (B and C).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoordLog {
    k: usize,
    log: WriteLog,
}

impl CoordLog {
    pub fn new(k: usize) -> Self {
        Self { k, log: WriteLog::new(k) }
    }

    pub fn log(&self) -> &WriteLog {
        &self.log
    }

    /// UPDATE-COORD: append and acknowledge with the new length.
    pub fn update(&mut self, from: ProcessId, key: Key, bitmap: Bitmap, ctx: &mut Ctx) {
        let tag = self.log.append(key, bitmap);
        ctx.send(from, Message::AckCoord { key, tag });
    }

    /// Read tag and the latest key of every object.
    pub fn tag_array(&self) -> (Tag, Vec<Key>) {
        (self.log.len(), self.log.key_array(self.k))
    }
}

/// Collects one value per read object, in read-set order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Gather {
    ids: Vec<ObjectId>,
    keys: Vec<Key>,
    values: Vec<Option<Value>>,
}

impl Gather {
    pub fn new(ids: Vec<ObjectId>, keys: Vec<Key>) -> Self {
        let values = vec![None; ids.len()];
        Self { ids, keys, values }
    }

    pub fn ids(&self) -> &[ObjectId] {
        &self.ids
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    /// Fills the slot for `object` if it is still open and `key` is the one
    /// requested. Returns false for anything else.
    pub fn fill(&mut self, object: ObjectId, key: Key, value: Value) -> bool {
        match self.ids.iter().position(|&o| o == object) {
            Some(i) if self.keys[i] == key && self.values[i].is_none() => {
                self.values[i] = Some(value);
                true
            }
            _ => false,
        }
    }

    pub fn missing(&self) -> impl Iterator<Item = (ObjectId, Key)> + '_ {
        self.ids
            .iter()
            .zip(&self.keys)
            .zip(&self.values)
            .filter(|(_, v)| v.is_none())
            .map(|((o, k), _)| (*o, *k))
    }

    pub fn is_done(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// The READ response once every slot is filled.
    pub fn response(&self) -> Option<Response> {
        self.values.iter().cloned().collect::<Option<Vec<_>>>().map(Response::Values)
    }
}

pub(crate) fn read_set(me: ProcessId, inv: &Invocation) -> Result<Vec<ObjectId>, ProtocolError> {
    match inv {
        Invocation::Read { read_set } => Ok(read_set.clone()),
        Invocation::Write { .. } => {
            Err(ProtocolError::BadInvocation { proc: me, detail: "WRITE at a reader".into() })
        }
    }
}

pub(crate) fn unexpected(me: ProcessId, from: ProcessId, msg: &Message) -> ProtocolError {
    ProtocolError::Unexpected { proc: me, from, kind: msg.kind() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::HistoryConfig;
    use crate::simnet::{ArrivalPlan, ChannelPolicy, World};

    #[derive(Debug, Clone, PartialEq, Eq, Hash)]
    enum Node {
        W(Writer),
        S(ServerCore),
    }

    impl Actor for Node {
        fn on_invoke(&mut self, txn: TxnId, inv: &Invocation, ctx: &mut Ctx) -> Result<(), ProtocolError> {
            match self {
                Node::W(w) => w.on_invoke(txn, inv, ctx),
                Node::S(_) => unreachable!(),
            }
        }
        fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
            match (self, msg) {
                (Node::W(w), msg) => w.on_message(from, msg, ctx),
                (Node::S(s), Message::WriteValue { key, value }) => s.store(from, key, value, ctx),
                (Node::S(s), msg) => Err(s.unexpected(from, &msg)),
            }
        }
    }

    fn world(script: Vec<Invocation>) -> World<Node> {
        let config = HistoryConfig {
            protocol: "test".into(),
            k: 2,
            writers: vec![ProcessId::writer(1)],
            readers: vec![],
            coordinator: None,
            initial: vec![Value::from("a"), Value::from("b")],
        };
        World::new(
            config,
            [
                (ProcessId::writer(1), Node::W(Writer::new(1, 2, CommitTo::Nobody))),
                (ProcessId::server(1), Node::S(ServerCore::new(ObjectId(1), "a".into()))),
                (ProcessId::server(2), Node::S(ServerCore::new(ObjectId(2), "b".into()))),
            ],
            [(ProcessId::writer(1), script)],
            ChannelPolicy { client_to_client: false },
            ArrivalPlan::AllAtStart,
        )
    }

    #[test]
    fn duplicate_write_value_is_idempotent() {
        let mut s = ServerCore::new(ObjectId(1), "a".into());
        let mut ctx = Ctx::new(ProcessId::server(1));
        s.store(ProcessId::writer(1), Key::new(1, 1), "5".into(), &mut ctx).unwrap();
        s.store(ProcessId::writer(1), Key::new(1, 1), "5".into(), &mut ctx).unwrap();
        assert_eq!(s.vals().len(), 2);
        assert_eq!(ctx.sent().len(), 2);
        let err = s.store(ProcessId::writer(1), Key::new(1, 1), "6".into(), &mut ctx).unwrap_err();
        assert!(matches!(err, ProtocolError::KeyConflict { .. }));
    }

    #[test]
    fn read_value_of_initial_and_missing_keys() {
        let s = ServerCore::new(ObjectId(2), "b".into());
        let mut ctx = Ctx::new(ProcessId::server(2));
        s.read_value(ProcessId::reader(1), Key::INITIAL, &mut ctx).unwrap();
        assert_eq!(ctx.sent()[0].1, Message::Value { key: Key::INITIAL, value: "b".into() });
        assert_eq!(
            s.read_value(ProcessId::reader(1), Key::new(3, 1), &mut ctx),
            Err(ProtocolError::MissingKey { proc: ProcessId::server(2), key: Key::new(3, 1) })
        );
    }

    #[test]
    fn gather_fills_in_read_set_order() {
        let mut g = Gather::new(vec![ObjectId(1), ObjectId(3)], vec![Key::INITIAL, Key::new(1, 2)]);
        assert!(!g.fill(ObjectId(3), Key::INITIAL, "x".into()));
        assert!(g.fill(ObjectId(3), Key::new(1, 2), "c".into()));
        assert!(!g.fill(ObjectId(3), Key::new(1, 2), "c".into()));
        assert_eq!(g.missing().collect::<Vec<_>>(), vec![(ObjectId(1), Key::INITIAL)]);
        assert_eq!(g.response(), None);
        assert!(g.fill(ObjectId(1), Key::INITIAL, "a".into()));
        assert_eq!(g.response(), Some(Response::Values(vec!["a".into(), "c".into()])));
    }

    #[test]
    fn coordinator_tags_are_lengths() {
        let mut c = CoordLog::new(3);
        assert_eq!(c.tag_array(), (Tag(1), vec![Key::INITIAL; 3]));
        let mut ctx = Ctx::new(ProcessId::server(1));
        c.update(ProcessId::writer(1), Key::new(1, 1), Bitmap::from_objects(3, [ObjectId(1)]), &mut ctx);
        c.update(ProcessId::writer(2), Key::new(1, 2), Bitmap::from_objects(3, [ObjectId(2)]), &mut ctx);
        assert_eq!(ctx.sent()[1].1, Message::AckCoord { key: Key::new(1, 2), tag: Tag(3) });
        assert_eq!(c.tag_array(), (Tag(3), vec![Key::new(1, 1), Key::new(1, 2), Key::INITIAL]));
    }

    #[test]
    fn writer_keys_count_up() {
        let script = vec![
            Invocation::write([(ObjectId(1), "5".into()), (ObjectId(2), "7".into())]),
            Invocation::write([(ObjectId(2), "9".into())]),
        ];
        let mut w = world(script);
        let mut sched = crate::simnet::Scheduler::new(&crate::simnet::SchedulerPolicy::Random { seed: 1 });
        while crate::simnet::step(&mut w, &mut sched).unwrap().is_some() {}
        let Some(Node::W(writer)) = w.node(ProcessId::writer(1)) else { panic!() };
        assert_eq!(writer.z(), 2);
        let keys: Vec<Key> = w
            .events()
            .iter()
            .filter(|e| e.kind == crate::history::EventKind::Send)
            .filter_map(|e| match &e.payload {
                Some(Message::WriteValue { key, .. }) => Some(*key),
                _ => None,
            })
            .collect();
        assert_eq!(keys, vec![Key::new(1, 1), Key::new(1, 1), Key::new(2, 1)]);
        assert!(w.records().iter().all(|r| r.response == Some(Response::Ack)));
    }
}

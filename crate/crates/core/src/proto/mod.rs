//! The four protocols as process state machines, plus the wiring that turns
//! a system shape into simulator nodes.

pub mod a;
pub mod b;
pub mod c;
mod common;
pub mod naive;

pub use common::{CommitTo, CoordLog, Gather, ServerCore, Writer};

use crate::history::HistoryConfig;
use crate::model::{ObjectId, ProcessId, Value};
use crate::simnet::{Actor, ArrivalPlan, ChannelPolicy, World};
use crate::model::Invocation;

/// Shape of a simulated system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemSpec {
    pub k: usize,
    pub writers: u32,
    pub readers: u32,
    /// Object whose server acts as coordinator (B and C only).
    pub coordinator: ObjectId,
    pub initial: Vec<Value>,
}

impl SystemSpec {
    /// Initial values `v1^0 .. vk^0`, coordinator on `s1`.
    pub fn new(k: usize, writers: u32, readers: u32) -> Self {
        Self {
            k,
            writers,
            readers,
            coordinator: ObjectId(1),
            initial: (1..=k).map(|i| Value::from(format!("v{i}^0"))).collect(),
        }
    }

    pub fn writer_ids(&self) -> Vec<ProcessId> {
        (1..=self.writers).map(ProcessId::writer).collect()
    }

    pub fn reader_ids(&self) -> Vec<ProcessId> {
        (1..=self.readers).map(ProcessId::reader).collect()
    }

    pub fn server_ids(&self) -> Vec<ProcessId> {
        (1..=self.k as u32).map(ProcessId::server).collect()
    }
}

pub trait Protocol {
    type Node: Actor + Send + Sync + 'static;

    const NAME: &'static str;
    /// Whether clients may message each other.
    const CLIENT_TO_CLIENT: bool;
    /// Kinds of messages a server must answer without blocking.
    const READ_REQUEST_KINDS: &'static [&'static str];
    const USES_COORDINATOR: bool;

    fn nodes(spec: &SystemSpec) -> Vec<(ProcessId, Self::Node)>;
}

pub fn history_config<P: Protocol>(spec: &SystemSpec) -> HistoryConfig {
    HistoryConfig {
        protocol: P::NAME.to_string(),
        k: spec.k,
        writers: spec.writer_ids(),
        readers: spec.reader_ids(),
        coordinator: P::USES_COORDINATOR.then(|| ProcessId::server_of(spec.coordinator)),
        initial: spec.initial.clone(),
    }
}

/// A fresh world running protocol `P` with the given client scripts.
pub fn build_world<P: Protocol>(
    spec: &SystemSpec,
    scripts: Vec<(ProcessId, Vec<Invocation>)>,
    arrival: ArrivalPlan,
) -> World<P::Node> {
    World::new(
        history_config::<P>(spec),
        P::nodes(spec),
        scripts,
        ChannelPolicy { client_to_client: P::CLIENT_TO_CLIENT },
        arrival,
    )
}

/// Implements [`Actor`] for a node enum whose variants each wrap an actor.
macro_rules! delegate_actor {
    ($ty:ident { $($variant:ident),+ }) => {
        impl $crate::simnet::Actor for $ty {
            fn on_invoke(
                &mut self,
                txn: $crate::model::TxnId,
                inv: &$crate::model::Invocation,
                ctx: &mut $crate::simnet::Ctx,
            ) -> Result<(), $crate::simnet::ProtocolError> {
                match self {
                    $($ty::$variant(n) => n.on_invoke(txn, inv, ctx),)+
                }
            }

            fn on_message(
                &mut self,
                from: $crate::model::ProcessId,
                msg: $crate::wire::Message,
                ctx: &mut $crate::simnet::Ctx,
            ) -> Result<(), $crate::simnet::ProtocolError> {
                match self {
                    $($ty::$variant(n) => n.on_message(from, msg, ctx),)+
                }
            }
        }
    };
}
pub(crate) use delegate_actor;

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::history::History;
    use crate::model::{Response, Tag};
    use crate::simnet::{run_to_quiescence, Scheduler, SchedulerPolicy};

    pub fn w(items: &[(u32, &str)]) -> Invocation {
        Invocation::write(items.iter().map(|&(o, v)| (ObjectId(o), Value::from(v))))
    }

    pub fn r(ids: &[u32]) -> Invocation {
        Invocation::read(ids.iter().map(|&o| ObjectId(o)))
    }

    pub fn scripts(txns: &[(ProcessId, Invocation)]) -> Vec<(ProcessId, Vec<Invocation>)> {
        let mut out: Vec<(ProcessId, Vec<Invocation>)> = Vec::new();
        for (pid, inv) in txns {
            match out.iter_mut().find(|(p, _)| p == pid) {
                Some((_, s)) => s.push(inv.clone()),
                None => out.push((*pid, vec![inv.clone()])),
            }
        }
        out
    }

    /// Runs the transactions one after another in the listed order.
    pub fn run_in_order<P: Protocol>(spec: &SystemSpec, txns: &[(ProcessId, Invocation)]) -> History {
        let order = txns.iter().map(|(p, _)| *p).collect();
        let world = build_world::<P>(spec, scripts(txns), ArrivalPlan::Sequential(order));
        let mut sched = Scheduler::new(&SchedulerPolicy::Random { seed: 0 });
        run_to_quiescence(world, &mut sched, 10_000).expect("sequential run terminates")
    }

    pub fn outcome(h: &History, i: usize) -> (Vec<Value>, Option<Tag>) {
        let rec = &h.records[i];
        match &rec.response {
            Some(Response::Values(v)) => (v.clone(), rec.tag),
            Some(Response::Ack) => (vec![], rec.tag),
            None => panic!("{} incomplete", rec.txn_id),
        }
    }

    pub fn vals(items: &[&str]) -> Vec<Value> {
        items.iter().map(|&s| Value::from(s)).collect()
    }
}

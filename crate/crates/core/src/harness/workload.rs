//! Workloads: which protocol, which system shape, and what each client runs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Invocation, ObjectId, ProcessId, Role, Value};
use crate::proto::SystemSpec;
use crate::simnet::ArrivalPlan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {reason}")]
pub struct UsageError {
    pub field: &'static str,
    pub reason: String,
}

impl UsageError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self { field, reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    A,
    B,
    C,
    Naive,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] = [ProtocolKind::A, ProtocolKind::B, ProtocolKind::C, ProtocolKind::Naive];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::A => "a",
            ProtocolKind::B => "b",
            ProtocolKind::C => "c",
            ProtocolKind::Naive => "naive",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub protocol: ProtocolKind,
    pub spec: SystemSpec,
    pub scripts: Vec<(ProcessId, Vec<Invocation>)>,
    pub arrival: ArrivalPlan,
}

impl Workload {
    pub fn txn_count(&self) -> usize {
        self.scripts.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let spec = &self.spec;
        if spec.k == 0 {
            return Err(UsageError::new("objects", "need at least one object"));
        }
        if spec.initial.len() != spec.k {
            return Err(UsageError::new("initial", format!("{} values for {} objects", spec.initial.len(), spec.k)));
        }
        if self.protocol == ProtocolKind::A && spec.readers != 1 {
            return Err(UsageError::new("readers", format!("protocol a has exactly one reader, got {}", spec.readers)));
        }
        if spec.coordinator.check(spec.k).is_err() {
            return Err(UsageError::new("coordinator", format!("{} is not one of the {} objects", spec.coordinator, spec.k)));
        }
        let mut seen = BTreeSet::new();
        for (pid, script) in &self.scripts {
            let exists = match pid.role {
                Role::Writer => (1..=spec.writers).contains(&pid.index),
                Role::Reader => (1..=spec.readers).contains(&pid.index),
                Role::Server => false,
            };
            if !exists || !seen.insert(*pid) {
                return Err(UsageError::new("scripts", format!("no distinct client {pid} in this system")));
            }
            for inv in script {
                if inv.is_read() != (pid.role == Role::Reader) {
                    return Err(UsageError::new("scripts", format!("{pid} cannot run {inv:?}")));
                }
                inv.validate(spec.k).map_err(|e| UsageError::new("scripts", format!("{pid}: {e}")))?;
            }
        }
        if let ArrivalPlan::Sequential(order) = &self.arrival {
            for (pid, script) in &self.scripts {
                let turns = order.iter().filter(|p| *p == pid).count();
                if turns != script.len() {
                    return Err(UsageError::new(
                        "arrival",
                        format!("{pid} has {} transactions but {turns} turns", script.len()),
                    ));
                }
            }
            if order.len() != self.txn_count() {
                return Err(UsageError::new("arrival", "turns name clients without scripts"));
            }
        }
        Ok(())
    }
}

/// Parameters of a randomly generated workload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub protocol: ProtocolKind,
    pub k: usize,
    pub writers: u32,
    pub readers: u32,
    pub txns: usize,
    /// Largest read or write set.
    pub max_set: usize,
    /// One transaction at a time, in generation order.
    pub sequential: bool,
}

/// Builds a workload from `params`; transactions go to uniformly chosen
/// clients, sets are uniform in size and membership, and every written
/// value is unique (`w{writer}.{n}.o{object}`).
pub fn generate(params: &GeneratorParams, seed: u64) -> Result<Workload, UsageError> {
    let GeneratorParams { protocol, k, writers, readers, txns, max_set, sequential } = *params;
    if txns > 0 && writers + readers == 0 {
        return Err(UsageError::new("writers", "transactions need at least one client"));
    }
    if max_set == 0 {
        return Err(UsageError::new("max_set", "sets need at least one object"));
    }
    let spec = SystemSpec::new(k, writers, readers);
    let clients: Vec<ProcessId> = spec.writer_ids().into_iter().chain(spec.reader_ids()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects: Vec<ObjectId> = (1..=k as u32).map(ObjectId).collect();
    let mut scripts: Vec<(ProcessId, Vec<Invocation>)> = clients.iter().map(|&p| (p, Vec::new())).collect();
    let mut order = Vec::with_capacity(txns);
    for _ in 0..txns {
        let ci = rng.gen_range(0..clients.len());
        let client = clients[ci];
        let size = rng.gen_range(1..=max_set.min(k.max(1)));
        let set: Vec<ObjectId> = objects.choose_multiple(&mut rng, size).copied().collect();
        let script = &mut scripts[ci].1;
        let inv = if client.role == Role::Writer {
            let n = script.len() + 1;
            Invocation::write(set.into_iter().map(|o| (o, Value::from(format!("w{}.{n}.{o}", client.index)))))
        } else {
            Invocation::read(set)
        };
        script.push(inv);
        order.push(client);
    }
    scripts.retain(|(_, s)| !s.is_empty());
    let arrival = if sequential { ArrivalPlan::Sequential(order) } else { ArrivalPlan::AllAtStart };
    let w = Workload { protocol, spec, scripts, arrival };
    w.validate()?;
    Ok(w)
}

/// Two objects, one WRITE of both, two concurrent READs of both. A has a
/// single reader, which runs both READs; the others use one READ per reader.
pub fn canonical(protocol: ProtocolKind) -> Workload {
    let readers = if protocol == ProtocolKind::A { 1 } else { 2 };
    let spec = SystemSpec::new(2, 1, readers);
    let write = Invocation::write([(ObjectId(1), Value::from("v1^1")), (ObjectId(2), Value::from("v2^1"))]);
    let read = Invocation::read([ObjectId(1), ObjectId(2)]);
    let mut scripts = vec![(ProcessId::writer(1), vec![write])];
    if readers == 1 {
        scripts.push((ProcessId::reader(1), vec![read.clone(), read]));
    } else {
        scripts.push((ProcessId::reader(1), vec![read.clone()]));
        scripts.push((ProcessId::reader(2), vec![read]));
    }
    Workload { protocol, spec, scripts, arrival: ArrivalPlan::AllAtStart }
}

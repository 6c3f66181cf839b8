//! Deterministic discrete-event simulation of asynchronous reliable
//! channels between single-threaded processes.
//!
//! A [`World`] holds every process state, the bag of in-flight envelopes and
//! the per-client transaction scripts. One step picks one enabled action
//! (deliver an envelope, or let an idle client invoke its next transaction)
//! and runs the receiving process's handler to completion. Channels are
//! unordered bags: nothing is ever lost or duplicated, but any pending
//! envelope may be delivered next.
//!
//! Fairness is only approximated: workloads are finite and runs carry a step
//! budget, so a protocol that never quiesces surfaces as a liveness
//! diagnostic instead of an infinite loop.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Debug;
use std::hash::{Hash, Hasher};
use std::ops::ControlFlow;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{Event, EventKind, History, HistoryConfig};
use crate::model::{Invocation, Key, ProcessId, Response, Tag, TxnId, TxnRecord};
use crate::wire::Message;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("{proc}: no version stored for key {key}")]
    MissingKey { proc: ProcessId, key: Key },
    #[error("{proc}: unexpected {kind} from {from}")]
    Unexpected { proc: ProcessId, from: ProcessId, kind: &'static str },
    #[error("{proc}: key {key} already stored with a different value")]
    KeyConflict { proc: ProcessId, key: Key },
    #[error("{proc}: cannot handle invocation {detail}")]
    BadInvocation { proc: ProcessId, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("no channel from {from} to {to}")]
    ChannelForbidden { from: ProcessId, to: ProcessId },
    #[error("action {0:?} is not enabled")]
    NotEnabled(Action),
    #[error("{0} completed a transaction it never started")]
    SpuriousCompletion(ProcessId),
    #[error("scripted choice #{position} ({choice:?}) matches no enabled action")]
    ScriptMismatch { position: usize, choice: ScriptChoice },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LivenessFailure {
    BudgetExceeded { steps: u64 },
    /// No action is enabled but transactions are still outstanding.
    Stalled { outstanding: Vec<TxnId> },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("liveness failure: {reason:?}")]
    Liveness { reason: LivenessFailure, partial: Box<History> },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Outputs of one handler invocation.
#[derive(Debug)]
pub struct Ctx {
    me: ProcessId,
    sends: Vec<(ProcessId, Message)>,
    done: Option<(Response, Option<Tag>)>,
    fallback: bool,
}

impl Ctx {
    pub fn new(me: ProcessId) -> Self {
        Self { me, sends: Vec::new(), done: None, fallback: false }
    }

    /// Messages queued so far in this step.
    pub fn sent(&self) -> &[(ProcessId, Message)] {
        &self.sends
    }

    pub fn completion(&self) -> Option<&(Response, Option<Tag>)> {
        self.done.as_ref()
    }

    pub fn me(&self) -> ProcessId {
        self.me
    }

    pub fn send(&mut self, to: ProcessId, msg: Message) {
        self.sends.push((to, msg));
    }

    /// Completes the client's active transaction at the end of this step.
    pub fn complete(&mut self, response: Response, tag: Option<Tag>) {
        self.done = Some((response, tag));
    }

    /// Flags the active transaction as having needed an extra read round.
    pub fn mark_fallback(&mut self) {
        self.fallback = true;
    }
}

/// A process modeled as a step function over its own state.
pub trait Actor: Clone + Eq + Hash + Debug {
    fn on_invoke(&mut self, txn: TxnId, inv: &Invocation, ctx: &mut Ctx)
        -> Result<(), ProtocolError>;

    fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx)
        -> Result<(), ProtocolError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelPolicy {
    pub client_to_client: bool,
}

impl ChannelPolicy {
    pub fn allows(&self, from: ProcessId, to: ProcessId) -> bool {
        self.client_to_client || !(from.is_client() && to.is_client())
    }
}

/// When clients may start their next scripted transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArrivalPlan {
    /// Any idle client with script left may invoke at any step.
    AllAtStart,
    /// One transaction at a time, clients taking turns in the given order.
    Sequential(Vec<ProcessId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub msg_id: u64,
    pub from: ProcessId,
    pub to: ProcessId,
    pub payload: Message,
    pub sent_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Invoke(ProcessId),
    Deliver(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ClientSlot {
    script: Arc<[Invocation]>,
    next: usize,
    active: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct World<N> {
    config: HistoryConfig,
    nodes: BTreeMap<ProcessId, N>,
    channels: ChannelPolicy,
    pending: Vec<Envelope>,
    clients: BTreeMap<ProcessId, ClientSlot>,
    arrival: ArrivalPlan,
    turn: usize,
    records: Vec<TxnRecord>,
    preceded_by: Vec<Vec<usize>>,
    events: Vec<Event>,
    tracing: bool,
    seq: u64,
    next_msg: u64,
    steps: u64,
}

impl<N: Actor> World<N> {
    pub fn new(
        config: HistoryConfig,
        nodes: impl IntoIterator<Item = (ProcessId, N)>,
        scripts: impl IntoIterator<Item = (ProcessId, Vec<Invocation>)>,
        channels: ChannelPolicy,
        arrival: ArrivalPlan,
    ) -> Self {
        let clients = scripts
            .into_iter()
            .map(|(pid, s)| (pid, ClientSlot { script: s.into(), next: 0, active: None }))
            .collect();
        Self {
            config,
            nodes: nodes.into_iter().collect(),
            channels,
            pending: Vec::new(),
            clients,
            arrival,
            turn: 0,
            records: Vec::new(),
            preceded_by: Vec::new(),
            events: Vec::new(),
            tracing: true,
            seq: 0,
            next_msg: 0,
            steps: 0,
        }
    }

    /// Disables event recording. Sequence numbers still advance, so records
    /// keep the same real-time order.
    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    pub fn config(&self) -> &HistoryConfig {
        &self.config
    }

    pub fn node(&self, pid: ProcessId) -> Option<&N> {
        self.nodes.get(&pid)
    }

    pub fn pending(&self) -> &[Envelope] {
        &self.pending
    }

    pub fn records(&self) -> &[TxnRecord] {
        &self.records
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn history(&self) -> History {
        History {
            format: crate::history::FORMAT_VERSION,
            config: self.config.clone(),
            records: self.records.clone(),
            events: self.events.clone(),
        }
    }

    pub fn into_history(self) -> History {
        History {
            format: crate::history::FORMAT_VERSION,
            config: self.config,
            records: self.records,
            events: self.events,
        }
    }

    fn can_invoke(&self, pid: ProcessId, slot: &ClientSlot) -> bool {
        if slot.active.is_some() || slot.next >= slot.script.len() {
            return false;
        }
        match &self.arrival {
            ArrivalPlan::AllAtStart => true,
            ArrivalPlan::Sequential(order) => {
                order.get(self.turn) == Some(&pid)
                    && self.clients.values().all(|s| s.active.is_none())
            }
        }
    }

    /// Enabled actions in canonical order: invocations by client id, then
    /// deliveries by (destination, source, msg id).
    pub fn enabled(&self) -> Vec<Action> {
        let mut out: Vec<Action> = self
            .clients
            .iter()
            .filter(|(pid, slot)| self.can_invoke(**pid, slot))
            .map(|(pid, _)| Action::Invoke(*pid))
            .collect();
        let mut envs: Vec<&Envelope> = self.pending.iter().collect();
        envs.sort_by_key(|e| (e.to, e.from, e.msg_id));
        out.extend(envs.into_iter().map(|e| Action::Deliver(e.msg_id)));
        out
    }

    /// Enabled actions with indistinguishable envelopes (same endpoints and
    /// payload) collapsed to the first one.
    pub fn distinct_enabled(&self) -> Vec<Action> {
        let mut seen = HashSet::new();
        self.enabled()
            .into_iter()
            .filter(|a| match a {
                Action::Invoke(_) => true,
                Action::Deliver(id) => {
                    let e = self.envelope(*id).expect("enabled envelope exists");
                    seen.insert((e.from, e.to, e.payload.clone()))
                }
            })
            .collect()
    }

    pub fn envelope(&self, msg_id: u64) -> Option<&Envelope> {
        self.pending.iter().find(|e| e.msg_id == msg_id)
    }

    /// One successor world per distinct enabled action.
    pub fn successors(&self) -> Result<Vec<(Action, World<N>)>, SimError> {
        self.distinct_enabled()
            .into_iter()
            .map(|a| {
                let mut w = self.clone();
                w.apply(a)?;
                Ok((a, w))
            })
            .collect()
    }

    /// Transactions that are running or not yet invoked.
    pub fn outstanding(&self) -> Vec<TxnId> {
        let mut out = Vec::new();
        for (pid, slot) in &self.clients {
            if let Some(idx) = slot.active {
                out.push(self.records[idx].txn_id);
            }
            for n in slot.next..slot.script.len() {
                out.push(TxnId { client: *pid, seq: n as u32 + 1 });
            }
        }
        out
    }

    fn emit(&mut self, ev: Event) -> u64 {
        let seq = self.seq;
        self.seq += 1;
        if self.tracing {
            self.events.push(Event { seq, ..ev });
        }
        seq
    }

    fn bare(kind: EventKind, proc: ProcessId) -> Event {
        Event {
            seq: 0,
            kind,
            proc,
            txn_id: None,
            msg_id: None,
            peer: None,
            payload: None,
            detail: None,
        }
    }

    fn active_txn(&self, pid: ProcessId) -> Option<TxnId> {
        self.clients
            .get(&pid)
            .and_then(|s| s.active)
            .map(|idx| self.records[idx].txn_id)
    }

    /// Runs one action atomically.
    pub fn apply(&mut self, action: Action) -> Result<(), SimError> {
        match action {
            Action::Invoke(pid) => {
                let slot = self.clients.get(&pid).ok_or(SimError::NotEnabled(action))?;
                if !self.can_invoke(pid, slot) {
                    return Err(SimError::NotEnabled(action));
                }
                let inv = slot.script[slot.next].clone();
                let txn_id = TxnId { client: pid, seq: slot.next as u32 + 1 };
                self.emit(Event { detail: Some("invoke".into()), ..Self::bare(EventKind::HandlerStep, pid) });
                let inv_seq = self.emit(Event { txn_id: Some(txn_id), ..Self::bare(EventKind::Inv, pid) });
                let preds = self
                    .records
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.is_complete())
                    .map(|(i, _)| i)
                    .collect();
                self.records.push(TxnRecord {
                    txn_id,
                    client: pid,
                    invocation: inv.clone(),
                    inv_seq,
                    resp_seq: None,
                    response: None,
                    tag: None,
                    fallback: false,
                });
                self.preceded_by.push(preds);
                let slot = self.clients.get_mut(&pid).expect("slot checked");
                slot.next += 1;
                slot.active = Some(self.records.len() - 1);
                if matches!(self.arrival, ArrivalPlan::Sequential(_)) {
                    self.turn += 1;
                }
                let mut ctx = Ctx::new(pid);
                let node = self.nodes.get_mut(&pid).expect("client has a node");
                node.on_invoke(txn_id, &inv, &mut ctx)?;
                self.finish_step(ctx)?;
            }
            Action::Deliver(id) => {
                let pos = self
                    .pending
                    .iter()
                    .position(|e| e.msg_id == id)
                    .ok_or(SimError::NotEnabled(action))?;
                let env = self.pending.swap_remove(pos);
                let to = env.to;
                self.emit(Event {
                    detail: Some(format!("deliver m{id}")),
                    ..Self::bare(EventKind::HandlerStep, to)
                });
                let txn_id = self.active_txn(to);
                self.emit(Event {
                    txn_id,
                    msg_id: Some(id),
                    peer: Some(env.from),
                    payload: Some(env.payload.clone()),
                    ..Self::bare(EventKind::Recv, to)
                });
                let mut ctx = Ctx::new(to);
                let node = self.nodes.get_mut(&to).expect("destination exists");
                node.on_message(env.from, env.payload, &mut ctx)?;
                self.finish_step(ctx)?;
            }
        }
        self.steps += 1;
        Ok(())
    }

    fn finish_step(&mut self, ctx: Ctx) -> Result<(), SimError> {
        let me = ctx.me;
        let txn_id = self.active_txn(me);
        for (to, payload) in ctx.sends {
            if !self.channels.allows(me, to) || !self.nodes.contains_key(&to) {
                return Err(SimError::ChannelForbidden { from: me, to });
            }
            let msg_id = self.next_msg;
            self.next_msg += 1;
            let sent_seq = self.emit(Event {
                txn_id,
                msg_id: Some(msg_id),
                peer: Some(to),
                payload: Some(payload.clone()),
                ..Self::bare(EventKind::Send, me)
            });
            self.pending.push(Envelope { msg_id, from: me, to, payload, sent_seq });
        }
        let idx = self.clients.get(&me).and_then(|s| s.active);
        if ctx.fallback {
            if let Some(idx) = idx {
                self.records[idx].fallback = true;
            }
        }
        if let Some((response, tag)) = ctx.done {
            let idx = idx.ok_or(SimError::SpuriousCompletion(me))?;
            let resp_seq = self.emit(Event { txn_id, ..Self::bare(EventKind::Resp, me) });
            let rec = &mut self.records[idx];
            rec.resp_seq = Some(resp_seq);
            rec.response = Some(response);
            rec.tag = tag;
            self.clients.get_mut(&me).expect("client").active = None;
        }
        Ok(())
    }

    /// Fingerprint of everything that determines the future of the run and
    /// the verdict of any checker: process states, in-flight payloads,
    /// script progress, recorded outcomes and the real-time precedence
    /// relation. Message ids and sequence numbers are excluded.
    pub fn state_key(&self) -> u128 {
        let mut pending: Vec<(&ProcessId, &ProcessId, &Message)> =
            self.pending.iter().map(|e| (&e.from, &e.to, &e.payload)).collect();
        pending.sort();
        let mut records: Vec<_> = self
            .records
            .iter()
            .zip(&self.preceded_by)
            .map(|(r, preds)| {
                let mut p: Vec<TxnId> = preds.iter().map(|&i| self.records[i].txn_id).collect();
                p.sort();
                (r.txn_id, r.is_complete(), &r.response, r.tag, r.fallback, p)
            })
            .collect();
        records.sort_by_key(|r| r.0);
        let clients: Vec<_> = self.clients.iter().map(|(p, s)| (p, s.next, s.active.is_some())).collect();
        let digest = |salt: u8| {
            let mut h = DefaultHasher::new();
            salt.hash(&mut h);
            self.nodes.hash(&mut h);
            pending.hash(&mut h);
            records.hash(&mut h);
            clients.hash(&mut h);
            self.turn.hash(&mut h);
            h.finish()
        };
        (u128::from(digest(0)) << 64) | u128::from(digest(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptChoice {
    /// Position in [`World::enabled`].
    Index(usize),
    Invoke(ProcessId),
    /// First pending envelope to `to` matching the optional filters.
    Deliver {
        to: ProcessId,
        from: Option<ProcessId>,
        kind: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerPolicy {
    Random { seed: u64 },
    /// Used by [`explore`]; single runs follow the leftmost branch.
    Exhaustive { max_depth: usize },
    /// Listed choices first, then the leftmost enabled action.
    Scripted(Vec<ScriptChoice>),
}

/// Runtime state of a [`SchedulerPolicy`].
#[derive(Debug, Clone)]
pub enum Scheduler {
    Random(Box<ChaCha8Rng>),
    Leftmost,
    Scripted { choices: Vec<ScriptChoice>, position: usize },
}

impl Scheduler {
    pub fn new(policy: &SchedulerPolicy) -> Self {
        match policy {
            SchedulerPolicy::Random { seed } => Scheduler::Random(Box::new(ChaCha8Rng::seed_from_u64(*seed))),
            SchedulerPolicy::Exhaustive { .. } => Scheduler::Leftmost,
            SchedulerPolicy::Scripted(choices) => {
                Scheduler::Scripted { choices: choices.clone(), position: 0 }
            }
        }
    }

    fn choose<N: Actor>(&mut self, world: &World<N>, enabled: &[Action]) -> Result<Action, SimError> {
        match self {
            Scheduler::Random(rng) => Ok(enabled[rng.gen_range(0..enabled.len())]),
            Scheduler::Leftmost => Ok(enabled[0]),
            Scheduler::Scripted { choices, position } => {
                let Some(choice) = choices.get(*position) else {
                    return Ok(enabled[0]);
                };
                let found = match choice {
                    ScriptChoice::Index(i) => enabled.get(*i).copied(),
                    ScriptChoice::Invoke(pid) => {
                        enabled.iter().copied().find(|a| *a == Action::Invoke(*pid))
                    }
                    ScriptChoice::Deliver { to, from, kind } => enabled.iter().copied().find(|a| {
                        let Action::Deliver(id) = a else { return false };
                        let e = world.envelope(*id).expect("enabled envelope exists");
                        e.to == *to
                            && from.is_none_or(|f| f == e.from)
                            && kind.as_deref().is_none_or(|k| k == e.payload.kind())
                    }),
                };
                let action = found.ok_or_else(|| SimError::ScriptMismatch {
                    position: *position,
                    choice: choice.clone(),
                })?;
                *position += 1;
                Ok(action)
            }
        }
    }
}

/// Executes one scheduler-chosen action. `Ok(None)` signals quiescence.
pub fn step<N: Actor>(world: &mut World<N>, sched: &mut Scheduler) -> Result<Option<Action>, SimError> {
    let enabled = world.enabled();
    if enabled.is_empty() {
        return Ok(None);
    }
    let action = sched.choose(world, &enabled)?;
    world.apply(action)?;
    Ok(Some(action))
}

/// Steps until nothing is enabled. Running out of `budget` steps, or
/// quiescing with transactions outstanding, is a liveness failure carrying
/// the partial history.
pub fn run_to_quiescence<N: Actor>(
    mut world: World<N>,
    sched: &mut Scheduler,
    budget: u64,
) -> Result<History, RunError> {
    loop {
        if world.steps() >= budget && !world.enabled().is_empty() {
            let steps = world.steps();
            return Err(RunError::Liveness {
                reason: LivenessFailure::BudgetExceeded { steps },
                partial: Box::new(world.into_history()),
            });
        }
        if step(&mut world, sched)?.is_none() {
            break;
        }
    }
    let outstanding = world.outstanding();
    if !outstanding.is_empty() {
        return Err(RunError::Liveness {
            reason: LivenessFailure::Stalled { outstanding },
            partial: Box::new(world.into_history()),
        });
    }
    Ok(world.into_history())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreConfig {
    /// Choice points (states with more than one distinct action) along a
    /// path beyond which only the leftmost action is followed.
    pub max_depth: usize,
    /// Upper bound on visited states.
    pub node_limit: usize,
    /// Path length after which a path is cut off as non-terminating.
    pub max_steps: usize,
    /// Prune paths reaching an already visited [`World::state_key`].
    pub dedup: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self { max_depth: 64, node_limit: 1_000_000, max_steps: 10_000, dedup: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreStats {
    pub states: usize,
    pub histories: usize,
    /// Some branch was skipped because of the depth bound, node limit or step bound.
    pub incomplete: bool,
    pub max_choice_depth: usize,
}

/// Enumerates maximal executions of `root` depth-first and hands each
/// distinct one to `visit` as a traced [`History`]. With `dedup`, two
/// executions reaching the same [`World::state_key`] yield once. `visit`
/// may stop the enumeration early by returning `Break`.
pub fn explore<N: Actor>(
    root: &World<N>,
    config: ExploreConfig,
    mut visit: impl FnMut(History) -> ControlFlow<()>,
) -> Result<ExploreStats, SimError> {
    let mut silent = root.clone();
    silent.set_tracing(false);
    let mut ex = Explorer {
        root,
        config,
        visited: HashSet::new(),
        stats: ExploreStats::default(),
        visit: &mut visit,
    };
    let mut path = Vec::new();
    let _stopped = ex.dfs(silent, &mut path, 0)?;
    Ok(ex.stats)
}

struct Explorer<'a, N, F> {
    root: &'a World<N>,
    config: ExploreConfig,
    visited: HashSet<u128>,
    stats: ExploreStats,
    visit: &'a mut F,
}

impl<N: Actor, F: FnMut(History) -> ControlFlow<()>> Explorer<'_, N, F> {
    fn dfs(&mut self, world: World<N>, path: &mut Vec<Action>, depth: usize) -> Result<ControlFlow<()>, SimError> {
        if self.config.dedup && !self.visited.insert(world.state_key()) {
            return Ok(ControlFlow::Continue(()));
        }
        self.stats.states += 1;
        if self.stats.states > self.config.node_limit {
            self.stats.incomplete = true;
            return Ok(ControlFlow::Break(()));
        }
        self.stats.max_choice_depth = self.stats.max_choice_depth.max(depth);
        let actions = world.distinct_enabled();
        if actions.is_empty() || path.len() >= self.config.max_steps {
            if !actions.is_empty() {
                self.stats.incomplete = true;
            }
            let mut replay = self.root.clone();
            replay.set_tracing(true);
            for &a in path.iter() {
                replay.apply(a)?;
            }
            self.stats.histories += 1;
            return Ok((self.visit)(replay.into_history()));
        }
        let branching = actions.len() > 1;
        let take = if branching && depth >= self.config.max_depth {
            self.stats.incomplete = true;
            1
        } else {
            actions.len()
        };
        let next_depth = depth + usize::from(take > 1);
        for &a in &actions[..take] {
            let mut next = world.clone();
            next.apply(a)?;
            path.push(a);
            let flow = self.dfs(next, path, next_depth)?;
            path.pop();
            if flow.is_break() {
                return Ok(ControlFlow::Break(()));
            }
        }
        Ok(ControlFlow::Continue(()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectId, Value};

    /// Client that sends one request per server and completes on all replies;
    /// servers echo. `pingpong` servers bounce forever instead.
    #[derive(Debug, Clone, PartialEq, Eq, Hash)]
    enum Toy {
        Client { awaiting: usize },
        Server { pingpong: bool },
    }

    impl Actor for Toy {
        fn on_invoke(&mut self, _: TxnId, inv: &Invocation, ctx: &mut Ctx) -> Result<(), ProtocolError> {
            let Toy::Client { awaiting } = self else { unreachable!() };
            let objs = inv.objects();
            *awaiting = objs.len();
            for o in objs {
                ctx.send(ProcessId::server_of(o), Message::ReadReq);
            }
            Ok(())
        }

        fn on_message(&mut self, from: ProcessId, msg: Message, ctx: &mut Ctx) -> Result<(), ProtocolError> {
            match self {
                Toy::Server { pingpong: false } => {
                    ctx.send(from, Message::Value { key: Key::INITIAL, value: Value::empty() })
                }
                Toy::Server { pingpong: true } => ctx.send(ctx.me(), msg),
                Toy::Client { awaiting } => {
                    *awaiting -= 1;
                    if *awaiting == 0 {
                        ctx.complete(Response::Values(vec![]), None);
                    }
                }
            }
            Ok(())
        }
    }

    fn toy_world(k: u32, scripts: Vec<Vec<Invocation>>, pingpong: bool) -> World<Toy> {
        let config = HistoryConfig {
            protocol: "toy".into(),
            k: k as usize,
            writers: vec![],
            readers: (1..=scripts.len() as u32).map(ProcessId::reader).collect(),
            coordinator: None,
            initial: vec![Value::empty(); k as usize],
        };
        let mut nodes: Vec<(ProcessId, Toy)> =
            (1..=k).map(|i| (ProcessId::server(i), Toy::Server { pingpong })).collect();
        let mut sc = Vec::new();
        for (i, s) in scripts.into_iter().enumerate() {
            let pid = ProcessId::reader(i as u32 + 1);
            nodes.push((pid, Toy::Client { awaiting: 0 }));
            sc.push((pid, s));
        }
        World::new(config, nodes, sc, ChannelPolicy { client_to_client: false }, ArrivalPlan::AllAtStart)
    }

    fn read(ids: &[u32]) -> Invocation {
        Invocation::read(ids.iter().map(|&i| ObjectId(i)))
    }

    #[test]
    fn single_envelope_is_the_only_choice() {
        let mut w = toy_world(1, vec![vec![read(&[1])]], false);
        w.apply(Action::Invoke(ProcessId::reader(1))).unwrap();
        assert_eq!(w.enabled().len(), 1);
        let mut sched = Scheduler::new(&SchedulerPolicy::Random { seed: 3 });
        let before = w.events().len();
        step(&mut w, &mut sched).unwrap().unwrap();
        let kinds: Vec<_> = w.events()[before..].iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::HandlerStep, EventKind::Recv, EventKind::Send]);
    }

    #[test]
    fn same_seed_same_trace() {
        let mk = || toy_world(3, vec![vec![read(&[1, 2, 3]), read(&[2])], vec![read(&[1, 3])]], false);
        let run = |seed| {
            let mut s = Scheduler::new(&SchedulerPolicy::Random { seed });
            run_to_quiescence(mk(), &mut s, 1000).unwrap().to_json()
        };
        assert_eq!(run(11), run(11));
        let distinct: HashSet<String> = (0..20).map(run).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn two_choice_point_forks_twice() {
        let mut w = toy_world(2, vec![vec![read(&[1, 2])]], false);
        w.apply(Action::Invoke(ProcessId::reader(1))).unwrap();
        let succ = w.successors().unwrap();
        assert_eq!(succ.len(), 2);
        assert_ne!(succ[0].0, succ[1].0);
    }

    #[test]
    fn empty_workload_is_vacuous() {
        let w = toy_world(2, vec![], false);
        let h = run_to_quiescence(w, &mut Scheduler::new(&SchedulerPolicy::Random { seed: 0 }), 10).unwrap();
        assert!(h.records.is_empty());
        assert!(h.events.is_empty());
    }

    #[test]
    fn livelock_hits_the_budget() {
        let w = toy_world(1, vec![vec![read(&[1])]], true);
        let err = run_to_quiescence(w, &mut Scheduler::new(&SchedulerPolicy::Random { seed: 0 }), 50)
            .unwrap_err();
        match err {
            RunError::Liveness { reason: LivenessFailure::BudgetExceeded { steps }, partial } => {
                assert_eq!(steps, 50);
                assert!(!partial.records[0].is_complete());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn client_to_client_requires_permission() {
        #[derive(Debug, Clone, PartialEq, Eq, Hash)]
        struct Chatty;
        impl Actor for Chatty {
            fn on_invoke(&mut self, _: TxnId, _: &Invocation, ctx: &mut Ctx) -> Result<(), ProtocolError> {
                ctx.send(ProcessId::reader(2), Message::ReadReq);
                Ok(())
            }
            fn on_message(&mut self, _: ProcessId, _: Message, _: &mut Ctx) -> Result<(), ProtocolError> {
                Ok(())
            }
        }
        let config = HistoryConfig {
            protocol: "toy".into(),
            k: 1,
            writers: vec![],
            readers: vec![],
            coordinator: None,
            initial: vec![Value::empty()],
        };
        let mk = |c2c| {
            World::new(
                config.clone(),
                [(ProcessId::reader(1), Chatty), (ProcessId::reader(2), Chatty)],
                [(ProcessId::reader(1), vec![read(&[1])])],
                ChannelPolicy { client_to_client: c2c },
                ArrivalPlan::AllAtStart,
            )
        };
        let mut closed = mk(false);
        assert_eq!(
            closed.apply(Action::Invoke(ProcessId::reader(1))),
            Err(SimError::ChannelForbidden { from: ProcessId::reader(1), to: ProcessId::reader(2) })
        );
        let mut open = mk(true);
        open.apply(Action::Invoke(ProcessId::reader(1))).unwrap();
        assert_eq!(open.pending().len(), 1);
    }

    #[test]
    fn explore_single_sequential_transaction() {
        let w = toy_world(1, vec![vec![read(&[1])]], false);
        let mut n = 0;
        let stats = explore(&w, ExploreConfig::default(), |_| {
            n += 1;
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(n, 1);
        assert!(!stats.incomplete);
    }

    #[test]
    fn explore_two_concurrent_envelopes() {
        let w = toy_world(2, vec![vec![read(&[1, 2])]], false);
        let cfg = ExploreConfig { dedup: false, ..ExploreConfig::default() };
        let mut orders = HashSet::new();
        explore(&w, cfg, |h| {
            let recv: Vec<_> = h.events.iter().filter(|e| e.kind == EventKind::Recv).map(|e| e.proc).collect();
            orders.insert(recv);
            ControlFlow::Continue(())
        })
        .unwrap();
        // Either server may go first; each reply can overtake the other request.
        let first: HashSet<_> = orders.iter().map(|o| o[0]).collect();
        assert_eq!(first.len(), 2);
        assert_eq!(orders.len(), 4);
        let stats = explore(&w, cfg, |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(stats.histories, 6);

        let mut deduped = 0;
        explore(&w, ExploreConfig::default(), |_| {
            deduped += 1;
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(deduped, 1);
    }

    #[test]
    fn depth_bound_marks_incomplete() {
        let w = toy_world(2, vec![vec![read(&[1, 2])], vec![read(&[1, 2])]], false);
        let count = |max_depth| {
            let cfg = ExploreConfig { max_depth, dedup: false, ..ExploreConfig::default() };
            explore(&w, cfg, |_| ControlFlow::Continue(())).unwrap()
        };
        let bounded = count(2);
        let full = count(64);
        assert!(bounded.incomplete);
        assert!(!full.incomplete);
        assert!(bounded.histories < full.histories);
        assert_eq!(bounded.max_choice_depth, 2);
    }

    #[test]
    fn scripted_choices_are_followed() {
        let w = toy_world(2, vec![vec![read(&[1, 2])]], false);
        let script = vec![
            ScriptChoice::Invoke(ProcessId::reader(1)),
            ScriptChoice::Deliver { to: ProcessId::server(2), from: None, kind: None },
        ];
        let mut sched = Scheduler::new(&SchedulerPolicy::Scripted(script));
        let h = run_to_quiescence(w, &mut sched, 100).unwrap();
        let first_recv = h.events.iter().find(|e| e.kind == EventKind::Recv).unwrap();
        assert_eq!(first_recv.proc, ProcessId::server(2));

        let bad = vec![ScriptChoice::Deliver { to: ProcessId::server(1), from: None, kind: None }];
        let w = toy_world(2, vec![vec![read(&[1, 2])]], false);
        let err = run_to_quiescence(w, &mut Scheduler::new(&SchedulerPolicy::Scripted(bad)), 100).unwrap_err();
        assert!(matches!(err, RunError::Sim(SimError::ScriptMismatch { position: 0, .. })));
    }

    #[test]
    fn sequential_arrival_serializes_transactions() {
        let mut w = toy_world(2, vec![vec![read(&[1, 2])], vec![read(&[1])]], false);
        w.arrival = ArrivalPlan::Sequential(vec![ProcessId::reader(2), ProcessId::reader(1)]);
        let h = run_to_quiescence(w, &mut Scheduler::new(&SchedulerPolicy::Random { seed: 5 }), 100).unwrap();
        let r2 = h.records.iter().find(|r| r.client == ProcessId::reader(2)).unwrap();
        let r1 = h.records.iter().find(|r| r.client == ProcessId::reader(1)).unwrap();
        assert!(crate::model::realtime_precedes(r2, r1));
    }
}

//! Experiment orchestration: build a world from a workload, drive it with a
//! scheduler or the explorer, check every resulting history and aggregate.

mod campaign;
mod report;
mod workload;

use std::ops::ControlFlow;
use std::path::Path;

use thiserror::Error;

pub use campaign::{campaign_params, fuzz_campaign};
pub use report::{check_history, Checks, Counters, ExperimentReport, HistoryVerdict, SnowReport};
pub use workload::{canonical, generate, GeneratorParams, ProtocolKind, UsageError, Workload};

use crate::checker::DEFAULT_CAP;
use crate::history::History;
use crate::proto::{build_world, Protocol};
use crate::simnet::{explore, run_to_quiescence, ExploreConfig, RunError, Scheduler, SchedulerPolicy, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    /// The simulation itself broke: a protocol handler rejected a message
    /// or the scheduler asked for something impossible.
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 64,
            HarnessError::Sim(_) => 2,
            HarnessError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub checks: Checks,
    pub oracle_cap: usize,
    /// Step budget for single scheduled runs.
    pub budget: u64,
    /// Bounds for exhaustive exploration; `max_depth` comes from the policy.
    pub explore: ExploreConfig,
    /// Keep traces of passing histories too (only failing ones otherwise).
    pub keep_all_traces: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            checks: Checks::ALL,
            oracle_cap: DEFAULT_CAP,
            budget: 10_000,
            explore: ExploreConfig::default(),
            keep_all_traces: false,
        }
    }
}

/// Runs `$body` with `$p` bound to the protocol type for `$kind`.
macro_rules! with_protocol {
    ($kind:expr, $p:ident => $body:expr) => {
        match $kind {
            ProtocolKind::A => {
                type $p = crate::proto::a::ProtoA;
                $body
            }
            ProtocolKind::B => {
                type $p = crate::proto::b::ProtoB;
                $body
            }
            ProtocolKind::C => {
                type $p = crate::proto::c::ProtoC;
                $body
            }
            ProtocolKind::Naive => {
                type $p = crate::proto::naive::ProtoNaive;
                $body
            }
        }
    };
}

/// One history per scheduled run, or every distinct maximal execution when
/// the policy is exhaustive.
pub fn run_experiment(
    workload: &Workload,
    policy: &SchedulerPolicy,
    opts: &RunOptions,
) -> Result<ExperimentReport, HarnessError> {
    workload.validate()?;
    with_protocol!(workload.protocol, P => run_with::<P>(workload, policy, opts))
}

fn run_with<P: Protocol>(
    workload: &Workload,
    policy: &SchedulerPolicy,
    opts: &RunOptions,
) -> Result<ExperimentReport, HarnessError> {
    let world = build_world::<P>(&workload.spec, workload.scripts.clone(), workload.arrival.clone());
    let protocol = workload.protocol;
    if let SchedulerPolicy::Exhaustive { max_depth } = policy {
        let cfg = ExploreConfig { max_depth: *max_depth, ..opts.explore };
        let mut verdicts = Vec::new();
        let mut traces = Vec::new();
        let stats = explore(&world, cfg, |h| {
            let v = check_history(&h, protocol, opts.checks, opts.oracle_cap, None);
            if opts.keep_all_traces || v.is_fail() {
                traces.push(h);
            }
            verdicts.push(v);
            ControlFlow::Continue(())
        })?;
        let mut report = ExperimentReport::new(protocol, verdicts, Some(stats));
        report.traces = traces;
        return Ok(report);
    }
    let mut sched = Scheduler::new(policy);
    let (h, failure) = match run_to_quiescence(world, &mut sched, opts.budget) {
        Ok(h) => (h, None),
        Err(RunError::Liveness { reason, partial }) => (*partial, Some(reason)),
        Err(RunError::Sim(e)) => return Err(e.into()),
    };
    let v = check_history(&h, protocol, opts.checks, opts.oracle_cap, failure);
    let mut report = ExperimentReport::new(protocol, vec![v], None);
    report.traces = vec![h];
    Ok(report)
}

/// Writes `report.json`, `summary.txt` and one `traces/<history_id>.json`
/// per kept trace into `dir`.
pub fn write_out(report: &ExperimentReport, dir: &Path) -> Result<(), HarnessError> {
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces)?;
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    std::fs::write(dir.join("summary.txt"), report.summary())?;
    for h in &report.traces {
        std::fs::write(traces.join(format!("{}.json", h.digest())), h.to_json_pretty() + "\n")?;
    }
    Ok(())
}

/// Re-checks a saved trace.
pub fn check_trace(h: &History, opts: &RunOptions) -> Result<HistoryVerdict, HarnessError> {
    let protocol = ProtocolKind::from_name(&h.config.protocol)
        .ok_or_else(|| UsageError::new("config.protocol", format!("unknown protocol {:?}", h.config.protocol)))?;
    Ok(check_history(h, protocol, opts.checks, opts.oracle_cap, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::{Condition, Status};
    use crate::proto::SystemSpec;
    use crate::simnet::ArrivalPlan;

    #[test]
    fn empty_workload_gives_empty_passing_report() {
        let w = Workload {
            protocol: ProtocolKind::B,
            spec: SystemSpec::new(2, 1, 1),
            scripts: vec![],
            arrival: ArrivalPlan::AllAtStart,
        };
        let r = run_experiment(&w, &SchedulerPolicy::Random { seed: 0 }, &RunOptions::default()).unwrap();
        assert_eq!(r.exit_code(), 0);
        assert_eq!(r.counters.reads, 0);
        assert_eq!(r.verdicts.len(), 1);
    }

    #[test]
    fn usage_errors_carry_the_field() {
        let mut w = canonical(ProtocolKind::A);
        w.spec.readers = 2;
        let err = run_experiment(&w, &SchedulerPolicy::Random { seed: 0 }, &RunOptions::default()).unwrap_err();
        assert_eq!(err.exit_code(), 64);
        assert!(err.to_string().contains("readers"));
    }

    #[test]
    fn seeded_run_of_a_passes() {
        let params = GeneratorParams {
            protocol: ProtocolKind::A,
            k: 3,
            writers: 2,
            readers: 1,
            txns: 20,
            max_set: 3,
            sequential: false,
        };
        let w = generate(&params, 7).unwrap();
        let r = run_experiment(&w, &SchedulerPolicy::Random { seed: 7 }, &RunOptions::default()).unwrap();
        assert_eq!(r.exit_code(), 0, "{}", r.summary());
        assert_eq!(r.counters.histories, 1);
        // 20 transactions exceed the cap; the oracle saw a prefix or skipped.
        assert_ne!(r.verdicts[0].oracle.status, Status::Fail);
    }

    #[test]
    fn naive_canonical_exploration_finds_a_fractured_read() {
        let r = run_experiment(
            &canonical(ProtocolKind::Naive),
            &SchedulerPolicy::Exhaustive { max_depth: 64 },
            &RunOptions::default(),
        )
        .unwrap();
        assert!(r.counters.oracle_fail >= 1);
        assert_eq!(r.exit_code(), 2);
        let bad = r.verdicts.iter().find(|v| v.oracle.is_fail()).unwrap();
        assert_eq!(bad.oracle.condition(), Some(Condition::NoSerialization));
        assert!(!r.traces.is_empty());
    }

    #[test]
    fn check_trace_reads_the_protocol_from_config() {
        let r = run_experiment(&canonical(ProtocolKind::C), &SchedulerPolicy::Random { seed: 1 }, &RunOptions::default())
            .unwrap();
        let h = History::from_json(&r.traces[0].to_json()).unwrap();
        let v = check_trace(&h, &RunOptions::default()).unwrap();
        assert_eq!(v, r.verdicts[0]);

        let mut bad = h;
        bad.config.protocol = "zz".into();
        assert_eq!(check_trace(&bad, &RunOptions::default()).unwrap_err().exit_code(), 64);
    }
}

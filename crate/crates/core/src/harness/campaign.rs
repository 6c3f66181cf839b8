//! Fuzz campaigns: many seeded random-schedule runs over generated workloads.

use rayon::prelude::*;

use crate::harness::report::ExperimentReport;
use crate::harness::workload::{generate, GeneratorParams, ProtocolKind, UsageError};
use crate::harness::{run_experiment, HarnessError, RunOptions};
use crate::simnet::SchedulerPolicy;

/// Workload shape for one campaign seed: four objects, one to three
/// writers, one reader for A and one to three otherwise, up to eight
/// transactions.
pub fn campaign_params(protocol: ProtocolKind, seed: u64) -> GeneratorParams {
    let writers = 1 + (seed % 3) as u32;
    let readers = if protocol == ProtocolKind::A { 1 } else { 1 + (seed / 3 % 3) as u32 };
    GeneratorParams {
        protocol,
        k: 4,
        writers,
        readers,
        txns: 1 + (seed / 9 % 8) as usize,
        max_set: 4,
        sequential: false,
    }
}

/// Runs seeds `seed0 .. seed0 + n_runs` in parallel; the seed picks both the
/// workload and the schedule. Results are aggregated in seed order, so the
/// digest does not depend on thread scheduling.
pub fn fuzz_campaign(
    protocol: ProtocolKind,
    n_runs: u64,
    seed0: u64,
    opts: &RunOptions,
) -> Result<ExperimentReport, HarnessError> {
    if n_runs == 0 {
        return Err(UsageError::new("runs", "need at least one run").into());
    }
    let runs: Vec<ExperimentReport> = (seed0..seed0 + n_runs)
        .into_par_iter()
        .map(|seed| {
            let w = generate(&campaign_params(protocol, seed), seed)?;
            let mut r = run_experiment(&w, &SchedulerPolicy::Random { seed }, opts)?;
            for v in &mut r.verdicts {
                v.seed = Some(seed);
            }
            if !opts.keep_all_traces && !r.verdicts.iter().any(|v| v.is_fail()) {
                r.traces.clear();
            }
            Ok(r)
        })
        .collect::<Result<_, HarnessError>>()?;
    let mut verdicts = Vec::with_capacity(runs.len());
    let mut traces = Vec::new();
    for r in runs {
        verdicts.extend(r.verdicts);
        traces.extend(r.traces);
    }
    let mut report = ExperimentReport::new(protocol, verdicts, None);
    report.traces = traces;
    Ok(report)
}

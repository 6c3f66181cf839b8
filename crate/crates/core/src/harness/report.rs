//! Per-history verdicts and their aggregation into an experiment report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checker::{
    brute_force_prefix, check_key_availability, check_nonblocking, check_shape, check_w_liveness, check_witness,
    count_rounds_and_versions, detect_snapshot_races, tag_gaps, CheckError, Status, Verdict, Witness,
};
use crate::harness::workload::{ProtocolKind, UsageError};
use crate::history::History;
use crate::model::TxnId;
use crate::proto::a::ProtoA;
use crate::proto::b::ProtoB;
use crate::proto::c::ProtoC;
use crate::proto::naive::ProtoNaive;
use crate::proto::Protocol;
use crate::simnet::{ExploreStats, LivenessFailure};

/// Which checker families to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    pub witness: bool,
    pub oracle: bool,
    pub snow: bool,
}

impl Checks {
    pub const ALL: Checks = Checks { witness: true, oracle: true, snow: true };

    /// Comma-separated subset of `witness,oracle,snow`, or `all`.
    pub fn parse(s: &str) -> Result<Self, UsageError> {
        let mut c = Checks { witness: false, oracle: false, snow: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "witness" => c.witness = true,
                "oracle" => c.oracle = true,
                "snow" => c.snow = true,
                "all" => c = Checks::ALL,
                other => return Err(UsageError::new("checks", format!("unknown check {other:?}"))),
            }
        }
        Ok(c)
    }
}

impl Default for Checks {
    fn default() -> Self {
        Checks::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnowReport {
    pub nonblocking: Verdict,
    pub read_shape: Verdict,
    pub liveness: Verdict,
    pub key_availability: Verdict,
    pub rounds: Vec<usize>,
    pub max_versions: Vec<usize>,
    pub fallback_reads: Vec<TxnId>,
    pub detected_races: Vec<TxnId>,
    pub missing_tags: usize,
    pub duplicate_tags: usize,
}

impl SnowReport {
    pub fn is_fail(&self) -> bool {
        self.nonblocking.is_fail()
            || self.read_shape.is_fail()
            || self.key_availability.is_fail()
            || self.fallback_reads != self.detected_races
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryVerdict {
    pub history_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub witness: Verdict,
    pub oracle: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snow: Option<SnowReport>,
    /// Why the run did not quiesce normally, if it did not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_failure: Option<LivenessFailure>,
}

impl HistoryVerdict {
    /// The tag witness failed although the oracle found a serialization.
    pub fn witness_insufficient(&self) -> bool {
        self.witness.is_fail() && self.oracle.is_pass()
    }

    pub fn safety_fail(&self) -> bool {
        self.oracle.is_fail() || (self.witness.is_fail() && !self.oracle.is_pass())
    }

    /// Witness PASS with oracle FAIL means the witness conditions are unsound.
    pub fn cross_validation_exception(&self) -> bool {
        self.witness.is_pass() && self.oracle.is_fail()
    }

    pub fn snow_fail(&self) -> bool {
        self.snow.as_ref().is_some_and(SnowReport::is_fail)
    }

    pub fn liveness_fail(&self) -> bool {
        self.run_failure.is_some() || self.snow.as_ref().is_some_and(|s| s.liveness.is_fail())
    }

    pub fn is_fail(&self) -> bool {
        self.safety_fail() || self.snow_fail() || self.liveness_fail()
    }
}

fn read_request_kinds(p: ProtocolKind) -> &'static [&'static str] {
    match p {
        ProtocolKind::A => ProtoA::READ_REQUEST_KINDS,
        ProtocolKind::B => ProtoB::READ_REQUEST_KINDS,
        ProtocolKind::C => ProtoC::READ_REQUEST_KINDS,
        ProtocolKind::Naive => ProtoNaive::READ_REQUEST_KINDS,
    }
}

fn input_error(e: CheckError) -> Verdict {
    Verdict::skipped(e.to_string())
}

/// Runs the selected checkers. Safety checkers see the closed history
/// (incomplete READs dropped, pending WRITEs completed) when the run was
/// cut short; monitors see the trace as recorded.
pub fn check_history(
    h: &History,
    protocol: ProtocolKind,
    checks: Checks,
    cap: usize,
    run_failure: Option<LivenessFailure>,
) -> HistoryVerdict {
    let closed = if h.is_complete() { h.clone() } else { h.closed() };
    let witness = if !checks.witness {
        Verdict::skipped("not requested")
    } else if protocol == ProtocolKind::Naive {
        Verdict::skipped("protocol assigns no tags")
    } else {
        Witness::from_history(&closed)
            .and_then(|w| check_witness(&closed, &w))
            .unwrap_or_else(input_error)
    };
    let oracle = if checks.oracle {
        brute_force_prefix(&closed, cap).unwrap_or_else(input_error)
    } else {
        Verdict::skipped("not requested")
    };
    let snow = checks.snow.then(|| {
        let shapes = count_rounds_and_versions(h);
        let complete: Vec<_> = shapes
            .iter()
            .filter(|s| h.record(s.txn_id).is_some_and(|r| r.is_complete()))
            .cloned()
            .collect();
        let (missing, dup) = tag_gaps(h);
        SnowReport {
            nonblocking: check_nonblocking(h, read_request_kinds(protocol)),
            read_shape: check_shape(protocol.name(), &complete),
            liveness: check_w_liveness(h),
            key_availability: check_key_availability(h),
            rounds: complete.iter().map(|s| s.rounds).collect(),
            max_versions: complete.iter().map(|s| s.max_versions).collect(),
            fallback_reads: h.records.iter().filter(|r| r.fallback).map(|r| r.txn_id).collect(),
            detected_races: detect_snapshot_races(h),
            missing_tags: missing.len(),
            duplicate_tags: dup.len(),
        }
    });
    HistoryVerdict { history_id: h.digest(), seed: None, witness, oracle, snow, run_failure }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub histories: usize,
    pub witness_pass: usize,
    pub witness_fail: usize,
    pub witness_skipped: usize,
    pub witness_insufficient: usize,
    pub oracle_pass: usize,
    pub oracle_fail: usize,
    pub oracle_skipped: usize,
    pub cross_validation_exceptions: usize,
    pub safety_fail: usize,
    pub snow_fail: usize,
    pub liveness_fail: usize,
    pub reads: usize,
    pub fallback_reads: usize,
    pub detected_races: usize,
    pub missing_tags: usize,
    pub duplicate_tags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: ProtocolKind,
    pub counters: Counters,
    pub rounds_histogram: BTreeMap<usize, usize>,
    pub versions_histogram: BTreeMap<usize, usize>,
    pub fallback_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration: Option<ExploreStats>,
    /// SHA-256 over the per-history digests, in run order.
    pub digest: String,
    pub verdicts: Vec<HistoryVerdict>,
    /// Histories to write out as trace files.
    #[serde(skip)]
    pub traces: Vec<History>,
}

impl ExperimentReport {
    pub fn new(protocol: ProtocolKind, verdicts: Vec<HistoryVerdict>, exploration: Option<ExploreStats>) -> Self {
        let mut c = Counters::default();
        let mut rounds_histogram = BTreeMap::new();
        let mut versions_histogram = BTreeMap::new();
        let mut hasher = Sha256::new();
        for v in &verdicts {
            hasher.update(v.history_id.as_bytes());
            c.histories += 1;
            match v.witness.status {
                Status::Pass => c.witness_pass += 1,
                Status::Fail => c.witness_fail += 1,
                Status::Skipped => c.witness_skipped += 1,
            }
            match v.oracle.status {
                Status::Pass => c.oracle_pass += 1,
                Status::Fail => c.oracle_fail += 1,
                Status::Skipped => c.oracle_skipped += 1,
            }
            c.witness_insufficient += usize::from(v.witness_insufficient());
            c.cross_validation_exceptions += usize::from(v.cross_validation_exception());
            c.safety_fail += usize::from(v.safety_fail());
            c.snow_fail += usize::from(v.snow_fail());
            c.liveness_fail += usize::from(v.liveness_fail());
            if let Some(s) = &v.snow {
                c.reads += s.rounds.len();
                c.fallback_reads += s.fallback_reads.len();
                c.detected_races += s.detected_races.len();
                c.missing_tags += s.missing_tags;
                c.duplicate_tags += s.duplicate_tags;
                for &r in &s.rounds {
                    *rounds_histogram.entry(r).or_insert(0) += 1;
                }
                for &m in &s.max_versions {
                    *versions_histogram.entry(m).or_insert(0) += 1;
                }
            }
        }
        let fallback_rate = if c.reads == 0 { 0.0 } else { c.fallback_reads as f64 / c.reads as f64 };
        Self {
            protocol,
            counters: c,
            rounds_histogram,
            versions_histogram,
            fallback_rate,
            exploration,
            digest: hex::encode(hasher.finalize()),
            verdicts,
            traces: Vec::new(),
        }
    }

    /// 0 when everything passed, 2 on a safety or read-shape failure, 3 on
    /// a liveness failure only.
    pub fn exit_code(&self) -> i32 {
        let c = &self.counters;
        if c.safety_fail > 0 || c.snow_fail > 0 {
            2
        } else if c.liveness_fail > 0 {
            3
        } else {
            0
        }
    }

    pub fn summary(&self) -> String {
        let c = &self.counters;
        let mut out = String::new();
        let _ = writeln!(out, "protocol {}: {} histories", self.protocol.name(), c.histories);
        let _ = writeln!(
            out,
            "witness  pass {} fail {} skipped {} (insufficient {})",
            c.witness_pass, c.witness_fail, c.witness_skipped, c.witness_insufficient
        );
        let _ = writeln!(out, "oracle   pass {} fail {} skipped {}", c.oracle_pass, c.oracle_fail, c.oracle_skipped);
        let _ = writeln!(out, "cross-validation exceptions {}", c.cross_validation_exceptions);
        let _ = writeln!(
            out,
            "failures safety {} snow {} liveness {}",
            c.safety_fail, c.snow_fail, c.liveness_fail
        );
        let _ = writeln!(out, "reads {} rounds {:?} versions {:?}", c.reads, self.rounds_histogram, self.versions_histogram);
        let _ = writeln!(
            out,
            "fallback reads {} ({:.4}%) detected races {}",
            c.fallback_reads,
            self.fallback_rate * 100.0,
            c.detected_races
        );
        let _ = writeln!(out, "tag gaps {} duplicate tags {}", c.missing_tags, c.duplicate_tags);
        if let Some(x) = &self.exploration {
            let _ = writeln!(
                out,
                "explored {} states, {} histories, max choice depth {}{}",
                x.states,
                x.histories,
                x.max_choice_depth,
                if x.incomplete { " (incomplete)" } else { "" }
            );
        }
        let _ = writeln!(out, "digest {}", self.digest);
        let _ = writeln!(out, "exit {}", self.exit_code());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_parse() {
        assert_eq!(Checks::parse("all").unwrap(), Checks::ALL);
        assert_eq!(Checks::parse("oracle").unwrap(), Checks { witness: false, oracle: true, snow: false });
        assert_eq!(Checks::parse("witness, snow").unwrap(), Checks { witness: true, oracle: false, snow: true });
        assert_eq!(Checks::parse("speed").unwrap_err().field, "checks");
    }

    #[test]
    fn empty_report_passes() {
        let r = ExperimentReport::new(ProtocolKind::B, vec![], None);
        assert_eq!(r.exit_code(), 0);
        assert_eq!(r.fallback_rate, 0.0);
        assert_eq!(r.digest, hex::encode(Sha256::digest(b"")));
    }
}

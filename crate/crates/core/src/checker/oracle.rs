//! Exhaustive strict-serializability check: search for a total order that
//! extends real-time precedence and replays every recorded response through
//! the sequential semantics.

use std::collections::HashSet;

use crate::checker::{CheckError, Condition, Verdict};
use crate::history::History;
use crate::model::{realtime_precedes, seq_apply, SequentialState, TxnId, TxnRecord};

/// Largest history (in transactions) the oracle searches.
pub const DEFAULT_CAP: usize = 8;

pub fn brute_force(h: &History, cap: usize) -> Result<Verdict, CheckError> {
    if let Some(r) = h.records.iter().find(|r| !r.is_complete()) {
        return Err(CheckError::Incomplete(r.txn_id));
    }
    let n = h.records.len();
    if n > cap {
        return Ok(Verdict::skipped(format!("{n} transactions exceeds oracle cap {cap}")));
    }
    let recs: Vec<&TxnRecord> = h.records.iter().collect();
    let initial = h.config.initial_state();
    if let Some(order) = serialize(&recs, &initial) {
        return Ok(Verdict::pass_with_order(order.into_iter().map(|i| recs[i].txn_id).collect()));
    }
    // Dropping READs from a serializable history keeps it serializable, so
    // any READ-reduced history that still fails is valid evidence.
    let mut kept = recs.clone();
    let mut i = 0;
    while i < kept.len() {
        if kept[i].is_read() {
            let mut trial = kept.clone();
            trial.remove(i);
            if serialize(&trial, &initial).is_none() {
                kept = trial;
                continue;
            }
        }
        i += 1;
    }
    Ok(Verdict::fail(
        Condition::NoSerialization,
        kept.iter().map(|r| r.txn_id).collect(),
        format!("no real-time-respecting order of {n} transactions reproduces the responses"),
    ))
}

/// Oracle on the longest prefix that ends at a quiescent cut (no
/// transaction spans it) and fits the cap. Every transaction after such a
/// cut follows every transaction before it in real time, so any
/// serialization of the whole history begins with a serialization of the
/// prefix; a failing prefix therefore proves the whole history fails.
pub fn brute_force_prefix(h: &History, cap: usize) -> Result<Verdict, CheckError> {
    if h.records.len() <= cap {
        return brute_force(h, cap);
    }
    if let Some(r) = h.records.iter().find(|r| !r.is_complete()) {
        return Err(CheckError::Incomplete(r.txn_id));
    }
    let mut recs: Vec<&TxnRecord> = h.records.iter().collect();
    recs.sort_by_key(|r| r.inv_seq);
    let mut best = 0;
    let mut max_resp = 0;
    for (i, r) in recs.iter().enumerate().take(cap + 1) {
        if i > 0 && max_resp < r.inv_seq {
            best = i;
        }
        max_resp = max_resp.max(r.resp_seq.expect("complete"));
    }
    if best == 0 {
        return Ok(Verdict::skipped(format!(
            "{} transactions exceeds oracle cap {cap} and no quiescent prefix fits",
            h.records.len()
        )));
    }
    let mut prefix = h.clone();
    let members: HashSet<TxnId> = recs[..best].iter().map(|r| r.txn_id).collect();
    prefix.records.retain(|r| members.contains(&r.txn_id));
    let v = brute_force(&prefix, cap)?;
    Ok(v.with_note(format!("checked prefix of {best} of {} transactions", h.records.len())))
}

/// Depth-first search over linear extensions; returns record indices.
fn serialize(recs: &[&TxnRecord], initial: &SequentialState) -> Option<Vec<usize>> {
    let n = recs.len();
    let preds: Vec<u64> = (0..n)
        .map(|j| (0..n).filter(|&i| realtime_precedes(recs[i], recs[j])).fold(0, |m, i| m | 1 << i))
        .collect();
    let mut failed = HashSet::new();
    let mut order = Vec::with_capacity(n);
    search(recs, &preds, 0, initial, &mut order, &mut failed).then_some(order)
}

fn search(
    recs: &[&TxnRecord],
    preds: &[u64],
    placed: u64,
    state: &SequentialState,
    order: &mut Vec<usize>,
    failed: &mut HashSet<(u64, SequentialState)>,
) -> bool {
    if order.len() == recs.len() {
        return true;
    }
    if failed.contains(&(placed, state.clone())) {
        return false;
    }
    for j in 0..recs.len() {
        if placed & (1 << j) != 0 || preds[j] & !placed != 0 {
            continue;
        }
        let Ok((resp, next)) = seq_apply(state, &recs[j].invocation) else {
            continue;
        };
        if Some(&resp) != recs[j].response.as_ref() {
            continue;
        }
        order.push(j);
        if search(recs, preds, placed | 1 << j, &next, order, failed) {
            return true;
        }
        order.pop();
    }
    failed.insert((placed, state.clone()));
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::synth::Builder;

    #[test]
    fn single_initial_read_passes() {
        let mut b = Builder::new(2);
        let r = b.read(1, &[1, 2], &["0", "0"], (0, 1), None);
        let v = brute_force(&b.build(), DEFAULT_CAP).unwrap();
        assert_eq!(v.order, Some(vec![r]));
    }

    #[test]
    fn fractured_read_fails() {
        let mut b = Builder::new(2);
        let w = b.write(1, &[(1, "1"), (2, "1")], (0, 1), None);
        let r = b.read(1, &[1, 2], &["1", "0"], (2, 3), None);
        let v = brute_force(&b.build(), DEFAULT_CAP).unwrap();
        assert_eq!(v.condition(), Some(Condition::NoSerialization));
        assert_eq!(v.violation.unwrap().txns, vec![w, r]);
    }

    #[test]
    fn concurrent_read_of_prestate_goes_first() {
        let mut b = Builder::new(2);
        let w = b.write(1, &[(1, "1"), (2, "1")], (0, 3), None);
        let r = b.read(1, &[1, 2], &["0", "0"], (1, 2), None);
        let v = brute_force(&b.build(), DEFAULT_CAP).unwrap();
        assert_eq!(v.order, Some(vec![r, w]));
    }

    #[test]
    fn evidence_drops_irrelevant_reads() {
        let mut b = Builder::new(2);
        let w = b.write(1, &[(1, "1"), (2, "1")], (0, 1), None);
        b.read(2, &[1], &["1"], (2, 3), None);
        let bad = b.read(1, &[1, 2], &["1", "0"], (4, 5), None);
        b.read(3, &[2], &["1"], (6, 7), None);
        let v = brute_force(&b.build(), DEFAULT_CAP).unwrap();
        assert_eq!(v.violation.unwrap().txns, vec![w, bad]);
    }

    #[test]
    fn cap_exceeded_is_skipped() {
        let mut b = Builder::new(1);
        for i in 0..3 {
            b.read(1, &[1], &["0"], (2 * i, 2 * i + 1), None);
        }
        let h = b.build();
        assert_eq!(brute_force(&h, 2).unwrap().status, crate::checker::Status::Skipped);
        // Quiescent cuts between the sequential reads allow a 2-read prefix.
        let v = brute_force_prefix(&h, 2).unwrap();
        assert!(v.is_pass());
        assert_eq!(v.order.unwrap().len(), 2);
    }

    #[test]
    fn prefix_without_cut_is_skipped() {
        let mut b = Builder::new(1);
        b.write(1, &[(1, "1")], (0, 10), None);
        b.read(1, &[1], &["0"], (1, 2), None);
        b.read(1, &[1], &["1"], (3, 4), None);
        let v = brute_force_prefix(&b.build(), 2).unwrap();
        assert_eq!(v.status, crate::checker::Status::Skipped);
    }
}

//! Sufficient condition for strict serializability from a tag assignment.
//!
//! Transactions are ordered by tag, a WRITE going before READs that share
//! its tag. The history is strictly serializable if that order
//! - P1: gives every transaction finitely many predecessors (tags >= 1),
//! - P2: never places a transaction before one that finished before it started,
//! - P3: makes every WRITE comparable to everything (distinct WRITE tags),
//! - P4: explains every READ value by the last preceding WRITE of the object.

use std::collections::BTreeMap;

use crate::checker::{CheckError, Condition, Verdict};
use crate::history::History;
use crate::model::{realtime_precedes, Response, Tag, TxnId, TxnRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    tags: BTreeMap<TxnId, Tag>,
}

impl Witness {
    /// Uses the tags the protocol recorded on each transaction.
    pub fn from_history(h: &History) -> Result<Self, CheckError> {
        let tags = h
            .records
            .iter()
            .map(|r| r.tag.map(|t| (r.txn_id, t)).ok_or(CheckError::MissingTag(r.txn_id)))
            .collect::<Result<_, _>>()?;
        Ok(Self { tags })
    }

    pub fn from_tags(tags: BTreeMap<TxnId, Tag>) -> Self {
        Self { tags }
    }

    pub fn tag(&self, txn: TxnId) -> Result<Tag, CheckError> {
        self.tags.get(&txn).copied().ok_or(CheckError::MissingTag(txn))
    }

    /// The witness order `a ≺ b`.
    pub fn precedes(&self, a: &TxnRecord, b: &TxnRecord) -> Result<bool, CheckError> {
        let (ta, tb) = (self.tag(a.txn_id)?, self.tag(b.txn_id)?);
        Ok(ta < tb || (ta == tb && a.is_write() && b.is_read()))
    }
}

pub fn check_witness(h: &History, w: &Witness) -> Result<Verdict, CheckError> {
    if let Some(r) = h.records.iter().find(|r| !r.is_complete()) {
        return Err(CheckError::Incomplete(r.txn_id));
    }
    for r in &h.records {
        if w.tag(r.txn_id)? < Tag(1) {
            return Ok(Verdict::fail(Condition::P1, vec![r.txn_id], "tag below 1"));
        }
    }

    let writes: Vec<&TxnRecord> = h.records.iter().filter(|r| r.is_write()).collect();
    let mut by_tag: BTreeMap<Tag, TxnId> = BTreeMap::new();
    for wr in &writes {
        let t = w.tag(wr.txn_id)?;
        if let Some(prev) = by_tag.insert(t, wr.txn_id) {
            return Ok(Verdict::fail(Condition::P3, vec![prev, wr.txn_id], format!("WRITEs share tag {t}")));
        }
    }

    for pi in &h.records {
        for phi in &h.records {
            if realtime_precedes(pi, phi) && w.precedes(phi, pi)? {
                return Ok(Verdict::fail(
                    Condition::P2,
                    vec![phi.txn_id, pi.txn_id],
                    format!("{} finished before {} started but is ordered after it", pi.txn_id, phi.txn_id),
                ));
            }
        }
    }

    let initial = h.config.initial_state();
    for pi in h.records.iter().filter(|r| r.is_read()) {
        let objects = pi.invocation.objects();
        let Some(Response::Values(values)) = &pi.response else {
            return Ok(Verdict::fail(Condition::P4, vec![pi.txn_id], "READ without a value response"));
        };
        if values.len() != objects.len() {
            return Ok(Verdict::fail(Condition::P4, vec![pi.txn_id], "response length differs from read set"));
        }
        for (o, got) in objects.iter().zip(values) {
            let mut last: Option<(&TxnRecord, Tag)> = None;
            for phi in writes.iter().filter(|p| p.invocation.written_value(*o).is_some()) {
                if w.precedes(phi, pi)? {
                    let t = w.tag(phi.txn_id)?;
                    if last.is_none_or(|(_, lt)| t > lt) {
                        last = Some((phi, t));
                    }
                }
            }
            let expected = match last {
                Some((phi, _)) => phi.invocation.written_value(*o).expect("filtered on o"),
                None => initial.get(*o),
            };
            if got != expected {
                let mut txns = vec![pi.txn_id];
                txns.extend(last.map(|(phi, _)| phi.txn_id));
                return Ok(Verdict::fail(
                    Condition::P4,
                    txns,
                    format!("{o}: read {got:?}, last preceding WRITE gives {expected:?}"),
                ));
            }
        }
    }
    Ok(Verdict::pass())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::synth::Builder;
    use crate::model::ObjectId;

    fn check(h: &History) -> Verdict {
        check_witness(h, &Witness::from_history(h).unwrap()).unwrap()
    }

    #[test]
    fn sequential_write_then_read_passes() {
        let mut b = Builder::new(2);
        b.write(1, &[(1, "5"), (2, "7")], (0, 1), Some(2));
        b.read(1, &[1, 2], &["5", "7"], (2, 3), Some(2));
        assert!(check(&b.build()).is_pass());
    }

    #[test]
    fn read_ordered_after_a_later_write_fails_p2() {
        let mut b = Builder::new(2);
        let r = b.read(1, &[1], &["0"], (0, 1), Some(3));
        let w = b.write(1, &[(1, "5")], (2, 3), Some(2));
        let v = check(&b.build());
        assert_eq!(v.condition(), Some(Condition::P2));
        assert_eq!(v.violation.unwrap().txns, vec![w, r]);
    }

    #[test]
    fn shared_write_tags_fail_p3() {
        let mut b = Builder::new(2);
        b.write(1, &[(1, "5")], (0, 3), Some(2));
        b.write(2, &[(2, "6")], (1, 2), Some(2));
        assert_eq!(check(&b.build()).condition(), Some(Condition::P3));
    }

    #[test]
    fn stale_value_fails_p4() {
        let mut b = Builder::new(2);
        b.write(1, &[(1, "5"), (2, "7")], (0, 1), Some(2));
        let r = b.read(1, &[1, 2], &["5", "0"], (2, 3), Some(2));
        let v = check(&b.build());
        assert_eq!(v.condition(), Some(Condition::P4));
        assert_eq!(v.violation.unwrap().txns[0], r);
    }

    #[test]
    fn zero_tag_fails_p1() {
        let mut b = Builder::new(1);
        b.read(1, &[1], &["0"], (0, 1), Some(0));
        assert_eq!(check(&b.build()).condition(), Some(Condition::P1));
    }

    #[test]
    fn equal_tags_put_write_first() {
        let mut b = Builder::new(1);
        b.read(1, &[1], &["5"], (0, 3), Some(2));
        b.write(1, &[(1, "5")], (1, 2), Some(2));
        assert!(check(&b.build()).is_pass());
    }

    #[test]
    fn missing_tag_and_incomplete_are_input_errors() {
        let mut b = Builder::new(1);
        let r = b.read(1, &[1], &["0"], (0, 1), None);
        let h = b.build();
        assert_eq!(Witness::from_history(&h), Err(CheckError::MissingTag(r)));

        let mut b = Builder::new(1);
        let r = b.read(1, &[1], &["0"], (0, 1), Some(1));
        let mut h = b.build();
        h.records[0].resp_seq = None;
        assert_eq!(
            check_witness(&h, &Witness::from_history(&h).unwrap()),
            Err(CheckError::Incomplete(r))
        );
    }

    /// Tagging a READ with the largest log index among the entries it
    /// selected, instead of the log length, breaks P2: a write to another
    /// object that completed before the read is ordered after it.
    #[test]
    fn touched_entry_read_tags_break_real_time_order() {
        use crate::model::{Bitmap, Key, WriteLog};
        let mut log = WriteLog::new(2);
        let wt = log.append(Key::new(1, 1), Bitmap::from_objects(2, [ObjectId(1)]));
        let touched = log.touched_tag(&[ObjectId(2)]);
        assert_eq!((wt, touched), (Tag(2), Tag(1)));

        let mut b = Builder::new(2);
        b.write(1, &[(1, "5")], (0, 1), Some(wt.0));
        b.read(1, &[2], &["0"], (2, 3), Some(touched.0));
        assert_eq!(check(&b.build()).condition(), Some(Condition::P2));

        let mut b = Builder::new(2);
        b.write(1, &[(1, "5")], (0, 1), Some(wt.0));
        b.read(1, &[2], &["0"], (2, 3), Some(log.len().0));
        assert!(check(&b.build()).is_pass());
    }
}

//! Concurrent-history recording and an exhaustive linearizability checker
//! for the set ADT (Wing & Gong style search with memoization).

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

/// Global invocation/response order source for one recorded run.
pub struct EventClock(AtomicU64);

impl EventClock {
    pub fn new() -> EventClock {
        EventClock(AtomicU64::new(0))
    }

    pub fn tick(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }
}

impl Default for EventClock {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OpKind {
    Insert,
    Remove,
    Contains,
}

/// One completed operation: invocation index strictly precedes response.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HistOp {
    pub tid: usize,
    pub kind: OpKind,
    pub key: u64,
    pub result: bool,
    pub inv: u64,
    pub res: u64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct History {
    pub ops: Vec<HistOp>,
}

#[derive(Debug)]
pub enum Verdict {
    Ok,
    /// No sequential witness exists; the index is the length of the longest
    /// linearizable prefix in response order.
    Violation {
        linearizable_prefix: usize,
    },
    /// Too many operations for the exponential search.
    TooLarge {
        ops: usize,
    },
}

const MAX_OPS: usize = 90;

/// Searches for a sequential witness over the set ADT, starting from the
/// empty set.
pub fn check_linearizability(h: &History) -> Verdict {
    if h.ops.len() > MAX_OPS {
        return Verdict::TooLarge { ops: h.ops.len() };
    }
    if witness_exists(&h.ops) {
        return Verdict::Ok;
    }
    // minimal violating prefix by response order
    let mut by_res: Vec<HistOp> = h.ops.clone();
    by_res.sort_by_key(|o| o.res);
    for cut in 1..=by_res.len() {
        if !witness_exists(&by_res[..cut]) {
            return Verdict::Violation {
                linearizable_prefix: cut - 1,
            };
        }
    }
    Verdict::Violation {
        linearizable_prefix: by_res.len(),
    }
}

fn witness_exists(ops: &[HistOp]) -> bool {
    assert!(ops.len() <= MAX_OPS);
    // map keys to bit positions
    let mut keys: Vec<u64> = ops.iter().map(|o| o.key).collect();
    keys.sort_unstable();
    keys.dedup();
    assert!(keys.len() <= 32, "keyspace too large for the checker");
    let bit_of = |k: u64| keys.binary_search(&k).unwrap();

    let n = ops.len();
    let full: u128 = if n == 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    };
    let mut memo: HashSet<(u128, u32)> = HashSet::new();
    let mut stack: Vec<(u128, u32)> = vec![(0, 0)];
    while let Some((done, state)) = stack.pop() {
        if done == full {
            return true;
        }
        if !memo.insert((done, state)) {
            continue;
        }
        // an op may go next only if no other pending op responded before
        // its invocation
        let mut min_res = u64::MAX;
        for (i, o) in ops.iter().enumerate() {
            if done & (1 << i) == 0 {
                min_res = min_res.min(o.res);
            }
        }
        for (i, o) in ops.iter().enumerate() {
            if done & (1 << i) != 0 || o.inv > min_res {
                continue;
            }
            let bit = 1u32 << bit_of(o.key);
            let present = state & bit != 0;
            let (legal, next_state) = match o.kind {
                OpKind::Insert => (
                    o.result != present,
                    if o.result { state | bit } else { state },
                ),
                OpKind::Remove => (
                    o.result == present,
                    if o.result { state & !bit } else { state },
                ),
                OpKind::Contains => (o.result == present, state),
            };
            if legal {
                stack.push((done | (1 << i), next_state));
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(tid: usize, kind: OpKind, key: u64, result: bool, inv: u64, res: u64) -> HistOp {
        HistOp {
            tid,
            kind,
            key,
            result,
            inv,
            res,
        }
    }

    #[test]
    fn empty_history_ok() {
        assert!(matches!(
            check_linearizability(&History { ops: vec![] }),
            Verdict::Ok
        ));
    }

    #[test]
    fn sequential_history_ok() {
        let ops = vec![
            op(0, OpKind::Insert, 1, true, 0, 1),
            op(0, OpKind::Contains, 1, true, 2, 3),
            op(0, OpKind::Remove, 1, true, 4, 5),
            op(0, OpKind::Contains, 1, false, 6, 7),
        ];
        assert!(matches!(
            check_linearizability(&History { ops }),
            Verdict::Ok
        ));
    }

    #[test]
    fn concurrent_overlap_ok() {
        // two overlapping inserts of the same key: one true, one false
        let ops = vec![
            op(0, OpKind::Insert, 1, true, 0, 3),
            op(1, OpKind::Insert, 1, false, 1, 2),
        ];
        assert!(matches!(
            check_linearizability(&History { ops }),
            Verdict::Ok
        ));
    }

    #[test]
    fn contains_false_between_nonoverlapping_insert_and_remove() {
        // insert(7)=true completes, then contains(7)=false, then remove:
        // no witness
        let ops = vec![
            op(0, OpKind::Insert, 7, true, 0, 1),
            op(1, OpKind::Contains, 7, false, 2, 3),
            op(0, OpKind::Remove, 7, true, 4, 5),
        ];
        match check_linearizability(&History { ops }) {
            Verdict::Violation {
                linearizable_prefix,
            } => assert_eq!(linearizable_prefix, 1),
            v => panic!("expected violation, got {v:?}"),
        }
    }

    #[test]
    fn double_successful_remove_is_violation() {
        let ops = vec![
            op(0, OpKind::Insert, 3, true, 0, 1),
            op(1, OpKind::Remove, 3, true, 2, 5),
            op(2, OpKind::Remove, 3, true, 3, 4),
        ];
        assert!(matches!(
            check_linearizability(&History { ops }),
            Verdict::Violation { .. }
        ));
    }

    #[test]
    fn pending_overlap_allows_reordering() {
        // contains(5)=true is legal while the insert is still pending
        let ops = vec![
            op(0, OpKind::Insert, 5, true, 0, 4),
            op(1, OpKind::Contains, 5, true, 1, 2),
        ];
        assert!(matches!(
            check_linearizability(&History { ops }),
            Verdict::Ok
        ));
    }

    #[test]
    fn rejects_oversized_history() {
        let ops = (0..91u64)
            .map(|i| op(0, OpKind::Contains, 1, false, 2 * i, 2 * i + 1))
            .collect();
        assert!(matches!(
            check_linearizability(&History { ops }),
            Verdict::TooLarge { .. }
        ));
    }
}

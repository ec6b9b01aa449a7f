//! Synchronous-round model of SGMARK on a minimal perfect skip graph:
//! 2 threads start at each top-level list head; every round all active
//! threads attempt the first unmarked node of their current list, each
//! contested node counts one attempt per contender, exactly one contender
//! wins and exits, and the losers simultaneously move down a level (or,
//! at the bottom, past the contested node).

use std::collections::BTreeMap;

use crate::perfect::{build_perfect, Kind, PerfectStructure};

#[derive(Clone, Debug)]
pub struct RoundTrace {
    pub t: usize,
    /// Bottom positions in the order they were marked (position order
    /// within a round).
    pub mark_order: Vec<usize>,
    /// CAS-attempt counts aligned with `mark_order`.
    pub attempts: Vec<u32>,
    pub rounds: usize,
}

impl RoundTrace {
    pub fn total_attempts(&self) -> u32 {
        self.attempts.iter().sum()
    }
}

#[derive(Clone, Copy)]
struct ThreadState {
    level: usize,
    /// Position of the last node visited; None = still at the list head.
    pos: Option<usize>,
    /// Top-level list the thread belongs to (fixes lower lists via pos).
    start_list: usize,
    active: bool,
}

fn target_of(s: &PerfectStructure, st: &ThreadState, marked: &[bool]) -> Option<usize> {
    let label = match st.pos {
        Some(p) => s.list_of(st.level, p),
        None => s.list_of(st.level, st.start_list),
    };
    let mut cur = match st.pos {
        Some(p) => s.next_in_list(st.level, label, p),
        None => {
            // first member of the list
            let first = st.start_list % (1 << st.level);
            Some(first)
        }
    };
    while let Some(q) = cur {
        if !marked[q] {
            return Some(q);
        }
        cur = s.next_in_list(st.level, label, q);
    }
    None
}

pub fn simulate_sgmark(n: usize) -> RoundTrace {
    assert!(n >= 1);
    let s = build_perfect(Kind::SkipGraph, n, true, 0);
    let t = s.threads();
    let top = s.max_level();
    let mut threads: Vec<ThreadState> = (0..t)
        .map(|i| ThreadState {
            level: top,
            pos: None,
            start_list: i / 2, // 2 threads per top-level list head
            active: true,
        })
        .collect();
    let mut marked = vec![false; s.bottom_len];
    let mut mark_order = Vec::new();
    let mut attempts = Vec::new();
    let mut rounds = 0;
    while threads.iter().any(|th| th.active) {
        rounds += 1;
        // all targets are computed against round-start marks
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut descents: Vec<usize> = Vec::new();
        for (i, th) in threads.iter().enumerate() {
            if !th.active {
                continue;
            }
            match target_of(&s, th, &marked) {
                Some(q) => groups.entry(q).or_default().push(i),
                None => descents.push(i),
            }
        }
        // threads with an exhausted list move down without an attempt
        for i in descents {
            let th = &mut threads[i];
            if th.level == 0 {
                th.active = false; // observed empty
            } else {
                th.level -= 1;
            }
        }
        for (q, contenders) in groups {
            marked[q] = true;
            mark_order.push(q);
            attempts.push(contenders.len() as u32);
            // lowest thread id wins and exits with the key
            for (rank, &i) in contenders.iter().enumerate() {
                let th = &mut threads[i];
                if rank == 0 {
                    th.active = false;
                } else if th.level > 0 {
                    th.level -= 1;
                    th.pos = Some(q);
                } else {
                    th.pos = Some(q);
                }
            }
        }
        assert!(rounds <= 4 * t, "simulation failed to converge");
    }
    RoundTrace {
        t,
        mark_order,
        attempts,
        rounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t4_attempt_counts() {
        let tr = simulate_sgmark(2);
        assert_eq!(tr.mark_order, vec![0, 1, 2, 3]);
        assert_eq!(tr.attempts, vec![2, 2, 2, 1]);
        assert_eq!(tr.total_attempts(), 7);
    }

    #[test]
    fn t8_first_seven_contested() {
        let tr = simulate_sgmark(3);
        assert_eq!(tr.mark_order.len(), 8);
        assert_eq!(&tr.attempts[..7], &[2, 2, 2, 2, 2, 2, 2]);
        assert_eq!(tr.attempts[7], 1);
    }

    #[test]
    fn total_attempts_is_2t_minus_1() {
        for n in 1..=6 {
            let tr = simulate_sgmark(n);
            assert_eq!(tr.total_attempts() as usize, 2 * tr.t - 1, "n={n}");
        }
    }

    #[test]
    fn marks_exactly_all_positions() {
        for n in 1..=5 {
            let tr = simulate_sgmark(n);
            let mut sorted = tr.mark_order.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..tr.t).collect::<Vec<_>>());
        }
    }

    #[test]
    fn removals_stay_within_first_t_positions() {
        // the range of SGMARK is exactly T
        for n in 2..=5 {
            let tr = simulate_sgmark(n);
            assert!(tr.mark_order.iter().all(|&p| p < tr.t));
        }
    }
}

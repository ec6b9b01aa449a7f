//! Exact SPRAY(H,L,D) landing distributions over perfect structures, by
//! dynamic programming over all (L+1)^levels forward-step tuples in
//! rational arithmetic.

use std::collections::BTreeMap;

use num::rational::BigRational;
use num::{BigInt, One, Zero};

use crate::perfect::{Kind, PerfectStructure};

#[derive(Clone, Copy, Debug)]
pub struct SprayParams {
    /// Start height.
    pub h: usize,
    /// Inclusive bound of the uniform forward-step draw per level.
    pub l: usize,
    /// Levels descended per hop.
    pub d: usize,
}

impl SprayParams {
    /// Conventional parameters for T = 2^n: H = log T - 1, L = log T, D = 1.
    pub fn defaults(n: usize) -> SprayParams {
        SprayParams {
            h: n - 1,
            l: n,
            d: 1,
        }
    }
}

/// Exact landing distribution of a walk starting at the head of the
/// level-H list `start_list` (the head occupies a bottom position itself).
/// Forward steps stop early at the end of the current list.
pub fn enumerate_spray(
    s: &PerfectStructure,
    params: SprayParams,
    start_list: usize,
) -> BTreeMap<usize, BigRational> {
    assert!(params.h < s.n, "start height above the structure");
    assert!(params.d >= 1);
    let start = match s.kind {
        Kind::SkipList => 0,
        Kind::SkipGraph => start_list,
    };
    let step_prob = BigRational::new(BigInt::one(), BigInt::from(params.l as i64 + 1));
    let mut dist: BTreeMap<usize, BigRational> = BTreeMap::new();
    dist.insert(start, BigRational::one());
    let mut level = params.h;
    loop {
        let mut next: BTreeMap<usize, BigRational> = BTreeMap::new();
        for (&pos, prob) in &dist {
            let label = s.list_of(level, pos);
            let share = prob * &step_prob;
            let mut cur = pos;
            let mut a = 0;
            loop {
                *next.entry(cur).or_insert_with(BigRational::zero) += &share;
                if a == params.l {
                    break;
                }
                match s.next_in_list(level, label, cur) {
                    Some(q) => {
                        cur = q;
                        a += 1;
                    }
                    None => {
                        // the remaining draws all stop on the last node
                        let extra =
                            BigRational::from_integer(BigInt::from((params.l - a) as i64)) * &share;
                        *next.entry(cur).or_insert_with(BigRational::zero) += extra;
                        break;
                    }
                }
            }
        }
        dist = next;
        if level == 0 {
            break;
        }
        level = level.saturating_sub(params.d);
    }
    dist
}

/// Maximum landing position over all start lists and step tuples, with a
/// bottom list long enough that no walk is clamped.
pub fn max_spray_reach(kind: Kind, n: usize, params: SprayParams) -> usize {
    // worst case: furthest head plus L steps of every visited level size
    let mut worst = match kind {
        Kind::SkipList => 0,
        Kind::SkipGraph => (1 << params.h) - 1,
    };
    let mut level = params.h;
    loop {
        worst += params.l << level;
        if level == 0 {
            break;
        }
        level = level.saturating_sub(params.d);
    }
    let s = crate::perfect::build_perfect(kind, n, false, worst + 2);
    let lists = match kind {
        Kind::SkipList => 1,
        Kind::SkipGraph => 1 << params.h,
    };
    let mut max = 0;
    for j in 0..lists {
        let dist = enumerate_spray(&s, params, j);
        let reach = *dist.keys().max().unwrap();
        max = max.max(reach);
    }
    max
}

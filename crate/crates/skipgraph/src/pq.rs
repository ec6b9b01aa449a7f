//! Relaxed priority-queue removal protocols over the shared structure:
//! spray random walks (skip graph or control skip list) and the
//! deterministic SGMARK descent, plus probabilistic prefix cleaning.
//!
//! Removal marks elements in the bottom level only; the mark transition is
//! the commit point, so every key is returned by at most one remove-min.

use rand::Rng;

use crate::graph::{OpCtx, SkipGraph};
use crate::map::MapHandle;
use crate::node::{Node, KEY_MIN};

#[derive(Clone, Copy, Debug)]
pub struct SprayParams {
    /// Start height.
    pub h: usize,
    /// Inclusive bound of the uniform forward-step draw per level.
    pub l: u64,
    /// Levels descended per hop.
    pub d: usize,
}

impl SprayParams {
    /// Conventional parameters: H = log T - 1, L = log T, D = 1.
    pub fn defaults(threads: usize) -> SprayParams {
        let lt = if threads <= 1 {
            1
        } else {
            usize::BITS as usize - (threads - 1).leading_zeros() as usize
        };
        SprayParams {
            h: lt - 1,
            l: lt as u64,
            d: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PqProtocol {
    Spray,
    Sgmark,
    /// Spray over the single control skip list.
    SprayControl,
}

/// One SPRAY(H,L,D) walk; `None` means the structure looked empty.
fn spray_walk(
    g: &SkipGraph,
    params: SprayParams,
    rng: &mut rand_chacha::ChaCha8Rng,
    ctx: &mut OpCtx,
) -> Option<*const Node> {
    let ml = g.cfg.max_level;
    let h = params.h.min(ml);
    let mut level = h;
    let mut cur: &Node = g.head(h, ctx.vector);
    loop {
        let steps = rng.gen_range(0..=params.l);
        let mut taken = 0;
        while taken < steps {
            let next = g.next_unmarked(cur, level, ctx);
            if next.is_tail() {
                break;
            }
            cur = next;
            taken += 1;
        }
        if level == 0 {
            break;
        }
        level = level.saturating_sub(params.d);
        if cur.key == KEY_MIN {
            cur = g.head(level, ctx.vector);
        }
    }
    if cur.key == KEY_MIN {
        let first = g.next_unmarked(cur, 0, ctx);
        if first.is_tail() {
            return None;
        }
        return Some(first);
    }
    Some(cur)
}

pub struct PqHandle {
    pub map: MapHandle,
    pub protocol: PqProtocol,
    pub params: SprayParams,
    /// Record the would-be victim without marking (key-distribution
    /// experiment).
    pub faux: bool,
    threads: usize,
}

impl PqHandle {
    pub fn new(map: MapHandle, protocol: PqProtocol, threads: usize) -> PqHandle {
        PqHandle {
            map,
            protocol,
            params: SprayParams::defaults(threads),
            faux: false,
            threads,
        }
    }

    /// Priority = key; set semantics via the map machinery.
    pub fn insert(&mut self, key: u64) -> bool {
        self.map.insert(key, key)
    }

    pub fn remove_min(&mut self) -> Option<u64> {
        match self.protocol {
            PqProtocol::Spray | PqProtocol::SprayControl => self.remove_min_spray(),
            PqProtocol::Sgmark => self.remove_min_sgmark(),
        }
    }

    fn remove_min_spray(&mut self) -> Option<u64> {
        let g: &SkipGraph = unsafe { &*std::sync::Arc::as_ptr(&self.map.shared()) };
        let params = self.params;
        loop {
            let landing = {
                let mut ctx =
                    OpCtx::new(self.map.tid, self.map.vector, false, &mut self.map.metrics);
                spray_walk(g, params, &mut self.map.rng, &mut ctx)
            }?;
            let n = unsafe { &*landing };
            if self.faux {
                return Some(n.key);
            }
            // logical deletion; not a maintenance CAS
            if n.cas_mark(0, false, true) {
                self.map.metrics.ops_completed += 1;
                self.map.metrics.effective_updates += 1;
                return Some(n.key);
            }
        }
    }

    fn remove_min_sgmark(&mut self) -> Option<u64> {
        let g: &SkipGraph = unsafe { &*std::sync::Arc::as_ptr(&self.map.shared()) };
        let threads = self.threads.max(1) as u32;
        if !self.faux && self.map.rng.gen_ratio(1, threads) {
            self.clean();
        }
        let ml = g.cfg.max_level;
        let tid = self.map.tid;
        let vector = self.map.vector;
        'restart: loop {
            let mut ctx = OpCtx::new(tid, vector, false, &mut self.map.metrics);
            let mut level = ml;
            let mut cur: &Node = g.head(ml, vector);
            let mut bottom_fails = 0;
            loop {
                let next = g.next_unmarked(cur, level, &mut ctx);
                if next.is_tail() {
                    if level == 0 {
                        return None;
                    }
                    level -= 1;
                    if cur.key == KEY_MIN {
                        cur = g.head(level, vector);
                    }
                    continue;
                }
                if self.faux {
                    return Some(next.key);
                }
                // logical deletion; not a maintenance CAS
                if next.cas_mark(0, false, true) {
                    self.map.metrics.ops_completed += 1;
                    self.map.metrics.effective_updates += 1;
                    return Some(next.key);
                }
                if level > 0 {
                    // keep the position, move down
                    level -= 1;
                    cur = next;
                } else {
                    bottom_fails += 1;
                    if bottom_fails >= 2 {
                        continue 'restart;
                    }
                    cur = next;
                }
            }
        }
    }

    /// Physically unlinks a maximal marked prefix of the bottom list and
    /// erases the matching prefix of the local index.
    pub fn clean(&mut self) -> usize {
        let g: &SkipGraph = unsafe { &*std::sync::Arc::as_ptr(&self.map.shared()) };
        let mut ctx = OpCtx::new(self.map.tid, self.map.vector, false, &mut self.map.metrics);
        let (count, boundary) = g.clean_prefix(&mut ctx);
        if count > 0 {
            self.map.index.erase_marked_below(boundary);
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{SkipGraphConfig, Variant};
    use std::sync::Arc;

    fn pq(protocol: PqProtocol, threads: usize) -> PqHandle {
        let variant = match protocol {
            PqProtocol::SprayControl => Variant::SkipList,
            _ => Variant::Dense,
        };
        let mut cfg = SkipGraphConfig::for_threads(variant, threads);
        cfg.commission_period_ns = u64::MAX / 2;
        cfg.chunk_capacity = 1 << 10;
        let g = Arc::new(SkipGraph::new(cfg, threads));
        let map = MapHandle::new(g, threads, 0, 0, false, true, 9);
        PqHandle::new(map, protocol, threads)
    }

    #[test]
    fn empty_queue_is_absent() {
        for p in [
            PqProtocol::Spray,
            PqProtocol::Sgmark,
            PqProtocol::SprayControl,
        ] {
            let mut q = pq(p, 4);
            assert!(q.remove_min().is_none());
        }
    }

    #[test]
    fn singleton_queue_returns_the_key() {
        for p in [
            PqProtocol::Spray,
            PqProtocol::Sgmark,
            PqProtocol::SprayControl,
        ] {
            let mut q = pq(p, 4);
            assert!(q.insert(42));
            assert_eq!(q.remove_min(), Some(42));
            assert!(q.remove_min().is_none());
        }
    }

    #[test]
    fn duplicate_insert_fails() {
        let mut q = pq(PqProtocol::Spray, 4);
        assert!(q.insert(5));
        assert!(!q.insert(5));
    }

    #[test]
    fn single_thread_sgmark_always_takes_minimum() {
        let mut q = pq(PqProtocol::Sgmark, 1);
        for k in [9u64, 3, 7, 1, 5] {
            assert!(q.insert(k));
        }
        assert_eq!(q.remove_min(), Some(1));
        assert_eq!(q.remove_min(), Some(3));
        assert_eq!(q.remove_min(), Some(5));
        assert_eq!(q.remove_min(), Some(7));
        assert_eq!(q.remove_min(), Some(9));
        assert!(q.remove_min().is_none());
    }

    #[test]
    fn drains_all_keys_exactly_once() {
        let mut q = pq(PqProtocol::Spray, 4);
        for k in 1..=64u64 {
            assert!(q.insert(k));
        }
        let mut seen = Vec::new();
        while let Some(k) = q.remove_min() {
            seen.push(k);
        }
        seen.sort_unstable();
        assert_eq!(seen, (1..=64).collect::<Vec<_>>());
    }

    #[test]
    fn faux_mode_marks_nothing() {
        let mut q = pq(PqProtocol::Sgmark, 4);
        for k in 1..=16u64 {
            assert!(q.insert(k));
        }
        q.faux = true;
        for _ in 0..10 {
            assert_eq!(q.remove_min(), Some(1), "faux always sees the minimum");
        }
        q.faux = false;
        assert_eq!(q.remove_min(), Some(1));
    }

    #[test]
    fn clean_unlinks_marked_prefix_and_index() {
        let mut q = pq(PqProtocol::Sgmark, 1);
        for k in 1..=8u64 {
            assert!(q.insert(k));
        }
        // mark the three smallest without triggering the auto-cleaner
        for k in 1..=3u64 {
            assert!(q.map.remove(k));
        }
        let cleaned = q.clean();
        assert_eq!(cleaned, 3);
        assert_eq!(q.map.graph().bottom_rank(u64::MAX - 1), 5);
        assert_eq!(q.map.index.keys(), vec![4, 5, 6, 7, 8]);
    }

    #[test]
    fn spray_ranks_stay_in_bottom_range() {
        // single-threaded faux sprays over a big preload never exceed the
        // worst-case reach for T=4 parameters
        let mut q = pq(PqProtocol::Spray, 4);
        for k in 1..=256u64 {
            assert!(q.insert(k));
        }
        q.faux = true;
        let bound = 4 / 2 + 2 * (4 - 1) - 1; // T/2 + logT*(T-1) - 1
        for _ in 0..2000 {
            let k = q.remove_min().unwrap();
            let rank = q.map.graph().bottom_rank(k);
            assert!(rank <= bound, "rank {rank} > {bound}");
        }
    }
}

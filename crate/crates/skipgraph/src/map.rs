//! The linearizable map ADT: per-thread handles orchestrating local-index
//! fast paths with shared-structure searches, in lazy and non-lazy modes.
//!
//! Lazy mode: the valid bit carries logical membership; removal flips it,
//! re-insertion may flip it back without allocating; upper-level links are
//! deferred until a later `get_start` walks over the node. Non-lazy mode:
//! the valid bit stays set, removal marks levels directly, and insertion
//! links all levels eagerly.

use std::ptr;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{NodeAlloc, OpCtx, SearchStart, SkipGraph};
use crate::local_index::{Cursor, LocalIndex};
use crate::metrics::ThreadMetrics;
use crate::node::{is_user_key, pack, Node};

enum Helper {
    Done(bool),
    /// The examined node was observed level-0 marked; the caller must
    /// erase its stale index entry and re-search.
    Marked,
}

fn insert_helper(lazy: bool, n: &Node, ctx: &mut OpCtx) -> Helper {
    loop {
        if !ptr::eq(n, ctx.inserting) {
            ctx.metrics.record_read(n.owner as usize);
        }
        let (m, v) = n.mark_valid(0);
        if m {
            return Helper::Marked;
        }
        if v || !lazy {
            // duplicate (non-lazy: any unmarked node is present)
            return Helper::Done(false);
        }
        // logical re-insertion; not a maintenance CAS
        if n.cas_mark_valid(0, (false, false), (false, true)) {
            return Helper::Done(true);
        }
    }
}

fn remove_helper(g: &SkipGraph, lazy: bool, n: &Node, ctx: &mut OpCtx) -> Helper {
    loop {
        if !ptr::eq(n, ctx.inserting) {
            ctx.metrics.record_read(n.owner as usize);
        }
        let (m, v) = n.mark_valid(0);
        if m {
            return Helper::Marked;
        }
        if lazy {
            if !v {
                return Helper::Done(false); // already logically deleted
            }
            // logical deletion; not a maintenance CAS
            if n.cas_mark_valid(0, (false, true), (false, false)) {
                return Helper::Done(true);
            }
        } else {
            // non-lazy: the level-0 mark is the logical deletion
            if n.cas_mark(0, false, true) {
                g.mark_upper_levels(n, ctx);
                return Helper::Done(true);
            }
        }
    }
}

pub struct MapHandle {
    graph: Arc<SkipGraph>,
    pub tid: usize,
    pub vector: u32,
    pub lazy: bool,
    pub use_index: bool,
    pub index: LocalIndex,
    pub metrics: ThreadMetrics,
    pub(crate) alloc: NodeAlloc,
    pub(crate) rng: ChaCha8Rng,
}

impl MapHandle {
    pub fn new(
        graph: Arc<SkipGraph>,
        threads: usize,
        tid: usize,
        vector: u32,
        lazy: bool,
        use_index: bool,
        seed: u64,
    ) -> MapHandle {
        MapHandle {
            graph,
            tid,
            vector,
            lazy,
            use_index,
            index: LocalIndex::new(tid),
            metrics: ThreadMetrics::new(tid, threads),
            alloc: NodeAlloc::default(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ (tid as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        }
    }

    #[inline]
    pub fn graph(&self) -> &SkipGraph {
        &self.graph
    }

    pub fn shared(&self) -> Arc<SkipGraph> {
        self.graph.clone()
    }

    /// Converts an index cursor into a shared-structure search start. Nodes
    /// of a foreign skip list (donated entries) are usable at level 0 only.
    pub(crate) fn start_from(g: &SkipGraph, vector: u32, cursor: &Option<Cursor>) -> SearchStart {
        match cursor {
            None => SearchStart::Head,
            Some(c) => {
                let n = unsafe { &*c.node };
                let ml = g.cfg.max_level;
                let compat = ml == 0
                    || (n.vector.load(Ordering::SeqCst) ^ vector) & ((1u32 << ml.min(31)) - 1) == 0;
                if compat && n.top_level as usize == ml && n.inserted.load(Ordering::SeqCst) {
                    SearchStart::Node(c.node)
                } else {
                    SearchStart::Bottom(c.node)
                }
            }
        }
    }

    pub fn insert(&mut self, key: u64, value: u64) -> bool {
        let r = self.insert_inner(key, value);
        self.metrics.ops_completed += 1;
        if r {
            self.metrics.effective_updates += 1;
        }
        r
    }

    fn insert_inner(&mut self, key: u64, value: u64) -> bool {
        assert!(is_user_key(key), "sentinel keys are reserved");
        let g: &SkipGraph = unsafe { &*Arc::as_ptr(&self.graph) };
        let lazy = self.lazy;
        let mut ctx = OpCtx::new(self.tid, self.vector, lazy, &mut self.metrics);
        if self.use_index {
            if let Some(p) = self.index.find(key) {
                let n = unsafe { &*p };
                match insert_helper(lazy, n, &mut ctx) {
                    Helper::Done(rv) => return rv,
                    Helper::Marked => self.index.erase(key),
                }
            }
        }
        let mut cursor = if self.use_index {
            self.index.get_start(key, g, &mut ctx)
        } else {
            None
        };
        let top = g.draw_top_level(&mut self.rng);
        let mut node: *const Node = ptr::null();
        loop {
            let start = Self::start_from(g, ctx.vector, &cursor);
            let sr = g.lazy_relink_search(key, &start, &mut ctx);
            if sr.found {
                let n = unsafe { &*sr.succs[0] };
                match insert_helper(lazy, n, &mut ctx) {
                    Helper::Done(rv) => return rv,
                    Helper::Marked => continue,
                }
            }
            if node.is_null() {
                node = g.alloc_node(&mut self.alloc, key, value, self.tid, self.vector, top);
            }
            let n = unsafe { &*node };
            ctx.inserting = node;
            n.store_next_word(0, pack(sr.succs[0], false, true));
            if g.link_level0(unsafe { &*sr.preds[0] }, sr.middle[0], node, &mut ctx) {
                if !lazy {
                    g.finish_insert(n, &start, &mut ctx);
                }
                if self.use_index && top == g.cfg.max_level {
                    self.index.insert(key, node);
                }
                return true;
            }
            ctx.inserting = ptr::null();
            if self.use_index {
                self.index.update_start(&mut cursor);
            }
        }
    }

    pub fn remove(&mut self, key: u64) -> bool {
        let r = self.remove_inner(key);
        self.metrics.ops_completed += 1;
        if r {
            self.metrics.effective_updates += 1;
        }
        r
    }

    fn remove_inner(&mut self, key: u64) -> bool {
        assert!(is_user_key(key), "sentinel keys are reserved");
        let g: &SkipGraph = unsafe { &*Arc::as_ptr(&self.graph) };
        let lazy = self.lazy;
        let mut ctx = OpCtx::new(self.tid, self.vector, lazy, &mut self.metrics);
        if self.use_index {
            if let Some(p) = self.index.find(key) {
                let n = unsafe { &*p };
                match remove_helper(g, lazy, n, &mut ctx) {
                    Helper::Done(rv) => return rv,
                    Helper::Marked => self.index.erase(key),
                }
            }
        }
        let mut cursor = if self.use_index {
            self.index.get_start(key, g, &mut ctx)
        } else {
            None
        };
        loop {
            let start = Self::start_from(g, ctx.vector, &cursor);
            match g.retire_search(key, &start, &mut ctx) {
                None => return false,
                Some(p) => {
                    let n = unsafe { &*p };
                    match remove_helper(g, lazy, n, &mut ctx) {
                        Helper::Done(rv) => return rv,
                        Helper::Marked => {
                            self.index.erase_if(key, p);
                            if self.use_index {
                                self.index.update_start(&mut cursor);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn contains(&mut self, key: u64) -> bool {
        self.get(key).is_some()
    }

    /// Membership test returning the payload (same linearization points).
    pub fn get(&mut self, key: u64) -> Option<u64> {
        assert!(is_user_key(key), "sentinel keys are reserved");
        let g: &SkipGraph = unsafe { &*Arc::as_ptr(&self.graph) };
        let lazy = self.lazy;
        self.metrics.ops_completed += 1;
        let mut ctx = OpCtx::new(self.tid, self.vector, lazy, &mut self.metrics);
        if self.use_index {
            if let Some(p) = self.index.find(key) {
                let n = unsafe { &*p };
                ctx.metrics.record_read(n.owner as usize);
                let (m, v) = n.mark_valid(0);
                if !m {
                    return if v { Some(n.value) } else { None };
                }
                self.index.erase(key);
            }
        }
        let cursor = if self.use_index {
            self.index.get_start(key, g, &mut ctx)
        } else {
            None
        };
        let start = Self::start_from(g, ctx.vector, &cursor);
        match g.retire_search(key, &start, &mut ctx) {
            None => None,
            Some(p) => {
                let n = unsafe { &*p };
                ctx.metrics.record_read(n.owner as usize);
                let (m, v) = n.mark_valid(0);
                if (m, v) == (false, true) {
                    Some(n.value)
                } else {
                    None
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{SkipGraphConfig, Variant};
    use std::collections::BTreeSet;

    fn handle(variant: Variant, lazy: bool, use_index: bool) -> MapHandle {
        let mut cfg = SkipGraphConfig::for_threads(variant, 4);
        cfg.chunk_capacity = 1 << 10;
        cfg.commission_period_ns = u64::MAX / 2;
        let g = Arc::new(SkipGraph::new(cfg, 4));
        MapHandle::new(g, 4, 0, 0, lazy, use_index, 42)
    }

    #[test]
    fn basic_set_semantics_lazy() {
        let mut h = handle(Variant::Dense, true, true);
        assert!(!h.contains(7));
        assert!(h.insert(7, 70));
        assert!(h.contains(7));
        assert_eq!(h.get(7), Some(70));
        assert!(!h.insert(7, 71), "duplicate");
        assert!(h.remove(7));
        assert!(!h.contains(7));
        assert!(!h.remove(7));
    }

    #[test]
    fn lazy_reinsert_flips_valid_without_alloc() {
        let mut h = handle(Variant::Dense, true, true);
        assert!(h.insert(7, 70));
        assert!(h.remove(7));
        assert!(h.insert(7, 70));
        // exactly one physical node carries key 7
        let g = h.shared();
        let mut cur = unsafe { &*crate::node::word_ptr(g.head(0, 0).next_word(0)) };
        let mut count = 0;
        while !cur.is_tail() {
            if cur.key == 7 {
                count += 1;
            }
            cur = unsafe { &*crate::node::word_ptr(cur.next_word(0)) };
        }
        assert_eq!(count, 1);
        assert!(h.contains(7));
    }

    #[test]
    fn nonlazy_reinsert_links_fresh_node() {
        let mut h = handle(Variant::Dense, false, true);
        assert!(h.insert(7, 70));
        assert!(h.remove(7));
        assert!(!h.contains(7));
        assert!(h.insert(7, 70));
        assert!(h.contains(7));
        assert!(h.graph().audit_sorted().is_ok());
    }

    #[test]
    fn cross_handle_visibility() {
        let mut cfg = SkipGraphConfig::for_threads(Variant::Dense, 2);
        cfg.commission_period_ns = u64::MAX / 2;
        let g = Arc::new(SkipGraph::new(cfg, 2));
        let mut a = MapHandle::new(g.clone(), 2, 0, 0, true, true, 1);
        let mut b = MapHandle::new(g.clone(), 2, 1, 0, true, true, 2);
        assert!(a.insert(5, 50));
        assert!(b.contains(5));
        assert!(b.remove(5));
        assert!(!a.contains(5));
        // b revalidates a's node
        assert!(b.insert(5, 50));
        assert!(a.contains(5));
    }

    fn oracle_run(variant: Variant, lazy: bool, use_index: bool, ops: usize) {
        use rand::Rng;
        let mut h = handle(variant, lazy, use_index);
        let mut oracle: BTreeSet<u64> = BTreeSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        for _ in 0..ops {
            let key = rng.gen_range(1u64..=64);
            match rng.gen_range(0..3) {
                0 => assert_eq!(h.insert(key, key), oracle.insert(key)),
                1 => assert_eq!(h.remove(key), oracle.remove(&key)),
                _ => assert_eq!(h.contains(key), oracle.contains(&key)),
            }
        }
        assert_eq!(
            h.graph().live_keys(lazy),
            oracle.iter().copied().collect::<Vec<_>>()
        );
        assert!(h.graph().audit_sorted().is_ok());
        assert!(h.index.audit_synchrony());
    }

    #[test]
    fn sequential_oracle_smoke() {
        oracle_run(Variant::Dense, true, true, 5_000);
        oracle_run(Variant::Dense, false, true, 5_000);
        oracle_run(Variant::Sparse, true, true, 5_000);
        oracle_run(Variant::SkipList, false, false, 5_000);
        oracle_run(Variant::LinkedList, false, true, 5_000);
    }

    #[test]
    fn dense_refinement_at_quiescence() {
        let mut h = handle(Variant::Dense, false, true);
        for k in 1..=40u64 {
            assert!(h.insert(k * 3, 0));
        }
        let g = h.graph();
        // level-0 list keys = union of the two level-1 lists
        let mut union: Vec<u64> = g.level_keys(1, 0);
        union.extend(g.level_keys(1, 1));
        union.sort_unstable();
        assert_eq!(union, g.level_keys(0, 0));
    }

    #[test]
    fn single_thread_run_has_no_failed_cas() {
        let mut h = handle(Variant::Dense, true, true);
        for k in 1..=100u64 {
            h.insert(k, k);
        }
        for k in 1..=100u64 {
            h.remove(k);
        }
        assert_eq!(h.metrics.cas_fail, 0);
    }
}

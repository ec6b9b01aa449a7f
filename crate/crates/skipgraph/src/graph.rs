//! The shared structure: a lock-free skip graph (dense, sparse, and
//! degenerate skip-list / linked-list configurations) with lazy retirement
//! and relink-based physical removal.
//!
//! Nodes are allocated from per-thread chunk arenas and only released when
//! the whole structure is dropped, so references handed between threads stay
//! valid for the structure's lifetime.

use std::cell::UnsafeCell;
use std::ptr;
use std::sync::atomic::Ordering;
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;

use crate::metrics::ThreadMetrics;
use crate::node::{
    is_user_key, pack, word_marked, word_ptr, word_valid, Node, KEY_MAX, KEY_MIN, MAX_HEIGHT,
};

/// Shared-structure shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Skip graph; every node occupies all levels of its skip list.
    Dense,
    /// Skip graph; presence at level i of a node's skip list has
    /// probability `promotion^i`.
    Sparse,
    /// A single skip list (one list per level) with sparse levels.
    SkipList,
    /// Bottom list only.
    LinkedList,
}

#[derive(Clone, Debug)]
pub struct SkipGraphConfig {
    pub max_level: usize,
    pub variant: Variant,
    pub commission_period_ns: u64,
    /// Promotion probability for sparse levels, as a ratio.
    pub promotion_num: u32,
    pub promotion_den: u32,
    /// Nodes per arena chunk.
    pub chunk_capacity: usize,
}

/// MaxLevel derived from the thread count: `ceil(log2 T) - 1`.
pub fn max_level_for_threads(threads: usize) -> usize {
    // T <= 2 (including T = 1) gets a single-level structure.
    if threads <= 2 {
        0
    } else {
        let ceil_log = usize::BITS as usize - (threads - 1).leading_zeros() as usize;
        ceil_log - 1
    }
}

/// Default commission period: 117 us per thread (~350000 cycles at 3 GHz).
pub fn default_commission_ns(threads: usize) -> u64 {
    117_000 * threads as u64
}

impl SkipGraphConfig {
    pub fn for_threads(variant: Variant, threads: usize) -> SkipGraphConfig {
        let max_level = match variant {
            Variant::LinkedList => 0,
            _ => max_level_for_threads(threads),
        };
        SkipGraphConfig {
            max_level,
            variant,
            commission_period_ns: default_commission_ns(threads),
            promotion_num: 1,
            promotion_den: 2,
            chunk_capacity: 1 << 16,
        }
    }
}

/// Per-operation thread context threaded through every shared-structure call.
pub struct OpCtx<'a> {
    pub tid: usize,
    pub vector: u32,
    /// Lazy mode: the valid bit carries logical membership and traversals
    /// retire expired invalid nodes.
    pub lazy: bool,
    /// Node currently being initialized by this thread; accesses to it are
    /// excluded from the metrics.
    pub inserting: *const Node,
    pub metrics: &'a mut ThreadMetrics,
}

impl<'a> OpCtx<'a> {
    pub fn new(tid: usize, vector: u32, lazy: bool, metrics: &'a mut ThreadMetrics) -> Self {
        OpCtx {
            tid,
            vector,
            lazy,
            inserting: ptr::null(),
            metrics,
        }
    }
}

/// Where a shared-structure search begins.
#[derive(Clone, Copy)]
pub enum SearchStart {
    /// From the head sentinel of the caller's top-level list.
    Head,
    /// From a fully inserted node of the caller's skip list.
    Node(*const Node),
    /// From a node usable at level 0 only (e.g. a donated entry whose upper
    /// levels belong to another skip list).
    Bottom(*const Node),
}

/// Outcome of `lazy_relink_search`.
pub struct SearchResult {
    pub preds: Vec<*const Node>,
    /// The raw word observed in `preds[i].next[i]` when `preds[i]` was fixed.
    pub middle: Vec<u64>,
    pub succs: Vec<*const Node>,
    pub found: bool,
}

struct NodeSlot(UnsafeCell<Node>);
// Slots are handed out once and initialized by a single thread before the
// node is published; afterwards only &Node access happens.
unsafe impl Sync for NodeSlot {}
unsafe impl Send for NodeSlot {}

type Chunk = Box<[NodeSlot]>;

/// Per-thread bump allocator over graph-owned chunks.
pub struct NodeAlloc {
    cur: *mut Node,
    remaining: usize,
}

impl Default for NodeAlloc {
    fn default() -> Self {
        NodeAlloc {
            cur: ptr::null_mut(),
            remaining: 0,
        }
    }
}

unsafe impl Send for NodeAlloc {}

pub struct SkipGraph {
    pub cfg: SkipGraphConfig,
    pub threads: usize,
    /// heads[level][label]
    heads: Vec<Vec<*const Node>>,
    tail: *const Node,
    // Boxed so sentinel addresses stay stable while the vector grows.
    #[allow(dead_code, clippy::vec_box)]
    sentinel_store: Vec<Box<Node>>,
    chunks: Mutex<Vec<Chunk>>,
    epoch: Instant,
}

unsafe impl Send for SkipGraph {}
unsafe impl Sync for SkipGraph {}

impl SkipGraph {
    pub fn new(cfg: SkipGraphConfig, threads: usize) -> SkipGraph {
        assert!(cfg.max_level < MAX_HEIGHT, "max_level too large");
        let mut store: Vec<Box<Node>> = Vec::new();
        let mut tail = Box::new(Node::empty());
        tail.key = KEY_MAX;
        let tail_ptr: *const Node = &*tail;
        store.push(tail);

        let mut heads = Vec::with_capacity(cfg.max_level + 1);
        for level in 0..=cfg.max_level {
            let count = match cfg.variant {
                Variant::Dense | Variant::Sparse => 1usize << level,
                Variant::SkipList | Variant::LinkedList => 1,
            };
            let mut row = Vec::with_capacity(count);
            for label in 0..count {
                let mut h = Box::new(Node::empty());
                h.key = KEY_MIN;
                h.value = label as u64;
                h.top_level = level as u8;
                h.store_next_word(level, pack(tail_ptr, false, true));
                row.push(&*h as *const Node);
                store.push(h);
            }
            heads.push(row);
        }
        SkipGraph {
            cfg,
            threads,
            heads,
            tail: tail_ptr,
            sentinel_store: store,
            chunks: Mutex::new(Vec::new()),
            epoch: Instant::now(),
        }
    }

    #[inline]
    pub fn now_ns(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    #[inline]
    pub fn tail(&self) -> &Node {
        unsafe { &*self.tail }
    }

    /// Head sentinel of the level-`level` list selected by `vector`.
    #[inline]
    pub fn head(&self, level: usize, vector: u32) -> &Node {
        let row = &self.heads[level];
        let label = (vector as usize & ((1usize << level.min(31)) - 1)) % row.len();
        unsafe { &*row[label] }
    }

    /// Draws the construction-time top level for a fresh node.
    pub fn draw_top_level<R: Rng>(&self, rng: &mut R) -> usize {
        match self.cfg.variant {
            Variant::Dense => self.cfg.max_level,
            Variant::LinkedList => 0,
            Variant::Sparse | Variant::SkipList => {
                let mut level = 0;
                while level < self.cfg.max_level
                    && rng.gen_ratio(self.cfg.promotion_num, self.cfg.promotion_den)
                {
                    level += 1;
                }
                level
            }
        }
    }

    /// Allocates and initializes a node; the caller links it afterwards.
    pub fn alloc_node(
        &self,
        alloc: &mut NodeAlloc,
        key: u64,
        value: u64,
        owner: usize,
        vector: u32,
        top_level: usize,
    ) -> *const Node {
        debug_assert!(is_user_key(key));
        if alloc.remaining == 0 {
            let cap = self.cfg.chunk_capacity;
            let chunk: Chunk = (0..cap)
                .map(|_| NodeSlot(UnsafeCell::new(Node::empty())))
                .collect::<Vec<_>>()
                .into_boxed_slice();
            alloc.cur = chunk[0].0.get();
            alloc.remaining = cap;
            self.chunks.lock().unwrap().push(chunk);
        }
        let p = alloc.cur;
        alloc.cur = unsafe { p.add(1) };
        alloc.remaining -= 1;
        unsafe {
            (*p).key = key;
            (*p).value = value;
            (*p).alloc_ts = self.now_ns();
            (*p).owner = owner as u32;
            (*p).top_level = top_level as u8;
            (*p).inserted.store(false, Ordering::SeqCst);
            (*p).vector.store(vector, Ordering::SeqCst);
        }
        p
    }

    #[inline]
    fn read_next(&self, n: &Node, level: usize, ctx: &mut OpCtx) -> u64 {
        if !ptr::eq(n, ctx.inserting) {
            ctx.metrics.record_read(n.owner as usize);
        }
        n.next_word(level)
    }

    #[inline]
    fn read_mark_valid(&self, n: &Node, ctx: &mut OpCtx) -> (bool, bool) {
        if !ptr::eq(n, ctx.inserting) {
            ctx.metrics.record_read(n.owner as usize);
        }
        n.mark_valid(0)
    }

    /// Label of the list that `n`'s level-`level` reference belongs to.
    #[inline]
    fn list_label(&self, n: &Node, level: usize) -> u32 {
        if level == 0 {
            return 0;
        }
        let mask = (1u32 << level.min(31)) - 1;
        if n.key == KEY_MIN {
            n.value as u32 & mask
        } else {
            n.vector.load(Ordering::Relaxed) & mask
        }
    }

    /// Counted maintenance CAS on a node's (successor, flags) word.
    fn maint_cas(&self, n: &Node, level: usize, expected: u64, new: u64, ctx: &mut OpCtx) -> bool {
        let ok = n.cas_next_word(level, expected, new);
        if !ptr::eq(n, ctx.inserting) {
            ctx.metrics.record_maint_cas(
                n.owner as usize,
                level as u8,
                self.list_label(n, level),
                ok,
            );
        }
        ok
    }

    /// Tries the level-0 (unmarked, invalid) -> (marked, invalid) transition
    /// and, on success, marks the upper levels top-down.
    pub fn retire(&self, n: &Node, ctx: &mut OpCtx) -> bool {
        if n.is_sentinel() {
            return false;
        }
        // level-0 transition; fails if the node was revalidated or marked
        let committed = loop {
            let w = n.next_word(0);
            if word_marked(w) || word_valid(w) {
                break false;
            }
            let nw = pack(word_ptr(w), true, false);
            if self.maint_cas(n, 0, w, nw, ctx) {
                break true;
            }
        };
        if !committed {
            return false;
        }
        for level in (1..=n.top_level as usize).rev() {
            while !n.mark(level) {
                let w = n.next_word(level);
                if word_marked(w) {
                    break;
                }
                let nw = pack(word_ptr(w), true, word_valid(w));
                self.maint_cas(n, level, w, nw, ctx);
            }
        }
        true
    }

    /// Marks a node's levels top-down unconditionally (non-lazy removal and
    /// priority-queue cleanup reuse this after the level-0 commit point).
    pub fn mark_upper_levels(&self, n: &Node, ctx: &mut OpCtx) {
        for level in (1..=n.top_level as usize).rev() {
            while !n.mark(level) {
                let w = n.next_word(level);
                if word_marked(w) {
                    break;
                }
                let nw = pack(word_ptr(w), true, word_valid(w));
                self.maint_cas(n, level, w, nw, ctx);
            }
        }
    }

    /// Commission-period check: retires the node only when it is observed
    /// (unmarked, invalid), old enough, and owned by the caller.
    pub fn check_retire(&self, n: &Node, now: u64, ctx: &mut OpCtx) -> bool {
        if n.is_sentinel() {
            return false;
        }
        let (m, v) = self.read_mark_valid(n, ctx);
        if m || v {
            return false;
        }
        if now.saturating_sub(n.alloc_ts) <= self.cfg.commission_period_ns {
            return false;
        }
        if ctx.tid != n.owner as usize {
            return false;
        }
        self.retire(n, ctx)
    }

    /// Skip predicate for traversals: level-0 marked nodes, plus nodes the
    /// caller just retired.
    #[inline]
    fn skip_node(&self, n: &Node, now: u64, ctx: &mut OpCtx) -> bool {
        if n.is_tail() {
            return false;
        }
        if !ptr::eq(n, ctx.inserting) {
            ctx.metrics.record_read(n.owner as usize);
        }
        if n.mark(0) {
            return true;
        }
        ctx.lazy && self.check_retire(n, now, ctx)
    }

    fn resolve_start<'g>(&'g self, start: &SearchStart, key: u64, ctx: &OpCtx) -> &'g Node {
        let ml = self.cfg.max_level;
        if let SearchStart::Node(p) = start {
            let n = unsafe { &**p };
            if !n.is_sentinel()
                && n.key < key
                && n.top_level as usize >= ml
                && !word_ptr(n.next_word(ml)).is_null()
            {
                return n;
            }
        }
        self.head(ml, ctx.vector)
    }

    /// Top-down search recording predecessors, observed middle words, and
    /// successors at every level. Traversed nodes satisfying the retirement
    /// predicate are marked as a side effect.
    pub fn lazy_relink_search(
        &self,
        key: u64,
        start: &SearchStart,
        ctx: &mut OpCtx,
    ) -> SearchResult {
        let ml = self.cfg.max_level;
        let now = self.now_ns();
        let mut res = SearchResult {
            preds: vec![ptr::null(); ml + 1],
            middle: vec![0; ml + 1],
            succs: vec![ptr::null(); ml + 1],
            found: false,
        };
        let mut previous: &Node = self.resolve_start(start, key, ctx);
        for level in (0..=ml).rev() {
            if previous.key == KEY_MIN {
                previous = self.head(level, ctx.vector);
            }
            if level == 0 {
                if let SearchStart::Bottom(p) = start {
                    let b = unsafe { &**p };
                    if b.key > previous.key && b.key < key && !b.mark(0) {
                        previous = b;
                    }
                }
            }
            let mut original = self.read_next(previous, level, ctx);
            let mut current = self.skip_chain(original, level, now, ctx);
            while current.key < key {
                previous = current;
                original = self.read_next(previous, level, ctx);
                current = self.skip_chain(original, level, now, ctx);
            }
            res.preds[level] = previous;
            res.middle[level] = original;
            res.succs[level] = current;
        }
        let bottom = unsafe { &*res.succs[0] };
        res.found = bottom.key == key && !bottom.mark(0);
        res
    }

    #[inline]
    fn skip_chain<'g>(&'g self, word: u64, level: usize, now: u64, ctx: &mut OpCtx) -> &'g Node {
        let mut cur = unsafe { &*word_ptr(word) };
        while self.skip_node(cur, now, ctx) {
            let w = self.read_next(cur, level, ctx);
            cur = unsafe { &*word_ptr(w) };
        }
        cur
    }

    /// Quicker search used by contains/remove: returns the first
    /// level-0-unmarked node with the goal key met during the descent.
    pub fn retire_search(
        &self,
        key: u64,
        start: &SearchStart,
        ctx: &mut OpCtx,
    ) -> Option<*const Node> {
        let ml = self.cfg.max_level;
        let now = self.now_ns();
        let mut previous: &Node = self.resolve_start(start, key, ctx);
        for level in (0..=ml).rev() {
            if previous.key == KEY_MIN {
                previous = self.head(level, ctx.vector);
            }
            if level == 0 {
                if let SearchStart::Bottom(p) = start {
                    let b = unsafe { &**p };
                    if b.key > previous.key && b.key < key && !b.mark(0) {
                        previous = b;
                    }
                }
            }
            let word = self.read_next(previous, level, ctx);
            let mut current = self.skip_chain(word, level, now, ctx);
            while current.key < key {
                previous = current;
                let w = self.read_next(previous, level, ctx);
                current = self.skip_chain(w, level, now, ctx);
            }
            if current.key == key && !current.mark(0) {
                return Some(current);
            }
        }
        None
    }

    /// Links a fresh node into the bottom list, replacing any chain of
    /// marked nodes between the observed middle and the new node's successor
    /// with a single CAS.
    pub fn link_level0(
        &self,
        pred: &Node,
        middle_word: u64,
        n: *const Node,
        ctx: &mut OpCtx,
    ) -> bool {
        if word_marked(middle_word) {
            return false;
        }
        let new = pack(n, false, word_valid(middle_word));
        self.maint_cas(pred, 0, middle_word, new, ctx)
    }

    /// Links `n` at levels `1..=n.top_level` of the caller's skip list.
    /// Returns false (setting `inserted`) if the node is observed marked.
    pub fn finish_insert(&self, n: &Node, start: &SearchStart, ctx: &mut OpCtx) -> bool {
        let key = n.key;
        n.vector.store(ctx.vector, Ordering::SeqCst);
        let top = n.top_level as usize;
        'outer: loop {
            let sr = self.lazy_relink_search(key, start, ctx);
            if !sr.found || !ptr::eq(sr.succs[0], n) {
                n.inserted.store(true, Ordering::SeqCst);
                return false;
            }
            let mut level = 1;
            while level <= top {
                if ptr::eq(sr.succs[level], n) {
                    // already linked here on a previous pass
                    level += 1;
                    continue;
                }
                loop {
                    let old = n.next_word(level);
                    if word_marked(old) {
                        n.inserted.store(true, Ordering::SeqCst);
                        return false;
                    }
                    if n.cas_next_word(level, old, pack(sr.succs[level], false, false)) {
                        break;
                    }
                }
                if word_marked(sr.middle[level]) {
                    continue 'outer;
                }
                let pred = unsafe { &*sr.preds[level] };
                let new = pack(n, false, word_valid(sr.middle[level]));
                if self.maint_cas(pred, level, sr.middle[level], new, ctx) {
                    level += 1;
                } else {
                    continue 'outer;
                }
            }
            n.inserted.store(true, Ordering::SeqCst);
            return true;
        }
    }

    /// Physically unlinks a maximal prefix of level-0-marked nodes with one
    /// CAS on the bottom head. Returns the number of nodes unlinked and the
    /// key of the first surviving node.
    pub fn clean_prefix(&self, ctx: &mut OpCtx) -> (usize, u64) {
        let head = self.head(0, ctx.vector);
        let hw = self.read_next(head, 0, ctx);
        let mut cur = unsafe { &*word_ptr(hw) };
        if cur.is_tail() {
            return (0, KEY_MAX);
        }
        if !ptr::eq(cur, ctx.inserting) {
            ctx.metrics.record_read(cur.owner as usize);
        }
        if !cur.mark(0) {
            return (0, cur.key);
        }
        let mut count = 0usize;
        while !cur.is_tail() && cur.mark(0) {
            count += 1;
            let w = self.read_next(cur, 0, ctx);
            cur = unsafe { &*word_ptr(w) };
        }
        let new = pack(cur, false, word_valid(hw));
        if self.maint_cas(head, 0, hw, new, ctx) {
            (count, cur.key)
        } else {
            (0, cur.key)
        }
    }

    /// First successor of `n` at `level` that is not level-0 marked
    /// (marked nodes are skipped free of charge).
    pub fn next_unmarked<'g>(&'g self, n: &Node, level: usize, ctx: &mut OpCtx) -> &'g Node {
        let mut cur = unsafe { &*word_ptr(self.read_next(n, level, ctx)) };
        while !cur.is_tail() {
            if !ptr::eq(cur, ctx.inserting) {
                ctx.metrics.record_read(cur.owner as usize);
            }
            if !cur.mark(0) {
                break;
            }
            cur = unsafe { &*word_ptr(self.read_next(cur, level, ctx)) };
        }
        cur
    }

    // ---- quiescent audits (single-threaded use) ----

    /// Number of unmarked bottom-list nodes with key strictly below `key`
    /// (rank of `key` among the live sequence); audit/experiment helper.
    pub fn bottom_rank(&self, key: u64) -> usize {
        let mut rank = 0;
        let mut cur = unsafe { &*word_ptr(self.head(0, 0).next_word(0)) };
        while !cur.is_tail() && cur.key < key {
            if !cur.mark(0) {
                rank += 1;
            }
            cur = unsafe { &*word_ptr(cur.next_word(0)) };
        }
        rank
    }

    /// Keys of live nodes in the bottom list. In lazy mode a node is live
    /// when (unmarked, valid); otherwise when unmarked.
    pub fn live_keys(&self, lazy: bool) -> Vec<u64> {
        let mut out = Vec::new();
        let mut cur = unsafe { &*word_ptr(self.head(0, 0).next_word(0)) };
        while !cur.is_tail() {
            let (m, v) = cur.mark_valid(0);
            if !m && (!lazy || v) {
                out.push(cur.key);
            }
            cur = unsafe { &*word_ptr(cur.next_word(0)) };
        }
        out
    }

    /// Checks that every level list, traversed through unmarked references,
    /// yields strictly increasing keys bounded by the sentinels.
    pub fn audit_sorted(&self) -> Result<(), String> {
        for level in 0..=self.cfg.max_level {
            for label in 0..self.heads[level].len() {
                let mut prev_key = KEY_MIN;
                let mut cur = unsafe { &*self.heads[level][label] };
                loop {
                    let w = cur.next_word(level);
                    let nxt = unsafe { &*word_ptr(w) };
                    if nxt.is_tail() {
                        break;
                    }
                    if !nxt.mark(level) {
                        if nxt.key <= prev_key {
                            return Err(format!(
                                "level {level} list {label}: key {} after {}",
                                nxt.key, prev_key
                            ));
                        }
                        prev_key = nxt.key;
                    }
                    cur = nxt;
                }
            }
        }
        Ok(())
    }

    /// Unmarked keys of one level list (audit helper).
    pub fn level_keys(&self, level: usize, label: usize) -> Vec<u64> {
        let mut out = Vec::new();
        let mut cur = unsafe { &*self.heads[level][label] };
        loop {
            let w = cur.next_word(level);
            let nxt = unsafe { &*word_ptr(w) };
            if nxt.is_tail() {
                break;
            }
            if !nxt.mark(level) && !nxt.mark(0) {
                out.push(nxt.key);
            }
            cur = nxt;
        }
        out
    }

    pub fn lists_at(&self, level: usize) -> usize {
        self.heads[level].len()
    }
}

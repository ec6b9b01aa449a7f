//! Per-thread sequential index: an ordered map plus a hash table from keys
//! to shared nodes. Strictly single-owner; shared nodes referenced here are
//! concurrently mutated by other threads, so every dereference goes through
//! the shared module's atomic reads.

use std::collections::{BTreeMap, HashMap};

use crate::graph::{OpCtx, SearchStart, SkipGraph};
use crate::node::Node;

/// Position in the owner's ordered index. Remains usable after erasure of
/// its current key (the walk re-derives predecessors from the key).
#[derive(Clone, Copy, Debug)]
pub struct Cursor {
    pub key: u64,
    pub node: *const Node,
}

pub struct LocalIndex {
    ordered: BTreeMap<u64, *const Node>,
    hash: HashMap<u64, *const Node>,
    pub owner: usize,
}

// Moved to its owning thread at startup and on donation handoff; never
// accessed concurrently.
unsafe impl Send for LocalIndex {}

impl LocalIndex {
    pub fn new(owner: usize) -> LocalIndex {
        LocalIndex {
            ordered: BTreeMap::new(),
            hash: HashMap::new(),
            owner,
        }
    }

    pub fn len(&self) -> usize {
        debug_assert_eq!(self.ordered.len(), self.hash.len());
        self.ordered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    pub fn insert(&mut self, key: u64, node: *const Node) {
        debug_assert!(!self.hash.contains_key(&key), "stale entry not erased");
        self.ordered.insert(key, node);
        self.hash.insert(key, node);
    }

    pub fn erase(&mut self, key: u64) {
        self.ordered.remove(&key);
        self.hash.remove(&key);
    }

    /// Erases only if the entry still references `node` (guards against a
    /// replaced entry when the caller holds a stale reference).
    pub fn erase_if(&mut self, key: u64, node: *const Node) {
        if self.hash.get(&key) == Some(&node) {
            self.ordered.remove(&key);
            self.hash.remove(&key);
        }
    }

    /// Fast-path lookup.
    pub fn find(&self, key: u64) -> Option<*const Node> {
        self.hash.get(&key).copied()
    }

    /// Greatest entry with key <= `key`.
    fn le_entry(&self, key: u64) -> Option<Cursor> {
        self.ordered
            .range(..=key)
            .next_back()
            .map(|(&key, &node)| Cursor { key, node })
    }

    /// Greatest entry strictly below `key`.
    fn pred_entry(&self, key: u64) -> Option<Cursor> {
        self.ordered
            .range(..key)
            .next_back()
            .map(|(&key, &node)| Cursor { key, node })
    }

    /// Start-mark test: a node is start-usable while its bottom or its own
    /// top level is unmarked.
    fn usable_mark(n: &Node) -> bool {
        !n.mark(0) || !n.mark(n.top_level as usize)
    }

    /// Whether the upper levels were never touched, so a holder with a
    /// different membership vector may finish the insertion itself.
    fn never_upper_linked(n: &Node) -> bool {
        n.top_level == 0 || crate::node::word_ptr(n.next_word(1)).is_null()
    }

    /// Backward walk to the greatest entry <= `key` usable as a search
    /// start. Completes half-inserted nodes lazily; erases entries found
    /// marked or whose completion failed. `None` means: start at the head.
    pub fn get_start(&mut self, key: u64, g: &SkipGraph, ctx: &mut OpCtx) -> Option<Cursor> {
        let mut cand = self.le_entry(key);
        loop {
            let c = cand?;
            let n = unsafe { &*c.node };
            if !Self::usable_mark(n) {
                self.erase_if(c.key, c.node);
                cand = self.pred_entry(c.key);
                continue;
            }
            if !n.inserted.load(std::sync::atomic::Ordering::SeqCst) {
                let compatible = Self::never_upper_linked(n)
                    || g.cfg.max_level == 0
                    || (n.vector.load(std::sync::atomic::Ordering::SeqCst) ^ ctx.vector)
                        & ((1u32 << g.cfg.max_level.min(31)) - 1)
                        == 0;
                if compatible {
                    if g.finish_insert(n, &SearchStart::Head, ctx) {
                        return Some(c);
                    }
                    self.erase_if(c.key, c.node);
                    cand = self.pred_entry(c.key);
                    continue;
                }
                // donated, partially linked in a foreign list: usable at
                // level 0 only; keep the entry
                return Some(c);
            }
            return Some(c);
        }
    }

    /// Rewinds the cursor to the nearest preceding start-usable, fully
    /// inserted entry. Skips (without completing) half-inserted nodes and
    /// erases marked entries encountered.
    pub fn update_start(&mut self, cursor: &mut Option<Cursor>) {
        while let Some(c) = *cursor {
            let n = unsafe { &*c.node };
            let usable = Self::usable_mark(n);
            if usable && n.inserted.load(std::sync::atomic::Ordering::SeqCst) {
                return;
            }
            if !usable {
                self.erase_if(c.key, c.node);
            }
            *cursor = self.pred_entry(c.key);
        }
    }

    /// Removes and returns up to `count` smallest-key entries (donation).
    pub fn take_smallest(&mut self, count: usize) -> Vec<(u64, *const Node)> {
        let keys: Vec<u64> = self.ordered.keys().take(count).copied().collect();
        let mut out = Vec::with_capacity(keys.len());
        for k in keys {
            let node = self.ordered.remove(&k).unwrap();
            self.hash.remove(&k);
            out.push((k, node));
        }
        out
    }

    /// Erases entries with key < `boundary` whose node is level-0 marked
    /// (after a prefix cleanup of the bottom list).
    pub fn erase_marked_below(&mut self, boundary: u64) -> usize {
        let stale: Vec<u64> = self
            .ordered
            .range(..boundary)
            .filter(|(_, &p)| unsafe { &*p }.mark(0))
            .map(|(&k, _)| k)
            .collect();
        let n = stale.len();
        for k in stale {
            self.erase(k);
        }
        n
    }

    /// Keys currently indexed, ascending (audits and experiments).
    pub fn keys(&self) -> Vec<u64> {
        self.ordered.keys().copied().collect()
    }

    /// Checks ordered/hash key-set synchrony.
    pub fn audit_synchrony(&self) -> bool {
        self.ordered.len() == self.hash.len()
            && self.ordered.keys().all(|k| self.hash.contains_key(k))
    }
}

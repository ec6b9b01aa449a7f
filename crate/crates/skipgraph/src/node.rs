//! Shared skip-graph nodes with packed (successor, marked, valid) words.
//!
//! Each per-level successor reference is a single `AtomicU64` holding the
//! node pointer in the upper bits and the `marked`/`valid` flags in the two
//! low-order bits, so the triple is always read and written atomically.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};

/// Head sentinel key. User operations reject it.
pub const KEY_MIN: u64 = 0;
/// Tail sentinel key. User operations reject it.
pub const KEY_MAX: u64 = u64::MAX;

/// Maximum number of levels a node can occupy (level indexes `0..MAX_HEIGHT`).
pub const MAX_HEIGHT: usize = 18;

pub const MARK_BIT: u64 = 0b01;
pub const VALID_BIT: u64 = 0b10;
const PTR_MASK: u64 = !0b11;

/// Returns true for keys usable by map/queue operations.
pub fn is_user_key(key: u64) -> bool {
    key != KEY_MIN && key != KEY_MAX
}

#[inline]
pub fn word_ptr(word: u64) -> *const Node {
    (word & PTR_MASK) as *const Node
}

#[inline]
pub fn word_marked(word: u64) -> bool {
    word & MARK_BIT != 0
}

#[inline]
pub fn word_valid(word: u64) -> bool {
    word & VALID_BIT != 0
}

#[inline]
pub fn pack(ptr: *const Node, marked: bool, valid: bool) -> u64 {
    debug_assert_eq!(ptr as u64 & !PTR_MASK, 0, "node alignment must be >= 4");
    ptr as u64 | if marked { MARK_BIT } else { 0 } | if valid { VALID_BIT } else { 0 }
}

/// A node of the shared structure.
///
/// Plain fields are written once by the allocating thread before the node is
/// published through a successful level-0 CAS; afterwards they are read-only.
#[repr(align(8))]
pub struct Node {
    pub key: u64,
    pub value: u64,
    /// Monotonic nanoseconds at allocation, for the commission period.
    pub alloc_ts: u64,
    /// Thread index of the allocator; sentinels are attributed to thread 0.
    pub owner: u32,
    /// Highest level this node occupies in its skip list.
    pub top_level: u8,
    /// Set when upper-level linking finished (or was abandoned on marking).
    pub inserted: AtomicBool,
    /// Membership vector of the thread that links the upper levels.
    pub vector: AtomicU32,
    next: [AtomicU64; MAX_HEIGHT],
}

impl Node {
    pub fn empty() -> Node {
        // Const item used purely as an array-repeat initializer.
        #[allow(clippy::declare_interior_mutable_const)]
        const ZERO: AtomicU64 = AtomicU64::new(0);
        Node {
            key: 0,
            value: 0,
            alloc_ts: 0,
            owner: 0,
            top_level: 0,
            inserted: AtomicBool::new(false),
            vector: AtomicU32::new(0),
            next: [ZERO; MAX_HEIGHT],
        }
    }

    #[inline]
    pub fn is_sentinel(&self) -> bool {
        self.key == KEY_MIN || self.key == KEY_MAX
    }

    #[inline]
    pub fn is_tail(&self) -> bool {
        self.key == KEY_MAX
    }

    /// Raw (successor, marked, valid) word at `level`.
    #[inline]
    pub fn next_word(&self, level: usize) -> u64 {
        self.next[level].load(Ordering::SeqCst)
    }

    #[inline]
    pub fn store_next_word(&self, level: usize, word: u64) {
        self.next[level].store(word, Ordering::SeqCst);
    }

    /// Full-word CAS on the level's (successor, marked, valid) triple.
    #[inline]
    pub fn cas_next_word(&self, level: usize, expected: u64, new: u64) -> bool {
        self.next[level]
            .compare_exchange(expected, new, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    }

    #[inline]
    pub fn mark(&self, level: usize) -> bool {
        word_marked(self.next_word(level))
    }

    #[inline]
    pub fn mark_valid(&self, level: usize) -> (bool, bool) {
        let w = self.next_word(level);
        (word_marked(w), word_valid(w))
    }

    /// CAS on the two flag bits only; the successor pointer is preserved
    /// whatever its current value. Retries while the flags still match the
    /// expected pair and the pointer moves underneath.
    pub fn cas_mark_valid(&self, level: usize, expected: (bool, bool), new: (bool, bool)) -> bool {
        loop {
            let w = self.next_word(level);
            if (word_marked(w), word_valid(w)) != expected {
                return false;
            }
            let nw = pack(word_ptr(w), new.0, new.1);
            if self.cas_next_word(level, w, nw) {
                return true;
            }
        }
    }

    /// CAS on the marked bit only, preserving pointer and valid bit.
    pub fn cas_mark(&self, level: usize, expected: bool, new: bool) -> bool {
        loop {
            let w = self.next_word(level);
            if word_marked(w) != expected {
                return false;
            }
            let nw = pack(word_ptr(w), new, word_valid(w));
            if self.cas_next_word(level, w, nw) {
                return true;
            }
        }
    }
}

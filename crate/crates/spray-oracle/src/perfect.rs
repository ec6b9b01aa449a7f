//! Idealized perfect skip graphs and skip lists: level-i neighbors are
//! exactly 2^i positions apart, and the 2^i level-i lists of a skip graph
//! have their heads at positions 0..2^i-1.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    SkipGraph,
    SkipList,
}

#[derive(Clone, Debug)]
pub struct PerfectStructure {
    pub kind: Kind,
    /// Level-count parameter: T = 2^n threads, levels 0..n-1.
    pub n: usize,
    /// Bottom list has exactly T nodes.
    pub minimal: bool,
    /// Number of positions in the bottom list.
    pub bottom_len: usize,
    /// lists[level][label] = ordered member positions.
    pub lists: Vec<Vec<Vec<usize>>>,
}

impl PerfectStructure {
    pub fn threads(&self) -> usize {
        1 << self.n
    }

    pub fn max_level(&self) -> usize {
        self.n - 1
    }

    /// Number of lists at `level`.
    pub fn lists_at(&self, level: usize) -> usize {
        self.lists[level].len()
    }

    /// Label of the level-`level` list containing `position`.
    pub fn list_of(&self, level: usize, position: usize) -> usize {
        match self.kind {
            Kind::SkipList => 0,
            Kind::SkipGraph => position % (1 << level),
        }
    }

    /// Smallest member of the given list strictly greater than `position`,
    /// if any.
    pub fn next_in_list(&self, level: usize, label: usize, position: usize) -> Option<usize> {
        let step = 1usize << level;
        let first = match self.kind {
            Kind::SkipList => 0,
            Kind::SkipGraph => label,
        };
        let next = if position < first {
            first
        } else {
            first + ((position - first) / step + 1) * step
        };
        (next < self.bottom_len).then_some(next)
    }
}

/// Builds the unique (up to list permutation) perfect structure. A minimal
/// structure has exactly T bottom positions; otherwise `bottom_len` gives
/// the bottom-list length.
pub fn build_perfect(kind: Kind, n: usize, minimal: bool, bottom_len: usize) -> PerfectStructure {
    assert!(n >= 1, "level parameter must be >= 1");
    let t = 1usize << n;
    let bottom_len = if minimal { t } else { bottom_len };
    assert!(bottom_len >= t, "bottom list shorter than T");
    let mut lists = Vec::with_capacity(n);
    for level in 0..n {
        let step = 1usize << level;
        let labels = match kind {
            Kind::SkipList => 1,
            Kind::SkipGraph => step,
        };
        let mut row = Vec::with_capacity(labels);
        for label in 0..labels {
            let first = if kind == Kind::SkipList { 0 } else { label };
            row.push((first..bottom_len).step_by(step).collect());
        }
        lists.push(row);
    }
    PerfectStructure {
        kind,
        n,
        minimal,
        bottom_len,
        lists,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_skipgraph_n2() {
        let s = build_perfect(Kind::SkipGraph, 2, true, 0);
        assert_eq!(s.bottom_len, 4);
        assert_eq!(s.lists[0], vec![vec![0, 1, 2, 3]]);
        assert_eq!(s.lists[1], vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn minimal_skiplist_n2() {
        let s = build_perfect(Kind::SkipList, 2, true, 0);
        assert_eq!(s.lists[0], vec![vec![0, 1, 2, 3]]);
        assert_eq!(s.lists[1], vec![vec![0, 2]]);
    }

    #[test]
    fn spacing_invariant() {
        for kind in [Kind::SkipGraph, Kind::SkipList] {
            let s = build_perfect(kind, 3, false, 20);
            for (level, row) in s.lists.iter().enumerate() {
                for list in row {
                    for pair in list.windows(2) {
                        assert_eq!(pair[1] - pair[0], 1 << level);
                    }
                }
            }
        }
    }

    #[test]
    fn skipgraph_heads_occupy_prefix_positions() {
        let s = build_perfect(Kind::SkipGraph, 3, true, 0);
        for (level, row) in s.lists.iter().enumerate() {
            assert_eq!(row.len(), 1 << level);
            for (label, list) in row.iter().enumerate() {
                assert_eq!(list[0], label);
            }
        }
    }

    #[test]
    fn level_lists_partition_previous_level() {
        let s = build_perfect(Kind::SkipGraph, 4, true, 0);
        for level in 1..s.n {
            let mut merged: Vec<usize> = s.lists[level].iter().flatten().copied().collect();
            merged.sort_unstable();
            let below: Vec<usize> = (0..s.bottom_len).collect();
            assert_eq!(merged, below, "level {level} lists partition all positions");
        }
    }

    #[test]
    fn skiplist_level_size_bound() {
        let s = build_perfect(Kind::SkipList, 3, true, 0);
        for level in 0..s.n {
            assert!(s.lists[level][0].len() >= s.threads() / (1 << level));
        }
    }

    /// Ignoring the bottom level and odd positions of PSG_min(n) (halving
    /// surviving positions) yields PSG_min(n-1).
    #[test]
    fn monotone_containment() {
        for n in 2..=5usize {
            let big = build_perfect(Kind::SkipGraph, n, true, 0);
            let small = build_perfect(Kind::SkipGraph, n - 1, true, 0);
            for level in 1..n {
                let mut shrunk: Vec<Vec<usize>> = big.lists[level]
                    .iter()
                    .filter(|list| list[0] % 2 == 0)
                    .map(|list| list.iter().map(|p| p / 2).collect())
                    .collect();
                shrunk.sort();
                let mut expect = small.lists[level - 1].clone();
                expect.sort();
                assert_eq!(shrunk, expect, "n={n} level {level}");
            }
        }
    }

    #[test]
    fn next_in_list_matches_enumeration() {
        let s = build_perfect(Kind::SkipGraph, 3, false, 30);
        for level in 0..s.n {
            for label in 0..s.lists_at(level) {
                let list = &s.lists[level][label];
                for pos in 0..s.bottom_len {
                    let expect = list.iter().copied().find(|&q| q > pos);
                    assert_eq!(s.next_in_list(level, label, pos), expect);
                }
            }
        }
    }

    #[test]
    #[should_panic(expected = "level parameter")]
    fn rejects_n_zero() {
        build_perfect(Kind::SkipGraph, 0, true, 0);
    }
}

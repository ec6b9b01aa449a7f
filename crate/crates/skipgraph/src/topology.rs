//! Membership-vector generation and thread renumbering from a hierarchical
//! hardware topology description.
//!
//! The length-l suffix (low l bits) of a thread's vector names the unique
//! level-l list it operates in, so physically closer threads must share
//! longer suffixes: the outermost physical split (NUMA node) decides bit 0,
//! the next split bit 1, and so on; hyperthreads of one core share the
//! whole vector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Topology {
    pub numa_nodes: usize,
    pub cpus_per_node: usize,
    pub cores_per_cpu: usize,
    pub threads_per_core: usize,
    /// Optional explicit hardware-thread distance matrix; overrides the
    /// hierarchical distance for renumbering.
    #[serde(default)]
    pub distance_matrix: Option<Vec<Vec<u32>>>,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("requested {requested} threads but topology capacity is {capacity}")]
    Capacity { requested: usize, capacity: usize },
    #[error("max_level {given} inconsistent with {threads} threads (expected {expected})")]
    MaxLevel {
        given: usize,
        threads: usize,
        expected: usize,
    },
    #[error("topology counts must all be >= 1")]
    ZeroCount,
    #[error("distance matrix must be square of side {0}")]
    BadMatrix(usize),
}

impl Topology {
    /// Single-level topology: T independent hardware threads.
    pub fn flat(threads: usize) -> Topology {
        Topology {
            numa_nodes: 1,
            cpus_per_node: 1,
            cores_per_cpu: 1,
            threads_per_core: threads,
            distance_matrix: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.numa_nodes * self.cpus_per_node * self.cores_per_cpu * self.threads_per_core
    }

    fn validate(&self) -> Result<(), TopologyError> {
        if self.numa_nodes == 0
            || self.cpus_per_node == 0
            || self.cores_per_cpu == 0
            || self.threads_per_core == 0
        {
            return Err(TopologyError::ZeroCount);
        }
        if let Some(m) = &self.distance_matrix {
            let n = self.capacity();
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(TopologyError::BadMatrix(n));
            }
        }
        Ok(())
    }

    /// (node, cpu, core, ht) coordinates of a hardware thread in
    /// lexicographic enumeration order.
    pub fn coords(&self, hw: usize) -> (usize, usize, usize, usize) {
        let ht = hw % self.threads_per_core;
        let rest = hw / self.threads_per_core;
        let core = rest % self.cores_per_cpu;
        let rest = rest / self.cores_per_cpu;
        let cpu = rest % self.cpus_per_node;
        let node = rest / self.cpus_per_node;
        (node, cpu, core, ht)
    }

    /// Hierarchical distance: 0 same core, 1 same cpu, 2 same node, 3 else.
    /// An explicit matrix overrides this.
    pub fn distance(&self, a: usize, b: usize) -> u32 {
        if let Some(m) = &self.distance_matrix {
            return m[a][b];
        }
        let (na, ca, ra, _) = self.coords(a);
        let (nb, cb, rb, _) = self.coords(b);
        if na != nb {
            3
        } else if ca != cb {
            2
        } else if ra != rb {
            1
        } else {
            0
        }
    }
}

/// Pinning order: logical thread i runs on hardware thread result[i].
/// Fills a core, then a cpu, then a node before moving outward, so close
/// logical ids land on close hardware threads. With an explicit distance
/// matrix, a greedy nearest-neighbor chain from hardware thread 0 is used.
pub fn renumber_threads(topo: &Topology, threads: usize) -> Result<Vec<usize>, TopologyError> {
    topo.validate()?;
    let cap = topo.capacity();
    if threads > cap {
        return Err(TopologyError::Capacity {
            requested: threads,
            capacity: cap,
        });
    }
    if topo.distance_matrix.is_none() {
        // lexicographic enumeration already fills inner levels first
        return Ok((0..threads).collect());
    }
    let mut order = Vec::with_capacity(threads);
    let mut used = vec![false; cap];
    let mut cur = 0usize;
    used[0] = true;
    order.push(0);
    while order.len() < threads {
        let next = (0..cap)
            .filter(|&h| !used[h])
            .min_by_key(|&h| (topo.distance(cur, h), h))
            .unwrap();
        used[next] = true;
        order.push(next);
        cur = next;
    }
    Ok(order)
}

fn expected_max_level(threads: usize) -> usize {
    crate::graph::max_level_for_threads(threads)
}

/// Membership vectors for logical threads 0..T-1 (in pinning order) by
/// recursive balanced halving: each split separates the range into
/// ceil/floor halves and writes the next-lower bit, so every length-l
/// suffix is used by floor(T/2^l) or ceil(T/2^l) threads and contiguous
/// (physically close) threads share the longest suffixes.
pub fn generate_membership_vectors(
    topo: &Topology,
    threads: usize,
    max_level: usize,
) -> Result<Vec<u32>, TopologyError> {
    topo.validate()?;
    if threads > topo.capacity() {
        return Err(TopologyError::Capacity {
            requested: threads,
            capacity: topo.capacity(),
        });
    }
    let expected = expected_max_level(threads);
    if max_level != expected {
        return Err(TopologyError::MaxLevel {
            given: max_level,
            threads,
            expected,
        });
    }
    let mut vectors = vec![0u32; threads];
    fn split(vectors: &mut [u32], lo: usize, hi: usize, bit: usize, max_level: usize) {
        if bit >= max_level || hi - lo <= 1 {
            return;
        }
        let mid = lo + (hi - lo).div_ceil(2);
        for v in &mut vectors[mid..hi] {
            *v |= 1 << bit;
        }
        split(vectors, lo, mid, bit + 1, max_level);
        split(vectors, mid, hi, bit + 1, max_level);
    }
    let hi = threads;
    split(&mut vectors, 0, hi, 0, max_level);
    Ok(vectors)
}

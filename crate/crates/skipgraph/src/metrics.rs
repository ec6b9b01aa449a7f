//! Per-thread access counters and the accessor x owner matrices.
//!
//! Counters are strictly thread-private and merged after quiescence.
//! Accesses to a node while its allocator is still initializing it are not
//! counted, and only maintenance CAS operations (link, unlink, cleanup)
//! enter the CAS statistics; logical-state flips do not.

use std::collections::HashSet;

/// Counters owned by one worker thread.
#[derive(Clone, Debug)]
pub struct ThreadMetrics {
    pub tid: usize,
    threads: usize,
    pub local_reads: u64,
    pub remote_reads: u64,
    pub local_maint_cas: u64,
    pub remote_maint_cas: u64,
    pub cas_success: u64,
    pub cas_fail: u64,
    pub ops_completed: u64,
    pub effective_updates: u64,
    /// Row-major accessor x owner read counts (this thread's row only).
    pub reads_row: Vec<u64>,
    /// Row-major accessor x owner maintenance-CAS counts (this thread's row).
    pub cas_row: Vec<u64>,
    /// (level, list label) pairs this thread performed maintenance CAS on.
    pub writer_lists: HashSet<(u8, u32)>,
}

impl ThreadMetrics {
    pub fn new(tid: usize, threads: usize) -> Self {
        ThreadMetrics {
            tid,
            threads,
            local_reads: 0,
            remote_reads: 0,
            local_maint_cas: 0,
            remote_maint_cas: 0,
            cas_success: 0,
            cas_fail: 0,
            ops_completed: 0,
            effective_updates: 0,
            reads_row: vec![0; threads],
            cas_row: vec![0; threads],
            writer_lists: HashSet::new(),
        }
    }

    #[inline]
    pub fn record_read(&mut self, owner: usize) {
        if owner == self.tid {
            self.local_reads += 1;
        } else {
            self.remote_reads += 1;
        }
        if owner < self.threads {
            self.reads_row[owner] += 1;
        }
    }

    #[inline]
    pub fn record_maint_cas(&mut self, owner: usize, level: u8, label: u32, success: bool) {
        if owner == self.tid {
            self.local_maint_cas += 1;
        } else {
            self.remote_maint_cas += 1;
        }
        if success {
            self.cas_success += 1;
        } else {
            self.cas_fail += 1;
        }
        if owner < self.threads {
            self.cas_row[owner] += 1;
        }
        self.writer_lists.insert((level, label));
    }
}

/// Merged counters for a whole run.
#[derive(Clone, Debug, Default)]
pub struct MetricsLedger {
    pub threads: usize,
    pub local_reads: u64,
    pub remote_reads: u64,
    pub local_maint_cas: u64,
    pub remote_maint_cas: u64,
    pub cas_success: u64,
    pub cas_fail: u64,
    pub ops_completed: u64,
    pub effective_updates: u64,
    /// Row-major accessor x owner read counts.
    pub reads_matrix: Vec<u64>,
    /// Row-major accessor x owner maintenance-CAS counts.
    pub cas_matrix: Vec<u64>,
    /// Per-(level, label) sets of threads that performed maintenance CAS.
    pub writer_sets: Vec<((u8, u32), Vec<usize>)>,
}

impl MetricsLedger {
    pub fn merge(threads: usize, parts: Vec<ThreadMetrics>) -> MetricsLedger {
        let mut out = MetricsLedger {
            threads,
            reads_matrix: vec![0; threads * threads],
            cas_matrix: vec![0; threads * threads],
            ..Default::default()
        };
        let mut writer_map: std::collections::BTreeMap<(u8, u32), Vec<usize>> =
            std::collections::BTreeMap::new();
        for part in parts {
            out.local_reads += part.local_reads;
            out.remote_reads += part.remote_reads;
            out.local_maint_cas += part.local_maint_cas;
            out.remote_maint_cas += part.remote_maint_cas;
            out.cas_success += part.cas_success;
            out.cas_fail += part.cas_fail;
            out.ops_completed += part.ops_completed;
            out.effective_updates += part.effective_updates;
            for owner in 0..threads {
                out.reads_matrix[part.tid * threads + owner] += part.reads_row[owner];
                out.cas_matrix[part.tid * threads + owner] += part.cas_row[owner];
            }
            for list in &part.writer_lists {
                writer_map.entry(*list).or_default().push(part.tid);
            }
        }
        for v in writer_map.values_mut() {
            v.sort_unstable();
        }
        out.writer_sets = writer_map.into_iter().collect();
        out
    }

    pub fn cas_success_rate(&self) -> f64 {
        let total = self.cas_success + self.cas_fail;
        if total == 0 {
            1.0
        } else {
            self.cas_success as f64 / total as f64
        }
    }
}

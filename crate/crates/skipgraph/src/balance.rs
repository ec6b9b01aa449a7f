//! Donation-based load balancing: a background coordinator redistributes
//! local-index entries across threads through bounded single-producer /
//! single-consumer queues. Only index entries move; the shared structure is
//! never mutated by donation.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::time::Duration;

use crate::local_index::LocalIndex;
use crate::node::Node;

pub const QUEUE_CAPACITY: usize = 1024;
pub const ROUND_PERIOD: Duration = Duration::from_millis(10);

/// An index entry in flight between workers.
#[derive(Clone, Copy, Debug)]
pub struct DonatedEntry {
    pub key: u64,
    pub node: *const Node,
    pub from: usize,
}

// Nodes live for the whole structure lifetime; the reference is handed to
// exactly one receiving worker.
unsafe impl Send for DonatedEntry {}

/// Donation fraction for a worker that announced `i_i` of the global `i_t`
/// insertions. The literal rule returns I_i/I_T when 1/T > I_i/I_T - 1/T
/// and I_i/I_T - 1/T otherwise; the alternative rule is
/// max(0, I_i/I_T - 1/T).
pub fn compute_donation_fraction(i_i: u64, i_t: u64, t: usize, literal: bool) -> f64 {
    assert!(i_t > 0, "census total must be positive");
    assert!(i_i <= i_t);
    assert!(t >= 2);
    let r = i_i as f64 / i_t as f64;
    let inv_t = 1.0 / t as f64;
    if literal {
        if inv_t > r - inv_t {
            r
        } else {
            r - inv_t
        }
    } else {
        (r - inv_t).max(0.0)
    }
}

/// Census and fraction mailboxes shared between workers and coordinator.
pub struct BalancerShared {
    /// Announced insertion counts, one per worker.
    pub counts: Vec<AtomicU64>,
    /// Requested donation fractions as f64 bit patterns.
    fractions: Vec<AtomicU64>,
    pub literal: bool,
}

impl BalancerShared {
    pub fn fraction(&self, tid: usize) -> f64 {
        f64::from_bits(self.fractions[tid].load(Ordering::SeqCst))
    }

    pub fn set_fraction(&self, tid: usize, f: f64) {
        self.fractions[tid].store(f.to_bits(), Ordering::SeqCst);
    }
}

/// Per-worker endpoints: one outbound and one inbound queue.
pub struct WorkerBalance {
    pub tid: usize,
    outbound: SyncSender<DonatedEntry>,
    inbound: Receiver<DonatedEntry>,
    shared: Arc<BalancerShared>,
}

impl WorkerBalance {
    pub fn announce(&self, inserted: u64) {
        self.shared.counts[self.tid].fetch_add(inserted, Ordering::SeqCst);
    }

    /// Moves up to fraction x |index| smallest-key entries to the outbound
    /// queue, erasing them locally. Entries the full queue rejects go back
    /// into the index.
    pub fn donate(&self, index: &mut LocalIndex) -> usize {
        let frac = self.shared.fraction(self.tid);
        if frac <= 0.0 || index.is_empty() {
            return 0;
        }
        let want = (frac * index.len() as f64).floor() as usize;
        let mut moved = 0;
        for (key, node) in index.take_smallest(want) {
            let entry = DonatedEntry {
                key,
                node,
                from: self.tid,
            };
            match self.outbound.try_send(entry) {
                Ok(()) => moved += 1,
                Err(TrySendError::Full(e)) | Err(TrySendError::Disconnected(e)) => {
                    index.insert(e.key, e.node);
                }
            }
        }
        moved
    }

    /// Drains the inbound queue into the local index; entries whose node is
    /// observed level-0 marked are dropped.
    pub fn absorb(&self, index: &mut LocalIndex) -> usize {
        let mut absorbed = 0;
        while let Ok(e) = self.inbound.try_recv() {
            let n = unsafe { &*e.node };
            if n.mark(0) {
                continue;
            }
            if index.find(e.key).is_some() {
                continue;
            }
            index.insert(e.key, e.node);
            absorbed += 1;
        }
        absorbed
    }
}

pub struct Coordinator {
    pub shared: Arc<BalancerShared>,
    outbound_rx: Vec<Receiver<DonatedEntry>>,
    inbound_tx: Vec<SyncSender<DonatedEntry>>,
    /// Entries rejected by full inbound queues, retained for later rounds.
    pending: VecDeque<DonatedEntry>,
    rr: usize,
    threads: usize,
}

impl Coordinator {
    /// One balancing round: refresh fractions from the census, drain
    /// outbound queues, distribute entries round-robin across the other
    /// workers' inbound queues.
    pub fn round(&mut self) {
        let counts: Vec<u64> = self
            .shared
            .counts
            .iter()
            .map(|c| c.load(Ordering::SeqCst))
            .collect();
        let total: u64 = counts.iter().sum();
        if total > 0 {
            for (i, &c) in counts.iter().enumerate() {
                let f = compute_donation_fraction(c, total, self.threads, self.shared.literal);
                self.shared.fractions[i].store(f.to_bits(), Ordering::SeqCst);
            }
        }
        let mut batch: VecDeque<DonatedEntry> = std::mem::take(&mut self.pending);
        for rx in &self.outbound_rx {
            while let Ok(e) = rx.try_recv() {
                batch.push_back(e);
            }
        }
        while let Some(e) = batch.pop_front() {
            if !self.dispatch(e) {
                self.pending.push_back(e);
            }
        }
    }

    /// Sends to the next worker in round-robin order, skipping the donor.
    /// Returns false when every eligible inbound queue is full.
    fn dispatch(&mut self, e: DonatedEntry) -> bool {
        for probe in 0..self.threads {
            let target = (self.rr + probe) % self.threads;
            if target == e.from {
                continue;
            }
            if self.inbound_tx[target].try_send(e).is_ok() {
                self.rr = (target + 1) % self.threads;
                return true;
            }
        }
        false
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }
}

/// Builds the queue mesh for `threads` workers plus one coordinator.
pub fn build_balancer(threads: usize, literal: bool) -> (Vec<WorkerBalance>, Coordinator) {
    let shared = Arc::new(BalancerShared {
        counts: (0..threads).map(|_| AtomicU64::new(0)).collect(),
        fractions: (0..threads).map(|_| AtomicU64::new(0)).collect(),
        literal,
    });
    let mut workers = Vec::with_capacity(threads);
    let mut outbound_rx = Vec::with_capacity(threads);
    let mut inbound_tx = Vec::with_capacity(threads);
    for tid in 0..threads {
        let (otx, orx) = sync_channel(QUEUE_CAPACITY);
        let (itx, irx) = sync_channel(QUEUE_CAPACITY);
        workers.push(WorkerBalance {
            tid,
            outbound: otx,
            inbound: irx,
            shared: shared.clone(),
        });
        outbound_rx.push(orx);
        inbound_tx.push(itx);
    }
    let coordinator = Coordinator {
        shared,
        outbound_rx,
        inbound_tx,
        pending: VecDeque::new(),
        rr: 0,
        threads,
    };
    (workers, coordinator)
}

/// Convenience loop for a dedicated coordinator thread.
pub fn run_coordinator(mut coord: Coordinator, stop: Arc<AtomicBool>, period: Duration) {
    while !stop.load(Ordering::SeqCst) {
        coord.round();
        std::thread::sleep(period);
    }
    // final drain so in-flight entries reach a worker
    coord.round();
}

//! Synchrobench-style workload driver: builds one of the nine benchmark
//! structures, preloads it, runs worker threads with an effective-update
//! discipline, and merges metrics, histories, and conservation evidence.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use skipgraph::balance::{build_balancer, run_coordinator, WorkerBalance, ROUND_PERIOD};
use skipgraph::graph::{SkipGraph, SkipGraphConfig, Variant};
use skipgraph::map::MapHandle;
use skipgraph::pq::{PqHandle, PqProtocol};
use skipgraph::topology::{generate_membership_vectors, renumber_threads, Topology};
use skipgraph::MetricsLedger;

use crate::history::{EventClock, HistOp, History, OpKind};

pub const SCHEMA_VERSION: u32 = 1;

/// Retry budget of the effective-update discipline: a failed update retries
/// the same operation class on fresh keys up to this many times.
pub const UPDATE_RETRY_CAP: u32 = 10_000;

/// Ops between balancing interactions (announce / donate / absorb).
const BALANCE_STRIDE: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructureKind {
    /// Dense skip graph, non-lazy, local indexes.
    LayeredSg,
    /// Sparse skip graph, non-lazy, local indexes.
    LayeredSsg,
    /// Dense skip graph, lazy retirement and relinking, local indexes.
    LazyLayeredSg,
    /// Single skip list of thread height, local indexes.
    LayeredSl,
    /// Bottom list only, local indexes.
    LayeredLl,
    /// Single skip list of keyspace height, no local indexes.
    ControlSl,
    /// Priority queue: spray removal over the dense skip graph.
    PqSpray,
    /// Priority queue: SGMARK removal over the dense skip graph.
    PqSgmark,
    /// Priority queue: spray removal over the control skip list.
    PqSprayControl,
}

pub const ALL_STRUCTURES: [StructureKind; 9] = [
    StructureKind::LayeredSg,
    StructureKind::LayeredSsg,
    StructureKind::LazyLayeredSg,
    StructureKind::LayeredSl,
    StructureKind::LayeredLl,
    StructureKind::ControlSl,
    StructureKind::PqSpray,
    StructureKind::PqSgmark,
    StructureKind::PqSprayControl,
];

impl StructureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StructureKind::LayeredSg => "layered-sg",
            StructureKind::LayeredSsg => "layered-ssg",
            StructureKind::LazyLayeredSg => "lazy-layered-sg",
            StructureKind::LayeredSl => "layered-sl",
            StructureKind::LayeredLl => "layered-ll",
            StructureKind::ControlSl => "control-sl",
            StructureKind::PqSpray => "pq-spray",
            StructureKind::PqSgmark => "pq-sgmark",
            StructureKind::PqSprayControl => "pq-spray-control",
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            StructureKind::LayeredSg
            | StructureKind::LazyLayeredSg
            | StructureKind::PqSpray
            | StructureKind::PqSgmark => Variant::Dense,
            StructureKind::LayeredSsg => Variant::Sparse,
            StructureKind::LayeredSl | StructureKind::ControlSl | StructureKind::PqSprayControl => {
                Variant::SkipList
            }
            StructureKind::LayeredLl => Variant::LinkedList,
        }
    }

    pub fn is_pq(self) -> bool {
        matches!(
            self,
            StructureKind::PqSpray | StructureKind::PqSgmark | StructureKind::PqSprayControl
        )
    }

    pub fn lazy(self) -> bool {
        self == StructureKind::LazyLayeredSg
    }

    pub fn use_index(self) -> bool {
        !matches!(
            self,
            StructureKind::ControlSl | StructureKind::PqSprayControl
        )
    }

    /// Skip graphs partition by membership vector; skip-list structures
    /// keep every node in the single list family (vector 0).
    pub fn partitioned(self) -> bool {
        matches!(self.variant(), Variant::Dense | Variant::Sparse)
    }

    pub fn protocol(self) -> Option<PqProtocol> {
        match self {
            StructureKind::PqSpray => Some(PqProtocol::Spray),
            StructureKind::PqSgmark => Some(PqProtocol::Sgmark),
            StructureKind::PqSprayControl => Some(PqProtocol::SprayControl),
            _ => None,
        }
    }
}

impl std::str::FromStr for StructureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<StructureKind, String> {
        ALL_STRUCTURES
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ALL_STRUCTURES.iter().map(|k| k.as_str()).collect();
                format!(
                    "unknown structure '{s}'; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

#[derive(Clone, Debug)]
pub struct WorkloadConfig {
    pub structure: StructureKind,
    pub threads: usize,
    pub duration_ms: u64,
    /// Fixed total op budget split across threads; overrides the duration.
    pub ops: Option<u64>,
    /// Percentage of (attempted-effective) updates; the rest are reads.
    pub update_pct: u32,
    pub keyspace: u64,
    /// Preloaded fraction of the keyspace.
    pub preload: f64,
    pub seed: u64,
    pub topology: Option<Topology>,
    pub load_balance: bool,
    /// Donation-fraction rule: literal (true) or clamped alternative.
    pub balance_literal: bool,
    pub commission_ns: Option<u64>,
    /// Priority queues only: record would-be victims without marking.
    pub faux_removal: bool,
    /// Priority queues only: compute the bottom rank of every removal.
    pub record_ranks: bool,
    pub record_history: bool,
    pub pin: bool,
}

impl WorkloadConfig {
    pub fn new(structure: StructureKind, threads: usize) -> WorkloadConfig {
        WorkloadConfig {
            structure,
            threads,
            duration_ms: 1000,
            ops: None,
            update_pct: 20,
            keyspace: 1 << 8,
            preload: 0.2,
            seed: 1,
            topology: None,
            load_balance: false,
            balance_literal: true,
            commission_ns: None,
            faux_removal: false,
            record_ranks: false,
            record_history: false,
            pin: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.threads == 0 {
            return Err("thread count must be positive".into());
        }
        if self.update_pct > 100 {
            return Err("update percentage must be at most 100".into());
        }
        if self.keyspace < 2 {
            return Err("keyspace must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.preload) {
            return Err("preload fraction must be within [0, 1]".into());
        }
        if (self.faux_removal || self.record_ranks) && !self.structure.is_pq() {
            return Err("faux removal and rank recording apply to priority queues only".into());
        }
        if self.record_history && self.structure.is_pq() {
            return Err("history recording applies to map structures only".into());
        }
        if self.ops.is_none() && self.duration_ms == 0 {
            return Err("either a duration or an op budget is required".into());
        }
        if let Some(t) = &self.topology {
            if self.threads > t.capacity() {
                return Err(format!(
                    "topology capacity {} below thread count {}",
                    t.capacity(),
                    self.threads
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WriterSetEntry {
    pub level: u8,
    pub label: u32,
    pub writers: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub structure: String,
    pub threads: usize,
    pub keyspace: u64,
    pub seed: u64,
    pub update_pct: u32,
    pub duration_ms: f64,
    pub total_ops: u64,
    pub effective_updates: u64,
    pub throughput_ops_per_sec: f64,
    pub cas_success: u64,
    pub cas_fail: u64,
    pub cas_success_rate: f64,
    pub local_reads: u64,
    pub remote_reads: u64,
    pub local_maint_cas: u64,
    pub remote_maint_cas: u64,
    pub conservation_ok: bool,
    pub live_size: usize,
    pub index_sizes: Vec<usize>,
    pub writer_sets: Vec<WriterSetEntry>,
    pub pin_requested: bool,
    pub pinned: bool,
    pub max_rank: Option<usize>,
}

pub struct RunOutput {
    pub report: Report,
    pub ledger: MetricsLedger,
    pub history: Option<History>,
    /// Per-thread bottom ranks of priority-queue removals.
    pub ranks: Vec<Vec<usize>>,
    /// Per-thread final local-index key sets.
    pub index_keys: Vec<Vec<u64>>,
    pub graph: Arc<SkipGraph>,
}

/// One worker handle; priority queues wrap the map machinery.
enum WorkerHandle {
    Map(MapHandle),
    Pq(PqHandle),
}

impl WorkerHandle {
    fn map_mut(&mut self) -> &mut MapHandle {
        match self {
            WorkerHandle::Map(h) => h,
            WorkerHandle::Pq(q) => &mut q.map,
        }
    }
}

/// Builds the shared structure for a benchmark configuration.
pub fn build_graph(cfg: &WorkloadConfig) -> Arc<SkipGraph> {
    let kind = cfg.structure;
    let mut gc = SkipGraphConfig::for_threads(kind.variant(), cfg.threads);
    if matches!(kind, StructureKind::ControlSl) {
        // control height follows the keyspace, not the thread count
        let log_keys = 63 - cfg.keyspace.leading_zeros() as usize
            + usize::from(!cfg.keyspace.is_power_of_two());
        gc.max_level = log_keys.min(17);
    }
    if let Some(ns) = cfg.commission_ns {
        gc.commission_period_ns = ns;
    }
    Arc::new(SkipGraph::new(gc, cfg.threads))
}

/// Membership vectors in logical-thread order; skip-list structures place
/// every thread in the single list family.
pub fn vectors_for(cfg: &WorkloadConfig) -> Result<Vec<u32>, String> {
    if !cfg.structure.partitioned() {
        return Ok(vec![0; cfg.threads]);
    }
    let topo = cfg
        .topology
        .clone()
        .unwrap_or_else(|| Topology::flat(cfg.threads));
    let ml = skipgraph::max_level_for_threads(cfg.threads);
    generate_membership_vectors(&topo, cfg.threads, ml).map_err(|e| e.to_string())
}

fn build_handle(g: &Arc<SkipGraph>, cfg: &WorkloadConfig, tid: usize, vector: u32) -> WorkerHandle {
    let kind = cfg.structure;
    let map = MapHandle::new(
        g.clone(),
        cfg.threads,
        tid,
        vector,
        kind.lazy(),
        kind.use_index(),
        cfg.seed,
    );
    match kind.protocol() {
        Some(p) => {
            let mut q = PqHandle::new(map, p, cfg.threads);
            q.faux = cfg.faux_removal;
            WorkerHandle::Pq(q)
        }
        None => WorkerHandle::Map(map),
    }
}

fn pin_thread(hw: usize) -> bool {
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(hw, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
}

struct WorkerOut {
    handle: WorkerHandle,
    /// Per-key successful update balance (inserts minus removes).
    net: HashMap<u64, i64>,
    ranks: Vec<usize>,
    hist: Vec<HistOp>,
    pinned: bool,
}

struct WorkerArgs {
    handle: WorkerHandle,
    cfg: WorkloadConfig,
    op_cap: Option<u64>,
    stop: Arc<AtomicBool>,
    clock: Arc<EventClock>,
    balance: Option<WorkerBalance>,
    pin_hw: Option<usize>,
}

fn worker_run(mut a: WorkerArgs) -> WorkerOut {
    let tid = a.handle.map_mut().tid;
    let pinned = match a.pin_hw {
        Some(hw) => pin_thread(hw),
        None => true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(
        a.cfg.seed.rotate_left(17) ^ (tid as u64).wrapping_mul(0x517c_c1b7_2722_0a95),
    );
    let mut net: HashMap<u64, i64> = HashMap::new();
    let mut ranks = Vec::new();
    let mut hist = Vec::new();
    let mut done: u64 = 0;
    let mut inserts_since_announce: u64 = 0;
    let graph = a.handle.map_mut().shared();
    loop {
        if a.stop.load(Ordering::Relaxed) {
            break;
        }
        if let Some(cap) = a.op_cap {
            if done >= cap {
                break;
            }
        }
        match &mut a.handle {
            WorkerHandle::Map(h) => {
                let key = rng.gen_range(1..=a.cfg.keyspace);
                if rng.gen_range(0..100) < a.cfg.update_pct {
                    let is_insert = rng.gen_bool(0.5);
                    let mut key = key;
                    let mut tries = 0;
                    // history runs record every attempt; skip retries so the
                    // history stays within the checker budget
                    let retry_cap = if a.cfg.record_history {
                        1
                    } else {
                        UPDATE_RETRY_CAP
                    };
                    loop {
                        let kind = if is_insert {
                            OpKind::Insert
                        } else {
                            OpKind::Remove
                        };
                        let inv = a.clock.tick();
                        let ok = if is_insert {
                            h.insert(key, key)
                        } else {
                            h.remove(key)
                        };
                        let res = a.clock.tick();
                        if a.cfg.record_history {
                            hist.push(HistOp {
                                tid,
                                kind,
                                key,
                                result: ok,
                                inv,
                                res,
                            });
                        }
                        if ok {
                            *net.entry(key).or_insert(0) += if is_insert { 1 } else { -1 };
                            if is_insert {
                                inserts_since_announce += 1;
                            }
                            break;
                        }
                        tries += 1;
                        if tries >= retry_cap || a.stop.load(Ordering::Relaxed) {
                            break;
                        }
                        key = rng.gen_range(1..=a.cfg.keyspace);
                    }
                } else {
                    let inv = a.clock.tick();
                    let ok = h.contains(key);
                    let res = a.clock.tick();
                    if a.cfg.record_history {
                        hist.push(HistOp {
                            tid,
                            kind: OpKind::Contains,
                            key,
                            result: ok,
                            inv,
                            res,
                        });
                    }
                }
            }
            WorkerHandle::Pq(q) => {
                if rng.gen_bool(0.5) {
                    let key = rng.gen_range(1..=a.cfg.keyspace);
                    if q.insert(key) {
                        *net.entry(key).or_insert(0) += 1;
                        inserts_since_announce += 1;
                    }
                } else if let Some(k) = q.remove_min() {
                    if !a.cfg.faux_removal {
                        *net.entry(k).or_insert(0) -= 1;
                    }
                    if a.cfg.record_ranks {
                        ranks.push(graph.bottom_rank(k));
                    }
                }
            }
        }
        done += 1;
        if let Some(b) = &a.balance {
            if done.is_multiple_of(BALANCE_STRIDE) {
                // census counts index insertions: own inserts plus absorbed
                // donations, so circulating entries keep every worker in the
                // donation rotation
                b.announce(inserts_since_announce);
                inserts_since_announce = 0;
                let index = &mut a.handle.map_mut().index;
                b.donate(index);
                inserts_since_announce += b.absorb(index) as u64;
            }
        }
    }
    if let Some(b) = &a.balance {
        b.announce(inserts_since_announce);
        b.absorb(&mut a.handle.map_mut().index);
    }
    WorkerOut {
        handle: a.handle,
        net,
        ranks,
        hist,
        pinned,
    }
}

/// Deterministic preload of `round(preload * keyspace)` distinct keys,
/// inserted round-robin across the handles; metrics are reset afterwards
/// so reports cover only the measured phase.
fn preload(handles: &mut [WorkerHandle], cfg: &WorkloadConfig) -> BTreeSet<u64> {
    let want = (cfg.preload * cfg.keyspace as f64).round() as usize;
    let mut keys = BTreeSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9049_5052_454c_4f41);
    while keys.len() < want {
        keys.insert(rng.gen_range(1..=cfg.keyspace));
    }
    for (i, &k) in keys.iter().enumerate() {
        let h = &mut handles[i % handles.len()];
        let ok = match h {
            WorkerHandle::Map(m) => m.insert(k, k),
            WorkerHandle::Pq(q) => q.insert(k),
        };
        assert!(ok, "preload of distinct keys cannot fail");
    }
    for h in handles.iter_mut() {
        let m = h.map_mut();
        m.metrics = skipgraph::ThreadMetrics::new(m.tid, cfg.threads);
    }
    keys
}

/// Checks that per-key successful-update balances explain exactly the final
/// bottom-list contents.
fn audit_conservation(preloaded: &BTreeSet<u64>, nets: &[HashMap<u64, i64>], live: &[u64]) -> bool {
    let mut balance: HashMap<u64, i64> = HashMap::new();
    for &k in preloaded {
        balance.insert(k, 1);
    }
    for net in nets {
        for (&k, &d) in net {
            *balance.entry(k).or_insert(0) += d;
        }
    }
    let mut expect: Vec<u64> = Vec::new();
    for (&k, &b) in &balance {
        match b {
            0 => {}
            1 => expect.push(k),
            _ => return false,
        }
    }
    expect.sort_unstable();
    expect == live
}

pub fn run_workload(cfg: &WorkloadConfig) -> Result<RunOutput, String> {
    cfg.validate()?;
    let graph = build_graph(cfg);
    let vectors = vectors_for(cfg)?;
    let mut handles: Vec<WorkerHandle> = (0..cfg.threads)
        .map(|tid| build_handle(&graph, cfg, tid, vectors[tid]))
        .collect();
    let preloaded = preload(&mut handles, cfg);

    let pin_order = if cfg.pin {
        let topo = cfg
            .topology
            .clone()
            .unwrap_or_else(|| Topology::flat(cfg.threads));
        Some(renumber_threads(&topo, cfg.threads).map_err(|e| e.to_string())?)
    } else {
        None
    };

    let stop = Arc::new(AtomicBool::new(false));
    let clock = Arc::new(EventClock::new());
    let (mut balances, coordinator) = if cfg.load_balance {
        let (w, c) = build_balancer(cfg.threads, cfg.balance_literal);
        (w.into_iter().map(Some).collect::<Vec<_>>(), Some(c))
    } else {
        ((0..cfg.threads).map(|_| None).collect(), None)
    };
    let coord_stop = stop.clone();
    let coord_thread = coordinator
        .map(|c| std::thread::spawn(move || run_coordinator(c, coord_stop, ROUND_PERIOD)));

    let per_thread_cap = |tid: usize| {
        cfg.ops.map(|total| {
            let base = total / cfg.threads as u64;
            let extra = u64::from((tid as u64) < total % cfg.threads as u64);
            base + extra
        })
    };

    let started = Instant::now();
    let workers: Vec<std::thread::JoinHandle<WorkerOut>> = handles
        .into_iter()
        .enumerate()
        .map(|(tid, handle)| {
            let args = WorkerArgs {
                handle,
                cfg: cfg.clone(),
                op_cap: per_thread_cap(tid),
                stop: stop.clone(),
                clock: clock.clone(),
                balance: balances[tid].take(),
                pin_hw: pin_order.as_ref().map(|o| o[tid]),
            };
            std::thread::spawn(move || worker_run(args))
        })
        .collect();
    if cfg.ops.is_none() {
        std::thread::sleep(Duration::from_millis(cfg.duration_ms));
        stop.store(true, Ordering::SeqCst);
    }
    let mut outs: Vec<WorkerOut> = Vec::with_capacity(cfg.threads);
    for w in workers {
        outs.push(w.join().map_err(|_| "worker thread panicked".to_string())?);
    }
    stop.store(true, Ordering::SeqCst);
    if let Some(t) = coord_thread {
        t.join()
            .map_err(|_| "coordinator thread panicked".to_string())?;
    }
    let elapsed = started.elapsed();

    let live = graph.live_keys(cfg.structure.lazy());
    graph.audit_sorted()?;
    let nets: Vec<HashMap<u64, i64>> = outs.iter().map(|o| o.net.clone()).collect();
    let conservation_ok = audit_conservation(&preloaded, &nets, &live);

    let mut parts = Vec::with_capacity(cfg.threads);
    let mut index_keys = Vec::with_capacity(cfg.threads);
    let mut ranks = Vec::with_capacity(cfg.threads);
    let mut hist_ops = Vec::new();
    let mut pinned = true;
    for mut o in outs {
        let m = o.handle.map_mut();
        parts.push(m.metrics.clone());
        index_keys.push(m.index.keys());
        ranks.push(std::mem::take(&mut o.ranks));
        hist_ops.extend(o.hist);
        pinned &= o.pinned;
    }
    parts.sort_by_key(|p| p.tid);
    let ledger = MetricsLedger::merge(cfg.threads, parts);
    hist_ops.sort_by_key(|o| o.inv);
    let history = cfg.record_history.then_some(History { ops: hist_ops });

    let max_rank = ranks.iter().flatten().copied().max();
    let duration_ms = elapsed.as_secs_f64() * 1e3;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        structure: cfg.structure.as_str().to_string(),
        threads: cfg.threads,
        keyspace: cfg.keyspace,
        seed: cfg.seed,
        update_pct: cfg.update_pct,
        duration_ms,
        total_ops: ledger.ops_completed,
        effective_updates: ledger.effective_updates,
        throughput_ops_per_sec: ledger.ops_completed as f64 / elapsed.as_secs_f64().max(1e-9),
        cas_success: ledger.cas_success,
        cas_fail: ledger.cas_fail,
        cas_success_rate: ledger.cas_success_rate(),
        local_reads: ledger.local_reads,
        remote_reads: ledger.remote_reads,
        local_maint_cas: ledger.local_maint_cas,
        remote_maint_cas: ledger.remote_maint_cas,
        conservation_ok,
        live_size: live.len(),
        index_sizes: index_keys.iter().map(|k| k.len()).collect(),
        writer_sets: ledger
            .writer_sets
            .iter()
            .map(|((level, label), writers)| WriterSetEntry {
                level: *level,
                label: *label,
                writers: writers.clone(),
            })
            .collect(),
        pin_requested: cfg.pin,
        pinned: cfg.pin && pinned,
        max_rank,
    };
    Ok(RunOutput {
        report,
        ledger,
        history,
        ranks,
        index_keys,
        graph,
    })
}

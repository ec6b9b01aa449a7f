//! Acceptance suite: one pass/fail line per criterion, all criteria
//! evaluated even when an earlier one fails.

use std::collections::BTreeSet;
use std::time::Duration;

use num::rational::BigRational;
use num::{BigInt, One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgbench::heatmap::band_mass;
use sgbench::history::{check_linearizability, Verdict};
use sgbench::workload::{run_workload, StructureKind, WorkloadConfig};
use sgbench::{pq_keydist, run_single_inserter, run_two_group};
use skipgraph::map::MapHandle;
use spray_oracle::{
    build_perfect, coupon_collector, enumerate_spray, harmonic_expectation, max_spray_reach,
    simulate_sgmark, Kind, SprayParams,
};

const MAP_STRUCTURES: [StructureKind; 6] = [
    StructureKind::LayeredSg,
    StructureKind::LayeredSsg,
    StructureKind::LazyLayeredSg,
    StructureKind::LayeredSl,
    StructureKind::LayeredLl,
    StructureKind::ControlSl,
];

fn criterion_1_sequential_oracle() -> Result<String, String> {
    for kind in MAP_STRUCTURES {
        let mut cfg = WorkloadConfig::new(kind, 4);
        cfg.keyspace = 512;
        let graph = sgbench::workload::build_graph(&cfg);
        let mut h = MapHandle::new(graph, 4, 0, 0, kind.lazy(), kind.use_index(), 20_240);
        let mut oracle: BTreeSet<u64> = BTreeSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(101 + kind as u64);
        for i in 0..100_000u64 {
            let key = rng.gen_range(1..=512);
            let (got, want) = match rng.gen_range(0..3) {
                0 => (h.insert(key, key), oracle.insert(key)),
                1 => (h.remove(key), oracle.remove(&key)),
                _ => (h.contains(key), oracle.contains(&key)),
            };
            if got != want {
                return Err(format!("{}: op {i} diverged on key {key}", kind.as_str()));
            }
        }
        let live = h.graph().live_keys(kind.lazy());
        let want: Vec<u64> = oracle.iter().copied().collect();
        if live != want {
            return Err(format!("{}: final contents diverged", kind.as_str()));
        }
    }
    Ok(format!(
        "{} variants x 100000 ops each, exact",
        MAP_STRUCTURES.len()
    ))
}

fn criterion_2_linearizability() -> Result<String, String> {
    let mut checked = 0usize;
    for kind in MAP_STRUCTURES {
        for rep in 0..200u64 {
            let mut cfg = WorkloadConfig::new(kind, 3);
            cfg.ops = Some(60);
            cfg.keyspace = 8;
            cfg.preload = 0.0;
            cfg.update_pct = 60;
            cfg.seed = 1000 + rep;
            cfg.record_history = true;
            let out = run_workload(&cfg).map_err(|e| format!("{}: {e}", kind.as_str()))?;
            let h = out.history.expect("history requested");
            match check_linearizability(&h) {
                Verdict::Ok => checked += 1,
                Verdict::Violation {
                    linearizable_prefix,
                } => {
                    return Err(format!(
                        "{} rep {rep}: violation (prefix {linearizable_prefix} of {} ops)",
                        kind.as_str(),
                        h.ops.len()
                    ));
                }
                Verdict::TooLarge { ops } => {
                    return Err(format!("{} rep {rep}: {ops} ops overflow", kind.as_str()));
                }
            }
        }
    }
    Ok(format!("{checked} histories, zero violations"))
}

fn criterion_3_conservation() -> Result<String, String> {
    let structures = [StructureKind::LayeredSg, StructureKind::LazyLayeredSg];
    let thread_counts = [2usize, 4, 8];
    for rep in 0..20u64 {
        let kind = structures[rep as usize % structures.len()];
        let threads = thread_counts[rep as usize % thread_counts.len()];
        let mut cfg = WorkloadConfig::new(kind, threads);
        cfg.duration_ms = 1000;
        cfg.update_pct = 50;
        cfg.keyspace = 1 << 8;
        cfg.seed = 4000 + rep;
        let out = run_workload(&cfg)?;
        if !out.report.conservation_ok {
            return Err(format!(
                "rep {rep} ({}, T={threads}): audit failed",
                kind.as_str()
            ));
        }
    }
    Ok("20 one-second stress runs, audit exact every run".into())
}

fn criterion_4_spray_uniform() -> Result<String, String> {
    for n in [2usize, 3, 4] {
        let t = 1usize << n;
        let s = build_perfect(Kind::SkipList, n, true, 0);
        let dist = enumerate_spray(
            &s,
            SprayParams {
                h: n - 1,
                l: 1,
                d: 1,
            },
            0,
        );
        let expect = BigRational::new(BigInt::one(), BigInt::from(t as i64));
        if dist.len() != t {
            return Err(format!("T={t}: mass outside 0..T-1"));
        }
        for x in 0..t {
            if dist.get(&x) != Some(&expect) {
                return Err(format!("T={t}: position {x} is not exactly 1/T"));
            }
        }
    }
    Ok("SPRAY(logT-1,1,1) exactly uniform 1/T for T in {4,8,16}".into())
}

fn criterion_5_skipgraph_bound() -> Result<String, String> {
    for (n, reach_want) in [(2usize, 7usize), (3, 24)] {
        let t = 1usize << n;
        let params = SprayParams {
            h: n - 1,
            l: n,
            d: 1,
        };
        let bound = BigRational::new(BigInt::one(), BigInt::from(t as i64));
        let s = build_perfect(Kind::SkipGraph, n, false, reach_want + 2);
        for j in 0..(1 << (n - 1)) {
            let dist = enumerate_spray(&s, params, j);
            let total: BigRational = dist.values().fold(BigRational::zero(), |a, b| a + b);
            if !total.is_one() {
                return Err(format!("T={t} start {j}: distribution does not sum to 1"));
            }
            for (x, p) in &dist {
                if p > &bound {
                    return Err(format!("T={t} start {j}: mass {p} at {x} exceeds 1/T"));
                }
            }
        }
        let reach = max_spray_reach(Kind::SkipGraph, n, params);
        if reach != reach_want {
            return Err(format!("T={t}: reach {reach}, expected {reach_want}"));
        }
    }
    Ok("max mass <= 1/T for T in {4,8}; reach 7 and 24 exact".into())
}

fn criterion_6_sgmark() -> Result<String, String> {
    for n in 2..=6usize {
        let tr = simulate_sgmark(n);
        let t = tr.t;
        if tr.mark_order.len() != t {
            return Err(format!(
                "n={n}: {} marks, expected {t}",
                tr.mark_order.len()
            ));
        }
        if tr.attempts[..t - 1].iter().any(|&a| a != 2) || tr.attempts[t - 1] != 1 {
            return Err(format!("n={n}: attempt counts {:?}", tr.attempts));
        }
    }
    Ok("n in {2..6}: T marks, 2 attempts each but the last".into())
}

fn criterion_7_coupon() -> Result<String, String> {
    for t in [4usize, 16] {
        let analytic = harmonic_expectation(t).to_f64().unwrap();
        let est = coupon_collector(t, 10_000, 2027);
        let rel = (est - analytic).abs() / analytic;
        if rel >= 0.05 {
            return Err(format!(
                "T={t}: MC {est:.3} vs {analytic:.3} ({rel:.3} off)"
            ));
        }
        if analytic < 2.0 * t as f64 || est < 2.0 * t as f64 {
            return Err(format!("T={t}: expectation below 2T"));
        }
    }
    Ok("MC within 5% of T*H(T) and >= 2T for T in {4,16}".into())
}

fn criterion_8_locality() -> Result<String, String> {
    let mut passes = 0;
    let mut detail = Vec::new();
    for rep in 0..5u64 {
        let mut lazy_cfg = WorkloadConfig::new(StructureKind::LazyLayeredSg, 8);
        lazy_cfg.duration_ms = 1000;
        lazy_cfg.update_pct = 100;
        lazy_cfg.keyspace = 1 << 8;
        lazy_cfg.seed = 8000 + rep;
        let control_cfg = WorkloadConfig {
            structure: StructureKind::ControlSl,
            ..lazy_cfg.clone()
        };
        let lazy = run_workload(&lazy_cfg)?;
        let control = run_workload(&control_cfg)?;
        let rate_ok = lazy.report.cas_success_rate > control.report.cas_success_rate;
        // half-machine band: the membership vectors put each level-1 group
        // on 4 adjacent logical threads, the NUMA-node analogue at T=8
        let lazy_band = band_mass(&lazy.ledger.reads_matrix, 8, 3);
        let control_band = band_mass(&control.ledger.reads_matrix, 8, 3);
        let band_ok = lazy_band > control_band;
        detail.push(format!(
            "rep {rep}: rate {:.4} vs {:.4}, band {:.3} vs {:.3}",
            lazy.report.cas_success_rate, control.report.cas_success_rate, lazy_band, control_band
        ));
        if rate_ok && band_ok {
            passes += 1;
        }
    }
    if passes >= 4 {
        Ok(format!(
            "{passes}/5 paired runs favor the partitioned structure"
        ))
    } else {
        let cpus = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        let env_note = if cpus < 2 {
            format!(
                " [host has {cpus} CPU: threads timeshare one core, so CAS failures \
                 are rare preemption events (~1e-5/CAS) on both structures and the \
                 strict rate inequality degenerates to noise]"
            )
        } else {
            String::new()
        };
        Err(format!(
            "only {passes}/5 reps passed; {}{env_note}",
            detail.join("; ")
        ))
    }
}

fn criterion_9_relaxation() -> Result<String, String> {
    let tr = simulate_sgmark(3);
    if tr.mark_order.iter().any(|&p| p > tr.t) {
        return Err("oracle-model sgmark rank exceeds T".into());
    }
    let mut passes = 0;
    let mut detail = Vec::new();
    for rep in 0..5u64 {
        let seed = 9000 + rep;
        let sg = pq_keydist(StructureKind::PqSgmark, 8, 1 << 11, 2000, seed)?;
        let sp = pq_keydist(StructureKind::PqSpray, 8, 1 << 11, 2000, seed)?;
        detail.push(format!(
            "rep {rep}: sgmark {} vs spray {}",
            sg.max_rank, sp.max_rank
        ));
        if sg.max_rank < sp.max_rank {
            passes += 1;
        }
    }
    if passes >= 4 {
        Ok(format!(
            "{passes}/5 reps: sgmark max rank < spray max rank; oracle ranks <= T"
        ))
    } else {
        Err(format!(
            "only {passes}/5 reps passed; {}",
            detail.join("; ")
        ))
    }
}

fn criterion_10_load_balance() -> Result<String, String> {
    let single = run_single_inserter(4, 8_000, Duration::from_millis(1200), true, 1042)?;
    let max = *single.index_sizes.iter().max().unwrap();
    let min = *single.index_sizes.iter().min().unwrap();
    if min == 0 || max > 2 * min {
        return Err(format!("single-inserter sizes {:?}", single.index_sizes));
    }
    let groups = run_two_group(4, 2_000, Duration::from_millis(1200), true, 1043)?;
    for (tid, (lo, hi)) in groups.half_coverage.iter().enumerate() {
        if !(lo & hi) {
            return Err(format!(
                "two-group worker {tid} spans one half only: {:?}",
                groups.half_coverage
            ));
        }
    }
    Ok(format!(
        "single-inserter sizes {:?} within 2x; every index spans both halves",
        single.index_sizes
    ))
}

fn criterion_11_partition_bound() -> Result<String, String> {
    let mut cfg = WorkloadConfig::new(StructureKind::LazyLayeredSg, 8);
    cfg.duration_ms = 1000;
    cfg.update_pct = 100;
    cfg.keyspace = 1 << 11;
    cfg.seed = 1101;
    let out = run_workload(&cfg)?;
    let mut lists = 0;
    for ws in &out.report.writer_sets {
        let limit = 8usize >> ws.level;
        if ws.writers.len() > limit {
            return Err(format!(
                "level-{} list {} written by {:?} (> {limit})",
                ws.level, ws.label, ws.writers
            ));
        }
        lists += 1;
    }
    Ok(format!("{lists} lists, every writer set within T/2^i"))
}

type Criterion = (&'static str, fn() -> Result<String, String>);

#[test]
fn acceptance() {
    let criteria: Vec<Criterion> = vec![
        ("01 sequential-oracle", criterion_1_sequential_oracle),
        ("02 linearizability", criterion_2_linearizability),
        ("03 conservation", criterion_3_conservation),
        ("04 spray-uniform", criterion_4_spray_uniform),
        ("05 skipgraph-spray-bound", criterion_5_skipgraph_bound),
        ("06 sgmark-contention", criterion_6_sgmark),
        ("07 coupon-collector", criterion_7_coupon),
        ("08 locality-direction", criterion_8_locality),
        ("09 relaxation-ordering", criterion_9_relaxation),
        ("10 load-balancing", criterion_10_load_balance),
        ("11 partition-bound", criterion_11_partition_bound),
    ];
    let mut failures = Vec::new();
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("criterion {name}: PASS — {detail}"),
            Err(detail) => {
                println!("criterion {name}: FAIL — {detail}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

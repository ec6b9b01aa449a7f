use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num::ToPrimitive;

use sgbench::history::Verdict;
use sgbench::workload::{run_workload, StructureKind, WorkloadConfig};
use skipgraph::topology::Topology;
use spray_oracle::{
    build_perfect, coupon_collector, enumerate_spray, harmonic_expectation, simulate_sgmark, Kind,
    SprayParams,
};

#[derive(Parser)]
#[command(
    name = "sgbench",
    about = "Skip-graph benchmark harness and analysis oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark workload and print a JSON report.
    Bench(BenchArgs),
    /// Emit exact model distributions and traces as CSV.
    #[command(subcommand)]
    Oracle(OracleCmd),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    structure: StructureKind,
    #[arg(long, default_value_t = 4)]
    threads: usize,
    #[arg(long, default_value_t = 1000)]
    duration_ms: u64,
    /// Fixed total op budget; overrides the duration for deterministic runs.
    #[arg(long)]
    ops: Option<u64>,
    #[arg(long, default_value_t = 20)]
    update_pct: u32,
    #[arg(long, default_value_t = 1 << 8)]
    keyspace: u64,
    #[arg(long, default_value_t = 0.2)]
    preload: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON topology description; defaults to a flat topology.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    load_balance: bool,
    /// Use the clamped donation-fraction rule instead of the literal one.
    #[arg(long)]
    balance_clamped: bool,
    #[arg(long)]
    commission_ns: Option<u64>,
    /// Priority queues: record would-be victims without removing them.
    #[arg(long)]
    faux_removal: bool,
    /// Priority queues: record the bottom rank of every removal.
    #[arg(long)]
    record_ranks: bool,
    /// Record a complete history and check it for linearizability.
    #[arg(long)]
    record_history: bool,
    /// Pin logical threads to hardware threads in topology order.
    #[arg(long)]
    pin: bool,
    /// Write the accessor x owner heat maps to this CSV file.
    #[arg(long)]
    emit_heatmap: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Exact SPRAY(H,L,D) landing distribution on a perfect structure.
    Spray(SprayArgs),
    /// Synchronous-round SGMARK contention trace.
    Sgmark {
        /// Structure exponent: T = 2^n threads.
        #[arg(long)]
        n: usize,
    },
    /// Coupon-collector coverage: exact expectation and Monte-Carlo mean.
    Coupon {
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct SprayArgs {
    /// skipgraph or skiplist
    #[arg(long, default_value = "skipgraph")]
    kind: String,
    /// Structure exponent: T = 2^n threads.
    #[arg(long)]
    n: usize,
    /// Start height; default log T - 1.
    #[arg(long)]
    height: Option<usize>,
    /// Forward-step bound; default log T.
    #[arg(long)]
    steps: Option<usize>,
    /// Descent per hop.
    #[arg(long, default_value_t = 1)]
    descent: usize,
    /// Start list label (skip graphs).
    #[arg(long, default_value_t = 0)]
    start_list: usize,
    /// Bottom-list length; 0 = minimal perfect structure (T nodes).
    #[arg(long, default_value_t = 0)]
    bottom_len: usize,
}

fn run_bench(a: BenchArgs) -> Result<(), String> {
    let topology: Option<Topology> = match &a.topology {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            Some(serde_json::from_str(&text).map_err(|e| format!("bad topology file: {e}"))?)
        }
        None => None,
    };
    let cfg = WorkloadConfig {
        structure: a.structure,
        threads: a.threads,
        duration_ms: a.duration_ms,
        ops: a.ops,
        update_pct: a.update_pct,
        keyspace: a.keyspace,
        preload: a.preload,
        seed: a.seed,
        topology,
        load_balance: a.load_balance,
        balance_literal: !a.balance_clamped,
        commission_ns: a.commission_ns,
        faux_removal: a.faux_removal,
        record_ranks: a.record_ranks,
        record_history: a.record_history,
        pin: a.pin,
    };
    let out = run_workload(&cfg)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&out.report).map_err(|e| e.to_string())?
    );
    if let Some(path) = &a.emit_heatmap {
        sgbench::emit_heatmap(&out.ledger, path)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    if let Some(h) = &out.history {
        match sgbench::check_linearizability(h) {
            Verdict::Ok => eprintln!("history: linearizable ({} ops)", h.ops.len()),
            Verdict::TooLarge { ops } => {
                eprintln!("history: {ops} ops exceed the checker budget; not checked")
            }
            Verdict::Violation {
                linearizable_prefix,
            } => {
                return Err(format!(
                    "history is NOT linearizable (longest linearizable prefix: \
                     {linearizable_prefix} ops)"
                ));
            }
        }
    }
    if !out.report.conservation_ok {
        return Err("conservation audit failed".into());
    }
    Ok(())
}

fn run_oracle(cmd: OracleCmd) -> Result<(), String> {
    match cmd {
        OracleCmd::Spray(a) => {
            let kind = match a.kind.as_str() {
                "skipgraph" => Kind::SkipGraph,
                "skiplist" => Kind::SkipList,
                other => return Err(format!("unknown kind '{other}'")),
            };
            if a.n == 0 {
                return Err("n must be at least 1".into());
            }
            let params = SprayParams {
                h: a.height.unwrap_or(a.n - 1),
                l: a.steps.unwrap_or(a.n),
                d: a.descent,
            };
            let s = if a.bottom_len == 0 {
                build_perfect(kind, a.n, true, 0)
            } else {
                build_perfect(kind, a.n, false, a.bottom_len)
            };
            if params.h >= s.n {
                return Err("start height above the structure".into());
            }
            let dist = enumerate_spray(&s, params, a.start_list);
            println!(
                "# {} n={} H={} L={} D={} start_list={}",
                a.kind, a.n, params.h, params.l, params.d, a.start_list
            );
            println!("position,probability,probability_f64");
            for (pos, p) in &dist {
                println!("{pos},{p},{}", p.to_f64().unwrap_or(f64::NAN));
            }
        }
        OracleCmd::Sgmark { n } => {
            if n == 0 {
                return Err("n must be at least 1".into());
            }
            let tr = simulate_sgmark(n);
            println!(
                "# T={} rounds={} total_attempts={}",
                tr.t,
                tr.rounds,
                tr.total_attempts()
            );
            println!("order,position,attempts");
            for (i, (pos, att)) in tr.mark_order.iter().zip(&tr.attempts).enumerate() {
                println!("{i},{pos},{att}");
            }
        }
        OracleCmd::Coupon { t, trials, seed } => {
            if !t.is_power_of_two() {
                return Err("T must be a power of two".into());
            }
            let exact = harmonic_expectation(t);
            let mc = coupon_collector(t, trials, seed);
            println!("metric,value");
            println!("analytic_exact,{exact}");
            println!("analytic_f64,{}", exact.to_f64().unwrap_or(f64::NAN));
            println!("monte_carlo_mean,{mc}");
            println!("trials,{trials}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => run_bench(a),
        Command::Oracle(c) => run_oracle(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sgbench: {e}");
            ExitCode::from(2)
        }
    }
}

//! Benchmark harness for the partitioned skip-graph structures: workload
//! driver, history recording with a linearizability checker, heat-map
//! emission, and the key-distribution and load-balancing experiments.

pub mod experiments;
pub mod heatmap;
pub mod history;
pub mod workload;

pub use experiments::{pq_keydist, run_single_inserter, run_two_group, KeyDistResult};
pub use heatmap::{band_mass, emit_heatmap, write_heatmap};
pub use history::{check_linearizability, EventClock, HistOp, History, OpKind, Verdict};
pub use workload::{
    run_workload, Report, RunOutput, StructureKind, WorkloadConfig, ALL_STRUCTURES, SCHEMA_VERSION,
};

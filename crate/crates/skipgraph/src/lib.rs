//! Partitioned lock-free skip graph with per-thread local indexes, a
//! linearizable map ADT, relaxed priority-queue protocols, topology-driven
//! membership vectors, and an optional donation-based load balancer.

pub mod balance;
pub mod graph;
pub mod local_index;
pub mod map;
pub mod metrics;
pub mod node;
pub mod pq;
pub mod topology;

pub use graph::{
    default_commission_ns, max_level_for_threads, NodeAlloc, OpCtx, SearchStart, SkipGraph,
    SkipGraphConfig, Variant,
};
pub use local_index::{Cursor, LocalIndex};
pub use map::MapHandle;
pub use metrics::{MetricsLedger, ThreadMetrics};
pub use node::{Node, KEY_MAX, KEY_MIN};
pub use pq::{PqHandle, PqProtocol, SprayParams};
pub use topology::{generate_membership_vectors, renumber_threads, Topology};

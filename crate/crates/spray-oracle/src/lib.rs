//! Exact, deterministic models of perfect skip graphs and skip lists:
//! spray landing distributions and reach bounds in rational arithmetic,
//! the SGMARK synchronous-round contention game, and coupon-collector
//! coverage estimates.

pub mod coupon;
pub mod perfect;
pub mod sgmark;
pub mod spray;

pub use coupon::{coupon_collector, harmonic_expectation};
pub use perfect::{build_perfect, Kind, PerfectStructure};
pub use sgmark::{simulate_sgmark, RoundTrace};
pub use spray::{enumerate_spray, max_spray_reach, SprayParams};

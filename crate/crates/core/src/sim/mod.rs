//! Tick-driven simulation of the whole marketplace.

mod engine;
mod metrics;
mod scenario;
pub mod synth;

pub use engine::{run, run_with_seed, SimError, SimOutcome};
pub use metrics::{EvMetrics, MetricsReport, StationMetrics};
pub use scenario::{
    AccountConfig, EvConfig, FaultConfig, LeaderConfig, LoadError, PlatoonConfig, Scenario, ScenarioViolation,
    StationConfig, ESCROW_ID,
};

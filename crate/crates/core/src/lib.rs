//! Event-driven simulator for dynamic provisioning in C and C+L elastic
//! optical networks, with delay-aware and compression-aware strategies.

pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod provisioning;
pub mod qot;
pub mod routing;
pub mod schedule;
pub mod spectrum;
pub mod topology;
pub mod traffic;

pub use config::SimConfig;
pub use engine::{run, run_batch, run_batch_with, run_sweep, run_with, write_event_log, Experiment, OutcomeRecord, RunOptions, Simulation};
pub use error::{ConfigError, ExportError, SimError, SpectrumError, TopologyError};
pub use metrics::{blocking_probability, relative_bp, MetricsReport};
pub use provisioning::{Outcome, StrategyKind};
pub use spectrum::{Band, BandPlan, BandPlanKind, SpectrumGrid};
pub use topology::{load_topology, Topology};
pub use traffic::{Request, TrafficType};

//! Discrete-event simulator of centralized, distributed and hybrid MAC
//! protocols for uplink networks aided by reconfigurable intelligent surfaces.

pub mod channel;
pub mod engine;
pub mod error;
pub mod kernel;
pub mod learning;
pub mod mac;
pub mod metrics;
pub mod ris;
pub mod scenario;
pub mod sweep;
pub mod tracefile;

pub use engine::{run, run_with_channels, RunOutput};
pub use error::{Error, Result};
pub use metrics::RunMetrics;
pub use scenario::{parse_scenario, Protocol, Scenario, ScenarioConfig};

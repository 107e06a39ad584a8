//! Deterministic telemetry simulator for the governance fabric.
//!
//! A [`FleetSpec`] expands into a plant hierarchy whose sites speak one of
//! two vendor dialects. A [`Scenario`] drives that fleet through the
//! ingestion boundary with optional faults and reports counts, detection
//! latency and per-stream quality. Equal seeds give byte-identical runs.

mod fleet;
mod scenario;

pub use fleet::*;
pub use scenario::*;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bad fleet spec: {0}")]
    BadSpec(String),
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("no stream matches {0}")]
    UnknownStream(String),
    #[error("fabric setup failed: {0}")]
    Setup(String),
}

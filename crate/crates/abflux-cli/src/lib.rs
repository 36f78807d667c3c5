//! Experiment harness: scenario configuration, run orchestration, and
//! alpha sweeps over the four bundled setups (flyby, three-packet, circle,
//! capacitor-1d).

pub mod config;
pub mod runner;
pub mod sweep;

pub use config::{load_config, Kind, Scenario};
pub use runner::{run, RunOutcome};
pub use sweep::{sweep, SweepSpec};

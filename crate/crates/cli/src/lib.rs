//! Experiment plumbing for the spherical robot: named figure scenarios,
//! artifact sets and their pass/fail report.

pub mod analyze;
pub mod artifacts;
pub mod error;
pub mod report;
pub mod runner;
pub mod scenario;

pub use error::{CliError, CliResult};
pub use scenario::{Overrides, Scenario};

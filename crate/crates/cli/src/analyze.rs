//! Measurement of a trajectory file recorded earlier.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spherebot_core::analysis::{precession_rate, predict_circle_metrics};
use spherebot_core::measure::{measure_circle, CircleMeasurement};
use spherebot_core::simulator::constraint_drift;
use spherebot_core::{CircleMetrics, Robot, Trajectory};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub file: String,
    pub samples: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub max_constraint_residual: f64,
    /// Operating point the predictions use.
    pub beta_deg: f64,
    pub speed: f64,
    pub measurement: CircleMeasurement,
    pub measured: CircleMetrics,
    pub predicted: CircleMetrics,
    pub precession_at_mean_theta: f64,
}

/// Measures `path`; predictions default to the measured mean β and ψ̇.
pub fn analyze_file(path: &Path, robot: Robot, beta_deg: Option<f64>, speed: Option<f64>) -> CliResult<Analysis> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("no trajectory file at {}", path.display())));
    }
    let traj = Trajectory::load_csv(path, robot)?;
    if traj.len() < 3 {
        return Err(CliError::Usage(format!("{} holds too few samples", path.display())));
    }
    let m = measure_circle(&traj)?;
    let beta_deg = beta_deg.unwrap_or(m.mean_beta.to_degrees());
    let speed = speed.unwrap_or(m.mean_psi_dot);
    Ok(Analysis {
        file: path.display().to_string(),
        samples: traj.len(),
        t_start: traj.t_start(),
        t_end: traj.t_end(),
        max_constraint_residual: constraint_drift(&traj),
        beta_deg,
        speed,
        measurement: m,
        measured: m.metrics(),
        predicted: predict_circle_metrics(beta_deg.to_radians(), speed, &robot)?,
        precession_at_mean_theta: precession_rate(m.mean_theta, m.mean_psi_dot, &robot),
    })
}

//! Executes scenario runs and condenses each into a [`RunRecord`].

use log::{info, warn};
use serde::{Deserialize, Serialize};
use spherebot_core::analysis::{precession_rate, predict_circle_metrics, radius_of_curvature, wobble_amplitude};
use spherebot_core::controller::ControllerConfig;
use spherebot_core::maneuver::{run_maneuver, turn_metrics, ManeuverPlan, Segment, TurnMetrics};
use spherebot_core::measure::{fit_circle, measure_circle, measure_circle_window, peak_to_peak};
use spherebot_core::simulator::{constraint_drift, integrate_labeled, pendulum_hold, steady_circle_state};
use spherebot_core::{CircleMetrics, Robot, Trajectory};

use crate::scenario::{Initial, RunSpec, Scenario, Source};

/// Controlled runs are judged this long after the preamble ends, s.
pub const CONTROL_SETTLE: f64 = 15.0;
/// Maneuvers are judged over this final stretch, s.
pub const SETTLE_TAIL: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleRecord {
    pub measured: CircleMetrics,
    pub predicted: CircleMetrics,
    /// Precession predicted from the measured mean lean, rad/s.
    pub precession_at_mean_theta: f64,
    pub mean_theta: f64,
    pub mean_beta: f64,
    pub fit_residual: f64,
    pub periods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub window: [f64; 2],
    pub p2p_theta_dot: f64,
    pub fitted_radius: f64,
    pub amplitude: Option<f64>,
    pub predicted_amplitude: f64,
    pub predicted_radius: Option<f64>,
    pub mean_beta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub settle_window: [f64; 2],
    pub max_abs_theta_deg: f64,
    pub max_abs_phi_dot: f64,
    /// Peak-to-peak θ̇ over the second half of the arc.
    pub arc_p2p_theta_dot: Option<f64>,
    pub metrics: Option<TurnMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub kind: String,
    pub initial: Initial,
    pub blend: Option<(f64, f64)>,
    pub ok: bool,
    pub error: Option<String>,
    pub numerical: bool,
    pub t_end: f64,
    pub samples: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub fallback_events: usize,
    pub max_constraint_residual: Option<f64>,
    pub analysis_error: Option<String>,
    pub circle: Option<CircleRecord>,
    pub control: Option<ControlRecord>,
    pub turn: Option<TurnRecord>,
    pub trajectory_file: Option<String>,
}

impl RunRecord {
    fn new(spec: &RunSpec) -> Self {
        let blend = match &spec.source {
            Source::Controller { gamma, delta, .. } => Some((*gamma, *delta)),
            Source::Maneuver { plan } => plan.segments.first().and_then(|s| s.blend),
            Source::Hold => None,
        };
        Self {
            label: spec.label.clone(),
            kind: spec.source.kind().into(),
            initial: spec.initial,
            blend,
            ok: false,
            error: None,
            numerical: false,
            t_end: 0.0,
            samples: 0,
            accepted_steps: 0,
            rejected_steps: 0,
            fallback_events: 0,
            max_constraint_residual: None,
            analysis_error: None,
            circle: None,
            control: None,
            turn: None,
            trajectory_file: None,
        }
    }
}

pub struct RunOutcome {
    pub record: RunRecord,
    pub trajectory: Option<Trajectory>,
}

fn controller_plan(speed: f64, beta_des_deg: f64, gamma: f64, delta: f64, preamble: f64, duration: f64) -> ManeuverPlan {
    let beta = beta_des_deg.to_radians();
    let mut segments = vec![];
    if preamble > 0.0 {
        segments.push(Segment::timed("wobbly", preamble, speed, beta).with_blend(0.0, 1.0));
    }
    segments.push(Segment::timed("controlled", duration - preamble, speed, beta).with_blend(gamma, delta));
    ManeuverPlan { segments }
}

fn simulate(scn: &Scenario, spec: &RunSpec, robot: &Robot) -> spherebot_core::Result<Trajectory> {
    let x0 = steady_circle_state(spec.initial.beta_deg.to_radians(), spec.initial.speed, robot)?;
    let config = ControllerConfig { gains: scn.gains, ..Default::default() };
    match &spec.source {
        Source::Hold => integrate_labeled(robot, &x0, &mut pendulum_hold(), (0.0, spec.duration), &scn.integrator, &spec.label),
        Source::Controller { speed, beta_des_deg, gamma, delta, preamble } => {
            let plan = controller_plan(*speed, *beta_des_deg, *gamma, *delta, *preamble, spec.duration);
            run_maneuver(robot, &plan, &config, &x0, &scn.integrator)
        }
        Source::Maneuver { plan } => run_maneuver(robot, plan, &config, &x0, &scn.integrator),
    }
}

fn analyse_hold(spec: &RunSpec, traj: &Trajectory, robot: &Robot) -> spherebot_core::Result<Option<CircleRecord>> {
    let beta = spec.initial.beta_deg.to_radians();
    if beta == 0.0 {
        return Ok(None);
    }
    let m = measure_circle(traj)?;
    Ok(Some(CircleRecord {
        measured: m.metrics(),
        predicted: predict_circle_metrics(beta, spec.initial.speed, robot)?,
        precession_at_mean_theta: precession_rate(m.mean_theta, m.mean_psi_dot, robot),
        mean_theta: m.mean_theta,
        mean_beta: m.mean_beta,
        fit_residual: m.fit.residual,
        periods: m.periods,
    }))
}

fn analyse_control(traj: &Trajectory, speed: f64, beta_des_deg: f64, preamble: f64, robot: &Robot) -> spherebot_core::Result<ControlRecord> {
    let end = traj.t_end();
    let start = if end - preamble > 2.0 * CONTROL_SETTLE { preamble + CONTROL_SETTLE } else { 0.5 * (preamble + end) };
    let post: Vec<_> = traj.window(start, end).filter(|s| s.on_grid).collect();
    let pts: Vec<[f64; 2]> = post.iter().map(|s| [s.state.x, s.state.z]).collect();
    let fit = fit_circle(&pts)?;
    let mean_beta = post.iter().map(|s| s.state.beta).sum::<f64>() / post.len().max(1) as f64;
    let beta = beta_des_deg.to_radians();
    Ok(ControlRecord {
        window: [start, end],
        p2p_theta_dot: peak_to_peak(post.iter().map(|s| s.state.dtheta)),
        fitted_radius: fit.radius,
        amplitude: measure_circle_window(traj, start, end).ok().map(|m| m.amplitude),
        predicted_amplitude: wobble_amplitude(beta, speed, robot),
        predicted_radius: radius_of_curvature(beta, speed, robot).value().map(f64::abs),
        mean_beta_deg: mean_beta.to_degrees(),
    })
}

fn analyse_turn(traj: &Trajectory) -> TurnRecord {
    let end = traj.t_end();
    let start = (end - SETTLE_TAIL).max(traj.t_start());
    let tail: Vec<_> = traj.window(start, end).collect();
    let arc = traj.meta.segments.iter().rev().find(|s| s.beta_des != 0.0);
    let arc_p2p = arc.map(|a| {
        let mid = 0.5 * (a.t_start + a.t_end);
        peak_to_peak(traj.window(mid, a.t_end).map(|s| s.state.dtheta))
    });
    TurnRecord {
        settle_window: [start, end],
        max_abs_theta_deg: tail.iter().map(|s| s.state.theta.abs()).fold(0.0, f64::max).to_degrees(),
        max_abs_phi_dot: tail.iter().map(|s| s.state.dphi.abs()).fold(0.0, f64::max),
        arc_p2p_theta_dot: arc_p2p,
        metrics: turn_metrics(traj).ok(),
    }
}

/// Runs one spec; simulation failures are recorded, not propagated.
pub fn execute(scn: &Scenario, spec: &RunSpec) -> RunOutcome {
    let mut record = RunRecord::new(spec);
    let robot = match Robot::new(scn.params) {
        Ok(r) => r,
        Err(e) => {
            record.error = Some(e.to_string());
            return RunOutcome { record, trajectory: None };
        }
    };
    info!("{}: running {}", scn.name, spec.label);
    let traj = match simulate(scn, spec, &robot) {
        Ok(t) => t,
        Err(e) => {
            warn!("{}: {} failed: {e}", scn.name, spec.label);
            record.numerical = e.is_numerical();
            record.error = Some(e.to_string());
            return RunOutcome { record, trajectory: None };
        }
    };
    record.ok = true;
    record.t_end = traj.t_end();
    record.samples = traj.len();
    record.accepted_steps = traj.meta.accepted_steps;
    record.rejected_steps = traj.meta.rejected_steps;
    record.fallback_events = traj.meta.fallback_events;
    record.max_constraint_residual = Some(constraint_drift(&traj));
    match &spec.source {
        Source::Hold => match analyse_hold(spec, &traj, &robot) {
            Ok(c) => record.circle = c,
            Err(e) => record.analysis_error = Some(e.to_string()),
        },
        Source::Controller { speed, beta_des_deg, preamble, .. } => {
            match analyse_control(&traj, *speed, *beta_des_deg, *preamble, &robot) {
                Ok(c) => record.control = Some(c),
                Err(e) => record.analysis_error = Some(e.to_string()),
            }
        }
        Source::Maneuver { .. } => record.turn = Some(analyse_turn(&traj)),
    }
    RunOutcome { record, trajectory: Some(traj) }
}

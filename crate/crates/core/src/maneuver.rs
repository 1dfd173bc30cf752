//! Segment-by-segment closed-loop runs: straight lines, arcs and the
//! protocols built from them.

use serde::{Deserialize, Serialize};

use crate::analysis::radius_of_curvature;
use crate::controller::{BlendedController, ControllerConfig, ControllerGains, Setpoints};
use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::measure::fit_circle;
use crate::params::Robot;
use crate::simulator::{integrate_labeled, SegmentRecord, Trajectory};
use crate::state::State;

/// Chunk length used while watching for a heading exit, s.
const HEADING_CHUNK: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SegmentExit {
    /// Run for this many seconds.
    Duration { seconds: f64 },
    /// Run until the heading has changed by `delta_phi` (rad, either sign
    /// counts) or `timeout` seconds have passed.
    HeadingChange { delta_phi: f64, timeout: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(default)]
    pub label: String,
    pub exit: SegmentExit,
    pub psi_dot_des: f64,
    /// rad.
    pub beta_des: f64,
    /// `(γ, δ)` for this segment; the plan's gains otherwise.
    #[serde(default)]
    pub blend: Option<(f64, f64)>,
}

impl Segment {
    pub fn timed(label: &str, seconds: f64, psi_dot_des: f64, beta_des: f64) -> Self {
        Self {
            label: label.into(),
            exit: SegmentExit::Duration { seconds },
            psi_dot_des,
            beta_des,
            blend: None,
        }
    }

    pub fn with_blend(mut self, gamma: f64, delta: f64) -> Self {
        self.blend = Some((gamma, delta));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverPlan {
    pub segments: Vec<Segment>,
}

impl ManeuverPlan {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidController("maneuver plan has no segments".into()));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            let ok = match seg.exit {
                SegmentExit::Duration { seconds } => seconds.is_finite() && seconds > 0.0,
                SegmentExit::HeadingChange { delta_phi, timeout } => {
                    delta_phi.is_finite() && delta_phi != 0.0 && timeout.is_finite() && timeout > 0.0
                }
            };
            if !ok || !seg.psi_dot_des.is_finite() || !seg.beta_des.is_finite() {
                return Err(Error::InvalidController(format!("segment {k} is malformed")));
            }
            if let Some((g, d)) = seg.blend {
                ControllerGains::with_blend(g, d).validate()?;
            }
        }
        Ok(())
    }

    /// Straight, arc at `beta_arc`, straight; each timed.
    pub fn turn(psi_dot: f64, beta_arc: f64, straight: f64, arc: f64, exit_straight: f64) -> Self {
        Self {
            segments: vec![
                Segment::timed("straight", straight, psi_dot, 0.0),
                Segment::timed("arc", arc, psi_dot, beta_arc),
                Segment::timed("straight", exit_straight, psi_dot, 0.0),
            ],
        }
    }

    /// Worst-case duration, s.
    pub fn max_duration(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match s.exit {
                SegmentExit::Duration { seconds } => seconds,
                SegmentExit::HeadingChange { timeout, .. } => timeout,
            })
            .sum()
    }
}

fn segment_controller(robot: &Robot, config: &ControllerConfig, seg: &Segment) -> Result<BlendedController> {
    let mut cfg = *config;
    if let Some((g, d)) = seg.blend {
        cfg.gains.gamma = g;
        cfg.gains.delta = d;
    }
    BlendedController::new(*robot, cfg, Setpoints::new(seg.psi_dot_des, seg.beta_des))
}

fn run_segment(
    robot: &Robot,
    config: &ControllerConfig,
    seg: &Segment,
    x0: &State,
    t0: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut controller = segment_controller(robot, config, seg)?;
    let mut traj = match seg.exit {
        SegmentExit::Duration { seconds } => {
            integrate_labeled(robot, x0, &mut controller, (t0, t0 + seconds), cfg, &seg.label)?
        }
        SegmentExit::HeadingChange { delta_phi, timeout } => {
            let target = delta_phi.abs();
            let phi0 = x0.phi;
            let mut out = Trajectory::new(*robot, *cfg, seg.label.clone());
            let mut t = t0;
            let mut state = *x0;
            while t < t0 + timeout {
                let t_next = (t + HEADING_CHUNK).min(t0 + timeout);
                let chunk = integrate_labeled(robot, &state, &mut controller, (t, t_next), cfg, &seg.label)?;
                let hit = chunk.samples.iter().position(|s| (s.state.phi - phi0).abs() >= target);
                let chunk = match hit {
                    Some(0) | None => chunk,
                    Some(k) => {
                        // rerun up to the interpolated crossing time
                        let (a, b) = (&chunk.samples[k - 1], &chunk.samples[k]);
                        let (da, db) = ((a.state.phi - phi0).abs(), (b.state.phi - phi0).abs());
                        let frac = if db > da { (target - da) / (db - da) } else { 1.0 };
                        let t_hit = a.t + frac.clamp(0.0, 1.0) * (b.t - a.t);
                        if t_hit > t {
                            integrate_labeled(robot, &state, &mut controller, (t, t_hit), cfg, &seg.label)?
                        } else {
                            chunk
                        }
                    }
                };
                t = chunk.t_end();
                state = chunk.last().map_or(state, |s| s.state);
                out.extend(chunk);
                if hit.is_some() {
                    break;
                }
            }
            out
        }
    };
    traj.meta.fallback_events = controller.fallback_events;
    Ok(traj)
}

/// Runs every segment in order from `x0` starting at t = 0. Segment
/// boundaries and blends go into the trajectory metadata.
pub fn run_maneuver(
    robot: &Robot,
    plan: &ManeuverPlan,
    config: &ControllerConfig,
    x0: &State,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    plan.validate()?;
    let mut out = Trajectory::new(*robot, *cfg, "maneuver");
    let mut state = *x0;
    let mut t = 0.0;
    for (index, seg) in plan.segments.iter().enumerate() {
        let traj = run_segment(robot, config, seg, &state, t, cfg)
            .map_err(|e| Error::Segment { segment: index, source: Box::new(e) })?;
        let (gamma, delta) = seg.blend.unwrap_or((config.gains.gamma, config.gains.delta));
        let record = SegmentRecord {
            index,
            label: seg.label.clone(),
            t_start: t,
            t_end: traj.t_end(),
            psi_dot_des: seg.psi_dot_des,
            beta_des: seg.beta_des,
            gamma,
            delta,
        };
        t = traj.t_end();
        state = traj.last().map_or(state, |s| s.state);
        out.extend(traj);
        out.meta.segments.push(record);
    }
    Ok(out)
}

/// Fraction of the arc skipped before its circle is fitted.
pub const ARC_SETTLE_FRACTION: f64 = 0.25;
/// Fraction of the exit straight used for its heading.
pub const EXIT_TAIL_FRACTION: f64 = 0.3;

/// What a straight → arc → straight run did at the arc-to-straight switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnMetrics {
    pub beta_des: f64,
    pub toggle_time: f64,
    /// Angle between the fitted arc's tangent at the toggle point and the
    /// final straight heading, rad, non-negative.
    pub heading_deflection: f64,
    /// Fitted arc radius, m.
    pub arc_radius: f64,
    /// Closed-form radius at the arc setpoints, m.
    pub predicted_radius: f64,
    pub radius_error_pct: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

/// Extracts [`TurnMetrics`] from a maneuver whose segment metadata contains a
/// leaning arc followed by an upright straight.
pub fn turn_metrics(traj: &Trajectory) -> Result<TurnMetrics> {
    let segs = &traj.meta.segments;
    let k = (0..segs.len().saturating_sub(1))
        .rev()
        .find(|&k| segs[k].beta_des != 0.0 && segs[k + 1].beta_des == 0.0)
        .ok_or_else(|| Error::InsufficientData("no arc followed by a straight in the segment record".into()))?;
    let (arc, exit) = (&segs[k], &segs[k + 1]);
    let fit_start = arc.t_start + ARC_SETTLE_FRACTION * (arc.t_end - arc.t_start);
    let pts: Vec<[f64; 2]> = traj.window(fit_start, arc.t_end).map(|s| [s.state.x, s.state.z]).collect();
    let fit = fit_circle(&pts)?;

    let at_toggle = traj
        .samples
        .iter()
        .min_by(|a, b| (a.t - arc.t_end).abs().total_cmp(&(b.t - arc.t_end).abs()))
        .ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let p = [at_toggle.state.x - fit.center[0], at_toggle.state.z - fit.center[1]];
    let v = [at_toggle.state.dx, at_toggle.state.dz];
    // tangent to the fitted circle, oriented with the motion
    let mut tangent = [-p[1], p[0]];
    if tangent[0] * v[0] + tangent[1] * v[1] < 0.0 {
        tangent = [p[1], -p[0]];
    }

    let tail_start = exit.t_end - EXIT_TAIL_FRACTION * (exit.t_end - exit.t_start);
    let mut tail = traj.window(tail_start, exit.t_end);
    let (a, b) = match (tail.next(), tail.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InsufficientData("exit straight has too few samples".into())),
    };
    let exit_heading = (b.state.z - a.state.z).atan2(b.state.x - a.state.x);
    let deflection = wrap_angle(exit_heading - tangent[1].atan2(tangent[0])).abs();

    let predicted = radius_of_curvature(arc.beta_des, arc.psi_dot_des, &traj.meta.robot)
        .value()
        .ok_or_else(|| Error::InsufficientData("arc setpoints predict a straight path".into()))?
        .abs();
    Ok(TurnMetrics {
        beta_des: arc.beta_des,
        toggle_time: arc.t_end,
        heading_deflection: deflection,
        arc_radius: fit.radius,
        predicted_radius: predicted,
        radius_error_pct: 100.0 * (fit.radius - predicted).abs() / predicted,
    })
}

//! Time integration of the closed- or open-loop robot, steady-circle initial
//! conditions, trajectories and their CSV export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::wobble_frequency;
use crate::dynamics::{enforce_rolling, project_rolling, rolling_residual, Actuation, ControlInput, EomSystem};
use crate::error::{Error, Result};
use crate::integrator::{self, IntegratorConfig, Sample, StepHooks};
use crate::kinematics::energies;
use crate::params::Robot;
use crate::state::{State, StateVector, STATE_NAMES};

/// Minimum output samples per predicted wobble period.
pub const SAMPLES_PER_WOBBLE: f64 = 50.0;

/// Supplies the actuation at each derivative evaluation. The factorized
/// equations of motion are handed in so controllers can read `f` and `G`
/// without a second solve.
pub trait TorqueSource {
    fn actuation(&mut self, t: f64, state: &State, eom: &EomSystem) -> Result<Actuation>;
}

impl TorqueSource for Actuation {
    fn actuation(&mut self, _t: f64, _state: &State, _eom: &EomSystem) -> Result<Actuation> {
        Ok(*self)
    }
}

impl TorqueSource for ControlInput {
    fn actuation(&mut self, _t: f64, _state: &State, _eom: &EomSystem) -> Result<Actuation> {
        Ok(Actuation::torques(*self))
    }
}

impl<F> TorqueSource for F
where
    F: FnMut(f64, &State, &EomSystem) -> Result<Actuation>,
{
    fn actuation(&mut self, t: f64, state: &State, eom: &EomSystem) -> Result<Actuation> {
        self(t, state, eom)
    }
}

/// Zero rolling torque with the pendulum held rigidly at its current angle:
/// the open-loop configuration for steady circular motion.
pub fn pendulum_hold() -> Actuation {
    Actuation::pendulum_hold()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: State,
    pub u: ControlInput,
    /// True for uniform-grid samples, false for extra accepted-step samples.
    pub on_grid: bool,
}

/// Boundaries of one maneuver segment inside a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub label: String,
    pub t_start: f64,
    pub t_end: f64,
    pub psi_dot_des: f64,
    pub beta_des: f64,
    pub gamma: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub label: String,
    pub robot: Robot,
    pub config: IntegratorConfig,
    pub segments: Vec<SegmentRecord>,
    /// Controller evaluations that fell back from the wobble torque.
    pub fallback_events: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(robot: Robot, config: IntegratorConfig, label: impl Into<String>) -> Self {
        Self {
            samples: Vec::new(),
            meta: TrajectoryMeta {
                label: label.into(),
                robot,
                config,
                segments: Vec::new(),
                fallback_events: 0,
                accepted_steps: 0,
                rejected_steps: 0,
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn first(&self) -> Option<&TrajectorySample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn t_start(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.t)
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Uniform-grid samples only.
    pub fn grid(&self) -> impl Iterator<Item = &TrajectorySample> {
        self.samples.iter().filter(|s| s.on_grid)
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> impl Iterator<Item = &TrajectorySample> {
        self.samples.iter().filter(move |s| s.t >= t0 && s.t <= t1)
    }

    /// Appends another trajectory that starts where this one ends; the
    /// duplicated junction sample is dropped.
    pub fn extend(&mut self, other: Trajectory) {
        let mut iter = other.samples.into_iter().peekable();
        if let (Some(last), Some(next)) = (self.samples.last(), iter.peek()) {
            if next.t == last.t {
                iter.next();
            }
        }
        self.samples.extend(iter);
        self.meta.fallback_events += other.meta.fallback_events;
        self.meta.accepted_steps += other.meta.accepted_steps;
        self.meta.rejected_steps += other.meta.rejected_steps;
        self.meta.segments.extend(other.meta.segments);
    }

    /// Total mechanical energy at each sample, J.
    pub fn energies(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| energies(&s.state, &self.meta.robot).total())
            .collect()
    }

    /// Largest absolute rolling residual at each sample, m/s.
    pub fn residuals(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| {
                let r = rolling_residual(&s.state, &self.meta.robot);
                r[0].abs().max(r[1].abs())
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t"];
        header.extend(STATE_NAMES);
        header.extend(["Ts", "Tp"]);
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = Vec::with_capacity(15);
            row.push(s.t);
            row.extend(s.state.to_array());
            row.push(s.u.t_s);
            row.push(s.u.t_p);
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads a trajectory CSV back. Metadata is not part of the file, so the
    /// caller supplies the robot.
    pub fn read_csv<R: std::io::Read>(reader: R, robot: Robot) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut traj = Trajectory::new(robot, IntegratorConfig::default(), "imported");
        for record in r.records() {
            let record = record?;
            if record.len() != 15 {
                return Err(Error::InsufficientData(format!(
                    "expected 15 columns, found {}",
                    record.len()
                )));
            }
            let mut v = [0.0; 15];
            for (slot, field) in v.iter_mut().zip(record.iter()) {
                *slot = field.trim().parse().map_err(|_| {
                    Error::InsufficientData(format!("unparsable value {field:?}"))
                })?;
            }
            let mut x = [0.0; 12];
            x.copy_from_slice(&v[1..13]);
            traj.samples.push(TrajectorySample {
                t: v[0],
                state: State::from_array(x),
                u: ControlInput::new(v[13], v[14]),
                on_grid: true,
            });
        }
        Ok(traj)
    }

    pub fn load_csv(path: impl AsRef<Path>, robot: Robot) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?), robot)
    }
}

/// Maximum rolling-constraint residual over the trajectory, m/s.
pub fn constraint_drift(traj: &Trajectory) -> f64 {
    traj.residuals().into_iter().fold(0.0, f64::max)
}

/// Given pendulum angle and spin rate, everything else zero, then the
/// translational rates set to satisfy rolling.
pub fn steady_circle_state(beta: f64, psi_dot: f64, robot: &Robot) -> Result<State> {
    if !(beta.abs() < std::f64::consts::FRAC_PI_2) || !psi_dot.is_finite() {
        return Err(Error::ParameterDomain(format!(
            "steady circle needs |beta| < 90 deg and finite speed, got beta = {beta}, psi_dot = {psi_dot}"
        )));
    }
    let mut s = State { beta, dpsi: psi_dot, ..State::default() };
    enforce_rolling(&mut s, robot);
    Ok(s)
}

struct ClosedLoop<'a, S: ?Sized> {
    robot: &'a Robot,
    source: &'a mut S,
    cfg: &'a IntegratorConfig,
}

impl<S: TorqueSource + ?Sized> ClosedLoop<'_, S> {
    fn torques(&mut self, t: f64, s: &State) -> Result<(EomSystem, ControlInput)> {
        let eom = EomSystem::new(s, self.robot)?;
        let act = self.source.actuation(t, s, &eom)?;
        let u = eom.resolve(&act);
        if !u.is_finite() {
            return Err(Error::NonFiniteDerivative { t, state: s.to_array() });
        }
        Ok((eom, u))
    }
}

impl<S: TorqueSource + ?Sized> StepHooks for ClosedLoop<'_, S> {
    fn derivative(&mut self, t: f64, x: &StateVector) -> Result<StateVector> {
        let s = State::from_vector(x);
        let (eom, u) = self.torques(t, &s)?;
        Ok(eom.derivative(u))
    }

    fn after_step(&mut self, t: f64, x: &mut StateVector) -> Result<bool> {
        let mut s = State::from_vector(x);
        let mut changed = false;
        if self.cfg.project_constraints {
            project_rolling(&mut s, self.robot);
            *x = s.to_vector();
            changed = true;
        }
        if let Some(bound) = self.cfg.drift_bound {
            let r = rolling_residual(&s, self.robot);
            let drift = r[0].abs().max(r[1].abs());
            if drift > bound {
                return Err(Error::ConstraintDrift { t, drift, bound });
            }
        }
        Ok(changed)
    }
}

/// Grid spacing that resolves the predicted wobble at this speed.
fn output_interval(robot: &Robot, x0: &State, cfg: &IntegratorConfig) -> f64 {
    match wobble_frequency(x0.dpsi, robot) {
        Ok(omega) if omega > 0.0 => {
            let period = 2.0 * std::f64::consts::PI / omega;
            cfg.output_interval.min(period / SAMPLES_PER_WOBBLE)
        }
        _ => cfg.output_interval,
    }
}

/// Integrates from `x0` over `t_span = (t0, t1)`.
pub fn integrate<S: TorqueSource + ?Sized>(
    robot: &Robot,
    x0: &State,
    source: &mut S,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_labeled(robot, x0, source, t_span, cfg, "run")
}

pub fn integrate_labeled<S: TorqueSource + ?Sized>(
    robot: &Robot,
    x0: &State,
    source: &mut S,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    label: &str,
) -> Result<Trajectory> {
    if !x0.is_finite() {
        return Err(Error::NonFiniteDerivative { t: t_span.0, state: x0.to_array() });
    }
    let mut effective = *cfg;
    effective.output_interval = output_interval(robot, x0, cfg);
    let mut hooks = ClosedLoop { robot, source, cfg: &effective };
    let (raw, stats) = integrator::integrate(&mut hooks, t_span.0, x0.to_vector(), t_span.1, &effective)?;
    let mut traj = Trajectory::new(*robot, effective, label);
    traj.meta.accepted_steps = stats.accepted;
    traj.meta.rejected_steps = stats.rejected;
    traj.samples.reserve(raw.len());
    for Sample { t, x, on_grid } in raw {
        let state = State::from_vector(&x);
        let (_, u) = hooks.torques(t, &state)?;
        traj.samples.push(TrajectorySample { t, state, u, on_grid });
    }
    Ok(traj)
}

/// An integration that advances in caller-sized slices, restarting the
/// integrator at each slice boundary. Offline replays and live sessions
/// share it so their samples coincide.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub robot: Robot,
    pub config: IntegratorConfig,
    pub t: f64,
    pub state: State,
}

impl Simulation {
    pub fn new(robot: Robot, state: State, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { robot, config, t: 0.0, state })
    }

    /// Advances by `dt` and returns the samples after the current time.
    pub fn advance<S: TorqueSource + ?Sized>(&mut self, dt: f64, source: &mut S) -> Result<Trajectory> {
        let mut cfg = self.config;
        cfg.record_steps = false;
        cfg.output_interval = cfg.output_interval.max(dt);
        let mut traj = integrate(&self.robot, &self.state, source, (self.t, self.t + dt), &cfg)?;
        traj.samples.remove(0);
        if let Some(last) = traj.samples.last() {
            self.t = last.t;
            self.state = last.state;
        }
        Ok(traj)
    }
}

/// Runs `(t1 - t0) / slice` slices through [`Simulation::advance`].
pub fn integrate_sliced<S: TorqueSource + ?Sized>(
    robot: &Robot,
    x0: &State,
    source: &mut S,
    t_span: (f64, f64),
    slice: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if !(slice > 0.0) || !(t_span.1 > t_span.0) {
        return Err(Error::InvalidConfig("sliced integration needs slice > 0 and t1 > t0".into()));
    }
    let mut sim = Simulation::new(*robot, *x0, *cfg)?;
    sim.t = t_span.0;
    let mut out = Trajectory::new(*robot, *cfg, "sliced");
    let eom = EomSystem::new(x0, robot)?;
    let u0 = eom.resolve(&source.actuation(t_span.0, x0, &eom)?);
    out.samples.push(TrajectorySample { t: t_span.0, state: *x0, u: u0, on_grid: true });
    let steps = ((t_span.1 - t_span.0) / slice).round() as u64;
    for _ in 0..steps {
        let chunk = sim.advance(slice, source)?;
        out.meta.accepted_steps += chunk.meta.accepted_steps;
        out.meta.rejected_steps += chunk.meta.rejected_steps;
        out.samples.extend(chunk.samples);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ControlInput;
    use crate::integrator::Method;

    #[test]
    fn steady_circle_construction() {
        let robot = Robot::default();
        let s = steady_circle_state(15f64.to_radians(), -1.0, &robot).unwrap();
        assert!((s.beta - 0.2617993877991494).abs() < 1e-15);
        assert_eq!(s.dpsi, -1.0);
        assert!((s.dx - robot.params.r_h).abs() < 1e-15);
        assert_eq!(s.dz, 0.0);
        assert_eq!(steady_circle_state(0.0, 0.0, &robot).unwrap(), State::rest());
        let s = steady_circle_state(5f64.to_radians(), -10.0, &robot).unwrap();
        let r = rolling_residual(&s, &robot);
        assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
        assert!(steady_circle_state(2.0, 1.0, &robot).is_err());
    }

    #[test]
    fn equilibrium_stays_put() {
        let robot = Robot::default();
        let cfg = IntegratorConfig::default();
        let mut zero = ControlInput::ZERO;
        let traj = integrate(&robot, &State::rest(), &mut zero, (0.0, 10.0), &cfg).unwrap();
        assert_eq!(traj.t_end(), 10.0);
        for s in &traj.samples {
            assert!(s.state.max_abs() <= cfg.atol);
        }
        assert_eq!(traj.grid().count(), 2001);
    }

    #[test]
    fn drift_of_corrupted_sample() {
        let robot = Robot::default();
        let s = steady_circle_state(0.1, -2.0, &robot).unwrap();
        let mut traj = Trajectory::new(robot, IntegratorConfig::default(), "synthetic");
        for k in 0..5 {
            traj.samples.push(TrajectorySample { t: k as f64, state: s, u: ControlInput::ZERO, on_grid: true });
        }
        assert!(constraint_drift(&traj) < 1e-15);
        traj.samples[3].state.dx += 0.1;
        assert!((constraint_drift(&traj) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn samples_strictly_increase_and_stay_consistent() {
        let robot = Robot::default();
        let x0 = steady_circle_state(15f64.to_radians(), -1.0, &robot).unwrap();
        let traj = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 5.0), &IntegratorConfig::default()).unwrap();
        for w in traj.samples.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        assert!(traj.samples.iter().all(|s| s.state.is_finite()));
        // the hold keeps beta fixed
        for s in &traj.samples {
            assert!((s.state.beta - x0.beta).abs() < 1e-6);
        }
        assert!(constraint_drift(&traj) < 1e-7);
    }

    #[test]
    fn halving_rtol_is_self_consistent() {
        let robot = Robot::default();
        let x0 = steady_circle_state(15f64.to_radians(), -1.0, &robot).unwrap();
        let cfg = IntegratorConfig::with_tolerances(1e-8, 1e-10);
        let fine = IntegratorConfig::with_tolerances(5e-9, 5e-11);
        let a = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 5.0), &cfg).unwrap();
        let b = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 5.0), &fine).unwrap();
        let da = a.last().unwrap().state.to_vector();
        let db = b.last().unwrap().state.to_vector();
        let scale = da.map(|v| cfg.atol + cfg.rtol * v.abs());
        let worst = (da - db).component_div(&scale).amax();
        // error is accumulated over many steps, bounded by 10x toleranced units per unit time
        assert!(worst < 10.0 * 5.0 * 10.0, "{worst}");
    }

    #[test]
    fn deterministic_runs() {
        let robot = Robot::default();
        let x0 = steady_circle_state(0.2, -3.0, &robot).unwrap();
        let cfg = IntegratorConfig::default();
        let a = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 2.0), &cfg).unwrap();
        let b = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 2.0), &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn sliced_matches_repeated_advance() {
        let robot = Robot::default();
        let x0 = steady_circle_state(0.1, -1.0, &robot).unwrap();
        let cfg = IntegratorConfig::default();
        let traj = integrate_sliced(&robot, &x0, &mut pendulum_hold(), (0.0, 0.5), 0.005, &cfg).unwrap();
        assert_eq!(traj.len(), 101);
        let mut sim = Simulation::new(robot, x0, cfg).unwrap();
        for k in 0..100 {
            let chunk = sim.advance(0.005, &mut pendulum_hold()).unwrap();
            assert_eq!(chunk.samples.last().unwrap().state, traj.samples[k + 1].state);
        }
    }

    #[test]
    fn csv_round_trip() {
        let robot = Robot::default();
        let x0 = steady_circle_state(0.1, -1.0, &robot).unwrap();
        let traj = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 0.2), &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,phi,theta,psi,beta,X,Z,dphi,dtheta,dpsi,dbeta,dX,dZ,Ts,Tp\n"));
        let back = Trajectory::read_csv(buf.as_slice(), robot).unwrap();
        assert_eq!(back.len(), traj.len());
        for (a, b) in back.samples.iter().zip(&traj.samples) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.state, b.state);
            assert_eq!(a.u, b.u);
        }
    }

    #[test]
    fn implicit_fallback_agrees() {
        let robot = Robot::default();
        let x0 = steady_circle_state(0.1, -1.0, &robot).unwrap();
        let explicit = IntegratorConfig::default();
        let implicit = IntegratorConfig { method: Method::Sdirk2, ..IntegratorConfig::with_tolerances(1e-7, 1e-9) };
        let a = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 1.0), &explicit).unwrap();
        let b = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 1.0), &implicit).unwrap();
        let d = a.last().unwrap().state.to_vector() - b.last().unwrap().state.to_vector();
        assert!(d.amax() < 1e-4, "{}", d.amax());
    }

    #[test]
    fn drift_bound_aborts() {
        let robot = Robot::default();
        let mut x0 = steady_circle_state(0.1, -1.0, &robot).unwrap();
        x0.dx += 0.01;
        let cfg = IntegratorConfig { drift_bound: Some(1e-3), ..Default::default() };
        let err = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 1.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::ConstraintDrift { .. }), "{err}");
        let projected = IntegratorConfig { project_constraints: true, ..cfg };
        let traj = integrate(&robot, &x0, &mut pendulum_hold(), (0.0, 1.0), &projected).unwrap();
        // grid points inside the first step come from the unprojected interpolant
        let late: Vec<f64> = traj.samples.iter().filter(|s| s.t > 0.1).map(|s| {
            let r = rolling_residual(&s.state, &robot);
            r[0].abs().max(r[1].abs())
        }).collect();
        assert!(late.iter().all(|&r| r < 1e-9), "{late:?}");
    }
}

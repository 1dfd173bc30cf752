//! Adaptive one-step integrators over the 12-dimensional state.
//!
//! Dormand–Prince 5(4) with its 4th-order continuous extension is the
//! default. A two-stage L-stable SDIRK with Newton iterations on a
//! finite-difference Jacobian is the implicit fallback.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StateVector;

/// Any state entry beyond this magnitude aborts the run.
pub const BLOW_UP_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Dopri5,
    Sdirk2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the internal step, s.
    pub max_step: f64,
    pub method: Method,
    /// Spacing of the dense output grid, s. Accepted steps are always kept.
    pub output_interval: f64,
    /// Keep the accepted-step samples in addition to the grid.
    pub record_steps: bool,
    /// Re-impose the rolling constraints after every accepted step.
    pub project_constraints: bool,
    /// Abort when the rolling residual exceeds this, m/s.
    pub drift_bound: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: 0.05,
            method: Method::Dopri5,
            output_interval: 1.0 / 200.0,
            record_steps: true,
            project_constraints: false,
            drift_bound: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::InvalidConfig(format!("rtol must lie in (0, 1), got {}", self.rtol)));
        }
        if !(self.atol > 0.0) {
            return Err(Error::InvalidConfig(format!("atol must be positive, got {}", self.atol)));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidConfig("max_step must be positive".into()));
        }
        if !(self.output_interval > 0.0) {
            return Err(Error::InvalidConfig("output_interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// One output point; `on_grid` separates uniform-grid samples from
/// accepted-step samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: StateVector,
    pub on_grid: bool,
}

/// Hooks the simulator plugs into the stepping loop.
pub trait StepHooks {
    fn derivative(&mut self, t: f64, x: &StateVector) -> Result<StateVector>;

    /// Called on each accepted state; may modify it (constraint projection).
    /// Returns true when the state was changed.
    fn after_step(&mut self, _t: f64, _x: &mut StateVector) -> Result<bool> {
        Ok(false)
    }
}

impl<F> StepHooks for F
where
    F: FnMut(f64, &StateVector) -> Result<StateVector>,
{
    fn derivative(&mut self, t: f64, x: &StateVector) -> Result<StateVector> {
        self(t, x)
    }
}

/// Integrates from `t0` to `t1` (either direction). The first sample is the
/// initial state, the last is the state at `t1`.
pub fn integrate<H: StepHooks>(
    hooks: &mut H,
    t0: f64,
    x0: StateVector,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<Sample>, Stats)> {
    cfg.validate()?;
    check_state(t0, &x0)?;
    let mut out = Vec::new();
    out.push(Sample { t: t0, x: x0, on_grid: true });
    if t1 == t0 {
        return Ok((out, Stats::default()));
    }
    match cfg.method {
        Method::Dopri5 => Dopri5::run(hooks, t0, x0, t1, cfg, &mut out),
        Method::Sdirk2 => sdirk2(hooks, t0, x0, t1, cfg, &mut out),
    }
    .map(|stats| (out, stats))
}

fn check_state(t: f64, x: &StateVector) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDerivative { t, state: to_array(x) });
    }
    if x.iter().any(|v| v.abs() > BLOW_UP_BOUND) {
        return Err(Error::BlowUp { t, bound: BLOW_UP_BOUND, state: to_array(x) });
    }
    Ok(())
}

fn checked_derivative<H: StepHooks>(
    hooks: &mut H,
    t: f64,
    x: &StateVector,
    stats: &mut Stats,
) -> Result<StateVector> {
    stats.evaluations += 1;
    let d = hooks.derivative(t, x)?;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDerivative { t, state: to_array(x) });
    }
    Ok(d)
}

pub(crate) fn to_array(x: &StateVector) -> [f64; 12] {
    let mut a = [0.0; 12];
    a.copy_from_slice(x.as_slice());
    a
}

fn error_norm(err: &StateVector, y0: &StateVector, y1: &StateVector, cfg: &IntegratorConfig) -> f64 {
    let mut sum = 0.0;
    for i in 0..12 {
        let scale = cfg.atol + cfg.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / scale;
        sum += r * r;
    }
    (sum / 12.0).sqrt()
}

/// Grid times strictly inside `(ta, tb]` in the direction of integration.
struct Grid {
    t0: f64,
    interval: f64,
    dir: f64,
    next_index: u64,
}

impl Grid {
    fn new(t0: f64, interval: f64, dir: f64) -> Self {
        Self { t0, interval, dir, next_index: 1 }
    }

    fn time(&self, k: u64) -> f64 {
        self.t0 + self.dir * self.interval * k as f64
    }

    /// Emits grid points up to and including `tb`, excluding the final time
    /// `t_end` which the caller records exactly.
    fn drain(&mut self, tb: f64, t_end: f64, mut emit: impl FnMut(f64)) {
        loop {
            let t = self.time(self.next_index);
            let before_tb = self.dir * (tb - t) >= -1e-12 * self.interval;
            let before_end = self.dir * (t_end - t) > 1e-9 * self.interval;
            if !(before_tb && before_end) {
                break;
            }
            emit(t);
            self.next_index += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<H: StepHooks>(
    hooks: &mut H,
    t0: f64,
    x0: &StateVector,
    f0: &StateVector,
    dir: f64,
    order: i32,
    cfg: &IntegratorConfig,
    stats: &mut Stats,
) -> Result<f64> {
    // Hairer, Nørsett & Wanner's starting-step heuristic
    let scale = x0.map(|v| cfg.atol + cfg.rtol * v.abs());
    let d0 = (x0.component_div(&scale).norm_squared() / 12.0).sqrt();
    let d1 = (f0.component_div(&scale).norm_squared() / 12.0).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(cfg.max_step);
    let x1 = x0 + f0 * (dir * h0);
    let f1 = checked_derivative(hooks, t0 + dir * h0, &x1, stats)?;
    let d2 = ((f1 - f0).component_div(&scale).norm_squared() / 12.0).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    Ok((100.0 * h0).min(h1).min(cfg.max_step))
}

struct Dopri5;

impl Dopri5 {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    const D: [f64; 7] = [
        -12715105075.0 / 11282082432.0,
        0.0,
        87487479700.0 / 32700410799.0,
        -10690763975.0 / 1880347072.0,
        701980252875.0 / 199316789632.0,
        -1453857185.0 / 822651844.0,
        69997945.0 / 29380423.0,
    ];

    fn run<H: StepHooks>(
        hooks: &mut H,
        t0: f64,
        x0: StateVector,
        t1: f64,
        cfg: &IntegratorConfig,
        out: &mut Vec<Sample>,
    ) -> Result<Stats> {
        let mut stats = Stats::default();
        let dir = (t1 - t0).signum();
        let span = (t1 - t0).abs();
        let mut grid = Grid::new(t0, cfg.output_interval, dir);
        let mut t = t0;
        let mut x = x0;
        let mut k1 = checked_derivative(hooks, t, &x, &mut stats)?;
        let mut h = initial_step(hooks, t, &x, &k1, dir, 5, cfg, &mut stats)?;
        let mut previous_err: f64 = 1e-4;

        loop {
            let remaining = (t1 - t).abs();
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h < 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            let hs = dir * h;

            let mut k = [StateVector::zeros(); 7];
            k[0] = k1;
            for i in 1..7 {
                let mut xi = x;
                for (j, kj) in k.iter().enumerate().take(i) {
                    let a = Self::A[i][j];
                    if a != 0.0 {
                        xi += kj * (hs * a);
                    }
                }
                if i == 6 {
                    check_state(t + hs, &xi)?;
                }
                k[i] = checked_derivative(hooks, t + Self::C[i] * hs, &xi, &mut stats)?;
            }
            let mut x_new = x;
            for j in 0..6 {
                let a = Self::A[6][j];
                if a != 0.0 {
                    x_new += k[j] * (hs * a);
                }
            }
            let mut err = StateVector::zeros();
            for j in 0..7 {
                if Self::E[j] != 0.0 {
                    err += k[j] * (hs * Self::E[j]);
                }
            }
            let en = error_norm(&err, &x, &x_new, cfg);

            if en <= 1.0 {
                stats.accepted += 1;
                let t_new = if last { t1 } else { t + hs };
                // dense-output coefficients
                let r2 = x_new - x;
                let r3 = k[0] * hs - r2;
                let r4 = r2 - k[6] * hs - r3;
                let mut r5 = StateVector::zeros();
                for j in 0..7 {
                    if Self::D[j] != 0.0 {
                        r5 += k[j] * (hs * Self::D[j]);
                    }
                }
                let x_old = x;
                grid.drain(t_new, t1, |tg| {
                    let th = (tg - t) / hs;
                    let th1 = 1.0 - th;
                    let xg = x_old + (r2 + (r3 + (r4 + r5 * th1) * th) * th1) * th;
                    out.push(Sample { t: tg, x: xg, on_grid: true });
                });

                let mut x_acc = x_new;
                let changed = hooks.after_step(t_new, &mut x_acc)?;
                check_state(t_new, &x_acc)?;
                t = t_new;
                x = x_acc;
                k1 = if changed {
                    checked_derivative(hooks, t, &x, &mut stats)?
                } else {
                    k[6]
                };
                if last {
                    out.push(Sample { t, x, on_grid: true });
                    break;
                }
                if cfg.record_steps && out.last().is_none_or(|s| s.t != t) {
                    out.push(Sample { t, x, on_grid: false });
                }
                // PI step-size control
                let en = en.max(1e-10);
                let fac = 0.9 * en.powf(-0.7 / 5.0) * previous_err.powf(0.4 / 5.0);
                previous_err = en;
                h = (h * fac.clamp(0.2, 10.0)).min(cfg.max_step);
                let _ = span;
            } else {
                stats.rejected += 1;
                let fac = 0.9 * en.powf(-0.2);
                h *= fac.clamp(0.2, 1.0);
            }
        }
        Ok(stats)
    }
}

type Matrix12 = SMatrix<f64, 12, 12>;

fn fd_jacobian<H: StepHooks>(
    hooks: &mut H,
    t: f64,
    x: &StateVector,
    fx: &StateVector,
    stats: &mut Stats,
) -> Result<Matrix12> {
    let mut j = Matrix12::zeros();
    for c in 0..12 {
        let delta = 1e-7 * x[c].abs().max(1e-3);
        let mut xp = *x;
        xp[c] += delta;
        let fp = checked_derivative(hooks, t, &xp, stats)?;
        j.set_column(c, &((fp - fx) / delta));
    }
    Ok(j)
}

fn sdirk2<H: StepHooks>(
    hooks: &mut H,
    t0: f64,
    x0: StateVector,
    t1: f64,
    cfg: &IntegratorConfig,
    out: &mut Vec<Sample>,
) -> Result<Stats> {
    let gamma = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
    let mut stats = Stats::default();
    let dir = (t1 - t0).signum();
    let mut grid = Grid::new(t0, cfg.output_interval, dir);
    let mut t = t0;
    let mut x = x0;
    let mut fx = checked_derivative(hooks, t, &x, &mut stats)?;
    let mut h = initial_step(hooks, t, &x, &fx, dir, 2, cfg, &mut stats)?;
    let mut jac = fd_jacobian(hooks, t, &x, &fx, &mut stats)?;

    'steps: loop {
        let remaining = (t1 - t).abs();
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) && !last {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let hs = dir * h;
        let iteration = Matrix12::identity() - jac * (hs * gamma);
        let Some(lu) = Some(iteration.lu()).filter(|lu| lu.is_invertible()) else {
            h *= 0.5;
            continue;
        };

        // stage values Y_i solve Y_i = base_i + hγ f(Y_i)
        let mut stages = [StateVector::zeros(); 2];
        let mut slopes = [StateVector::zeros(); 2];
        for i in 0..2 {
            let base = if i == 0 { x } else { x + slopes[0] * (hs * (1.0 - gamma)) };
            let ti = t + if i == 0 { gamma * hs } else { hs };
            let mut y = if i == 0 { x + fx * (gamma * hs) } else { base + slopes[0] * (gamma * hs) };
            let mut converged = false;
            for _ in 0..8 {
                let fy = checked_derivative(hooks, ti, &y, &mut stats)?;
                let g = y - base - fy * (hs * gamma);
                let dy = lu.solve(&(-g)).unwrap_or_else(StateVector::zeros);
                y += dy;
                if error_norm(&dy, &y, &y, cfg) < 1e-3 {
                    converged = true;
                    break;
                }
            }
            if !converged {
                stats.rejected += 1;
                h *= 0.5;
                jac = fd_jacobian(hooks, t, &x, &fx, &mut stats)?;
                continue 'steps;
            }
            stages[i] = y;
            slopes[i] = checked_derivative(hooks, ti, &y, &mut stats)?;
        }
        let x_new = stages[1];
        // filtered so stiff components do not force tiny steps
        let raw = (slopes[1] - slopes[0]) * (hs * gamma);
        let err = lu.solve(&raw).unwrap_or(raw);
        let en = error_norm(&err, &x, &x_new, cfg);
        if en <= 1.0 {
            stats.accepted += 1;
            let t_new = if last { t1 } else { t + hs };
            let f_new = slopes[1];
            let (x_old, f_old) = (x, fx);
            grid.drain(t_new, t1, |tg| {
                // cubic Hermite between the step ends
                let s = (tg - t) / hs;
                let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
                let h10 = s.powi(3) - 2.0 * s * s + s;
                let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
                let h11 = s.powi(3) - s * s;
                let xg = x_old * h00 + f_old * (h10 * hs) + x_new * h01 + f_new * (h11 * hs);
                out.push(Sample { t: tg, x: xg, on_grid: true });
            });
            let mut x_acc = x_new;
            let changed = hooks.after_step(t_new, &mut x_acc)?;
            check_state(t_new, &x_acc)?;
            t = t_new;
            x = x_acc;
            fx = if changed { checked_derivative(hooks, t, &x, &mut stats)? } else { f_new };
            if last {
                out.push(Sample { t, x, on_grid: true });
                break;
            }
            if cfg.record_steps {
                out.push(Sample { t, x, on_grid: false });
            }
            let fac = 0.9 * en.max(1e-10).powf(-0.5);
            h = (h * fac.clamp(0.2, 5.0)).min(cfg.max_step);
            jac = fd_jacobian(hooks, t, &x, &fx, &mut stats)?;
        } else {
            stats.rejected += 1;
            h *= (0.9 * en.powf(-0.5)).clamp(0.2, 1.0);
        }
    }
    Ok(stats)
}

//! Extraction of wobble and circle metrics from simulated trajectories.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::analysis::{CircleMetrics, Provenance};
use crate::error::{Error, Result};
use crate::simulator::{Trajectory, TrajectorySample};

/// Leading share of a run treated as transient.
pub const WARM_UP_FRACTION: f64 = 0.2;
pub const MIN_PERIODS: usize = 5;
/// Fit residual (RMS orthogonal distance) allowed relative to the radius.
pub const MAX_FIT_RESIDUAL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    /// RMS orthogonal distance of the points from the circle, m.
    pub residual: f64,
}

/// Geometric least-squares circle through `points`, started from the
/// algebraic fit.
pub fn fit_circle(points: &[[f64; 2]]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("circle fit needs 3 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let (mx, mz) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    let (mx, mz) = (mx / n, mz / n);

    // algebraic: x² + z² + D x + E z + F = 0, centred for conditioning
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for p in points {
        let (x, z) = (p[0] - mx, p[1] - mz);
        let row = Vector3::new(x, z, 1.0);
        normal += row * row.transpose();
        rhs -= row * (x * x + z * z);
    }
    let sol = normal
        .lu()
        .solve(&rhs)
        .ok_or(Error::NotCircular { residual: f64::INFINITY, radius: 0.0 })?;
    let mut cx = -sol[0] / 2.0;
    let mut cz = -sol[1] / 2.0;
    let r2 = cx * cx + cz * cz - sol[2];
    if !(r2 > 0.0) || !r2.is_finite() {
        return Err(Error::NotCircular { residual: f64::INFINITY, radius: 0.0 });
    }
    let mut r = r2.sqrt();

    // Gauss–Newton on orthogonal distances
    for _ in 0..50 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for p in points {
            let (dx, dz) = (p[0] - mx - cx, p[1] - mz - cz);
            let d = (dx * dx + dz * dz).sqrt();
            if d == 0.0 {
                continue;
            }
            let res = d - r;
            let j = Vector3::new(-dx / d, -dz / d, -1.0);
            jtj += j * j.transpose();
            jtr += j * res;
        }
        let Some(step) = jtj.lu().solve(&(-jtr)) else { break };
        cx += step[0];
        cz += step[1];
        r += step[2];
        if step.norm() <= 1e-14 * r.abs().max(1.0) {
            break;
        }
    }
    let sq: f64 = points
        .iter()
        .map(|p| {
            let d = ((p[0] - mx - cx).powi(2) + (p[1] - mz - cz).powi(2)).sqrt() - r;
            d * d
        })
        .sum();
    Ok(CircleFit { center: [cx + mx, cz + mz], radius: r.abs(), residual: (sq / n).sqrt() })
}

/// Intermediate quantities of one measurement, kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleMeasurement {
    pub amplitude: f64,
    pub frequency: f64,
    pub mean_theta: f64,
    pub mean_phi_dot: f64,
    pub mean_psi_dot: f64,
    pub mean_beta: f64,
    /// Signed like ψ̇ r_h / φ̇_mean.
    pub radius: f64,
    pub fit: CircleFit,
    pub periods: usize,
    pub window: [f64; 2],
}

impl CircleMeasurement {
    pub fn metrics(&self) -> CircleMetrics {
        CircleMetrics {
            amplitude_rad: self.amplitude,
            frequency_rad_s: self.frequency,
            precession_mean_rad_s: self.mean_phi_dot,
            radius_m: Some(self.radius),
            provenance: Provenance::Measured,
        }
    }
}

/// Trapezoidal time average over consecutive samples.
pub fn time_average(samples: &[&TrajectorySample], f: impl Fn(&TrajectorySample) -> f64) -> f64 {
    if samples.len() < 2 {
        return samples.first().map_or(f64::NAN, |s| f(s));
    }
    let mut area = 0.0;
    for w in samples.windows(2) {
        area += 0.5 * (f(w[0]) + f(w[1])) * (w[1].t - w[0].t);
    }
    area / (samples[samples.len() - 1].t - samples[0].t)
}

/// Upward crossings of `v` through `level`, linearly interpolated in time.
fn upward_crossings(t: &[f64], v: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..v.len() {
        let (a, b) = (v[k - 1] - level, v[k] - level);
        if a < 0.0 && b >= 0.0 {
            out.push(t[k - 1] + (t[k] - t[k - 1]) * (-a) / (b - a));
        }
    }
    out
}

/// Extremum of the parabola through three equally spaced samples.
fn parabolic_peak(y0: f64, y1: f64, y2: f64) -> f64 {
    let denom = y0 - 2.0 * y1 + y2;
    if denom == 0.0 {
        return y1;
    }
    let offset = 0.5 * (y0 - y2) / denom;
    if offset.abs() > 1.0 {
        return y1;
    }
    y1 - 0.25 * (y0 - y2) * offset
}

fn extremes(values: &[f64], lo: usize, hi: usize) -> (f64, f64) {
    let (mut imax, mut imin) = (lo, lo);
    for k in lo..hi {
        if values[k] > values[imax] {
            imax = k;
        }
        if values[k] < values[imin] {
            imin = k;
        }
    }
    let refine = |k: usize| {
        if k > 0 && k + 1 < values.len() {
            parabolic_peak(values[k - 1], values[k], values[k + 1])
        } else {
            values[k]
        }
    };
    (refine(imax), refine(imin))
}

/// Wobble amplitude and frequency of the lean angle over `samples` (uniform grid).
pub fn measure_wobble(samples: &[&TrajectorySample]) -> Result<(f64, f64, usize)> {
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let theta: Vec<f64> = samples.iter().map(|s| s.state.theta).collect();
    let mean = time_average(samples, |s| s.state.theta);
    let ups = upward_crossings(&t, &theta, mean);
    if ups.len() < MIN_PERIODS + 1 {
        return Err(Error::InsufficientData(format!(
            "{} wobble periods in the analysis window, need {MIN_PERIODS}",
            ups.len().saturating_sub(1)
        )));
    }
    let periods = ups.len() - 1;
    let period = (ups[periods] - ups[0]) / periods as f64;
    let mut p2p = 0.0;
    for w in ups.windows(2) {
        let lo = t.partition_point(|&x| x < w[0]);
        let hi = t.partition_point(|&x| x < w[1]);
        let (max, min) = extremes(&theta, lo, hi.max(lo + 1));
        p2p += max - min;
    }
    p2p /= periods as f64;
    let amplitude = 0.5 * p2p * if mean < 0.0 { -1.0 } else { 1.0 };
    Ok((amplitude, 2.0 * std::f64::consts::PI / period, periods))
}

/// Amplitude of the lean wobble, frequency from mean-level crossings, mean
/// precession and a circle fit to the hull-centre path, all after the
/// warm-up share of the run.
pub fn measure_circle(traj: &Trajectory) -> Result<CircleMeasurement> {
    let (t0, t1) = (traj.t_start(), traj.t_end());
    let start = t0 + WARM_UP_FRACTION * (t1 - t0);
    measure_circle_window(traj, start, t1)
}

pub fn measure_circle_window(traj: &Trajectory, start: f64, end: f64) -> Result<CircleMeasurement> {
    let samples: Vec<&TrajectorySample> = traj.grid().filter(|s| s.t >= start && s.t <= end).collect();
    if samples.len() < 3 {
        return Err(Error::InsufficientData("fewer than three samples in the analysis window".into()));
    }
    let (amplitude, frequency, periods) = measure_wobble(&samples)?;
    let mean_theta = time_average(&samples, |s| s.state.theta);
    let mean_phi_dot = time_average(&samples, |s| s.state.dphi);
    let mean_psi_dot = time_average(&samples, |s| s.state.dpsi);
    let mean_beta = time_average(&samples, |s| s.state.beta);
    let points: Vec<[f64; 2]> = samples.iter().map(|s| [s.state.x, s.state.z]).collect();
    let fit = fit_circle(&points)?;
    if fit.residual > MAX_FIT_RESIDUAL * fit.radius {
        return Err(Error::NotCircular { residual: fit.residual, radius: fit.radius });
    }
    let sign = (mean_psi_dot / mean_phi_dot).signum();
    Ok(CircleMeasurement {
        amplitude,
        frequency,
        mean_theta,
        mean_phi_dot,
        mean_psi_dot,
        mean_beta,
        radius: sign * fit.radius,
        fit,
        periods,
        window: [start, end],
    })
}

pub fn measure_circle_metrics(traj: &Trajectory) -> Result<CircleMetrics> {
    Ok(measure_circle(traj)?.metrics())
}

/// Peak-to-peak value of a sampled signal.
pub fn peak_to_peak(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

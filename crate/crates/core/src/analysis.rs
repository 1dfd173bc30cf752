//! Closed-form characteristics of steady wobbly circular motion and the
//! reduced three-equation model they come from.
//!
//! With the pendulum held at β and small angles, the lean obeys
//! `D θ̈ + (b ψ̇² + m_p r_p g) θ = −m_p r_p g β` where
//! `D = I_p + I_h + I_y + m_p r_p² + Σm r_h² − 2 m_p r_p r_h`,
//! `k = I_h + Σm r_h² − m_p r_p r_h` and `b = I_h k / (I_h + 2 I_y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Robot;
use crate::state::State;

/// Parameter groups shared by every closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleCoefficients {
    /// Lean inertia `D`.
    pub lean_inertia: f64,
    /// `k`.
    pub spin_coupling: f64,
    /// `I_h / (I_h + 2 I_y)`.
    pub precession_ratio: f64,
    /// `m_p r_p g`.
    pub gravity_moment: f64,
}

impl CircleCoefficients {
    pub fn new(robot: &Robot) -> Self {
        let p = &robot.params;
        let i = &robot.inertia;
        let total = p.total_mass();
        let coupling = p.m_p * p.r_p * p.r_h;
        Self {
            lean_inertia: robot.pendulum_inertia()
                + i.i_h
                + i.i_y
                + p.m_p * p.r_p * p.r_p
                + total * p.r_h * p.r_h
                - 2.0 * coupling,
            spin_coupling: i.i_h + total * p.r_h * p.r_h - coupling,
            precession_ratio: i.i_h / (i.i_h + 2.0 * i.i_y),
            gravity_moment: p.m_p * p.r_p * p.g,
        }
    }

    /// Gyroscopic stiffness per ψ̇², `b`.
    pub fn gyro_stiffness(&self) -> f64 {
        self.precession_ratio * self.spin_coupling
    }

    /// Total lean stiffness `b ψ̇² + m_p r_p g`.
    pub fn stiffness(&self, psi_dot: f64) -> f64 {
        self.gyro_stiffness() * psi_dot * psi_dot + self.gravity_moment
    }
}

/// `r_h ψ̇² / g`: below 0.01 is the low-speed regime, above 50 the high-speed one.
pub fn speed_ratio(psi_dot: f64, robot: &Robot) -> f64 {
    robot.params.r_h * psi_dot * psi_dot / robot.params.g
}

/// Mean lean angle `A` of the wobble, rad.
pub fn wobble_amplitude(beta: f64, psi_dot: f64, robot: &Robot) -> f64 {
    let c = CircleCoefficients::new(robot);
    let k = c.stiffness(psi_dot);
    if k == 0.0 {
        return 0.0;
    }
    -c.gravity_moment * beta / k
}

/// Wobble frequency ω, rad/s.
pub fn wobble_frequency(psi_dot: f64, robot: &Robot) -> Result<f64> {
    let c = CircleCoefficients::new(robot);
    if !(c.lean_inertia > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "lean inertia must be positive, got {}",
            c.lean_inertia
        )));
    }
    Ok((c.stiffness(psi_dot) / c.lean_inertia).sqrt())
}

/// Precession rate `φ̇ = I_h/(I_h + 2I_y) ψ̇ θ` with zero integration constant.
pub fn precession_rate(theta: f64, psi_dot: f64, robot: &Robot) -> f64 {
    CircleCoefficients::new(robot).precession_ratio * psi_dot * theta
}

/// Signed path radius, or the straight-line case when the pendulum is centred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRadius {
    Finite(f64),
    Straight,
}

impl PathRadius {
    pub fn value(self) -> Option<f64> {
        match self {
            PathRadius::Finite(r) => Some(r),
            PathRadius::Straight => None,
        }
    }

    pub fn magnitude(self) -> f64 {
        match self {
            PathRadius::Finite(r) => r.abs(),
            PathRadius::Straight => f64::INFINITY,
        }
    }
}

/// Signed radius of curvature ρ, m.
pub fn radius_of_curvature(beta: f64, psi_dot: f64, robot: &Robot) -> PathRadius {
    if beta == 0.0 {
        return PathRadius::Straight;
    }
    let c = CircleCoefficients::new(robot);
    let p = &robot.params;
    let i_h = robot.inertia.i_h;
    let i_sum = i_h + 2.0 * robot.inertia.i_y;
    let num = -p.r_h * (c.spin_coupling * i_h * psi_dot * psi_dot + i_sum * c.gravity_moment);
    PathRadius::Finite(num / (c.gravity_moment * i_h * beta))
}

/// θ(t) = A(1 − cos ωt).
pub fn theta_solution(t: f64, amplitude: f64, omega: f64) -> f64 {
    amplitude * (1.0 - (omega * t).cos())
}

pub fn amplitude_low_speed(beta: f64) -> f64 {
    -beta
}

pub fn frequency_low_speed(robot: &Robot) -> Result<f64> {
    wobble_frequency(0.0, robot)
}

pub fn radius_low_speed(beta: f64, robot: &Robot) -> PathRadius {
    if beta == 0.0 {
        return PathRadius::Straight;
    }
    let i = &robot.inertia;
    PathRadius::Finite(-robot.params.r_h * (i.i_h + 2.0 * i.i_y) / (i.i_h * beta))
}

pub fn amplitude_high_speed(beta: f64, psi_dot: f64, robot: &Robot) -> f64 {
    let c = CircleCoefficients::new(robot);
    -c.gravity_moment * beta / (c.gyro_stiffness() * psi_dot * psi_dot)
}

pub fn frequency_high_speed(psi_dot: f64, robot: &Robot) -> Result<f64> {
    let c = CircleCoefficients::new(robot);
    if !(c.lean_inertia > 0.0) {
        return Err(Error::ParameterDomain("lean inertia must be positive".into()));
    }
    Ok(psi_dot.abs() * (c.gyro_stiffness() / c.lean_inertia).sqrt())
}

pub fn radius_high_speed(beta: f64, psi_dot: f64, robot: &Robot) -> PathRadius {
    if beta == 0.0 {
        return PathRadius::Straight;
    }
    let c = CircleCoefficients::new(robot);
    PathRadius::Finite(-c.spin_coupling / (c.gravity_moment * beta) * robot.params.r_h * psi_dot * psi_dot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Predicted,
    Measured,
}

/// Circular-motion characteristics, predicted or measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleMetrics {
    pub amplitude_rad: f64,
    pub frequency_rad_s: f64,
    pub precession_mean_rad_s: f64,
    /// Signed; `None` for a straight path.
    pub radius_m: Option<f64>,
    pub provenance: Provenance,
}

impl CircleMetrics {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

/// Every closed form at one operating point.
pub fn predict_circle_metrics(beta: f64, psi_dot: f64, robot: &Robot) -> Result<CircleMetrics> {
    let amplitude = wobble_amplitude(beta, psi_dot, robot);
    Ok(CircleMetrics {
        amplitude_rad: amplitude,
        frequency_rad_s: wobble_frequency(psi_dot, robot)?,
        precession_mean_rad_s: precession_rate(amplitude, psi_dot, robot),
        radius_m: radius_of_curvature(beta, psi_dot, robot).value(),
        provenance: Provenance::Predicted,
    })
}

/// One reduced-model equation evaluated on a full-model state: the sum of
/// its terms and the largest term magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquationResidual {
    pub residual: f64,
    pub dominant: f64,
}

impl EquationResidual {
    fn from_terms(terms: &[f64]) -> Self {
        Self {
            residual: terms.iter().sum(),
            dominant: terms.iter().fold(0.0_f64, |m, t| m.max(t.abs())),
        }
    }

    pub fn relative(&self) -> f64 {
        if self.dominant == 0.0 {
            0.0
        } else {
            self.residual.abs() / self.dominant
        }
    }
}

/// Residuals of the reduced heading, lean and spin equations (pendulum held,
/// yoke centre of mass at the hull centre) for accelerations `qdd` in state
/// order at state `s`.
pub fn reduced_model_residuals(s: &State, qdd: &[f64; 6], robot: &Robot) -> [EquationResidual; 3] {
    let p = &robot.params;
    let i = &robot.inertia;
    let (i_h, i_y, i_p) = (i.i_h, i.i_y, robot.pendulum_inertia());
    let total = p.total_mass();
    let (mp, rp, rh, g) = (p.m_p, p.r_p, p.r_h, p.g);
    let (beta, theta) = (s.beta, s.theta);
    let (dphi, dtheta, dpsi) = (s.dphi, s.dtheta, s.dpsi);
    let (ddphi, ddtheta, ddpsi) = (qdd[0], qdd[1], qdd[2]);
    let two = 2.0 * beta + 2.0 * theta;
    let alpha = beta + theta;
    let (st, ct) = theta.sin_cos();
    let (sb, cb) = beta.sin_cos();

    let heading = [
        (i_h + i_p / 2.0 + 1.5 * i_y + i_y * (2.0 * theta).cos() / 2.0 - i_p * two.cos() / 2.0
            + mp * rp * rp / 2.0 * (1.0 - two.cos()))
            * ddphi,
        -(i_h * st - mp * rp * rh / 2.0 * (sb + (beta + 2.0 * theta).sin())) * ddpsi,
        -(i_h * ct - mp * rp * rh / 2.0 * ((beta + 2.0 * theta).cos() - cb)) * dpsi * dtheta,
        -(i_y * (2.0 * theta).sin() - i_p * two.sin() - mp * rp * rp * two.sin() + mp * rp * rh * alpha.sin())
            * dphi
            * dtheta,
    ];
    let lean = [
        (i_p + i_h + i_y + mp * rp * rp + total * rh * rh - 2.0 * mp * rp * rh * alpha.cos()) * ddtheta,
        mp * rp * rh * alpha.sin() * dtheta * dtheta,
        (i_h * ct + total * rh * rh * ct - mp * rp * rh / 2.0 * ((beta + 2.0 * theta).cos() + cb)) * dphi * dpsi,
        mp * rp * g * alpha.sin(),
        (i_y * (2.0 * theta).sin() / 2.0 - i_p * two.sin() / 2.0 - mp * rp * rp * two.sin() / 2.0
            + mp * rp * rh * alpha.sin())
            * dphi
            * dphi,
    ];
    let spin = [
        (i_h + total * rh * rh * ct * ct) * ddpsi,
        -(total * rh * rh / 2.0 * (2.0 * theta).sin()) * dpsi * dtheta,
        -(i_h * ct + total * rh * rh * ct - 2.0 * mp * rp * rh * cb * ct * ct + 2.0 * mp * rp * rh * sb * ct * st)
            * dphi
            * dtheta,
        -(i_h * st - mp * rp * rh * sb * ct * ct - mp * rp * rh * cb * ct * st) * ddphi,
    ];
    [
        EquationResidual::from_terms(&heading),
        EquationResidual::from_terms(&lean),
        EquationResidual::from_terms(&spin),
    ]
}

//! Speed control, feedback-linearized wobble suppression and gravity
//! compensated pendulum control, blended into one pendulum torque.

use serde::{Deserialize, Serialize};

use crate::analysis::CircleCoefficients;
use crate::dynamics::{Actuation, AffineDecomposition, ControlInput, EomSystem};
use crate::error::{Error, Result};
use crate::params::Robot;
use crate::simulator::TorqueSource;
use crate::state::State;

/// Below this |G_{8,2}| the wobble torque is not computed.
pub const SINGULARITY_FLOOR: f64 = 1e-8;

pub const DEFAULT_PENDULUM_LIMIT_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub kp_psidot: f64,
    pub kp_beta: f64,
    pub kd_beta: f64,
    pub kp_thetadot: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp_psidot: 100.0,
            kp_beta: 500.0,
            kd_beta: 50.0,
            kp_thetadot: 5.0,
            gamma: 0.9,
            delta: 0.1,
        }
    }
}

impl ControllerGains {
    pub fn with_blend(gamma: f64, delta: f64) -> Self {
        Self { gamma, delta, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let gains = [
            ("kp_psidot", self.kp_psidot),
            ("kp_beta", self.kp_beta),
            ("kd_beta", self.kd_beta),
            ("kp_thetadot", self.kp_thetadot),
        ];
        for (name, v) in gains {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidController(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("delta", self.delta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidController(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Setpoints {
    pub psi_dot_des: f64,
    pub beta_des: f64,
    #[serde(default)]
    pub theta_dot_des: f64,
}

impl Setpoints {
    pub fn new(psi_dot_des: f64, beta_des: f64) -> Self {
        Self { psi_dot_des, beta_des, theta_dot_des: 0.0 }
    }
}

/// Symmetric torque bounds, N·m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub t_s_max: f64,
    pub t_p_max: f64,
}

impl Saturation {
    pub fn apply(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            t_s: u.t_s.clamp(-self.t_s_max, self.t_s_max),
            t_p: u.t_p.clamp(-self.t_p_max, self.t_p_max),
        }
    }
}

/// `T_s = K_p,ψ̇ (ψ̇_des − ψ̇)`.
pub fn speed_torque(s: &State, sp: &Setpoints, gains: &ControllerGains) -> f64 {
    gains.kp_psidot * (sp.psi_dot_des - s.dpsi)
}

/// `T_p,β = m_p g r_p sin(β + θ) + K_p,β (β_des − β) − K_d,β β̇`.
pub fn pendulum_torque(s: &State, sp: &Setpoints, gains: &ControllerGains, robot: &Robot) -> f64 {
    let p = &robot.params;
    p.m_p * p.g * p.r_p * (s.beta + s.theta).sin() + gains.kp_beta * (sp.beta_des - s.beta) - gains.kd_beta * s.dbeta
}

/// `T_p,θ̇ = (−f₈ + K_p,θ̇ (θ̇_des − θ̇)) / G_{8,2}`.
pub fn wobble_torque(s: &State, sp: &Setpoints, gains: &ControllerGains, dyn_: &AffineDecomposition) -> Result<f64> {
    let g82 = dyn_.g_at(8, 2);
    if !(g82.abs() >= SINGULARITY_FLOOR) {
        return Err(Error::LinearizationSingularity { g82: g82.abs(), floor: SINGULARITY_FLOOR });
    }
    let v_theta = gains.kp_thetadot * (sp.theta_dot_des - s.dtheta);
    Ok((-dyn_.f_at(8) + v_theta) / g82)
}

/// Total pendulum-relative angle |β + θ| at which the pendulum torque stops
/// reaching the lean equation (the θ–β inertia coupling vanishes), rad.
/// `None` when the pendulum is too long for that to happen.
pub fn singular_lean(robot: &Robot) -> Option<f64> {
    let p = &robot.params;
    let swing = robot.pendulum_inertia() + p.m_p * p.r_p * p.r_p;
    let ratio = swing / (p.m_p * p.r_p * p.r_h);
    (ratio <= 1.0).then(|| ratio.acos())
}

pub fn blended_torque(gamma: f64, delta: f64, t_wobble: f64, t_pend: f64) -> f64 {
    gamma * t_wobble + delta * t_pend
}

/// Pendulum angle that makes the predicted path radius equal `rho_des`
/// at spin rate `psi_dot`; the closed-form radius inverted for β.
pub fn beta_for_radius_unclamped(rho_des: f64, psi_dot: f64, robot: &Robot) -> Result<f64> {
    if rho_des == 0.0 || rho_des.is_nan() {
        return Err(Error::ParameterDomain(format!("desired radius must be nonzero, got {rho_des}")));
    }
    if rho_des.is_infinite() {
        return Ok(0.0);
    }
    let c = CircleCoefficients::new(robot);
    let p = &robot.params;
    let i = &robot.inertia;
    let num = -p.r_h * (c.spin_coupling * i.i_h * psi_dot * psi_dot + (i.i_h + 2.0 * i.i_y) * c.gravity_moment);
    Ok(num / (c.gravity_moment * i.i_h * rho_des))
}

/// Planned pendulum angle, clamped to the limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPlan {
    pub beta: f64,
    pub clamped: bool,
    /// Smallest achievable |ρ| at this speed within the limit, m.
    pub min_radius: f64,
}

pub fn min_radius(psi_dot: f64, limit: f64, robot: &Robot) -> f64 {
    crate::analysis::radius_of_curvature(limit, psi_dot, robot).magnitude()
}

pub fn plan_beta(rho_des: f64, psi_dot: f64, limit: f64, robot: &Robot) -> Result<BetaPlan> {
    let beta = beta_for_radius_unclamped(rho_des, psi_dot, robot)?;
    let min = min_radius(psi_dot, limit, robot);
    Ok(if beta.abs() > limit {
        BetaPlan { beta: limit.copysign(beta), clamped: true, min_radius: min }
    } else {
        BetaPlan { beta, clamped: false, min_radius: min }
    })
}

/// Strict form: an angle beyond `limit` is an infeasible-radius error.
pub fn beta_for_radius(rho_des: f64, psi_dot: f64, limit: f64, robot: &Robot) -> Result<f64> {
    let plan = plan_beta(rho_des, psi_dot, limit, robot)?;
    if plan.clamped {
        let beta = beta_for_radius_unclamped(rho_des, psi_dot, robot)?;
        return Err(Error::InfeasibleRadius { beta_deg: beta.to_degrees(), min_radius: plan.min_radius });
    }
    Ok(plan.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub gains: ControllerGains,
    /// |β_des| bound, rad.
    pub pendulum_limit: f64,
    pub saturation: Option<Saturation>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gains: ControllerGains::default(),
            pendulum_limit: DEFAULT_PENDULUM_LIMIT_DEG.to_radians(),
            saturation: None,
        }
    }
}

/// Full controller as a torque source for the simulator.
#[derive(Debug, Clone)]
pub struct BlendedController {
    pub robot: Robot,
    pub config: ControllerConfig,
    pub setpoints: Setpoints,
    /// Evaluations in which the wobble term fell back to the pendulum torque.
    pub fallback_events: usize,
}

/// Torque breakdown at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub input: ControlInput,
    pub t_wobble: Option<f64>,
    pub t_pendulum: f64,
    pub fallback: bool,
}

impl BlendedController {
    pub fn new(robot: Robot, config: ControllerConfig, setpoints: Setpoints) -> Result<Self> {
        config.gains.validate()?;
        if !(config.pendulum_limit > 0.0 && config.pendulum_limit < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidController("pendulum limit must lie in (0, 90) deg".into()));
        }
        let mut c = Self { robot, config, setpoints, fallback_events: 0 };
        c.set_setpoints(setpoints)?;
        Ok(c)
    }

    pub fn set_setpoints(&mut self, sp: Setpoints) -> Result<()> {
        if sp.beta_des.abs() > self.config.pendulum_limit + 1e-12 {
            return Err(Error::InvalidController(format!(
                "beta_des {:.2} deg beyond the {:.2} deg limit",
                sp.beta_des.to_degrees(),
                self.config.pendulum_limit.to_degrees()
            )));
        }
        self.setpoints = sp;
        Ok(())
    }

    pub fn set_blend(&mut self, gamma: f64, delta: f64) -> Result<()> {
        let gains = ControllerGains { gamma, delta, ..self.config.gains };
        gains.validate()?;
        self.config.gains = gains;
        Ok(())
    }

    pub fn evaluate(&mut self, s: &State, affine: &AffineDecomposition) -> ControlOutput {
        let gains = &self.config.gains;
        let sp = &self.setpoints;
        let t_s = speed_torque(s, sp, gains);
        let t_pendulum = pendulum_torque(s, sp, gains, &self.robot);
        let (t_p, t_wobble, fallback) = if gains.gamma == 0.0 {
            (blended_torque(0.0, gains.delta, 0.0, t_pendulum), None, false)
        } else {
            match wobble_torque(s, sp, gains, affine) {
                Ok(tw) => (blended_torque(gains.gamma, gains.delta, tw, t_pendulum), Some(tw), false),
                Err(_) => {
                    self.fallback_events += 1;
                    log::debug!("wobble linearization singular; pendulum torque only");
                    (t_pendulum, None, true)
                }
            }
        };
        let mut input = ControlInput::new(t_s, t_p);
        if let Some(sat) = self.config.saturation {
            input = sat.apply(input);
        }
        ControlOutput { input, t_wobble, t_pendulum, fallback }
    }
}

impl TorqueSource for BlendedController {
    fn actuation(&mut self, _t: f64, state: &State, eom: &EomSystem) -> Result<Actuation> {
        Ok(Actuation::torques(self.evaluate(state, &eom.affine()).input))
    }
}

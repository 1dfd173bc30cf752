//! One teleoperated robot: live setpoints, the blended controller and a
//! sliced simulation. Pure and synchronous; the server drives it.

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::json;
use spherebot_core::analysis::radius_of_curvature;
use spherebot_core::controller::{BlendedController, ControllerConfig};
use spherebot_core::integrator::IntegratorConfig;
use spherebot_core::simulator::{steady_circle_state, Simulation};
use spherebot_core::{ControlInput, ControllerGains, Robot, RobotParams, Setpoints, State, TrajectorySample};

use crate::protocol::{CommandMessage, ModeFlags, TelemetryMessage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub params: RobotParams,
    pub gains: ControllerGains,
    /// Simulated time per loop iteration, s.
    pub slice: f64,
    pub telemetry_hz: f64,
    /// Largest change of the applied β setpoint, deg/s.
    pub beta_slew_deg_s: f64,
    pub project_constraints: bool,
    /// Simulated seconds per wall-clock second.
    pub real_time_factor: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            params: RobotParams::default(),
            gains: ControllerGains::default(),
            slice: 0.005,
            telemetry_hz: 20.0,
            beta_slew_deg_s: 30.0,
            project_constraints: true,
            real_time_factor: 1.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> spherebot_core::Result<()> {
        self.params.validate()?;
        self.gains.validate()?;
        let positive = [("slice", self.slice), ("telemetry_hz", self.telemetry_hz), ("real_time_factor", self.real_time_factor)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(spherebot_core::Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beta_slew_deg_s > 0.0) {
            return Err(spherebot_core::Error::InvalidConfig("beta slew rate must be positive".into()));
        }
        Ok(())
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig { project_constraints: self.project_constraints, ..Default::default() }
    }
}

pub struct Session {
    pub config: SessionConfig,
    pub robot: Robot,
    sim: Simulation,
    controller: BlendedController,
    speed: f64,
    /// Commanded β, rad; the applied setpoint slews toward it.
    beta_target: f64,
    /// As commanded, degrees.
    beta_command_deg: f64,
    beta_applied: f64,
    blend: (f64, f64),
    wobble_control: bool,
    paused: bool,
    last_torques: ControlInput,
}

impl Session {
    pub fn new(config: SessionConfig) -> spherebot_core::Result<Self> {
        config.validate()?;
        let robot = Robot::new(config.params)?;
        let x0 = steady_circle_state(0.0, 0.0, &robot)?;
        let controller = BlendedController::new(
            robot,
            ControllerConfig { gains: config.gains, ..Default::default() },
            Setpoints::new(0.0, 0.0),
        )?;
        Ok(Self {
            config,
            robot,
            sim: Simulation::new(robot, x0, config.integrator())?,
            controller,
            speed: 0.0,
            beta_target: 0.0,
            beta_command_deg: 0.0,
            beta_applied: 0.0,
            blend: (config.gains.gamma, config.gains.delta),
            wobble_control: true,
            paused: false,
            last_torques: ControlInput::ZERO,
        })
    }

    pub fn t(&self) -> f64 {
        self.sim.t
    }

    pub fn state(&self) -> State {
        self.sim.state
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    /// Applies a bounds-checked command; the returned value goes into the ack.
    pub fn apply(&mut self, cmd: &CommandMessage) -> spherebot_core::Result<serde_json::Value> {
        let value = match *cmd {
            CommandMessage::SetSpeed { value } => {
                self.speed = value;
                json!(value)
            }
            CommandMessage::SetPendulum { value } => {
                self.beta_target = value.to_radians();
                self.beta_command_deg = value;
                json!(value)
            }
            CommandMessage::SetBlend { gamma, delta } => {
                spherebot_core::ControllerGains::with_blend(gamma, delta).validate()?;
                self.blend = (gamma, delta);
                json!({ "gamma": gamma, "delta": delta })
            }
            CommandMessage::SetWobbleControl { enabled } => {
                self.wobble_control = enabled;
                json!(enabled)
            }
            CommandMessage::Reset { params } => {
                let params = params.unwrap_or(self.config.params);
                let robot = Robot::new(params)?;
                let x0 = steady_circle_state(0.0, self.speed, &robot)?;
                self.config.params = params;
                self.robot = robot;
                self.sim = Simulation::new(robot, x0, self.config.integrator())?;
                self.controller = BlendedController::new(
                    robot,
                    ControllerConfig { gains: self.config.gains, ..Default::default() },
                    Setpoints::new(self.speed, 0.0),
                )?;
                self.beta_target = 0.0;
                self.beta_command_deg = 0.0;
                self.beta_applied = 0.0;
                self.paused = false;
                json!({ "speed": self.speed, "params": params })
            }
            CommandMessage::Pause => {
                self.paused = true;
                json!(true)
            }
            CommandMessage::Resume => {
                self.paused = false;
                json!(false)
            }
        };
        Ok(value)
    }

    fn slew_active(&self) -> bool {
        self.beta_applied != self.beta_target
    }

    fn sync_controller(&mut self) -> spherebot_core::Result<()> {
        let max = self.config.beta_slew_deg_s.to_radians() * self.config.slice;
        let gap = self.beta_target - self.beta_applied;
        self.beta_applied = if gap.abs() <= max { self.beta_target } else { self.beta_applied + max.copysign(gap) };
        if self.slew_active() {
            log::debug!("β setpoint slewing: {:.2}° toward {:.2}°", self.beta_applied.to_degrees(), self.beta_target.to_degrees());
        }
        self.controller.set_setpoints(Setpoints::new(self.speed, self.beta_applied))?;
        let (g, d) = if self.wobble_control { self.blend } else { (0.0, 1.0) };
        self.controller.set_blend(g, d)
    }

    /// Advances one slice unless paused. On a numerical failure the session
    /// pauses itself and keeps its last good state.
    pub fn step(&mut self) -> spherebot_core::Result<Vec<TrajectorySample>> {
        if self.paused {
            return Ok(vec![]);
        }
        self.sync_controller()?;
        let slice = self.config.slice;
        match self.sim.advance(slice, &mut self.controller) {
            Ok(traj) => {
                if let Some(last) = traj.samples.last() {
                    self.last_torques = last.u;
                }
                Ok(traj.samples)
            }
            Err(e) => {
                warn!("session paused after numerical failure at t = {:.3}: {e}", self.sim.t);
                self.paused = true;
                Err(e)
            }
        }
    }

    pub fn telemetry(&self) -> TelemetryMessage {
        let s = self.sim.state;
        TelemetryMessage {
            t: self.sim.t,
            state: s,
            torques: self.last_torques,
            theta_deg: s.theta.to_degrees(),
            phi_dot: s.dphi,
            estimated_radius: radius_of_curvature(self.beta_applied, self.speed, &self.robot).value(),
            speed_setpoint: self.speed,
            pendulum_setpoint_deg: self.beta_command_deg,
            mode: ModeFlags {
                paused: self.paused,
                wobble_control: self.wobble_control,
                gamma: self.blend.0,
                delta: self.blend.1,
                slew_active: self.slew_active(),
                fallback_events: self.controller.fallback_events,
            },
        }
    }
}

//! Wire messages. Every message is a JSON object with a `type` field and
//! snake_case keys. Speeds are rad/s, pendulum angles degrees.

use serde::{Deserialize, Serialize};
use spherebot_core::{ControlInput, RobotParams, State};

pub const MAX_SPEED: f64 = 20.0;
pub const MAX_PENDULUM_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandMessage {
    /// ψ̇ setpoint, rad/s.
    SetSpeed { value: f64 },
    /// β setpoint, degrees.
    SetPendulum { value: f64 },
    SetBlend { gamma: f64, delta: f64 },
    SetWobbleControl { enabled: bool },
    /// Back to steady straight motion at the current speed, optionally with
    /// new robot parameters.
    Reset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<RobotParams>,
    },
    Pause,
    Resume,
}

impl CommandMessage {
    pub fn name(&self) -> &'static str {
        match self {
            CommandMessage::SetSpeed { .. } => "set_speed",
            CommandMessage::SetPendulum { .. } => "set_pendulum",
            CommandMessage::SetBlend { .. } => "set_blend",
            CommandMessage::SetWobbleControl { .. } => "set_wobble_control",
            CommandMessage::Reset { .. } => "reset",
            CommandMessage::Pause => "pause",
            CommandMessage::Resume => "resume",
        }
    }

    /// Payload bounds.
    pub fn check_bounds(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Bounds(m));
        match *self {
            CommandMessage::SetSpeed { value } if !(value.is_finite() && value.abs() <= MAX_SPEED) => {
                bad(format!("speed {value} rad/s outside ±{MAX_SPEED}"))
            }
            CommandMessage::SetPendulum { value } if !(value.is_finite() && value.abs() <= MAX_PENDULUM_DEG) => {
                bad(format!("pendulum angle {value}° outside ±{MAX_PENDULUM_DEG}°"))
            }
            CommandMessage::SetBlend { gamma, delta }
                if !((0.0..=1.0).contains(&gamma) && (0.0..=1.0).contains(&delta)) =>
            {
                bad(format!("blend ({gamma}, {delta}) outside [0, 1]"))
            }
            CommandMessage::Reset { params: Some(p) } => p.validate().map_err(|e| ProtocolError::Bounds(e.to_string())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("bounds error: {0}")]
    Bounds(String),
}

/// Parses and bounds-checks one client message.
pub fn parse_command(text: &str) -> Result<CommandMessage, ProtocolError> {
    let cmd: CommandMessage = serde_json::from_str(text).map_err(|e| ProtocolError::Schema(e.to_string()))?;
    cmd.check_bounds()?;
    Ok(cmd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFlags {
    pub paused: bool,
    pub wobble_control: bool,
    pub gamma: f64,
    pub delta: f64,
    /// β setpoint still slewing toward the commanded value.
    pub slew_active: bool,
    pub fallback_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryMessage {
    pub t: f64,
    pub state: State,
    pub torques: ControlInput,
    pub theta_deg: f64,
    pub phi_dot: f64,
    /// Predicted path radius at the live setpoints, m; absent when straight.
    pub estimated_radius: Option<f64>,
    pub speed_setpoint: f64,
    pub pendulum_setpoint_deg: f64,
    pub mode: ModeFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Schema,
    Bounds,
    Numerical,
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Ack { command: String, value: serde_json::Value },
    Error { kind: ErrorKind, message: String },
    Telemetry(TelemetryMessage),
}

impl ServerMessage {
    pub fn error(e: &ProtocolError) -> Self {
        let kind = match e {
            ProtocolError::Schema(_) => ErrorKind::Schema,
            ProtocolError::Bounds(_) => ErrorKind::Bounds,
        };
        ServerMessage::Error { kind, message: e.to_string() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }
}

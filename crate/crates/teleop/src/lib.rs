//! Live teleoperation of the simulated spherical robot: sessions stepped at
//! wall-clock rate, commands and telemetry over a web socket.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{CommandMessage, ServerMessage, TelemetryMessage};
pub use server::{router, serve, AppState, CreateSession, ServerConfig, SessionInfo};
pub use session::{Session, SessionConfig};

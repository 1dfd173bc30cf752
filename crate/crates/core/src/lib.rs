//! Simulation, analysis and control of a pendulum-actuated spherical robot.
//!
//! The robot is a rolling hull, an internal yoke that never pitches, and a
//! pendulum swinging sideways about the yoke's forward axis. Two motors act:
//! the rolling torque `T_s` spins the hull relative to the yoke and the
//! pendulum torque `T_p` swings the pendulum.

pub mod error;
pub mod params;
pub mod state;
pub mod kinematics;
pub mod dynamics;
pub mod integrator;
pub mod simulator;
pub mod analysis;
pub mod measure;
pub mod controller;
pub mod maneuver;

pub use error::{Error, Result};
pub use params::{derive_inertias, InertiaSet, PendulumTensor, Robot, RobotParams};
pub use state::State;
pub use dynamics::{ControlInput, AffineDecomposition};
pub use simulator::{Trajectory, TrajectorySample};
pub use analysis::CircleMetrics;
pub use controller::{ControllerGains, Setpoints};

//! Frame rotations, body angular velocities, centre-of-mass kinematics and
//! energies of the hull/yoke/pendulum chain.
//!
//! Frames follow the YXZ Euler sequence: the yoke is `R_y(φ) R_x(θ)`, the
//! pendulum adds `R_x(β)` and the hull adds `R_z(ψ)` on top of the yoke.

use nalgebra::{Matrix3, Vector3};

use crate::params::Robot;
use crate::state::State;

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotations mapping yoke, pendulum and hull frame vectors to the ground frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRotations {
    pub ground_yoke: Matrix3<f64>,
    pub ground_pendulum: Matrix3<f64>,
    pub ground_hull: Matrix3<f64>,
}

pub fn frame_rotations(phi: f64, theta: f64, psi: f64, beta: f64) -> FrameRotations {
    let yoke = rot_y(phi) * rot_x(theta);
    FrameRotations {
        ground_yoke: yoke,
        ground_pendulum: yoke * rot_x(beta),
        ground_hull: yoke * rot_z(psi),
    }
}

/// Angular velocity of each body expressed in its own frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyRates {
    pub yoke: Vector3<f64>,
    pub pendulum: Vector3<f64>,
    pub hull: Vector3<f64>,
}

pub fn angular_velocities(s: &State) -> BodyRates {
    let (st, ct) = s.theta.sin_cos();
    let (sa, ca) = (s.beta + s.theta).sin_cos();
    let (sp, cp) = s.psi.sin_cos();
    BodyRates {
        yoke: Vector3::new(s.dtheta, s.dphi * ct, -s.dphi * st),
        pendulum: Vector3::new(s.dbeta + s.dtheta, s.dphi * ca, -s.dphi * sa),
        hull: Vector3::new(
            s.dtheta * cp + s.dphi * ct * sp,
            s.dphi * cp * ct - s.dtheta * sp,
            s.dpsi - s.dphi * st,
        ),
    }
}

/// Ground-frame velocities of the body centres of mass and the pendulum
/// centre-of-mass position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComKinematics {
    pub v_hull: Vector3<f64>,
    pub v_yoke: Vector3<f64>,
    pub v_pendulum: Vector3<f64>,
    /// Pendulum centre of mass relative to the ground origin.
    pub r_pendulum: Vector3<f64>,
    /// Pendulum centre of mass relative to the hull centre.
    pub r_pendulum_rel: Vector3<f64>,
}

pub fn com_kinematics(s: &State, robot: &Robot) -> ComKinematics {
    let p = &robot.params;
    let rot = frame_rotations(s.phi, s.theta, s.psi, s.beta);
    let offset = rot.ground_pendulum * Vector3::new(0.0, -p.r_p, 0.0);
    let centre = Vector3::new(s.x, p.r_h, s.z);
    let v_centre = Vector3::new(s.dx, 0.0, s.dz);
    let omega_ground = rot.ground_pendulum * angular_velocities(s).pendulum;
    ComKinematics {
        v_hull: v_centre,
        v_yoke: v_centre,
        v_pendulum: v_centre + omega_ground.cross(&offset),
        r_pendulum: centre + offset,
        r_pendulum_rel: offset,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energies {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// Kinetic energy from body velocities; potential energy with the datum at
/// the hull centre (yoke centre of mass sits on it).
pub fn energies(s: &State, robot: &Robot) -> Energies {
    let p = &robot.params;
    let inertia = &robot.inertia;
    let com = com_kinematics(s, robot);
    let w = angular_velocities(s);
    let quad = |diag: &[f64; 3], v: &Vector3<f64>| {
        diag[0] * v.x * v.x + diag[1] * v.y * v.y + diag[2] * v.z * v.z
    };
    let translational = p.m_h * com.v_hull.norm_squared()
        + p.m_y * com.v_yoke.norm_squared()
        + p.m_p * com.v_pendulum.norm_squared();
    let rotational = quad(&inertia.hull, &w.hull)
        + quad(&inertia.yoke, &w.yoke)
        + quad(&inertia.pendulum, &w.pendulum);
    Energies {
        kinetic: 0.5 * (translational + rotational),
        potential: p.m_p * p.g * com.r_pendulum_rel.y,
    }
}

//! Constrained equations of motion.
//!
//! Generalized coordinates are ordered like the state, `q = [φ θ ψ β X Z]`.
//! The mass matrix is the Hessian of the kinetic energy in `q̇`; velocity
//! forces come from the Christoffel construction on exact `∂M/∂q`, and the
//! rolling constraints enter through multipliers:
//!
//! ```text
//! [ M  -Aᵀ ] [ q̈ ]   [ Q - c(q, q̇) - ∂V/∂q ]
//! [ A   0  ] [ λ  ] = [ -Ȧ q̇                ]
//! ```
//!
//! The system is linear in the torques, so one factorization per state
//! yields the drift `f` and both input columns of `G`.

use nalgebra::{SMatrix, SVector, Matrix2x6, Matrix6, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Robot;
use crate::state::{State, StateVector};

pub const PHI: usize = 0;
pub const THETA: usize = 1;
pub const PSI: usize = 2;
pub const BETA: usize = 3;
pub const X: usize = 4;
pub const Z: usize = 5;

/// Above this estimate the augmented matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

type Matrix8 = SMatrix<f64, 8, 8>;
type Vector8 = SVector<f64, 8>;

/// Rolling torque (hull relative to yoke) and pendulum torque, N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub t_s: f64,
    pub t_p: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { t_s: 0.0, t_p: 0.0 };

    pub fn new(t_s: f64, t_p: f64) -> Self {
        Self { t_s, t_p }
    }

    pub fn is_finite(&self) -> bool {
        self.t_s.is_finite() && self.t_p.is_finite()
    }
}

/// How one actuator channel is driven during a derivative evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    /// Apply this torque.
    Torque(f64),
    /// Apply whatever torque keeps the channel's coordinate acceleration at
    /// zero (ψ̈ for the rolling motor, β̈ for the pendulum motor).
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuation {
    pub rolling: Drive,
    pub pendulum: Drive,
}

impl Actuation {
    pub fn torques(u: ControlInput) -> Self {
        Self {
            rolling: Drive::Torque(u.t_s),
            pendulum: Drive::Torque(u.t_p),
        }
    }

    /// Zero rolling torque, ideal pendulum hold.
    pub fn pendulum_hold() -> Self {
        Self {
            rolling: Drive::Torque(0.0),
            pendulum: Drive::Hold,
        }
    }
}

impl From<ControlInput> for Actuation {
    fn from(u: ControlInput) -> Self {
        Actuation::torques(u)
    }
}

/// Mass matrix `M(q)`; depends on φ, θ and β only.
pub fn mass_matrix(q: &[f64; 6], robot: &Robot) -> Matrix6<f64> {
    let p = &robot.params;
    let i_h = robot.inertia.i_h;
    let i_y = robot.inertia.i_y;
    let j = p.m_p * p.r_p * p.r_p + robot.pendulum_inertia();
    let mr = p.m_p * p.r_p;
    let (sf, cf) = q[PHI].sin_cos();
    let (st, ct) = q[THETA].sin_cos();
    let (sa, ca) = (q[THETA] + q[BETA]).sin_cos();

    let mut m = Matrix6::zeros();
    m[(PHI, PHI)] = j * sa * sa + i_h + i_y * (1.0 + ct * ct);
    m[(THETA, THETA)] = j + i_h + i_y;
    m[(PSI, PSI)] = i_h;
    m[(BETA, BETA)] = j;
    m[(X, X)] = p.total_mass();
    m[(Z, Z)] = p.total_mass();
    set_sym(&mut m, PHI, PSI, -i_h * st);
    set_sym(&mut m, THETA, BETA, j);
    set_sym(&mut m, X, PHI, -mr * cf * sa);
    set_sym(&mut m, X, THETA, -mr * sf * ca);
    set_sym(&mut m, X, BETA, -mr * sf * ca);
    set_sym(&mut m, Z, PHI, mr * sf * sa);
    set_sym(&mut m, Z, THETA, -mr * cf * ca);
    set_sym(&mut m, Z, BETA, -mr * cf * ca);
    m
}

fn set_sym(m: &mut Matrix6<f64>, i: usize, k: usize, v: f64) {
    m[(i, k)] = v;
    m[(k, i)] = v;
}

/// `∂M/∂q_k` for every coordinate (ψ, X and Z partials are zero).
pub fn mass_matrix_partials(q: &[f64; 6], robot: &Robot) -> [Matrix6<f64>; 6] {
    let p = &robot.params;
    let i_h = robot.inertia.i_h;
    let i_y = robot.inertia.i_y;
    let j = p.m_p * p.r_p * p.r_p + robot.pendulum_inertia();
    let mr = p.m_p * p.r_p;
    let (sf, cf) = q[PHI].sin_cos();
    let (st, ct) = q[THETA].sin_cos();
    let alpha = q[THETA] + q[BETA];
    let (sa, ca) = alpha.sin_cos();

    let mut d_phi = Matrix6::zeros();
    set_sym(&mut d_phi, X, PHI, mr * sf * sa);
    set_sym(&mut d_phi, X, THETA, -mr * cf * ca);
    set_sym(&mut d_phi, X, BETA, -mr * cf * ca);
    set_sym(&mut d_phi, Z, PHI, mr * cf * sa);
    set_sym(&mut d_phi, Z, THETA, mr * sf * ca);
    set_sym(&mut d_phi, Z, BETA, mr * sf * ca);

    // α-dependent entries share their derivative between θ and β
    let mut d_alpha = Matrix6::zeros();
    d_alpha[(PHI, PHI)] = j * (2.0 * alpha).sin();
    set_sym(&mut d_alpha, X, PHI, -mr * cf * ca);
    set_sym(&mut d_alpha, X, THETA, mr * sf * sa);
    set_sym(&mut d_alpha, X, BETA, mr * sf * sa);
    set_sym(&mut d_alpha, Z, PHI, mr * sf * ca);
    set_sym(&mut d_alpha, Z, THETA, mr * cf * sa);
    set_sym(&mut d_alpha, Z, BETA, mr * cf * sa);

    let mut d_theta = d_alpha;
    d_theta[(PHI, PHI)] -= 2.0 * i_y * st * ct;
    set_sym(&mut d_theta, PHI, PSI, -i_h * ct);

    let zero = Matrix6::zeros();
    [d_phi, d_theta, zero, d_alpha, zero, zero]
}

/// Velocity-product generalized forces `c_i = (Ṁ q̇)_i − ½ q̇ᵀ ∂M/∂q_i q̇`.
pub fn velocity_forces(q: &[f64; 6], qd: &[f64; 6], robot: &Robot) -> Vector6<f64> {
    let partials = mass_matrix_partials(q, robot);
    let v = Vector6::from_column_slice(qd);
    let mut mdot = Matrix6::zeros();
    for (k, dm) in partials.iter().enumerate() {
        if qd[k] != 0.0 {
            mdot += dm * qd[k];
        }
    }
    let mut c = mdot * v;
    for (i, dm) in partials.iter().enumerate() {
        c[i] -= 0.5 * v.dot(&(dm * v));
    }
    c
}

/// `∂V/∂q`.
pub fn gravity_forces(q: &[f64; 6], robot: &Robot) -> Vector6<f64> {
    let p = &robot.params;
    let torque = p.m_p * p.g * p.r_p * (q[THETA] + q[BETA]).sin();
    let mut g = Vector6::zeros();
    g[THETA] = torque;
    g[BETA] = torque;
    g
}

/// Rolling constraint matrix in state coordinate order, so that `A q̇` is the
/// pair of no-slip residuals.
pub fn constraint_matrix(q: &[f64; 6], robot: &Robot) -> Matrix2x6<f64> {
    let r = robot.params.r_h;
    let (sf, cf) = q[PHI].sin_cos();
    let ct = q[THETA].cos();
    let mut a = Matrix2x6::zeros();
    a[(0, THETA)] = -r * sf;
    a[(0, PSI)] = r * cf * ct;
    a[(0, X)] = 1.0;
    a[(1, THETA)] = -r * cf;
    a[(1, PSI)] = -r * sf * ct;
    a[(1, Z)] = 1.0;
    a
}

/// `Ȧ q̇`.
pub fn constraint_bias(q: &[f64; 6], qd: &[f64; 6], robot: &Robot) -> Vector2<f64> {
    let r = robot.params.r_h;
    let (sf, cf) = q[PHI].sin_cos();
    let (st, ct) = q[THETA].sin_cos();
    let (dphi, dtheta, dpsi) = (qd[PHI], qd[THETA], qd[PSI]);
    Vector2::new(
        -r * cf * dphi * dtheta - r * dpsi * (sf * ct * dphi + cf * st * dtheta),
        r * sf * dphi * dtheta - r * dpsi * (cf * ct * dphi - sf * st * dtheta),
    )
}

/// No-slip residuals `[Ẋ − r_h(θ̇ sinφ − ψ̇ cosφ cosθ), Ż − r_h(θ̇ cosφ + ψ̇ sinφ cosθ)]`, m/s.
pub fn rolling_residual(s: &State, robot: &Robot) -> [f64; 2] {
    let r = robot.params.r_h;
    let (sf, cf) = s.phi.sin_cos();
    let ct = s.theta.cos();
    [
        s.dx - r * (s.dtheta * sf - s.dpsi * cf * ct),
        s.dz - r * (s.dtheta * cf + s.dpsi * sf * ct),
    ]
}

/// Overwrites Ẋ and Ż so the rolling constraints hold exactly.
pub fn enforce_rolling(s: &mut State, robot: &Robot) {
    let r = robot.params.r_h;
    let (sf, cf) = s.phi.sin_cos();
    let ct = s.theta.cos();
    s.dx = r * (s.dtheta * sf - s.dpsi * cf * ct);
    s.dz = r * (s.dtheta * cf + s.dpsi * sf * ct);
}

/// Rolling constraint Jacobian with columns ordered `[X Z φ θ ψ β]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintJacobian {
    pub a: Matrix2x6<f64>,
    /// `Ȧ q̇`, same for either column ordering.
    pub bias: Vector2<f64>,
}

impl ConstraintJacobian {
    /// Generalized velocities in `[X Z φ θ ψ β]` order.
    pub fn velocities(s: &State) -> Vector6<f64> {
        Vector6::new(s.dx, s.dz, s.dphi, s.dtheta, s.dpsi, s.dbeta)
    }
}

pub fn constraint_jacobian(s: &State, robot: &Robot) -> ConstraintJacobian {
    let q = s.coords();
    let a_state = constraint_matrix(&q, robot);
    let order = [X, Z, PHI, THETA, PSI, BETA];
    let mut a = Matrix2x6::zeros();
    for (col, &src) in order.iter().enumerate() {
        a.set_column(col, &a_state.column(src));
    }
    ConstraintJacobian {
        a,
        bias: constraint_bias(&q, &s.rates(), robot),
    }
}

/// Accelerations and multipliers from one augmented solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EomSolution {
    /// `q̈` in state order `[φ̈ θ̈ ψ̈ β̈ Ẍ Z̈]`.
    pub qdd: [f64; 6],
    pub lambda: [f64; 2],
}

/// The factorized augmented system at one state; answers any torque pair.
#[derive(Debug, Clone)]
pub struct EomSystem {
    rates: [f64; 6],
    drift: Vector8,
    rolling_column: Vector8,
    pendulum_column: Vector8,
    condition: f64,
}

impl EomSystem {
    pub fn new(s: &State, robot: &Robot) -> Result<Self> {
        let q = s.coords();
        let qd = s.rates();
        let m = mass_matrix(&q, robot);
        let a = constraint_matrix(&q, robot);

        let mut k = Matrix8::zeros();
        k.fixed_view_mut::<6, 6>(0, 0).copy_from(&m);
        k.fixed_view_mut::<6, 2>(0, 6).copy_from(&(-a.transpose()));
        k.fixed_view_mut::<2, 6>(6, 0).copy_from(&a);

        let inv = k
            .try_inverse()
            .ok_or(Error::DegenerateConfiguration { condition: f64::INFINITY })?;
        let condition = one_norm(&k) * one_norm(&inv);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::DegenerateConfiguration { condition });
        }

        let forces = -velocity_forces(&q, &qd, robot) - gravity_forces(&q, robot);
        let bias = constraint_bias(&q, &qd, robot);
        let mut rhs = Vector8::zeros();
        rhs.fixed_rows_mut::<6>(0).copy_from(&forces);
        rhs[6] = -bias[0];
        rhs[7] = -bias[1];

        Ok(Self {
            rates: qd,
            drift: inv * rhs,
            rolling_column: inv.column(PSI).into_owned(),
            pendulum_column: inv.column(BETA).into_owned(),
            condition,
        })
    }

    /// 1-norm condition estimate of the augmented matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, u: ControlInput) -> EomSolution {
        let x = self.drift + self.rolling_column * u.t_s + self.pendulum_column * u.t_p;
        EomSolution {
            qdd: [x[0], x[1], x[2], x[3], x[4], x[5]],
            lambda: [x[6], x[7]],
        }
    }

    /// Resolves held channels into the torques that realize them.
    pub fn resolve(&self, act: &Actuation) -> ControlInput {
        match (act.rolling, act.pendulum) {
            (Drive::Torque(t_s), Drive::Torque(t_p)) => ControlInput { t_s, t_p },
            (Drive::Torque(t_s), Drive::Hold) => {
                let t_p = -(self.drift[BETA] + self.rolling_column[BETA] * t_s)
                    / self.pendulum_column[BETA];
                ControlInput { t_s, t_p }
            }
            (Drive::Hold, Drive::Torque(t_p)) => {
                let t_s = -(self.drift[PSI] + self.pendulum_column[PSI] * t_p)
                    / self.rolling_column[PSI];
                ControlInput { t_s, t_p }
            }
            (Drive::Hold, Drive::Hold) => {
                let (a, b) = (self.rolling_column[PSI], self.pendulum_column[PSI]);
                let (c, d) = (self.rolling_column[BETA], self.pendulum_column[BETA]);
                let det = a * d - b * c;
                let (r1, r2) = (-self.drift[PSI], -self.drift[BETA]);
                ControlInput {
                    t_s: (d * r1 - b * r2) / det,
                    t_p: (a * r2 - c * r1) / det,
                }
            }
        }
    }

    /// Full state derivative under `u`.
    pub fn derivative(&self, u: ControlInput) -> StateVector {
        let sol = self.solve(u);
        let mut d = StateVector::zeros();
        for i in 0..6 {
            d[i] = self.rates[i];
            d[6 + i] = sol.qdd[i];
        }
        d
    }

    pub fn affine(&self) -> AffineDecomposition {
        let mut f = StateVector::zeros();
        let mut g = SMatrix::<f64, 12, 2>::zeros();
        for i in 0..6 {
            f[i] = self.rates[i];
            f[6 + i] = self.drift[i];
            g[(6 + i, 0)] = self.rolling_column[i];
            g[(6 + i, 1)] = self.pendulum_column[i];
        }
        AffineDecomposition { f, g }
    }
}

fn one_norm(m: &Matrix8) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn assemble_eom(s: &State, u: ControlInput, robot: &Robot) -> Result<EomSolution> {
    Ok(EomSystem::new(s, robot)?.solve(u))
}

pub fn state_derivative(s: &State, u: ControlInput, robot: &Robot) -> Result<StateVector> {
    Ok(EomSystem::new(s, robot)?.derivative(u))
}

/// Control-affine split `ẋ = f(x) + G(x) u`.
///
/// Rows are in state order; the 1-based entry `G_{i,j}` is
/// `g[(i-1, j-1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDecomposition {
    pub f: StateVector,
    pub g: SMatrix<f64, 12, 2>,
}

impl AffineDecomposition {
    pub fn apply(&self, u: ControlInput) -> StateVector {
        self.f + self.g.column(0) * u.t_s + self.g.column(1) * u.t_p
    }

    /// 1-based drift entry, e.g. `f_at(8)` is the θ̈ drift.
    pub fn f_at(&self, row: usize) -> f64 {
        self.f[row - 1]
    }

    /// 1-based input-matrix entry, e.g. `g_at(8, 2)`.
    pub fn g_at(&self, row: usize, col: usize) -> f64 {
        self.g[(row - 1, col - 1)]
    }
}

pub fn affine_decomposition(s: &State, robot: &Robot) -> Result<AffineDecomposition> {
    Ok(EomSystem::new(s, robot)?.affine())
}

/// Minimum-norm velocity correction that restores the rolling constraints.
pub fn project_rolling(s: &mut State, robot: &Robot) {
    let q = s.coords();
    let a = constraint_matrix(&q, robot);
    let v = Vector6::from_column_slice(&s.rates());
    let aat = a * a.transpose();
    if let Some(inv) = aat.try_inverse() {
        let corrected = v - a.transpose() * (inv * (a * v));
        s.dphi = corrected[PHI];
        s.dtheta = corrected[THETA];
        s.dpsi = corrected[PSI];
        s.dbeta = corrected[BETA];
        s.dx = corrected[X];
        s.dz = corrected[Z];
    }
}

//! Physical parameters of the robot and the inertias derived from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Masses, radii and gravity identifying one robot. SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Hull (shell) mass, kg.
    pub m_h: f64,
    /// Yoke mass, kg.
    pub m_y: f64,
    /// Pendulum mass, kg.
    pub m_p: f64,
    /// Hull radius, m.
    pub r_h: f64,
    /// Distance from the hull centre to the pendulum centre of mass, m.
    pub r_p: f64,
    /// Gravitational acceleration, m/s².
    pub g: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            m_h: 2.0,
            m_y: 1.5,
            m_p: 3.0,
            r_h: 0.15,
            r_p: 0.10,
            g: 9.81,
        }
    }
}

impl RobotParams {
    /// Checks physical admissibility. A massless pendulum is accepted (its
    /// inertia is zero) but the full dynamics are degenerate for it.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m_h", self.m_h),
            ("m_y", self.m_y),
            ("m_p", self.m_p),
            ("r_h", self.r_h),
            ("r_p", self.r_p),
            ("g", self.g),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::InvalidParameters(format!("{name} is not finite")));
            }
        }
        if self.m_h <= 0.0 || self.m_y <= 0.0 {
            return Err(Error::InvalidParameters(
                "hull and yoke masses must be strictly positive".into(),
            ));
        }
        if self.m_p < 0.0 {
            return Err(Error::InvalidParameters("pendulum mass must be nonnegative".into()));
        }
        if self.r_h <= 0.0 || self.r_p <= 0.0 {
            return Err(Error::InvalidParameters("radii must be strictly positive".into()));
        }
        if self.r_p >= self.r_h {
            return Err(Error::InvalidParameters(format!(
                "pendulum offset r_p = {} must be smaller than hull radius r_h = {}",
                self.r_p, self.r_h
            )));
        }
        if self.g <= 0.0 {
            return Err(Error::InvalidParameters("gravity must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let params: RobotParams = serde_json::from_str(s)?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    /// m_h + m_y + m_p.
    pub fn total_mass(&self) -> f64 {
        self.m_h + self.m_y + self.m_p
    }
}

/// Which scalar fills the pendulum inertia tensor diag(I, 0, I).
///
/// `PendulumScalar` uses I_p = m_p r_p² / 3. `YokeScalar` reproduces the
/// alternative reading diag(I_y, 0, I_y) for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendulumTensor {
    #[default]
    PendulumScalar,
    YokeScalar,
}

/// Scalar inertias and the body-frame diagonal inertia tensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaSet {
    pub i_h: f64,
    pub i_y: f64,
    pub i_p: f64,
    pub hull: [f64; 3],
    pub yoke: [f64; 3],
    pub pendulum: [f64; 3],
}

impl InertiaSet {
    /// Pendulum tensor entry about its x and z axes.
    pub fn pendulum_transverse(&self) -> f64 {
        self.pendulum[0]
    }
}

/// I_h = 2/3 m_h r_h², I_y = 1/4 m_y r_h², I_p = 1/3 m_p r_p².
pub fn derive_inertias(params: &RobotParams) -> Result<InertiaSet> {
    derive_inertias_with(params, PendulumTensor::default())
}

pub fn derive_inertias_with(params: &RobotParams, tensor: PendulumTensor) -> Result<InertiaSet> {
    params.validate()?;
    let i_h = 2.0 / 3.0 * params.m_h * params.r_h * params.r_h;
    let i_y = 0.25 * params.m_y * params.r_h * params.r_h;
    let i_p = params.m_p * params.r_p * params.r_p / 3.0;
    let transverse = match tensor {
        PendulumTensor::PendulumScalar => i_p,
        PendulumTensor::YokeScalar => i_y,
    };
    Ok(InertiaSet {
        i_h,
        i_y,
        i_p,
        hull: [i_h, i_h, i_h],
        yoke: [i_y, 2.0 * i_y, i_y],
        pendulum: [transverse, 0.0, transverse],
    })
}

/// Validated parameters bundled with their inertias; the argument every
/// dynamics routine takes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub params: RobotParams,
    pub inertia: InertiaSet,
    pub tensor: PendulumTensor,
}

impl Robot {
    pub fn new(params: RobotParams) -> Result<Self> {
        Self::with_tensor(params, PendulumTensor::default())
    }

    pub fn with_tensor(params: RobotParams, tensor: PendulumTensor) -> Result<Self> {
        let inertia = derive_inertias_with(&params, tensor)?;
        Ok(Self {
            params,
            inertia,
            tensor,
        })
    }

    /// Pendulum inertia about its swing axis as used by the kinetic energy.
    pub(crate) fn pendulum_inertia(&self) -> f64 {
        self.inertia.pendulum_transverse()
    }
}

impl Default for Robot {
    fn default() -> Self {
        Self::new(RobotParams::default()).expect("default parameters are valid")
    }
}

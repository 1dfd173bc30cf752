//! The 12-dimensional state vector.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

pub type StateVector = SVector<f64, 12>;

/// Configuration and rates, ordered `[φ θ ψ β X Z φ̇ θ̇ ψ̇ β̇ Ẋ Ż]` when flattened.
///
/// Angles in radians, positions in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    /// Heading angle.
    pub phi: f64,
    /// Lean angle.
    pub theta: f64,
    /// Forward spin of the hull relative to the yoke.
    pub psi: f64,
    /// Pendulum angle relative to the yoke.
    pub beta: f64,
    /// Hull centre, global X.
    pub x: f64,
    /// Hull centre, global Z.
    pub z: f64,
    pub dphi: f64,
    pub dtheta: f64,
    pub dpsi: f64,
    pub dbeta: f64,
    pub dx: f64,
    pub dz: f64,
}

/// Column names matching [`State::to_array`].
pub const STATE_NAMES: [&str; 12] = [
    "phi", "theta", "psi", "beta", "X", "Z", "dphi", "dtheta", "dpsi", "dbeta", "dX", "dZ",
];

impl State {
    pub fn from_array(v: [f64; 12]) -> Self {
        Self {
            phi: v[0],
            theta: v[1],
            psi: v[2],
            beta: v[3],
            x: v[4],
            z: v[5],
            dphi: v[6],
            dtheta: v[7],
            dpsi: v[8],
            dbeta: v[9],
            dx: v[10],
            dz: v[11],
        }
    }

    pub fn to_array(&self) -> [f64; 12] {
        [
            self.phi, self.theta, self.psi, self.beta, self.x, self.z, self.dphi, self.dtheta,
            self.dpsi, self.dbeta, self.dx, self.dz,
        ]
    }

    pub fn from_vector(v: &StateVector) -> Self {
        let mut a = [0.0; 12];
        a.copy_from_slice(v.as_slice());
        Self::from_array(a)
    }

    pub fn to_vector(&self) -> StateVector {
        StateVector::from_column_slice(&self.to_array())
    }

    /// Generalized coordinates `[φ θ ψ β X Z]`.
    pub fn coords(&self) -> [f64; 6] {
        [self.phi, self.theta, self.psi, self.beta, self.x, self.z]
    }

    /// Generalized velocities in the same order as [`State::coords`].
    pub fn rates(&self) -> [f64; 6] {
        [self.dphi, self.dtheta, self.dpsi, self.dbeta, self.dx, self.dz]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Rest configuration, pendulum hanging straight down.
    pub fn rest() -> Self {
        Self::default()
    }
}

impl From<StateVector> for State {
    fn from(v: StateVector) -> Self {
        Self::from_vector(&v)
    }
}

impl From<State> for StateVector {
    fn from(s: State) -> Self {
        s.to_vector()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn array_round_trip(v in proptest::array::uniform12(-1e3f64..1e3)) {
            let s = State::from_array(v);
            prop_assert_eq!(s.to_array(), v);
            prop_assert_eq!(State::from_vector(&s.to_vector()), s);
        }
    }

    #[test]
    fn layout_matches_names() {
        let s = State::from_array(std::array::from_fn(|i| i as f64));
        assert_eq!(s.beta, 3.0);
        assert_eq!(s.dx, 10.0);
        assert_eq!(STATE_NAMES[10], "dX");
        assert_eq!(s.coords(), [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.rates(), [6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }
}

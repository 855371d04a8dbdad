//! Reduced mass and energy balance of an aluminum electrolysis cell.
//!
//! Eight states (masses and temperatures) evolve under five control inputs.
//! The right-hand side lives in [`model`], fixed-step integration in
//! [`integrate`] and trajectory storage in [`series`].
//!
//! The line current `u2` is used as the raw numeric value of the control
//! table (nominal `14e3`), which is the scale the constants `k3` and `k6`
//! and the bubble correlations are calibrated for.

pub mod integrate;
pub mod model;
pub mod series;

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub use integrate::{rk4, rk4_step, simulate, simulate_controlled};
pub use model::{derived_quantities, rhs, DerivedQuantities};
pub use series::TimeSeries;

pub const STATE_DIM: usize = 8;
pub const INPUT_DIM: usize = 5;
/// Width of one regression row: states followed by inputs.
pub const FEATURE_DIM: usize = STATE_DIM + INPUT_DIM;

pub const STATE_NAMES: [&str; STATE_DIM] = ["x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8"];
pub const INPUT_NAMES: [&str; INPUT_DIM] = ["u1", "u2", "u3", "u4", "u5"];
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "u1", "u2", "u3", "u4", "u5",
];

/// Cell state `x1..x8`.
///
/// | index | quantity                | unit |
/// |-------|-------------------------|------|
/// | 0     | side ledge mass         | kg   |
/// | 1     | Al2O3 mass              | kg   |
/// | 2     | AlF3 mass               | kg   |
/// | 3     | Na3AlF6 (cryolite) mass | kg   |
/// | 4     | metal mass              | kg   |
/// | 5     | bath temperature        | °C   |
/// | 6     | side ledge temperature  | °C   |
/// | 7     | wall temperature        | °C   |
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellState<T>(pub [T; STATE_DIM]);

/// Control inputs `u1..u5`: Al2O3 feed, line current, AlF3 feed, metal
/// tapping and anode-cathode distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellInput<T>(pub [T; INPUT_DIM]);

impl<T: Scalar> CellState<T> {
    pub fn side_ledge_mass(&self) -> T {
        self.0[0]
    }
    pub fn alumina_mass(&self) -> T {
        self.0[1]
    }
    pub fn alf3_mass(&self) -> T {
        self.0[2]
    }
    pub fn cryolite_mass(&self) -> T {
        self.0[3]
    }
    pub fn metal_mass(&self) -> T {
        self.0[4]
    }
    pub fn bath_temperature(&self) -> T {
        self.0[5]
    }
    pub fn ledge_temperature(&self) -> T {
        self.0[6]
    }
    pub fn wall_temperature(&self) -> T {
        self.0[7]
    }

    /// Dissolved bath mass `x2 + x3 + x4`.
    pub fn bath_mass(&self) -> T {
        self.0[1] + self.0[2] + self.0[3]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Checks the invariants of a simulator-produced state: every entry finite
    /// and every mass strictly positive.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(format!("{} is not finite", STATE_NAMES[i]));
        }
        if let Some(i) = self.0[..5].iter().position(|&v| v <= T::zero()) {
            return Err(format!("mass {} = {} is not positive", STATE_NAMES[i], self.0[i]));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> CellState<U> {
        CellState(crate::scalar::cast_array(&self.0))
    }
}

impl<T: Scalar> CellInput<T> {
    pub fn alumina_feed(&self) -> T {
        self.0[0]
    }
    pub fn line_current(&self) -> T {
        self.0[1]
    }
    pub fn alf3_feed(&self) -> T {
        self.0[2]
    }
    pub fn metal_tapping(&self) -> T {
        self.0[3]
    }
    pub fn anode_cathode_distance(&self) -> T {
        self.0[4]
    }

    pub fn cast<U: Scalar>(&self) -> CellInput<U> {
        CellInput(crate::scalar::cast_array(&self.0))
    }
}

impl<T> Index<usize> for CellState<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for CellState<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T> Index<usize> for CellInput<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// Concatenates a state and an input into one regression row.
pub fn feature_row<T: Scalar>(state: &CellState<T>, input: &CellInput<T>) -> [T; FEATURE_DIM] {
    let mut row = [T::zero(); FEATURE_DIM];
    row[..STATE_DIM].copy_from_slice(&state.0);
    row[STATE_DIM..].copy_from_slice(&input.0);
    row
}

/// Simulator constants. Defaults reproduce the published parameter table;
/// `crit_pr_x2` is the alumina weight percent at anode effect and `dt` the
/// sampling interval in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConstants<T> {
    pub k0: T,
    pub k1: T,
    pub k2: T,
    pub k3: T,
    pub k4: T,
    pub k5: T,
    pub k6: T,
    pub k7: T,
    pub k8: T,
    pub k9: T,
    pub k10: T,
    pub k11: T,
    pub k12: T,
    pub k13: T,
    pub k14: T,
    pub k15: T,
    pub k16: T,
    pub k17: T,
    pub k18: T,
    pub alpha: T,
    pub beta: T,
    pub crit_pr_x2: T,
    pub dt: T,
}

impl<T: Scalar> Default for SimConstants<T> {
    fn default() -> Self {
        Self {
            k0: T::lit(2e-5),
            k1: T::lit(7.5e-4),
            k2: T::lit(0.18),
            k3: T::lit(1.7e-7),
            k4: T::lit(0.036),
            k5: T::lit(0.03),
            k6: T::lit(4.43e-8),
            k7: T::lit(338.0),
            k8: T::lit(1.41),
            k9: T::lit(17.92),
            k10: T::lit(0.00083),
            k11: T::lit(0.2),
            k12: T::lit(237.5),
            k13: T::lit(0.99),
            k14: T::lit(0.0077),
            k15: T::lit(0.2),
            k16: T::lit(35.0),
            k17: T::lit(5.8e-7),
            k18: T::lit(0.04),
            alpha: T::lit(5.66e-4),
            beta: T::lit(7.58e-4),
            crit_pr_x2: T::lit(2.0),
            dt: T::lit(30.0),
        }
    }
}

impl<T: Scalar> SimConstants<T> {
    fn named(&self) -> [(&'static str, T); 23] {
        [
            ("k0", self.k0),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("k5", self.k5),
            ("k6", self.k6),
            ("k7", self.k7),
            ("k8", self.k8),
            ("k9", self.k9),
            ("k10", self.k10),
            ("k11", self.k11),
            ("k12", self.k12),
            ("k13", self.k13),
            ("k14", self.k14),
            ("k15", self.k15),
            ("k16", self.k16),
            ("k17", self.k17),
            ("k18", self.k18),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("crit_pr_x2", self.crit_pr_x2),
            ("dt", self.dt),
        ]
    }

    /// Every constant must be finite and strictly positive.
    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in self.named() {
            if !v.is_finite() || v <= T::zero() {
                return Err(crate::Error::Config(format!(
                    "simulator constant {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> SimConstants<U> {
        let c = |v: T| U::lit(v.as_f64());
        SimConstants {
            k0: c(self.k0),
            k1: c(self.k1),
            k2: c(self.k2),
            k3: c(self.k3),
            k4: c(self.k4),
            k5: c(self.k5),
            k6: c(self.k6),
            k7: c(self.k7),
            k8: c(self.k8),
            k9: c(self.k9),
            k10: c(self.k10),
            k11: c(self.k11),
            k12: c(self.k12),
            k13: c(self.k13),
            k14: c(self.k14),
            k15: c(self.k15),
            k16: c(self.k16),
            k17: c(self.k17),
            k18: c(self.k18),
            alpha: c(self.alpha),
            beta: c(self.beta),
            crit_pr_x2: c(self.crit_pr_x2),
            dt: c(self.dt),
        }
    }
}

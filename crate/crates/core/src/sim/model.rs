//! Nonlinear right-hand side `ẋ = f(x, u)` of the cell.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{CellInput, CellState, SimConstants, STATE_DIM, STATE_NAMES};

/// Intermediate quantities shared by several state equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedQuantities<T> {
    /// Mass fraction of Al2O3 in the bath.
    pub c_x2: T,
    /// Mass fraction of AlF3 in the bath.
    pub c_x3: T,
    pub pr_x2: T,
    pub pr_x3: T,
    /// Liquidus temperature [°C].
    pub g1: T,
    /// Bath electrical conductivity.
    pub g2: T,
    /// Anode bubble coverage (fraction).
    pub g3: T,
    /// Bubble layer thickness [cm].
    pub g4: T,
    /// Bubble voltage drop.
    pub g5: T,
}

/// Liquidus temperature as a function of the alumina and aluminum fluoride
/// weight percentages.
pub fn liquidus_temperature<T: Scalar>(pr_x2: T, pr_x3: T) -> T {
    let l = T::lit;
    l(991.2) + l(1.12) * pr_x3 - l(0.13) * pr_x3.powf(l(2.2)) + l(0.061) * pr_x3.powf(l(1.5))
        - l(7.93) * pr_x2
            / (T::one() + l(0.0936) * pr_x3 - l(0.0017) * pr_x3 * pr_x3 - l(0.0023) * pr_x3 * pr_x2)
}

/// Bath conductivity for bath temperature `x6` [°C] and alumina fraction.
pub fn bath_conductivity<T: Scalar>(x6: T, c_x2: T) -> T {
    let l = T::lit;
    (l(2.496) - l(2068.4) / (l(273.0) + x6) - l(2.07) * c_x2).exp()
}

pub fn derived_quantities<T: Scalar>(
    state: &CellState<T>,
    input: &CellInput<T>,
    consts: &SimConstants<T>,
) -> Result<DerivedQuantities<T>> {
    let l = T::lit;
    let bath = state.bath_mass();
    if bath == T::zero() {
        return Err(Error::DivisionByZero("x2 + x3 + x4 = 0"));
    }
    let c_x2 = state.alumina_mass() / bath;
    let c_x3 = state.alf3_mass() / bath;
    let pr_x2 = l(100.0) * c_x2;
    let pr_x3 = l(100.0) * c_x3;

    let u2 = input.line_current();
    let g1 = liquidus_temperature(pr_x2, pr_x3);
    let g2 = bath_conductivity(state.bath_temperature(), c_x2);
    if g2 == T::zero() {
        return Err(Error::DivisionByZero("bath conductivity g2 = 0"));
    }
    let excess = pr_x2 - consts.crit_pr_x2;
    let g3 = l(0.531) + l(6.958e-7) * u2 - l(2.51e-12) * u2 * u2 + l(3.06e-18) * u2 * u2 * u2
        + (l(0.431) - l(0.1437) * excess) / (T::one() + l(7.353) * excess);
    if g3 == T::one() {
        return Err(Error::DivisionByZero("bubble coverage g3 = 1"));
    }
    let g4 = (l(0.5517) + l(3.8168e-6) * u2) / (T::one() + l(8.271e-6) * u2);
    let g5 = l(3.8168e-6) * g3 * g4 * u2 / (g2 * (T::one() - g3));

    Ok(DerivedQuantities {
        c_x2,
        c_x3,
        pr_x2,
        pr_x3,
        g1,
        g2,
        g3,
        g4,
        g5,
    })
}

/// Time derivative of every state.
pub fn rhs<T: Scalar>(
    state: &CellState<T>,
    input: &CellInput<T>,
    k: &SimConstants<T>,
) -> Result<[T; STATE_DIM]> {
    let x = &state.0;
    let u = &input.0;
    if x[0] == T::zero() {
        return Err(Error::DivisionByZero("side ledge mass x1 = 0"));
    }
    let d = derived_quantities(state, input, k)?;
    let g1 = d.g1;
    let (x1, x6, x7, x8) = (x[0], x[5], x[6], x[7]);
    let ledge_scale = k.k0 * x1;

    // Net freezing of bath onto the side ledge; leaves the cryolite balance.
    let freezing = k.k1 * (g1 - x7) / ledge_scale - k.k2 * (x6 - g1);
    let wall_flux = (x7 - x8) / (k.k14 + k.k15 * ledge_scale);

    let bath_heat = u[1] * (d.g5 + u[1] * u[4] / (T::lit(2620.0) * d.g2))
        - k.k9 * (x6 - x7) / (k.k10 + k.k11 * ledge_scale)
        - (k.k7 * (x6 - g1) * (x6 - g1) - k.k8 * (x6 - g1) * (g1 - x7) / ledge_scale);
    let ledge_heat = -(k.k12 * (x6 - g1) * (g1 - x7) - k.k13 * (g1 - x7) * (g1 - x7) / ledge_scale)
        + k.k9 * (g1 - x7) / (k.k15 * ledge_scale)
        - wall_flux;

    let dx = [
        freezing,
        u[0] - k.k3 * u[1],
        u[2] - k.k4 * u[0],
        -freezing + k.k5 * u[0],
        k.k6 * u[1] - u[3],
        k.alpha / state.bath_mass() * bath_heat,
        k.beta / x1 * ledge_heat,
        k.k17 * k.k9 * (wall_flux - (x8 - k.k16) / (k.k14 + k.k18)),
    ];
    if let Some(i) = dx.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("derivative of {}", STATE_NAMES[i])));
    }
    Ok(dx)
}

//! Classical fourth-order Runge-Kutta integration with zero-order hold on the
//! inputs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{model::rhs, CellInput, CellState, SimConstants, TimeSeries};

/// One RK4 step of `ẋ = f(x)` for an arbitrary fixed-size system.
pub fn rk4<T, const N: usize, F>(x: &[T; N], dt: T, mut f: F) -> Result<[T; N]>
where
    T: Scalar,
    F: FnMut(&[T; N]) -> Result<[T; N]>,
{
    let half = dt / T::lit(2.0);
    let offset = |base: &[T; N], slope: &[T; N], h: T| {
        let mut out = *base;
        for (o, s) in out.iter_mut().zip(slope) {
            *o += h * *s;
        }
        out
    };
    let k1 = f(x)?;
    let k2 = f(&offset(x, &k1, half))?;
    let k3 = f(&offset(x, &k2, half))?;
    let k4 = f(&offset(x, &k3, dt))?;
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let mut next = *x;
    for i in 0..N {
        next[i] += sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    }
    Ok(next)
}

/// Advances the cell by `dt` seconds with `input` held constant.
pub fn rk4_step<T: Scalar>(
    state: &CellState<T>,
    input: &CellInput<T>,
    consts: &SimConstants<T>,
    dt: T,
) -> Result<CellState<T>> {
    rk4(&state.0, dt, |x| rhs(&CellState(*x), input, consts)).map(CellState)
}

fn checked_step<T: Scalar>(
    state: &CellState<T>,
    input: &CellInput<T>,
    consts: &SimConstants<T>,
    step: usize,
) -> Result<CellState<T>> {
    let next = rk4_step(state, input, consts, consts.dt).map_err(|e| Error::Divergence {
        step,
        reason: e.to_string(),
    })?;
    next.validate()
        .map_err(|reason| Error::Divergence { step: step + 1, reason })?;
    Ok(next)
}

/// Open-loop simulation over a recorded input sequence.
///
/// Produces `inputs.len() + 1` states. An empty input sequence yields only
/// the initial state.
pub fn simulate<T: Scalar>(
    x0: CellState<T>,
    inputs: &[CellInput<T>],
    consts: &SimConstants<T>,
) -> Result<TimeSeries<T>> {
    x0.validate()
        .map_err(|reason| Error::Divergence { step: 0, reason })?;
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0);
    for (k, u) in inputs.iter().enumerate() {
        let next = checked_step(&states[k], u, consts, k)?;
        states.push(next);
    }
    Ok(TimeSeries::new(states, inputs.to_vec(), consts.dt))
}

/// Closed-loop simulation: `control(state, step)` chooses the input held
/// over each step.
pub fn simulate_controlled<T, F>(
    x0: CellState<T>,
    steps: usize,
    consts: &SimConstants<T>,
    mut control: F,
) -> Result<TimeSeries<T>>
where
    T: Scalar,
    F: FnMut(&CellState<T>, usize) -> CellInput<T>,
{
    x0.validate()
        .map_err(|reason| Error::Divergence { step: 0, reason })?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    states.push(x0);
    for k in 0..steps {
        let u = control(&states[k], k);
        let next = checked_step(&states[k], &u, consts, k)?;
        inputs.push(u);
        states.push(next);
    }
    Ok(TimeSeries::new(states, inputs, consts.dt))
}

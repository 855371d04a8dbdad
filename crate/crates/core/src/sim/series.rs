//! Simulated trajectories and their CSV representation.
//!
//! Layout: header `x1..x8,u1..u5`, one row per sampled state; the input
//! applied over the following interval sits on the same row, so the final
//! row leaves its input fields blank. Lines starting with `#` carry
//! provenance and are skipped on read.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sim::{CellInput, CellState, INPUT_DIM, INPUT_NAMES, STATE_DIM, STATE_NAMES};

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    /// `x(0..=N)`.
    pub states: Vec<CellState<T>>,
    /// `u(0..N)`; `inputs[k]` drives the step from `states[k]` to `states[k + 1]`.
    pub inputs: Vec<CellInput<T>>,
    pub dt: T,
}

impl<T: Scalar> TimeSeries<T> {
    pub fn new(states: Vec<CellState<T>>, inputs: Vec<CellInput<T>>, dt: T) -> Self {
        debug_assert_eq!(states.len(), inputs.len() + 1);
        Self { states, inputs, dt }
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(CellState::is_finite)
            && self.inputs.iter().all(|u| u.0.iter().all(|v| v.is_finite()))
    }

    pub fn write_csv<W: Write>(&self, out: W, comments: &[String]) -> Result<()> {
        let mut out = out;
        for c in comments {
            writeln!(out, "# {c}").map_err(|e| Error::io("<csv>", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(STATE_NAMES.iter().chain(INPUT_NAMES.iter()))?;
        for (k, x) in self.states.iter().enumerate() {
            let mut row: Vec<String> = x.0.iter().map(|v| v.to_string()).collect();
            match self.inputs.get(k) {
                Some(u) => row.extend(u.0.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), INPUT_DIM)),
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save(&self, path: &Path, comments: &[String]) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), comments)
    }

    pub fn read_csv<R: Read>(input: R, dt: T) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        let mut open_row = false;
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if open_row {
                return Err(Error::InvalidArgument(format!(
                    "trajectory row {line} follows a row without inputs"
                )));
            }
            if rec.len() != STATE_DIM + INPUT_DIM {
                return Err(Error::DimensionMismatch {
                    expected: STATE_DIM + INPUT_DIM,
                    got: rec.len(),
                });
            }
            let parse = |s: &str| -> Result<T> {
                s.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| Error::InvalidArgument(format!("row {line}: cannot parse {s:?}")))
            };
            let mut x = [T::zero(); STATE_DIM];
            for (i, v) in x.iter_mut().enumerate() {
                *v = parse(&rec[i])?;
            }
            states.push(CellState(x));
            if rec.iter().skip(STATE_DIM).all(|f| f.trim().is_empty()) {
                open_row = true;
            } else {
                let mut u = [T::zero(); INPUT_DIM];
                for (i, v) in u.iter_mut().enumerate() {
                    *v = parse(&rec[STATE_DIM + i])?;
                }
                inputs.push(CellInput(u));
            }
        }
        if states.is_empty() || inputs.len() + 1 != states.len() {
            return Err(Error::InvalidArgument(
                "trajectory must end with exactly one row without inputs".into(),
            ));
        }
        Ok(Self { states, inputs, dt })
    }

    pub fn load(path: &Path, dt: T) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), dt)
    }
}

//! Reverse-mode differentiation over array-valued nodes, plus a
//! finite-difference gradient checker.

mod tape;

pub use tape::{
    envelope_with_derivative, radial_basis_with_derivative, Gradients, Op, Primitive, Tape, Value, Var,
};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Pass criterion for one coordinate: `|a - n| ≤ atol` or relative error `≤ rtol`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rtol: 1e-6, atol: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Largest relative error among coordinates outside the absolute floor.
    pub max_rel_error: f64,
    /// Row-major index of the worst coordinate, if any coordinate was checked.
    pub worst_index: Option<usize>,
    pub passed: bool,
}

/// Compares the tape gradient of a real scalar function against central
/// differences with step `step`, coordinate by coordinate.
pub fn gradcheck<F>(f: F, point: &Array2<f64>, step: f64, tol: Tolerance) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |p: &Array2<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf_real(p.clone());
        let y = f(&mut tape, x)?;
        match tape.value(y) {
            Value::Real(a) if a.dim() == (1, 1) => Ok(a[[0, 0]]),
            other => Err(Error::NonScalarSeed(other.shape())),
        }
    };

    let point = point.as_standard_layout().to_owned();
    let mut tape = Tape::new();
    let x = tape.leaf_real(point.clone());
    let y = f(&mut tape, x)?;
    let grads = tape.backward(y)?;
    let analytic: Vec<f64> = grads.real_or_zeros(x, point.dim()).iter().copied().collect();

    let mut numeric = Vec::with_capacity(point.len());
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut worst_err = -1.0f64;
    let mut p = point.clone();
    for (k, a) in analytic.iter().enumerate() {
        let orig = p.as_slice().expect("standard layout")[k];
        p.as_slice_mut().expect("standard layout")[k] = orig + step;
        let fp = eval(&p)?;
        p.as_slice_mut().expect("standard layout")[k] = orig - step;
        let fm = eval(&p)?;
        p.as_slice_mut().expect("standard layout")[k] = orig;
        let n = (fp - fm) / (2.0 * step);
        numeric.push(n);

        let diff = (a - n).abs();
        let rel = if diff <= tol.atol { 0.0 } else { diff / a.abs().max(n.abs()) };
        if rel > worst_err {
            worst_err = rel;
            worst = Some(k);
        }
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        analytic,
        numeric,
        max_rel_error: max_rel,
        worst_index: worst,
        passed: max_rel <= tol.rtol,
    })
}

#[cfg(test)]
mod tests;

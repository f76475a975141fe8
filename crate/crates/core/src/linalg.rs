use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Solve `(I - gamma * K) x = b` by dense LU with partial pivoting.
pub(crate) fn solve_discounted(k: &Array2<f64>, gamma: f64, b: &Array1<f64>, what: &'static str) -> Result<Array1<f64>> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * k[[i, j]]
    });
    let rhs = DVector::from_iterator(n, b.iter().copied());
    let x = m.lu().solve(&rhs).ok_or(Error::Singular(what))?;
    Ok(Array1::from_iter(x.iter().copied()))
}

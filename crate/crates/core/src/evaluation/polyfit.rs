use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Least-squares polynomial through `(x, y)`; coefficients in increasing
/// degree order. Solved by SVD on the Vandermonde matrix.
pub fn polyfit_curve(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::invalid("x and y must have equal length"));
    }
    if x.len() < degree + 1 {
        return Err(Error::invalid(format!(
            "a degree-{degree} fit needs at least {} points, got {}",
            degree + 1,
            x.len()
        )));
    }
    let a = DMatrix::from_fn(x.len(), degree + 1, |r, c| x[r].powi(c as i32));
    let b = DVector::from_column_slice(y);
    let coeffs = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::invalid(format!("polynomial fit failed: {e}")))?;
    Ok(coeffs.iter().copied().collect())
}

pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

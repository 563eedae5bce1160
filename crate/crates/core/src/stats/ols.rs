//! Ordinary least squares via Householder QR.

use serde::{Deserialize, Serialize};

use super::linalg::{Matrix, Qr};
use crate::error::{Error, Result};

/// Result of an OLS fit. Variances use the residual degrees of freedom `n - p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residual_ss: f64,
    pub df_residual: usize,
    pub residual_variance: f64,
    pub n: usize,
    pub p: usize,
    pub residuals: Vec<f64>,
    /// `(X^T X)^{-1}`; multiply by `residual_variance` for the coefficient covariance.
    pub unscaled_covariance: Matrix,
}

impl OlsFit {
    /// Model-based standard error of coefficient `j`.
    pub fn std_error(&self, j: usize) -> f64 {
        (self.residual_variance * self.unscaled_covariance[(j, j)]).sqrt()
    }
}

/// Fits `y ~ x` where `x` already carries its intercept column.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<OlsFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but outcome has {} entries",
            y.len()
        )));
    }
    if p == 0 {
        return Err(Error::DimensionMismatch("design matrix has no columns".into()));
    }
    if n <= p {
        return Err(Error::TooFewObservations {
            needed: p + 1,
            got: n,
        });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainError("non-finite value in regression input".into()));
    }
    let qr = Qr::new(x)?;
    let coefficients = qr.solve(y);
    let fitted = x.matvec(&coefficients)?;
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let residual_ss: f64 = residuals.iter().map(|r| r * r).sum();
    let df_residual = n - p;
    Ok(OlsFit {
        coefficients,
        residual_ss,
        df_residual,
        residual_variance: residual_ss / df_residual as f64,
        n,
        p,
        residuals,
        unscaled_covariance: qr.unscaled_covariance(),
    })
}

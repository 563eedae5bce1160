//! Sample moments. Every variance and covariance here divides by `n - 1`.

use super::linalg::Matrix;
use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sample_variance(y: &[f64]) -> Result<f64> {
    if y.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            got: y.len(),
        });
    }
    let m = mean(y);
    let ss: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    Ok(ss / (y.len() - 1) as f64)
}

/// `k x k` sample covariance matrix of the columns of `w`.
pub fn sample_covariance_matrix(w: &Matrix) -> Result<Matrix> {
    let (n, k) = (w.nrows(), w.ncols());
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let means: Vec<f64> = (0..k)
        .map(|j| (0..n).map(|i| w[(i, j)]).sum::<f64>() / n as f64)
        .collect();
    let mut out = Matrix::zeros(k, k);
    for i in 0..n {
        let row = w.row(i);
        for a in 0..k {
            let da = row[a] - means[a];
            for b in a..k {
                out[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..k {
        for b in a..k {
            let v = out[(a, b)] / denom;
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    Ok(out)
}

/// Sample covariance of each column of `w` with the vector `a`.
pub fn sample_covariance(w: &Matrix, a: &[f64]) -> Result<Vec<f64>> {
    let n = w.nrows();
    if a.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {n} rows but vector has {} entries",
            a.len()
        )));
    }
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let ma = mean(a);
    let mut out = vec![0.0; w.ncols()];
    for (j, o) in out.iter_mut().enumerate() {
        let col = w.column(j);
        let mw = mean(&col);
        *o = col
            .iter()
            .zip(a)
            .map(|(x, y)| (x - mw) * (y - ma))
            .sum::<f64>()
            / (n - 1) as f64;
    }
    Ok(out)
}

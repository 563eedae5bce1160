//! Small dense linear algebra: a row-major matrix, Householder QR and Cholesky.
//!
//! Sizes in this crate are tiny (at most a few hundred rows and a dozen
//! columns), so everything is plain loops over contiguous storage.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a column is treated as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Row-major dense real matrix. Rows are subjects, columns are predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds an `n x k` matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(n: usize, columns: &[C]) -> Result<Self> {
        let cols = columns.len();
        let mut m = Self::zeros(n, cols);
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "column {j} has {} entries, expected {n}",
                    c.len()
                )));
            }
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "row has {} entries, expected {}",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows == 0 {
            return Ok(other.clone());
        }
        if other.rows == 0 {
            return Ok(self.clone());
        }
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} columns on {}",
                other.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<Matrix> {
        if let Some(&bad) = idx.iter().find(|&&j| j >= self.cols) {
            return Err(Error::DimensionMismatch(format!(
                "column index {bad} out of range for {} columns",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: idx.len(),
            data,
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Returns a copy with a leading column of ones.
    pub fn with_intercept(&self) -> Matrix {
        self.with_leading_columns(&[])
    }

    /// Returns `[1, extra..., self]`, i.e. an intercept column, then the given
    /// columns, then the columns of `self`.
    pub fn with_leading_columns(&self, extra: &[&[f64]]) -> Matrix {
        let cols = 1 + extra.len() + self.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.push(1.0);
            data.extend(extra.iter().map(|c| c[i]));
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: self.rows,
            cols,
            data,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Householder QR of a tall matrix, keeping only what least squares needs.
#[derive(Debug, Clone)]
pub struct Qr {
    /// Householder vectors stored column-major (`p` vectors of length `n`).
    reflectors: Vec<Vec<f64>>,
    /// Upper triangular factor, `p x p`.
    r: Matrix,
}

impl Qr {
    /// Factorizes `x` (`n x p`, `n >= p`). A column whose remaining norm after
    /// projecting out the earlier columns falls below [`RANK_TOLERANCE`] times
    /// its original norm is reported as [`Error::RankDeficient`].
    pub fn new(x: &Matrix) -> Result<Qr> {
        let (n, p) = (x.nrows(), x.ncols());
        if n < p {
            return Err(Error::DimensionMismatch(format!(
                "QR needs at least as many rows as columns ({n} < {p})"
            )));
        }
        // column-major working copy
        let mut a: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
        let col_norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();
        let mut reflectors = Vec::with_capacity(p);
        let mut r = Matrix::zeros(p, p);

        for j in 0..p {
            let tail_norm = norm(&a[j][j..]);
            if col_norms[j] == 0.0 || tail_norm <= RANK_TOLERANCE * col_norms[j] {
                return Err(Error::RankDeficient { column: j });
            }
            let alpha = if a[j][j] > 0.0 { -tail_norm } else { tail_norm };
            let mut v = vec![0.0; n];
            v[j] = a[j][j] - alpha;
            v[j + 1..].copy_from_slice(&a[j][j + 1..]);
            let vnorm2 = dot(&v[j..], &v[j..]);
            // apply H = I - 2 v v^T / (v^T v) to the remaining columns
            for col in a.iter_mut().skip(j + 1) {
                let s = 2.0 * dot(&v[j..], &col[j..]) / vnorm2;
                for (c, vi) in col[j..].iter_mut().zip(&v[j..]) {
                    *c -= s * vi;
                }
            }
            a[j][j] = alpha;
            a[j][j + 1..].fill(0.0);
            let scale = vnorm2.sqrt();
            for vi in v[j..].iter_mut() {
                *vi /= scale;
            }
            reflectors.push(v);
        }
        for j in 0..p {
            for i in 0..=j {
                r[(i, j)] = a[j][i];
            }
        }
        Ok(Qr { reflectors, r })
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// Computes `Q^T y`.
    pub fn qt_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = y.to_vec();
        for (j, v) in self.reflectors.iter().enumerate() {
            let s = 2.0 * dot(&v[j..], &out[j..]);
            for (o, vi) in out[j..].iter_mut().zip(&v[j..]) {
                *o -= s * vi;
            }
        }
        out
    }

    /// Least-squares solution of `x b = y`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let qty = self.qt_mul(y);
        back_substitute(&self.r, &qty[..self.r.nrows()])
    }

    /// `(X^T X)^{-1} = R^{-1} R^{-T}`.
    pub fn unscaled_covariance(&self) -> Matrix {
        let p = self.r.nrows();
        let mut rinv = Matrix::zeros(p, p);
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            let col = back_substitute(&self.r, &e);
            for i in 0..p {
                rinv[(i, j)] = col[i];
            }
        }
        let mut out = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = dot(rinv.row(i), rinv.row(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

fn back_substitute(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let p = r.nrows();
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for j in i + 1..p {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Lower-triangular Cholesky factor `L` with `L L^T = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > RANK_TOLERANCE * scale) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(a)?;
    let n = l.nrows();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side of length {} for a {n}x{n} system",
            b.len()
        )));
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_square_system() {
        let x = Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
        let b = Qr::new(&x).unwrap().solve(&[3.0, 5.0]);
        assert!((b[0] - 0.8).abs() < 1e-14);
        assert!((b[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn qr_flags_collinear_columns() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert!(matches!(Qr::new(&x), Err(Error::RankDeficient { column: 1 })));
        let z = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(matches!(Qr::new(&z), Err(Error::RankDeficient { column: 1 })));
    }

    #[test]
    fn unscaled_covariance_inverts_gram() {
        let x = Matrix::from_rows(&[[1.0, 0.5], [1.0, -1.0], [1.0, 2.0], [1.0, 0.0]]).unwrap();
        let inv = Qr::new(&x).unwrap().unscaled_covariance();
        let gram = x.transpose().matmul(&x).unwrap();
        let id = gram.matmul(&inv).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cholesky_roundtrip_and_failure() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            cholesky(&singular),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        assert!(cholesky(&Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn spd_solve_matches_direct() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let x = solve_spd(&a, &[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && x[1].abs() < 1e-14);
    }
}

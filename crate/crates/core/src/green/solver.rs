//! Sparse symmetric operator and Jacobi-preconditioned conjugate gradients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed-row symmetric matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

impl Csr {
    pub(crate) fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = vec![0.0; n];
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row {
                if j as usize == i {
                    diag[i] += v;
                }
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Csr { n, row_ptr, cols, vals, diag }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k] as usize)] += self.vals[k];
            }
        }
        m
    }

    /// `||A x - b|| / ||b||`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n];
        self.matvec(x, &mut r);
        let num: f64 = r.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Relative residual `||A x - b|| / ||b||`, recomputed from scratch.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn pcg(a: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<Solution> {
    let n = a.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(Solution { x, residual: 0.0, iterations: 0 });
    }
    let inv_diag: Vec<f64> = a.diag().iter().map(|d| 1.0 / d).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut iterations = 0;
    // stop a little below the target so the recomputed residual also meets it
    let stop = 0.5 * tol * bnorm;
    while iterations < max_iter {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= stop {
            break;
        }
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Singular("conjugate gradient operator"));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }
    let residual = a.relative_residual(&x, b);
    if residual > tol {
        return Err(Error::NoConvergence { what: "conjugate gradient", residual, iterations });
    }
    Ok(Solution { x, residual, iterations })
}

/// Dense Cholesky solve, with the residual measured against the sparse operator.
pub fn dense_solve(a: &Csr, b: &[f64], tol: f64) -> Result<Solution> {
    let chol = a.to_dense().cholesky().ok_or(Error::Singular("dense killed operator"))?;
    let x = chol.solve(&DVector::from_column_slice(b));
    let x: Vec<f64> = x.as_slice().to_vec();
    let residual = a.relative_residual(&x, b);
    if residual > tol {
        return Err(Error::NoConvergence { what: "dense Cholesky", residual, iterations: 0 });
    }
    Ok(Solution { x, residual, iterations: 0 })
}

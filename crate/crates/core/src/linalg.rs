//! Dense symmetric linear algebra for Gram pencils `A v = s^2 B v`.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// Arithmetic used for the Cholesky factor of the Lebesgue Gram matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    /// Double-double (about 106 bits) Cholesky factorisation and triangular solves.
    Extended,
}

/// Negative eigenvalues above this are rounding noise and clamp to zero.
pub const CLAMP_THRESHOLD: f64 = -1e-10;

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(b.clone())
        .map(|c| c.unpack())
        .ok_or_else(|| {
            Error::IllConditioned(format!(
                "Cholesky factorisation of the {n}x{n} Gram matrix failed",
                n = b.nrows()
            ))
        })
}

/// Solve `L X = F` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    l.solve_lower_triangular(f)
        .ok_or_else(|| Error::IllConditioned("triangular solve hit a zero pivot".into()))
}

fn symmetrize(mut c: DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// `L^{-1} A L^{-T}` for symmetric `A`.
pub fn whiten(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let x = solve_lower(l, a)?;
    let c = solve_lower(l, &x.transpose())?;
    Ok(symmetrize(c))
}

/// Eigenvalues of a symmetric matrix, largest first.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Singular values, largest first.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Generalized eigenvalues of the pencil `(A, B)`, largest first.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = cholesky_lower(b)?;
    Ok(symmetric_eigenvalues(&whiten(a, &l)?))
}

/// Apply the clamp rule to eigenvalues of a positive semidefinite pencil.
pub fn clamp_eigenvalues(ev: &[f64]) -> Result<Vec<f64>> {
    ev.iter()
        .map(|&e| {
            if e.is_nan() {
                Err(Error::IllConditioned("eigenvalue is NaN".into()))
            } else if e < CLAMP_THRESHOLD {
                Err(Error::NegativeEigenvalue {
                    value: e,
                    threshold: CLAMP_THRESHOLD,
                })
            } else {
                Ok(e.max(0.0))
            }
        })
        .collect()
}

/// Double-double lower Cholesky factor, row-major.
pub struct DdCholesky {
    n: usize,
    l: Vec<TwoFloat>,
}

impl DdCholesky {
    /// Factor the normalized Lebesgue Gram matrix of `lambdas`, with entries formed in double-double.
    pub fn lebesgue(lambdas: &[f64]) -> Result<Self> {
        let n = lambdas.len();
        let roots: Vec<TwoFloat> = lambdas.iter().map(|&x| TwoFloat::from(x).sqrt()).collect();
        let entry = |i: usize, j: usize| -> TwoFloat {
            let den = TwoFloat::new_add(lambdas[i], lambdas[j]) + 1.0;
            roots[i] * roots[j] / den
        };
        Self::factor(n, entry)
    }

    pub fn from_matrix(b: &DMatrix<f64>) -> Result<Self> {
        Self::factor(b.nrows(), |i, j| TwoFloat::from(b[(i, j)]))
    }

    fn factor(n: usize, entry: impl Fn(usize, usize) -> TwoFloat) -> Result<Self> {
        let mut l = vec![TwoFloat::from(0.0); n * n];
        for j in 0..n {
            let mut d = entry(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d.hi() > 0.0) {
                return Err(Error::IllConditioned(format!(
                    "extended-precision Cholesky failed at pivot {j} of {n}"
                )));
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = entry(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { n, l })
    }

    fn solve_dd(&self, cols: Vec<Vec<TwoFloat>>) -> Vec<Vec<TwoFloat>> {
        let n = self.n;
        cols.into_iter()
            .map(|mut x| {
                for i in 0..n {
                    let mut s = x[i];
                    for k in 0..i {
                        s -= self.l[i * n + k] * x[k];
                    }
                    x[i] = s / self.l[i * n + i];
                }
                x
            })
            .collect()
    }

    /// `L^{-1} F`, rounded to double.
    pub fn solve(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<Vec<TwoFloat>> = (0..f.ncols())
            .map(|j| (0..f.nrows()).map(|i| TwoFloat::from(f[(i, j)])).collect())
            .collect();
        let x = self.solve_dd(cols);
        DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f64::from(x[j][i]))
    }

    /// `L^{-1} A L^{-T}`, rounded to double.
    pub fn whiten(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let cols: Vec<Vec<TwoFloat>> = (0..n)
            .map(|j| (0..n).map(|i| TwoFloat::from(a[(i, j)])).collect())
            .collect();
        // X = L^{-1} A; then C = L^{-1} X^T
        let x = self.solve_dd(cols);
        let xt: Vec<Vec<TwoFloat>> = (0..n).map(|j| (0..n).map(|i| x[i][j]).collect()).collect();
        let c = self.solve_dd(xt);
        symmetrize(DMatrix::from_fn(n, n, |i, j| f64::from(c[j][i])))
    }
}

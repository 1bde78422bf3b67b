//! Sparse CSR matrices, a Jacobi-preconditioned conjugate gradient solver and
//! closed-form 2x2 complex matrix functions.

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("conjugate gradient did not converge: relative residual {residual:e} after {iterations} iterations (tolerance {tol:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("non-positive curvature {0:e} in conjugate gradient (matrix not SPD)")]
    Breakdown(f64),
    #[error("non-positive diagonal entry at row {0}")]
    BadDiagonal(usize),
    #[error("matrix square root undefined: eigenvalues {0} and {1} sum to zero root")]
    NoSquareRoot(Complex64, Complex64),
    #[error("singular matrix")]
    Singular,
}

/// Row chunk below which sparse products stay sequential.
const PAR_ROWS: usize = 4096;
/// Fixed chunk of the deterministic parallel reduction.
const REDUCE_CHUNK: usize = 2048;

/// Dot product with a reduction tree that does not depend on the number of
/// worker threads.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= REDUCE_CHUNK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let partial: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal_matrix(&vec![1.0; n])
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.indptr[r]..self.indptr[r + 1] {
            s += self.values[k] * x[self.indices[k]];
        }
        s
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        if self.nrows >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(r, yr)| *yr = self.row_dot(r, x));
        } else {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = self.row_dot(r, x);
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Csr) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut touched = Vec::new();
        let mut t = Vec::new();
        for r in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                t.push((r, c, acc[c]));
            }
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    /// `diag(w) * self`.
    pub fn scale_rows(&self, w: &[f64]) -> Self {
        assert_eq!(w.len(), self.nrows);
        let mut out = self.clone();
        for (r, wr) in w.iter().enumerate() {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.values[k] *= wr;
            }
        }
        out
    }

    /// `a * self + b * other`.
    pub fn add_scaled(&self, a: f64, other: &Csr, b: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            t.extend(self.row(r).map(|(c, v)| (r, c, a * v)));
            t.extend(other.row(r).map(|(c, v)| (r, c, b * v)));
        }
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|r| self.row(r).filter(|&(c, _)| c == r).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    /// Defaults to ten times the system size when `None`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgInfo {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solves `a x = b` for SPD (or consistent semidefinite) `a`, starting from
/// the contents of `x`. Returns immediately when the initial guess already
/// meets the tolerance; `b = 0` yields `x = 0`.
pub fn cg(a: &Csr, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<CgInfo, LinalgError> {
    let n = b.len();
    assert_eq!(a.nrows, n);
    assert_eq!(x.len(), n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgInfo {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .enumerate()
        .map(|(i, &d)| if d > 0.0 { Ok(1.0 / d) } else { Err(LinalgError::BadDiagonal(i)) })
        .collect::<Result<_, _>>()?;
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let target = opts.rel_tol * bnorm;

    let mut r = a.mul_vec(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return Ok(CgInfo {
            iterations: 0,
            rel_residual: rnorm / bnorm,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(LinalgError::Breakdown(pap));
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(CgInfo {
                iterations: it,
                rel_residual: rnorm / bnorm,
            });
        }
        z.iter_mut()
            .zip(r.iter().zip(&inv_diag))
            .for_each(|(zi, (ri, di))| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
        residual: rnorm / bnorm,
        tol: opts.rel_tol,
    })
}

pub type C64 = Complex64;
pub type CMat2 = Matrix2<Complex64>;

/// Eigenvalues of a complex 2x2 matrix from the characteristic polynomial,
/// larger magnitude first.
pub fn eigenvalues2(m: &CMat2) -> [C64; 2] {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let half = tr * 0.5;
    let disc = (half * half - det).sqrt();
    let mu1 = if (half.conj() * disc).re >= 0.0 {
        half + disc
    } else {
        half - disc
    };
    let mu2 = if mu1.norm() > 0.0 { det / mu1 } else { C64::new(0.0, 0.0) };
    [mu1, mu2]
}

/// Largest and smallest singular values of a complex 2x2 matrix.
pub fn singular_values2(m: &CMat2) -> (f64, f64) {
    let fro2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).norm();
    let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((fro2 + disc) * 0.5).sqrt();
    let smin = if smax > 0.0 { det / smax } else { 0.0 };
    (smax, smin)
}

/// Unit eigenvector of `m` for eigenvalue `mu`, or `None` when `m - mu I`
/// vanishes.
fn eigenvector2(m: &CMat2, mu: C64) -> Option<Vector2<C64>> {
    let a = Vector2::new(m[(0, 1)], mu - m[(0, 0)]);
    let b = Vector2::new(mu - m[(1, 1)], m[(1, 0)]);
    let v = if a.norm() >= b.norm() { a } else { b };
    let n = v.norm();
    (n > 0.0).then(|| v / C64::new(n, 0.0))
}

/// How [`sqrtm2`] obtained the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtMethod {
    Eigen,
    Schur,
    Scalar,
}

/// Condition number above which the eigenvector basis is not trusted.
pub const SQRT_COND_LIMIT: f64 = 1e8;

/// Principal square root of a complex 2x2 matrix whose spectrum avoids the
/// closed negative real axis.
pub fn sqrtm2(m: &CMat2) -> Result<(CMat2, SqrtMethod), LinalgError> {
    let [mu1, mu2] = eigenvalues2(m);
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let off = (m[(0, 1)].norm() + m[(1, 0)].norm() + (m[(0, 0)] - m[(1, 1)]).norm()) <= 1e-15 * scale;
    if off {
        let s = m[(0, 0)].sqrt();
        return Ok((CMat2::identity() * s, SqrtMethod::Scalar));
    }
    if let (Some(v1), Some(v2)) = (eigenvector2(m, mu1), eigenvector2(m, mu2)) {
        let v = CMat2::from_columns(&[v1, v2]);
        let (smax, smin) = singular_values2(&v);
        if smin > 0.0 && smax / smin < SQRT_COND_LIMIT {
            if let Some(vinv) = v.try_inverse() {
                let d = CMat2::from_diagonal(&Vector2::new(mu1.sqrt(), mu2.sqrt()));
                return Ok((v * d * vinv, SqrtMethod::Eigen));
            }
        }
    }
    schur_sqrt(m, mu1, mu2).map(|b| (b, SqrtMethod::Schur))
}

fn schur_sqrt(m: &CMat2, mu1: C64, mu2: C64) -> Result<CMat2, LinalgError> {
    let v1 = eigenvector2(m, mu1).ok_or(LinalgError::NoSquareRoot(mu1, mu2))?;
    let w = Vector2::new(-v1[1].conj(), v1[0].conj());
    let q = CMat2::from_columns(&[v1, w]);
    let qh = q.adjoint();
    let t = qh * m * q;
    let s1 = t[(0, 0)].sqrt();
    let s2 = t[(1, 1)].sqrt();
    let sum = s1 + s2;
    if sum.norm() == 0.0 {
        return Err(LinalgError::NoSquareRoot(mu1, mu2));
    }
    let r = CMat2::new(s1, t[(0, 1)] / sum, C64::new(0.0, 0.0), s2);
    Ok(q * r * qh)
}

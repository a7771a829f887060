//! Dense brute-force oracle for small problems.
//!
//! Everything here works with explicit real matrices so it can cross-check the
//! diagonal fast path without sharing any of its code. For a Fourier pattern
//! the forward matrix uses a compact real basis of the hermitian-consistent
//! measurement space: each mirror pair `(j, j')` contributes the rows
//! `√2 Re(F_j)` and `√2 Im(F_j)`, and each self-mirrored frequency the row
//! `Re(F_j)`. This gives exactly `L` orthogonal rows with `A A^T = N I`, and
//! the coordinate map preserves the `Re(z1^H z2)` inner product.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{Measurement, SamplingPattern, DENSE_MAX_SIDE};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Dense forward and penalty matrices sharing the signal dimension `N`.
#[derive(Debug, Clone)]
pub struct DenseProblem {
    pub a_mat: DMatrix<f64>,
    pub l2_mat: DMatrix<f64>,
    pub tolerance: f64,
}

impl DenseProblem {
    pub fn new(a_mat: DMatrix<f64>, l2_mat: DMatrix<f64>, tolerance: f64) -> Result<Self> {
        if a_mat.ncols() != l2_mat.ncols() {
            return Err(Error::dim(format!(
                "forward has {} columns, penalty has {}",
                a_mat.ncols(),
                l2_mat.ncols()
            )));
        }
        if !(tolerance > 0.0) {
            return Err(Error::arg("rank tolerance must be positive"));
        }
        Ok(Self {
            a_mat,
            l2_mat,
            tolerance,
        })
    }

    pub fn n_signal(&self) -> usize {
        self.a_mat.ncols()
    }

    fn normal(&self, lambda2: f64) -> DMatrix<f64> {
        self.a_mat.tr_mul(&self.a_mat) + self.l2_mat.tr_mul(&self.l2_mat) * lambda2
    }

    fn cogram(&self) -> DMatrix<f64> {
        &self.a_mat * self.a_mat.transpose()
    }
}

/// Which part of a sample a compact coordinate carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// `Re(z_j)` of a self-mirrored sample.
    SelfReal,
    /// `√2 Re(z_j)` of a mirror pair.
    PairReal,
    /// `√2 Im(z_j)` of a mirror pair.
    PairImag,
}

/// Compact real coordinates of the hermitian-consistent measurement space:
/// `(sample index, part)` for each row of the dense Fourier forward matrix.
pub fn compact_layout(pattern: &SamplingPattern) -> Vec<(usize, Part)> {
    let mut rows = Vec::with_capacity(pattern.len());
    for j in 0..pattern.len() {
        let m = pattern.mirror_of(j);
        if m == j {
            rows.push((j, Part::SelfReal));
        } else if j < m {
            rows.push((j, Part::PairReal));
            rows.push((j, Part::PairImag));
        }
    }
    rows
}

/// Compact coordinates of a hermitian-consistent measurement.
pub fn to_coords(pattern: &SamplingPattern, meas: &Measurement) -> Result<DVector<f64>> {
    if meas.len() != pattern.len() {
        return Err(Error::dim("measurement not aligned with pattern"));
    }
    let layout = compact_layout(pattern);
    Ok(DVector::from_iterator(
        layout.len(),
        layout.iter().map(|&(j, part)| {
            let v = meas.values()[j];
            match part {
                Part::SelfReal => v.re,
                Part::PairReal => SQRT_2 * v.re,
                Part::PairImag => SQRT_2 * v.im,
            }
        }),
    ))
}

/// Inverse of [`to_coords`]: a hermitian-consistent measurement.
pub fn from_coords(pattern: &SamplingPattern, coords: &DVector<f64>) -> Result<Measurement> {
    let layout = compact_layout(pattern);
    if coords.len() != layout.len() {
        return Err(Error::dim("coordinate vector has the wrong length"));
    }
    let mut vals = vec![Complex64::new(0.0, 0.0); pattern.len()];
    for (&(j, part), &c) in layout.iter().zip(coords.iter()) {
        let m = pattern.mirror_of(j);
        match part {
            Part::SelfReal => vals[j] = Complex64::new(c, 0.0),
            Part::PairReal => {
                vals[j].re = c / SQRT_2;
                vals[m].re = c / SQRT_2;
            }
            Part::PairImag => {
                vals[j].im = c / SQRT_2;
                vals[m].im = -c / SQRT_2;
            }
        }
    }
    Ok(Measurement::new(vals))
}

/// Dense matrix of the periodic 5-point Laplacian. Works for any `n >= 1`;
/// wrapped neighbours accumulate, so at `n = 2` opposite neighbours coincide.
pub fn dense_laplacian(n: usize) -> DMatrix<f64> {
    let big = n * n;
    let mut d = DMatrix::zeros(big, big);
    for r in 0..n {
        for c in 0..n {
            let row = r * n + c;
            d[(row, row)] -= 4.0;
            for (dr, dc) in [(n - 1, 0), (1, 0), (0, n - 1), (0, 1)] {
                let rr = (r + dr) % n;
                let cc = (c + dc) % n;
                d[(row, rr * n + cc)] += 1.0;
            }
        }
    }
    d
}

/// Dense compact Fourier forward matrix with the Laplacian penalty.
pub fn fourier_problem(pattern: &SamplingPattern) -> Result<DenseProblem> {
    let n = pattern.n();
    if n > DENSE_MAX_SIDE {
        return Err(Error::arg(format!(
            "dense problem limited to n <= {DENSE_MAX_SIDE}, got {n}"
        )));
    }
    let layout = compact_layout(pattern);
    let w = 2.0 * PI / n as f64;
    let mut a = DMatrix::zeros(layout.len(), n * n);
    for (row, &(j, part)) in layout.iter().enumerate() {
        let (k, l) = pattern.indices()[j];
        for r in 0..n {
            for c in 0..n {
                let phase = w * ((k * r + l * c) % n) as f64;
                a[(row, r * n + c)] = match part {
                    Part::SelfReal => phase.cos(),
                    Part::PairReal => SQRT_2 * phase.cos(),
                    Part::PairImag => -SQRT_2 * phase.sin(),
                };
            }
        }
    }
    DenseProblem::new(a, dense_laplacian(n), RANK_TOLERANCE)
}

fn relative_rank_ok(m: &DMatrix<f64>, tol: f64) -> bool {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > tol * max
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

fn inverse(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.lu()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Full row rank of the forward matrix.
pub fn check_assumption1(p: &DenseProblem) -> Result<bool> {
    if p.a_mat.is_empty() {
        return Err(Error::arg("forward matrix is empty"));
    }
    if p.a_mat.nrows() > p.a_mat.ncols() {
        return Ok(false);
    }
    Ok(relative_rank_ok(&p.a_mat, p.tolerance))
}

/// `ker A ∩ ker L2 = {0}`, i.e. `[A; L2]` has rank `N`.
pub fn check_assumption2(p: &DenseProblem) -> Result<bool> {
    let n = p.n_signal();
    let rows = p.a_mat.nrows() + p.l2_mat.nrows();
    if rows < n || n == 0 {
        return Ok(false);
    }
    let mut stacked = DMatrix::zeros(rows, n);
    stacked.rows_mut(0, p.a_mat.nrows()).copy_from(&p.a_mat);
    stacked
        .rows_mut(p.a_mat.nrows(), p.l2_mat.nrows())
        .copy_from(&p.l2_mat);
    Ok(relative_rank_ok(&stacked, p.tolerance))
}

/// `ker(A)^⊥` is invariant under `L2^T L2`.
pub fn check_assumption3(p: &DenseProblem) -> Result<bool> {
    if !check_assumption1(p)? {
        return Err(Error::arg(
            "assumption 3 needs a full-row-rank forward matrix",
        ));
    }
    let at = p.a_mat.transpose();
    let proj = &at * inverse(p.cogram(), "A A^T")? * &p.a_mat;
    let target = p.l2_mat.tr_mul(&p.l2_mat) * &at;
    let scale = spectral_norm(&target);
    if scale == 0.0 {
        return Ok(true);
    }
    let resid = &target - &proj * &target;
    Ok(spectral_norm(&resid) <= p.tolerance * scale)
}

/// `Lambda_2 = (A A^T)^{-1} A L2^T L2 A^T`.
pub fn dense_lambda2(p: &DenseProblem) -> Result<DMatrix<f64>> {
    let inv = inverse(p.cogram(), "A A^T")?;
    Ok(inv * &p.a_mat * p.l2_mat.tr_mul(&p.l2_mat) * p.a_mat.transpose())
}

/// Relative spectral-norm gap between `(A^T A + λ L2^T L2)^{-1} A^T` and
/// `A^T (A A^T + λ Lambda_2)^{-1}`.
pub fn lemma1_residual(p: &DenseProblem, lambda2: f64) -> Result<f64> {
    check_lambda2(lambda2)?;
    let at = p.a_mat.transpose();
    let lhs = inverse(p.normal(lambda2), "A^T A + lambda2 L2^T L2")? * &at;
    let inner = p.cogram() + dense_lambda2(p)? * lambda2;
    let rhs = &at * inverse(inner, "A A^T + lambda2 Lambda2")?;
    let scale = spectral_norm(&rhs);
    if scale == 0.0 {
        return Err(Error::Singular("right-hand side vanishes".into()));
    }
    Ok(spectral_norm(&(lhs - &rhs)) / scale)
}

/// Exact minimiser over `x2` of `½‖y − A(x1 + x2)‖² + (λ/2)‖L2 x2‖²`.
pub fn dense_smooth_solve(
    p: &DenseProblem,
    lambda2: f64,
    x1: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_lambda2(lambda2)?;
    if x1.len() != p.n_signal() || y.len() != p.a_mat.nrows() {
        return Err(Error::dim("x1 or y does not match the dense problem"));
    }
    let rhs = -(p.a_mat.transpose() * (&p.a_mat * x1 - y));
    p.normal(lambda2)
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("A^T A + lambda2 L2^T L2".into()))
}

/// `M = λ Lambda_2 (A A^T + λ Lambda_2)^{-1}`.
pub fn dense_m_matrix(p: &DenseProblem, lambda2: f64) -> Result<DMatrix<f64>> {
    check_lambda2(lambda2)?;
    let l2 = dense_lambda2(p)? * lambda2;
    let inv = inverse(p.cogram() + &l2, "A A^T + lambda2 Lambda2")?;
    Ok(l2 * inv)
}

fn check_lambda2(lambda2: f64) -> Result<()> {
    if !(lambda2 > 0.0 && lambda2.is_finite()) {
        return Err(Error::arg(format!(
            "lambda2 must be positive, got {lambda2}"
        )));
    }
    Ok(())
}

//! Images, frequency sampling patterns and the fast operators acting on them:
//! the unnormalised 2-D DFT, the subsampled Fourier forward map and its real
//! adjoint, and the periodic 5-point Laplacian.
//!
//! Frequency index `(k, l)` refers to row frequency `k` and column frequency
//! `l`; pixel `(r, c)` to row `r` and column `c`. Grids are stored row-major.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::par;

/// Real-valued `n x n` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    n: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("image side must be positive"));
        }
        if data.len() != n * n {
            return Err(Error::dim(format!(
                "image of side {n} needs {} values, got {}",
                n * n,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("image value {v} is not finite")));
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    /// Unit impulse at pixel `(r, c)`.
    pub fn delta(n: usize, r: usize, c: usize) -> Self {
        let mut img = Self::zeros(n);
        img.data[r * n + c] = 1.0;
        img
    }

    pub(crate) fn from_vec_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of pixels `N = n^2`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.check_same(other)?;
        Ok(Self::from_vec_unchecked(
            self.n,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.check_same(other)?;
        Ok(Self::from_vec_unchecked(
            self.n,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn scale(&self, s: f64) -> Image {
        Self::from_vec_unchecked(self.n, self.data.iter().map(|v| v * s).collect())
    }

    pub(crate) fn check_same(&self, other: &Image) -> Result<()> {
        if self.n != other.n {
            return Err(Error::dim(format!(
                "image sides differ: {} vs {}",
                self.n, other.n
            )));
        }
        Ok(())
    }
}

/// Complex `n x n` grid, the DFT of an [`Image`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    n: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[k * self.n + l]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Mirror of a frequency index under conjugation: `(-k, -l) mod n`.
pub fn mirror_index(n: usize, (k, l): (usize, usize)) -> (usize, usize) {
    ((n - k) % n, (n - l) % n)
}

/// Ordered set of sampled frequencies, closed under conjugate mirroring.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPattern {
    n: usize,
    indices: Vec<(usize, usize)>,
    flat: Vec<usize>,
    mirror: Vec<usize>,
}

impl SamplingPattern {
    /// Builds a pattern, checking range, uniqueness, conjugate symmetry and
    /// that the DC frequency `(0, 0)` is present.
    pub fn new(n: usize, indices: Vec<(usize, usize)>) -> Result<Self> {
        let p = Self::new_allow_missing_dc(n, indices)?;
        if !p.contains_dc() {
            return Err(Error::arg(
                "sampling pattern must contain the DC frequency (0,0)",
            ));
        }
        Ok(p)
    }

    /// Same as [`SamplingPattern::new`] without the DC requirement. Only meant
    /// for probing the assumption checks with a deliberately deficient pattern.
    pub fn new_allow_missing_dc(n: usize, indices: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("pattern side must be positive"));
        }
        if indices.len() > n * n {
            return Err(Error::arg("pattern has more than n^2 indices"));
        }
        let mut pos = vec![usize::MAX; n * n];
        for (j, &(k, l)) in indices.iter().enumerate() {
            if k >= n || l >= n {
                return Err(Error::arg(format!(
                    "frequency ({k},{l}) outside grid of side {n}"
                )));
            }
            if pos[k * n + l] != usize::MAX {
                return Err(Error::arg(format!("duplicate frequency ({k},{l})")));
            }
            pos[k * n + l] = j;
        }
        let mut mirror = Vec::with_capacity(indices.len());
        for &idx in &indices {
            let (mk, ml) = mirror_index(n, idx);
            let m = pos[mk * n + ml];
            if m == usize::MAX {
                return Err(Error::arg(format!(
                    "pattern is not conjugate-symmetric: ({},{}) present but ({mk},{ml}) missing",
                    idx.0, idx.1
                )));
            }
            mirror.push(m);
        }
        let flat = indices.iter().map(|&(k, l)| k * n + l).collect();
        Ok(Self {
            n,
            indices,
            flat,
            mirror,
        })
    }

    /// Every frequency of the grid, in row-major order.
    pub fn full(n: usize) -> Self {
        let indices = (0..n).flat_map(|k| (0..n).map(move |l| (k, l))).collect();
        Self::new(n, indices).expect("full grid is a valid pattern")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of samples `L`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    /// Row-major positions `k * n + l` of the samples.
    pub fn flat_indices(&self) -> &[usize] {
        &self.flat
    }

    /// Position within the pattern of the mirror of sample `j`.
    pub fn mirror_of(&self, j: usize) -> usize {
        self.mirror[j]
    }

    pub fn contains_dc(&self) -> bool {
        self.indices.contains(&(0, 0))
    }

    pub fn position_of(&self, idx: (usize, usize)) -> Option<usize> {
        self.indices.iter().position(|&i| i == idx)
    }

    pub fn index_set(&self) -> HashSet<(usize, usize)> {
        self.indices.iter().copied().collect()
    }

    /// Copy of this pattern with the DC frequency removed.
    pub fn without_dc(&self) -> Result<Self> {
        let idx = self
            .indices
            .iter()
            .copied()
            .filter(|&i| i != (0, 0))
            .collect();
        Self::new_allow_missing_dc(self.n, idx)
    }

    pub(crate) fn check_side(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::dim(format!(
                "pattern side {} does not match image side {n}",
                self.n
            )));
        }
        Ok(())
    }

    pub(crate) fn check_meas(&self, meas: &Measurement) -> Result<()> {
        if meas.len() != self.len() {
            return Err(Error::dim(format!(
                "measurement has {} values, pattern has {}",
                meas.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Complex measurement vector aligned with a [`SamplingPattern`].
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    values: Vec<Complex64>,
}

impl Measurement {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Real inner product `Re(self^H other)`.
    pub fn inner(&self, other: &Measurement) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    pub fn sub(&self, other: &Measurement) -> Result<Measurement> {
        if self.len() != other.len() {
            return Err(Error::dim("measurement lengths differ"));
        }
        Ok(Self::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn scale(&self, s: f64) -> Measurement {
        Self::new(self.values.iter().map(|z| z * s).collect())
    }

    /// Largest deviation from conjugate symmetry with respect to `pattern`,
    /// including the imaginary part of self-mirrored samples.
    pub fn hermitian_mismatch(&self, pattern: &SamplingPattern) -> Result<f64> {
        pattern.check_meas(self)?;
        Ok((0..self.len())
            .map(|j| (self.values[j] - self.values[pattern.mirror_of(j)].conj()).norm())
            .fold(0.0, f64::max))
    }

    /// True when the mismatch is below `tol` times the largest magnitude.
    pub fn is_hermitian(&self, pattern: &SamplingPattern, tol: f64) -> Result<bool> {
        Ok(self.hermitian_mismatch(pattern)? <= tol * self.max_abs().max(f64::MIN_POSITIVE))
    }
}

/// Cached FFT plans for one grid side.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// In-place unnormalised 2-D transform of a row-major `n x n` buffer,
    /// forward (`e^{-2 pi i ...}`) or inverse (`F^H`).
    pub fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n * n);
        let plan = if inverse { &self.inv } else { &self.fwd };
        self.row_pass(plan.as_ref(), buf);
        transpose_in_place(buf, n);
        self.row_pass(plan.as_ref(), buf);
        transpose_in_place(buf, n);
    }

    fn row_pass(&self, plan: &dyn Fft<f64>, buf: &mut [Complex64]) {
        let n = self.n;
        let threads = par::num_threads();
        if threads > 1 && n >= PAR_MIN_SIDE {
            let rows_per_chunk = n.div_ceil(threads);
            par::for_each_chunk_mut(buf, rows_per_chunk * n, |_, chunk| plan.process(chunk));
        } else {
            plan.process(buf);
        }
    }

    pub fn dft2(&self, image: &Image) -> Spectrum {
        assert_eq!(image.n(), self.n, "image side does not match FFT plan");
        let mut buf: Vec<Complex64> = image
            .as_slice()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        self.transform(&mut buf, false);
        Spectrum {
            n: self.n,
            data: buf,
        }
    }

    /// `A x = S F x`.
    pub fn forward(&self, pattern: &SamplingPattern, image: &Image) -> Result<Measurement> {
        pattern.check_side(image.n())?;
        let spectrum = self.dft2(image);
        Ok(Measurement::new(
            pattern
                .flat_indices()
                .iter()
                .map(|&f| spectrum.data[f])
                .collect(),
        ))
    }

    /// `Re(F^H S^T z)`: the adjoint of [`Fft2::forward`] for the real inner
    /// product `Re(z1^H z2)`.
    pub fn adjoint(&self, pattern: &SamplingPattern, meas: &Measurement) -> Result<Image> {
        pattern.check_meas(meas)?;
        let n = pattern.n();
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        for (&f, &v) in pattern.flat_indices().iter().zip(meas.values()) {
            buf[f] = v;
        }
        self.transform(&mut buf, true);
        Ok(Image::from_vec_unchecked(
            n,
            buf.iter().map(|z| z.re).collect(),
        ))
    }
}

/// Grids smaller than this are transformed on the calling thread.
const PAR_MIN_SIDE: usize = 128;

fn transpose_in_place(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Unnormalised 2-D DFT, `F^H F = N I`.
pub fn dft2(image: &Image) -> Spectrum {
    Fft2::new(image.n()).dft2(image)
}

/// Samples of `dft2(image)` at the pattern frequencies.
pub fn forward(pattern: &SamplingPattern, image: &Image) -> Result<Measurement> {
    Fft2::new(pattern.n()).forward(pattern, image)
}

/// Real adjoint of [`forward`].
pub fn adjoint(pattern: &SamplingPattern, meas: &Measurement) -> Result<Image> {
    Fft2::new(pattern.n()).adjoint(pattern, meas)
}

fn check_laplacian_side(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::arg(format!("Laplacian needs n >= 3, got {n}")));
    }
    Ok(())
}

/// Periodic 5-point Laplacian `[[0,1,0],[1,-4,1],[0,1,0]]`.
pub fn laplacian_apply(image: &Image) -> Result<Image> {
    let n = image.n();
    check_laplacian_side(n)?;
    let mut out = vec![0.0; n * n];
    laplacian_into(image.as_slice(), &mut out, n);
    Ok(Image::from_vec_unchecked(n, out))
}

pub(crate) fn laplacian_into(x: &[f64], out: &mut [f64], n: usize) {
    for r in 0..n {
        let up = if r == 0 { n - 1 } else { r - 1 } * n;
        let down = if r + 1 == n { 0 } else { r + 1 } * n;
        let row = r * n;
        for c in 0..n {
            let left = if c == 0 { n - 1 } else { c - 1 };
            let right = if c + 1 == n { 0 } else { c + 1 };
            out[row + c] =
                x[up + c] + x[down + c] + x[row + left] + x[row + right] - 4.0 * x[row + c];
        }
    }
}

/// Symbol value `2cos(2 pi k/n) + 2cos(2 pi l/n) - 4` of the periodic Laplacian.
pub fn laplacian_symbol_at(n: usize, k: usize, l: usize) -> f64 {
    // folding keeps mirrored frequencies bit-identical
    let w = 2.0 * PI / n as f64;
    let (k, l) = (k.min(n - k), l.min(n - l));
    2.0 * (w * k as f64).cos() + 2.0 * (w * l as f64).cos() - 4.0
}

/// Full `n x n` grid of Laplacian symbol values, row-major.
pub fn laplacian_symbol(n: usize) -> Result<Vec<f64>> {
    check_laplacian_side(n)?;
    Ok((0..n)
        .flat_map(|k| (0..n).map(move |l| laplacian_symbol_at(n, k, l)))
        .collect())
}

/// Largest side accepted by [`materialize_dense`].
pub const DENSE_MAX_SIDE: usize = 32;

/// Real-linear `2L x N` matrix of the forward map: rows `0..L` give the real
/// parts of the samples and rows `L..2L` the imaginary parts.
pub fn materialize_dense(pattern: &SamplingPattern) -> Result<DMatrix<f64>> {
    let n = pattern.n();
    if n > DENSE_MAX_SIDE {
        return Err(Error::arg(format!(
            "dense materialisation limited to n <= {DENSE_MAX_SIDE}, got {n}"
        )));
    }
    let l = pattern.len();
    let big_n = n * n;
    let w = 2.0 * PI / n as f64;
    let mut d = DMatrix::zeros(2 * l, big_n);
    for (j, &(k, fl)) in pattern.indices().iter().enumerate() {
        for r in 0..n {
            for c in 0..n {
                // reduce the phase index mod n before the trig call to keep rows exact
                let phase = w * ((k * r + fl * c) % n) as f64;
                d[(j, r * n + c)] = phase.cos();
                d[(l + j, r * n + c)] = -phase.sin();
            }
        }
    }
    Ok(d)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

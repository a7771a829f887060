//! Measurement-domain weights that decouple the sparse and smooth components
//! when the forward map is a subsampled DFT and the smooth penalty is the
//! periodic Laplacian.
//!
//! In that setting both the cogram `A A^H = N I` and the transported penalty
//! `Lambda_2 = (A A^H)^{-1} A Delta^T Delta A^H = diag(d^2)` are diagonal, so
//! `M = lambda_2 Lambda_2 (A A^H + lambda_2 Lambda_2)^{-1}` has entries
//! `lambda_2 d^2 / (N + lambda_2 d^2)`, where `d` is the Laplacian symbol at
//! each sampled frequency.

use crate::error::{Error, Result};
use crate::operators::{laplacian_symbol_at, Fft2, Image, Measurement, SamplingPattern};

/// Diagonals of `Lambda_2` and `M` over the sampled frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalWeights {
    lambda2: f64,
    n_pixels: f64,
    lambda2_diag: Vec<f64>,
    m_diag: Vec<f64>,
}

impl DiagonalWeights {
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Entries of `Lambda_2` (squared Laplacian symbol), aligned with the pattern.
    pub fn lambda2_diag(&self) -> &[f64] {
        &self.lambda2_diag
    }

    /// Entries of `M`, each in `[0, 1)`.
    pub fn m_diag(&self) -> &[f64] {
        &self.m_diag
    }

    pub fn max_m(&self) -> f64 {
        self.m_diag.iter().copied().fold(0.0, f64::max)
    }

    /// Per-sample gain `1 / (N + lambda_2 d^2)` used by the closed-form smooth solve.
    pub fn smooth_gain(&self, j: usize) -> f64 {
        1.0 / (self.n_pixels + self.lambda2 * self.lambda2_diag[j])
    }

    fn check(&self, meas: &Measurement) -> Result<()> {
        if meas.len() != self.m_diag.len() {
            return Err(Error::dim(format!(
                "measurement has {} values, weights have {}",
                meas.len(),
                self.m_diag.len()
            )));
        }
        Ok(())
    }

    /// `m ⊙ z`.
    pub fn apply_m(&self, z: &Measurement) -> Result<Measurement> {
        self.check(z)?;
        Ok(Measurement::new(
            z.values()
                .iter()
                .zip(&self.m_diag)
                .map(|(v, m)| v * *m)
                .collect(),
        ))
    }
}

pub fn build_weights(pattern: &SamplingPattern, lambda2: f64) -> Result<DiagonalWeights> {
    if !(lambda2 > 0.0 && lambda2.is_finite()) {
        return Err(Error::arg(format!(
            "lambda2 must be positive, got {lambda2}"
        )));
    }
    let n = pattern.n();
    if n < 3 {
        return Err(Error::arg(format!(
            "Laplacian weights need n >= 3, got {n}"
        )));
    }
    let n_pixels = (n * n) as f64;
    let lambda2_diag: Vec<f64> = pattern
        .indices()
        .iter()
        .map(|&(k, l)| laplacian_symbol_at(n, k, l).powi(2))
        .collect();
    let m_diag = lambda2_diag
        .iter()
        .map(|&d2| lambda2 * d2 / (n_pixels + lambda2 * d2))
        .collect();
    Ok(DiagonalWeights {
        lambda2,
        n_pixels,
        lambda2_diag,
        m_diag,
    })
}

/// `½ Σ m_j |r_j|²`.
pub fn weighted_residual_energy(w: &DiagonalWeights, r: &Measurement) -> Result<f64> {
    w.check(r)?;
    Ok(0.5
        * r.values()
            .iter()
            .zip(&w.m_diag)
            .map(|(z, m)| m * z.norm_sqr())
            .sum::<f64>())
}

/// Hermitian tolerance, relative to the largest residual magnitude.
const HERMITIAN_TOL: f64 = 1e-9;

/// Closed-form smooth component `A^H (A A^H + lambda_2 Lambda_2)^{-1} r`.
pub fn solve_smooth_closed_form(
    fft: &Fft2,
    pattern: &SamplingPattern,
    w: &DiagonalWeights,
    residual: &Measurement,
) -> Result<Image> {
    w.check(residual)?;
    pattern.check_meas(residual)?;
    let mismatch = residual.hermitian_mismatch(pattern)?;
    if mismatch > HERMITIAN_TOL * residual.max_abs().max(1.0) {
        return Err(Error::NotHermitian(mismatch));
    }
    let scaled = Measurement::new(
        residual
            .values()
            .iter()
            .enumerate()
            .map(|(j, v)| v * w.smooth_gain(j))
            .collect(),
    );
    fft.adjoint(pattern, &scaled)
}

/// The common fit `ỹ = A x1` of all sparse solutions.
pub fn fit_of(fft: &Fft2, pattern: &SamplingPattern, x1: &Image) -> Result<Measurement> {
    fft.forward(pattern, x1)
}

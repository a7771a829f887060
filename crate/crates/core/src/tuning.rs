//! Dimension-free regularisation knobs.
//!
//! `alpha1` is the fraction of the critical sparsity weight above which the
//! sparse component vanishes; `alpha2` balances the largest squared singular
//! values of the Laplacian and of the forward map.

use crate::error::{Error, Result};
use crate::operators::{Fft2, Measurement, SamplingPattern};
use crate::representer::build_weights;

/// `σ²_max` of the periodic 5-point Laplacian (`|d| ≤ 8`, reached at Nyquist).
pub const LAPLACIAN_SIGMA2_MAX: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alphas {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Alphas {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha1 < 1.0) {
            return Err(Error::arg(format!(
                "alpha1 must lie in (0, 1), got {alpha1}"
            )));
        }
        if !(alpha2 > 0.0 && alpha2.is_finite()) {
            return Err(Error::arg(format!("alpha2 must be positive, got {alpha2}")));
        }
        Ok(Self { alpha1, alpha2 })
    }
}

impl Default for Alphas {
    fn default() -> Self {
        Self {
            alpha1: 0.08,
            alpha2: 0.5,
        }
    }
}

/// `‖A^H M y‖_∞`: the smallest `λ1` for which the sparse component is zero.
pub fn lambda1_max(pattern: &SamplingPattern, lambda2: f64, y: &Measurement) -> Result<f64> {
    let w = build_weights(pattern, lambda2)?;
    let my = w.apply_m(y)?;
    Ok(Fft2::new(pattern.n()).adjoint(pattern, &my)?.max_abs())
}

/// `λ2 = α2 σ²_max(A) / σ²_max(Δ) = α2 n² / 64`.
pub fn lambda2_from_alpha(alpha2: f64, n: usize) -> Result<f64> {
    if !(alpha2 > 0.0 && alpha2.is_finite()) {
        return Err(Error::arg(format!("alpha2 must be positive, got {alpha2}")));
    }
    Ok(alpha2 * (n * n) as f64 / LAPLACIAN_SIGMA2_MAX)
}

/// `λ1 = α1 λ1_max`.
pub fn lambda1_from_alpha(
    alpha1: f64,
    pattern: &SamplingPattern,
    lambda2: f64,
    y: &Measurement,
) -> Result<f64> {
    if !(alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(Error::arg(format!(
            "alpha1 must lie in (0, 1), got {alpha1}"
        )));
    }
    let max = lambda1_max(pattern, lambda2, y)?;
    if max == 0.0 {
        return Err(Error::arg(
            "lambda1_max is zero: the data has no component that drives the sparse term; \
             set lambda1 directly",
        ));
    }
    Ok(alpha1 * max)
}

/// Both weights from the dimension-free knobs.
pub fn lambdas(alphas: Alphas, pattern: &SamplingPattern, y: &Measurement) -> Result<(f64, f64)> {
    let lambda2 = lambda2_from_alpha(alphas.alpha2, pattern.n())?;
    let lambda1 = lambda1_from_alpha(alphas.alpha1, pattern, lambda2, y)?;
    Ok((lambda1, lambda2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn pattern() -> SamplingPattern {
        SamplingPattern::new(8, vec![(0, 0), (1, 2), (7, 6), (3, 0), (5, 0)]).unwrap()
    }

    #[test]
    fn lambda2_rule() {
        assert_eq!(lambda2_from_alpha(0.5, 128).unwrap(), 128.0);
        assert!(lambda2_from_alpha(0.0, 128).is_err());
        assert_eq!(
            lambda2_from_alpha(1.0, 8).unwrap(),
            2.0 * lambda2_from_alpha(0.5, 8).unwrap()
        );
    }

    #[test]
    fn lambda1_max_of_zero_and_dc() {
        let p = pattern();
        assert_eq!(
            lambda1_max(&p, 1.0, &Measurement::zeros(p.len())).unwrap(),
            0.0
        );
        let mut y = Measurement::zeros(p.len());
        y.values_mut()[0] = Complex64::new(3.0, 0.0);
        assert_eq!(lambda1_max(&p, 1.0, &y).unwrap(), 0.0);
        assert!(lambda1_from_alpha(0.5, &p, 1.0, &y).is_err());
    }

    #[test]
    fn lambda1_is_homogeneous() {
        let p = pattern();
        let mut y = Measurement::zeros(p.len());
        y.values_mut()[1] = Complex64::new(1.0, 2.0);
        y.values_mut()[2] = Complex64::new(1.0, -2.0);
        let a = lambda1_from_alpha(0.3, &p, 2.0, &y).unwrap();
        let b = lambda1_from_alpha(0.3, &p, 2.0, &y.scale(2.0)).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
        assert!(lambda1_from_alpha(1.0, &p, 2.0, &y).is_err());
    }

    #[test]
    fn alphas_validation() {
        assert!(Alphas::new(0.08, 0.5).is_ok());
        assert!(Alphas::new(1.0, 0.5).is_err());
        assert!(Alphas::new(0.5, 0.0).is_err());
    }
}

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spsm::operators::{mirror_index, Image, Measurement, SamplingPattern};
use spsm::reference::{self, DenseProblem};
use spsm::simulate::{self, SceneConfig};
use spsm::solvers::ProblemInstance;
use spsm::tuning::{lambda1_from_alpha, lambda2_from_alpha};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_image(n: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::new(n, gaussian_vec(n * n, rng)).unwrap()
}

/// Mirror-closed pattern containing DC, each other mirror class kept with
/// probability `keep`.
pub fn random_pattern(n: usize, keep: f64, rng: &mut ChaCha8Rng) -> SamplingPattern {
    let mut idx = vec![(0, 0)];
    for k in 0..n {
        for l in 0..n {
            let m = mirror_index(n, (k, l));
            if (k, l) == (0, 0) || m < (k, l) {
                continue;
            }
            if rng.random::<f64>() < keep {
                idx.push((k, l));
                if m != (k, l) {
                    idx.push(m);
                }
            }
        }
    }
    SamplingPattern::new(n, idx).unwrap()
}

/// Hermitian-consistent measurement: forward of a random real image.
pub fn random_meas(p: &SamplingPattern, rng: &mut ChaCha8Rng) -> Measurement {
    spsm::operators::forward(p, &random_image(p.n(), rng)).unwrap()
}

pub fn col(img: &Image) -> DVector<f64> {
    DVector::from_column_slice(img.as_slice())
}

pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

pub fn meas_rel_gap(a: &Measurement, b: &Measurement) -> f64 {
    a.sub(b).unwrap().norm_sqr().sqrt() / b.norm_sqr().sqrt().max(1e-300)
}

/// Periodic 2-D circulant built from an `n x n` kernel.
pub fn circulant(n: usize, kernel: &[f64]) -> DMatrix<f64> {
    let big = n * n;
    let mut m = DMatrix::zeros(big, big);
    for r in 0..n {
        for c in 0..n {
            for dr in 0..n {
                for dc in 0..n {
                    let rr = (r + dr) % n;
                    let cc = (c + dc) % n;
                    m[(r * n + c, rr * n + cc)] += kernel[dr * n + dc];
                }
            }
        }
    }
    m
}

/// Dense `½‖y − A(x1+x2)‖² + λ1‖x1‖₁ + (λ2/2)‖L x2‖²` in compact coordinates.
pub fn dense_composite(inst: &ProblemInstance, x1: &Image, x2: &Image) -> f64 {
    let p = reference::fourier_problem(&inst.pattern).unwrap();
    let y = reference::to_coords(&inst.pattern, &inst.y).unwrap();
    let r = &y - &p.a_mat * (col(x1) + col(x2));
    let lx = &p.l2_mat * col(x2);
    0.5 * r.norm_squared() + inst.lambda1 * x1.l1_norm() + 0.5 * inst.lambda2 * lx.norm_squared()
}

/// Dense `½ rᵀ M r + λ1‖x1‖₁`.
pub fn dense_p1(inst: &ProblemInstance, x1: &Image) -> f64 {
    let p = reference::fourier_problem(&inst.pattern).unwrap();
    let m = reference::dense_m_matrix(&p, inst.lambda2).unwrap();
    let y = reference::to_coords(&inst.pattern, &inst.y).unwrap();
    let r = &y - &p.a_mat * col(x1);
    0.5 * r.dot(&(&m * &r)) + inst.lambda1 * x1.l1_norm()
}

/// Dense `‖Aᵀ M y‖∞`.
pub fn dense_lambda1_max(
    p: &DenseProblem,
    pattern: &SamplingPattern,
    lambda2: f64,
    y: &Measurement,
) -> f64 {
    let m = reference::dense_m_matrix(p, lambda2).unwrap();
    let yc = reference::to_coords(pattern, y).unwrap();
    (p.a_mat.transpose() * (m * yc)).amax()
}

/// Long-run dense ISTA on the weighted LASSO, used as a reference optimum.
pub fn dense_lasso(inst: &ProblemInstance, iters: usize) -> DVector<f64> {
    let p = reference::fourier_problem(&inst.pattern).unwrap();
    let m = reference::dense_m_matrix(&p, inst.lambda2).unwrap();
    let y = reference::to_coords(&inst.pattern, &inst.y).unwrap();
    let h = p.a_mat.transpose() * &m * &p.a_mat;
    let b = p.a_mat.transpose() * &m * &y;
    let lip = h.clone().symmetric_eigenvalues().amax();
    let step = 1.0 / lip;
    let mut x = DVector::zeros(h.ncols());
    for _ in 0..iters {
        let z = &x - (&h * &x - &b) * step;
        x = z.map(|v| v.signum() * (v.abs() - step * inst.lambda1).max(0.0));
    }
    x
}

pub fn complex(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Small synthetic instance with a few spikes over a smooth background.
pub fn instance(
    n: usize,
    seed: u64,
    k_spikes: usize,
    psnr_db: f64,
) -> (ProblemInstance, simulate::GroundTruth) {
    let scene = SceneConfig {
        k_spikes,
        ..SceneConfig::with_defaults(n, seed)
    };
    let sim = simulate::simulate(&scene, 0.3, simulate::default_sigma_freq(n), psnr_db).unwrap();
    let lambda2 = lambda2_from_alpha(0.5, n).unwrap();
    let lambda1 = lambda1_from_alpha(0.08, &sim.pattern, lambda2, &sim.y).unwrap();
    (
        ProblemInstance::new(sim.pattern, sim.y, lambda1, lambda2).unwrap(),
        sim.truth,
    )
}

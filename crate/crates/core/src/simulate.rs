//! Synthetic scenes, heterogeneous frequency sampling patterns and noise.
//!
//! All randomness comes from `ChaCha8Rng` (crate `rand_chacha` 0.9) seeded with
//! `seed_from_u64`, with normal deviates from `rand_distr` 0.5. Versions are
//! pinned by `Cargo.lock`, so a seed reproduces the same data on every
//! platform.

use std::collections::{BTreeSet, HashSet};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::operators::{mirror_index, Fft2, Image, Measurement, SamplingPattern};

pub type SimRng = ChaCha8Rng;

/// Independent seed for sub-stream `stream` of a user seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n: usize,
    pub k_spikes: usize,
    pub spike_amp: (f64, f64),
    pub n_blobs: usize,
    /// Blob standard deviation range, in pixels.
    pub blob_sigma: (f64, f64),
    pub blob_amp: (f64, f64),
    pub seed: u64,
}

impl SceneConfig {
    /// Default scene: `round(0.002 n²)` spikes of magnitude 5..10 over eight
    /// blobs of magnitude 0.2..1 and width `n/16..n/4`.
    pub fn with_defaults(n: usize, seed: u64) -> Self {
        let nf = n as f64;
        Self {
            n,
            k_spikes: (0.002 * nf * nf).round() as usize,
            spike_amp: (5.0, 10.0),
            n_blobs: 8,
            blob_sigma: (nf / 16.0, nf / 4.0),
            blob_amp: (0.2, 1.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::arg("scene side must be positive"));
        }
        if self.k_spikes > self.n * self.n {
            return Err(Error::arg(format!(
                "{} spikes do not fit in {} pixels",
                self.k_spikes,
                self.n * self.n
            )));
        }
        for (name, (lo, hi)) in [
            ("spike_amp", self.spike_amp),
            ("blob_sigma", self.blob_sigma),
            ("blob_amp", self.blob_amp),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::arg(format!(
                    "{name} range ({lo}, {hi}) is not ordered"
                )));
            }
        }
        if self.n_blobs > 0 && self.blob_sigma.0 <= 0.0 {
            return Err(Error::arg("blob widths must be positive"));
        }
        if self.k_spikes > 0 && self.n_blobs > 0 && self.spike_amp.0 < self.blob_amp.1 {
            return Err(Error::arg("spike magnitudes must exceed blob magnitudes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub x1_true: Image,
    pub x2_true: Image,
    /// Row-major pixel indices of the spikes.
    pub support_true: BTreeSet<usize>,
}

impl GroundTruth {
    pub fn total(&self) -> Image {
        self.x1_true
            .add(&self.x2_true)
            .expect("components share a side")
    }
}

fn signed_uniform(rng: &mut SimRng, (lo, hi): (f64, f64)) -> f64 {
    let mag = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Spikes at distinct uniform pixels plus a sum of periodic Gaussian blobs.
pub fn gen_scene(cfg: &SceneConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let n = cfg.n;
    let big = n * n;
    let mut rng = SimRng::seed_from_u64(cfg.seed);

    let mut x1 = vec![0.0; big];
    let picks = rand::seq::index::sample(&mut rng, big, cfg.k_spikes);
    let mut support = BTreeSet::new();
    for p in picks.iter() {
        x1[p] = signed_uniform(&mut rng, cfg.spike_amp);
        support.insert(p);
    }

    let mut x2 = vec![0.0; big];
    let nf = n as f64;
    for _ in 0..cfg.n_blobs {
        let cr = rng.random_range(0.0..nf);
        let cc = rng.random_range(0.0..nf);
        let sigma = if cfg.blob_sigma.1 > cfg.blob_sigma.0 {
            rng.random_range(cfg.blob_sigma.0..=cfg.blob_sigma.1)
        } else {
            cfg.blob_sigma.0
        };
        let amp = signed_uniform(&mut rng, cfg.blob_amp);
        let inv = 1.0 / (2.0 * sigma * sigma);
        // sum over the nearest periodic images along each axis
        let profile = |centre: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    (-1..=1)
                        .map(|m| {
                            let d = i as f64 - centre + m as f64 * nf;
                            (-d * d * inv).exp()
                        })
                        .sum()
                })
                .collect()
        };
        let pr = profile(cr);
        let pc = profile(cc);
        for r in 0..n {
            for c in 0..n {
                x2[r * n + c] += amp * pr[r] * pc[c];
            }
        }
    }

    Ok(GroundTruth {
        x1_true: Image::new(n, x1)?,
        x2_true: Image::new(n, x2)?,
        support_true: support,
    })
}

/// Default standard deviation of the Gaussian frequency draws.
pub fn default_sigma_freq(n: usize) -> f64 {
    n as f64 / 8.0
}

/// Sampling pattern together with the number of accepted base draws per
/// distribution.
#[derive(Debug, Clone)]
pub struct PatternDraws {
    pub pattern: SamplingPattern,
    pub gaussian_draws: usize,
    pub uniform_draws: usize,
}

const MAX_PATTERN_ATTEMPTS: usize = 50_000_000;

/// Number of samples aimed for: `round(fraction · n² / 2)`.
pub fn target_samples(n: usize, fraction: f64) -> usize {
    ((fraction * (n * n) as f64 / 2.0).round() as usize).max(1)
}

pub fn gen_pattern(n: usize, fraction: f64, sigma_freq: f64, seed: u64) -> Result<SamplingPattern> {
    gen_pattern_with_draws(n, fraction, sigma_freq, seed).map(|d| d.pattern)
}

/// Draws frequencies alternately from a DC-centred Gaussian (std
/// `sigma_freq`, rejection-sampled into the grid) and uniformly, adding each
/// accepted frequency together with its mirror. DC is always included and
/// self-mirrored frequencies are never drawn, so `L = 1 + 2·draws`.
pub fn gen_pattern_with_draws(
    n: usize,
    fraction: f64,
    sigma_freq: f64,
    seed: u64,
) -> Result<PatternDraws> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::arg(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if n == 0 {
        return Err(Error::arg("pattern side must be positive"));
    }
    if !(sigma_freq > 0.0 && sigma_freq.is_finite()) {
        return Err(Error::arg("sigma_freq must be positive"));
    }
    let self_mirrored = if n.is_multiple_of(2) { 4 } else { 1 }.min(n * n);
    let max_len = 1 + (n * n - self_mirrored);
    let target = target_samples(n, fraction).min(max_len);

    let mut rng = SimRng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, sigma_freq).expect("positive std");
    let lo = -((n / 2) as i64);
    let hi = lo + n as i64 - 1;

    let mut indices = vec![(0usize, 0usize)];
    let mut seen: HashSet<(usize, usize)> = indices.iter().copied().collect();
    let mut counts = [0usize; 2];
    let mut turn = 0;
    let mut attempts = 0;
    while indices.len() < target {
        attempts += 1;
        if attempts > MAX_PATTERN_ATTEMPTS {
            return Err(Error::arg(
                "could not fill the sampling pattern; try a larger sigma_freq",
            ));
        }
        let idx = if turn == 0 {
            let dk = gauss.sample(&mut rng).round() as i64;
            let dl = gauss.sample(&mut rng).round() as i64;
            if dk < lo || dk > hi || dl < lo || dl > hi {
                continue;
            }
            (
                dk.rem_euclid(n as i64) as usize,
                dl.rem_euclid(n as i64) as usize,
            )
        } else {
            (rng.random_range(0..n), rng.random_range(0..n))
        };
        let mirror = mirror_index(n, idx);
        if mirror == idx || seen.contains(&idx) {
            continue;
        }
        seen.insert(idx);
        seen.insert(mirror);
        indices.push(idx);
        indices.push(mirror);
        counts[turn] += 1;
        turn = 1 - turn;
    }
    Ok(PatternDraws {
        pattern: SamplingPattern::new(n, indices)?,
        gaussian_draws: counts[0],
        uniform_draws: counts[1],
    })
}

/// Noise standard deviation per real component for a target PSNR:
/// `10 log10(max|y|² / (2σ²)) = psnr_db`.
pub fn noise_sigma(peak: f64, psnr_db: f64) -> f64 {
    (peak * peak / (2.0 * 10f64.powf(psnr_db / 10.0))).sqrt()
}

/// Adds hermitian-consistent complex Gaussian noise at the given PSNR. Every
/// sample receives noise of power `2σ²`; self-mirrored samples get real noise.
pub fn add_noise(
    pattern: &SamplingPattern,
    y: &Measurement,
    psnr_db: f64,
    seed: u64,
) -> Result<Measurement> {
    if !y.is_hermitian(pattern, 1e-9)? {
        return Err(Error::NotHermitian(y.hermitian_mismatch(pattern)?));
    }
    let peak = y.max_abs();
    if peak == 0.0 {
        return Err(Error::arg("PSNR is undefined for a zero measurement"));
    }
    if psnr_db.is_nan() {
        return Err(Error::arg("psnr must be a number"));
    }
    let sigma = noise_sigma(peak, psnr_db);
    let mut rng = SimRng::seed_from_u64(seed);
    let mut out = y.clone();
    let vals = out.values_mut();
    for j in 0..vals.len() {
        let m = pattern.mirror_of(j);
        if m == j {
            let e: f64 = StandardNormal.sample(&mut rng);
            vals[j] += Complex64::new(std::f64::consts::SQRT_2 * sigma * e, 0.0);
        } else if j < m {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let e = Complex64::new(sigma * a, sigma * b);
            vals[j] += e;
            vals[m] += e.conj();
        }
    }
    Ok(out)
}

/// One complete simulated acquisition.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub truth: GroundTruth,
    pub pattern: SamplingPattern,
    pub y_clean: Measurement,
    pub y: Measurement,
}

/// Scene, pattern and noisy measurements from a single user seed.
pub fn simulate(
    scene: &SceneConfig,
    fraction: f64,
    sigma_freq: f64,
    psnr_db: f64,
) -> Result<SimulatedData> {
    let truth = gen_scene(scene)?;
    let pattern = gen_pattern(scene.n, fraction, sigma_freq, derive_seed(scene.seed, 1))?;
    let fft = Fft2::new(scene.n);
    let y_clean = fft.forward(&pattern, &truth.total())?;
    let y = add_noise(&pattern, &y_clean, psnr_db, derive_seed(scene.seed, 2))?;
    Ok(SimulatedData {
        truth,
        pattern,
        y_clean,
        y,
    })
}

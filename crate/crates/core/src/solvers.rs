//! Proximal machinery and the two reconstruction drivers.
//!
//! The coupled driver minimises
//! `½‖y − A(x1 + x2)‖² + λ1‖x1‖₁ + (λ2/2)‖Δ x2‖²` over the stacked variable
//! `(x1, x2)`. The decoupled driver first minimises the weighted LASSO
//! `½ (y − A x1)^H M (y − A x1) + λ1‖x1‖₁`, then recovers `x2` in closed form
//! from the residual `y − A x1`.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::{dot, laplacian_into, norm, Fft2, Image, Measurement, SamplingPattern};
use crate::representer::{
    build_weights, fit_of, solve_smooth_closed_form, weighted_residual_energy, DiagonalWeights,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Stop once `‖x_k − x_{k−1}‖ / ‖x_k‖` drops below this.
    pub rel_tol: f64,
    /// Multiplier on `1 / Lipschitz`, in `(0, 1]`.
    pub step_safety: f64,
    /// Gradient-based momentum restart.
    pub restart: bool,
    /// Record the objective every this many iterations (the final iterate is
    /// always recorded).
    pub trace_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            rel_tol: 1e-6,
            step_safety: 1.0,
            restart: true,
            trace_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::arg("max_iter must be positive"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::arg("rel_tol must be positive"));
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return Err(Error::arg("step_safety must lie in (0, 1]"));
        }
        if self.trace_every == 0 {
            return Err(Error::arg("trace_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterReached,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIterReached => "max-iter-reached",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ApgdOutput {
    pub x: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub status: Status,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x1: Image,
    pub x2: Image,
    /// `ỹ = A x1`.
    pub fit: Measurement,
    /// Objective minimised by the driver: the composite objective for the
    /// coupled solve, the weighted LASSO objective for the decoupled one.
    pub trace: Vec<TraceEntry>,
    pub status: Status,
    pub iterations: usize,
    /// Wall time of the whole solve, including weights and step estimation.
    pub seconds: f64,
}

/// Data and regularisation weights of one reconstruction.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub pattern: SamplingPattern,
    pub y: Measurement,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl ProblemInstance {
    pub fn new(
        pattern: SamplingPattern,
        y: Measurement,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        pattern.check_meas(&y)?;
        if !(lambda1 > 0.0 && lambda1.is_finite()) {
            return Err(Error::arg(format!(
                "lambda1 must be positive, got {lambda1}"
            )));
        }
        if !(lambda2 > 0.0 && lambda2.is_finite()) {
            return Err(Error::arg(format!(
                "lambda2 must be positive, got {lambda2}"
            )));
        }
        if pattern.n() < 3 {
            return Err(Error::arg("reconstruction needs n >= 3"));
        }
        let mismatch = y.hermitian_mismatch(&pattern)?;
        if mismatch > 1e-9 * y.max_abs().max(1.0) {
            return Err(Error::NotHermitian(mismatch));
        }
        Ok(Self {
            pattern,
            y,
            lambda1,
            lambda2,
        })
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }
}

/// Elementwise `sign(v) max(|v| − τ, 0)`.
pub fn soft_threshold(v: &[f64], tau: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    soft_threshold_in_place(&mut out, tau);
    out
}

pub fn soft_threshold_in_place(v: &mut [f64], tau: f64) {
    debug_assert!(tau >= 0.0);
    for x in v.iter_mut() {
        let a = x.abs() - tau;
        *x = if a > 0.0 { a.copysign(*x) } else { 0.0 };
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite map given as
/// `apply(v, out)`. Stops when the Rayleigh quotient changes by less than
/// `tol` relative, or after `iters` steps.
pub fn power_iteration<F>(mut apply: F, dim: usize, iters: usize, tol: f64) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; dim];
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        apply(&v, &mut w);
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        let done = (next - est).abs() <= tol * next.abs();
        est = next;
        if done {
            break;
        }
    }
    est.max(0.0)
}

/// Accelerated proximal gradient descent (FISTA) with optional gradient
/// restart.
///
/// `grad(z, out)` writes the smooth gradient at `z`, `prox(v, step)` replaces
/// `v` by the proximal point of the nonsmooth term scaled by `step`, and
/// `objective(x)` evaluates the full objective for the trace.
pub fn apgd<G, P, O>(
    mut grad: G,
    mut prox: P,
    mut objective: O,
    step: f64,
    x0: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<ApgdOutput>
where
    G: FnMut(&[f64], &mut [f64]),
    P: FnMut(&mut [f64], f64),
    O: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::arg(format!("step must be positive, got {step}")));
    }
    let start = Instant::now();
    let dim = x0.len();
    let mut x = x0;
    let mut z = x.clone();
    let mut x_new = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    let mut t = 1.0_f64;

    let obj0 = objective(&x);
    if !obj0.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let mut trace = vec![TraceEntry {
        iteration: 0,
        objective: obj0,
        seconds: 0.0,
    }];
    let mut status = Status::MaxIterReached;
    let mut iterations = 0;

    for k in 1..=cfg.max_iter {
        iterations = k;
        grad(&z, &mut g);
        for i in 0..dim {
            x_new[i] = z[i] - step * g[i];
        }
        prox(&mut x_new, step);

        let mut diff2 = 0.0;
        let mut new2 = 0.0;
        let mut restart_dot = 0.0;
        for i in 0..dim {
            let d = x_new[i] - x[i];
            diff2 += d * d;
            new2 += x_new[i] * x_new[i];
            restart_dot += (z[i] - x_new[i]) * d;
        }
        if !diff2.is_finite() {
            return Err(Error::Diverged { iteration: k });
        }

        if cfg.restart && restart_dot > 0.0 {
            t = 1.0;
            z.copy_from_slice(&x_new);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for i in 0..dim {
                z[i] = x_new[i] + beta * (x_new[i] - x[i]);
            }
            t = t_next;
        }
        std::mem::swap(&mut x, &mut x_new);

        let rel = diff2.sqrt() / new2.sqrt().max(f64::MIN_POSITIVE);
        let converged = rel < cfg.rel_tol;
        if converged || k % cfg.trace_every == 0 || k == cfg.max_iter {
            let obj = objective(&x);
            if !obj.is_finite() {
                return Err(Error::Diverged { iteration: k });
            }
            trace.push(TraceEntry {
                iteration: k,
                objective: obj,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        if converged {
            status = Status::Converged;
            break;
        }
    }
    Ok(ApgdOutput {
        x,
        trace,
        status,
        iterations,
    })
}

/// Scratch buffers for repeated forward/adjoint evaluations on one grid.
struct Workspace<'a> {
    fft: &'a Fft2,
    pattern: &'a SamplingPattern,
    spectrum: Vec<Complex64>,
    back: Vec<Complex64>,
}

impl<'a> Workspace<'a> {
    fn new(fft: &'a Fft2, pattern: &'a SamplingPattern) -> Self {
        let big = pattern.n() * pattern.n();
        Self {
            fft,
            pattern,
            spectrum: vec![Complex64::new(0.0, 0.0); big],
            back: vec![Complex64::new(0.0, 0.0); big],
        }
    }

    /// Full spectrum of `x` into `self.spectrum`.
    fn transform(&mut self, x: &[f64]) {
        for (s, &v) in self.spectrum.iter_mut().zip(x) {
            *s = Complex64::new(v, 0.0);
        }
        self.fft.transform(&mut self.spectrum, false);
    }

    /// Same as [`Workspace::transform`] for `a + b`.
    fn transform_sum(&mut self, a: &[f64], b: &[f64]) {
        for ((s, &u), &v) in self.spectrum.iter_mut().zip(a).zip(b) {
            *s = Complex64::new(u + v, 0.0);
        }
        self.fft.transform(&mut self.spectrum, false);
    }

    fn sample(&self, j: usize) -> Complex64 {
        self.spectrum[self.pattern.flat_indices()[j]]
    }

    /// `out = Re(F^H S^T vals)`, with `vals(j)` the value of sample `j`.
    fn adjoint_into<V: Fn(usize) -> Complex64>(&mut self, vals: V, out: &mut [f64]) {
        self.back
            .iter_mut()
            .for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (j, &f) in self.pattern.flat_indices().iter().enumerate() {
            self.back[f] = vals(j);
        }
        self.fft.transform(&mut self.back, true);
        for (o, b) in out.iter_mut().zip(&self.back) {
            *o = b.re;
        }
    }
}

/// Smooth part of the coupled objective over the stacked variable `[x1; x2]`:
/// `½‖y − A(x1 + x2)‖² + (λ2/2)‖Δ x2‖²`.
pub struct CoupledSmooth<'a> {
    ws: Workspace<'a>,
    y: &'a Measurement,
    lambda2: f64,
    lap: Vec<f64>,
    lap2: Vec<f64>,
}

impl<'a> CoupledSmooth<'a> {
    pub fn new(fft: &'a Fft2, inst: &'a ProblemInstance) -> Self {
        let big = inst.n() * inst.n();
        Self {
            ws: Workspace::new(fft, &inst.pattern),
            y: &inst.y,
            lambda2: inst.lambda2,
            lap: vec![0.0; big],
            lap2: vec![0.0; big],
        }
    }

    fn n(&self) -> usize {
        self.ws.pattern.n()
    }

    pub fn value(&mut self, x: &[f64]) -> f64 {
        let n = self.n();
        let (x1, x2) = x.split_at(n * n);
        self.ws.transform_sum(x1, x2);
        let data: f64 = (0..self.y.len())
            .map(|j| (self.ws.sample(j) - self.y.values()[j]).norm_sqr())
            .sum();
        laplacian_into(x2, &mut self.lap, n);
        0.5 * data + 0.5 * self.lambda2 * dot(&self.lap, &self.lap)
    }

    pub fn gradient(&mut self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        let big = n * n;
        let (x1, x2) = x.split_at(big);
        self.ws.transform_sum(x1, x2);
        let resid: Vec<Complex64> = (0..self.y.len())
            .map(|j| self.ws.sample(j) - self.y.values()[j])
            .collect();
        let (g1, g2) = out.split_at_mut(big);
        self.ws.adjoint_into(|j| resid[j], g1);
        laplacian_into(x2, &mut self.lap, n);
        laplacian_into(&self.lap, &mut self.lap2, n);
        for i in 0..big {
            g2[i] = g1[i] + self.lambda2 * self.lap2[i];
        }
    }

    /// Hessian-vector product (the gradient is affine).
    pub fn hessian_apply(&mut self, v: &[f64], out: &mut [f64]) {
        let n = self.n();
        let big = n * n;
        let (v1, v2) = v.split_at(big);
        self.ws.transform_sum(v1, v2);
        let samples: Vec<Complex64> = (0..self.y.len()).map(|j| self.ws.sample(j)).collect();
        let (h1, h2) = out.split_at_mut(big);
        self.ws.adjoint_into(|j| samples[j], h1);
        laplacian_into(v2, &mut self.lap, n);
        laplacian_into(&self.lap, &mut self.lap2, n);
        for i in 0..big {
            h2[i] = h1[i] + self.lambda2 * self.lap2[i];
        }
    }
}

/// Smooth part of the weighted LASSO: `½ Σ m_j |y_j − (A x)_j|²`.
pub struct WeightedSmooth<'a> {
    ws: Workspace<'a>,
    weights: &'a DiagonalWeights,
    my: Vec<Complex64>,
    y: &'a Measurement,
}

impl<'a> WeightedSmooth<'a> {
    pub fn new(fft: &'a Fft2, inst: &'a ProblemInstance, weights: &'a DiagonalWeights) -> Self {
        let my = inst
            .y
            .values()
            .iter()
            .zip(weights.m_diag())
            .map(|(v, m)| v * *m)
            .collect();
        Self {
            ws: Workspace::new(fft, &inst.pattern),
            weights,
            my,
            y: &inst.y,
        }
    }

    pub fn value(&mut self, x: &[f64]) -> f64 {
        self.ws.transform(x);
        0.5 * (0..self.y.len())
            .map(|j| self.weights.m_diag()[j] * (self.ws.sample(j) - self.y.values()[j]).norm_sqr())
            .sum::<f64>()
    }

    pub fn gradient(&mut self, x: &[f64], out: &mut [f64]) {
        self.ws.transform(x);
        let m = self.weights.m_diag();
        let vals: Vec<Complex64> = (0..self.y.len())
            .map(|j| self.ws.sample(j) * m[j] - self.my[j])
            .collect();
        self.ws.adjoint_into(|j| vals[j], out);
    }
}

/// `½‖y − A(x1 + x2)‖² + λ1‖x1‖₁ + (λ2/2)‖Δ x2‖²`.
pub fn composite_objective(inst: &ProblemInstance, x1: &Image, x2: &Image) -> Result<f64> {
    inst.pattern.check_side(x1.n())?;
    x1.check_same(x2)?;
    let fft = Fft2::new(inst.n());
    let mut smooth = CoupledSmooth::new(&fft, inst);
    let stacked: Vec<f64> = x1.as_slice().iter().chain(x2.as_slice()).copied().collect();
    Ok(smooth.value(&stacked) + inst.lambda1 * x1.l1_norm())
}

/// `½ (y − A x1)^H M (y − A x1) + λ1‖x1‖₁`.
pub fn p1_objective(inst: &ProblemInstance, weights: &DiagonalWeights, x1: &Image) -> Result<f64> {
    inst.pattern.check_side(x1.n())?;
    let fft = Fft2::new(inst.n());
    let r = inst.y.sub(&fft.forward(&inst.pattern, x1)?)?;
    Ok(weighted_residual_energy(weights, &r)? + inst.lambda1 * x1.l1_norm())
}

/// Iteration cap and relative tolerance of the Lipschitz estimate.
const POWER_ITERS: usize = 1000;
const POWER_TOL: f64 = 1e-9;

pub fn solve_coupled(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_coupled_from(inst, cfg, &Image::zeros(inst.n()), &Image::zeros(inst.n()))
}

pub fn solve_coupled_from(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    x1_0: &Image,
    x2_0: &Image,
) -> Result<SolveResult> {
    cfg.validate()?;
    inst.pattern.check_side(x1_0.n())?;
    x1_0.check_same(x2_0)?;
    let start = Instant::now();
    let n = inst.n();
    let big = n * n;
    let fft = Fft2::new(n);

    let mut smooth = CoupledSmooth::new(&fft, inst);
    let lipschitz = power_iteration(
        |v, out| smooth.hessian_apply(v, out),
        2 * big,
        POWER_ITERS,
        POWER_TOL,
    );
    let step = cfg.step_safety / lipschitz.max(f64::MIN_POSITIVE);

    let x0: Vec<f64> = x1_0
        .as_slice()
        .iter()
        .chain(x2_0.as_slice())
        .copied()
        .collect();
    let lambda1 = inst.lambda1;
    let smooth = std::cell::RefCell::new(smooth);
    let out = apgd(
        |z, g| smooth.borrow_mut().gradient(z, g),
        |v, s| soft_threshold_in_place(&mut v[..big], s * lambda1),
        |x| smooth.borrow_mut().value(x) + lambda1 * x[..big].iter().map(|v| v.abs()).sum::<f64>(),
        step,
        x0,
        cfg,
    )?;

    let mut x = out.x;
    let x2 = Image::from_vec_unchecked(n, x.split_off(big));
    let x1 = Image::from_vec_unchecked(n, x);
    let fit = fit_of(&fft, &inst.pattern, &x1)?;
    Ok(SolveResult {
        x1,
        x2,
        fit,
        trace: out.trace,
        status: out.status,
        iterations: out.iterations,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn solve_decoupled(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_decoupled_from(inst, cfg, &Image::zeros(inst.n()))
}

pub fn solve_decoupled_from(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    x0: &Image,
) -> Result<SolveResult> {
    cfg.validate()?;
    inst.pattern.check_side(x0.n())?;
    let start = Instant::now();
    let n = inst.n();
    let fft = Fft2::new(n);
    let weights = build_weights(&inst.pattern, inst.lambda2)?;

    // ‖A^H M A‖ = N max(m) since A A^H = N I
    let lipschitz = (n * n) as f64 * weights.max_m();
    let step = if lipschitz > 0.0 {
        cfg.step_safety / lipschitz
    } else {
        cfg.step_safety / (n * n) as f64
    };

    let lambda1 = inst.lambda1;
    let smooth = std::cell::RefCell::new(WeightedSmooth::new(&fft, inst, &weights));
    let out = apgd(
        |z, g| smooth.borrow_mut().gradient(z, g),
        |v, s| soft_threshold_in_place(v, s * lambda1),
        |x| smooth.borrow_mut().value(x) + lambda1 * x.iter().map(|v| v.abs()).sum::<f64>(),
        step,
        x0.as_slice().to_vec(),
        cfg,
    )?;

    let x1 = Image::from_vec_unchecked(n, out.x);
    let fit = fit_of(&fft, &inst.pattern, &x1)?;
    let residual = inst.y.sub(&fit)?;
    let x2 = solve_smooth_closed_form(&fft, &inst.pattern, &weights, &residual)?;
    Ok(SolveResult {
        x1,
        x2,
        fit,
        trace: out.trace,
        status: out.status,
        iterations: out.iterations,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Which driver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Coupled,
    Decoupled,
}

impl Method {
    pub fn solve(self, inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveResult> {
        match self {
            Method::Coupled => solve_coupled(inst, cfg),
            Method::Decoupled => solve_decoupled(inst, cfg),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Coupled => "coupled",
            Method::Decoupled => "decoupled",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupled" => Ok(Method::Coupled),
            "decoupled" => Ok(Method::Decoupled),
            other => Err(Error::arg(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

//! Command-line workflows: `simulate`, `solve`, `bench` and `check`.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 numerical failure,
//! 3 failed check.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::io::{self, KeyValues};
use crate::metrics::{evaluate, DEFAULT_RHO};
use crate::operators::{Fft2, Image, SamplingPattern};

use crate::reference;
use crate::representer::{build_weights, solve_smooth_closed_form};
use crate::simulate::{self, default_sigma_freq, derive_seed, SceneConfig};
use crate::solvers::{composite_objective, Method, ProblemInstance, SolverConfig};
use crate::tuning::{lambda1_from_alpha, lambda2_from_alpha};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(Error),
    #[error(transparent)]
    Numerical(Error),
    #[error("{0} check(s) failed")]
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::CheckFailed(_) => EXIT_CHECK,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Parse { .. } => CliError::Io(e),
            Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Numerical(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "spsm",
    version,
    about = "Sparse-plus-smooth reconstruction from partial Fourier data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scene, a sampling pattern and noisy measurements.
    Simulate(SimulateArgs),
    /// Reconstruct a simulated directory with one of the two drivers.
    Solve(SolveArgs),
    /// Time both drivers over several sizes and write a CSV summary.
    Bench(BenchArgs),
    /// Verify the decoupling assumptions and the fast path against dense algebra.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.3)]
    pub fraction: f64,
    #[arg(long, default_value_t = 20.0)]
    pub psnr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Std of the Gaussian frequency draws (default n/8).
    #[arg(long)]
    pub sigma_freq: Option<f64>,
    #[arg(long)]
    pub spikes: Option<usize>,
    #[arg(long)]
    pub spike_min: Option<f64>,
    #[arg(long)]
    pub spike_max: Option<f64>,
    #[arg(long)]
    pub blobs: Option<usize>,
    #[arg(long)]
    pub blob_min: Option<f64>,
    #[arg(long)]
    pub blob_max: Option<f64>,
    #[arg(long)]
    pub blob_sigma_min: Option<f64>,
    #[arg(long)]
    pub blob_sigma_max: Option<f64>,
    /// Also write grayscale PNG renderings of the images.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value = "decoupled")]
    pub method: Method,
    #[arg(long, default_value_t = 0.08)]
    pub alpha1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha2: f64,
    /// Overrides the value derived from alpha1.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Overrides the value derived from alpha2.
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 10)]
    pub trace_every: usize,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    /// Output directory (default: `<dir>/<method>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub fraction: f64,
    #[arg(long, default_value_t = 20.0)]
    pub psnr: f64,
    #[arg(long, default_value_t = 0.08)]
    pub alpha1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha2: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Threads used to prepare trial instances; solver timings always run one at a time.
    #[arg(long, default_value_t = 1)]
    pub parallel_trials: usize,
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 0.3)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
    pub lambda2: Vec<f64>,
    /// Remove the DC frequency from the pattern (the checks are then expected to fail).
    #[arg(long)]
    pub drop_dc: bool,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn scene_from_args(a: &SimulateArgs) -> SceneConfig {
    let mut s = SceneConfig::with_defaults(a.n, a.seed);
    if let Some(v) = a.spikes {
        s.k_spikes = v;
    }
    if let Some(v) = a.blobs {
        s.n_blobs = v;
    }
    s.spike_amp = (
        a.spike_min.unwrap_or(s.spike_amp.0),
        a.spike_max.unwrap_or(s.spike_amp.1),
    );
    s.blob_amp = (
        a.blob_min.unwrap_or(s.blob_amp.0),
        a.blob_max.unwrap_or(s.blob_amp.1),
    );
    s.blob_sigma = (
        a.blob_sigma_min.unwrap_or(s.blob_sigma.0),
        a.blob_sigma_max.unwrap_or(s.blob_sigma.1),
    );
    s
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    if a.n < 3 {
        return Err(usage("--n must be at least 3"));
    }
    let scene = scene_from_args(a);
    let sigma_freq = a.sigma_freq.unwrap_or_else(|| default_sigma_freq(a.n));
    let sim = simulate::simulate(&scene, a.fraction, sigma_freq, a.psnr)?;

    let out = io::ensure_dir(&a.out)?;
    io::write_grid(&out.join("x1_true.grid"), &sim.truth.x1_true)?;
    io::write_grid(&out.join("x2_true.grid"), &sim.truth.x2_true)?;
    io::write_pattern(&out.join("pattern.pat"), &sim.pattern)?;
    io::write_meas(&out.join("y.meas"), &sim.pattern, &sim.y)?;
    if a.plot {
        io::write_png(&out.join("x1_true.png"), &sim.truth.x1_true)?;
        io::write_png(&out.join("x2_true.png"), &sim.truth.x2_true)?;
    }

    let mut m = KeyValues::new();
    m.set("n", a.n)
        .set("L", sim.pattern.len())
        .set("seed", a.seed)
        .set("fraction", a.fraction)
        .set("psnr_db", a.psnr)
        .set("sigma_freq", sigma_freq)
        .set("k_spikes", scene.k_spikes)
        .set(
            "spike_amp",
            format!("{},{}", scene.spike_amp.0, scene.spike_amp.1),
        )
        .set("n_blobs", scene.n_blobs)
        .set(
            "blob_amp",
            format!("{},{}", scene.blob_amp.0, scene.blob_amp.1),
        )
        .set(
            "blob_sigma",
            format!("{},{}", scene.blob_sigma.0, scene.blob_sigma.1),
        )
        .set("rng", "ChaCha8Rng(rand_chacha 0.9)");
    m.write(&out.join("manifest.txt"))?;
    println!(
        "wrote {} (n={}, L={})",
        out.display(),
        a.n,
        sim.pattern.len()
    );
    Ok(())
}

/// Simulated inputs read back from a directory.
pub struct LoadedDir {
    pub pattern: SamplingPattern,
    pub y: crate::operators::Measurement,
    pub manifest: KeyValues,
    pub truth: Option<simulate::GroundTruth>,
}

pub fn load_dir(dir: &Path) -> CliResult<LoadedDir> {
    let pattern = io::read_pattern(&dir.join("pattern.pat"))?;
    let y = io::read_meas(&dir.join("y.meas"), &pattern)?;
    let manifest_path = dir.join("manifest.txt");
    let manifest = if manifest_path.exists() {
        KeyValues::read(&manifest_path)?
    } else {
        KeyValues::new()
    };
    let x1p = dir.join("x1_true.grid");
    let x2p = dir.join("x2_true.grid");
    let truth = if x1p.exists() && x2p.exists() {
        let x1_true = io::read_grid(&x1p)?;
        let x2_true = io::read_grid(&x2p)?;
        let support_true = x1_true
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Some(simulate::GroundTruth {
            x1_true,
            x2_true,
            support_true,
        })
    } else {
        None
    };
    Ok(LoadedDir {
        pattern,
        y,
        manifest,
        truth,
    })
}

pub fn cmd_solve(a: &SolveArgs) -> CliResult<()> {
    let data = load_dir(&a.dir)?;
    let n = data.pattern.n();
    let lambda2 = match a.lambda2 {
        Some(v) => v,
        None => lambda2_from_alpha(a.alpha2, n)?,
    };
    let lambda1 = match a.lambda1 {
        Some(v) => v,
        None => {
            if !(a.alpha1 > 0.0 && a.alpha1 < 1.0) {
                return Err(usage("--alpha1 must lie in (0, 1)"));
            }
            lambda1_from_alpha(a.alpha1, &data.pattern, lambda2, &data.y)?
        }
    };
    let cfg = SolverConfig {
        max_iter: a.max_iter,
        rel_tol: a.rel_tol,
        trace_every: a.trace_every,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    let inst = ProblemInstance::new(data.pattern.clone(), data.y.clone(), lambda1, lambda2)?;
    let result = a.method.solve(&inst, &cfg)?;
    let objective = composite_objective(&inst, &result.x1, &result.x2)?;

    let out = io::ensure_dir(&a.out.clone().unwrap_or_else(|| a.dir.join(a.method.name())))?;
    io::write_grid(&out.join("x1_hat.grid"), &result.x1)?;
    io::write_grid(&out.join("x2_hat.grid"), &result.x2)?;
    if a.plot {
        io::write_png(&out.join("x1_hat.png"), &result.x1)?;
        io::write_png(&out.join("x2_hat.png"), &result.x2)?;
        io::write_png(&out.join("total_hat.png"), &result.x1.add(&result.x2)?)?;
    }
    let mut trace = String::from("iteration,objective,seconds\n");
    for t in &result.trace {
        let _ = writeln!(
            trace,
            "{},{:.16e},{:.6e}",
            t.iteration, t.objective, t.seconds
        );
    }
    io::write_text(&out.join("trace.csv"), &trace)?;

    let mut manifest = KeyValues::new();
    manifest
        .set("n", n)
        .set("L", data.pattern.len())
        .set("seed", data.manifest.get("seed").unwrap_or("unknown"))
        .set(
            "fraction",
            data.manifest.get("fraction").unwrap_or("unknown"),
        )
        .set("psnr_db", data.manifest.get("psnr_db").unwrap_or("unknown"))
        .set("alpha1", a.alpha1)
        .set("alpha2", a.alpha2)
        .set("lambda1", format!("{lambda1:.16e}"))
        .set("lambda2", format!("{lambda2:.16e}"))
        .set("method", a.method)
        .set("rel_tol", a.rel_tol)
        .set("max_iter", a.max_iter)
        .set("rho", a.rho);
    manifest.write(&out.join("manifest.txt"))?;

    let mut report = KeyValues::new();
    if let Some(truth) = &data.truth {
        let ev = evaluate(&result, truth, a.rho)?;
        report
            .set("jaccard", ev.jaccard)
            .set("rel_l2_smooth", ev.rel_l2_smooth)
            .set("rel_l2_total", ev.rel_l2_total);
    }
    report
        .set("wall_seconds", result.seconds)
        .set("iterations", result.iterations)
        .set("status", result.status)
        .set("composite_objective", format!("{objective:.16e}"))
        .extend_from(&manifest);
    report.write(&out.join("report.txt"))?;
    print!("{}", report.format());
    Ok(())
}

/// Median with linear interpolation; `NaN` for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Interquartile range.
pub fn iqr(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub method: Method,
    pub median_seconds: f64,
    pub iqr_seconds: f64,
    pub median_iters: f64,
    pub failures: usize,
}

pub const BENCH_HEADER: &str = "size,method,median_seconds,iqr_seconds,median_iters";

pub fn format_bench(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6e},{:.6e},{}",
            r.size, r.method, r.median_seconds, r.iqr_seconds, r.median_iters
        );
    }
    s
}

/// Runs the timing study and returns one row per (size, method).
pub fn run_bench(a: &BenchArgs) -> CliResult<Vec<BenchRow>> {
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    if a.sizes.iter().any(|&s| s < 3) {
        return Err(usage("--sizes must all be at least 3"));
    }
    if a.parallel_trials == 0 {
        return Err(usage("--parallel-trials must be positive"));
    }
    let cfg = SolverConfig {
        max_iter: a.max_iter,
        rel_tol: a.rel_tol,
        ..SolverConfig::default()
    };
    cfg.validate()?;
    let mut rows = Vec::new();
    for &size in &a.sizes {
        let seeds: Vec<u64> = (0..a.trials as u64)
            .map(|t| derive_seed(a.seed, ((size as u64) << 32) | t))
            .collect();
        let build = |&seed: &u64| -> crate::error::Result<ProblemInstance> {
            let scene = SceneConfig::with_defaults(size, seed);
            let sim = simulate::simulate(&scene, a.fraction, default_sigma_freq(size), a.psnr)?;
            let lambda2 = lambda2_from_alpha(a.alpha2, size)?;
            let lambda1 = lambda1_from_alpha(a.alpha1, &sim.pattern, lambda2, &sim.y)?;
            ProblemInstance::new(sim.pattern, sim.y, lambda1, lambda2)
        };
        let instances = prepare_instances(&seeds, a.parallel_trials, build);

        for method in [Method::Coupled, Method::Decoupled] {
            let mut secs = Vec::new();
            let mut iters = Vec::new();
            let mut failures = 0;
            for inst in &instances {
                match inst
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|inst| method.solve(inst, &cfg).map_err(|e| e.to_string()))
                {
                    Ok(r) => {
                        secs.push(r.seconds);
                        iters.push(r.iterations as f64);
                    }
                    Err(e) => {
                        eprintln!("warning: size {size} {method}: {e}");
                        failures += 1;
                    }
                }
            }
            rows.push(BenchRow {
                size,
                method,
                median_seconds: median(&secs),
                iqr_seconds: iqr(&secs),
                median_iters: median(&iters),
                failures,
            });
        }
    }
    Ok(rows)
}

fn prepare_instances<F>(
    seeds: &[u64],
    threads: usize,
    build: F,
) -> Vec<crate::error::Result<ProblemInstance>>
where
    F: Fn(&u64) -> crate::error::Result<ProblemInstance> + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if threads > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(|| crate::par::map_collect(seeds, &build));
        }
    }
    let _ = threads;
    seeds.iter().map(build).collect()
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let rows = run_bench(a)?;
    let text = format_bench(&rows);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        io::ensure_dir(parent)?;
    }
    io::write_text(&a.out, &text)?;
    print!("{text}");
    Ok(())
}

/// Outcome of one oracle comparison.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Largest accepted relative gap between fast and dense computations.
pub const CHECK_FAST_TOL: f64 = 1e-8;
/// Largest accepted relative residual of the decoupling identity.
pub const CHECK_LEMMA_TOL: f64 = 1e-10;

pub fn run_checks(a: &CheckArgs) -> CliResult<Vec<CheckLine>> {
    if a.n < 3 || a.n > 16 {
        return Err(usage("--n must lie in 3..=16"));
    }
    if a.lambda2.iter().any(|&l| !(l > 0.0)) {
        return Err(usage("--lambda2 values must be positive"));
    }
    let mut pattern = simulate::gen_pattern(a.n, a.fraction, default_sigma_freq(a.n), a.seed)?;
    if a.drop_dc {
        pattern = pattern.without_dc()?;
    }
    let dense = reference::fourier_problem(&pattern)?;
    let mut lines = Vec::new();
    let mut push = |name: String, r: std::result::Result<(bool, String), Error>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        lines.push(CheckLine {
            name,
            passed,
            detail,
        });
    };

    push(
        "assumption1 full row rank".into(),
        reference::check_assumption1(&dense).map(|ok| (ok, String::new())),
    );
    push(
        "assumption2 trivial kernel intersection".into(),
        reference::check_assumption2(&dense).map(|ok| (ok, String::new())),
    );
    push(
        "assumption3 invariant subspace".into(),
        reference::check_assumption3(&dense).map(|ok| (ok, String::new())),
    );

    let fft = Fft2::new(a.n);
    let layout = reference::compact_layout(&pattern);
    for &lambda2 in &a.lambda2 {
        push(
            format!("lemma1 identity lambda2={lambda2}"),
            reference::lemma1_residual(&dense, lambda2)
                .map(|r| (r <= CHECK_LEMMA_TOL, format!("residual {r:.3e}"))),
        );

        let m_check = (|| -> crate::error::Result<(bool, String)> {
            let w = build_weights(&pattern, lambda2)?;
            let m = reference::dense_m_matrix(&dense, lambda2)?;
            let scale = m.amax().max(1e-300);
            let mut gap: f64 = 0.0;
            for (row, &(j, _)) in layout.iter().enumerate() {
                for col in 0..layout.len() {
                    let want = if row == col { w.m_diag()[j] } else { 0.0 };
                    gap = gap.max((m[(row, col)] - want).abs());
                }
            }
            let rel = gap / scale;
            Ok((rel <= CHECK_FAST_TOL, format!("relative gap {rel:.3e}")))
        })();
        push(format!("weights fast vs dense lambda2={lambda2}"), m_check);

        let x2_check = (|| -> crate::error::Result<(bool, String)> {
            let w = build_weights(&pattern, lambda2)?;
            let sim = SceneConfig::with_defaults(a.n, derive_seed(a.seed, 7));
            let truth = simulate::gen_scene(&SceneConfig { k_spikes: 2, ..sim })?;
            let y = fft.forward(&pattern, &truth.total())?;
            let x1 = truth.x1_true.scale(0.5);
            let resid = y.sub(&fft.forward(&pattern, &x1)?)?;
            let fast = solve_smooth_closed_form(&fft, &pattern, &w, &resid)?;
            let dense_x2 = reference::dense_smooth_solve(
                &dense,
                lambda2,
                &nalgebra::DVector::from_column_slice(x1.as_slice()),
                &reference::to_coords(&pattern, &y)?,
            )?;
            let dense_img = Image::new(a.n, dense_x2.iter().copied().collect())?;
            let rel = fast.sub(&dense_img)?.norm() / dense_img.norm().max(1e-300);
            Ok((rel <= CHECK_FAST_TOL, format!("relative gap {rel:.3e}")))
        })();
        push(
            format!("smooth component fast vs dense lambda2={lambda2}"),
            x2_check,
        );
    }
    Ok(lines)
}

pub fn cmd_check(a: &CheckArgs) -> CliResult<()> {
    let lines = run_checks(a)?;
    let mut failed = 0;
    for l in &lines {
        let tag = if l.passed { "PASS" } else { "FAIL" };
        if !l.passed {
            failed += 1;
        }
        if l.detail.is_empty() {
            println!("{tag} {}", l.name);
        } else {
            println!("{tag} {} ({})", l.name, l.detail);
        }
    }
    if failed > 0 {
        return Err(CliError::CheckFailed(failed));
    }
    Ok(())
}

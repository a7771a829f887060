//! Reconstruction quality metrics.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::operators::Image;
use crate::simulate::GroundTruth;
use crate::solvers::SolveResult;

/// Default support threshold, as a fraction of the peak magnitude.
pub const DEFAULT_RHO: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub jaccard: f64,
    pub rel_l2_smooth: f64,
    pub rel_l2_total: f64,
    pub wall_seconds: f64,
    pub iterations: usize,
    pub rho: f64,
}

/// Pixels with `|x_i| > rho · max|x|`.
pub fn support_of(x: &Image, rho: f64) -> BTreeSet<usize> {
    let peak = x.max_abs();
    if peak == 0.0 {
        return BTreeSet::new();
    }
    let thr = rho * peak;
    x.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > thr)
        .map(|(i, _)| i)
        .collect()
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets scoring 1.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn relative_l2(x_est: &Image, x_ref: &Image) -> Result<f64> {
    let r = x_ref.norm();
    if r == 0.0 {
        return Err(Error::arg("relative error against a zero reference"));
    }
    Ok(x_est.sub(x_ref)?.norm() / r)
}

pub fn evaluate(result: &SolveResult, truth: &GroundTruth, rho: f64) -> Result<EvalReport> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::arg(format!("rho must lie in (0, 1), got {rho}")));
    }
    result.x1.check_same(&truth.x1_true)?;
    result.x2.check_same(&truth.x2_true)?;
    let total_est = result.x1.add(&result.x2)?;
    Ok(EvalReport {
        jaccard: jaccard(&support_of(&result.x1, rho), &truth.support_true),
        rel_l2_smooth: relative_l2(&result.x2, &truth.x2_true)?,
        rel_l2_total: relative_l2(&total_est, &truth.total())?,
        wall_seconds: result.seconds,
        iterations: result.iterations,
        rho,
    })
}

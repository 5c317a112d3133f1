//! Per-generation numerics: utility shaping, fitness and diversity
//! gradients, diagonal Fisher information, the step-size schedule and the
//! natural / plain parameter updates.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gaussian::{SampleBatch, SearchDistribution, VAR_FLOOR};

/// Smallest Fisher diagonal entry used as a preconditioner.
pub const FISHER_FLOOR: f64 = 1e-10;

/// Optimization direction for ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sense {
    #[default]
    Maximize,
    Minimize,
}

impl Sense {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Maximize => a > b,
            Sense::Minimize => a < b,
        }
    }

    /// The value every finite fitness improves upon.
    pub fn worst(self) -> f64 {
        match self {
            Sense::Maximize => f64::NEG_INFINITY,
            Sense::Minimize => f64::INFINITY,
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Maximize => "maximize",
            Sense::Minimize => "minimize",
        })
    }
}

impl FromStr for Sense {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "maximize" | "max" => Ok(Sense::Maximize),
            "minimize" | "min" => Ok(Sense::Minimize),
            other => Err(format!("expected `maximize` or `minimize`, got `{other}`")),
        }
    }
}

/// Gradient of some scalar model with respect to a distribution's mean and
/// (diagonal) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub wrt_mean: Vec<f64>,
    pub wrt_variance: Vec<f64>,
}

impl GradientPair {
    pub fn zeros(dim: usize) -> Self {
        Self { wrt_mean: vec![0.0; dim], wrt_variance: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.wrt_mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherDiagonals {
    pub for_mean: Vec<f64>,
    pub for_variance: Vec<f64>,
}

impl FisherDiagonals {
    /// All-ones preconditioner; a natural step with it is a plain step.
    pub fn identity(dim: usize) -> Self {
        Self { for_mean: vec![1.0; dim], for_variance: vec![1.0; dim] }
    }
}

/// Rank-based utilities aligned with the batch order.
#[derive(Debug, Clone, PartialEq)]
pub struct Utilities {
    pub values: Vec<f64>,
}

/// Replaces raw fitnesses with log-rank utilities.
///
/// Rank 1 is the best fitness under `sense`; ties go to the lower sample
/// index. Rank `r` gets `max(0, ln(mu/2 + 1) - ln r)`, normalized by the sum
/// over all ranks, minus `1/mu`.
pub fn shape_utilities(fitnesses: &[f64], sense: Sense) -> Utilities {
    let mu = fitnesses.len();
    if mu == 0 {
        return Utilities { values: Vec::new() };
    }
    let mut order: Vec<usize> = (0..mu).collect();
    // Stable sort keeps index order among equal fitnesses.
    order.sort_by(|&a, &b| {
        let (fa, fb) = (fitnesses[a], fitnesses[b]);
        match sense {
            Sense::Maximize => fb.total_cmp(&fa),
            Sense::Minimize => fa.total_cmp(&fb),
        }
    });

    let head = (mu as f64 / 2.0 + 1.0).ln();
    let raw: Vec<f64> = (1..=mu).map(|rank| (head - (rank as f64).ln()).max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    let offset = 1.0 / mu as f64;

    let mut values = vec![0.0; mu];
    for (rank_idx, &k) in order.iter().enumerate() {
        values[k] = raw[rank_idx] / total - offset;
    }
    Utilities { values }
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Search-gradient estimate of the expected (utility-shaped) fitness.
pub fn fitness_grad(dist: &SearchDistribution, batch: &SampleBatch, weights: &Utilities) -> Result<GradientPair> {
    check_dims(batch.len(), weights.values.len())?;
    let dim = dist.dim();
    let (m, v) = (dist.mean(), dist.variance());
    let mut grad = GradientPair::zeros(dim);
    for (x, &u) in batch.solutions.iter().zip(&weights.values) {
        check_dims(dim, x.len())?;
        for d in 0..dim {
            let dx = x[d] - m[d];
            grad.wrt_mean[d] += dx / v[d] * u;
            grad.wrt_variance[d] += (dx * dx / (2.0 * v[d] * v[d]) - 1.0 / (2.0 * v[d])) * u;
        }
    }
    let mu = batch.len() as f64;
    for d in 0..dim {
        grad.wrt_mean[d] /= mu;
        grad.wrt_variance[d] /= mu;
    }
    Ok(grad)
}

/// Exact gradient of process `i`'s diversity (summed Bhattacharyya distance
/// to all peers) with respect to its own mean and variance.
pub fn diversity_grad(i: usize, dists: &[SearchDistribution]) -> Result<GradientPair> {
    let own = dists.get(i).ok_or_else(|| {
        Error::InvalidDistribution(format!("process index {i} out of range for {} processes", dists.len()))
    })?;
    let dim = own.dim();
    let mut grad = GradientPair::zeros(dim);
    let (mi, vi) = (own.mean(), own.variance());
    for (j, other) in dists.iter().enumerate() {
        if j == i {
            continue;
        }
        check_dims(dim, other.dim())?;
        let (mj, vj) = (other.mean(), other.variance());
        for d in 0..dim {
            let s = 0.5 * (vi[d] + vj[d]);
            let dm = mi[d] - mj[d];
            grad.wrt_mean[d] += dm / s;
            grad.wrt_variance[d] += 1.0 / s - 0.25 * dm * dm / (s * s) - 1.0 / vi[d];
        }
    }
    for d in 0..dim {
        grad.wrt_mean[d] *= 0.25;
        grad.wrt_variance[d] *= 0.25;
    }
    Ok(grad)
}

/// Diagonal sample estimate of the Fisher information for mean and variance.
pub fn fisher(dist: &SearchDistribution, batch: &SampleBatch) -> Result<FisherDiagonals> {
    let dim = dist.dim();
    let (m, v) = (dist.mean(), dist.variance());
    let mut for_mean = vec![0.0; dim];
    let mut for_variance = vec![0.0; dim];
    for x in &batch.solutions {
        check_dims(dim, x.len())?;
        for d in 0..dim {
            let dx = x[d] - m[d];
            let z2 = dx * dx / (v[d] * v[d]);
            for_mean[d] += z2;
            let centered = z2 - 1.0 / v[d];
            for_variance[d] += centered * centered;
        }
    }
    let mu = batch.len() as f64;
    for d in 0..dim {
        for_mean[d] = (for_mean[d] / mu).max(FISHER_FLOOR);
        for_variance[d] = (for_variance[d] / (4.0 * mu)).max(FISHER_FLOOR);
    }
    Ok(FisherDiagonals { for_mean, for_variance })
}

/// Step size after consuming `t_cur` of `t_max` evaluations; decays from
/// `eta_init` at the start to 0 when the budget is spent.
pub fn schedule(eta_init: f64, t_cur: u64, t_max: u64) -> f64 {
    use std::f64::consts::E;
    if t_max == 0 || t_cur >= t_max {
        return 0.0;
    }
    let frac = t_cur as f64 / t_max as f64;
    eta_init * (E - frac.exp()) / (E - 1.0)
}

/// Fisher-preconditioned ascent step on fitness plus `phi` times diversity.
pub fn natural_step(
    dist: &SearchDistribution,
    fit: &GradientPair,
    div: &GradientPair,
    fish: &FisherDiagonals,
    eta_m: f64,
    eta_v: f64,
    phi: f64,
) -> Result<SearchDistribution> {
    let dim = dist.dim();
    check_dims(dim, fit.dim())?;
    check_dims(dim, div.dim())?;
    check_dims(dim, fish.for_mean.len())?;
    check_dims(dim, fish.for_variance.len())?;
    let mut mean = Vec::with_capacity(dim);
    let mut variance = Vec::with_capacity(dim);
    for d in 0..dim {
        let m = dist.mean()[d] + eta_m * (fit.wrt_mean[d] + phi * div.wrt_mean[d]) / fish.for_mean[d];
        if !m.is_finite() {
            return Err(Error::NonFinite { field: "mean", coordinate: d });
        }
        let v = dist.variance()[d] + eta_v * (fit.wrt_variance[d] + phi * div.wrt_variance[d]) / fish.for_variance[d];
        if !v.is_finite() {
            return Err(Error::NonFinite { field: "variance", coordinate: d });
        }
        mean.push(m);
        variance.push(v.max(VAR_FLOOR));
    }
    SearchDistribution::new(mean, variance)
}

/// Unpreconditioned gradient ascent step with a single step size.
pub fn plain_step(
    dist: &SearchDistribution,
    fit: &GradientPair,
    div: &GradientPair,
    eta: f64,
    phi: f64,
) -> Result<SearchDistribution> {
    let dim = dist.dim();
    check_dims(dim, fit.dim())?;
    check_dims(dim, div.dim())?;
    let mut mean = Vec::with_capacity(dim);
    let mut variance = Vec::with_capacity(dim);
    for d in 0..dim {
        let m = dist.mean()[d] + eta * (fit.wrt_mean[d] + phi * div.wrt_mean[d]);
        if !m.is_finite() {
            return Err(Error::NonFinite { field: "mean", coordinate: d });
        }
        let v = dist.variance()[d] + eta * (fit.wrt_variance[d] + phi * div.wrt_variance[d]);
        if !v.is_finite() {
            return Err(Error::NonFinite { field: "variance", coordinate: d });
        }
        mean.push(m);
        variance.push(v.max(VAR_FLOOR));
    }
    SearchDistribution::new(mean, variance)
}

/// Trade-off weight that puts diversity gradients on the same scale as
/// fitness gradients: `median |fit| / median |div|` over all components.
/// Returns `None` when the diversity gradients are all zero.
pub fn balance_phi(fits: &[GradientPair], divs: &[GradientPair]) -> Option<f64> {
    fn median_abs(grads: &[GradientPair]) -> f64 {
        let mut all: Vec<f64> = grads
            .iter()
            .flat_map(|g| g.wrt_mean.iter().chain(&g.wrt_variance))
            .map(|x| x.abs())
            .collect();
        if all.is_empty() {
            return 0.0;
        }
        all.sort_by(f64::total_cmp);
        let n = all.len();
        if n % 2 == 1 {
            all[n / 2]
        } else {
            0.5 * (all[n / 2 - 1] + all[n / 2])
        }
    }
    let fit = median_abs(fits);
    let div = median_abs(divs);
    if div > 0.0 && fit.is_finite() && div.is_finite() {
        Some(fit / div)
    } else {
        None
    }
}

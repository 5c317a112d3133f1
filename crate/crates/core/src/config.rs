//! Run hyperparameters.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradient::Sense;
use crate::objective::ObjectiveSpec;
use crate::stream::StreamId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// Fisher-preconditioned step with separate mean / variance step sizes.
    #[default]
    Natural,
    /// Raw gradient step using the mean step size for both parameters.
    Plain,
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::Natural => "natural",
            UpdateRule::Plain => "plain",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "natural" => Ok(UpdateRule::Natural),
            "plain" => Ok(UpdateRule::Plain),
            other => Err(format!("expected `natural` or `plain`, got `{other}`")),
        }
    }
}

/// How many times each solution is re-evaluated (results are averaged).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reevals {
    Fixed(u32),
    /// Drawn uniformly from `lo..=hi` per solution per iteration.
    Range { lo: u32, hi: u32 },
}

impl Default for Reevals {
    fn default() -> Self {
        Reevals::Fixed(1)
    }
}

impl Reevals {
    /// Re-evaluation count for the stream's (process, iteration, sample).
    pub fn draw(self, stream: StreamId) -> u32 {
        match self {
            Reevals::Fixed(n) => n,
            Reevals::Range { lo, hi } => stream.rng().random_range(lo..=hi),
        }
    }

    pub fn max(self) -> u32 {
        match self {
            Reevals::Fixed(n) => n,
            Reevals::Range { hi, .. } => hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InitBox {
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self { lower: vec![lower; dim], upper: vec![upper; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Settings specific to the NCS-C baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct NcsSettings {
    /// Initial isotropic mutation scale; `None` means a quarter of the mean
    /// init-box width.
    pub sigma_init: Option<f64>,
    /// Iterations between 1/5-success reviews.
    pub epoch: u64,
    /// Multiplicative sigma adjustment applied at each review.
    pub factor: f64,
}

impl Default for NcsSettings {
    fn default() -> Self {
        Self { sigma_init: None, epoch: 10, factor: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lambda: usize,
    pub mu: usize,
    pub phi: f64,
    /// Replace `phi` by the measured fitness/diversity gradient scale ratio
    /// on the first iteration.
    pub auto_phi: bool,
    pub eta_m_init: f64,
    pub eta_v_init: f64,
    /// Total fitness evaluations, re-evaluations included.
    pub budget_evals: u64,
    pub seed: u64,
    pub sense: Sense,
    pub update_rule: UpdateRule,
    pub reevals: Reevals,
    pub init_box: InitBox,
    pub ncs: NcsSettings,
}

impl RunConfig {
    /// Defaults for a `dim`-dimensional problem: λ = 5, μ = 15, φ = 1e-4,
    /// η_m = 0.5, η_v = 0.1.
    pub fn new(dim: usize, budget_evals: u64) -> Self {
        Self {
            lambda: 5,
            mu: 15,
            phi: 1e-4,
            auto_phi: false,
            eta_m_init: 0.5,
            eta_v_init: 0.1,
            budget_evals,
            seed: 0,
            sense: Sense::Maximize,
            update_rule: UpdateRule::Natural,
            reevals: Reevals::Fixed(1),
            init_box: InitBox::uniform(dim, -1.0, 1.0),
            ncs: NcsSettings::default(),
        }
    }

    /// Defaults with sense and init box taken from the objective.
    pub fn for_objective(spec: &ObjectiveSpec, budget_evals: u64) -> Self {
        Self {
            sense: spec.sense,
            init_box: InitBox { lower: spec.domain_lower.clone(), upper: spec.domain_upper.clone() },
            ..Self::new(spec.dimension, budget_evals)
        }
    }

    pub fn dim(&self) -> usize {
        self.init_box.dim()
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.lambda == 0 {
            v.push("lambda must be a positive integer".to_string());
        }
        if self.mu == 0 {
            v.push("mu must be a positive integer".to_string());
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            v.push(format!("phi must be finite and >= 0, got {}", self.phi));
        }
        if !(self.eta_m_init.is_finite() && self.eta_m_init > 0.0) {
            v.push(format!("eta_m_init must be positive, got {}", self.eta_m_init));
        }
        if !(self.eta_v_init.is_finite() && self.eta_v_init > 0.0) {
            v.push(format!("eta_v_init must be positive, got {}", self.eta_v_init));
        }
        if (self.budget_evals as u128) < (self.lambda as u128) * (self.mu as u128) || self.budget_evals == 0 {
            v.push(format!(
                "budget_evals ({}) must be at least lambda * mu ({})",
                self.budget_evals,
                self.lambda * self.mu
            ));
        }
        match self.reevals {
            Reevals::Fixed(0) => v.push("reevals must be at least 1".to_string()),
            Reevals::Range { lo, hi } if lo == 0 || lo > hi => {
                v.push(format!("reevals range [{lo}, {hi}] must satisfy 1 <= lo <= hi"))
            }
            _ => {}
        }
        let b = &self.init_box;
        if b.lower.is_empty() {
            v.push("init box must have at least one dimension".to_string());
        }
        if b.lower.len() != b.upper.len() {
            v.push(format!("init box lower has {} entries but upper has {}", b.lower.len(), b.upper.len()));
        }
        for (d, (lo, hi)) in b.lower.iter().zip(&b.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                v.push(format!("init box dimension {d}: need finite lower < upper, got [{lo}, {hi}]"));
            }
        }
        if let Some(s) = self.ncs.sigma_init {
            if !(s.is_finite() && s > 0.0) {
                v.push(format!("ncs sigma_init must be positive, got {s}"));
            }
        }
        if self.ncs.epoch == 0 {
            v.push("ncs epoch must be positive".to_string());
        }
        if !(self.ncs.factor.is_finite() && self.ncs.factor > 1.0) {
            v.push(format!("ncs factor must be > 1, got {}", self.ncs.factor));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Purpose;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::new(3, 75);
        assert_eq!((cfg.lambda, cfg.mu, cfg.phi, cfg.eta_m_init, cfg.eta_v_init), (5, 15, 1e-4, 0.5, 0.1));
        cfg.validate().unwrap();
    }

    #[test]
    fn collects_all_violations() {
        let mut cfg = RunConfig::new(2, 10);
        cfg.lambda = 0;
        cfg.eta_m_init = -1.0;
        cfg.init_box.upper[1] = -5.0;
        let v = cfg.violations();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v[0].contains("lambda"));
    }

    #[test]
    fn budget_must_cover_one_iteration() {
        let cfg = RunConfig::new(2, 74);
        assert!(cfg.violations().iter().any(|m| m.contains("budget_evals")));
    }

    #[test]
    fn reeval_draws() {
        let s = StreamId::new(1, Purpose::Reevals);
        assert_eq!(Reevals::Fixed(3).draw(s), 3);
        let r = Reevals::Range { lo: 1, hi: 5 };
        let draws: Vec<u32> = (0..500).map(|k| r.draw(s.sample(k))).collect();
        assert!(draws.iter().all(|d| (1..=5).contains(d)));
        for v in 1..=5 {
            assert!(draws.contains(&v));
        }
        assert_eq!(r.draw(s.sample(7)), r.draw(s.sample(7)));
    }
}

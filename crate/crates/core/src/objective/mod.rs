//! Objectives the optimizers can be pointed at, addressable by string id.

pub mod benchmarks;
pub mod cartpole;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gradient::Sense;
use crate::stream::{Purpose, StreamId};

pub use cartpole::{policy_rollout, PolicyCodec};

/// Ids accepted by [`build`].
pub const REGISTERED: [&str; 5] = ["sphere", "rastrigin", "ackley", "griewank", "cartpole"];

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub id: String,
    pub dimension: usize,
    pub sense: Sense,
    /// Standard deviation of additive Gaussian evaluation noise.
    pub noise_sd: f64,
    /// Suggested search region; only used to initialize.
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub known_optimum: Option<(Vec<f64>, f64)>,
    /// Episodic objectives draw fresh initial conditions on every evaluation.
    pub episodic: bool,
}

pub trait Objective: Send + Sync {
    fn spec(&self) -> &ObjectiveSpec;

    /// Noise-free value of `x`. Episodic tasks use `episode` to pick their
    /// randomized initial conditions; analytic functions ignore it.
    fn evaluate_episode(&self, x: &[f64], episode: u64) -> Result<f64>;
}

fn check_dim(spec: &ObjectiveSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.dimension {
        return Err(Error::DimensionMismatch { expected: spec.dimension, actual: x.len() });
    }
    Ok(())
}

/// Deterministic value of `x` (episode 0 for episodic tasks).
pub fn evaluate(objective: &dyn Objective, x: &[f64]) -> Result<f64> {
    objective.evaluate_episode(x, 0)
}

/// Mean of `reevals` independent evaluations, each with additive
/// `N(0, noise_sd²)` noise and (for episodic tasks) a fresh episode, all drawn
/// from `stream`. Noise-free analytic objectives return [`evaluate`] directly.
pub fn noisy_evaluate(objective: &dyn Objective, x: &[f64], reevals: u32, stream: StreamId) -> Result<f64> {
    let spec = objective.spec();
    check_dim(spec, x)?;
    if spec.noise_sd == 0.0 && !spec.episodic {
        return evaluate(objective, x);
    }
    let reevals = reevals.max(1);
    let mut rng = stream.rng();
    let mut total = 0.0;
    for _ in 0..reevals {
        let episode: u64 = rng.random();
        let mut value = objective.evaluate_episode(x, episode)?;
        if spec.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            value += spec.noise_sd * z;
        }
        total += value;
    }
    let mean = total / f64::from(reevals);
    if !mean.is_finite() {
        return Err(Error::Evaluation(format!("objective `{}` returned a non-finite value", spec.id)));
    }
    Ok(mean)
}

struct Analytic {
    spec: ObjectiveSpec,
    f: fn(&[f64]) -> f64,
}

impl Objective for Analytic {
    fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    fn evaluate_episode(&self, x: &[f64], _episode: u64) -> Result<f64> {
        check_dim(&self.spec, x)?;
        Ok((self.f)(x))
    }
}

struct CartPole {
    spec: ObjectiveSpec,
    codec: PolicyCodec,
}

impl Objective for CartPole {
    fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    fn evaluate_episode(&self, x: &[f64], episode: u64) -> Result<f64> {
        check_dim(&self.spec, x)?;
        policy_rollout(&self.codec, x, 1, StreamId::new(episode, Purpose::Custom))
    }
}

/// Builds a registered objective. `dimension` is ignored for `cartpole`,
/// whose dimension is the policy's weight count.
pub fn build(id: &str, dimension: usize, noise_sd: f64) -> Result<Arc<dyn Objective>> {
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::InvalidConfig(vec![format!("noise_sd must be finite and >= 0, got {noise_sd}")]));
    }
    let analytic = |f: fn(&[f64]) -> f64, half_width: f64| -> Result<Arc<dyn Objective>> {
        if dimension == 0 {
            return Err(Error::InvalidConfig(vec!["dimension must be at least 1".into()]));
        }
        Ok(Arc::new(Analytic {
            spec: ObjectiveSpec {
                id: id.to_string(),
                dimension,
                sense: Sense::Minimize,
                noise_sd,
                domain_lower: vec![-half_width; dimension],
                domain_upper: vec![half_width; dimension],
                known_optimum: Some((vec![0.0; dimension], 0.0)),
                episodic: false,
            },
            f,
        }))
    };
    match id {
        "sphere" => analytic(benchmarks::sphere, 5.0),
        "rastrigin" => analytic(benchmarks::rastrigin, 5.12),
        "ackley" => analytic(benchmarks::ackley, 32.768),
        "griewank" => analytic(benchmarks::griewank, 600.0),
        "cartpole" => {
            let codec = PolicyCodec::cart_pole();
            let w = codec.weight_count();
            Ok(Arc::new(CartPole {
                spec: ObjectiveSpec {
                    id: id.to_string(),
                    dimension: w,
                    sense: Sense::Maximize,
                    noise_sd,
                    domain_lower: vec![-1.0; w],
                    domain_upper: vec![1.0; w],
                    known_optimum: None,
                    episodic: true,
                },
                codec,
            }))
        }
        other => Err(Error::UnknownObjective(other.to_string())),
    }
}

//! A small cart-pole balancing task driven by a flattened feedforward policy.
//!
//! Dynamics are the classic Barto–Sutton–Anderson cart-pole, integrated with
//! explicit Euler steps:
//!
//! | constant            | value                 |
//! |---------------------|-----------------------|
//! | gravity             | 9.8 m/s²              |
//! | cart mass           | 1.0 kg                |
//! | pole mass           | 0.1 kg                |
//! | pole half-length    | 0.5 m                 |
//! | push force          | ±10 N                 |
//! | time step           | 0.02 s                |
//! | failure angle       | ±12° (0.2095 rad)     |
//! | failure position    | ±2.4 m                |
//! | episode cap         | 500 steps             |
//!
//! The state `(x, ẋ, θ, θ̇)` starts with each component uniform in
//! `[-0.05, 0.05]`. Every step the policy picks push-left (action 0) or
//! push-right (action 1) and the episode earns +1, including the step on which
//! the pole falls, so a return is always in `[1, 500]`. Only the episode total
//! is reported back to the optimizer.
//!
//! The policy is `4 → 8 (tanh) → 2` by default; the action is the arg-max of
//! the output layer with ties going to action 0.

use rand::Rng;

use crate::error::{Error, Result};
use crate::stream::StreamId;

pub const MAX_STEPS: u32 = 500;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const HALF_LENGTH: f64 = 0.5;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;
const ANGLE_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const POSITION_LIMIT: f64 = 2.4;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `outputs × inputs`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Maps a flat weight vector to the layers of a dense network and back.
///
/// Each layer is stored as its weight rows followed by its biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyCodec {
    sizes: Vec<usize>,
}

impl PolicyCodec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(vec![format!("invalid layer sizes {sizes:?}")]));
        }
        Ok(Self { sizes })
    }

    pub fn cart_pole() -> Self {
        Self { sizes: vec![4, 8, 2] }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weight_count(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn unflatten(&self, flat: &[f64]) -> Result<Vec<Layer>> {
        if flat.len() != self.weight_count() {
            return Err(Error::DimensionMismatch { expected: self.weight_count(), actual: flat.len() });
        }
        let mut at = 0;
        let mut layers = Vec::with_capacity(self.sizes.len() - 1);
        for w in self.sizes.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let weights = (0..outputs)
                .map(|o| flat[at + o * inputs..at + (o + 1) * inputs].to_vec())
                .collect();
            at += inputs * outputs;
            let bias = flat[at..at + outputs].to_vec();
            at += outputs;
            layers.push(Layer { weights, bias });
        }
        Ok(layers)
    }

    pub fn flatten(&self, layers: &[Layer]) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.weight_count());
        for layer in layers {
            for row in &layer.weights {
                flat.extend_from_slice(row);
            }
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }
}

fn forward(layers: &[Layer], input: &[f64]) -> Vec<f64> {
    let mut act = input.to_vec();
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        act = layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, b)| {
                let z = row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>() + b;
                if l == last { z } else { z.tanh() }
            })
            .collect();
    }
    act
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct State {
    x: f64,
    x_dot: f64,
    theta: f64,
    theta_dot: f64,
}

impl State {
    fn step(&mut self, action: usize) {
        let force = if action == 1 { FORCE } else { -FORCE };
        let (sin, cos) = self.theta.sin_cos();
        let total_mass = CART_MASS + POLE_MASS;
        let pole_moment = POLE_MASS * HALF_LENGTH;
        let temp = (force + pole_moment * self.theta_dot * self.theta_dot * sin) / total_mass;
        let theta_acc =
            (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
        self.x += TAU * self.x_dot;
        self.x_dot += TAU * x_acc;
        self.theta += TAU * self.theta_dot;
        self.theta_dot += TAU * theta_acc;
    }

    fn failed(&self) -> bool {
        self.x.abs() > POSITION_LIMIT || self.theta.abs() > ANGLE_LIMIT
    }

    fn observe(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

fn episode(layers: &[Layer], stream: StreamId) -> u32 {
    let mut rng = stream.rng();
    let mut state = State {
        x: rng.random_range(-0.05..0.05),
        x_dot: rng.random_range(-0.05..0.05),
        theta: rng.random_range(-0.05..0.05),
        theta_dot: rng.random_range(-0.05..0.05),
    };
    let mut steps = 0;
    while steps < MAX_STEPS {
        let action = argmax(&forward(layers, &state.observe()));
        state.step(action);
        steps += 1;
        if state.failed() {
            break;
        }
    }
    steps
}

/// Average undiscounted return of `episodes` cart-pole episodes; episode `e`
/// draws its initial state from `stream.sample(e)`.
pub fn policy_rollout(codec: &PolicyCodec, weights: &[f64], episodes: usize, stream: StreamId) -> Result<f64> {
    if codec.sizes().first() != Some(&4) || codec.sizes().last() != Some(&2) {
        return Err(Error::InvalidConfig(vec!["cart-pole policy needs 4 inputs and 2 outputs".into()]));
    }
    if let Some(d) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::NonFinite { field: "weights", coordinate: d });
    }
    let layers = codec.unflatten(weights)?;
    let episodes = episodes.max(1);
    let total: u64 = (0..episodes).map(|e| u64::from(episode(&layers, stream.sample(e)))).sum();
    Ok(total as f64 / episodes as f64)
}

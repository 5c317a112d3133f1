//! Deterministic random streams.
//!
//! Every random draw in a run is addressed by a [`StreamId`]: the master seed,
//! what the draw is for, and the (process, iteration, sample) coordinates it
//! belongs to. Two draws with the same id always see the same numbers, no
//! matter which thread or execution engine performs them. This is what makes
//! the serial, island and hybrid engines bit-comparable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Sample = 2,
    Reevals = 3,
    Noise = 4,
    Mutation = 5,
    Custom = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub purpose: Purpose,
    pub process: u64,
    pub iteration: u64,
    pub sample: u64,
}

impl StreamId {
    pub fn new(seed: u64, purpose: Purpose) -> Self {
        Self { seed, purpose, process: 0, iteration: 0, sample: 0 }
    }

    pub fn process(mut self, process: usize) -> Self {
        self.process = process as u64;
        self
    }

    pub fn iteration(mut self, iteration: u64) -> Self {
        self.iteration = iteration;
        self
    }

    pub fn sample(mut self, sample: usize) -> Self {
        self.sample = sample as u64;
        self
    }

    /// Opens the stream. The ChaCha key is the raw id (no hashing, so distinct
    /// ids can never collide); the sample index selects the ChaCha stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.purpose as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.process.to_le_bytes());
        key[24..32].copy_from_slice(&self.iteration.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.sample);
        rng
    }
}

// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Seedable generation of independent complex Wiener increments.
//!
//! Each trajectory owns one [`NoiseStream`]; streams are derived from a
//! global seed plus the trajectory index using a counter-based generator
//! whose streams are independent by construction, so ensembles are bitwise
//! reproducible no matter how trajectories are scheduled onto workers.
//!
//! An increment is d_xi = sqrt(dt/2) * (g1 + i g2) with g1, g2 standard
//! normal. This is the unique zero-pseudo-variance choice: the ensemble mean
//! of d_xi is 0, of d_xi^2 is 0, and of |d_xi|^2 is dt.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Per-trajectory source of complex Wiener increments.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    stream_id: u64,
    channel_count: usize,
    counter: u64,
    rng: ChaCha8Rng,
}

/// One step's worth of complex noise, one value per collapse channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrement {
    values: Vec<Complex64>,
    dt: f64,
}

impl WienerIncrement {
    /// Wraps explicit values; used by tests that need a chosen noise sample.
    pub fn from_values(values: Vec<Complex64>, dt: f64) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { values, dt })
    }

    /// Noise values, one per channel.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Channel count.
    pub fn channel_count(&self) -> usize {
        self.values.len()
    }

    /// Time step the increment was drawn for.
    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Derives the noise stream for one trajectory. Identical
/// `(seed, trajectory_index)` pairs yield bit-identical sequences on any
/// machine and thread; distinct indices select independent generator streams.
///
/// `channels` matches the model's collapse-channel count; zero is allowed
/// for noiseless (purely Hamiltonian) models, whose increments are empty.
pub fn derive_stream(seed: u64, trajectory_index: u64, channels: usize) -> NoiseStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory_index);
    NoiseStream { seed, stream_id: trajectory_index, channel_count: channels, counter: 0, rng }
}

impl NoiseStream {
    /// Draws the next increment for every channel and advances the step
    /// counter.
    pub fn next_increments(&mut self, dt: f64) -> Result<WienerIncrement> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        let scale = (dt / 2.0).sqrt();
        let values = (0..self.channel_count)
            .map(|_| {
                let g1: f64 = self.rng.sample(StandardNormal);
                let g2: f64 = self.rng.sample(StandardNormal);
                Complex64::new(scale * g1, scale * g2)
            })
            .collect();
        self.counter += 1;
        Ok(WienerIncrement { values, dt })
    }

    /// Seed this stream was derived from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Trajectory index this stream was derived for.
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of channels per increment.
    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    /// Steps drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }
}

// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Error type shared by all simulator modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),

    #[error("operator is not Hermitian (max entrywise deviation {0:.3e})")]
    Hermiticity(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("channel count mismatch: {got} noise channels for {expected} collapse operators")]
    ChannelCount { got: usize, expected: usize },

    #[error("non-finite amplitude at step {step} (time step too large for this model)")]
    NonFinite { step: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("too many undecided trajectories: {undecided} of {total} hit t_max without collapsing")]
    Undecided { undecided: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

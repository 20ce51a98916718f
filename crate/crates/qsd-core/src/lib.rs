// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Quantum state diffusion at desk scale.
//!
//! Single stochastic pure-state trajectories of the nonlinear collapse
//! equation are integrated with Euler-Maruyama stepping, collapse onto
//! eigenstates is detected and timed, and ensemble averages are checked
//! against a deterministic Lindblad master-equation solver.
//!
//! All physics is in natural units (hbar = 1). Dense linear algebra only;
//! the intended Hilbert-space dimensions are small (a few hundred at most).

#![forbid(unsafe_code)]

pub mod error;
pub mod experiments;
pub mod integrator;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod oracle;

pub use error::{Error, Result};
pub use experiments::{BornReport, EnsembleResult, OracleComparison, ScalingStudy};
pub use integrator::{IntegrationConfig, ModelSpec, TrajectoryRecord, Verdict};
pub use linalg::{DensityMatrix, Eigensystem, Operator, StateVector};
pub use noise::{NoiseStream, WienerIncrement};
pub use oracle::MasterEvolution;

// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! The shipped physical models.
//!
//! Three closed-form setups exercise the integrator from different angles:
//! a truncated photon mode whose trajectories collapse onto number states, a
//! dephasing qubit with an exactly solvable ensemble mean, and a chain of
//! bound particles superposed over two positions whose collapse time shrinks
//! with particle count.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::ModelSpec;
use crate::linalg::{Operator, StateVector};

/// Truncated single-mode Fock space holding occupation numbers `0..=n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    n_max: usize,
}

impl FockSpace {
    /// Space truncated at occupation `n_max` (at least 1).
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::Argument("n_max must be at least 1".into()));
        }
        Ok(Self { n_max })
    }

    /// Highest occupation number kept.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Hilbert-space dimension `n_max + 1`.
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// Annihilation operator: `<n-1|a|n> = sqrt(n)`.
    pub fn annihilation(&self) -> Operator {
        let d = self.dim();
        let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
        for n in 1..d {
            entries[(n - 1) * d + n] = Complex64::new((n as f64).sqrt(), 0.0);
        }
        Operator::new(d, entries).expect("square entry buffer by construction")
    }

    /// Number operator `a^dag a = diag(0, 1, ..., n_max)`.
    ///
    /// Built directly from the diagonal; the product form holds exactly on
    /// the truncated space and a unit test pins that.
    pub fn number(&self) -> Operator {
        let diag: Vec<f64> = (0..self.dim()).map(|n| n as f64).collect();
        Operator::from_diagonal(&diag)
    }
}

/// Photon mode measured in the number basis: `H` and the single collapse
/// channel are both the number operator, so trajectories freeze onto Fock
/// states while the occupation distribution obeys the Born rule.
pub fn build_photon_number_model(n_max: usize) -> Result<ModelSpec> {
    let space = FockSpace::new(n_max)?;
    let number = space.number();
    ModelSpec::new(number.clone(), vec![number], vec!["n".into()])
}

/// Equal-weight superposition of the odd occupation levels 1, 3, 5, 7 and 9.
///
/// Needs `n_max >= 9`. Mean occupation is 5 and the occupation variance is
/// 8, both pinned by unit tests.
pub fn fig1_initial_state(n_max: usize) -> Result<StateVector> {
    if n_max < 9 {
        return Err(Error::Argument(format!(
            "initial state occupies level 9; n_max = {n_max} is too small"
        )));
    }
    let dim = n_max + 1;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
    for level in [1, 3, 5, 7, 9] {
        amplitudes[level] = Complex64::new(1.0, 0.0);
    }
    StateVector::new(amplitudes)
}

/// Qubit with no Hamiltonian and one collapse channel
/// `L = sqrt(rate) * diag(0, 1)`.
///
/// The ensemble-mean coherence decays as `exp(-rate * t)` in closed form,
/// which makes this the primary cross-check model against the
/// density-matrix reference.
pub fn build_dephasing_qubit(rate: f64) -> Result<ModelSpec> {
    if !rate.is_finite() || rate <= 0.0 {
        return Err(Error::Argument(format!("rate must be finite and positive, got {rate}")));
    }
    let l = Operator::from_diagonal(&[0.0, rate.sqrt()]);
    ModelSpec::new(Operator::zeros(2), vec![l], vec!["L0".into()])
}

/// A rigid cluster of `n_particles` superposed over two centre-of-mass
/// positions `branch_separation` apart, each particle coupling to its own
/// collapse channel with strength `coupling`.
///
/// Dynamics stay inside the two-branch subspace, so the model is represented
/// on dimension 2: basis state 0 is the left branch, basis state 1 the
/// right. Channel `k` is `sqrt(coupling)` times particle `k`'s position
/// operator, `diag(+s/2, -s/2)`. More particles mean more channels pulling
/// toward the same pair of branches, so superpositions of heavier clusters
/// decay faster while a single branch is exactly stationary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationChain {
    pub n_particles: usize,
    pub coupling: f64,
    pub branch_separation: f64,
}

impl LocalizationChain {
    /// Chain with the default coupling 0.75 and branch separation 1.0.
    pub fn new(n_particles: usize) -> Self {
        Self { n_particles, coupling: 0.75, branch_separation: 1.0 }
    }
}

/// Builds the localization model plus its two branch basis states
/// `(left, right)`.
pub fn build_localization_model(
    chain: &LocalizationChain,
) -> Result<(ModelSpec, StateVector, StateVector)> {
    if chain.n_particles < 1 {
        return Err(Error::Argument("n_particles must be at least 1".into()));
    }
    if !chain.coupling.is_finite() || chain.coupling <= 0.0 {
        return Err(Error::Argument(format!(
            "coupling must be finite and positive, got {}",
            chain.coupling
        )));
    }
    if !chain.branch_separation.is_finite() || chain.branch_separation <= 0.0 {
        return Err(Error::Argument(format!(
            "branch_separation must be finite and positive, got {}",
            chain.branch_separation
        )));
    }
    let half = chain.coupling.sqrt() * chain.branch_separation / 2.0;
    let position = Operator::from_diagonal(&[half, -half]);
    let lindblads = vec![position; chain.n_particles];
    let labels = (1..=chain.n_particles).map(|k| format!("x{k}")).collect();
    let model = ModelSpec::new(Operator::zeros(2), lindblads, labels)?;
    let left = StateVector::basis_state(2, 0)?;
    let right = StateVector::basis_state(2, 1)?;
    Ok((model, left, right))
}

// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic density-matrix evolution, used as the reference the
//! trajectory ensemble is checked against.
//!
//! The ensemble mean of the stochastic trajectories solves the master
//! equation
//!
//! ```text
//! drho/dt = -i [H, rho] - sum_j (Kj rho + rho Kj - 2 Lj rho Lj^dag),
//! Kj = Lj^dag Lj
//! ```
//!
//! This module integrates that equation with a classical fixed-step
//! fourth-order Runge-Kutta scheme. It shares the model types with the
//! trajectory integrator but none of its numerics, so agreement between the
//! two is a real cross-check rather than a tautology.
//!
//! Every propagation runs twice, at `dt` and `dt / 2`. If the sampled
//! outputs disagree beyond [`SELF_CHECK_TOL`] the step is declared too
//! coarse and the run fails loudly instead of returning drifted data. The
//! finer solution is what callers receive.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::ModelSpec;
use crate::linalg::{self, DensityMatrix, Operator};

/// Entrywise agreement required between the `dt` and `dt / 2` solutions.
pub const SELF_CHECK_TOL: f64 = 1e-8;

/// Hermiticity and trace tolerance on every returned sample.
const SAMPLE_TOL: f64 = 1e-10;

/// Most negative eigenvalue tolerated on a returned sample before the step
/// size is declared unusable.
const SAMPLE_EIGEN_FLOOR: f64 = -1e-7;

/// Sample times must sit on the integration grid within this relative slack.
const GRID_ALIGN_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A model, an initial density matrix, an internal step size and the grid of
/// times at which the propagated matrix is sampled.
///
/// The grid must start at 0, increase strictly, and sit on integer multiples
/// of `dt`; construction fails otherwise, so a successful build guarantees
/// [`propagate`] samples exactly at the requested times.
#[derive(Debug, Clone)]
pub struct MasterEvolution {
    model: ModelSpec,
    rho0: DensityMatrix,
    dt: f64,
    times: Vec<f64>,
    sample_steps: Vec<u64>,
}

impl MasterEvolution {
    /// Validates dimensions, the step size and the sample grid.
    pub fn new(model: ModelSpec, rho0: DensityMatrix, dt: f64, times: Vec<f64>) -> Result<Self> {
        if rho0.dim() != model.dim() {
            return Err(Error::Dimension(rho0.dim(), model.dim()));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Config(format!("dt must be finite and positive, got {dt}")));
        }
        if times.is_empty() {
            return Err(Error::Config("sample grid is empty".into()));
        }
        let mut sample_steps = Vec::with_capacity(times.len());
        for &t in &times {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Config(format!("sample time {t} is not finite and >= 0")));
            }
            let k = (t / dt).round();
            if (t - k * dt).abs() > GRID_ALIGN_TOL * t.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "sample time {t} is not a multiple of dt = {dt}"
                )));
            }
            sample_steps.push(k as u64);
        }
        if sample_steps[0] != 0 {
            return Err(Error::Config(format!("sample grid must start at 0, got {}", times[0])));
        }
        if sample_steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sample grid must be strictly increasing".into()));
        }
        Ok(Self { model, rho0, dt, times, sample_steps })
    }

    /// The model being evolved.
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// Initial density matrix.
    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    /// Internal integration step.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Times at which [`propagate`] samples the solution.
    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// Right-hand side of the master equation at `rho`.
///
/// The result is Hermitian and traceless up to rounding; unit tests pin
/// both, plus the coherence decay rate it implies for a two-level system.
pub fn lindblad_rhs(model: &ModelSpec, rho: &DensityMatrix) -> Result<Operator> {
    if rho.dim() != model.dim() {
        return Err(Error::Dimension(rho.dim(), model.dim()));
    }
    let ops = RawModel::build(model)?;
    let d = model.dim();
    let mut out = vec![ZERO; d * d];
    let mut w1 = vec![ZERO; d * d];
    let mut w2 = vec![ZERO; d * d];
    ops.rhs_into(rho.entries(), &mut out, &mut w1, &mut w2);
    Operator::new(d, out)
}

/// Integrates the master equation and returns the density matrix at each
/// grid time, taken from the finer of the two self-check runs.
///
/// Fails if the `dt` and `dt / 2` solutions disagree beyond
/// [`SELF_CHECK_TOL`], or if any sample loses Hermiticity, unit trace or
/// positivity beyond the sample tolerances. Either failure means the step
/// size is too coarse for the model.
pub fn propagate(ev: &MasterEvolution) -> Result<Vec<DensityMatrix>> {
    let ops = RawModel::build(&ev.model)?;
    let coarse = run_fixed(&ops, ev, ev.dt, 1)?;
    let fine = run_fixed(&ops, ev, ev.dt / 2.0, 2)?;
    let mut max_diff = 0.0f64;
    for (a, b) in coarse.iter().zip(&fine) {
        for (x, y) in a.iter().zip(b) {
            max_diff = max_diff.max((x - y).norm());
        }
    }
    if max_diff >= SELF_CHECK_TOL {
        return Err(Error::Numerical(format!(
            "step-halving check failed: dt and dt/2 solutions differ by {max_diff:.3e}; \
             reduce dt"
        )));
    }
    fine.into_iter()
        .zip(&ev.times)
        .map(|(entries, &t)| validate_sample(ev.model.dim(), entries, t))
        .collect()
}

/// Expectation value `tr(rho op)`.
pub fn expectation_of(rho: &DensityMatrix, op: &Operator) -> Result<Complex64> {
    let d = rho.dim();
    if op.dim() != d {
        return Err(Error::Dimension(op.dim(), d));
    }
    let mut total = ZERO;
    for i in 0..d {
        for j in 0..d {
            total += rho.entry(i, j) * op.entry(j, i);
        }
    }
    Ok(total)
}

/// Trace distance `(1/2) tr |a - b|`, between 0 (equal) and 1 (orthogonal
/// support).
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::Dimension(b.dim(), d));
    }
    // The difference inherits each argument's tiny Hermiticity slack, so
    // symmetrize before the eigensolve; the eigenvalue shift is bounded by
    // that slack, far below any tolerance used on distances.
    let mut delta = vec![ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            let x = a.entry(i, j) - b.entry(i, j);
            let y = (a.entry(j, i) - b.entry(j, i)).conj();
            delta[i * d + j] = 0.5 * (x + y);
        }
    }
    let (eigenvalues, _) = linalg::jacobi_hermitian(d, &delta)?;
    Ok(0.5 * eigenvalues.iter().map(|v| v.abs()).sum::<f64>())
}

/// Model operators flattened to raw entry buffers for the stepping loop.
struct RawModel {
    dim: usize,
    hamiltonian: Vec<Complex64>,
    /// Per channel: `(L, L^dag, L^dag L)`.
    channels: Vec<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)>,
}

impl RawModel {
    fn build(model: &ModelSpec) -> Result<Self> {
        let mut channels = Vec::with_capacity(model.channel_count());
        for (j, l) in model.lindblads().iter().enumerate() {
            let adjoint = model.lindblad_adjoint(j);
            let k = adjoint.mul(l)?;
            channels.push((l.entries().to_vec(), adjoint.entries().to_vec(), k.entries().to_vec()));
        }
        Ok(Self {
            dim: model.dim(),
            hamiltonian: model.hamiltonian().entries().to_vec(),
            channels,
        })
    }

    /// Writes the master-equation right-hand side at `rho` into `out`.
    fn rhs_into(&self, rho: &[Complex64], out: &mut [Complex64], w1: &mut [Complex64], w2: &mut [Complex64]) {
        let d = self.dim;
        let minus_i = Complex64::new(0.0, -1.0);
        mat_mul(d, &self.hamiltonian, rho, w1);
        mat_mul(d, rho, &self.hamiltonian, w2);
        for idx in 0..d * d {
            out[idx] = minus_i * (w1[idx] - w2[idx]);
        }
        for (l, ldag, k) in &self.channels {
            mat_mul(d, k, rho, w1);
            for idx in 0..d * d {
                out[idx] -= w1[idx];
            }
            mat_mul(d, rho, k, w1);
            for idx in 0..d * d {
                out[idx] -= w1[idx];
            }
            mat_mul(d, l, rho, w1);
            mat_mul(d, w1, ldag, w2);
            for idx in 0..d * d {
                out[idx] += 2.0 * w2[idx];
            }
        }
    }
}

/// Dense row-major product `out = a b`.
fn mat_mul(d: usize, a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
    out.fill(ZERO);
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
}

/// Classical RK4 from t = 0, sampling the raw matrix at
/// `sample_steps[i] * step_scale` steps of size `dt`.
fn run_fixed(
    ops: &RawModel,
    ev: &MasterEvolution,
    dt: f64,
    step_scale: u64,
) -> Result<Vec<Vec<Complex64>>> {
    let d = ops.dim;
    let n = d * d;
    let mut rho = ev.rho0.entries().to_vec();
    let mut k1 = vec![ZERO; n];
    let mut k2 = vec![ZERO; n];
    let mut k3 = vec![ZERO; n];
    let mut k4 = vec![ZERO; n];
    let mut stage = vec![ZERO; n];
    let mut w1 = vec![ZERO; n];
    let mut w2 = vec![ZERO; n];

    let mut samples = Vec::with_capacity(ev.sample_steps.len());
    let mut next = 0usize;
    if ev.sample_steps[next] == 0 {
        samples.push(rho.clone());
        next += 1;
    }
    let total = ev.sample_steps.last().copied().unwrap_or(0) * step_scale;
    for s in 1..=total {
        ops.rhs_into(&rho, &mut k1, &mut w1, &mut w2);
        for idx in 0..n {
            stage[idx] = rho[idx] + 0.5 * dt * k1[idx];
        }
        ops.rhs_into(&stage, &mut k2, &mut w1, &mut w2);
        for idx in 0..n {
            stage[idx] = rho[idx] + 0.5 * dt * k2[idx];
        }
        ops.rhs_into(&stage, &mut k3, &mut w1, &mut w2);
        for idx in 0..n {
            stage[idx] = rho[idx] + dt * k3[idx];
        }
        ops.rhs_into(&stage, &mut k4, &mut w1, &mut w2);
        let sixth = dt / 6.0;
        for idx in 0..n {
            rho[idx] += sixth * (k1[idx] + 2.0 * (k2[idx] + k3[idx]) + k4[idx]);
        }
        if rho.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical(format!(
                "density matrix became non-finite at step {s} (dt = {dt})"
            )));
        }
        if next < ev.sample_steps.len() && ev.sample_steps[next] * step_scale == s {
            samples.push(rho.clone());
            next += 1;
        }
    }
    Ok(samples)
}

/// Checks one propagated sample against the output tolerances and wraps it.
fn validate_sample(d: usize, entries: Vec<Complex64>, t: f64) -> Result<DensityMatrix> {
    let dev = linalg::hermitian_deviation(d, &entries);
    if dev >= SAMPLE_TOL {
        return Err(Error::Numerical(format!(
            "propagated matrix at t = {t} lost Hermiticity (deviation {dev:.3e})"
        )));
    }
    let trace: Complex64 = (0..d).map(|i| entries[i * d + i]).sum();
    if (trace.re - 1.0).abs() >= SAMPLE_TOL || trace.im.abs() >= SAMPLE_TOL {
        return Err(Error::Numerical(format!(
            "propagated matrix at t = {t} has trace {} + {}i, expected 1",
            trace.re, trace.im
        )));
    }
    // Eigensolve on the symmetrized copy; the raw entries stay the output.
    let mut sym = vec![ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            sym[i * d + j] = 0.5 * (entries[i * d + j] + entries[j * d + i].conj());
        }
    }
    let (eigenvalues, _) = linalg::jacobi_hermitian(d, &sym)?;
    let min = eigenvalues.first().copied().unwrap_or(0.0);
    if min < SAMPLE_EIGEN_FLOOR {
        return Err(Error::Numerical(format!(
            "propagated matrix at t = {t} has eigenvalue {min:.3e}; reduce dt"
        )));
    }
    Ok(DensityMatrix::from_raw_unchecked(d, entries))
}

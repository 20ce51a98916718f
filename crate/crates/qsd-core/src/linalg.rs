// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra over finite-dimensional Hilbert spaces.
//!
//! Provides the four value types the simulator is built on (state vectors,
//! operators, eigensystems, density matrices) plus expectation values,
//! variances and a Jacobi eigensolver for Hermitian matrices. Everything is
//! immutable after construction and safe to share across trajectory workers.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance for the validated Hermitian flag on [`Operator`].
const HERMITIAN_TOL: f64 = 1e-12;
/// Entrywise Hermiticity tolerance for [`DensityMatrix`].
const RHO_HERMITIAN_TOL: f64 = 1e-10;
/// Trace tolerance for [`DensityMatrix`].
const RHO_TRACE_TOL: f64 = 1e-10;
/// Eigenvalue floor for [`DensityMatrix`] positivity.
const RHO_EIGEN_FLOOR: f64 = -1e-9;
/// Eigenvalues closer than this fraction of the spectral range are grouped.
const DEGENERACY_REL_TOL: f64 = 1e-10;

/// Normalized pure state: `dim` complex amplitudes with unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dim: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// Normalizes `amplitudes` to unit norm. Rejects empty, non-finite and
    /// zero vectors.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Argument("state vector must have dim >= 1".into()));
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Argument("state vector has non-finite amplitudes".into()));
        }
        let norm = vec_norm(&amplitudes);
        if norm <= 0.0 {
            return Err(Error::Argument("cannot normalize the zero vector".into()));
        }
        let dim = amplitudes.len();
        let amplitudes = amplitudes.into_iter().map(|a| a / norm).collect();
        Ok(Self { dim, amplitudes })
    }

    /// Basis state |k> in dimension `dim`.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if dim == 0 || k >= dim {
            return Err(Error::Argument(format!("basis index {k} out of range for dim {dim}")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[k] = Complex64::new(1.0, 0.0);
        Ok(Self { dim, amplitudes })
    }

    /// Wraps raw amplitudes without renormalizing. Callers guarantee the norm
    /// is already within the tolerance appropriate for their use (integrator
    /// internals between scheduled renormalizations).
    pub(crate) fn from_raw(amplitudes: Vec<Complex64>) -> Self {
        let dim = amplitudes.len();
        Self { dim, amplitudes }
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Amplitude slice in the computational basis.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Single amplitude.
    pub fn amplitude(&self, i: usize) -> Complex64 {
        self.amplitudes[i]
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        vec_norm(&self.amplitudes)
    }

    /// Inner product `<self|other>` (conjugate-linear in `self`).
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim != other.dim {
            return Err(Error::Dimension(self.dim, other.dim));
        }
        Ok(vec_inner(&self.amplitudes, &other.amplitudes))
    }

    /// Returns a unit-norm copy.
    pub fn normalized(&self) -> Result<Self> {
        Self::new(self.amplitudes.clone())
    }
}

/// Dense complex square matrix with a validated Hermitian flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    entries: Vec<Complex64>, // row-major
    hermitian: bool,
}

impl Operator {
    /// Builds an operator from row-major entries; the Hermitian flag is
    /// computed here, never trusted from callers.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("operator must have dim >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Dimension(entries.len(), dim * dim));
        }
        let hermitian = hermitian_deviation(dim, &entries) < HERMITIAN_TOL;
        Ok(Self { dim, entries, hermitian })
    }

    /// Identity on dimension `dim`.
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, entries, hermitian: true }
    }

    /// Zero operator on dimension `dim`.
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![Complex64::new(0.0, 0.0); dim * dim], hermitian: true }
    }

    /// Diagonal operator from real entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for (i, &d) in diag.iter().enumerate() {
            entries[i * dim + i] = Complex64::new(d, 0.0);
        }
        Self { dim, entries, hermitian: true }
    }

    /// Dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry at row `i`, column `j`.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    /// Row-major entry slice.
    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Whether the validated Hermitian check passed at construction.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Max entrywise deviation from the conjugate transpose.
    pub(crate) fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(self.dim, &self.entries)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.entries[i * d + j].conj();
            }
        }
        Self { dim: d, entries, hermitian: self.hermitian }
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Operator) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Dimension(self.dim, other.dim));
        }
        let d = self.dim;
        let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for k in 0..d {
                let aik = self.entries[i * d + k];
                if aik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    entries[i * d + j] += aik * other.entries[k * d + j];
                }
            }
        }
        Operator::new(d, entries)
    }

    /// Scales every entry by `c`.
    pub fn scale(&self, c: Complex64) -> Self {
        let entries = self.entries.iter().map(|e| e * c).collect();
        Operator::new(self.dim, entries).expect("scaling preserves shape")
    }

    /// Matrix-vector product on raw amplitudes.
    pub(crate) fn apply_raw(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// Matrix-vector product into a caller-provided buffer (hot path of the
    /// trajectory integrator).
    pub(crate) fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.entries[i * d..(i + 1) * d];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
    }

    /// Applies the operator to a state, returning the raw (unnormalized)
    /// image vector.
    pub fn apply(&self, psi: &StateVector) -> Result<Vec<Complex64>> {
        if self.dim != psi.dim {
            return Err(Error::Dimension(self.dim, psi.dim));
        }
        Ok(self.apply_raw(&psi.amplitudes))
    }

    /// Trace.
    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i]).sum()
    }

    /// Largest singular value, computed from the Hermitian eigenproblem of
    /// `A^dagger A`.
    pub fn spectral_norm(&self) -> Result<f64> {
        let ata = self.adjoint().mul(self)?;
        let (eigenvalues, _) = jacobi_hermitian(ata.dim, &ata.entries)?;
        let max = eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        Ok(max.sqrt())
    }
}

/// Sorted eigendecomposition of a Hermitian operator, with near-equal
/// eigenvalues grouped so degenerate eigenspaces have a single identity.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<StateVector>,
    degeneracy_map: Vec<Vec<usize>>,
}

impl Eigensystem {
    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvector for eigenvalue index `i`.
    pub fn eigenvector(&self, i: usize) -> &StateVector {
        &self.eigenvectors[i]
    }

    /// Number of degeneracy groups.
    pub fn group_count(&self) -> usize {
        self.degeneracy_map.len()
    }

    /// Eigenvalue indices belonging to group `g`.
    pub fn group_indices(&self, g: usize) -> &[usize] {
        &self.degeneracy_map[g]
    }

    /// Representative eigenvalue of group `g` (mean over the group).
    pub fn group_eigenvalue(&self, g: usize) -> f64 {
        let idx = &self.degeneracy_map[g];
        idx.iter().map(|&i| self.eigenvalues[i]).sum::<f64>() / idx.len() as f64
    }

    /// Group that eigenvalue index `i` belongs to.
    pub fn group_of(&self, i: usize) -> usize {
        self.degeneracy_map
            .iter()
            .position(|g| g.contains(&i))
            .expect("every eigenvalue index is grouped")
    }

    /// Group whose representative eigenvalue is nearest to `value`.
    pub fn nearest_group(&self, value: f64) -> usize {
        let mut best = 0;
        let mut best_gap = f64::INFINITY;
        for g in 0..self.group_count() {
            let gap = (self.group_eigenvalue(g) - value).abs();
            if gap < best_gap {
                best_gap = gap;
                best = g;
            }
        }
        best
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<Complex64>, // row-major
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity at the standard
    /// tolerances.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        Self::with_tolerance_scale(dim, entries, 1.0)
    }

    /// Same as [`DensityMatrix::new`] with all tolerances widened by
    /// `scale`. Ensemble averages of many matrices accumulate rounding noise
    /// and are validated at 10x.
    pub fn with_tolerance_scale(dim: usize, entries: Vec<Complex64>, scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("density matrix must have dim >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Dimension(entries.len(), dim * dim));
        }
        let dev = hermitian_deviation(dim, &entries);
        if dev >= RHO_HERMITIAN_TOL * scale {
            return Err(Error::Hermiticity(dev));
        }
        let trace: Complex64 = (0..dim).map(|i| entries[i * dim + i]).sum();
        if (trace.re - 1.0).abs() >= RHO_TRACE_TOL * scale || trace.im.abs() >= RHO_TRACE_TOL * scale {
            return Err(Error::Numerical(format!(
                "density matrix trace {:.12} + {:.3e}i is not 1",
                trace.re, trace.im
            )));
        }
        let (eigenvalues, _) = jacobi_hermitian(dim, &entries)?;
        let min = eigenvalues.first().copied().unwrap_or(0.0);
        if min < RHO_EIGEN_FLOOR * scale {
            return Err(Error::Numerical(format!(
                "density matrix has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { dim, entries })
    }

    /// Wraps entries a caller has already validated (oracle stepping, where
    /// the positivity threshold differs from the type default).
    pub(crate) fn from_raw_unchecked(dim: usize, entries: Vec<Complex64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    /// Dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry at row `i`, column `j`.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    /// Row-major entry slice.
    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Trace (should be 1 within tolerance by construction).
    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i]).sum()
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (eigenvalues, _) = jacobi_hermitian(self.dim, &self.entries)?;
        Ok(eigenvalues.first().copied().unwrap_or(0.0))
    }
}

/// Expectation value `<psi|op|psi> / <psi|psi>`.
///
/// The explicit division keeps the value exact under the small norm drift the
/// integrator accumulates between renormalizations.
pub fn expectation(op: &Operator, psi: &StateVector) -> Result<Complex64> {
    if op.dim != psi.dim {
        return Err(Error::Dimension(op.dim, psi.dim));
    }
    let image = op.apply_raw(&psi.amplitudes);
    let num = vec_inner(&psi.amplitudes, &image);
    let den = vec_inner(&psi.amplitudes, &psi.amplitudes).re;
    Ok(num / den)
}

/// Variance `<op^2> - <op>^2` of a Hermitian operator.
///
/// Computed as `<op psi|op psi>/<psi|psi> - Re(<op>)^2`, which is
/// non-negative up to rounding.
pub fn variance(op: &Operator, psi: &StateVector) -> Result<f64> {
    if !op.hermitian {
        return Err(Error::Hermiticity(hermitian_deviation(op.dim, &op.entries)));
    }
    if op.dim != psi.dim {
        return Err(Error::Dimension(op.dim, psi.dim));
    }
    let image = op.apply_raw(&psi.amplitudes);
    let den = vec_inner(&psi.amplitudes, &psi.amplitudes).re;
    let second = vec_inner(&image, &image).re / den;
    let first = vec_inner(&psi.amplitudes, &image).re / den;
    Ok(second - first * first)
}

/// Full eigendecomposition of a Hermitian operator via cyclic Jacobi
/// rotations. Eigenvalues come out sorted ascending with degenerate values
/// grouped at `1e-10` of the spectral range.
pub fn eigendecompose(op: &Operator) -> Result<Eigensystem> {
    if !op.hermitian {
        return Err(Error::Hermiticity(hermitian_deviation(op.dim, &op.entries)));
    }
    let (eigenvalues, vectors) = jacobi_hermitian(op.dim, &op.entries)?;
    let eigenvectors = vectors
        .into_iter()
        .map(StateVector::new)
        .collect::<Result<Vec<_>>>()?;
    let degeneracy_map = group_degenerate(&eigenvalues);
    Ok(Eigensystem { eigenvalues, eigenvectors, degeneracy_map })
}

/// Rank-one projector `|psi><psi|` as a density matrix.
pub fn outer_product(psi: &StateVector) -> DensityMatrix {
    let d = psi.dim;
    let mut entries = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            entries[i * d + j] = psi.amplitudes[i] * psi.amplitudes[j].conj();
        }
    }
    DensityMatrix { dim: d, entries }
}

/// Squared projection of `psi` onto the eigenspace of degeneracy group
/// `group`: the probability of that measurement outcome.
pub fn fidelity_to_eigenspace(psi: &StateVector, es: &Eigensystem, group: usize) -> Result<f64> {
    if group >= es.group_count() {
        return Err(Error::Argument(format!(
            "eigenvalue group {group} out of range ({} groups)",
            es.group_count()
        )));
    }
    let mut total = 0.0;
    for &i in es.group_indices(group) {
        let v = &es.eigenvectors[i];
        if v.dim != psi.dim {
            return Err(Error::Dimension(v.dim, psi.dim));
        }
        total += vec_inner(&v.amplitudes, &psi.amplitudes).norm_sqr();
    }
    let norm_sqr = vec_inner(&psi.amplitudes, &psi.amplitudes).re;
    Ok(total / norm_sqr)
}

pub(crate) fn vec_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn vec_inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub(crate) fn hermitian_deviation(dim: usize, entries: &[Complex64]) -> f64 {
    let mut max = 0.0f64;
    for i in 0..dim {
        for j in i..dim {
            let dev = (entries[i * dim + j] - entries[j * dim + i].conj()).norm();
            max = max.max(dev);
        }
    }
    max
}

fn frobenius_norm(entries: &[Complex64]) -> f64 {
    entries.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix. Returns eigenvalues
/// sorted ascending and the matching eigenvectors as raw columns.
pub(crate) fn jacobi_hermitian(
    dim: usize,
    entries: &[Complex64],
) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    const MAX_SWEEPS: usize = 100;
    let n = dim;
    let mut a = entries.to_vec();
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let anorm = frobenius_norm(entries).max(f64::MIN_POSITIVE);
    let target = 1e-14 * anorm;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= target {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let m = apq.norm();
                if m <= 1e-300 {
                    continue;
                }
                let phase = apq / m;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let tau = (aqq - app) / (2.0 * m);
                // Smaller-magnitude root of t^2 + 2 tau t - 1 = 0.
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // A <- A R, columns p and q.
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * phase.conj() * akq;
                    a[k * n + q] = s * phase * akp + c * akq;
                }
                // A <- R^dagger A, rows p and q.
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * phase * aqk;
                    a[q * n + k] = s * phase.conj() * apk + c * aqk;
                }
                // V <- V R.
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * phase.conj() * vkq;
                    v[k * n + q] = s * phase * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps (dim {n})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i * n + i].re.partial_cmp(&a[j * n + j].re).expect("finite eigenvalues")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors: Vec<Vec<Complex64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
        .collect();
    Ok((eigenvalues, vectors))
}

/// Groups adjacent sorted eigenvalues whose gap is below `1e-10` of the
/// spectral range. A spectrum with (relatively) zero range is one group.
fn group_degenerate(eigenvalues: &[f64]) -> Vec<Vec<usize>> {
    let n = eigenvalues.len();
    if n == 0 {
        return Vec::new();
    }
    let range = eigenvalues[n - 1] - eigenvalues[0];
    let scale = eigenvalues[n - 1].abs().max(eigenvalues[0].abs()).max(1.0);
    if range <= 1e-12 * scale {
        return vec![(0..n).collect()];
    }
    let tol = DEGENERACY_REL_TOL * range;
    let mut groups: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..n {
        if eigenvalues[i] - eigenvalues[i - 1] <= tol {
            groups.last_mut().expect("non-empty").push(i);
        } else {
            groups.push(vec![i]);
        }
    }
    groups
}

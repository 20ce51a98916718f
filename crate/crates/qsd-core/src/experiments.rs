// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Ensemble experiments over many trajectories: reproducible parallel
//! ensembles, outcome statistics against the initial-state weights,
//! cross-checks against the density-matrix reference, and collapse-time
//! scaling with particle count.
//!
//! Reproducibility contract: trajectory `i` of an ensemble draws from the
//! noise stream derived from `(seed, i)`, worker outputs are reduced in
//! strict index order on one thread, and parallelism only distributes the
//! trajectory map. The same seed therefore gives bitwise identical results
//! whatever the thread count.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{self, IntegrationConfig, ModelSpec, TrajectoryRecord, Verdict};
use crate::linalg::{self, DensityMatrix, StateVector};
use crate::models::{build_localization_model, LocalizationChain};
use crate::noise;
use crate::oracle;

/// Trajectories processed per parallel batch; bounds peak snapshot memory.
const CHUNK: usize = 256;

/// Outcome test: largest tolerated undecided fraction.
pub const BORN_MAX_UNDECIDED: f64 = 0.01;

/// Outcome test: smallest decided count with any statistical power.
pub const BORN_MIN_DECIDED: usize = 100;

/// Outcome test: per-outcome |z| limit.
pub const BORN_Z_LIMIT: f64 = 4.0;

/// Reference comparison: floor of the trace-distance budget.
pub const COMPARISON_BUDGET_FLOOR: f64 = 0.02;

/// Scaling study: largest tolerated undecided fraction per point.
pub const SCALING_MAX_UNDECIDED: f64 = 0.05;

/// Scaling study: minimum trajectories per point.
pub const SCALING_MIN_PER_POINT: usize = 100;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Index-ordered reduction of an ensemble of trajectories.
///
/// Early-stopped trajectories are padded to the full record grid with their
/// last recorded values; by the stopping criterion those values sit within
/// the convergence tolerance of their limit, which is far inside every
/// statistical budget used on ensemble means.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    n_trajectories: usize,
    seed: u64,
    times: Vec<f64>,
    channel_means: Vec<Vec<Complex64>>,
    channel_std_errors: Vec<Vec<f64>>,
    ensemble_rho: Vec<DensityMatrix>,
    outcome_histogram: BTreeMap<usize, usize>,
    collapse_times: Vec<f64>,
    undecided: usize,
    verdict_channel: Option<usize>,
    outcome_eigenvalues: Vec<f64>,
}

impl EnsembleResult {
    /// Number of trajectories integrated.
    pub fn n_trajectories(&self) -> usize {
        self.n_trajectories
    }

    /// Base seed the per-trajectory streams were derived from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Record times shared by all trajectories.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Ensemble mean of each channel expectation, `[channel][record]`.
    pub fn channel_means(&self) -> &[Vec<Complex64>] {
        &self.channel_means
    }

    /// Standard error of each mean, `[channel][record]`; zero when the
    /// ensemble has a single trajectory.
    pub fn channel_std_errors(&self) -> &[Vec<f64>] {
        &self.channel_std_errors
    }

    /// Ensemble-averaged density matrix at each record time.
    pub fn ensemble_rho(&self) -> &[DensityMatrix] {
        &self.ensemble_rho
    }

    /// Decided-trajectory counts keyed by eigenvalue group of the verdict
    /// channel.
    pub fn outcome_histogram(&self) -> &BTreeMap<usize, usize> {
        &self.outcome_histogram
    }

    /// Collapse onset times of the decided trajectories, in trajectory
    /// order.
    pub fn collapse_times(&self) -> &[f64] {
        &self.collapse_times
    }

    /// Trajectories that reached `t_max` without a verdict.
    pub fn undecided(&self) -> usize {
        self.undecided
    }

    /// Trajectories with a collapse verdict.
    pub fn decided(&self) -> usize {
        self.n_trajectories - self.undecided
    }

    /// Channel index outcomes are classified against, if any.
    pub fn verdict_channel(&self) -> Option<usize> {
        self.verdict_channel
    }

    /// Eigenvalue of each outcome group of the verdict channel.
    pub fn outcome_eigenvalues(&self) -> &[f64] {
        &self.outcome_eigenvalues
    }
}

/// Integrates `n_trajectories` independent trajectories and reduces them in
/// index order.
///
/// Snapshots are recorded internally regardless of
/// `config.record_snapshots` because the ensemble density matrix needs
/// them; the flag only controls what single-trajectory callers get back.
pub fn run_ensemble(
    model: &ModelSpec,
    psi0: &StateVector,
    config: &IntegrationConfig,
    n_trajectories: usize,
    seed: u64,
) -> Result<EnsembleResult> {
    if n_trajectories == 0 {
        return Err(Error::Argument("n_trajectories must be at least 1".into()));
    }
    config.validate_for(model)?;
    if model.dim() != psi0.dim() {
        return Err(Error::Dimension(model.dim(), psi0.dim()));
    }
    let mut inner = config.clone();
    inner.record_snapshots = true;

    let d = model.dim();
    let channels = model.channel_count();
    let stride = config.record_stride as u64;
    let n_records = (config.total_steps() / stride) as usize + 1;
    let times: Vec<f64> =
        (0..n_records).map(|r| (r as u64 * stride) as f64 * config.dt).collect();

    let (verdict_channel, outcome_eigenvalues) = match integrator::verdict_eigensystem(model)? {
        Some((j, es)) => {
            let evs = (0..es.group_count()).map(|g| es.group_eigenvalue(g)).collect();
            (Some(j), evs)
        }
        None => (None, Vec::new()),
    };

    let mut sum_exp = vec![vec![ZERO; n_records]; channels];
    let mut sum_abs2 = vec![vec![0.0f64; n_records]; channels];
    let mut rho_acc = vec![vec![ZERO; d * d]; n_records];
    let mut outcome_histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut collapse_times = Vec::new();
    let mut undecided = 0usize;

    let mut start = 0usize;
    while start < n_trajectories {
        let end = (start + CHUNK).min(n_trajectories);
        let batch: Vec<TrajectoryRecord> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut stream = noise::derive_stream(seed, i as u64, channels);
                integrator::run_trajectory(model, psi0, &inner, &mut stream)
                    .map_err(|e| Error::Numerical(format!("trajectory {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        for rec in &batch {
            accumulate(rec, n_records, &mut sum_exp, &mut sum_abs2, &mut rho_acc)?;
            match rec.verdict {
                Verdict::Collapsed { group, .. } => {
                    *outcome_histogram.entry(group).or_insert(0) += 1;
                    collapse_times
                        .push(integrator::collapse_time(rec).expect("collapsed record has onset"));
                }
                Verdict::Undecided => undecided += 1,
            }
        }
        start = end;
    }

    let n = n_trajectories as f64;
    let mut channel_means = vec![vec![ZERO; n_records]; channels];
    let mut channel_std_errors = vec![vec![0.0f64; n_records]; channels];
    for j in 0..channels {
        for r in 0..n_records {
            let mean = sum_exp[j][r] / n;
            channel_means[j][r] = mean;
            if n_trajectories >= 2 {
                let var = ((sum_abs2[j][r] - n * mean.norm_sqr()) / (n - 1.0)).max(0.0);
                channel_std_errors[j][r] = (var / n).sqrt();
            }
        }
    }
    let ensemble_rho = rho_acc
        .into_iter()
        .map(|acc| {
            let entries: Vec<Complex64> = acc.into_iter().map(|v| v / n).collect();
            DensityMatrix::with_tolerance_scale(d, entries, 10.0)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EnsembleResult {
        n_trajectories,
        seed,
        times,
        channel_means,
        channel_std_errors,
        ensemble_rho,
        outcome_histogram,
        collapse_times,
        undecided,
        verdict_channel,
        outcome_eigenvalues,
    })
}

/// Adds one trajectory to the running sums, padding with its last record.
fn accumulate(
    rec: &TrajectoryRecord,
    n_records: usize,
    sum_exp: &mut [Vec<Complex64>],
    sum_abs2: &mut [Vec<f64>],
    rho_acc: &mut [Vec<Complex64>],
) -> Result<()> {
    let snaps = rec
        .snapshots
        .as_ref()
        .ok_or_else(|| Error::Numerical("ensemble trajectory lacks snapshots".into()))?;
    let last = rec.times.len() - 1;
    for r in 0..n_records {
        let idx = r.min(last);
        for (j, per_channel) in rec.expectations.iter().enumerate() {
            let x = per_channel[idx];
            sum_exp[j][r] += x;
            sum_abs2[j][r] += x.norm_sqr();
        }
        let amps = snaps[idx].amplitudes();
        let d = amps.len();
        let acc = &mut rho_acc[r];
        for a in 0..d {
            let ca = amps[a];
            for b in 0..d {
                acc[a * d + b] += ca * amps[b].conj();
            }
        }
    }
    Ok(())
}

/// One outcome row of a [`BornReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct BornOutcome {
    pub group: usize,
    pub eigenvalue: f64,
    pub predicted_probability: f64,
    pub observed_count: usize,
    pub observed_frequency: f64,
    pub z_score: f64,
}

/// Comparison of collapse-outcome frequencies against the squared initial
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BornReport {
    pub n_trajectories: usize,
    pub decided: usize,
    pub undecided: usize,
    pub outcomes: Vec<BornOutcome>,
    pub max_abs_z: f64,
    pub passed: bool,
}

/// Tests the ensemble's outcome histogram against the probabilities the
/// initial state assigns to each eigenvalue group of the verdict channel.
///
/// Fails with [`Error::Undecided`] when more than [`BORN_MAX_UNDECIDED`] of
/// the trajectories reached `t_max` without collapsing (the outcome counts
/// would be biased toward fast outcomes), and with
/// [`Error::InsufficientData`] when fewer than [`BORN_MIN_DECIDED`] decided.
pub fn born_test(
    model: &ModelSpec,
    psi0: &StateVector,
    ensemble: &EnsembleResult,
) -> Result<BornReport> {
    if model.dim() != psi0.dim() {
        return Err(Error::Dimension(model.dim(), psi0.dim()));
    }
    let n = ensemble.n_trajectories;
    if ensemble.undecided as f64 > BORN_MAX_UNDECIDED * n as f64 {
        return Err(Error::Undecided { undecided: ensemble.undecided, total: n });
    }
    let decided = ensemble.decided();
    if decided < BORN_MIN_DECIDED {
        return Err(Error::InsufficientData(format!(
            "{decided} decided trajectories; at least {BORN_MIN_DECIDED} needed for outcome \
             statistics"
        )));
    }
    let (_, es) = integrator::verdict_eigensystem(model)?.ok_or_else(|| {
        Error::Argument("model has no Hermitian collapse channel with a split spectrum".into())
    })?;
    let mut predictions = Vec::with_capacity(es.group_count());
    for g in 0..es.group_count() {
        predictions.push((
            g,
            es.group_eigenvalue(g),
            linalg::fidelity_to_eigenspace(psi0, &es, g)?,
        ));
    }
    let outcomes = evaluate_outcomes(&predictions, &ensemble.outcome_histogram, decided);
    let max_abs_z =
        outcomes.iter().map(|o| o.z_score.abs()).fold(0.0f64, f64::max);
    let passed = max_abs_z < BORN_Z_LIMIT;
    Ok(BornReport {
        n_trajectories: n,
        decided,
        undecided: ensemble.undecided,
        outcomes,
        max_abs_z,
        passed,
    })
}

/// Scores each predicted outcome against its observed count.
fn evaluate_outcomes(
    predictions: &[(usize, f64, f64)],
    histogram: &BTreeMap<usize, usize>,
    decided: usize,
) -> Vec<BornOutcome> {
    predictions
        .iter()
        .map(|&(group, eigenvalue, p)| {
            let observed = histogram.get(&group).copied().unwrap_or(0);
            let nf = decided as f64;
            let spread = (nf * p * (1.0 - p)).sqrt();
            let delta = observed as f64 - nf * p;
            let z_score = if spread > 0.0 {
                delta / spread
            } else if delta.abs() < 0.5 {
                0.0
            } else {
                f64::INFINITY.copysign(delta)
            };
            BornOutcome {
                group,
                eigenvalue,
                predicted_probability: p,
                observed_count: observed,
                observed_frequency: observed as f64 / nf,
                z_score,
            }
        })
        .collect()
}

/// Trace distances between an ensemble average and the deterministic
/// reference on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub n_trajectories: usize,
    pub budget: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub passed: bool,
}

/// Compares the ensemble-averaged density matrix against independently
/// propagated reference matrices, point by point.
///
/// The budget is `max(0.02, 5 / sqrt(M))` for `M` trajectories: a Monte
/// Carlo error bar with a floor at the bias budget. Grids must agree
/// exactly in length and within rounding in value.
pub fn oracle_comparison(
    ensemble: &EnsembleResult,
    reference_times: &[f64],
    reference: &[DensityMatrix],
) -> Result<OracleComparison> {
    if reference.len() != reference_times.len() {
        return Err(Error::GridMismatch(format!(
            "{} reference matrices for {} reference times",
            reference.len(),
            reference_times.len()
        )));
    }
    if ensemble.times.len() != reference_times.len() {
        return Err(Error::GridMismatch(format!(
            "ensemble has {} records, reference has {}",
            ensemble.times.len(),
            reference_times.len()
        )));
    }
    for (&a, &b) in ensemble.times.iter().zip(reference_times) {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "ensemble record at t = {a} vs reference at t = {b}"
            )));
        }
    }
    let mut distances = Vec::with_capacity(reference.len());
    for (rho, reference_rho) in ensemble.ensemble_rho.iter().zip(reference) {
        distances.push(oracle::trace_distance(rho, reference_rho)?);
    }
    let max_distance = distances.iter().copied().fold(0.0f64, f64::max);
    let budget =
        COMPARISON_BUDGET_FLOOR.max(5.0 / (ensemble.n_trajectories as f64).sqrt());
    Ok(OracleComparison {
        n_trajectories: ensemble.n_trajectories,
        budget,
        times: ensemble.times.clone(),
        distances,
        max_distance,
        passed: max_distance <= budget,
    })
}

/// Runs the full cross-check: an ensemble with early stopping disabled, the
/// reference propagation on the same grid, and the point-by-point
/// comparison.
///
/// Early stopping is disabled so the ensemble average carries no padding
/// bias at all; the reference uses the trajectory step for its own grid.
pub fn run_oracle_comparison(
    model: &ModelSpec,
    psi0: &StateVector,
    config: &IntegrationConfig,
    n_trajectories: usize,
    seed: u64,
) -> Result<OracleComparison> {
    let mut cfg = config.clone();
    cfg.stop_on_collapse = false;
    let ensemble = run_ensemble(model, psi0, &cfg, n_trajectories, seed)?;
    let ev = oracle::MasterEvolution::new(
        model.clone(),
        linalg::outer_product(psi0),
        config.dt,
        ensemble.times().to_vec(),
    )?;
    let reference = oracle::propagate(&ev)?;
    oracle_comparison(&ensemble, ensemble.times(), &reference)
}

/// Collapse-time statistics for one particle count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub n_particles: usize,
    pub n_trajectories: usize,
    pub undecided: usize,
    pub mean_collapse_time: f64,
    pub std_error: f64,
}

/// Mean collapse time versus particle count, with a log-log slope when two
/// or more counts were measured.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub points: Vec<ScalingPoint>,
    pub exponent: Option<f64>,
}

/// Measures how fast superpositions of heavier clusters decay: one ensemble
/// of the localization model per particle count, reported in ascending
/// count order.
///
/// Point `row` uses base seed `seed + row` so rows stay independent while
/// the whole table is reproducible. A point with more than
/// [`SCALING_MAX_UNDECIDED`] undecided trajectories aborts the study: its
/// mean collapse time would be censored, not just noisy.
pub fn scaling_study(
    particle_counts: &[usize],
    coupling: f64,
    branch_separation: f64,
    config: &IntegrationConfig,
    n_per_point: usize,
    seed: u64,
) -> Result<ScalingStudy> {
    if particle_counts.is_empty() {
        return Err(Error::Argument("particle_counts must not be empty".into()));
    }
    if n_per_point < SCALING_MIN_PER_POINT {
        return Err(Error::Argument(format!(
            "n_per_point = {n_per_point} is below the minimum of {SCALING_MIN_PER_POINT}"
        )));
    }
    let mut counts = particle_counts.to_vec();
    counts.sort_unstable();
    if counts.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Argument("particle_counts contains duplicates".into()));
    }

    let mut cfg = config.clone();
    cfg.stop_on_collapse = true;

    let mut points = Vec::with_capacity(counts.len());
    for (row, &n_particles) in counts.iter().enumerate() {
        let chain = LocalizationChain { n_particles, coupling, branch_separation };
        let (model, left, right) = build_localization_model(&chain)?;
        let mut amplitudes = vec![ZERO; 2];
        amplitudes[0] = left.amplitude(0);
        amplitudes[1] = right.amplitude(1);
        let psi0 = StateVector::new(amplitudes)?;
        let row_seed = seed.wrapping_add(row as u64);
        let ensemble = run_ensemble(&model, &psi0, &cfg, n_per_point, row_seed)?;
        if ensemble.undecided() as f64 > SCALING_MAX_UNDECIDED * n_per_point as f64 {
            return Err(Error::Undecided {
                undecided: ensemble.undecided(),
                total: n_per_point,
            });
        }
        let times = ensemble.collapse_times();
        let m = times.len() as f64;
        let mean = times.iter().sum::<f64>() / m;
        let std_error = if times.len() >= 2 {
            let var =
                times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        points.push(ScalingPoint {
            n_particles,
            n_trajectories: n_per_point,
            undecided: ensemble.undecided(),
            mean_collapse_time: mean,
            std_error,
        });
    }

    let exponent = if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| (p.n_particles as f64).ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.mean_collapse_time.ln()).collect();
        Some(ols_slope(&xs, &ys))
    } else {
        None
    };
    Ok(ScalingStudy { points, exponent })
}

/// Least-squares slope of `ys` against `xs`.
fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - x_mean) * (y - y_mean);
        den += (x - x_mean) * (x - x_mean);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_dephasing_qubit, build_photon_number_model, fig1_initial_state};
    use crate::linalg::Operator;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn plus_state() -> StateVector {
        StateVector::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn ensemble_counts_and_initial_matrix_are_exact() {
        let model = build_dephasing_qubit(1.0).unwrap();
        let config = IntegrationConfig::new(2e-3, 0.5)
            .unwrap()
            .with_record_stride(50)
            .with_stop_on_collapse(false);
        let psi0 = plus_state();
        let ensemble = run_ensemble(&model, &psi0, &config, 50, 3).unwrap();
        assert_eq!(ensemble.decided() + ensemble.undecided(), 50);
        assert_eq!(ensemble.times().len(), 6);
        for (r, &t) in ensemble.times().iter().enumerate() {
            assert_eq!(t, (r as u64 * 50) as f64 * 2e-3);
        }
        let rho0 = linalg::outer_product(&psi0);
        let got = &ensemble.ensemble_rho()[0];
        for i in 0..2 {
            for j in 0..2 {
                assert!((got.entry(i, j) - rho0.entry(i, j)).norm() < 1e-12);
            }
        }
        assert_eq!(ensemble.verdict_channel(), Some(0));
        assert_eq!(ensemble.outcome_eigenvalues(), [0.0, 1.0]);
    }

    #[test]
    fn single_trajectory_ensemble_has_zero_standard_errors() {
        let model = build_dephasing_qubit(1.0).unwrap();
        let config = IntegrationConfig::new(2e-3, 0.1).unwrap().with_record_stride(10);
        let ensemble = run_ensemble(&model, &plus_state(), &config, 1, 9).unwrap();
        assert_eq!(ensemble.n_trajectories(), 1);
        for per_channel in ensemble.channel_std_errors() {
            assert!(per_channel.iter().all(|&se| se == 0.0));
        }
        for rho in ensemble.ensemble_rho() {
            assert!((rho.trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_is_bitwise_identical_across_thread_counts() {
        let model = build_photon_number_model(9).unwrap();
        let psi0 = fig1_initial_state(9).unwrap();
        let config = IntegrationConfig::new(1e-4, 0.05).unwrap().with_record_stride(100);
        let run = || {
            run_ensemble(&model, &psi0, &config, 24, 42).unwrap()
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let quad = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(single, quad);
    }

    #[test]
    fn outcome_frequencies_match_equal_branch_weights() {
        let (model, _, _) = build_localization_model(&LocalizationChain::new(1)).unwrap();
        let config = IntegrationConfig::new(0.02, 40.0).unwrap().with_record_stride(5);
        let ensemble = run_ensemble(&model, &plus_state(), &config, 400, 11).unwrap();
        let report = born_test(&model, &plus_state(), &ensemble).unwrap();
        assert!(report.passed, "max |z| = {}", report.max_abs_z);
        assert_eq!(report.decided + report.undecided, 400);
        assert_eq!(report.outcomes.len(), 2);
        for outcome in &report.outcomes {
            assert!((outcome.predicted_probability - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn outcome_frequencies_track_asymmetric_weights() {
        // Initial weight 0.2 on the lower level. The linear-noise martingale
        // structure is what keeps the outcome frequency at 0.2; a mis-scaled
        // diffusion term would push it toward 0.059 and fail hard here.
        let model = build_dephasing_qubit(1.0).unwrap();
        let psi0 = StateVector::new(vec![c(0.2f64.sqrt(), 0.0), c(0.8f64.sqrt(), 0.0)]).unwrap();
        let config = IntegrationConfig::new(2e-3, 30.0).unwrap().with_record_stride(10);
        let ensemble = run_ensemble(&model, &psi0, &config, 400, 17).unwrap();
        let report = born_test(&model, &psi0, &ensemble).unwrap();
        assert!(report.passed, "max |z| = {}", report.max_abs_z);
        let low = &report.outcomes[0];
        assert!((low.predicted_probability - 0.2).abs() < 1e-12);
        assert!((low.observed_frequency - 0.2).abs() < 0.1);
    }

    #[test]
    fn born_test_rejects_excess_undecided_trajectories() {
        let model = build_dephasing_qubit(1.0).unwrap();
        let config = IntegrationConfig::new(2e-3, 0.4).unwrap().with_record_stride(10);
        let ensemble = run_ensemble(&model, &plus_state(), &config, 200, 5).unwrap();
        assert!(matches!(
            born_test(&model, &plus_state(), &ensemble),
            Err(Error::Undecided { .. })
        ));
    }

    #[test]
    fn born_test_requires_a_hundred_decided() {
        let model = build_dephasing_qubit(1.0).unwrap();
        let config = IntegrationConfig::new(2e-3, 20.0).unwrap().with_record_stride(10);
        let ensemble = run_ensemble(&model, &plus_state(), &config, 60, 5).unwrap();
        assert!(matches!(
            born_test(&model, &plus_state(), &ensemble),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn doctored_outcome_counts_fail_the_z_test() {
        let predictions = [(0usize, -1.0, 0.5), (1usize, 1.0, 0.5)];
        let mut histogram = BTreeMap::new();
        histogram.insert(0, 700);
        histogram.insert(1, 300);
        let outcomes = evaluate_outcomes(&predictions, &histogram, 1000);
        let max_abs_z = outcomes.iter().map(|o| o.z_score.abs()).fold(0.0f64, f64::max);
        assert!(max_abs_z > BORN_Z_LIMIT);
    }

    #[test]
    fn impossible_outcome_gets_infinite_z() {
        let predictions = [(0usize, 0.0, 0.0), (1usize, 1.0, 1.0)];
        let mut histogram = BTreeMap::new();
        histogram.insert(0, 3);
        histogram.insert(1, 997);
        let outcomes = evaluate_outcomes(&predictions, &histogram, 1000);
        assert!(outcomes[0].z_score.is_infinite());
        let clean: BTreeMap<usize, usize> = [(1usize, 1000usize)].into_iter().collect();
        let outcomes = evaluate_outcomes(&predictions, &clean, 1000);
        assert_eq!(outcomes[0].z_score, 0.0);
        assert_eq!(outcomes[1].z_score, 0.0);
    }

    #[test]
    fn ensemble_mean_stays_inside_the_comparison_budget() {
        let model = build_dephasing_qubit(1.0).unwrap();
        let config = IntegrationConfig::new(2e-3, 2.0).unwrap().with_record_stride(100);
        let comparison = run_oracle_comparison(&model, &plus_state(), &config, 400, 23).unwrap();
        assert!(comparison.passed, "max distance {}", comparison.max_distance);
        assert!((comparison.budget - 0.25).abs() < 1e-12);
        assert!(comparison.max_distance < 0.1);
        assert_eq!(comparison.distances.len(), comparison.times.len());
        assert!(comparison.distances[0] < 1e-12);
    }

    #[test]
    fn noiseless_ensemble_matches_reference_to_machine_precision() {
        // No collapse channels: trajectories are deterministic and the only
        // discrepancy is the Euler phase error, bounded well below 1e-6 at
        // this step size.
        let hamiltonian = Operator::from_diagonal(&[0.0, 0.3]);
        let model = ModelSpec::new(hamiltonian, vec![], vec![]).unwrap();
        let psi0 = plus_state();
        let config = IntegrationConfig::new(2e-6, 0.5)
            .unwrap()
            .with_record_stride(25000);
        let comparison = run_oracle_comparison(&model, &psi0, &config, 2, 1).unwrap();
        assert!(
            comparison.max_distance <= 1e-6,
            "max distance {}",
            comparison.max_distance
        );
    }

    #[test]
    fn comparison_rejects_mismatched_grids() {
        let model = build_dephasing_qubit(1.0).unwrap();
        let config = IntegrationConfig::new(2e-3, 0.2)
            .unwrap()
            .with_record_stride(10)
            .with_stop_on_collapse(false);
        let ensemble = run_ensemble(&model, &plus_state(), &config, 5, 2).unwrap();
        let rho = linalg::outer_product(&plus_state());
        let short = oracle_comparison(&ensemble, &[0.0], &[rho.clone()]);
        assert!(matches!(short, Err(Error::GridMismatch(_))));
        let shifted_times: Vec<f64> =
            ensemble.times().iter().map(|t| t + 0.001).collect();
        let refs = vec![rho; shifted_times.len()];
        let shifted = oracle_comparison(&ensemble, &shifted_times, &refs);
        assert!(matches!(shifted, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn heavier_clusters_collapse_faster() {
        let config = IntegrationConfig::new(0.02, 60.0).unwrap().with_record_stride(5);
        let study =
            scaling_study(&[8, 1, 4, 2], 0.75, 1.0, &config, 120, 5).unwrap();
        let counts: Vec<usize> = study.points.iter().map(|p| p.n_particles).collect();
        assert_eq!(counts, [1, 2, 4, 8]);
        for pair in study.points.windows(2) {
            assert!(
                pair[0].mean_collapse_time > pair[1].mean_collapse_time,
                "{} particles: {} vs {} particles: {}",
                pair[0].n_particles,
                pair[0].mean_collapse_time,
                pair[1].n_particles,
                pair[1].mean_collapse_time
            );
        }
        let exponent = study.exponent.unwrap();
        assert!(
            (-1.5..=-0.5).contains(&exponent),
            "exponent {exponent}"
        );
    }

    #[test]
    fn single_particle_collapse_time_is_pinned() {
        // Regression pin at the default coupling: the collapse-time scale
        // this model family was tuned to. Any change to the stepping, the
        // noise layout or the verdict bookkeeping shows up here first.
        let config = IntegrationConfig::new(0.02, 60.0).unwrap().with_record_stride(5);
        let study = scaling_study(&[1, 8], 0.75, 1.0, &config, 300, 5).unwrap();
        let tau_1 = study.points[0].mean_collapse_time;
        assert!((tau_1 - 9.848).abs() < 1e-9, "tau_1 = {tau_1}");
        let ratio = tau_1 / study.points[1].mean_collapse_time;
        assert!((4.0..=16.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn scaling_study_validates_its_inputs() {
        let config = IntegrationConfig::new(0.02, 60.0).unwrap().with_record_stride(5);
        assert!(matches!(
            scaling_study(&[], 0.75, 1.0, &config, 120, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            scaling_study(&[1, 2], 0.75, 1.0, &config, 50, 0),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            scaling_study(&[2, 2], 0.75, 1.0, &config, 120, 0),
            Err(Error::Argument(_))
        ));
    }
}

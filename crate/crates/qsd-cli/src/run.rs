// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Command execution: runs the configured computation and renders every
//! output file in memory. Nothing touches the filesystem here, so a failed
//! run leaves no partial artifacts behind.
//!
//! File formats are fixed: CSV for time series (header row, `time` first,
//! numbers with 17 significant digits), JSON for reports and the manifest,
//! and a hand-emitted SVG for the trajectory plot. All three are plain
//! text, diff-friendly, and bitwise deterministic for a given config.

use serde_json::json;

use qsd_core::experiments::{
    self, run_ensemble, scaling_study, BornReport, EnsembleResult, ScalingStudy, BORN_Z_LIMIT,
};
use qsd_core::integrator::{
    run_trajectory, verdict_eigensystem, IntegrationConfig, ModelSpec, TrajectoryRecord, Verdict,
};
use qsd_core::linalg::{outer_product, DensityMatrix, StateVector};
use qsd_core::noise::derive_stream;
use qsd_core::oracle::{propagate, MasterEvolution};
use qsd_core::Result;

use crate::config::{CommandKind, RunConfig};

/// Completed run: file contents keyed by their fixed names, human-readable
/// summary lines, and whether a statistical check failed (a distinct exit
/// status from hard errors, since the outputs are still valid and written).
pub struct Artifacts {
    pub files: Vec<(&'static str, Vec<u8>)>,
    pub summary: Vec<String>,
    pub statistical_failure: bool,
}

/// Runs the configured command and renders its outputs.
pub fn execute(config: &RunConfig) -> Result<Artifacts> {
    let (model, psi0) = config.build_model()?;
    match config.command {
        CommandKind::Trajectory => run_single(config, &model, &psi0),
        CommandKind::Ensemble => run_ensemble_command(config, &model, &psi0),
        CommandKind::Oracle => run_oracle(config, &model, &psi0),
        CommandKind::Born => run_born(config, &model, &psi0),
        CommandKind::Scaling => run_scaling(config),
        CommandKind::Fig1 => run_fig1(config, &model, &psi0),
    }
}

/// JSON manifest describing the run: tool version, command, resolved config
/// (as the same key=value pairs the config format uses), seed, and the
/// files written. Feeding the `config` map back in as a config file
/// reproduces every output byte for byte.
pub fn manifest_json(config: &RunConfig, file_names: &[&str]) -> Vec<u8> {
    let config_map: serde_json::Map<String, serde_json::Value> = config
        .emit_pairs()
        .into_iter()
        .map(|(k, v)| (k, serde_json::Value::String(v)))
        .collect();
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": config.command.name(),
        "seed": config.seed,
        "config": config_map,
        "files": file_names,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    bytes
}

/// 17 significant digits: enough to reproduce any f64 exactly on re-read.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn describe_verdict(rec: &TrajectoryRecord) -> String {
    match rec.verdict {
        // Six decimals keep summary lines readable; the CSV carries the
        // exact values.
        Verdict::Collapsed { eigenvalue, onset_record, .. } => format!(
            "collapsed to eigenvalue {eigenvalue} (onset t = {:.6})",
            rec.times[onset_record]
        ),
        Verdict::Undecided => "undecided at t_max".into(),
    }
}

fn run_single(config: &RunConfig, model: &ModelSpec, psi0: &StateVector) -> Result<Artifacts> {
    let ic = config.integration_config()?.with_stop_on_collapse(false);
    let mut stream = derive_stream(config.seed, 0, model.channel_count());
    let rec = run_trajectory(model, psi0, &ic, &mut stream)?;
    let csv = trajectory_csv(model, &rec);
    Ok(Artifacts {
        files: vec![("trajectories.csv", csv)],
        summary: vec![format!(
            "1 trajectory, {} steps, {}",
            rec.steps_taken,
            describe_verdict(&rec)
        )],
        statistical_failure: false,
    })
}

fn trajectory_csv(model: &ModelSpec, rec: &TrajectoryRecord) -> Vec<u8> {
    let labels = model.labels();
    let mut header = vec!["time".to_string()];
    for label in labels {
        header.push(format!("{label}_re"));
        header.push(format!("{label}_im"));
    }
    for &ch in &rec.hermitian_channels {
        header.push(format!("{}_var", labels[ch]));
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (r, &t) in rec.times.iter().enumerate() {
        let mut row = vec![fmt(t)];
        for series in &rec.expectations {
            row.push(fmt(series[r].re));
            row.push(fmt(series[r].im));
        }
        for series in &rec.variances {
            row.push(fmt(series[r]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn run_ensemble_command(
    config: &RunConfig,
    model: &ModelSpec,
    psi0: &StateVector,
) -> Result<Artifacts> {
    // Full-horizon integration: ensemble means are plain averages over live
    // trajectories at every time, not held-over post-collapse values.
    let ic = config.integration_config()?.with_stop_on_collapse(false);
    let ensemble = run_ensemble(model, psi0, &ic, config.n_trajectories, config.seed)?;
    let csv = ensemble_csv(model, &ensemble);
    let mut summary = vec![format!(
        "{} trajectories, {} decided, {} undecided",
        ensemble.n_trajectories(),
        ensemble.decided(),
        ensemble.undecided()
    )];
    let eigenvalues = ensemble.outcome_eigenvalues();
    for (&group, &count) in ensemble.outcome_histogram() {
        summary.push(format!(
            "outcome eigenvalue {}: {count} trajectories",
            eigenvalues[group]
        ));
    }
    Ok(Artifacts {
        files: vec![("trajectories.csv", csv)],
        summary,
        statistical_failure: false,
    })
}

fn ensemble_csv(model: &ModelSpec, ensemble: &EnsembleResult) -> Vec<u8> {
    let labels = model.labels();
    let mut header = vec!["time".to_string()];
    for label in labels {
        header.push(format!("{label}_re"));
        header.push(format!("{label}_im"));
        header.push(format!("{label}_stderr"));
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    let means = ensemble.channel_means();
    let errors = ensemble.channel_std_errors();
    for (r, &t) in ensemble.times().iter().enumerate() {
        let mut row = vec![fmt(t)];
        for ch in 0..labels.len() {
            row.push(fmt(means[ch][r].re));
            row.push(fmt(means[ch][r].im));
            row.push(fmt(errors[ch][r]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn run_oracle(config: &RunConfig, model: &ModelSpec, psi0: &StateVector) -> Result<Artifacts> {
    let ic = config.integration_config()?;
    ic.validate_for(model)?;
    let times = record_times(&ic);
    let rho0 = outer_product(psi0);
    let evolution = MasterEvolution::new(model.clone(), rho0, ic.dt, times.clone())?;
    let rhos = propagate(&evolution)?;
    let csv = rho_csv(&times, &rhos);
    Ok(Artifacts {
        files: vec![("rho_timeseries.csv", csv)],
        summary: vec![format!(
            "deterministic reference: {} samples to t = {}, dimension {} \
             (step-halving self-check passed)",
            times.len(),
            times.last().copied().unwrap_or(0.0),
            model.dim()
        )],
        statistical_failure: false,
    })
}

/// The record grid the integrator produces for this config: every
/// `record_stride` steps, starting at t = 0.
fn record_times(ic: &IntegrationConfig) -> Vec<f64> {
    let stride = ic.record_stride as u64;
    let n_records = ic.total_steps() / stride + 1;
    (0..n_records).map(|r| (r * stride) as f64 * ic.dt).collect()
}

fn rho_csv(times: &[f64], rhos: &[DensityMatrix]) -> Vec<u8> {
    let dim = rhos.first().map_or(0, DensityMatrix::dim);
    let mut header = vec!["time".to_string()];
    for i in 0..dim {
        for j in 0..dim {
            header.push(format!("rho_{i}_{j}_re"));
            header.push(format!("rho_{i}_{j}_im"));
        }
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (rho, &t) in rhos.iter().zip(times) {
        let mut row = vec![fmt(t)];
        for i in 0..dim {
            for j in 0..dim {
                let z = rho.entry(i, j);
                row.push(fmt(z.re));
                row.push(fmt(z.im));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn run_born(config: &RunConfig, model: &ModelSpec, psi0: &StateVector) -> Result<Artifacts> {
    let ic = config.integration_config()?.with_stop_on_collapse(true);
    let ensemble = run_ensemble(model, psi0, &ic, config.n_trajectories, config.seed)?;
    let report = experiments::born_test(model, psi0, &ensemble)?;
    let mut summary = Vec::new();
    for outcome in &report.outcomes {
        summary.push(format!(
            "eigenvalue {}: predicted {:.4}, observed {:.4} ({} of {}), z = {:+.2}",
            outcome.eigenvalue,
            outcome.predicted_probability,
            outcome.observed_frequency,
            outcome.observed_count,
            report.decided,
            outcome.z_score
        ));
    }
    summary.push(format!(
        "max |z| = {:.3} against the limit {BORN_Z_LIMIT}: {}",
        report.max_abs_z,
        if report.passed { "consistent" } else { "INCONSISTENT" }
    ));
    let statistical_failure = !report.passed;
    Ok(Artifacts {
        files: vec![("born_report.json", born_report_json(&report))],
        summary,
        statistical_failure,
    })
}

/// Non-finite z-scores (an outcome predicted impossible that occurred, or
/// vice versa) serialize as JSON null.
fn born_report_json(report: &BornReport) -> Vec<u8> {
    let outcomes: Vec<serde_json::Value> = report
        .outcomes
        .iter()
        .map(|o| {
            json!({
                "group": o.group,
                "eigenvalue": o.eigenvalue,
                "predicted_probability": o.predicted_probability,
                "observed_count": o.observed_count,
                "observed_frequency": o.observed_frequency,
                "z_score": o.z_score,
            })
        })
        .collect();
    let report = json!({
        "n_trajectories": report.n_trajectories,
        "decided": report.decided,
        "undecided": report.undecided,
        "outcomes": outcomes,
        "max_abs_z": report.max_abs_z,
        "z_limit": BORN_Z_LIMIT,
        "passed": report.passed,
    });
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

fn run_scaling(config: &RunConfig) -> Result<Artifacts> {
    let crate::config::ModelKind::Localization { coupling, separation, .. } = config.model else {
        return Err(qsd_core::Error::Argument(
            "scaling requires the localization model".into(),
        ));
    };
    let ic = config.integration_config()?;
    let study = scaling_study(
        &config.scaling_counts,
        coupling,
        separation,
        &ic,
        config.n_trajectories,
        config.seed,
    )?;
    let mut summary = Vec::new();
    for point in &study.points {
        summary.push(format!(
            "{} particles: mean collapse time {:.4} +/- {:.4} ({} trajectories, {} undecided)",
            point.n_particles,
            point.mean_collapse_time,
            point.std_error,
            point.n_trajectories,
            point.undecided
        ));
    }
    match study.exponent {
        Some(e) => summary.push(format!("log-log power-law exponent: {e:.4}")),
        None => summary.push("single point; no power-law fit".into()),
    }
    Ok(Artifacts {
        files: vec![
            ("scaling_table.csv", scaling_csv(&study)),
            ("scaling_fit.json", scaling_fit_json(&study)),
        ],
        summary,
        statistical_failure: false,
    })
}

fn scaling_csv(study: &ScalingStudy) -> Vec<u8> {
    let mut out = String::from("n_particles,n_trajectories,undecided,mean_collapse_time,std_error\n");
    for p in &study.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.n_particles,
            p.n_trajectories,
            p.undecided,
            fmt(p.mean_collapse_time),
            fmt(p.std_error)
        ));
    }
    out.into_bytes()
}

fn scaling_fit_json(study: &ScalingStudy) -> Vec<u8> {
    let fit = json!({
        "exponent": study.exponent,
        "n_points": study.points.len(),
        "particle_counts": study.points.iter().map(|p| p.n_particles).collect::<Vec<_>>(),
    });
    let mut bytes = serde_json::to_vec_pretty(&fit).expect("fit serializes");
    bytes.push(b'\n');
    bytes
}

fn run_fig1(config: &RunConfig, model: &ModelSpec, psi0: &StateVector) -> Result<Artifacts> {
    let ic = config.integration_config()?.with_stop_on_collapse(false);
    let mut times: Vec<f64> = Vec::new();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    let mut summary = Vec::new();
    for i in 0..config.n_trajectories {
        let mut stream = derive_stream(config.seed, i as u64, model.channel_count());
        let rec = run_trajectory(model, psi0, &ic, &mut stream)?;
        if i == 0 {
            times = rec.times.clone();
        }
        curves.push(rec.expectations[0].iter().map(|z| z.re).collect());
        summary.push(format!("trajectory {i}: {}", describe_verdict(&rec)));
    }
    let label = &model.labels()[0];
    let gridlines: Vec<f64> = match verdict_eigensystem(model)? {
        Some((_, eigensystem)) => (0..eigensystem.group_count())
            .map(|g| eigensystem.group_eigenvalue(g))
            .collect(),
        None => Vec::new(),
    };
    let mut files = vec![("trajectories.csv", fig1_csv(&times, &curves, label))];
    if config.svg {
        files.push(("fig1.svg", fig1_svg(&times, &curves, &gridlines, label)));
    }
    Ok(Artifacts { files, summary, statistical_failure: false })
}

/// Wide CSV: one column per trajectory, holding the real part of the first
/// channel's expectation value.
fn fig1_csv(times: &[f64], curves: &[Vec<f64>], label: &str) -> Vec<u8> {
    let mut header = vec!["time".to_string()];
    for i in 0..curves.len() {
        header.push(format!("{label}_{i}"));
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for (r, &t) in times.iter().enumerate() {
        let mut row = vec![fmt(t)];
        for curve in curves {
            row.push(fmt(curve[r]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

/// Hand-emitted SVG: one polyline per trajectory plus dashed horizontal
/// gridlines at the collapse channel's eigenvalues, so convergence onto the
/// spectrum is visible at a glance.
fn fig1_svg(times: &[f64], curves: &[Vec<f64>], gridlines: &[f64], label: &str) -> Vec<u8> {
    const WIDTH: f64 = 860.0;
    const HEIGHT: f64 = 540.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 50.0;
    const PALETTE: [&str; 8] = [
        "#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#16a085", "#7f8c8d", "#2c3e50",
    ];
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let t_max = times.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &g in gridlines {
        y_min = y_min.min(g);
        y_max = y_max.max(g);
    }
    for curve in curves {
        for &v in curve {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    let pad = 0.05 * (y_max - y_min).max(1e-9);
    y_min -= pad;
    y_max += pad;

    let x_of = |t: f64| LEFT + t / t_max * plot_w;
    let y_of = |v: f64| TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for &g in gridlines {
        let y = y_of(g);
        svg.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#bbbbbb\" \
             stroke-width=\"1\" stroke-dasharray=\"4 4\"/>\n",
            LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\" \
             fill=\"#555555\">{g}</text>\n",
            LEFT - 8.0,
            y + 4.0
        ));
    }
    for tick in 0..=4 {
        let t = t_max * tick as f64 / 4.0;
        let x = x_of(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#333333\" \
             stroke-width=\"1\"/>\n",
            TOP + plot_h,
            TOP + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
             fill=\"#333333\">{t:.2}</text>\n",
            TOP + plot_h + 20.0
        ));
    }
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{:.2}\" stroke=\"#333333\" \
         stroke-width=\"1\"/>\n",
        TOP + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333333\" \
         stroke-width=\"1\"/>\n",
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    ));
    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (r, &v) in curve.iter().enumerate() {
            points.push_str(&format!("{:.2},{:.2} ", x_of(times[r]), y_of(v)));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
             points=\"{}\"/>\n",
            points.trim_end()
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" \
         fill=\"#333333\">time</text>\n",
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" \
         fill=\"#333333\" transform=\"rotate(-90 18 {:.2})\">{label} (expectation)</text>\n",
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    ));
    svg.push_str("</svg>\n");
    svg.into_bytes()
}

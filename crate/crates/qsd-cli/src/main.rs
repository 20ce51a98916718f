// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! `qsd`: batch front-end for the stochastic collapse simulator.
//!
//! ```text
//! qsd <command> [--config FILE] [--seed N] [--out DIR] [key=value ...]
//! ```
//!
//! Exit status: 0 on success, 2 when the configuration is rejected, 3 when
//! the computation fails numerically (or an output cannot be written), and
//! 4 when a statistical check fails while the outputs themselves are valid.

mod config;
mod run;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::CommandKind;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_STATISTICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "qsd",
    version,
    about = "Stochastic collapse-dynamics simulator",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one stochastic trajectory and write its time series.
    Trajectory(RunArgs),
    /// Average many trajectories into ensemble-mean time series.
    Ensemble(RunArgs),
    /// Propagate the deterministic ensemble reference equation.
    Oracle(RunArgs),
    /// Compare collapse-outcome frequencies against the initial weights.
    Born(RunArgs),
    /// Measure how the mean collapse time shrinks with particle count.
    Scaling(RunArgs),
    /// Run the five-trajectory collapse demo and plot it.
    Fig1(RunArgs),
}

impl Command {
    fn split(self) -> (CommandKind, RunArgs) {
        match self {
            Command::Trajectory(a) => (CommandKind::Trajectory, a),
            Command::Ensemble(a) => (CommandKind::Ensemble, a),
            Command::Oracle(a) => (CommandKind::Oracle, a),
            Command::Born(a) => (CommandKind::Born, a),
            Command::Scaling(a) => (CommandKind::Scaling, a),
            Command::Fig1(a) => (CommandKind::Fig1, a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file (one pair per line, # comments).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Noise seed, decimal or 0x-hex; beats the config key and QSD_SEED.
    #[arg(long, value_name = "N", value_parser = config::parse_seed)]
    seed: Option<u64>,

    /// Output directory; beats the `out` config key.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Config overrides applied on top of the file, e.g. dt=0.001.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();

    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    if let Some(path) = &args.config {
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("config: cannot read {}: {e}", path.display());
                return ExitCode::from(EXIT_VALIDATION);
            }
        };
        match config::parse_pairs(&text) {
            Ok(pairs) => raw = pairs,
            Err(errors) => {
                return reject(&path.display().to_string(), &errors);
            }
        }
    }
    let mut override_errors = Vec::new();
    for token in &args.overrides {
        match config::parse_pair(token) {
            Ok((key, value)) => {
                raw.insert(key, value);
            }
            Err(e) => override_errors.push(e),
        }
    }
    if !override_errors.is_empty() {
        return reject("command line", &override_errors);
    }

    let env_seed = match std::env::var("QSD_SEED") {
        Ok(text) => match config::parse_seed(&text) {
            Ok(seed) => Some(seed),
            Err(e) => {
                eprintln!("QSD_SEED: {e}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        },
        Err(std::env::VarError::NotPresent) => None,
        Err(std::env::VarError::NotUnicode(_)) => {
            eprintln!("QSD_SEED: not valid unicode");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };

    let resolved = config::resolve(Some(kind), &raw, args.seed, args.out.clone(), env_seed);
    let run_config = match resolved {
        Ok(c) => c,
        Err(errors) => return reject("configuration", &errors),
    };

    let artifacts = match run::execute(&run_config) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };

    let names: Vec<&str> = artifacts.files.iter().map(|(name, _)| *name).collect();
    let manifest = run::manifest_json(&run_config, &names);
    if let Err(e) = write_outputs(&run_config.out, &artifacts.files, &manifest) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }

    for line in &artifacts.summary {
        println!("{line}");
    }
    println!("wrote {}", run_config.out.join("manifest.json").display());
    for name in &names {
        println!("wrote {}", run_config.out.join(name).display());
    }

    if artifacts.statistical_failure {
        eprintln!("statistical check failed; see the report for details");
        ExitCode::from(EXIT_STATISTICAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn reject(context: &str, errors: &[String]) -> ExitCode {
    eprintln!("{context}: rejected with {} problem(s):", errors.len());
    for e in errors {
        eprintln!("  - {e}");
    }
    ExitCode::from(EXIT_VALIDATION)
}

/// Writes every artifact plus the manifest; on any failure, removes the
/// files written so far so no partial output set survives.
fn write_outputs(
    dir: &std::path::Path,
    files: &[(&'static str, Vec<u8>)],
    manifest: &[u8],
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let mut write_one = |name: &str, bytes: &[u8]| -> std::io::Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    let result = (|| {
        write_one("manifest.json", manifest)?;
        for (name, bytes) in files {
            write_one(name, bytes)?;
        }
        Ok(())
    })();
    if result.is_err() {
        for path in &written {
            let _ = std::fs::remove_file(path);
        }
    }
    result
}

fn exit_code_for(error: &qsd_core::Error) -> u8 {
    use qsd_core::Error;
    match error {
        Error::Dimension(..)
        | Error::Hermiticity(..)
        | Error::Argument(..)
        | Error::ChannelCount { .. }
        | Error::Config(..) => EXIT_VALIDATION,
        Error::Numerical(..)
        | Error::NonFinite { .. }
        | Error::Undecided { .. }
        | Error::GridMismatch(..)
        | Error::InsufficientData(..) => EXIT_NUMERICAL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_variants_map_to_the_documented_exit_codes() {
        assert_eq!(exit_code_for(&qsd_core::Error::Dimension(2, 3)), 2);
        assert_eq!(exit_code_for(&qsd_core::Error::Argument("x".into())), 2);
        assert_eq!(exit_code_for(&qsd_core::Error::Config("x".into())), 2);
        assert_eq!(exit_code_for(&qsd_core::Error::Hermiticity(0.5)), 2);
        assert_eq!(
            exit_code_for(&qsd_core::Error::ChannelCount { got: 1, expected: 2 }),
            2
        );
        assert_eq!(exit_code_for(&qsd_core::Error::Numerical("x".into())), 3);
        assert_eq!(exit_code_for(&qsd_core::Error::NonFinite { step: 7 }), 3);
        assert_eq!(
            exit_code_for(&qsd_core::Error::Undecided { undecided: 1, total: 10 }),
            3
        );
        assert_eq!(exit_code_for(&qsd_core::Error::GridMismatch("x".into())), 3);
        assert_eq!(
            exit_code_for(&qsd_core::Error::InsufficientData("x".into())),
            3
        );
    }

    #[test]
    fn command_line_grammar_parses() {
        let cli = Cli::try_parse_from([
            "qsd",
            "fig1",
            "--config",
            "run.cfg",
            "--seed",
            "0x10",
            "--out",
            "results",
            "dt=0.0001",
            "n_trajectories=7",
        ])
        .unwrap();
        let (kind, args) = cli.command.split();
        assert_eq!(kind, CommandKind::Fig1);
        assert_eq!(args.seed, Some(16));
        assert_eq!(args.out.as_deref(), Some(std::path::Path::new("results")));
        assert_eq!(args.config.as_deref(), Some(std::path::Path::new("run.cfg")));
        assert_eq!(args.overrides, vec!["dt=0.0001", "n_trajectories=7"]);
        assert!(Cli::try_parse_from(["qsd", "unknown-command"]).is_err());
    }
}

// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration: a flat `key=value` text format plus command-line
//! overrides, resolved against per-model defaults into a fully validated
//! [`RunConfig`].
//!
//! Resolution collects *every* problem it finds instead of stopping at the
//! first, so a bad config is fixed in one round trip. [`RunConfig::emit`]
//! renders the resolved state back into the same text format;
//! `parse(emit(c))` reproduces `c` exactly, which is what makes the
//! manifest a complete recipe for reproducing a run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use num_complex::Complex64;

use qsd_core::integrator::{IntegrationConfig, ModelSpec};
use qsd_core::linalg::StateVector;
use qsd_core::models::{
    build_dephasing_qubit, build_localization_model, build_photon_number_model,
    fig1_initial_state, LocalizationChain,
};

/// Default output directory, relative to the working directory.
pub const DEFAULT_OUT_DIR: &str = "qsd_out";

/// Largest accepted photon-space truncation; matrices are dense and
/// quadratic in the dimension, so this bounds memory and runtime.
pub const MAX_N_MAX: usize = 64;

/// Everything a run needs, fully resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: ModelKind,
    pub initial: InitialState,
    pub dt: f64,
    pub t_max: f64,
    pub record_stride: usize,
    pub renormalize_every: usize,
    pub var_tol: f64,
    pub fid_tol: f64,
    pub n_trajectories: usize,
    /// Particle counts visited by the `scaling` command (ignored elsewhere).
    pub scaling_counts: Vec<usize>,
    pub seed: u64,
    pub out: PathBuf,
    /// Whether `fig1` writes the SVG plot next to its CSV.
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Trajectory,
    Ensemble,
    Oracle,
    Born,
    Scaling,
    Fig1,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Trajectory => "trajectory",
            CommandKind::Ensemble => "ensemble",
            CommandKind::Oracle => "oracle",
            CommandKind::Born => "born",
            CommandKind::Scaling => "scaling",
            CommandKind::Fig1 => "fig1",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "trajectory" => CommandKind::Trajectory,
            "ensemble" => CommandKind::Ensemble,
            "oracle" => CommandKind::Oracle,
            "born" => CommandKind::Born,
            "scaling" => CommandKind::Scaling,
            "fig1" => CommandKind::Fig1,
            _ => return None,
        })
    }

    fn default_trajectories(self) -> usize {
        match self {
            CommandKind::Trajectory | CommandKind::Oracle => 1,
            CommandKind::Ensemble => 100,
            CommandKind::Born => 2000,
            CommandKind::Scaling => 500,
            CommandKind::Fig1 => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    PhotonNumber { n_max: usize },
    Dephasing { rate: f64 },
    Localization { particles: usize, coupling: f64, separation: f64 },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::PhotonNumber { .. } => "photon_number",
            ModelKind::Dephasing { .. } => "dephasing",
            ModelKind::Localization { .. } => "localization",
        }
    }

    /// Hilbert-space dimension of the model.
    pub fn dim(&self) -> usize {
        match self {
            ModelKind::PhotonNumber { n_max } => n_max + 1,
            ModelKind::Dephasing { .. } | ModelKind::Localization { .. } => 2,
        }
    }

    /// Default step, horizon, and record stride tuned to the model's own
    /// time scale (collapse rate of order one in every case).
    fn default_grid(&self) -> (f64, f64, usize) {
        match self {
            ModelKind::PhotonNumber { .. } => (1e-4, 8.0, 100),
            ModelKind::Dephasing { .. } => (2e-3, 4.0, 10),
            ModelKind::Localization { .. } => (0.02, 60.0, 5),
        }
    }

    fn default_initial(&self) -> InitialState {
        match self {
            ModelKind::PhotonNumber { .. } => InitialState::Fig1,
            ModelKind::Dephasing { .. } | ModelKind::Localization { .. } => InitialState::Plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Equal superposition of the five odd occupation levels 1,3,5,7,9.
    Fig1,
    /// Equal superposition of the two basis states of a two-level model.
    Plus,
    /// A single basis state.
    Fock(usize),
    /// Explicit amplitude list, stored normalized.
    Custom(Vec<Complex64>),
}

impl InitialState {
    fn emit(&self) -> String {
        match self {
            InitialState::Fig1 => "fig1".into(),
            InitialState::Plus => "plus".into(),
            InitialState::Fock(n) => format!("fock:{n}"),
            InitialState::Custom(amps) => {
                let parts: Vec<String> =
                    amps.iter().map(|a| format!("{}:{}", a.re, a.im)).collect();
                format!("custom:{}", parts.join(","))
            }
        }
    }
}

/// Parses a seed written in decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(text: &str) -> Result<u64, String> {
    let text = text.trim();
    let parsed = if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16)
    } else {
        text.parse::<u64>()
    };
    parsed.map_err(|_| format!("expected a decimal or 0x-hex 64-bit seed, got '{text}'"))
}

/// Splits one `key=value` token, trimming whitespace around both parts.
pub fn parse_pair(token: &str) -> Result<(String, String), String> {
    match token.split_once('=') {
        Some((key, value)) if !key.trim().is_empty() => {
            Ok((key.trim().to_string(), value.trim().to_string()))
        }
        _ => Err(format!("expected key=value, got '{token}'")),
    }
}

/// Parses config-file text: one `key=value` per line, blank lines and
/// `#` comments ignored, later assignments to a key winning.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, Vec<String>> {
    let mut pairs = BTreeMap::new();
    let mut errors = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_pair(line) {
            Ok((key, value)) => {
                pairs.insert(key, value);
            }
            Err(e) => errors.push(format!("line {}: {e}", idx + 1)),
        }
    }
    if errors.is_empty() {
        Ok(pairs)
    } else {
        Err(errors)
    }
}

/// Parses config text into a validated [`RunConfig`]; the command is taken
/// from the `command` key.
#[cfg_attr(not(test), allow(dead_code))]
pub fn parse(text: &str) -> Result<RunConfig, Vec<String>> {
    let pairs = parse_pairs(text)?;
    resolve(None, &pairs, None, None, None)
}

const KNOWN_KEYS: &[&str] = &[
    "command",
    "model",
    "n_max",
    "rate",
    "particles",
    "coupling",
    "separation",
    "initial",
    "dt",
    "t_max",
    "record_stride",
    "renormalize_every",
    "var_tol",
    "fid_tol",
    "n_trajectories",
    "scaling_n",
    "seed",
    "out",
    "svg",
];

/// Field-by-field resolver that keeps going after errors.
struct Resolver<'a> {
    raw: &'a BTreeMap<String, String>,
    errors: Vec<String>,
}

impl<'a> Resolver<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.raw.get(key).map(String::as_str)
    }

    fn fail(&mut self, key: &str, message: impl AsRef<str>) {
        self.errors.push(format!("{key}: {}", message.as_ref()));
    }

    /// Parses `key` with `parse`, falling back to `default` when absent or
    /// malformed (the error is still recorded).
    fn field<T>(
        &mut self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> T {
        match self.get(key) {
            None => default,
            Some(text) => match parse(text) {
                Ok(v) => v,
                Err(e) => {
                    self.fail(key, e);
                    default
                }
            },
        }
    }

    fn forbid(&mut self, key: &str, reason: &str) {
        if self.raw.contains_key(key) {
            self.fail(key, reason);
        }
    }
}

fn parse_positive_f64(text: &str) -> Result<f64, String> {
    let v: f64 = text
        .parse()
        .map_err(|_| format!("expected a number, got '{text}'"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

fn parse_positive_usize(text: &str) -> Result<usize, String> {
    let v: usize = text
        .parse()
        .map_err(|_| format!("expected a positive integer, got '{text}'"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".into())
    }
}

fn parse_bool(text: &str) -> Result<bool, String> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got '{other}'")),
    }
}

fn parse_count_list(text: &str) -> Result<Vec<usize>, String> {
    let counts: Vec<usize> = text
        .split(',')
        .map(|tok| parse_positive_usize(tok.trim()))
        .collect::<Result<_, _>>()?;
    if counts.is_empty() {
        return Err("must list at least one particle count".into());
    }
    let distinct: BTreeSet<usize> = counts.iter().copied().collect();
    if distinct.len() != counts.len() {
        return Err(format!("particle counts must be distinct, got '{text}'"));
    }
    Ok(counts)
}

fn parse_amplitude(token: &str) -> Result<Complex64, String> {
    let (re_text, im_text) = match token.split_once(':') {
        Some((re, im)) => (re, im),
        None => (token, "0"),
    };
    let re: f64 = re_text
        .trim()
        .parse()
        .map_err(|_| format!("bad amplitude '{token}'"))?;
    let im: f64 = im_text
        .trim()
        .parse()
        .map_err(|_| format!("bad amplitude '{token}'"))?;
    if re.is_finite() && im.is_finite() {
        Ok(Complex64::new(re, im))
    } else {
        Err(format!("amplitude must be finite, got '{token}'"))
    }
}

/// Scales the list to unit norm. Lists already normalized within 1e-12 are
/// left untouched so that re-parsing an emitted config is bitwise stable.
pub(crate) fn normalize_amplitudes(amps: &mut [Complex64]) -> Result<(), String> {
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err("amplitude list must not be the zero vector".into());
    }
    if (norm - 1.0).abs() > 1e-12 {
        for a in amps.iter_mut() {
            *a /= norm;
        }
    }
    Ok(())
}

fn parse_initial(text: &str) -> Result<InitialState, String> {
    match text {
        "fig1" => return Ok(InitialState::Fig1),
        "plus" => return Ok(InitialState::Plus),
        _ => {}
    }
    if let Some(n) = text.strip_prefix("fock:") {
        return Ok(InitialState::Fock(
            n.trim()
                .parse()
                .map_err(|_| format!("bad basis-state index '{n}'"))?,
        ));
    }
    if let Some(list) = text.strip_prefix("custom:") {
        let mut amps = list
            .split(',')
            .map(parse_amplitude)
            .collect::<Result<Vec<_>, _>>()?;
        normalize_amplitudes(&mut amps)?;
        return Ok(InitialState::Custom(amps));
    }
    Err(format!(
        "expected fig1, plus, fock:<n>, or custom:<re[:im],...>, got '{text}'"
    ))
}

/// Resolves merged raw pairs into a validated config.
///
/// `command_override` is the subcommand from the command line (it beats any
/// `command` key); `flag_seed` and `flag_out` are the `--seed`/`--out`
/// flags; `env_seed` is the `QSD_SEED` fallback. Seed priority is flag,
/// then config key, then environment, then 0.
pub fn resolve(
    command_override: Option<CommandKind>,
    raw: &BTreeMap<String, String>,
    flag_seed: Option<u64>,
    flag_out: Option<PathBuf>,
    env_seed: Option<u64>,
) -> Result<RunConfig, Vec<String>> {
    let mut r = Resolver { raw, errors: Vec::new() };

    for key in raw.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            r.fail(key, "unknown key");
        }
    }

    let command = match command_override {
        Some(c) => Some(c),
        None => match r.get("command") {
            Some(name) => {
                let parsed = CommandKind::from_name(name);
                if parsed.is_none() {
                    r.fail(
                        "command",
                        format!(
                            "expected trajectory, ensemble, oracle, born, scaling, or fig1, \
                             got '{name}'"
                        ),
                    );
                }
                parsed
            }
            None => {
                r.fail("command", "missing");
                None
            }
        },
    };

    let model = command.and_then(|cmd| resolve_model(&mut r, cmd));

    let initial = match &model {
        Some(m) => r.field("initial", m.default_initial(), parse_initial),
        None => r.field("initial", InitialState::Plus, parse_initial),
    };

    let (default_dt, default_t_max, default_stride) = model
        .as_ref()
        .map(|m| m.default_grid())
        .unwrap_or((1e-3, 1.0, 1));
    let dt = r.field("dt", default_dt, parse_positive_f64);
    let t_max = r.field("t_max", default_t_max, parse_positive_f64);
    if dt.is_finite() && t_max.is_finite() && t_max < dt {
        r.fail("t_max", format!("must be at least dt = {dt}, got {t_max}"));
    }
    let record_stride = r.field("record_stride", default_stride, parse_positive_usize);
    let renormalize_every = r.field("renormalize_every", 1, parse_positive_usize);
    let var_tol = r.field("var_tol", 1e-6, parse_positive_f64);
    let fid_tol = r.field("fid_tol", 1e-6, |text| {
        let v = parse_positive_f64(text)?;
        if v <= 1.0 {
            Ok(v)
        } else {
            Err(format!("must be at most 1, got {v}"))
        }
    });
    let n_trajectories = r.field(
        "n_trajectories",
        command.map_or(1, CommandKind::default_trajectories),
        parse_positive_usize,
    );
    let scaling_counts = r.field("scaling_n", vec![1, 2, 4, 8], parse_count_list);

    let seed = match flag_seed {
        Some(s) => s,
        None => r
            .field("seed", None, |text| parse_seed(text).map(Some))
            .or(env_seed)
            .unwrap_or(0),
    };

    let out = match flag_out {
        Some(dir) => dir,
        None => {
            let text = r.field("out", DEFAULT_OUT_DIR.to_string(), |text| {
                if text.is_empty() {
                    Err("must not be empty".into())
                } else {
                    Ok(text.to_string())
                }
            });
            PathBuf::from(text)
        }
    };

    let svg = r.field("svg", true, parse_bool);

    if let Some(m) = &model {
        validate_initial(&mut r, m, &initial);
    }

    let mut errors = r.errors;
    if let (Some(command), Some(model), true) = (command, model.clone(), errors.is_empty()) {
        let config = RunConfig {
            command,
            model,
            initial,
            dt,
            t_max,
            record_stride,
            renormalize_every,
            var_tol,
            fid_tol,
            n_trajectories,
            scaling_counts,
            seed,
            out,
            svg,
        };
        // Surface model-dependent integrator bounds (the step-size stability
        // limit) at parse time, before any work starts.
        if let Err(e) = config.build_model().and_then(|(model, _)| {
            config.integration_config().and_then(|ic| ic.validate_for(&model))
        }) {
            errors.push(e.to_string());
            return Err(errors);
        }
        return Ok(config);
    }
    Err(errors)
}

fn resolve_model(r: &mut Resolver, command: CommandKind) -> Option<ModelKind> {
    let named = r.get("model");
    let name = match command {
        CommandKind::Fig1 => {
            if let Some(other) = named.filter(|&n| n != "photon_number") {
                r.fail(
                    "model",
                    format!("fig1 always runs the photon_number model, got '{other}'"),
                );
                return None;
            }
            "photon_number"
        }
        CommandKind::Scaling => {
            if let Some(other) = named.filter(|&n| n != "localization") {
                r.fail(
                    "model",
                    format!("scaling always runs the localization model, got '{other}'"),
                );
                return None;
            }
            "localization"
        }
        _ => named.unwrap_or("photon_number"),
    };

    let model = match name {
        "photon_number" => {
            r.forbid("rate", "only meaningful for model=dephasing");
            r.forbid("particles", "only meaningful for model=localization");
            r.forbid("coupling", "only meaningful for model=localization");
            r.forbid("separation", "only meaningful for model=localization");
            let n_max = r.field("n_max", 9, |text| {
                let v = parse_positive_usize(text)?;
                if v <= MAX_N_MAX {
                    Ok(v)
                } else {
                    Err(format!("dense matrices cap the truncation at {MAX_N_MAX}, got {v}"))
                }
            });
            ModelKind::PhotonNumber { n_max }
        }
        "dephasing" => {
            r.forbid("n_max", "only meaningful for model=photon_number");
            r.forbid("particles", "only meaningful for model=localization");
            r.forbid("coupling", "only meaningful for model=localization");
            r.forbid("separation", "only meaningful for model=localization");
            let rate = r.field("rate", 1.0, parse_positive_f64);
            ModelKind::Dephasing { rate }
        }
        "localization" => {
            r.forbid("n_max", "only meaningful for model=photon_number");
            r.forbid("rate", "only meaningful for model=dephasing");
            if command == CommandKind::Scaling {
                r.forbid("particles", "the scaling command takes its counts from scaling_n");
            }
            let particles = r.field("particles", 2, parse_positive_usize);
            let coupling = r.field("coupling", 0.75, parse_positive_f64);
            let separation = r.field("separation", 1.0, parse_positive_f64);
            ModelKind::Localization { particles, coupling, separation }
        }
        other => {
            r.fail(
                "model",
                format!("expected photon_number, dephasing, or localization, got '{other}'"),
            );
            return None;
        }
    };
    Some(model)
}

fn validate_initial(r: &mut Resolver, model: &ModelKind, initial: &InitialState) {
    let dim = model.dim();
    match initial {
        InitialState::Fig1 => match model {
            ModelKind::PhotonNumber { n_max } if *n_max >= 9 => {}
            ModelKind::PhotonNumber { n_max } => r.fail(
                "initial",
                format!("fig1 occupies levels up to 9 and needs n_max >= 9, got {n_max}"),
            ),
            _ => r.fail("initial", "fig1 requires the photon_number model"),
        },
        InitialState::Plus => {
            if dim != 2 {
                r.fail(
                    "initial",
                    format!("plus is defined for two-level models, this one has dimension {dim}"),
                );
            }
        }
        InitialState::Fock(n) => {
            if *n >= dim {
                r.fail(
                    "initial",
                    format!("basis state {n} out of range for dimension {dim}"),
                );
            }
        }
        InitialState::Custom(amps) => {
            if amps.len() != dim {
                r.fail(
                    "initial",
                    format!("expected {dim} amplitudes, got {}", amps.len()),
                );
            }
        }
    }
}

impl RunConfig {
    /// The resolved state as ordered `(key, value)` pairs; parsing them back
    /// reproduces this config exactly.
    pub fn emit_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = vec![
            ("command".into(), self.command.name().into()),
            ("model".into(), self.model.name().into()),
        ];
        match &self.model {
            ModelKind::PhotonNumber { n_max } => pairs.push(("n_max".into(), n_max.to_string())),
            ModelKind::Dephasing { rate } => pairs.push(("rate".into(), rate.to_string())),
            ModelKind::Localization { particles, coupling, separation } => {
                if self.command != CommandKind::Scaling {
                    pairs.push(("particles".into(), particles.to_string()));
                }
                pairs.push(("coupling".into(), coupling.to_string()));
                pairs.push(("separation".into(), separation.to_string()));
            }
        }
        pairs.push(("initial".into(), self.initial.emit()));
        pairs.push(("dt".into(), self.dt.to_string()));
        pairs.push(("t_max".into(), self.t_max.to_string()));
        pairs.push(("record_stride".into(), self.record_stride.to_string()));
        pairs.push(("renormalize_every".into(), self.renormalize_every.to_string()));
        pairs.push(("var_tol".into(), self.var_tol.to_string()));
        pairs.push(("fid_tol".into(), self.fid_tol.to_string()));
        pairs.push(("n_trajectories".into(), self.n_trajectories.to_string()));
        let counts: Vec<String> = self.scaling_counts.iter().map(usize::to_string).collect();
        pairs.push(("scaling_n".into(), counts.join(",")));
        pairs.push(("seed".into(), self.seed.to_string()));
        pairs.push(("out".into(), self.out.to_string_lossy().into_owned()));
        pairs.push(("svg".into(), self.svg.to_string()));
        pairs
    }

    /// Renders the config in the flat `key=value` file format.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn emit(&self) -> String {
        let mut text = String::new();
        for (key, value) in self.emit_pairs() {
            text.push_str(&key);
            text.push('=');
            text.push_str(&value);
            text.push('\n');
        }
        text
    }

    /// Builds the model operators and the initial state.
    pub fn build_model(&self) -> qsd_core::Result<(ModelSpec, StateVector)> {
        let model = match &self.model {
            ModelKind::PhotonNumber { n_max } => build_photon_number_model(*n_max)?,
            ModelKind::Dephasing { rate } => build_dephasing_qubit(*rate)?,
            ModelKind::Localization { particles, coupling, separation } => {
                let chain = LocalizationChain {
                    n_particles: *particles,
                    coupling: *coupling,
                    branch_separation: *separation,
                };
                build_localization_model(&chain)?.0
            }
        };
        let dim = model.dim();
        let state = match &self.initial {
            InitialState::Fig1 => match &self.model {
                ModelKind::PhotonNumber { n_max } => fig1_initial_state(*n_max)?,
                _ => {
                    return Err(qsd_core::Error::Argument(
                        "fig1 initial state requires the photon_number model".into(),
                    ))
                }
            },
            InitialState::Plus => {
                // Same path as custom amplitudes so that `plus` and
                // `custom:1,1` produce bitwise-identical states.
                let mut amps = vec![Complex64::new(1.0, 0.0); 2];
                normalize_amplitudes(&mut amps).map_err(qsd_core::Error::Argument)?;
                StateVector::new(amps)?
            }
            InitialState::Fock(n) => StateVector::basis_state(dim, *n)?,
            InitialState::Custom(amps) => StateVector::new(amps.clone())?,
        };
        Ok((model, state))
    }

    /// Builds the integrator settings carried by this config. Commands
    /// adjust the early-stop flag to their own needs afterwards.
    pub fn integration_config(&self) -> qsd_core::Result<IntegrationConfig> {
        Ok(IntegrationConfig::new(self.dt, self.t_max)?
            .with_record_stride(self.record_stride)
            .with_renormalize_every(self.renormalize_every)
            .with_tolerances(self.var_tol, self.fid_tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn resolve_bare(command: CommandKind) -> RunConfig {
        resolve(Some(command), &BTreeMap::new(), None, None, None).unwrap()
    }

    fn resolve_with(
        command: CommandKind,
        pairs: &[(&str, &str)],
    ) -> Result<RunConfig, Vec<String>> {
        let raw: BTreeMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        resolve(Some(command), &raw, None, None, None)
    }

    #[test]
    fn fig1_defaults_pick_the_demo_model_and_a_stable_step() {
        let config = resolve_bare(CommandKind::Fig1);
        assert_eq!(config.model, ModelKind::PhotonNumber { n_max: 9 });
        assert_eq!(config.initial, InitialState::Fig1);
        assert_eq!(config.n_trajectories, 5);
        // Largest squared channel norm for the demo model is 81; the step
        // must keep dt times that within the stability budget.
        assert!(config.dt * 81.0 <= 0.01 + 1e-15);
        assert_eq!(config.seed, 0);
        assert_eq!(config.out, PathBuf::from(DEFAULT_OUT_DIR));
    }

    #[test]
    fn per_model_grid_defaults_apply() {
        let d = resolve_with(CommandKind::Trajectory, &[("model", "dephasing")]).unwrap();
        assert_eq!((d.dt, d.t_max, d.record_stride), (2e-3, 4.0, 10));
        assert_eq!(d.initial, InitialState::Plus);
        let l = resolve_with(CommandKind::Trajectory, &[("model", "localization")]).unwrap();
        assert_eq!((l.dt, l.t_max, l.record_stride), (0.02, 60.0, 5));
        assert_eq!(
            l.model,
            ModelKind::Localization { particles: 2, coupling: 0.75, separation: 1.0 }
        );
        let s = resolve_bare(CommandKind::Scaling);
        assert_eq!(s.scaling_counts, vec![1, 2, 4, 8]);
        assert_eq!(s.n_trajectories, 500);
        assert_eq!(resolve_bare(CommandKind::Born).n_trajectories, 2000);
    }

    #[test]
    fn negative_dt_is_rejected_by_name() {
        let errs = resolve_with(CommandKind::Trajectory, &[("dt", "-0.1")]).unwrap_err();
        assert!(errs.iter().any(|e| e.starts_with("dt:")), "{errs:?}");
    }

    #[test]
    fn all_problems_are_reported_together() {
        let errs = resolve_with(
            CommandKind::Trajectory,
            &[("dt", "-1"), ("record_stride", "0"), ("bogus", "3"), ("svg", "maybe")],
        )
        .unwrap_err();
        for needle in ["dt:", "record_stride:", "bogus:", "svg:"] {
            assert!(errs.iter().any(|e| e.starts_with(needle)), "{needle} missing in {errs:?}");
        }
    }

    #[test]
    fn custom_amplitudes_are_normalized_once() {
        let config = resolve_with(
            CommandKind::Trajectory,
            &[("model", "dephasing"), ("initial", "custom:1,1")],
        )
        .unwrap();
        let InitialState::Custom(amps) = &config.initial else { panic!() };
        let expected = std::f64::consts::FRAC_1_SQRT_2;
        assert!((amps[0].re - expected).abs() < 1e-15);
        assert!((amps[1].re - expected).abs() < 1e-15);
        // Zero vector is refused.
        let errs = resolve_with(
            CommandKind::Trajectory,
            &[("model", "dephasing"), ("initial", "custom:0,0")],
        )
        .unwrap_err();
        assert!(errs.iter().any(|e| e.contains("zero vector")), "{errs:?}");
    }

    #[test]
    fn model_parameter_keys_must_match_the_model() {
        let errs =
            resolve_with(CommandKind::Trajectory, &[("rate", "2.0")]).unwrap_err();
        assert!(errs.iter().any(|e| e.starts_with("rate:")), "{errs:?}");
        let errs = resolve_with(CommandKind::Scaling, &[("particles", "3")]).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("scaling_n")), "{errs:?}");
        let errs = resolve_with(CommandKind::Fig1, &[("model", "dephasing")]).unwrap_err();
        assert!(errs.iter().any(|e| e.starts_with("model:")), "{errs:?}");
    }

    #[test]
    fn oversized_step_is_rejected_before_any_work() {
        // 81 * 0.01 = 0.81 breaks the stability bound for the demo model.
        let errs = resolve_with(CommandKind::Trajectory, &[("dt", "0.01")]).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("dt")), "{errs:?}");
    }

    #[test]
    fn seeds_parse_in_decimal_and_hex() {
        assert_eq!(parse_seed("42").unwrap(), 42);
        assert_eq!(parse_seed("0x2A").unwrap(), 42);
        assert_eq!(parse_seed("0X2a").unwrap(), 42);
        assert!(parse_seed("-3").is_err());
        assert!(parse_seed("0xZZ").is_err());
    }

    #[test]
    fn seed_priority_is_flag_then_config_then_env() {
        let raw: BTreeMap<String, String> =
            [("seed".to_string(), "3".to_string())].into_iter().collect();
        let flag = resolve(Some(CommandKind::Trajectory), &raw, Some(7), None, Some(5)).unwrap();
        assert_eq!(flag.seed, 7);
        let cfg = resolve(Some(CommandKind::Trajectory), &raw, None, None, Some(5)).unwrap();
        assert_eq!(cfg.seed, 3);
        let env =
            resolve(Some(CommandKind::Trajectory), &BTreeMap::new(), None, None, Some(5)).unwrap();
        assert_eq!(env.seed, 5);
        assert_eq!(resolve_bare(CommandKind::Trajectory).seed, 0);
    }

    #[test]
    fn emitted_configs_parse_back_identically() {
        let samples = [
            resolve_bare(CommandKind::Fig1),
            resolve_bare(CommandKind::Scaling),
            resolve_with(
                CommandKind::Born,
                &[("n_trajectories", "250"), ("seed", "0xFF"), ("t_max", "6.5")],
            )
            .unwrap(),
            resolve_with(
                CommandKind::Trajectory,
                &[
                    ("model", "dephasing"),
                    ("rate", "2.5"),
                    ("initial", "custom:0.6,0:0.8"),
                    ("svg", "false"),
                ],
            )
            .unwrap(),
            resolve_with(
                CommandKind::Ensemble,
                &[("model", "localization"), ("particles", "3"), ("coupling", "0.5")],
            )
            .unwrap(),
        ];
        for config in samples {
            let round = parse(&config.emit()).unwrap();
            assert_eq!(round, config, "emit:\n{}", config.emit());
        }
    }

    #[test]
    fn config_file_text_supports_comments_and_later_wins() {
        let text = "# demo\nmodel=dephasing\n\nrate = 2.0\nrate = 3.0\n";
        let pairs = parse_pairs(text).unwrap();
        assert_eq!(pairs.get("rate").unwrap(), "3.0");
        let errs = parse_pairs("rate\n=5\n").unwrap_err();
        assert_eq!(errs.len(), 2);
        assert!(errs[0].starts_with("line 1:"), "{errs:?}");
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        let command = prop_oneof![
            Just(CommandKind::Trajectory),
            Just(CommandKind::Ensemble),
            Just(CommandKind::Oracle),
            Just(CommandKind::Born),
            Just(CommandKind::Fig1),
            Just(CommandKind::Scaling),
        ];
        (
            command,
            0.05f64..2.0,
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2),
            1u64..u64::MAX,
            1usize..2000,
            0.2f64..0.9,
        )
            .prop_filter_map(
                "zero custom vector",
                |(command, rate, amps, seed, n_trajectories, fid_tol)| {
                    let model = match command {
                        CommandKind::Fig1 => ModelKind::PhotonNumber { n_max: 9 },
                        CommandKind::Scaling => ModelKind::Localization {
                            particles: 2,
                            coupling: rate,
                            separation: 1.0,
                        },
                        _ => ModelKind::Dephasing { rate },
                    };
                    let initial = match model {
                        ModelKind::Dephasing { .. } => {
                            let mut amps: Vec<Complex64> = amps
                                .iter()
                                .map(|&(re, im)| Complex64::new(re, im))
                                .collect();
                            normalize_amplitudes(&mut amps).ok()?;
                            InitialState::Custom(amps)
                        }
                        _ => model.default_initial(),
                    };
                    let (dt, t_max, record_stride) = model.default_grid();
                    Some(RunConfig {
                        command,
                        model,
                        initial,
                        dt,
                        t_max,
                        record_stride,
                        renormalize_every: 1,
                        var_tol: 1e-6,
                        fid_tol,
                        n_trajectories,
                        scaling_counts: vec![1, 2, 4, 8],
                        seed,
                        out: PathBuf::from(DEFAULT_OUT_DIR),
                        svg: true,
                    })
                },
            )
    }

    proptest! {
        #[test]
        fn round_trip_holds_for_arbitrary_valid_configs(config in arb_config()) {
            let round = parse(&config.emit());
            prop_assert!(round.is_ok(), "{:?} for\n{}", round.err(), config.emit());
            prop_assert_eq!(round.unwrap(), config);
        }
    }
}

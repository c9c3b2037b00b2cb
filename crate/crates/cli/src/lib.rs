//! Batch front end: one subcommand per pipeline, one JSON report per run.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use gdform_core::criteria::{build_chi_sequence, energy_of_chi, witness_energy, Verdict};
use gdform_core::lab::{run_lab, LabConfig};
use gdform_core::model::{builtin_config, validate_model};
use gdform_core::montecarlo::{
    derive_sde, ensemble_csv, lifetime_statistics, recurrence_statistics, simulate, step_halving_check, Ball,
    SimConfig,
};
use gdform_core::pipeline::{classify, ClassifyConfig};
use gdform_core::quadrature::QuadConfig;
use gdform_core::volume_growth::{build_profiles, compute_a, VolumeConfig};
use gdform_core::{Error, ModelConfig, ModelSpec};

pub const TOOL: &str = "gdform";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    pub fn code(&self) -> String {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Io(_) => "cli.Io".into(),
            CliError::Config(_) => "cli.Config".into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gdform", version, about = "Recurrence and transience tests for weighted divergence-form diffusions with drift")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate, build profiles, run every criterion and merge the verdicts.
    Classify(Common),
    /// Volume-growth profiles v1, v2, v and the sequence a_n.
    Volume(Common),
    /// Cutoff sequence χ_n with measured energies against their bounds.
    Chi(Common),
    /// Finite-grid generator checks.
    Lab(Common),
    /// Euler–Maruyama ensemble with hitting and lifetime statistics.
    Simulate(Common),
    /// Model validation only.
    Validate(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify(_) => "classify",
            Command::Volume(_) => "volume",
            Command::Chi(_) => "chi",
            Command::Lab(_) => "lab",
            Command::Simulate(_) => "simulate",
            Command::Validate(_) => "validate",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Classify(c)
            | Command::Volume(c)
            | Command::Chi(c)
            | Command::Lab(c)
            | Command::Simulate(c)
            | Command::Validate(c) => c,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Builtin model name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub builtin: Option<String>,
    /// Model config file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Builtin parameter override, KEY=VALUE.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Validation tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e4)]
    pub rmax: f64,
    /// Declare strict irreducibility.
    #[arg(long)]
    pub irreducible: bool,
    /// Omit the timestamp so reruns are byte-identical.
    #[arg(long)]
    pub fixed_clock: bool,
    /// Profile radii (classify, volume, chi) or cells per axis (lab).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Comma-separated n values (volume, chi).
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<f64>,
    /// Worker threads; 1 gives a single-threaded run.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Start point, comma-separated (simulate).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Vec<f64>,
    #[arg(long, default_value_t = 100.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    /// Target ball center, comma-separated (simulate; defaults to the origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub target: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Ladder of window starts t (simulate).
    #[arg(long, value_delimiter = ',')]
    pub ladder: Vec<f64>,
    /// Also rerun with dt/2 and flag shifts above 3σ (simulate).
    #[arg(long)]
    pub halving: bool,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn load_model(c: &Common) -> Result<ModelSpec, CliError> {
    let mut cfg: ModelConfig = match (&c.builtin, &c.config) {
        (Some(name), None) => {
            let p: BTreeMap<String, f64> = c.params.iter().cloned().collect();
            builtin_config(name, &p).map_err(Error::from)?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        _ => return Err(CliError::Config("give exactly one of --builtin and --config".into())),
    };
    if c.config.is_some() {
        cfg.params.extend(c.params.iter().cloned());
    }
    Ok(ModelSpec::from_config(cfg).map_err(Error::from)?)
}

fn check_settings(c: &Common) -> Result<(), CliError> {
    for (name, v) in [("tol", c.tol), ("rmax", c.rmax), ("horizon", c.horizon), ("dt", c.dt)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("--{name} must be positive (got {v})")));
        }
    }
    if !(c.radius >= 0.0) {
        return Err(CliError::Config("--radius must be nonnegative".into()));
    }
    if c.n_list.iter().any(|n| !(*n >= 1.0)) {
        return Err(CliError::Config("--n-list entries must be >= 1".into()));
    }
    Ok(())
}

/// sha256 over the model config and the run settings, as canonical JSON.
pub fn config_hash(model: &ModelConfig, command: &str, settings: &Value) -> String {
    let canon = json!({"model": model, "command": command, "settings": settings});
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&canon).expect("config serializes"));
    format!("{:x}", h.finalize())
}

/// Envelope shared by every command.
#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub model: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    pub settings: Value,
    pub result: Value,
    pub exit_code: i32,
}

pub struct Outcome {
    pub report: Report,
    /// extra files (name, contents) written next to report.json
    pub files: Vec<(String, String)>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Runs one command and writes its files into `--out`; returns the exit code.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let c = cli.command.common();
    check_settings(c)?;
    let model = load_model(c)?;
    let threads = c.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (result, files, exit_code, settings) = pool.install(|| dispatch(&cli.command, c, &model))?;
    let settings_v = to_value(&settings);
    let report = Report {
        tool: TOOL,
        version: VERSION,
        command: cli.command.name().to_string(),
        model: model.name().to_string(),
        config_hash: config_hash(&model.config, cli.command.name(), &settings_v),
        generated_at: if c.fixed_clock {
            None
        } else {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs())
        },
        settings: settings_v,
        result,
        exit_code,
    };
    Ok(Outcome { report, files })
}

type Dispatched = (Value, Vec<(String, String)>, i32, Value);

fn dispatch(cmd: &Command, c: &Common, model: &ModelSpec) -> Result<Dispatched, CliError> {
    match cmd {
        Command::Classify(_) => {
            let cfg = ClassifyConfig {
                r_max: c.rmax,
                grid: c.grid.unwrap_or(121),
                irreducible: c.irreducible,
                tol: c.tol,
                ..Default::default()
            };
            let (rep, profiles) = classify(model, &cfg).map_err(CliError::Core)?;
            let code = if rep.classification.verdict == Verdict::Inconclusive { 2 } else { 0 };
            Ok((to_value(&rep), vec![("profiles.csv".into(), profiles.to_csv())], code, to_value(&cfg)))
        }
        Command::Volume(_) => {
            let grid = c.grid.unwrap_or(121);
            let profiles = build_profiles(model, c.rmax, grid, &VolumeConfig::default()).map_err(Error::from)?;
            let ns: Vec<f64> = if c.n_list.is_empty() {
                profiles.v.radii.iter().copied().filter(|r| *r >= 1.0).collect()
            } else {
                c.n_list.clone()
            };
            let a = compute_a(&profiles.v, &ns, &QuadConfig::default()).map_err(Error::from)?;
            let result = json!({"a": a, "v_at_1": profiles.v.eval(1.0).ok()});
            let settings = json!({"rmax": c.rmax, "grid": grid, "n_list": ns});
            Ok((result, vec![("profiles.csv".into(), profiles.to_csv())], 0, settings))
        }
        Command::Chi(_) => {
            let ns = if c.n_list.is_empty() { vec![10.0, 100.0, 1e3, 1e4] } else { c.n_list.clone() };
            let r_max = ns.iter().cloned().fold(c.rmax, f64::max);
            let grid = c.grid.unwrap_or(121);
            let vc = VolumeConfig::default();
            let profiles = build_profiles(model, r_max, grid, &vc).map_err(Error::from)?;
            let a = compute_a(&profiles.v, &ns, &QuadConfig::default()).map_err(Error::from)?;
            let mut chi = build_chi_sequence(&profiles.v, &profiles.v2, &a, &ns).map_err(Error::from)?;
            let mut energies = Vec::new();
            let mut witnesses = Vec::new();
            for &n in &ns {
                energies.push(energy_of_chi(model, &mut chi, n, 0.01, &vc).map_err(Error::from)?);
                witnesses.push(witness_energy(model, n, &vc).map_err(Error::from)?);
            }
            let result = json!({"sequence": chi.entries, "energies": energies, "witness": witnesses});
            let settings = json!({"rmax": r_max, "grid": grid, "n_list": ns, "bound_margin": 0.01});
            Ok((result, vec![("profiles.csv".into(), profiles.to_csv())], 0, settings))
        }
        Command::Lab(_) => {
            let cfg = LabConfig {
                cells: c.grid.unwrap_or(400),
                seed: c.seed,
                ..Default::default()
            };
            let rep = run_lab(model, &cfg).map_err(Error::from)?;
            let mut result = to_value(&rep);
            result["failures"] = to_value(&rep.failures());
            let code = if rep.passed() { 0 } else { 1 };
            Ok((result, Vec::new(), code, to_value(&cfg)))
        }
        Command::Simulate(_) => {
            let d = model.dim;
            let x0 = if c.x0.is_empty() { vec![0.0; d] } else { c.x0.clone() };
            let center = if c.target.is_empty() { vec![0.0; d] } else { c.target.clone() };
            let sde = derive_sde(model).map_err(Error::from)?;
            let cfg = SimConfig {
                x0,
                horizon: c.horizon,
                dt: c.dt,
                n_paths: c.paths,
                seed: c.seed,
                target: Ball { center, radius: c.radius },
                ..Default::default()
            };
            let ladder = if c.ladder.is_empty() {
                [0.0, 1e-3, 1e-2, 1e-1].iter().map(|f| f * c.horizon).collect()
            } else {
                c.ladder.clone()
            };
            let ens = simulate(&sde, &cfg).map_err(Error::from)?;
            let rec = recurrence_statistics(&ens, &ladder).map_err(Error::from)?;
            let life = lifetime_statistics(&ens);
            let halving = if c.halving {
                Some(step_halving_check(&sde, &cfg, &ladder).map_err(Error::from)?)
            } else {
                None
            };
            // digest of every per-path record (hit, exit and explosion flags included)
            let mut h = Sha256::new();
            h.update(serde_json::to_vec(&ens.paths).expect("paths serialize"));
            let result = json!({
                "recurrence": rec,
                "lifetime": life,
                "step_halving": halving,
                "path_digest": format!("{:x}", h.finalize()),
            });
            let mut settings = to_value(&cfg);
            settings["ladder"] = to_value(&ladder);
            Ok((result, vec![("ensemble.csv".into(), ensemble_csv(&rec))], 0, settings))
        }
        Command::Validate(_) => {
            let rep = validate_model(model, 8, c.tol).map_err(Error::from)?;
            let code = if rep.divergence_free() { 0 } else { 2 };
            Ok((to_value(&rep), Vec::new(), code, json!({"tol": c.tol, "n_test_functions": 8})))
        }
    }
}

/// Writes report.json and the extra files into `dir`.
pub fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    for (name, body) in &outcome.files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Parses, runs and writes; prints errors with their module code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let out = cli.command.common().out.clone();
    match run(&cli).and_then(|o| write_outputs(&out, &o).map(|_| o)) {
        Ok(o) => {
            println!("{} -> {}", o.report.command, out.join("report.json").display());
            o.report.exit_code
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            1
        }
    }
}

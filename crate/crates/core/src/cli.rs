//! `servosim` command-line front end.
//!
//! Every flag may also be given in a TOML file passed with `--config`, using
//! the flag name as key (`budget = 4000`, `velocity-levels = "0,1,2"`).
//! Flags override file values; unknown keys are rejected.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::actuator::ActuatorModel;
use crate::dataset::{
    split_logs, synthesize_family, Family, Manifest, ManifestEntry, SynthOptions, TrajectoryLog,
    TrajectoryType, LOG_EXTENSION, LOG_VERSION,
};
use crate::error::{Error, Result};
use crate::friction::{FrictionParams, ModelTag};
use crate::ident::{
    comparison_table, identify_with_progress, BudgetKind, IdentResult, IdentifyOptions,
    MotorOverride, ParamSpace, DEFAULT_BUDGET,
};
use crate::sim::{diagram, diagram_to_csv, rollout, SimState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const DEFAULT_NOISE: f64 = 0.002;

#[derive(Debug, Parser)]
#[command(name = "servosim", version, about = "Servo friction models: synthesize, identify, simulate, diagram")]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a family dataset: one log per configuration and trajectory type.
    Synth(SynthArgs),
    /// Split a dataset, identify one or more models and score them on held-out logs.
    Identify(IdentifyArgs),
    /// Replay a log with given parameters and write simulated vs measured angles.
    Simulate(SimulateArgs),
    /// Tabulate drive/backdrive static boundaries.
    Diagram(DiagramArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Preset family: dynamixel or erob.
    #[arg(long)]
    pub family: Option<String>,
    /// Comma-separated trajectory types, or "all".
    #[arg(long)]
    pub types: Option<String>,
    /// Measurement noise standard deviation (rad).
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Log duration (s).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Friction parameters to synthesize with instead of the family ground truth.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated model tags (M1..M6), or "all".
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// What the budget counts: evaluations or generations.
    #[arg(long)]
    pub budget_kind: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also fit k_t, R and J_m.
    #[arg(long)]
    pub fit_motor: bool,
    /// Print the best cost of every generation to stderr.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Trajectory log to replay.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Friction parameter file or identification report.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Expected model tag of the parameters.
    #[arg(long)]
    pub model: Option<String>,
    /// Output series file (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagramArgs {
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Motor torque grid as MIN:MAX:COUNT.
    #[arg(long, allow_hyphen_values = true)]
    pub tau_m_range: Option<String>,
    /// Comma-separated velocity levels (rad/s).
    #[arg(long)]
    pub velocity_levels: Option<String>,
    /// Output table file (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Values read from `--config`; keys mirror the flag names.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub family: Option<String>,
    pub types: Option<String>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub duration: Option<f64>,
    pub manifest: Option<PathBuf>,
    pub model: Option<String>,
    pub budget: Option<usize>,
    pub budget_kind: Option<String>,
    pub fit_motor: Option<bool>,
    pub progress: Option<bool>,
    pub log: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub tau_m_range: Option<String>,
    pub velocity_levels: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("--{name} is required")))
}

/// Map an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Data(_) | Error::Io { .. } | Error::Json(_) => EXIT_DATA,
        Error::Domain(_) | Error::RangeExhausted { .. } => EXIT_NUMERIC,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

fn execute(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(a, config),
        Command::Identify(a) => cmd_identify(a, config),
        Command::Simulate(a) => cmd_simulate(a, config),
        Command::Diagram(a) => cmd_diagram(a, config),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_types(text: &str) -> Result<Vec<TrajectoryType>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(TrajectoryType::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let t: TrajectoryType = part.parse()?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no trajectory types given".into()));
    }
    Ok(out)
}

pub fn parse_models(text: &str) -> Result<Vec<ModelTag>> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelTag::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: ModelTag = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no model tags given".into()));
    }
    Ok(out)
}

/// `MIN:MAX:COUNT` into an evenly spaced grid.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("expected MIN:MAX:COUNT, got '{text}'"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) || n == 0 || (n == 1 && lo != hi) || lo > hi {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

pub fn parse_levels(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("bad velocity level '{s}'")))
        })
        .collect()
}

/// Parameters read from a `--params` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub friction: FrictionParams,
    pub motor: Option<MotorOverride>,
    /// Replaces the actuator of the replayed log when present.
    pub actuator: Option<ActuatorModel>,
}

/// Read either a friction parameter document (optionally with an
/// `actuator` section) or an identification report.
pub fn load_params(path: &Path) -> Result<ParamsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |e: serde_json::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut value: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(malformed)?;
    if value.contains_key("space") && value.contains_key("friction") {
        let report: IdentResult = serde_json::from_value(value.into()).map_err(malformed)?;
        return Ok(ParamsFile {
            friction: report.friction,
            motor: report.motor,
            actuator: None,
        });
    }
    let actuator = value
        .remove("actuator")
        .map(serde_json::from_value::<ActuatorModel>)
        .transpose()
        .map_err(malformed)?;
    let friction: FrictionParams = serde_json::from_value(value.into()).map_err(malformed)?;
    friction
        .validate()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(ParamsFile {
        friction,
        motor: None,
        actuator,
    })
}

fn cmd_synth(a: SynthArgs, c: RunConfig) -> Result<()> {
    let family: Family = required(pick(a.family, c.family), "family")?
        .parse()
        ?;
    let types = parse_types(&pick(a.types, c.types).unwrap_or_else(|| "all".into()))?;
    let noise = pick(a.noise, c.noise).unwrap_or(DEFAULT_NOISE);
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("--noise must be >= 0, got {noise}")));
    }
    let seed = pick(a.seed, c.seed).unwrap_or(0);
    let out = pick(a.out, c.out).unwrap_or_else(|| PathBuf::from("data"));
    let mut options = SynthOptions::new(family);
    options.types = types;
    options.noise_std = noise;
    options.seed = seed;
    options.duration = pick(a.duration, c.duration);
    if let Some(p) = pick(a.params, c.params) {
        options.truth = Some(load_params(&p)?.friction);
    }

    let logs = synthesize_family(&options)?;
    create_dir(&out)?;
    let mut entries = Vec::with_capacity(logs.len());
    for log in &logs {
        let file = format!("{}.{LOG_EXTENSION}", log.id());
        log.save(out.join(&file))?;
        entries.push(ManifestEntry {
            id: log.id().to_string(),
            file,
            trajectory: log.header.trajectory,
        });
    }
    let manifest = Manifest {
        version: LOG_VERSION,
        family: Some(family),
        seed: Some(seed),
        noise: Some(noise),
        logs: entries,
    };
    let manifest_path = out.join(Manifest::FILE_NAME);
    manifest.save(&manifest_path)?;
    println!("wrote {} logs and {}", logs.len(), manifest_path.display());
    Ok(())
}

fn cmd_identify(a: IdentifyArgs, c: RunConfig) -> Result<()> {
    let manifest_path = required(pick(a.manifest, c.manifest), "manifest")?;
    let models = parse_models(&pick(a.model, c.model).unwrap_or_else(|| "all".into()))?;
    let budget_kind: BudgetKind = match pick(a.budget_kind, c.budget_kind) {
        Some(s) => s.parse()?,
        None => BudgetKind::Evaluations,
    };
    let options = IdentifyOptions {
        budget: pick(a.budget, c.budget).unwrap_or(DEFAULT_BUDGET),
        budget_kind,
        seed: pick(a.seed, c.seed).unwrap_or(0),
        ..IdentifyOptions::default()
    };
    let fit_motor = a.fit_motor || c.fit_motor.unwrap_or(false);
    let progress = a.progress || c.progress.unwrap_or(false);
    let out = pick(a.out, c.out).unwrap_or_else(|| PathBuf::from("results"));

    let manifest = Manifest::load(&manifest_path)?;
    let logs = manifest.load_logs(&manifest_path)?;
    let split = split_logs(&logs, options.seed)?;
    let (ident, validation) = split.apply(&logs);
    create_dir(&out)?;
    write_file(&out.join("split.json"), &(serde_json::to_string_pretty(&split)? + "\n"))?;

    let mut results = Vec::with_capacity(models.len());
    for model in models {
        let space = ParamSpace::new(model, fit_motor);
        let mut result = identify_with_progress(&ident, &space, &options, |generation, best| {
            if progress {
                eprintln!("{model} generation {generation} best {best:.6e}");
            }
        })?;
        let val = result.validate_on(&validation)?;
        println!("{model} validation MAE {val:.6e} rad");
        result.save(out.join(format!("ident_{model}.json")))?;
        let mut trace = String::from("generation,best_cost\n");
        for (g, v) in result.trace.iter().enumerate() {
            let _ = writeln!(trace, "{},{v}", g + 1);
        }
        write_file(&out.join(format!("trace_{model}.csv")), &trace)?;
        results.push(result);
    }
    let table = comparison_table(&results);
    write_file(&out.join("comparison.tsv"), &table)?;
    print!("{table}");
    let _ = std::io::stdout().flush();
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, c: RunConfig) -> Result<()> {
    let log_path = required(pick(a.log, c.log), "log")?;
    let params_path = required(pick(a.params, c.params), "params")?;
    let out = pick(a.out, c.out).unwrap_or_else(|| PathBuf::from("simulated.csv"));
    let log = TrajectoryLog::load(&log_path)?;
    let params = load_params(&params_path)?;
    if let Some(expected) = pick(a.model, c.model) {
        let expected: ModelTag = expected.parse()?;
        if expected != params.friction.tag() {
            return Err(Error::Data(format!(
                "{}: parameters are {}, expected {expected}",
                params_path.display(),
                params.friction.tag()
            )));
        }
    }
    let mut actuator = params.actuator.unwrap_or(log.header.actuator);
    if let Some(m) = &params.motor {
        actuator = m.apply(&actuator);
    }
    let measured = log.measured();
    let targets = log.targets();
    let sim = rollout(
        &log.header.bench,
        &actuator,
        &params.friction,
        SimState::at_rest(measured[0]),
        &targets,
    )?;
    if sim.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("simulation of {} diverged", log.id())));
    }

    let mut text = String::from("t,target,measured,simulated,error\n");
    let mut total = 0.0;
    for (i, s) in log.samples.iter().enumerate() {
        let err = s.measured - sim.theta[i];
        total += err.abs();
        let target = s.target.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(text, "{},{target},{},{},{err}", s.t, s.measured, sim.theta[i]);
    }
    write_file(&out, &text)?;
    let mae = total / log.samples.len() as f64;
    println!("{} MAE {mae} rad", log.id());
    Ok(())
}

fn cmd_diagram(a: DiagramArgs, c: RunConfig) -> Result<()> {
    let params_path = required(pick(a.params, c.params), "params")?;
    let grid = parse_range(&pick(a.tau_m_range, c.tau_m_range).unwrap_or_else(|| "-2:2:41".into()))?;
    let levels = parse_levels(&pick(a.velocity_levels, c.velocity_levels).unwrap_or_else(|| "0".into()))?;
    let out = pick(a.out, c.out).unwrap_or_else(|| PathBuf::from("diagram.csv"));
    let params = load_params(&params_path)?;
    let rows = diagram(&params.friction, &grid, &levels)?;
    write_file(&out, &diagram_to_csv(&rows))?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

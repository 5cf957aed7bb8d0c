//! Trajectory logs: excitation profiles, the on-disk log format, synthetic
//! log generation from the bench presets, and identification/validation
//! splits.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorModel, ControlLaw, MotorElectrical, PidGains};
use crate::error::{Error, Result};
use crate::friction::FrictionParams;
use crate::sim::{rollout, BenchConfig, SimState};

pub const LOG_FORMAT: &str = "servosim-log";
pub const LOG_VERSION: u32 = 1;
/// Angle reference recorded in every log header.
pub const ANGLE_ZERO: &str = "upward";
pub const LOG_EXTENSION: &str = "log.json";

/// Fraction of logs held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryType {
    AcceleratedOscillations,
    SlowWithSubOscillations,
    RaiseLower,
    LiftDrop,
}

impl TrajectoryType {
    pub const ALL: [TrajectoryType; 4] = [
        TrajectoryType::AcceleratedOscillations,
        TrajectoryType::SlowWithSubOscillations,
        TrajectoryType::RaiseLower,
        TrajectoryType::LiftDrop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryType::AcceleratedOscillations => "accelerated-oscillations",
            TrajectoryType::SlowWithSubOscillations => "slow-with-sub-oscillations",
            TrajectoryType::RaiseLower => "raise-lower",
            TrajectoryType::LiftDrop => "lift-drop",
        }
    }
}

impl fmt::Display for TrajectoryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrajectoryType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrajectoryType::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown trajectory type '{s}'")))
    }
}

/// Constant-amplitude chirp with linearly increasing frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpParams {
    pub amplitude: f64,
    pub f_start: f64,
    pub f_end: f64,
}

/// Slow sinusoid plus a smaller, faster one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowSubParams {
    pub slow_amplitude: f64,
    pub slow_freq: f64,
    pub sub_amplitude: f64,
    pub sub_freq: f64,
}

/// Ramp up, hold, slow ramp back down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaiseLowerParams {
    pub amplitude: f64,
    pub raise_time: f64,
    pub hold_time: f64,
    pub lower_time: f64,
}

/// Ramp up, hold, then release the actuator for the rest of the log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftDropParams {
    pub amplitude: f64,
    pub lift_time: f64,
    pub hold_time: f64,
}

impl LiftDropParams {
    pub fn drop_time(&self) -> f64 {
        self.lift_time + self.hold_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetProfile {
    AcceleratedOscillations(ChirpParams),
    SlowWithSubOscillations(SlowSubParams),
    RaiseLower(RaiseLowerParams),
    LiftDrop(LiftDropParams),
}

impl TargetProfile {
    pub fn kind(&self) -> TrajectoryType {
        match self {
            TargetProfile::AcceleratedOscillations(_) => TrajectoryType::AcceleratedOscillations,
            TargetProfile::SlowWithSubOscillations(_) => TrajectoryType::SlowWithSubOscillations,
            TargetProfile::RaiseLower(_) => TrajectoryType::RaiseLower,
            TargetProfile::LiftDrop(_) => TrajectoryType::LiftDrop,
        }
    }

    fn validate(&self, duration: f64) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{}: {what}", self.kind())));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            TargetProfile::AcceleratedOscillations(p) => {
                if !finite_nonneg(p.amplitude) {
                    return bad("amplitude must be finite and >= 0");
                }
                if !positive(p.f_start) || !positive(p.f_end) || p.f_end < p.f_start {
                    return bad("frequencies must be positive with f_end >= f_start");
                }
            }
            TargetProfile::SlowWithSubOscillations(p) => {
                if !finite_nonneg(p.slow_amplitude) || !finite_nonneg(p.sub_amplitude) {
                    return bad("amplitudes must be finite and >= 0");
                }
                if !positive(p.slow_freq) || !positive(p.sub_freq) {
                    return bad("frequencies must be positive");
                }
            }
            TargetProfile::RaiseLower(p) => {
                if !p.amplitude.is_finite() {
                    return bad("amplitude must be finite");
                }
                if !positive(p.raise_time) || !positive(p.lower_time) || !finite_nonneg(p.hold_time) {
                    return bad("ramp durations must be positive");
                }
                if p.raise_time + p.hold_time + p.lower_time > duration {
                    return bad("raise, hold and lower phases exceed the log duration");
                }
            }
            TargetProfile::LiftDrop(p) => {
                if !p.amplitude.is_finite() {
                    return bad("amplitude must be finite");
                }
                if !positive(p.lift_time) || !finite_nonneg(p.hold_time) {
                    return bad("lift duration must be positive");
                }
                if p.drop_time() >= duration {
                    return bad("drop time must leave a torque-off tail");
                }
            }
        }
        Ok(())
    }

    /// Offset from the center position at time `t`; `None` once released.
    fn offset(&self, t: f64, duration: f64) -> Option<f64> {
        let ramp = |t: f64, t0: f64, len: f64| ((t - t0) / len).clamp(0.0, 1.0);
        match *self {
            TargetProfile::AcceleratedOscillations(p) => {
                let phase = p.f_start * t + (p.f_end - p.f_start) * t * t / (2.0 * duration);
                Some(p.amplitude * (2.0 * PI * phase).sin())
            }
            TargetProfile::SlowWithSubOscillations(p) => Some(
                p.slow_amplitude * (2.0 * PI * p.slow_freq * t).sin()
                    + p.sub_amplitude * (2.0 * PI * p.sub_freq * t).sin(),
            ),
            TargetProfile::RaiseLower(p) => {
                let down_start = p.raise_time + p.hold_time;
                let up = ramp(t, 0.0, p.raise_time);
                let down = ramp(t, down_start, p.lower_time);
                Some(p.amplitude * (up - down))
            }
            TargetProfile::LiftDrop(p) => {
                if t >= p.drop_time() {
                    None
                } else {
                    Some(p.amplitude * ramp(t, 0.0, p.lift_time))
                }
            }
        }
    }
}

/// Target series sampled at `t_k = k·dt`, `k < round(duration/dt)`.
pub fn generate_targets(
    profile: &TargetProfile,
    center: f64,
    duration: f64,
    dt: f64,
) -> Result<Vec<Option<f64>>> {
    if !(duration > 0.0 && duration.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!(
            "duration and dt must be positive (got {duration}, {dt})"
        )));
    }
    if !center.is_finite() {
        return Err(Error::Config("center must be finite".into()));
    }
    profile.validate(duration)?;
    let n = (duration / dt).round() as usize;
    if n < 2 {
        return Err(Error::Config("duration shorter than two samples".into()));
    }
    Ok((0..n)
        .map(|k| profile.offset(k as f64 * dt, duration).map(|o| center + o))
        .collect())
}

/// One recorded sample: time, target (`None` = actuator released), measured position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, Option<f64>, f64)", into = "(f64, Option<f64>, f64)")]
pub struct Sample {
    pub t: f64,
    pub target: Option<f64>,
    pub measured: f64,
}

impl From<(f64, Option<f64>, f64)> for Sample {
    fn from((t, target, measured): (f64, Option<f64>, f64)) -> Self {
        Sample {
            t,
            target,
            measured,
        }
    }
}

impl From<Sample> for (f64, Option<f64>, f64) {
    fn from(s: Sample) -> Self {
        (s.t, s.target, s.measured)
    }
}

fn default_format() -> String {
    LOG_FORMAT.to_string()
}

fn default_version() -> u32 {
    LOG_VERSION
}

fn default_angle_zero() -> String {
    ANGLE_ZERO.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_version")]
    pub version: u32,
    pub id: String,
    pub trajectory: TrajectoryType,
    /// Where θ = 0 points; always "upward".
    #[serde(default = "default_angle_zero")]
    pub angle_zero: String,
    pub bench: BenchConfig,
    pub actuator: ActuatorModel,
}

impl LogHeader {
    pub fn new(
        id: impl Into<String>,
        trajectory: TrajectoryType,
        bench: BenchConfig,
        actuator: ActuatorModel,
    ) -> Self {
        Self {
            format: default_format(),
            version: LOG_VERSION,
            id: id.into(),
            trajectory,
            angle_zero: default_angle_zero(),
            bench,
            actuator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryLog {
    pub header: LogHeader,
    /// Friction the log was synthesized with, if synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<FrictionParams>,
    pub samples: Vec<Sample>,
}

impl TrajectoryLog {
    pub fn id(&self) -> &str {
        &self.header.id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.target).collect()
    }

    pub fn measured(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.measured).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Check header and sample consistency. Never repairs.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        let fail = |msg: String| Err(Error::Data(format!("log '{}': {msg}", h.id)));
        if h.format != LOG_FORMAT {
            return fail(format!("unknown format '{}'", h.format));
        }
        if h.version != LOG_VERSION {
            return fail(format!("unsupported version {}", h.version));
        }
        if h.angle_zero != ANGLE_ZERO {
            return fail(format!("unsupported angle reference '{}'", h.angle_zero));
        }
        if let Err(e) = h.bench.validate().and_then(|_| h.actuator.validate()) {
            return fail(e.to_string());
        }
        if let Some(gt) = &self.ground_truth {
            if let Err(e) = gt.validate() {
                return fail(e.to_string());
            }
        }
        if self.samples.len() < 2 {
            return fail(format!("needs at least 2 samples, has {}", self.samples.len()));
        }
        let dt = h.bench.dt;
        let t0 = self.samples[0].t;
        let tol = 1e-6 * dt;
        for (k, s) in self.samples.iter().enumerate() {
            if !s.t.is_finite() || !s.measured.is_finite() || s.target.is_some_and(|v| !v.is_finite()) {
                return fail(format!("non-finite value in sample {k}"));
            }
            if k > 0 && s.t <= self.samples[k - 1].t {
                return fail(format!("timestamps not strictly increasing at sample {k}"));
            }
            if (s.t - (t0 + k as f64 * dt)).abs() > tol {
                return fail(format!(
                    "sample {k} at t = {} breaks uniform spacing dt = {dt}",
                    s.t
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut out = String::from("{\n  \"header\": ");
        let header = serde_json::to_string_pretty(&self.header)?;
        out.push_str(&header.replace('\n', "\n  "));
        if let Some(gt) = &self.ground_truth {
            out.push_str(",\n  \"ground_truth\": ");
            out.push_str(&serde_json::to_string(gt)?);
        }
        out.push_str(",\n  \"samples\": [");
        for (k, s) in self.samples.iter().enumerate() {
            out.push_str(if k == 0 { "\n    " } else { ",\n    " });
            out.push_str(&serde_json::to_string(s)?);
        }
        out.push_str("\n  ]\n}\n");
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let log: TrajectoryLog =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed log: {e}")))?;
        log.validate()?;
        Ok(log)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Simulate `targets` with the true friction and record noisy positions.
///
/// The bench starts at rest at the first target (or 0 if released).
/// Noise is zero-mean Gaussian with standard deviation `noise_std` rad.
pub fn synthesize_log(
    header: LogHeader,
    truth: &FrictionParams,
    targets: &[Option<f64>],
    noise_std: f64,
    seed: u64,
) -> Result<TrajectoryLog> {
    synthesize_log_with_rng(header, truth, targets, noise_std, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn synthesize_log_with_rng(
    header: LogHeader,
    truth: &FrictionParams,
    targets: &[Option<f64>],
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryLog> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::Config(format!("noise must be finite and >= 0, got {noise_std}")));
    }
    if targets.len() < 2 {
        return Err(Error::Config("a log needs at least two targets".into()));
    }
    let start = SimState::at_rest(targets[0].unwrap_or(0.0));
    let sim = rollout(&header.bench, &header.actuator, truth, start, targets)?;
    if sim.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain(format!("synthetic rollout '{}' diverged", header.id)));
    }
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let dt = header.bench.dt;
    let samples = targets
        .iter()
        .zip(&sim.theta)
        .enumerate()
        .map(|(k, (&target, &theta))| Sample {
            t: k as f64 * dt,
            target,
            measured: theta + noise.map_or(0.0, |n| n.sample(rng)),
        })
        .collect();
    let log = TrajectoryLog {
        header,
        ground_truth: Some(*truth),
        samples,
    };
    log.validate()?;
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dynamixel,
    Erob,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Dynamixel => "dynamixel",
            Family::Erob => "erob",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dynamixel" => Ok(Family::Dynamixel),
            "erob" => Ok(Family::Erob),
            other => Err(Error::Config(format!("unknown preset family '{other}'"))),
        }
    }
}

/// Default target profile parameters per trajectory type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDefaults {
    #[serde(rename = "accelerated-oscillations")]
    pub accelerated_oscillations: ChirpParams,
    #[serde(rename = "slow-with-sub-oscillations")]
    pub slow_with_sub_oscillations: SlowSubParams,
    #[serde(rename = "raise-lower")]
    pub raise_lower: RaiseLowerParams,
    #[serde(rename = "lift-drop")]
    pub lift_drop: LiftDropParams,
}

impl TrajectoryDefaults {
    pub fn profile(&self, kind: TrajectoryType) -> TargetProfile {
        match kind {
            TrajectoryType::AcceleratedOscillations => {
                TargetProfile::AcceleratedOscillations(self.accelerated_oscillations)
            }
            TrajectoryType::SlowWithSubOscillations => {
                TargetProfile::SlowWithSubOscillations(self.slow_with_sub_oscillations)
            }
            TrajectoryType::RaiseLower => TargetProfile::RaiseLower(self.raise_lower),
            TrajectoryType::LiftDrop => TargetProfile::LiftDrop(self.lift_drop),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyPreset {
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub gains: Vec<f64>,
    /// "voltage" or "current".
    pub law: String,
    pub motor: MotorElectrical,
    pub ground_truth: FrictionParams,
    pub trajectories: TrajectoryDefaults,
}

impl FamilyPreset {
    /// Actuator with proportional gain `kp` and the family's control law.
    pub fn actuator(&self, kp: f64, dt: f64) -> Result<ActuatorModel> {
        let gains = PidGains::proportional(kp);
        let law = match self.law.as_str() {
            "voltage" => ControlLaw::VoltagePid(gains),
            "current" => ControlLaw::CurrentPid(gains),
            other => return Err(Error::Config(format!("unknown preset law '{other}'"))),
        };
        let model = ActuatorModel {
            law,
            motor: self.motor,
            control_period: dt,
        };
        model.validate()?;
        Ok(model)
    }
}

/// The preset data file shipped with the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Presets {
    pub version: u32,
    pub dt: f64,
    pub duration: f64,
    pub rest_angle: f64,
    pub families: BTreeMap<Family, FamilyPreset>,
}

const PRESETS_JSON: &str = include_str!("../data/presets.json");

impl Presets {
    pub fn builtin() -> Self {
        serde_json::from_str(PRESETS_JSON).expect("embedded presets.json is valid")
    }

    pub fn family(&self, family: Family) -> Result<&FamilyPreset> {
        self.families
            .get(&family)
            .ok_or_else(|| Error::Config(format!("no preset for family {family}")))
    }
}

/// One bench configuration of the identification grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchPreset {
    pub mass: f64,
    pub length: f64,
    pub gain: f64,
}

/// Mass × length × proportional-gain grid for an actuator family.
pub fn bench_grid(family: Family) -> Vec<BenchPreset> {
    let presets = Presets::builtin();
    let fam = presets.family(family).expect("builtin families are complete");
    let mut out = Vec::with_capacity(fam.masses.len() * fam.lengths.len() * fam.gains.len());
    for &mass in &fam.masses {
        for &length in &fam.lengths {
            for &gain in &fam.gains {
                out.push(BenchPreset { mass, length, gain });
            }
        }
    }
    out
}

/// Options for synthesizing a whole family dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub family: Family,
    pub types: Vec<TrajectoryType>,
    pub noise_std: f64,
    pub seed: u64,
    /// Log duration (s); defaults to the preset duration.
    pub duration: Option<f64>,
    /// Friction used to generate the logs; defaults to the family ground truth.
    pub truth: Option<FrictionParams>,
}

impl SynthOptions {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            types: TrajectoryType::ALL.to_vec(),
            noise_std: 0.0,
            seed: 0,
            duration: None,
            truth: None,
        }
    }
}

/// Log identifier for one grid point and trajectory type.
pub fn log_id(family: Family, preset: &BenchPreset, kind: TrajectoryType) -> String {
    format!(
        "{family}_m{}_l{}_kp{}_{kind}",
        preset.mass, preset.length, preset.gain
    )
}

/// Synthesize one log per (grid configuration × trajectory type).
///
/// Each log draws its noise from its own ChaCha stream, so the result does
/// not depend on generation order.
pub fn synthesize_family(options: &SynthOptions) -> Result<Vec<TrajectoryLog>> {
    let presets = Presets::builtin();
    let fam = presets.family(options.family)?;
    let truth = options.truth.unwrap_or(fam.ground_truth);
    let duration = options.duration.unwrap_or(presets.duration);
    let mut logs = Vec::new();
    let mut stream = 0u64;
    for preset in bench_grid(options.family) {
        let bench = BenchConfig {
            m: preset.mass,
            l: preset.length,
            g: crate::sim::DEFAULT_GRAVITY,
            dt: presets.dt,
        };
        let actuator = fam.actuator(preset.gain, presets.dt)?;
        for &kind in &options.types {
            let targets = generate_targets(
                &fam.trajectories.profile(kind),
                presets.rest_angle,
                duration,
                presets.dt,
            )?;
            let header = LogHeader::new(log_id(options.family, &preset, kind), kind, bench, actuator);
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(stream);
            stream += 1;
            logs.push(synthesize_log_with_rng(
                header,
                &truth,
                &targets,
                options.noise_std,
                &mut rng,
            )?);
        }
    }
    Ok(logs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub identification: Vec<String>,
    pub validation: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    /// Partition `logs` by this split, preserving input order.
    pub fn apply<'a>(&self, logs: &'a [TrajectoryLog]) -> (Vec<&'a TrajectoryLog>, Vec<&'a TrajectoryLog>) {
        let pick = |ids: &[String]| -> Vec<&'a TrajectoryLog> {
            logs.iter().filter(|l| ids.iter().any(|i| i == l.id())).collect()
        };
        (pick(&self.identification), pick(&self.validation))
    }
}

/// Seeded, type-stratified 75/25 split.
///
/// Validation quotas per trajectory type follow the largest-remainder rule;
/// a type with at least two logs keeps one on each side when the total
/// allows it. With one log per type this degenerates to a plain shuffle.
pub fn split(entries: &[(String, TrajectoryType)], seed: u64) -> Result<DatasetSplit> {
    let n = entries.len();
    if n < 4 {
        return Err(Error::Data(format!("need at least 4 logs to split, got {n}")));
    }
    {
        let mut ids: Vec<&str> = entries.iter().map(|(id, _)| id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate log ids in dataset".into()));
        }
    }
    let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut groups: BTreeMap<TrajectoryType, Vec<&str>> = BTreeMap::new();
    for (id, kind) in entries {
        groups.entry(*kind).or_default().push(id.as_str());
    }
    let mut kinds: Vec<TrajectoryType> = groups.keys().copied().collect();
    for ids in groups.values_mut() {
        ids.shuffle(&mut rng);
    }
    // Random tie-break order among types with equal remainders.
    kinds.shuffle(&mut rng);

    let exact: Vec<f64> = kinds
        .iter()
        .map(|k| groups[k].len() as f64 * n_val as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..kinds.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut missing = n_val - quota.iter().sum::<usize>();
    for &i in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if quota[i] < groups[&kinds[i]].len() {
            quota[i] += 1;
            missing -= 1;
        }
    }
    // Keep both sides populated per type where the group is large enough.
    for i in 0..kinds.len() {
        let size = groups[&kinds[i]].len();
        if size < 2 {
            continue;
        }
        if quota[i] == 0 {
            if let Some(j) = (0..kinds.len()).find(|&j| j != i && quota[j] > 1) {
                quota[j] -= 1;
                quota[i] += 1;
            }
        } else if quota[i] == size {
            if let Some(j) = (0..kinds.len())
                .find(|&j| j != i && quota[j] + 1 < groups[&kinds[j]].len())
            {
                quota[j] += 1;
                quota[i] -= 1;
            }
        }
    }

    let mut validation = Vec::with_capacity(n_val);
    let mut identification = Vec::with_capacity(n - n_val);
    for (i, kind) in kinds.iter().enumerate() {
        let ids = &groups[kind];
        validation.extend(ids[..quota[i]].iter().map(|s| s.to_string()));
        identification.extend(ids[quota[i]..].iter().map(|s| s.to_string()));
    }
    validation.sort();
    identification.sort();
    Ok(DatasetSplit {
        identification,
        validation,
        seed,
    })
}

/// [`split`] over loaded logs.
pub fn split_logs(logs: &[TrajectoryLog], seed: u64) -> Result<DatasetSplit> {
    let entries: Vec<(String, TrajectoryType)> = logs
        .iter()
        .map(|l| (l.header.id.clone(), l.header.trajectory))
        .collect();
    split(&entries, seed)
}

/// Manifest entry for one written log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub trajectory: TrajectoryType,
}

/// Index of a synthesized (or recorded) dataset; file paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    pub logs: Vec<ManifestEntry>,
}

impl Manifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: malformed manifest: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Load every listed log. Collects all failures into one error naming the files.
    pub fn load_logs(&self, manifest_path: impl AsRef<Path>) -> Result<Vec<TrajectoryLog>> {
        let dir = manifest_path
            .as_ref()
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let mut logs = Vec::with_capacity(self.logs.len());
        let mut failures = Vec::new();
        for entry in &self.logs {
            match TrajectoryLog::load(dir.join(&entry.file)) {
                Ok(log) if log.id() == entry.id => logs.push(log),
                Ok(log) => failures.push(format!(
                    "{}: id '{}' does not match manifest id '{}'",
                    entry.file,
                    log.id(),
                    entry.id
                )),
                Err(e) => failures.push(e.to_string()),
            }
        }
        if failures.is_empty() {
            Ok(logs)
        } else {
            Err(Error::Data(format!(
                "{} log(s) failed to load:\n  {}",
                failures.len(),
                failures.join("\n  ")
            )))
        }
    }
}

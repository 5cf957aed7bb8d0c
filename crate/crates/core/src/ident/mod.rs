//! Friction identification: parameter spaces, the trajectory-error cost and
//! a CMA-ES driver that fits one friction model to a set of logs.

pub mod cmaes;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorModel, MotorElectrical, Servo};
use crate::dataset::TrajectoryLog;
use crate::error::{Error, Result};
use crate::friction::{FrictionParams, ModelTag};
use crate::sim::{abs_error_sum, Pendulum, SimState};

pub use cmaes::{default_population, CmaesOptions, CmaesOutcome};

/// Cost charged per sample of a log whose simulation diverges (rad).
pub const DIVERGENCE_PENALTY: f64 = 1e6;
pub const DEFAULT_BUDGET: usize = 4000;
pub const DEFAULT_SIGMA0: f64 = 0.3;

/// Motor constants that can optionally be fitted alongside friction.
pub const MOTOR_PARAMS: [&str; 3] = ["k_t", "R", "J_m"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl ParamBound {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, scale: Scale) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lower.is_finite()
            && self.upper.is_finite()
            && self.lower < self.upper
            && (self.scale == Scale::Linear || self.lower > 0.0);
        if !ok {
            return Err(Error::Config(format!(
                "invalid bounds for {}: [{}, {}] ({:?})",
                self.name, self.lower, self.upper, self.scale
            )));
        }
        Ok(())
    }

    /// Map a physical value into `[0, 1]`.
    pub fn normalize(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Linear => (x - self.lower) / (self.upper - self.lower),
            Scale::Log => (x.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        }
    }

    /// Map `u ∈ [0, 1]` back to physical units.
    pub fn denormalize(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log => (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp(),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Default search range for a parameter name.
pub fn default_bound(name: &str) -> Option<ParamBound> {
    let b = match name {
        "v_s" => ParamBound::new(name, 1e-3, 10.0, Scale::Log),
        "alpha" => ParamBound::new(name, 0.1, 10.0, Scale::Log),
        "k_t" => ParamBound::new(name, 0.1, 20.0, Scale::Linear),
        "R" => ParamBound::new(name, 0.05, 50.0, Scale::Log),
        "J_m" => ParamBound::new(name, 1e-6, 1.0, Scale::Log),
        "k_v" | "k_c" | "k_cs" => ParamBound::new(name, 0.0, 2.0, Scale::Linear),
        "k_l" | "k_ls" | "k_m" | "k_e" | "k_ms" | "k_es" => ParamBound::new(name, 0.0, 1.0, Scale::Linear),
        "k_mq" | "k_eq" => ParamBound::new(name, 0.0, 0.1, Scale::Linear),
        _ => return None,
    };
    Some(b)
}

/// Ordered, bounded parameter vector for one friction model, optionally
/// extended with the motor constants `k_t`, `R`, `J_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub model: ModelTag,
    pub fit_motor: bool,
    pub bounds: Vec<ParamBound>,
}

impl ParamSpace {
    pub fn new(model: ModelTag, fit_motor: bool) -> Self {
        let mut names: Vec<&str> = model.param_names().to_vec();
        if fit_motor {
            names.extend(MOTOR_PARAMS);
        }
        let bounds = names
            .into_iter()
            .map(|n| default_bound(n).expect("every model parameter has a default bound"))
            .collect();
        Self {
            model,
            fit_motor,
            bounds,
        }
    }

    /// Replace the range of one parameter.
    pub fn with_bound(mut self, name: &str, lower: f64, upper: f64) -> Result<Self> {
        let b = self
            .bounds
            .iter_mut()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Config(format!("{} has no parameter {name}", self.model)))?;
        b.lower = lower;
        b.upper = upper;
        b.validate()?;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.bounds.iter().map(|b| b.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = ParamSpace::new(self.model, self.fit_motor);
        if self.names() != expected.names() {
            return Err(Error::Config(format!(
                "parameter space for {} must list {:?}",
                self.model,
                expected.names()
            )));
        }
        self.bounds.iter().try_for_each(ParamBound::validate)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        self.bounds.iter().zip(x).map(|(b, v)| b.normalize(*v)).collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        self.bounds.iter().zip(u).map(|(b, v)| b.denormalize(*v)).collect()
    }

    /// Split a physical vector into friction parameters and optional motor overrides.
    pub fn decode(&self, x: &[f64]) -> Result<(FrictionParams, Option<MotorOverride>)> {
        if x.len() != self.dimension() {
            return Err(Error::Domain(format!(
                "{} parameter vector needs {} entries, got {}",
                self.model,
                self.dimension(),
                x.len()
            )));
        }
        let k = self.model.dimension();
        let friction = FrictionParams::from_vector(self.model, &x[..k])?;
        let motor = self.fit_motor.then(|| MotorOverride {
            k_t: x[k],
            r: x[k + 1],
            j_m: x[k + 2],
        });
        Ok((friction, motor))
    }

    /// Physical vector for given parameters; motor entries are taken from `motor` when fitted.
    pub fn encode(&self, friction: &FrictionParams, motor: Option<&MotorElectrical>) -> Result<Vec<f64>> {
        if friction.tag() != self.model {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.model,
                friction.tag()
            )));
        }
        let mut x = friction.to_vector();
        if self.fit_motor {
            let m = motor.ok_or_else(|| Error::Config("motor constants required".into()))?;
            x.extend([m.k_t, m.r, m.j_m]);
        }
        Ok(x)
    }
}

/// Fitted motor constants replacing those in the log headers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorOverride {
    pub k_t: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "J_m")]
    pub j_m: f64,
}

impl MotorOverride {
    pub fn apply(&self, actuator: &ActuatorModel) -> ActuatorModel {
        let mut a = *actuator;
        a.motor.k_t = self.k_t;
        a.motor.r = self.r;
        a.motor.j_m = self.j_m;
        a
    }
}

struct Prepared<'a> {
    log: &'a TrajectoryLog,
    targets: Vec<Option<f64>>,
    measured: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(log: &'a TrajectoryLog) -> Result<Self> {
        log.validate()?;
        Ok(Self {
            log,
            targets: log.targets(),
            measured: log.measured(),
        })
    }

    /// Sum of absolute angle errors, or the divergence penalty.
    fn error_sum(&self, friction: &FrictionParams, motor: Option<&MotorOverride>) -> Result<f64> {
        let header = &self.log.header;
        let actuator = match motor {
            Some(m) => m.apply(&header.actuator),
            None => header.actuator,
        };
        let pendulum = Pendulum::new(header.bench, friction, actuator.motor.j_m)?;
        let mut servo = Servo::new(actuator, header.bench.dt)?;
        let initial = SimState::at_rest(self.measured[0]);
        Ok(abs_error_sum(&pendulum, &mut servo, initial, &self.targets, &self.measured)
            .unwrap_or(DIVERGENCE_PENALTY * self.measured.len() as f64))
    }
}

fn prepare<'a>(logs: &[&'a TrajectoryLog]) -> Result<Vec<Prepared<'a>>> {
    if logs.is_empty() {
        return Err(Error::Data("no logs to evaluate".into()));
    }
    logs.iter().map(|l| Prepared::new(l)).collect()
}

fn mean_abs_error(prepared: &[Prepared<'_>], friction: &FrictionParams, motor: Option<&MotorOverride>) -> Result<f64> {
    let sums: Vec<f64> = prepared
        .par_iter()
        .map(|p| p.error_sum(friction, motor))
        .collect::<Result<_>>()?;
    let samples: usize = prepared.iter().map(|p| p.measured.len()).sum();
    Ok(sums.iter().sum::<f64>() / samples as f64)
}

/// Mean absolute angle error (rad) over all samples of `logs` for a physical
/// parameter vector of `space`.
///
/// Diverging logs contribute [`DIVERGENCE_PENALTY`] per sample.
pub fn cost(x: &[f64], logs: &[&TrajectoryLog], space: &ParamSpace) -> Result<f64> {
    let (friction, motor) = space.decode(x)?;
    mean_abs_error(&prepare(logs)?, &friction, motor.as_ref())
}

/// Mean absolute angle error of known parameters on `logs`.
pub fn evaluate(friction: &FrictionParams, motor: Option<&MotorOverride>, logs: &[&TrajectoryLog]) -> Result<f64> {
    friction.validate()?;
    mean_abs_error(&prepare(logs)?, friction, motor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogScore {
    pub id: String,
    pub mae: f64,
}

/// Per-log mean absolute angle error.
pub fn per_log_mae(
    friction: &FrictionParams,
    motor: Option<&MotorOverride>,
    logs: &[&TrajectoryLog],
) -> Result<Vec<LogScore>> {
    let prepared = prepare(logs)?;
    prepared
        .par_iter()
        .map(|p| {
            Ok(LogScore {
                id: p.log.id().to_string(),
                mae: p.error_sum(friction, motor)? / p.measured.len() as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetKind {
    /// Budget counts objective evaluations.
    #[default]
    Evaluations,
    /// Budget counts generations of the population.
    Generations,
}

impl std::str::FromStr for BudgetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "evaluations" | "evals" => Ok(Self::Evaluations),
            "generations" | "gens" => Ok(Self::Generations),
            other => Err(Error::Config(format!("unknown budget kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyOptions {
    pub budget: usize,
    pub budget_kind: BudgetKind,
    pub seed: u64,
    pub population: Option<usize>,
    pub sigma0: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            budget_kind: BudgetKind::Evaluations,
            seed: 0,
            population: None,
            sigma0: DEFAULT_SIGMA0,
        }
    }
}

impl IdentifyOptions {
    fn max_evaluations(&self, lambda: usize) -> Result<usize> {
        let evals = match self.budget_kind {
            BudgetKind::Evaluations => self.budget,
            BudgetKind::Generations => self.budget.saturating_mul(lambda),
        };
        if evals < lambda {
            return Err(Error::Config(format!(
                "budget of {} {} is smaller than one generation ({lambda} evaluations)",
                self.budget,
                match self.budget_kind {
                    BudgetKind::Evaluations => "evaluations",
                    BudgetKind::Generations => "generations",
                }
            )));
        }
        Ok(evals)
    }
}

/// Outcome of fitting one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentResult {
    pub model: ModelTag,
    pub friction: FrictionParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motor: Option<MotorOverride>,
    /// Best physical parameter vector, ordered as `space`.
    pub vector: Vec<f64>,
    pub space: ParamSpace,
    /// Mean absolute angle error on the identification logs (rad).
    pub identification_mae: f64,
    /// Mean absolute angle error on held-out logs (rad), once evaluated.
    #[serde(default)]
    pub validation_mae: Option<f64>,
    #[serde(default)]
    pub identification_logs: Vec<LogScore>,
    #[serde(default)]
    pub validation_logs: Vec<LogScore>,
    pub evaluations: usize,
    pub generations: usize,
    pub budget: usize,
    pub budget_kind: BudgetKind,
    pub seed: u64,
    /// Best-so-far cost after each generation.
    pub trace: Vec<f64>,
}

impl IdentResult {
    /// Score the fitted parameters on held-out logs.
    ///
    /// Kept separate from [`identify`] so validation data never reaches the optimizer.
    pub fn validate_on(&mut self, logs: &[&TrajectoryLog]) -> Result<f64> {
        let scores = per_log_mae(&self.friction, self.motor.as_ref(), logs)?;
        let prepared_len: Vec<usize> = logs.iter().map(|l| l.len()).collect();
        let total: usize = prepared_len.iter().sum();
        let mae = scores
            .iter()
            .zip(&prepared_len)
            .map(|(s, n)| s.mae * *n as f64)
            .sum::<f64>()
            / total as f64;
        self.validation_mae = Some(mae);
        self.validation_logs = scores;
        Ok(mae)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Fit the model of `space` to `logs` with CMA-ES in normalized coordinates.
pub fn identify(logs: &[&TrajectoryLog], space: &ParamSpace, options: &IdentifyOptions) -> Result<IdentResult> {
    identify_with_progress(logs, space, options, |_, _| {})
}

/// [`identify`] with a callback receiving `(generation, best cost)`.
pub fn identify_with_progress(
    logs: &[&TrajectoryLog],
    space: &ParamSpace,
    options: &IdentifyOptions,
    progress: impl FnMut(usize, f64),
) -> Result<IdentResult> {
    space.validate()?;
    let prepared = prepare(logs)?;
    let n = space.dimension();
    let lambda = options.population.unwrap_or_else(|| default_population(n));
    let max_evaluations = options.max_evaluations(lambda)?;
    let samples: usize = prepared.iter().map(|p| p.measured.len()).sum();

    // Logs are already evaluated in parallel across the population, so each
    // candidate walks its logs sequentially.
    let objective = |u: &[f64]| -> f64 {
        let x = space.denormalize(u);
        let Ok((friction, motor)) = space.decode(&x) else {
            return f64::INFINITY;
        };
        let mut total = 0.0;
        for p in &prepared {
            match p.error_sum(&friction, motor.as_ref()) {
                Ok(s) => total += s,
                Err(_) => return f64::INFINITY,
            }
        }
        total / samples as f64
    };

    let cma = CmaesOptions {
        population: Some(lambda),
        sigma0: options.sigma0,
        max_evaluations,
        seed: options.seed,
        ..CmaesOptions::default()
    };
    let out = cmaes::minimize(objective, &vec![0.5; n], &vec![0.0; n], &vec![1.0; n], &cma, progress)?;
    if !out.best_f.is_finite() {
        return Err(Error::Domain(format!(
            "identification of {} found no finite cost",
            space.model
        )));
    }

    let vector = space.denormalize(&out.best_x);
    let (friction, motor) = space.decode(&vector)?;
    let identification_logs = per_log_mae(&friction, motor.as_ref(), logs)?;
    Ok(IdentResult {
        model: space.model,
        friction,
        motor,
        vector,
        space: space.clone(),
        identification_mae: out.best_f,
        validation_mae: None,
        identification_logs,
        validation_logs: Vec::new(),
        evaluations: out.evaluations,
        generations: out.generations,
        budget: options.budget,
        budget_kind: options.budget_kind,
        seed: options.seed,
        trace: out.trace,
    })
}

/// Identify each model on `ident` and score it on `validation`.
pub fn model_sweep(
    ident: &[&TrajectoryLog],
    validation: &[&TrajectoryLog],
    models: &[ModelTag],
    fit_motor: bool,
    options: &IdentifyOptions,
    mut progress: impl FnMut(ModelTag, usize, f64),
) -> Result<Vec<IdentResult>> {
    models
        .iter()
        .map(|&model| {
            let space = ParamSpace::new(model, fit_motor);
            let mut result = identify_with_progress(ident, &space, options, |g, c| progress(model, g, c))?;
            if !validation.is_empty() {
                result.validate_on(validation)?;
            }
            Ok(result)
        })
        .collect()
}

/// Tab-separated comparison of sweep results.
pub fn comparison_table(results: &[IdentResult]) -> String {
    let mut out = String::from("model\tparams\tidentification_mae\tvalidation_mae\tevaluations\n");
    for r in results {
        let val = r
            .validation_mae
            .map(|v| format!("{v:.6e}"))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6e}\t{}\t{}",
            r.model,
            r.vector.len(),
            r.identification_mae,
            val,
            r.evaluations
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_space_shapes() {
        for tag in ModelTag::ALL {
            let s = ParamSpace::new(tag, false);
            assert_eq!(s.dimension(), tag.dimension());
            s.validate().unwrap();
            let s = ParamSpace::new(tag, true);
            assert_eq!(s.dimension(), tag.dimension() + 3);
            assert_eq!(&s.names()[tag.dimension()..], &MOTOR_PARAMS);
        }
    }

    #[test]
    fn normalize_round_trip() {
        let b = ParamBound::new("k_v", 1e-6, 10.0, Scale::Log);
        for x in [1e-6, 3e-4, 0.12, 10.0] {
            let u = b.normalize(x);
            assert!((0.0..=1.0).contains(&u));
            assert!((b.denormalize(u) - x).abs() <= 1e-12 * x.max(1.0));
        }
        assert!((b.denormalize(0.5) - (1e-6f64 * 10.0).sqrt()).abs() < 1e-12);
        let k = ParamBound::new("k_t", 0.1, 20.0, Scale::Linear);
        assert!((k.denormalize(0.5) - 10.05).abs() < 1e-12);
    }

    #[test]
    fn bad_bounds_rejected() {
        let s = ParamSpace::new(ModelTag::M1, false);
        assert!(s.clone().with_bound("v_s", 0.0, 1.0).is_err());
        assert!(s.clone().with_bound("k_c", 2.0, 1.0).is_err());
        assert!(s.clone().with_bound("nope", 0.1, 1.0).is_err());
        assert!(s.with_bound("k_c", 0.01, 1.0).is_ok());
    }

    #[test]
    fn decode_length_mismatch() {
        let s = ParamSpace::new(ModelTag::M3, false);
        assert!(s.decode(&[0.1, 0.1]).is_err());
        let (f, m) = s.decode(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(f.to_vector(), vec![0.1, 0.2, 0.3]);
        assert!(m.is_none());
    }

    #[test]
    fn budget_kinds() {
        let o = IdentifyOptions {
            budget: 5,
            ..Default::default()
        };
        assert!(o.max_evaluations(6).is_err());
        let o = IdentifyOptions {
            budget: 5,
            budget_kind: BudgetKind::Generations,
            ..Default::default()
        };
        assert_eq!(o.max_evaluations(6).unwrap(), 30);
        assert_eq!("gens".parse::<BudgetKind>().unwrap(), BudgetKind::Generations);
    }
}

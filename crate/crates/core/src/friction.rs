//! Friction torque budgets for the six actuator friction models and the
//! stop-torque resolution of the applied friction.
//!
//! Friction is expressed as a *budget* `τ_f^m ≥ 0`: the largest torque the
//! transmission can spend resisting motion at the current state. The torque
//! actually applied is the torque that would stop the joint within one
//! timestep, clipped to `[-τ_f^m, τ_f^m]`.
//!
//! | model | effects                                             | parameters |
//! |-------|-----------------------------------------------------|-----------:|
//! | `M1`  | Coulomb + viscous                                   | 2 |
//! | `M2`  | + Stribeck                                          | 5 |
//! | `M3`  | Coulomb + viscous + load-dependent                  | 3 |
//! | `M4`  | Stribeck load-dependent                             | 7 |
//! | `M5`  | directional (motor/external split) load-dependence  | 9 |
//! | `M6`  | + quadratic load term                               | 11 |
//!
//! Every model is evaluated through one general form
//!
//! ```text
//! τ_f^m = K_v|ω| + [ K_c + |K_m τ_m − K_e τ_e|
//!                    + S(ω)·(K_c^s + |K_m^s τ_m − K_e^s τ_e| + Q) ]
//! S(ω)  = exp(−|ω/v_s|^α)
//! ```
//!
//! with the simpler models mapping onto it (M3/M4 set `K_m = K_e = K_l`).
//! Sharing one evaluation path makes the model nesting relations hold bit
//! for bit, and the bracketed Coulomb-like part is exactly what the
//! equivalent Coulomb-Viscous adapter hands to an external engine.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Friction model identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelTag {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
}

impl ModelTag {
    pub const ALL: [ModelTag; 6] = [
        ModelTag::M1,
        ModelTag::M2,
        ModelTag::M3,
        ModelTag::M4,
        ModelTag::M5,
        ModelTag::M6,
    ];

    /// Coefficient names in canonical vector order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelTag::M1 => &["k_v", "k_c"],
            ModelTag::M2 => &["k_v", "k_c", "k_cs", "v_s", "alpha"],
            ModelTag::M3 => &["k_v", "k_c", "k_l"],
            ModelTag::M4 => &["k_v", "k_c", "k_l", "k_cs", "k_ls", "v_s", "alpha"],
            ModelTag::M5 => &[
                "k_v", "k_c", "k_m", "k_e", "k_cs", "k_ms", "k_es", "v_s", "alpha",
            ],
            ModelTag::M6 => &[
                "k_v", "k_c", "k_m", "k_e", "k_cs", "k_ms", "k_es", "v_s", "alpha", "k_mq",
                "k_eq",
            ],
        }
    }

    pub fn dimension(self) -> usize {
        self.param_names().len()
    }

    pub fn has_stribeck(self) -> bool {
        !matches!(self, ModelTag::M1 | ModelTag::M3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::M1 => "M1",
            ModelTag::M2 => "M2",
            ModelTag::M3 => "M3",
            ModelTag::M4 => "M4",
            ModelTag::M5 => "M5",
            ModelTag::M6 => "M6",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "M1" => Ok(ModelTag::M1),
            "M2" => Ok(ModelTag::M2),
            "M3" => Ok(ModelTag::M3),
            "M4" => Ok(ModelTag::M4),
            "M5" => Ok(ModelTag::M5),
            "M6" => Ok(ModelTag::M6),
            other => Err(Error::Config(format!("unknown friction model '{other}'"))),
        }
    }
}

/// Friction coefficients of one model, in SI units.
///
/// Serializes as a flat document with a `model` tag and one key per
/// coefficient; unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", deny_unknown_fields)]
pub enum FrictionParams {
    /// Coulomb-Viscous.
    M1 { k_v: f64, k_c: f64 },
    /// Stribeck.
    M2 {
        k_v: f64,
        k_c: f64,
        k_cs: f64,
        v_s: f64,
        alpha: f64,
    },
    /// Load-dependent.
    M3 { k_v: f64, k_c: f64, k_l: f64 },
    /// Stribeck load-dependent.
    M4 {
        k_v: f64,
        k_c: f64,
        k_l: f64,
        k_cs: f64,
        k_ls: f64,
        v_s: f64,
        alpha: f64,
    },
    /// Directional.
    M5 {
        k_v: f64,
        k_c: f64,
        k_m: f64,
        k_e: f64,
        k_cs: f64,
        k_ms: f64,
        k_es: f64,
        v_s: f64,
        alpha: f64,
    },
    /// Quadratic.
    M6 {
        k_v: f64,
        k_c: f64,
        k_m: f64,
        k_e: f64,
        k_cs: f64,
        k_ms: f64,
        k_es: f64,
        v_s: f64,
        alpha: f64,
        k_mq: f64,
        k_eq: f64,
    },
}

impl FrictionParams {
    pub fn coulomb_viscous(k_v: f64, k_c: f64) -> Self {
        FrictionParams::M1 { k_v, k_c }
    }

    pub fn tag(&self) -> ModelTag {
        match self {
            FrictionParams::M1 { .. } => ModelTag::M1,
            FrictionParams::M2 { .. } => ModelTag::M2,
            FrictionParams::M3 { .. } => ModelTag::M3,
            FrictionParams::M4 { .. } => ModelTag::M4,
            FrictionParams::M5 { .. } => ModelTag::M5,
            FrictionParams::M6 { .. } => ModelTag::M6,
        }
    }

    /// Coefficients in the order given by [`ModelTag::param_names`].
    pub fn to_vector(&self) -> Vec<f64> {
        match *self {
            FrictionParams::M1 { k_v, k_c } => vec![k_v, k_c],
            FrictionParams::M2 {
                k_v,
                k_c,
                k_cs,
                v_s,
                alpha,
            } => vec![k_v, k_c, k_cs, v_s, alpha],
            FrictionParams::M3 { k_v, k_c, k_l } => vec![k_v, k_c, k_l],
            FrictionParams::M4 {
                k_v,
                k_c,
                k_l,
                k_cs,
                k_ls,
                v_s,
                alpha,
            } => vec![k_v, k_c, k_l, k_cs, k_ls, v_s, alpha],
            FrictionParams::M5 {
                k_v,
                k_c,
                k_m,
                k_e,
                k_cs,
                k_ms,
                k_es,
                v_s,
                alpha,
            } => vec![k_v, k_c, k_m, k_e, k_cs, k_ms, k_es, v_s, alpha],
            FrictionParams::M6 {
                k_v,
                k_c,
                k_m,
                k_e,
                k_cs,
                k_ms,
                k_es,
                v_s,
                alpha,
                k_mq,
                k_eq,
            } => vec![
                k_v, k_c, k_m, k_e, k_cs, k_ms, k_es, v_s, alpha, k_mq, k_eq,
            ],
        }
    }

    /// Inverse of [`FrictionParams::to_vector`]. Does not validate.
    pub fn from_vector(tag: ModelTag, v: &[f64]) -> Result<Self> {
        if v.len() != tag.dimension() {
            return Err(Error::Config(format!(
                "model {tag} expects {} coefficients, got {}",
                tag.dimension(),
                v.len()
            )));
        }
        Ok(match tag {
            ModelTag::M1 => FrictionParams::M1 { k_v: v[0], k_c: v[1] },
            ModelTag::M2 => FrictionParams::M2 {
                k_v: v[0],
                k_c: v[1],
                k_cs: v[2],
                v_s: v[3],
                alpha: v[4],
            },
            ModelTag::M3 => FrictionParams::M3 {
                k_v: v[0],
                k_c: v[1],
                k_l: v[2],
            },
            ModelTag::M4 => FrictionParams::M4 {
                k_v: v[0],
                k_c: v[1],
                k_l: v[2],
                k_cs: v[3],
                k_ls: v[4],
                v_s: v[5],
                alpha: v[6],
            },
            ModelTag::M5 => FrictionParams::M5 {
                k_v: v[0],
                k_c: v[1],
                k_m: v[2],
                k_e: v[3],
                k_cs: v[4],
                k_ms: v[5],
                k_es: v[6],
                v_s: v[7],
                alpha: v[8],
            },
            ModelTag::M6 => FrictionParams::M6 {
                k_v: v[0],
                k_c: v[1],
                k_m: v[2],
                k_e: v[3],
                k_cs: v[4],
                k_ms: v[5],
                k_es: v[6],
                v_s: v[7],
                alpha: v[8],
                k_mq: v[9],
                k_eq: v[10],
            },
        })
    }

    pub fn named_values(&self) -> Vec<(&'static str, f64)> {
        self.tag()
            .param_names()
            .iter()
            .copied()
            .zip(self.to_vector())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.named_values()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
    }

    pub fn k_v(&self) -> f64 {
        self.to_vector()[0]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.named_values() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Config(format!(
                    "friction coefficient {name} must be finite and >= 0, got {value}"
                )));
            }
        }
        if self.tag().has_stribeck() {
            for name in ["v_s", "alpha"] {
                let value = self.get(name).unwrap_or_default();
                if value <= 0.0 {
                    return Err(Error::Config(format!(
                        "{name} must be > 0 when the Stribeck term is present, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Validated, evaluation-ready form.
    pub fn model(&self) -> Result<FrictionModel> {
        self.validate()?;
        Ok(FrictionModel::from_params_unchecked(self))
    }
}

/// Arguments of a friction budget evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrictionInputs {
    /// Motor torque τ_m (N·m).
    pub tau_m: f64,
    /// External torque τ_e (N·m).
    pub tau_e: f64,
    /// Joint velocity θ̇ (rad/s).
    pub omega: f64,
}

impl FrictionInputs {
    pub fn new(tau_m: f64, tau_e: f64, omega: f64) -> Self {
        Self {
            tau_m,
            tau_e,
            omega,
        }
    }

    fn check(&self) -> Result<()> {
        ensure_finite("tau_m", self.tau_m)?;
        ensure_finite("tau_e", self.tau_e)?;
        ensure_finite("omega", self.omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct StribeckTerm {
    k_cs: f64,
    k_ms: f64,
    k_es: f64,
    k_mq: f64,
    k_eq: f64,
    v_s: f64,
    alpha: f64,
}

impl StribeckTerm {
    #[inline]
    fn factor(&self, omega: f64) -> f64 {
        // |0/v_s|^α is taken as 0 so the factor at rest is exactly 1.
        if omega == 0.0 {
            1.0
        } else {
            (-(omega / self.v_s).abs().powf(self.alpha)).exp()
        }
    }

    #[inline]
    fn quadratic(&self, tau_m: f64, tau_e: f64) -> f64 {
        // |τ_m| = |τ_e| falls on the external-torque branch.
        let (k, tau) = if tau_m.abs() >= tau_e.abs() {
            (self.k_eq, tau_e)
        } else {
            (self.k_mq, tau_m)
        };
        if k == 0.0 {
            0.0
        } else {
            k * tau * tau
        }
    }
}

/// Friction model in the general evaluation form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionModel {
    tag: ModelTag,
    k_v: f64,
    k_c: f64,
    k_m: f64,
    k_e: f64,
    stribeck: Option<StribeckTerm>,
}

impl FrictionModel {
    fn from_params_unchecked(p: &FrictionParams) -> Self {
        let base = |k_v, k_c, k_m, k_e, stribeck| FrictionModel {
            tag: p.tag(),
            k_v,
            k_c,
            k_m,
            k_e,
            stribeck,
        };
        match *p {
            FrictionParams::M1 { k_v, k_c } => base(k_v, k_c, 0.0, 0.0, None),
            FrictionParams::M2 {
                k_v,
                k_c,
                k_cs,
                v_s,
                alpha,
            } => base(
                k_v,
                k_c,
                0.0,
                0.0,
                Some(StribeckTerm {
                    k_cs,
                    k_ms: 0.0,
                    k_es: 0.0,
                    k_mq: 0.0,
                    k_eq: 0.0,
                    v_s,
                    alpha,
                }),
            ),
            FrictionParams::M3 { k_v, k_c, k_l } => base(k_v, k_c, k_l, k_l, None),
            FrictionParams::M4 {
                k_v,
                k_c,
                k_l,
                k_cs,
                k_ls,
                v_s,
                alpha,
            } => base(
                k_v,
                k_c,
                k_l,
                k_l,
                Some(StribeckTerm {
                    k_cs,
                    k_ms: k_ls,
                    k_es: k_ls,
                    k_mq: 0.0,
                    k_eq: 0.0,
                    v_s,
                    alpha,
                }),
            ),
            FrictionParams::M5 {
                k_v,
                k_c,
                k_m,
                k_e,
                k_cs,
                k_ms,
                k_es,
                v_s,
                alpha,
            } => base(
                k_v,
                k_c,
                k_m,
                k_e,
                Some(StribeckTerm {
                    k_cs,
                    k_ms,
                    k_es,
                    k_mq: 0.0,
                    k_eq: 0.0,
                    v_s,
                    alpha,
                }),
            ),
            FrictionParams::M6 {
                k_v,
                k_c,
                k_m,
                k_e,
                k_cs,
                k_ms,
                k_es,
                v_s,
                alpha,
                k_mq,
                k_eq,
            } => base(
                k_v,
                k_c,
                k_m,
                k_e,
                Some(StribeckTerm {
                    k_cs,
                    k_ms,
                    k_es,
                    k_mq,
                    k_eq,
                    v_s,
                    alpha,
                }),
            ),
        }
    }

    pub fn tag(&self) -> ModelTag {
        self.tag
    }

    pub fn k_v(&self) -> f64 {
        self.k_v
    }

    #[inline]
    pub fn viscous(&self, omega: f64) -> f64 {
        self.k_v * omega.abs()
    }

    /// Everything in the budget except the viscous term.
    #[inline]
    pub fn coulomb_part(&self, tau_m: f64, tau_e: f64, omega: f64) -> f64 {
        let mut part = self.k_c + (self.k_m * tau_m - self.k_e * tau_e).abs();
        if let Some(s) = &self.stribeck {
            let rest = s.k_cs + (s.k_ms * tau_m - s.k_es * tau_e).abs() + s.quadratic(tau_m, tau_e);
            part += s.factor(omega) * rest;
        }
        part
    }

    /// Budget τ_f^m for finite inputs.
    #[inline]
    pub fn budget(&self, tau_m: f64, tau_e: f64, omega: f64) -> f64 {
        self.viscous(omega) + self.coulomb_part(tau_m, tau_e, omega)
    }
}

/// Friction torque budget τ_f^m (N·m) of `params` at the given state.
pub fn friction_budget(params: &FrictionParams, inputs: FrictionInputs) -> Result<f64> {
    inputs.check()?;
    let model = params.model()?;
    Ok(model.budget(inputs.tau_m, inputs.tau_e, inputs.omega))
}

/// Torque that brings the velocity exactly to zero within one timestep.
pub fn stop_torque(inertia: f64, dt: f64, omega: f64, tau_m: f64, tau_e: f64) -> Result<f64> {
    if !(inertia > 0.0) || !inertia.is_finite() {
        return Err(Error::Domain(format!("inertia must be > 0, got {inertia}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("timestep must be > 0, got {dt}")));
    }
    ensure_finite("omega", omega)?;
    ensure_finite("tau_m", tau_m)?;
    ensure_finite("tau_e", tau_e)?;
    Ok(stop_torque_unchecked(inertia / dt, omega, tau_m, tau_e))
}

#[inline]
pub(crate) fn stop_torque_unchecked(inertia_over_dt: f64, omega: f64, tau_m: f64, tau_e: f64) -> f64 {
    -(inertia_over_dt * omega + tau_m + tau_e)
}

/// Clip the stop torque to the friction budget.
pub fn applied_friction(stop: f64, budget: f64) -> Result<f64> {
    ensure_finite("stop torque", stop)?;
    ensure_finite("budget", budget)?;
    if budget < 0.0 {
        return Err(Error::Domain(format!("budget must be >= 0, got {budget}")));
    }
    Ok(clip_unchecked(stop, budget))
}

#[inline]
pub(crate) fn clip_unchecked(stop: f64, budget: f64) -> f64 {
    stop.max(-budget).min(budget)
}

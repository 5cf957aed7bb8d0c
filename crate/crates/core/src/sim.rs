//! Pendulum test bench: one servo driving a rigid link with a point mass.
//!
//! Angles are measured from the upward vertical, so gravity contributes
//! `τ_e = m·g·l·sin(θ)` and the hanging rest position is `θ = π`.
//!
//! One integration step, given the motor torque:
//!
//! ```text
//! τ_e      = m g l sin θ_k
//! J        = m l² + J_m
//! τ_f^m    = M(τ_m, τ_e, θ̇_k)
//! τ_stop   = −(J/Δt·θ̇_k + τ_m + τ_e)
//! τ_f      = clip(τ_stop, ±τ_f^m)
//! θ̈_k      = (τ_m + τ_e + τ_f) / J
//! θ̇_{k+1}  = θ̇_k + θ̈_k Δt      (exactly 0 when τ_f = τ_stop)
//! θ_{k+1}  = θ_k + θ̇_k Δt + ½ θ̈_k Δt²
//! ```

use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorModel, Servo};
use crate::error::{ensure_finite, Error, Result};
use crate::friction::{clip_unchecked, stop_torque_unchecked, FrictionModel, FrictionParams};

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_DT: f64 = 0.001;

/// Search limit for static boundaries (N·m).
pub const BOUNDARY_SEARCH_LIMIT: f64 = 1e3;

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Load mass (kg).
    pub m: f64,
    /// Link length (m).
    pub l: f64,
    /// Gravity (m/s²).
    #[serde(default = "default_gravity")]
    pub g: f64,
    /// Physics timestep (s).
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl BenchConfig {
    pub fn new(m: f64, l: f64) -> Self {
        Self {
            m,
            l,
            g: DEFAULT_GRAVITY,
            dt: DEFAULT_DT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.m >= 0.0
            && self.l >= 0.0
            && self.g > 0.0
            && self.dt > 0.0
            && [self.m, self.l, self.g, self.dt].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid bench configuration {self:?}")))
        }
    }

    /// Total inertia seen by the joint.
    pub fn inertia(&self, j_m: f64) -> f64 {
        self.m * self.l * self.l + j_m
    }

    /// Gravity torque at angle `theta`.
    #[inline]
    pub fn external_torque(&self, theta: f64) -> f64 {
        self.m * self.g * self.l * theta.sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    pub theta: f64,
    pub omega: f64,
}

impl SimState {
    pub fn new(theta: f64, omega: f64) -> Self {
        Self { theta, omega }
    }

    pub fn at_rest(theta: f64) -> Self {
        Self { theta, omega: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.omega.is_finite()
    }
}

/// Torques involved in one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepRecord {
    pub tau_m: f64,
    pub tau_e: f64,
    pub tau_f: f64,
    pub budget: f64,
    pub tau_stop: f64,
}

/// Bench plant with a friction model, ready to integrate.
#[derive(Debug, Clone, Copy)]
pub struct Pendulum {
    bench: BenchConfig,
    friction: FrictionModel,
    inertia: f64,
    inertia_over_dt: f64,
}

impl Pendulum {
    pub fn new(bench: BenchConfig, friction: &FrictionParams, j_m: f64) -> Result<Self> {
        bench.validate()?;
        let friction = friction.model()?;
        let inertia = bench.inertia(j_m);
        if !(inertia > 0.0) || !inertia.is_finite() {
            return Err(Error::Config(format!(
                "total inertia m·l² + J_m must be > 0, got {inertia}"
            )));
        }
        Ok(Self {
            bench,
            friction,
            inertia,
            inertia_over_dt: inertia / bench.dt,
        })
    }

    pub fn bench(&self) -> &BenchConfig {
        &self.bench
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn friction(&self) -> &FrictionModel {
        &self.friction
    }

    /// Integrate one step under motor torque `tau_m`. When the stop torque fits
    /// in the budget the joint stops exactly.
    #[inline]
    pub fn advance(&self, state: SimState, tau_m: f64) -> (SimState, StepRecord) {
        let dt = self.bench.dt;
        let tau_e = self.bench.external_torque(state.theta);
        let budget = self.friction.budget(tau_m, tau_e, state.omega);
        let tau_stop = stop_torque_unchecked(self.inertia_over_dt, state.omega, tau_m, tau_e);
        let tau_f = clip_unchecked(tau_stop, budget);
        let (omega, accel) = if tau_f == tau_stop {
            (0.0, -state.omega / dt)
        } else {
            let accel = (tau_m + tau_e + tau_f) / self.inertia;
            (state.omega + accel * dt, accel)
        };
        let next = SimState {
            omega,
            theta: state.theta + state.omega * dt + accel * 0.5 * dt * dt,
        };
        let record = StepRecord {
            tau_m,
            tau_e,
            tau_f,
            budget,
            tau_stop,
        };
        (next, record)
    }

    /// Velocity the joint would reach without friction.
    pub fn friction_free_velocity(&self, state: SimState, tau_m: f64) -> f64 {
        let tau_e = self.bench.external_torque(state.theta);
        state.omega + (tau_m + tau_e + 0.0) / self.inertia * self.bench.dt
    }
}

/// One full step: servo torque toward `target`, then integration.
pub fn step(
    pendulum: &Pendulum,
    servo: &mut Servo,
    state: SimState,
    target: Option<f64>,
) -> (SimState, StepRecord) {
    let tau_m = servo.torque(state.theta, state.omega, target);
    pendulum.advance(state, tau_m)
}

/// Simulated series, one entry per input target.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    /// Torques of the step leaving sample `k`; the last entry is zero.
    pub tau_m: Vec<f64>,
    pub tau_e: Vec<f64>,
    pub tau_f: Vec<f64>,
    pub budget: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Simulate from `initial`, stepping toward `targets[k + 1]` to produce sample `k + 1`.
///
/// `None` targets release the actuator for that step. `targets[0]` only
/// fixes the series length.
pub fn rollout(
    bench: &BenchConfig,
    actuator: &ActuatorModel,
    friction: &FrictionParams,
    initial: SimState,
    targets: &[Option<f64>],
) -> Result<Rollout> {
    ensure_finite("initial theta", initial.theta)?;
    ensure_finite("initial omega", initial.omega)?;
    let pendulum = Pendulum::new(*bench, friction, actuator.motor.j_m)?;
    let mut servo = Servo::new(*actuator, bench.dt)?;
    let n = targets.len();
    let mut out = Rollout {
        theta: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        tau_m: Vec::with_capacity(n),
        tau_e: Vec::with_capacity(n),
        tau_f: Vec::with_capacity(n),
        budget: Vec::with_capacity(n),
    };
    if n == 0 {
        return Ok(out);
    }
    let mut state = initial;
    out.theta.push(state.theta);
    out.omega.push(state.omega);
    for target in &targets[1..] {
        let (next, rec) = step(&pendulum, &mut servo, state, *target);
        out.tau_m.push(rec.tau_m);
        out.tau_e.push(rec.tau_e);
        out.tau_f.push(rec.tau_f);
        out.budget.push(rec.budget);
        state = next;
        out.theta.push(state.theta);
        out.omega.push(state.omega);
    }
    out.tau_m.push(0.0);
    out.tau_e.push(bench.external_torque(state.theta));
    out.tau_f.push(0.0);
    out.budget.push(0.0);
    Ok(out)
}

/// Sum of `|θ_sim − measured|` over the series, or `None` if the simulation diverges.
///
/// Allocation-free variant of [`rollout`] used by the identification cost.
pub(crate) fn abs_error_sum(
    pendulum: &Pendulum,
    servo: &mut Servo,
    initial: SimState,
    targets: &[Option<f64>],
    measured: &[f64],
) -> Option<f64> {
    debug_assert_eq!(targets.len(), measured.len());
    let mut state = initial;
    let mut sum = (state.theta - measured[0]).abs();
    for (target, m) in targets[1..].iter().zip(&measured[1..]) {
        state = step(pendulum, servo, state, *target).0;
        let err = (state.theta - m).abs();
        if !err.is_finite() || !state.omega.is_finite() {
            return None;
        }
        sum += err;
    }
    Some(sum)
}

/// One side of the static area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Finite(f64),
    /// The static inequality holds over the whole search range.
    Unbounded,
}

impl Boundary {
    pub fn value(&self) -> Option<f64> {
        match self {
            Boundary::Finite(v) => Some(*v),
            Boundary::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Boundary::Unbounded)
    }
}

/// Extremal external torques keeping the joint static at a given motor torque.
///
/// `tau_drive` is the upper end of the static interval, `tau_backdrive` the
/// lower end; both bracket the equilibrium line `τ_e = −τ_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticBoundary {
    pub tau_m: f64,
    pub tau_drive: Boundary,
    pub tau_backdrive: Boundary,
}

/// Static boundaries at rest.
pub fn static_boundary(friction: &FrictionParams, tau_m: f64) -> Result<StaticBoundary> {
    static_boundary_at(friction, tau_m, 0.0)
}

/// Static boundaries with the budget evaluated at speed `velocity`.
pub fn static_boundary_at(
    friction: &FrictionParams,
    tau_m: f64,
    velocity: f64,
) -> Result<StaticBoundary> {
    ensure_finite("tau_m", tau_m)?;
    ensure_finite("velocity", velocity)?;
    let model = friction.model()?;
    let equilibrium = -tau_m;
    if equilibrium.abs() > BOUNDARY_SEARCH_LIMIT {
        return Err(Error::Domain(format!(
            "equilibrium tau_e = {equilibrium} lies outside the search range ±{BOUNDARY_SEARCH_LIMIT}"
        )));
    }
    let margin = |tau_e: f64| model.budget(tau_m, tau_e, velocity) - (tau_m + tau_e).abs();
    let drive = search_boundary(&margin, equilibrium, BOUNDARY_SEARCH_LIMIT, tau_m)?;
    let backdrive = search_boundary(&margin, equilibrium, -BOUNDARY_SEARCH_LIMIT, tau_m)?;
    Ok(StaticBoundary {
        tau_m,
        tau_drive: drive,
        tau_backdrive: backdrive,
    })
}

/// Walk from `start` toward `limit` with geometrically growing steps until the
/// margin turns negative, then bisect.
fn search_boundary(
    margin: &impl Fn(f64) -> f64,
    start: f64,
    limit: f64,
    tau_m: f64,
) -> Result<Boundary> {
    let dir = (limit - start).signum();
    let span = (limit - start).abs();
    let mut inside = start;
    let mut step = 1e-6;
    let outside = loop {
        let probe = if step >= span { limit } else { start + dir * step };
        if margin(probe) < 0.0 {
            break probe;
        }
        inside = probe;
        if probe == limit {
            // Feasible across the whole range: unbounded only if the
            // margin is not shrinking toward the edge.
            let mid = start + (limit - start) * 0.5;
            return if margin(limit) >= margin(mid) {
                Ok(Boundary::Unbounded)
            } else {
                Err(Error::RangeExhausted {
                    tau_m,
                    limit: BOUNDARY_SEARCH_LIMIT,
                })
            };
        }
        step *= 2.0;
    };
    let (mut lo, mut hi) = (inside, outside);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if margin(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Boundary::Finite(lo + 0.0))
}

/// One row of a drive/backdrive diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramRow {
    pub tau_m: f64,
    pub velocity: f64,
    pub tau_drive: Boundary,
    pub tau_backdrive: Boundary,
}

/// Static boundaries over a motor-torque grid, one curve pair per velocity level.
pub fn diagram(
    friction: &FrictionParams,
    tau_m_grid: &[f64],
    velocity_levels: &[f64],
) -> Result<Vec<DiagramRow>> {
    if tau_m_grid.is_empty() {
        return Err(Error::Config("diagram needs a non-empty tau_m grid".into()));
    }
    let levels: &[f64] = if velocity_levels.is_empty() {
        &[0.0]
    } else {
        velocity_levels
    };
    let mut rows = Vec::with_capacity(tau_m_grid.len() * levels.len());
    for &tau_m in tau_m_grid {
        for &v in levels {
            let b = static_boundary_at(friction, tau_m, v)?;
            rows.push(DiagramRow {
                tau_m,
                velocity: v,
                tau_drive: b.tau_drive,
                tau_backdrive: b.tau_backdrive,
            });
        }
    }
    Ok(rows)
}

/// Token written for an unbounded boundary in diagram tables.
pub const UNBOUNDED_TOKEN: &str = "unbounded";

/// Render a diagram as comma-separated text with a header line.
pub fn diagram_to_csv(rows: &[DiagramRow]) -> String {
    let cell = |b: &Boundary| match b {
        Boundary::Finite(v) => v.to_string(),
        Boundary::Unbounded => UNBOUNDED_TOKEN.to_string(),
    };
    let mut out = String::from("tau_m,velocity_level,tau_drive,tau_backdrive\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.tau_m,
            r.velocity,
            cell(&r.tau_drive),
            cell(&r.tau_backdrive)
        ));
    }
    out
}

/// Parse text produced by [`diagram_to_csv`].
pub fn diagram_from_csv(text: &str) -> Result<Vec<DiagramRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("tau_m,velocity_level,tau_drive,tau_backdrive") => {}
        other => return Err(Error::Data(format!("unexpected diagram header {other:?}"))),
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Data(format!("bad number '{s}' in diagram")))
    };
    let bound = |s: &str| -> Result<Boundary> {
        if s == UNBOUNDED_TOKEN {
            Ok(Boundary::Unbounded)
        } else {
            num(s).map(Boundary::Finite)
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Data(format!("expected 4 columns: '{line}'")));
            }
            Ok(DiagramRow {
                tau_m: num(cols[0])?,
                velocity: num(cols[1])?,
                tau_drive: bound(cols[2])?,
                tau_backdrive: bound(cols[3])?,
            })
        })
        .collect()
}

/// Coulomb-Viscous coefficients reproducing the extended budget at the current state.
///
/// Uses the previous step's external torque, since an engine resolves
/// constraint and friction torques together.
pub fn equivalent_cv_params(
    friction: &FrictionParams,
    tau_m: f64,
    tau_e_prev: f64,
    omega: f64,
) -> Result<(f64, f64)> {
    ensure_finite("tau_m", tau_m)?;
    ensure_finite("tau_e_prev", tau_e_prev)?;
    ensure_finite("omega", omega)?;
    let model = friction.model()?;
    Ok((model.coulomb_part(tau_m, tau_e_prev, omega), model.k_v()))
}

/// Per-step feed of equivalent Coulomb-Viscous coefficients to an external engine.
#[derive(Debug, Clone)]
pub struct CvAdapter {
    model: FrictionModel,
    prev_tau_e: f64,
}

impl CvAdapter {
    pub fn new(friction: &FrictionParams) -> Result<Self> {
        Ok(Self {
            model: friction.model()?,
            prev_tau_e: 0.0,
        })
    }

    /// `(K_c_eff, K_v_eff)` for the coming step.
    pub fn coefficients(&self, tau_m: f64, omega: f64) -> (f64, f64) {
        (
            self.model.coulomb_part(tau_m, self.prev_tau_e, omega),
            self.model.k_v(),
        )
    }

    /// Record the external torque the engine resolved this step.
    pub fn observe(&mut self, tau_e: f64) {
        self.prev_tau_e = tau_e;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuator::{ControlLaw, MotorElectrical, PidGains};
    use crate::friction::{friction_budget, FrictionInputs};

    fn motor(j_m: f64) -> MotorElectrical {
        MotorElectrical {
            k_t: 1.5,
            r: 5.0,
            u_max: 12.0,
            i_heat: None,
            j_m,
        }
    }

    fn released(j_m: f64) -> ActuatorModel {
        ActuatorModel {
            law: ControlLaw::TorqueOff,
            motor: motor(j_m),
            control_period: DEFAULT_DT,
        }
    }

    #[test]
    fn stop_within_one_step() {
        let bench = BenchConfig::new(0.0, 0.0);
        let p = Pendulum::new(bench, &FrictionParams::coulomb_viscous(0.0, 20.0), 0.01).unwrap();
        let (next, rec) = p.advance(SimState::new(0.0, 1.0), 0.0);
        assert!((rec.tau_stop + 10.0).abs() < 1e-12);
        assert!(next.omega.abs() < 1e-15);
        assert!((next.theta - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let bench = BenchConfig::new(1.0, 0.2);
        let out = rollout(
            &bench,
            &released(0.01),
            &FrictionParams::coulomb_viscous(0.1, 0.0),
            SimState::at_rest(0.0),
            &[None; 50],
        )
        .unwrap();
        assert!(out.theta.iter().all(|&t| t == 0.0));
        assert!(out.omega.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn horizontal_release_acceleration() {
        let bench = BenchConfig::new(1.0, 0.1);
        let p = Pendulum::new(bench, &FrictionParams::coulomb_viscous(0.0, 0.0), 0.0).unwrap();
        let (next, rec) = p.advance(SimState::at_rest(std::f64::consts::FRAC_PI_2), 0.0);
        let accel = next.omega / bench.dt;
        assert!((rec.tau_e - 0.981).abs() < 1e-12);
        assert!((accel - 98.1).abs() < 1e-9, "{accel}");
    }

    #[test]
    fn massless_without_armature_rejected() {
        let bench = BenchConfig::new(0.0, 0.3);
        let err = rollout(
            &bench,
            &released(0.0),
            &FrictionParams::coulomb_viscous(0.1, 0.1),
            SimState::default(),
            &[None; 3],
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn rollout_length_matches_targets() {
        let bench = BenchConfig::new(0.5, 0.1);
        let act = ActuatorModel {
            law: ControlLaw::VoltagePid(PidGains::proportional(8.0)),
            ..released(0.01)
        };
        let targets: Vec<Option<f64>> = (0..100).map(|k| Some(3.0 + k as f64 * 1e-3)).collect();
        let out = rollout(
            &bench,
            &act,
            &FrictionParams::coulomb_viscous(0.05, 0.05),
            SimState::at_rest(3.0),
            &targets,
        )
        .unwrap();
        assert_eq!(out.len(), 100);
        assert_eq!(out.tau_f.len(), 100);
        for (f, b) in out.tau_f.iter().zip(&out.budget) {
            assert!(f.abs() <= *b);
        }
    }

    #[test]
    fn m1_boundary_offsets() {
        let b = static_boundary(&FrictionParams::coulomb_viscous(0.3, 0.2), 1.0).unwrap();
        assert!((b.tau_drive.value().unwrap() + 0.8).abs() < 1e-9);
        assert!((b.tau_backdrive.value().unwrap() + 1.2).abs() < 1e-9);
    }

    #[test]
    fn frictionless_boundary_collapses() {
        let b = static_boundary(&FrictionParams::coulomb_viscous(0.0, 0.0), 0.0).unwrap();
        assert_eq!(b.tau_drive, Boundary::Finite(0.0));
        assert_eq!(b.tau_backdrive, Boundary::Finite(0.0));
    }

    #[test]
    fn self_locking_backdrive_unbounded() {
        let p = FrictionParams::M5 {
            k_v: 0.1,
            k_c: 0.1,
            k_m: 0.05,
            k_e: 0.05,
            k_cs: 0.1,
            k_ms: 0.1,
            k_es: 1.5,
            v_s: 0.5,
            alpha: 1.0,
        };
        let b = static_boundary(&p, 2.0).unwrap();
        assert!(b.tau_backdrive.is_unbounded());
    }

    #[test]
    fn huge_coulomb_exhausts_range() {
        let p = FrictionParams::coulomb_viscous(0.0, 5e3);
        assert!(matches!(
            static_boundary(&p, 0.0),
            Err(Error::RangeExhausted { .. })
        ));
    }

    #[test]
    fn diagram_rows_and_csv() {
        let p = FrictionParams::coulomb_viscous(0.1, 0.2);
        let rows = diagram(&p, &[-1.0, 0.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(rows.len(), 9);
        let back = diagram_from_csv(&diagram_to_csv(&rows)).unwrap();
        assert_eq!(back, rows);
        assert!(diagram(&p, &[], &[0.0]).is_err());
    }

    #[test]
    fn equivalent_cv_examples() {
        let m1 = FrictionParams::coulomb_viscous(0.1, 0.2);
        assert_eq!(equivalent_cv_params(&m1, 3.0, -1.0, 2.0).unwrap(), (0.2, 0.1));
        let m3 = FrictionParams::M3 {
            k_v: 0.1,
            k_c: 0.2,
            k_l: 0.05,
        };
        let (kc, kv) = equivalent_cv_params(&m3, 1.0, -1.0, 0.0).unwrap();
        assert!((kc - 0.3).abs() < 1e-15);
        assert_eq!(kv, 0.1);
    }

    #[test]
    fn cv_adapter_uses_previous_external_torque() {
        let m3 = FrictionParams::M3 {
            k_v: 0.1,
            k_c: 0.2,
            k_l: 0.5,
        };
        let mut adapter = CvAdapter::new(&m3).unwrap();
        assert_eq!(adapter.coefficients(1.0, 0.0).0, 0.2 + 0.5);
        adapter.observe(-1.0);
        let (kc, kv) = adapter.coefficients(1.0, 0.5);
        let budget = friction_budget(&m3, FrictionInputs::new(1.0, -1.0, 0.5)).unwrap();
        assert_eq!(kc + kv * 0.5, budget);
    }
}

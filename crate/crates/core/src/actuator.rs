//! Servo actuator models: a position control law feeding a DC motor model.
//!
//! The control law turns `(θ, θ̇, θ^d)` into an electrical command (a voltage
//! or a current), and the motor model turns the command into the motor
//! torque `τ_m`. `TorqueOff` models a released actuator: no torque and no
//! back-EMF braking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical constants of the motor and reducer, reflected to the output shaft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorElectrical {
    /// Torque constant including the gear ratio (N·m/A).
    pub k_t: f64,
    /// Winding resistance (Ω).
    #[serde(rename = "R")]
    pub r: f64,
    /// Supply voltage (V).
    #[serde(rename = "U_max")]
    pub u_max: f64,
    /// Thermal current limit (A); `None` means unlimited.
    #[serde(rename = "I_heat", default, skip_serializing_if = "Option::is_none")]
    pub i_heat: Option<f64>,
    /// Apparent (armature) inertia at the output (kg·m²).
    #[serde(rename = "J_m")]
    pub j_m: f64,
}

impl MotorElectrical {
    pub fn validate(&self) -> Result<()> {
        let positive = [("k_t", self.k_t), ("R", self.r), ("U_max", self.u_max)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if let Some(i) = self.i_heat {
            if !(i > 0.0) {
                return Err(Error::Config(format!("I_heat must be > 0, got {i}")));
            }
        }
        if !(self.j_m >= 0.0 && self.j_m.is_finite()) {
            return Err(Error::Config(format!("J_m must be finite and >= 0, got {}", self.j_m)));
        }
        Ok(())
    }

    /// Torque produced by voltage `u` at velocity `omega` (drive/brake controller).
    #[inline]
    pub fn voltage_torque(&self, u: f64, omega: f64) -> f64 {
        self.k_t / self.r * u - self.k_t * self.k_t / self.r * omega
    }

    /// Achievable current interval at velocity `omega`.
    ///
    /// The back-EMF bounds are taken per direction,
    /// `[(−U_max − k_t θ̇)/R, (U_max − k_t θ̇)/R]`, then intersected with
    /// `±I_heat`. If the two intervals are disjoint (back-EMF beyond
    /// `U_max + R·I_heat`) the heat limit wins and the interval collapses to
    /// the heat bound closest to the EMF interval.
    pub fn current_bounds(&self, omega: f64) -> (f64, f64) {
        let emf = self.k_t * omega;
        let emf_lo = (-self.u_max - emf) / self.r;
        let emf_hi = (self.u_max - emf) / self.r;
        let heat = self.i_heat.unwrap_or(f64::INFINITY);
        let lo = emf_lo.max(-heat);
        let hi = emf_hi.min(heat);
        if lo <= hi {
            (lo, hi)
        } else if emf_hi < -heat {
            (-heat, -heat)
        } else {
            (heat, heat)
        }
    }
}

/// PID gains. Derivative acts on the measured velocity, the integral is
/// clamped to `±i_clamp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
    /// Bound on the error integral (rad·s).
    #[serde(default = "default_i_clamp")]
    pub i_clamp: f64,
}

fn default_i_clamp() -> f64 {
    1.0
}

impl PidGains {
    pub fn proportional(kp: f64) -> Self {
        Self {
            kp,
            ki: 0.0,
            kd: 0.0,
            i_clamp: default_i_clamp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("gain {name} must be finite and >= 0, got {v}")));
            }
        }
        if self.ki > 0.0 && !(self.i_clamp > 0.0) {
            return Err(Error::Config("i_clamp must be > 0 when ki > 0".into()));
        }
        Ok(())
    }
}

/// Mutable PID state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
}

impl PidState {
    /// Controller output for position error `θ^d − θ`; advances the integral by `dt`.
    #[inline]
    pub fn update(&mut self, gains: &PidGains, theta: f64, omega: f64, target: f64, dt: f64) -> f64 {
        let error = target - theta;
        if gains.ki != 0.0 {
            self.integral = (self.integral + error * dt).clamp(-gains.i_clamp, gains.i_clamp);
        }
        gains.kp * error + gains.ki * self.integral - gains.kd * omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlLaw {
    VoltagePid(PidGains),
    CurrentPid(PidGains),
    TorqueOff,
}

impl ControlLaw {
    pub fn name(&self) -> &'static str {
        match self {
            ControlLaw::VoltagePid(_) => "voltage",
            ControlLaw::CurrentPid(_) => "current",
            ControlLaw::TorqueOff => "off",
        }
    }

    pub fn gains(&self) -> Option<&PidGains> {
        match self {
            ControlLaw::VoltagePid(g) | ControlLaw::CurrentPid(g) => Some(g),
            ControlLaw::TorqueOff => None,
        }
    }

    pub fn gains_mut(&mut self) -> Option<&mut PidGains> {
        match self {
            ControlLaw::VoltagePid(g) | ControlLaw::CurrentPid(g) => Some(g),
            ControlLaw::TorqueOff => None,
        }
    }
}

/// Control law, motor constants and controller update period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActuatorDoc", into = "ActuatorDoc")]
pub struct ActuatorModel {
    pub law: ControlLaw,
    pub motor: MotorElectrical,
    /// Controller update period (s), an integer multiple of the physics timestep.
    pub control_period: f64,
}

impl ActuatorModel {
    pub fn validate(&self) -> Result<()> {
        self.motor.validate()?;
        if let Some(g) = self.law.gains() {
            g.validate()?;
        }
        if !(self.control_period > 0.0 && self.control_period.is_finite()) {
            return Err(Error::Config(format!(
                "control period must be > 0, got {}",
                self.control_period
            )));
        }
        Ok(())
    }

    /// Number of physics steps per controller update.
    pub fn decimation(&self, dt: f64) -> Result<u32> {
        let ratio = self.control_period / dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * n {
            return Err(Error::Config(format!(
                "control period {} s is not a positive integer multiple of dt = {} s",
                self.control_period, dt
            )));
        }
        Ok(n as u32)
    }
}

/// Flat serialized form of [`ActuatorModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActuatorDoc {
    law: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ki: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    i_clamp: Option<f64>,
    k_t: f64,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "U_max")]
    u_max: f64,
    #[serde(rename = "I_heat", default, skip_serializing_if = "Option::is_none")]
    i_heat: Option<f64>,
    #[serde(rename = "J_m")]
    j_m: f64,
    control_period: f64,
}

impl TryFrom<ActuatorDoc> for ActuatorModel {
    type Error = Error;

    fn try_from(d: ActuatorDoc) -> Result<Self> {
        let gains = || -> Result<PidGains> {
            Ok(PidGains {
                kp: d
                    .kp
                    .ok_or_else(|| Error::Config(format!("law '{}' requires kp", d.law)))?,
                ki: d.ki.unwrap_or(0.0),
                kd: d.kd.unwrap_or(0.0),
                i_clamp: d.i_clamp.unwrap_or_else(default_i_clamp),
            })
        };
        let law = match d.law.as_str() {
            "voltage" => ControlLaw::VoltagePid(gains()?),
            "current" => ControlLaw::CurrentPid(gains()?),
            "off" => ControlLaw::TorqueOff,
            other => return Err(Error::Config(format!("unknown control law '{other}'"))),
        };
        let model = ActuatorModel {
            law,
            motor: MotorElectrical {
                k_t: d.k_t,
                r: d.r,
                u_max: d.u_max,
                i_heat: d.i_heat,
                j_m: d.j_m,
            },
            control_period: d.control_period,
        };
        model.validate()?;
        Ok(model)
    }
}

impl From<ActuatorModel> for ActuatorDoc {
    fn from(a: ActuatorModel) -> Self {
        let g = a.law.gains().copied();
        ActuatorDoc {
            law: a.law.name().to_string(),
            kp: g.map(|g| g.kp),
            ki: g.map(|g| g.ki),
            kd: g.map(|g| g.kd),
            i_clamp: g.map(|g| g.i_clamp),
            k_t: a.motor.k_t,
            r: a.motor.r,
            u_max: a.motor.u_max,
            i_heat: a.motor.i_heat,
            j_m: a.motor.j_m,
            control_period: a.control_period,
        }
    }
}

/// Result of one voltage-law update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageOutput {
    pub voltage: f64,
    pub tau_m: f64,
}

/// Result of one current-law update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentOutput {
    pub current: f64,
    pub tau_m: f64,
}

/// Voltage law: saturate the PID output at `±U_max`, then apply the DC motor
/// equation including back-EMF.
pub fn voltage_step(
    motor: &MotorElectrical,
    gains: &PidGains,
    pid: &mut PidState,
    theta: f64,
    omega: f64,
    target: f64,
    dt: f64,
) -> VoltageOutput {
    let raw = pid.update(gains, theta, omega, target, dt);
    let voltage = raw.clamp(-motor.u_max, motor.u_max);
    VoltageOutput {
        voltage,
        tau_m: motor.voltage_torque(voltage, omega),
    }
}

/// Current law: saturate the PID output to the achievable current interval.
pub fn current_step(
    motor: &MotorElectrical,
    gains: &PidGains,
    pid: &mut PidState,
    theta: f64,
    omega: f64,
    target: f64,
    dt: f64,
) -> CurrentOutput {
    let raw = pid.update(gains, theta, omega, target, dt);
    let (lo, hi) = motor.current_bounds(omega);
    let current = raw.clamp(lo, hi);
    CurrentOutput {
        current,
        tau_m: motor.k_t * current,
    }
}

/// Released actuator: zero torque, no back-EMF.
#[inline]
pub fn torque_off_step() -> f64 {
    0.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Command {
    Voltage(f64),
    Current(f64),
}

/// Stateful servo: control law with decimated updates.
///
/// Between controller updates the last electrical command is held; for the
/// voltage law the back-EMF term is still evaluated at every physics step.
#[derive(Debug, Clone)]
pub struct Servo {
    model: ActuatorModel,
    dt: f64,
    decimation: u32,
    pid: PidState,
    held: Option<Command>,
    since_update: u32,
}

impl Servo {
    pub fn new(model: ActuatorModel, dt: f64) -> Result<Self> {
        model.validate()?;
        let decimation = model.decimation(dt)?;
        Ok(Self {
            model,
            dt,
            decimation,
            pid: PidState::default(),
            held: None,
            since_update: 0,
        })
    }

    pub fn model(&self) -> &ActuatorModel {
        &self.model
    }

    pub fn pid_state(&self) -> PidState {
        self.pid
    }

    /// Motor torque for the current state. `target = None` releases the actuator.
    #[inline]
    pub fn torque(&mut self, theta: f64, omega: f64, target: Option<f64>) -> f64 {
        let Some(target) = target else {
            self.held = None;
            return torque_off_step();
        };
        let motor = &self.model.motor;
        if self.held.is_none() || self.since_update >= self.decimation {
            let period = self.dt * self.decimation as f64;
            self.since_update = 0;
            self.held = match &self.model.law {
                ControlLaw::VoltagePid(g) => Some(Command::Voltage(
                    voltage_step(motor, g, &mut self.pid, theta, omega, target, period).voltage,
                )),
                ControlLaw::CurrentPid(g) => Some(Command::Current(
                    current_step(motor, g, &mut self.pid, theta, omega, target, period).current,
                )),
                ControlLaw::TorqueOff => None,
            };
        }
        self.since_update += 1;
        match self.held {
            Some(Command::Voltage(u)) => motor.voltage_torque(u, omega),
            Some(Command::Current(i)) => motor.k_t * i,
            None => torque_off_step(),
        }
    }
}

//! Servo actuator friction models, a pendulum bench simulator and CMA-ES
//! identification of friction parameters from trajectory logs.
//!
//! The crate is organised bottom-up:
//!
//! * [`friction`]: the six friction models and the stop/clip rule;
//! * [`actuator`]: voltage- and current-controlled servo laws;
//! * [`sim`]: pendulum integration, static boundaries, equivalent
//!   Coulomb-viscous coefficients;
//! * [`dataset`]: trajectory logs, synthetic data and the seeded split;
//! * [`ident`]: parameter spaces, cost and CMA-ES identification;
//! * [`cli`]: the `servosim` command-line front end.

pub mod actuator;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod friction;
pub mod ident;
pub mod sim;

pub use actuator::{ActuatorModel, ControlLaw, MotorElectrical, PidGains, Servo};
pub use dataset::{Family, Manifest, TrajectoryLog, TrajectoryType};
pub use error::{Error, Result};
pub use friction::{friction_budget, FrictionInputs, FrictionModel, FrictionParams, ModelTag};
pub use ident::{identify, IdentResult, IdentifyOptions, ParamSpace};
pub use sim::{rollout, BenchConfig, Boundary, Pendulum, SimState, StaticBoundary};

//! Simulation and design analysis of a two-speed hydrostatic actuator.

// NaN must fail range checks, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod model;
pub mod sim;
pub mod valve;

pub use config::Config;
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{derived_constants, ActuatorParams, DerivedConstants, LoadScenario};

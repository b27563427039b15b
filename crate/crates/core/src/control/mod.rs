//! Low-level control: per-mode motor and valve commands, contact-triggered
//! downshift, stroke sharing between the two masters and the mode graph.

mod contact;
mod controller;
mod pid;
mod script;

pub use contact::{detect_contact, ContactDetector};
pub use controller::{Controller, Rejection};
pub use pid::{pid_step, PidGains, PidLimits, PidState};
pub use script::{HighLevelRefs, Script, ScriptSegment};

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControlMode {
    Hs,
    Downshifting,
    Hf,
    Upshifting,
    Braking,
}

impl ControlMode {
    pub const ALL: [ControlMode; 5] = [
        ControlMode::Hs,
        ControlMode::Downshifting,
        ControlMode::Hf,
        ControlMode::Upshifting,
        ControlMode::Braking,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ControlMode::Hs => "HS",
            ControlMode::Downshifting => "DOWNSHIFTING",
            ControlMode::Hf => "HF",
            ControlMode::Upshifting => "UPSHIFTING",
            ControlMode::Braking => "BRAKING",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
    }

    /// Directed edges of the mode graph.
    pub fn successors(self) -> &'static [ControlMode] {
        use ControlMode::*;
        match self {
            Hs => &[Downshifting, Braking],
            Downshifting => &[Hf],
            Hf => &[Upshifting],
            Upshifting => &[Hs],
            Braking => &[Hs],
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Mode the high-level sequence currently asks for. Held as a level, not an
/// edge: the script keeps asserting it every tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeRequest {
    HighSpeed,
    /// Stay in, or downshift into, high force. From HS the downshift itself
    /// still waits for a detected contact.
    HighForce,
    Brake,
}

impl ModeRequest {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hs" | "high_speed" => Some(Self::HighSpeed),
            "hf" | "high_force" => Some(Self::HighForce),
            "brake" | "braking" => Some(Self::Brake),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Events {
    pub contact: bool,
    pub valve_closed: bool,
    pub valve_open: bool,
    pub request: Option<ModeRequest>,
}

/// Mode after one tick, plus a diagnostic when the request cannot be served
/// from the current mode.
pub fn next_mode(mode: ControlMode, ev: &Events) -> (ControlMode, Option<String>) {
    use ControlMode::*;
    use ModeRequest::*;
    let reject = |req: ModeRequest| {
        Some(format!(
            "request {req:?} is not available from {mode}; ignored"
        ))
    };
    match (mode, ev.request) {
        (Hs, Some(Brake)) => (Braking, None),
        (Hs, _) if ev.contact => (Downshifting, None),
        (Hs, _) => (Hs, None),
        (Downshifting, Some(r @ (HighSpeed | Brake))) => {
            (if ev.valve_closed { Hf } else { Downshifting }, reject(r))
        }
        (Downshifting, _) => (if ev.valve_closed { Hf } else { Downshifting }, None),
        (Hf, Some(HighSpeed)) => (Upshifting, None),
        (Hf, Some(Brake)) => (Hf, reject(Brake)),
        (Hf, _) => (Hf, None),
        (Upshifting, Some(r @ (HighForce | Brake))) => {
            (if ev.valve_open { Hs } else { Upshifting }, reject(r))
        }
        (Upshifting, _) => (if ev.valve_open { Hs } else { Upshifting }, None),
        (Braking, Some(HighSpeed)) => (Hs, None),
        (Braking, Some(HighForce)) => (Braking, reject(HighForce)),
        (Braking, _) => (Braking, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlCommand {
    /// EM1 current, A.
    pub i1: f64,
    /// EM2 speed setpoint, rad/s.
    pub w2_cmd: f64,
    /// EM2 current produced by the velocity loop, A.
    pub i2: f64,
    /// Valve angle setpoint, rad.
    pub phi_cmd: f64,
}

/// What the controller can measure at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorFrame {
    pub time: f64,
    /// Slave piston position, m.
    pub knee_position: f64,
    pub knee_velocity: f64,
    pub slave_pressure: f64,
    pub x1: f64,
    pub x2: f64,
    pub valve_angle: f64,
    /// EM2 shaft speed from its encoder, rad/s.
    pub em2_velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactThresholds {
    pub pressure_threshold: f64,
    pub consecutive_frames: usize,
    /// Extension speed required at the start of the window, m/s.
    pub min_approach_speed: f64,
    /// Required loss of extension speed across the window, m/s.
    pub min_velocity_drop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub rate_hz: f64,
    /// Throttle angle held in BRAKING, rad.
    pub braking_angle: f64,
    pub contact: ContactThresholds,
    pub em2_velocity: PidGains,
    pub stroke_hs: PidGains,
    pub stroke_hf: PidGains,
}

impl ControlConfig {
    pub fn period(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub(crate) fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            errors.push(format!(
                "control.rate_hz must be > 0 (got {})",
                self.rate_hz
            ));
        }
        if !(self.braking_angle >= 0.0 && self.braking_angle <= std::f64::consts::FRAC_PI_2) {
            errors.push("control.braking_angle_deg must lie in [0, 90]".into());
        }
        let c = &self.contact;
        if !c.pressure_threshold.is_finite() {
            errors.push("control.contact.pressure_threshold_pa must be finite".into());
        }
        if c.consecutive_frames == 0 {
            errors.push("control.contact.consecutive_frames must be >= 1".into());
        }
        if !(c.min_approach_speed >= 0.0 && c.min_velocity_drop >= 0.0) {
            errors.push("control.contact speed thresholds must be >= 0".into());
        }
        for (name, g) in [
            ("em2_velocity", &self.em2_velocity),
            ("stroke_hs", &self.stroke_hs),
            ("stroke_hf", &self.stroke_hf),
        ] {
            if ![g.kp, g.ki, g.kd]
                .iter()
                .all(|x| x.is_finite() && *x >= 0.0)
            {
                errors.push(format!("control.{name} gains must be finite and >= 0"));
            }
        }
        errors
    }
}

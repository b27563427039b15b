//! Scenario files: initial state, motion script, load schedule and the
//! targets a run is expected to meet.
//!
//! ```toml
//! name = "swing-only"
//! duration_s = 0.4
//! initial_mode = "HS"
//!
//! [[script]]
//! t_s = 0.0
//! request = "hs"
//! current_frac = 0.5
//!
//! [[load]]
//! trigger = "start"
//! load = "swing"
//! ```

use std::path::Path;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::config::toml_error;
use crate::control::{ControlMode, HighLevelRefs, Script, ScriptSegment};
use crate::dynamics::{ActuationInput, ContinuousState};
use crate::error::{Error, Result};
use crate::model::{ActuatorParams, LoadScenario};
use crate::sim::impact::contact_speed;

pub const BUILTIN_NAMES: [&str; 4] = ["gait", "drop", "swing-only", "lift-only"];

fn builtin_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "gait" => include_str!("../../data/scenarios/gait.toml"),
        "drop" => include_str!("../../data/scenarios/drop.toml"),
        "swing-only" => include_str!("../../data/scenarios/swing-only.toml"),
        "lift-only" => include_str!("../../data/scenarios/lift-only.toml"),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlSpec {
    Closed {
        initial_mode: ControlMode,
        script: Script,
    },
    /// Constant actuation, no controller.
    Open(ActuationInput),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trigger {
    Start,
    Time(f64),
    /// Output pressed into a ground stop and no longer extending faster
    /// than `speed`, or `latest` seconds reached, whichever is first.
    GroundArrest {
        speed: f64,
        latest: f64,
    },
    /// Drop impact at the free-fall contact time.
    Impact(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadSource {
    /// A `load.<label>.*` case from the config.
    Label(String),
    Inline(LoadScenario),
}

impl LoadSource {
    pub fn resolve(&self, params: &ActuatorParams) -> Result<LoadScenario> {
        match self {
            LoadSource::Inline(l) => Ok(l.clone()),
            LoadSource::Label(label) => params.scenario(label).cloned().ok_or_else(|| {
                Error::Validation(vec![format!("scenario refers to unknown load `{label}`")])
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LowerStop {
    /// The output stroke minimum.
    #[default]
    Stroke,
    At(f64),
    /// Wherever the output is when the entry fires.
    Current,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadEntry {
    pub trigger: Trigger,
    pub load: LoadSource,
    /// Extra stop limiting extension (ground). `None` leaves the stroke end.
    pub upper_stop: Option<f64>,
    pub lower_stop: LowerStop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropSpec {
    pub height: f64,
    /// Total dropped mass, kg.
    pub mass: f64,
    pub force_ratio: f64,
    pub gravity: f64,
}

impl DropSpec {
    pub fn contact_time(&self) -> f64 {
        (2.0 * self.height / self.gravity).sqrt()
    }

    pub fn contact_speed(&self) -> f64 {
        contact_speed(self.height, self.gravity)
    }

    /// Dropped mass and weight seen at the output piston.
    pub fn reflected_load(&self) -> LoadScenario {
        LoadScenario::new(
            "drop",
            self.mass * self.force_ratio * self.force_ratio,
            self.mass * self.gravity * self.force_ratio,
        )
    }
}

/// Targets checked by `--strict` runs and the acceptance tests.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub contact: Option<bool>,
    pub max_contact_delay_s: Option<f64>,
    pub downshift_s: Option<[f64; 2]>,
    pub upshift_s: Option<[f64; 2]>,
    pub min_hold_force_n: Option<f64>,
    pub peak_braking_force_n: Option<f64>,
    pub peak_throttle_power_w: Option<f64>,
    pub max_energy_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub duration: f64,
    pub dt: Option<f64>,
    pub initial: ContinuousState,
    pub control: ControlSpec,
    pub schedule: Vec<LoadEntry>,
    pub drop: Option<DropSpec>,
    pub expect: Expectations,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    duration_s: f64,
    dt_s: Option<f64>,
    initial_mode: Option<String>,
    open_loop: Option<RawOpenLoop>,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    script: Vec<ScriptSegment>,
    #[serde(default)]
    load: Vec<RawLoad>,
    drop: Option<RawDrop>,
    #[serde(default)]
    expect: Expectations,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOpenLoop {
    #[serde(default)]
    i1_a: f64,
    #[serde(default)]
    i2_a: f64,
    #[serde(default)]
    valve_angle_deg: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawInitial {
    x_o_m: f64,
    x1_m: f64,
    x2_m: f64,
    v_o_mps: f64,
    v1_mps: f64,
    v2_mps: f64,
    valve_angle_deg: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    trigger: String,
    t_s: Option<f64>,
    arrest_speed_mps: Option<f64>,
    latest_s: Option<f64>,
    load: Option<String>,
    label: Option<String>,
    mass_kg: Option<f64>,
    external_force_n: Option<f64>,
    loss_coeff_ns_per_m: Option<f64>,
    upper_stop_m: Option<f64>,
    lower_stop_m: Option<f64>,
    #[serde(default)]
    lower_stop_at_current: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrop {
    height_m: f64,
    mass_kg: f64,
    force_ratio: f64,
    #[serde(default = "default_gravity")]
    gravity_mps2: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl Scenario {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = builtin_text(name).ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
        Self::from_toml_str(text)
    }

    /// A built-in name, or else a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if builtin_text(name_or_path).is_some() {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        if path.is_file() {
            return Self::load(path);
        }
        Err(Error::UnknownScenario(name_or_path.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        let mut errors = Vec::new();

        let control = match (&raw.initial_mode, &raw.open_loop) {
            (Some(mode), None) => match ControlMode::from_label(mode) {
                Some(initial_mode) => match Script::new(raw.script.clone()) {
                    Ok(script) => Some(ControlSpec::Closed {
                        initial_mode,
                        script,
                    }),
                    Err(Error::Validation(e)) => {
                        errors.extend(e);
                        None
                    }
                    Err(e) => return Err(e),
                },
                None => {
                    errors.push(format!("unknown initial_mode `{mode}`"));
                    None
                }
            },
            (None, Some(ol)) => Some(ControlSpec::Open(ActuationInput {
                i1: ol.i1_a,
                i2: ol.i2_a,
                valve_angle: ol.valve_angle_deg.to_radians(),
            })),
            _ => {
                errors.push("give exactly one of initial_mode or [open_loop]".into());
                None
            }
        };

        let i = &raw.initial;
        let initial = ContinuousState {
            x_o: i.x_o_m,
            x1: i.x1_m,
            x2: i.x2_m,
            v_o: i.v_o_mps,
            v1: i.v1_mps,
            v2: i.v2_mps,
            valve_angle: i.valve_angle_deg.to_radians(),
            compression: 0.0,
        };

        let drop = raw.drop.as_ref().map(|d| DropSpec {
            height: d.height_m,
            mass: d.mass_kg,
            force_ratio: d.force_ratio,
            gravity: d.gravity_mps2,
        });
        if let Some(d) = &drop {
            if !(d.height > 0.0 && d.mass > 0.0 && d.force_ratio > 0.0 && d.gravity > 0.0) {
                errors.push("[drop] values must all be > 0".into());
            }
        }

        let mut schedule = Vec::new();
        for (n, l) in raw.load.iter().enumerate() {
            match parse_load(l) {
                Ok(entry) => schedule.push(entry),
                Err(e) => errors.push(format!("load entry {}: {e}", n + 1)),
            }
        }
        if let Some(d) = drop.filter(|d| d.height > 0.0 && d.gravity > 0.0) {
            let tc = d.contact_time();
            let at = schedule
                .iter()
                .position(|e| matches!(e.trigger, Trigger::Time(t) if t > tc))
                .unwrap_or(schedule.len());
            schedule.insert(
                at,
                LoadEntry {
                    trigger: Trigger::Impact(tc),
                    load: LoadSource::Inline(d.reflected_load()),
                    upper_stop: None,
                    lower_stop: LowerStop::Stroke,
                },
            );
        }
        if !matches!(schedule.first().map(|e| e.trigger), Some(Trigger::Start)) {
            errors.push("the first [[load]] entry must have trigger = \"start\"".into());
        }
        let mut last_time = 0.0;
        for e in &schedule {
            let t = match e.trigger {
                Trigger::Start => 0.0,
                Trigger::Time(t) | Trigger::Impact(t) => t,
                Trigger::GroundArrest { .. } => continue,
            };
            if t < last_time {
                errors.push(format!(
                    "load schedule times must be ordered ({t} after {last_time})"
                ));
            }
            last_time = t;
        }

        if !(raw.duration_s > 0.0 && raw.duration_s.is_finite()) {
            errors.push("duration_s must be > 0".into());
        }
        if let Some(dt) = raw.dt_s {
            if !(dt > 0.0 && dt <= raw.duration_s) {
                errors.push("dt_s must lie in (0, duration_s]".into());
            }
        }
        let closed = initial.valve_angle >= std::f64::consts::FRAC_PI_2 - 1e-9;
        if !closed && initial.constraint_residual().abs() > 1e-12 {
            errors.push("initial velocities must satisfy v_o = v1 + v2 with the valve open".into());
        }
        if closed && (initial.v_o - initial.v2).abs() > 1e-12 {
            errors.push("initial velocities must satisfy v_o = v2 with the valve closed".into());
        }

        match (errors.is_empty(), control) {
            (true, Some(control)) => Ok(Self {
                name: raw.name,
                description: raw.description,
                duration: raw.duration_s,
                dt: raw.dt_s,
                initial,
                control,
                schedule,
                drop,
                expect: raw.expect,
            }),
            _ => Err(Error::Validation(errors)),
        }
    }
}

fn parse_load(l: &RawLoad) -> std::result::Result<LoadEntry, String> {
    let trigger = match l.trigger.as_str() {
        "start" => Trigger::Start,
        "time" => Trigger::Time(l.t_s.ok_or("trigger \"time\" needs t_s")?),
        "ground_arrest" => Trigger::GroundArrest {
            speed: l.arrest_speed_mps.unwrap_or(0.005),
            latest: l.latest_s.unwrap_or(f64::INFINITY),
        },
        other => {
            return Err(format!(
                "unknown trigger `{other}` (start, time, ground_arrest)"
            ))
        }
    };
    let load = match (&l.load, l.mass_kg) {
        (Some(label), None) => LoadSource::Label(label.clone()),
        (None, Some(mass)) => {
            if !(mass > 0.0) {
                return Err("mass_kg must be > 0".into());
            }
            LoadSource::Inline(LoadScenario {
                label: l.label.clone().unwrap_or_else(|| "inline".into()),
                mass,
                external_force: l.external_force_n.unwrap_or(0.0),
                loss_coeff: l.loss_coeff_ns_per_m.unwrap_or(0.0),
            })
        }
        _ => return Err("give exactly one of load = \"<label>\" or mass_kg".into()),
    };
    let lower_stop = match (l.lower_stop_m, l.lower_stop_at_current) {
        (Some(_), true) => {
            return Err("lower_stop_m and lower_stop_at_current are exclusive".into())
        }
        (Some(x), false) => LowerStop::At(x),
        (None, true) => LowerStop::Current,
        (None, false) => LowerStop::Stroke,
    };
    Ok(LoadEntry {
        trigger,
        load,
        upper_stop: l.upper_stop_m,
        lower_stop,
    })
}

/// References of the shipped gait sequence at time `t`.
pub fn gait_script(t: f64, params: &ActuatorParams) -> HighLevelRefs {
    static GAIT: OnceLock<Script> = OnceLock::new();
    let script = GAIT.get_or_init(|| {
        match Scenario::builtin("gait")
            .expect("shipped gait scenario")
            .control
        {
            ControlSpec::Closed { script, .. } => script,
            ControlSpec::Open(_) => unreachable!("gait is closed loop"),
        }
    });
    script.refs(t, params.line1.max_current)
}

//! Configuration files.
//!
//! A config is a flat list of `dotted.key_unit = value` lines (valid TOML).
//! `schema_version` must be the first key. Every other key is optional and
//! falls back to the prototype values shipped in `data/default.toml`.
//! Unknown keys are rejected, except new entries under the open namespaces
//! `material.<name>.*` and `load.<label>.*`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::control::{ContactThresholds, ControlConfig, PidGains};
use crate::error::{Error, Result};
use crate::model::{
    ActuatorParams, FluidSpec, LineCompliance, LoadScenario, MotorScrewLine, StopSpec, StrokeLimits,
};
use crate::valve::{LossMap, MaterialSpec, ValveSizing, ValveSpec};

pub const DEFAULT_CONFIG: &str = include_str!("../data/default.toml");
pub const SCHEMA_MAJOR: u64 = 1;

const MATERIAL_FIELDS: [&str; 2] = ["density_kg_m3", "yield_strength_pa"];
const LOAD_FIELDS: [&str; 3] = ["mass_kg", "external_force_n", "loss_coeff_ns_per_m"];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Text(String),
    List(Vec<f64>),
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Num(x) => render_f64(*x),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => format!("{s:?}"),
            Value::List(xs) => {
                let items: Vec<String> = xs.iter().map(|x| render_f64(*x)).collect();
                format!("[{}]", items.join(", "))
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Text(_) => "string",
            Value::List(_) => "list of numbers",
        }
    }
}

fn render_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        // Debug output is the shortest exact round-trip form.
        format!("{x:?}")
    }
}

/// Byte offset to 1-based (line, column).
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
    Error::Parse {
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

pub(crate) fn parse_toml(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| toml_error(text, &e))
}

fn convert(key: &str, value: &toml::Value) -> std::result::Result<Value, String> {
    match value {
        toml::Value::Float(x) => Ok(Value::Num(*x)),
        toml::Value::Integer(i) => Ok(Value::Num(*i as f64)),
        toml::Value::Boolean(b) => Ok(Value::Bool(*b)),
        toml::Value::String(s) => Ok(Value::Text(s.clone())),
        toml::Value::Array(items) => items
            .iter()
            .map(|v| match v {
                toml::Value::Float(x) => Ok(*x),
                toml::Value::Integer(i) => Ok(*i as f64),
                _ => Err(format!("{key}: lists may only hold numbers")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Value::List),
        other => Err(format!(
            "{key}: unsupported value type {}",
            other.type_str()
        )),
    }
}

/// Key/value view of a config file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlatConfig {
    entries: BTreeMap<String, Value>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table = parse_toml(text)?;
        let mut entries = BTreeMap::new();
        let mut errors = Vec::new();
        flatten("", &table, &mut entries, &mut errors);
        if errors.is_empty() {
            Ok(Self { entries })
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: Value) {
        self.entries.insert(key.into(), value);
    }

    /// Renders the config with `schema_version` first and one commented
    /// block per top-level namespace.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        if let Some(v) = self.entries.get("schema_version") {
            let _ = writeln!(out, "schema_version = {}", v.render());
        }
        let mut section = "";
        for (key, value) in &self.entries {
            if key == "schema_version" {
                continue;
            }
            let head = key.split('.').next().unwrap_or("");
            if head != section {
                let _ = writeln!(out, "\n# {head}");
                section = head;
            }
            let _ = writeln!(out, "{key} = {}", value.render());
        }
        out
    }
}

fn flatten(
    prefix: &str,
    table: &toml::Table,
    out: &mut BTreeMap<String, Value>,
    errors: &mut Vec<String>,
) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(inner) => flatten(&key, inner, out, errors),
            other => match convert(&key, other) {
                Ok(value) => {
                    out.insert(key, value);
                }
                Err(e) => errors.push(e),
            },
        }
    }
}

fn first_key(text: &str) -> Option<&str> {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .and_then(|l| l.split('=').next())
        .map(str::trim)
}

fn check_schema(text: &str, flat: &FlatConfig) -> Result<()> {
    if first_key(text) != Some("schema_version") {
        return Err(Error::Validation(vec![
            "schema_version must be the first key of the file".into(),
        ]));
    }
    let Some(Value::Text(version)) = flat.get("schema_version") else {
        return Err(Error::Validation(vec![
            "schema_version must be a string like \"1.0.0\"".into(),
        ]));
    };
    let parts: Vec<_> = version.split('.').map(str::parse::<u64>).collect();
    match parts.as_slice() {
        [Ok(major), Ok(_), Ok(_)] if *major == SCHEMA_MAJOR => Ok(()),
        [Ok(_), Ok(_), Ok(_)] => Err(Error::Validation(vec![format!(
            "unsupported schema_version {version} (this build reads {SCHEMA_MAJOR}.x.y)"
        )])),
        _ => Err(Error::Validation(vec![format!(
            "schema_version `{version}` is not a semantic version"
        )])),
    }
}

fn open_namespace_key(key: &str) -> bool {
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        ["material", _, field] => MATERIAL_FIELDS.contains(field),
        ["load", _, field] => LOAD_FIELDS.contains(field),
        _ => false,
    }
}

/// Settings for the static analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Output piston force needed per kg of payload, N/kg.
    pub force_per_kg: f64,
    /// Valve angle bounding the braking regions of the quadrant map, rad.
    pub braking_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: ActuatorParams,
    pub control: ControlConfig,
    pub analysis: AnalysisConfig,
    pub sim: SimConfig,
    flat: FlatConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self::from_str(DEFAULT_CONFIG).expect("shipped default config is valid")
    }
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    pub fn load_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str_with_overrides(&text, overrides)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        Self::from_str_with_overrides(text, &[])
    }

    pub fn from_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let user = FlatConfig::parse(text)?;
        check_schema(text, &user)?;
        let mut flat = FlatConfig::parse(DEFAULT_CONFIG)?;
        let mut errors = Vec::new();
        for (key, value) in user.entries {
            if flat.entries.contains_key(&key) || open_namespace_key(&key) {
                flat.entries.insert(key, value);
            } else {
                errors.push(format!("unknown key `{key}`"));
            }
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        for o in overrides {
            apply_override(&mut flat, o)?;
        }
        Self::from_flat(flat)
    }

    /// Re-resolves this config with extra `key=value` overrides.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut flat = self.flat.clone();
        for o in overrides {
            apply_override(&mut flat, o)?;
        }
        Self::from_flat(flat)
    }

    pub fn flat(&self) -> &FlatConfig {
        &self.flat
    }

    pub fn to_toml_string(&self) -> String {
        self.flat.to_toml_string()
    }

    /// Non-fatal findings about the resolved parameters.
    pub fn warnings(&self) -> Vec<String> {
        self.params.warnings()
    }

    fn from_flat(flat: FlatConfig) -> Result<Self> {
        let mut r = Reader {
            flat: &flat,
            errors: Vec::new(),
            unreadable: Vec::new(),
        };
        let line = |r: &mut Reader, n: &str| MotorScrewLine {
            torque_constant: r.num(&format!("{n}.torque_constant_nm_per_a")),
            max_current: r.num(&format!("{n}.max_current_a")),
            inertia: r.num(&format!("{n}.inertia_kgm2")),
            reduction_ratio: r.num(&format!("{n}.reduction_ratio")),
            screw_lead: r.num(&format!("{n}.screw_lead_m")),
            max_speed: r.num(&format!("{n}.max_speed_radps")),
            viscous_coeff: r.num(&format!("{n}.viscous_coeff_ns_per_m")),
            piston_mass: r.num(&format!("{n}.piston_mass_kg")),
            stroke: StrokeLimits {
                min: r.num(&format!("{n}.stroke_min_m")),
                max: r.num(&format!("{n}.stroke_max_m")),
            },
        };
        let line1 = line(&mut r, "line1");
        let line2 = line(&mut r, "line2");

        let angles = r.list("valve.loss_map_angles_deg");
        let ks = r.list("valve.loss_map_k");
        if angles.len() != ks.len() {
            r.errors.push(format!(
                "valve.loss_map_angles_deg has {} entries but valve.loss_map_k has {}",
                angles.len(),
                ks.len()
            ));
        }
        let loss_map = LossMap::new(
            r.num("valve.k_open"),
            angles
                .iter()
                .map(|a| a.to_radians())
                .zip(ks.iter().copied())
                .collect(),
        );
        let loss_map = match loss_map {
            Ok(m) => Some(m),
            Err(Error::Validation(e)) => {
                r.errors.extend(e);
                None
            }
            Err(e) => return Err(e),
        };

        let mut materials = BTreeMap::new();
        let mut loads = Vec::new();
        let names = |prefix: &str| -> Vec<String> {
            let mut v: Vec<String> = flat
                .keys()
                .filter_map(|k| k.strip_prefix(prefix))
                .filter_map(|rest| rest.split('.').next())
                .map(str::to_string)
                .collect();
            v.dedup();
            v
        };
        for name in names("material.") {
            materials.insert(
                name.clone(),
                MaterialSpec {
                    density: r.num(&format!("material.{name}.density_kg_m3")),
                    yield_strength: r.num(&format!("material.{name}.yield_strength_pa")),
                },
            );
        }
        for label in names("load.") {
            loads.push(LoadScenario {
                mass: r.num(&format!("load.{label}.mass_kg")),
                external_force: r.num(&format!("load.{label}.external_force_n")),
                loss_coeff: r.num(&format!("load.{label}.loss_coeff_ns_per_m")),
                label,
            });
        }

        let gains = |r: &mut Reader, n: &str| PidGains {
            kp: r.num(&format!("control.{n}.kp")),
            ki: r.num(&format!("control.{n}.ki")),
            kd: r.num(&format!("control.{n}.kd")),
        };
        let control = ControlConfig {
            rate_hz: r.num("control.rate_hz"),
            braking_angle: r.num("control.braking_angle_deg").to_radians(),
            contact: ContactThresholds {
                pressure_threshold: r.num("control.contact.pressure_threshold_pa"),
                consecutive_frames: r.count("control.contact.consecutive_frames"),
                min_approach_speed: r.num("control.contact.min_approach_speed_mps"),
                min_velocity_drop: r.num("control.contact.min_velocity_drop_mps"),
            },
            em2_velocity: gains(&mut r, "em2_velocity"),
            stroke_hs: gains(&mut r, "stroke_hs"),
            stroke_hf: gains(&mut r, "stroke_hf"),
        };

        let fluid = FluidSpec {
            density: r.num("fluid.density_kg_m3"),
            cylinder_area: r.num("fluid.cylinder_area_m2"),
            rated_pressure: r.num("fluid.rated_pressure_pa"),
        };
        let compliance = LineCompliance {
            enabled: r.flag("fluid.compliance_enabled"),
            stiffness: r.num("fluid.compliance_stiffness_n_per_m"),
            damping: r.num("fluid.compliance_damping_ns_per_m"),
        };
        let stops = StopSpec {
            stiffness: r.num("stop.stiffness_n_per_m"),
            damping: r.num("stop.damping_ns_per_m"),
        };
        let output_stroke = StrokeLimits {
            min: r.num("output.stroke_min_m"),
            max: r.num("output.stroke_max_m"),
        };
        let valve_fields = (
            r.num("valve.bore_diameter_m"),
            r.num("valve.max_angular_speed_radps"),
            r.num("valve.closed_tolerance_deg").to_radians(),
        );
        let valve_sizing = ValveSizing {
            motor_specific_power: r.num("valve.motor_specific_power_w_per_kg"),
            gearbox_specific_torque: r.num("valve.gearbox_specific_torque_nm_per_kg"),
            reference_material: r.text("valve.reference_material"),
            body_material: r.text("valve.body_material"),
        };
        let analysis = AnalysisConfig {
            force_per_kg: r.num("analysis.force_per_kg_n"),
            braking_angle: r.num("analysis.braking_angle_deg").to_radians(),
        };
        let sim = SimConfig {
            dt: r.num("sim.dt_s"),
        };

        let unreadable = r.unreadable;
        let mut errors = r.errors;
        let Some(loss_map) = loss_map else {
            return Err(Error::Validation(errors));
        };
        let params = ActuatorParams {
            line1,
            line2,
            output_stroke,
            fluid,
            compliance,
            stops,
            valve: ValveSpec {
                bore_diameter: valve_fields.0,
                max_angular_speed: valve_fields.1,
                closed_tolerance: valve_fields.2,
                loss_map,
            },
            valve_sizing,
            materials,
            scenarios: loads,
        };
        errors.extend(params.validate());
        errors.extend(control.validate());
        if !(analysis.force_per_kg > 0.0) {
            errors.push("analysis.force_per_kg_n must be > 0".into());
        }
        if !(analysis.braking_angle > 0.0 && analysis.braking_angle < std::f64::consts::FRAC_PI_2) {
            errors.push("analysis.braking_angle_deg must lie in (0, 90)".into());
        }
        if !(sim.dt > 0.0 && sim.dt.is_finite()) {
            errors.push(format!("sim.dt_s must be > 0 (got {})", sim.dt));
        }
        // A key that could not be read also fails its range check; report it once.
        let mut seen = std::collections::BTreeSet::new();
        errors.retain(|e| {
            let repeat = unreadable.iter().any(|k| e.starts_with(&format!("{k} ")));
            !repeat && seen.insert(e.clone())
        });
        if errors.is_empty() {
            Ok(Self {
                params,
                control,
                analysis,
                sim,
                flat,
            })
        } else {
            Err(Error::Validation(errors))
        }
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// value; anything that is not valid TOML is taken as a bare string.
pub fn apply_override(flat: &mut FlatConfig, assignment: &str) -> Result<()> {
    let Some((key, raw)) = assignment.split_once('=') else {
        return Err(Error::Validation(vec![format!(
            "override `{assignment}` is not of the form key=value"
        )]));
    };
    let key = key.trim();
    if !(flat.entries.contains_key(key) || open_namespace_key(key)) || key == "schema_version" {
        return Err(Error::Validation(vec![format!(
            "unknown key `{key}` in override"
        )]));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => convert(key, &t["v"]).map_err(|e| Error::Validation(vec![e]))?,
        Err(_) => Value::Text(raw.to_string()),
    };
    flat.entries.insert(key.to_string(), value);
    Ok(())
}

struct Reader<'a> {
    flat: &'a FlatConfig,
    errors: Vec<String>,
    /// Keys already reported as missing or mistyped.
    unreadable: Vec<String>,
}

impl Reader<'_> {
    fn get(&mut self, key: &str) -> Option<&Value> {
        let v = self.flat.get(key);
        if v.is_none() {
            self.errors.push(format!("missing key `{key}`"));
            self.unreadable.push(key.to_string());
        }
        v
    }

    fn mismatch(&mut self, key: &str, want: &str, got: &'static str) {
        self.errors
            .push(format!("{key} must be a {want}, found a {got}"));
        self.unreadable.push(key.to_string());
    }

    fn num(&mut self, key: &str) -> f64 {
        match self.get(key).cloned() {
            Some(Value::Num(x)) => x,
            Some(other) => {
                self.mismatch(key, "number", other.kind());
                f64::NAN
            }
            None => f64::NAN,
        }
    }

    fn count(&mut self, key: &str) -> usize {
        let x = self.num(key);
        if x.is_finite() && x >= 0.0 && x.fract() == 0.0 {
            x as usize
        } else {
            if !x.is_nan() {
                self.errors
                    .push(format!("{key} must be a nonnegative integer (got {x})"));
            }
            0
        }
    }

    fn flag(&mut self, key: &str) -> bool {
        match self.get(key).cloned() {
            Some(Value::Bool(b)) => b,
            Some(other) => {
                self.mismatch(key, "boolean", other.kind());
                false
            }
            None => false,
        }
    }

    fn text(&mut self, key: &str) -> String {
        match self.get(key).cloned() {
            Some(Value::Text(s)) => s,
            Some(other) => {
                self.mismatch(key, "string", other.kind());
                String::new()
            }
            None => String::new(),
        }
    }

    fn list(&mut self, key: &str) -> Vec<f64> {
        match self.get(key).cloned() {
            Some(Value::List(xs)) => xs,
            Some(other) => {
                self.mismatch(key, "list of numbers", other.kind());
                Vec::new()
            }
            None => Vec::new(),
        }
    }
}

//! Physical description of the actuator: the two motor/screw/cylinder lines,
//! the fluid, the end stops and the reflected load cases.
//!
//! Everything is SI with one canonical unit per quantity. All types are plain
//! data and immutable once a configuration has been loaded, so a single
//! [`ActuatorParams`] can be shared read-only by any number of workers.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::valve::{MaterialSpec, ValveSizing, ValveSpec};

/// Below this ratio between the two transformation ratios the high-speed
/// reduced model is no longer a good approximation of the full model.
pub const RATIO_SEPARATION_WARNING: f64 = 10.0;

/// Travel range of one piston, in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrokeLimits {
    pub min: f64,
    pub max: f64,
}

impl StrokeLimits {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Electric motor driving a ball screw through an optional gear head, pushing
/// one master cylinder.
#[derive(Debug, Clone, PartialEq)]
pub struct MotorScrewLine {
    /// N·m/A
    pub torque_constant: f64,
    /// A
    pub max_current: f64,
    /// Rotor plus screw inertia, kg·m².
    pub inertia: f64,
    pub reduction_ratio: f64,
    /// Screw lead, m/rev.
    pub screw_lead: f64,
    /// rad/s at the motor shaft.
    pub max_speed: f64,
    /// Linear viscous loss acting at the piston, N·s/m.
    pub viscous_coeff: f64,
    /// Piston mass including the fluid carried along with it, kg.
    pub piston_mass: f64,
    pub stroke: StrokeLimits,
}

impl MotorScrewLine {
    /// Motor angle to piston travel ratio, 1/m.
    pub fn transformation_ratio(&self) -> f64 {
        2.0 * PI * self.reduction_ratio / self.screw_lead
    }

    /// Inertia of the line seen at its piston.
    pub fn reflected_mass(&self) -> f64 {
        let t = self.transformation_ratio();
        self.piston_mass + self.inertia * t * t
    }

    /// Piston force produced by `current`.
    pub fn force(&self, current: f64) -> f64 {
        self.torque_constant * self.transformation_ratio() * current
    }

    pub fn max_force(&self) -> f64 {
        self.force(self.max_current)
    }

    pub fn max_piston_speed(&self) -> f64 {
        self.max_speed / self.transformation_ratio()
    }

    pub fn clamp_current(&self, current: f64) -> f64 {
        current.clamp(-self.max_current, self.max_current)
    }

    fn validate(&self, name: &str, errors: &mut Vec<String>) {
        let positive = [
            ("torque_constant_nm_per_a", self.torque_constant),
            ("max_current_a", self.max_current),
            ("inertia_kgm2", self.inertia),
            ("reduction_ratio", self.reduction_ratio),
            ("screw_lead_m", self.screw_lead),
            ("max_speed_radps", self.max_speed),
            ("piston_mass_kg", self.piston_mass),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                errors.push(format!("{name}.{key} must be finite and > 0 (got {value})"));
            }
        }
        if !(self.viscous_coeff.is_finite() && self.viscous_coeff >= 0.0) {
            errors.push(format!(
                "{name}.viscous_coeff_ns_per_m must be finite and >= 0 (got {})",
                self.viscous_coeff
            ));
        }
        check_stroke(name, &self.stroke, errors);
        if self.screw_lead > 0.0 && self.reduction_ratio > 0.0 {
            let t = self.transformation_ratio();
            if !(t.is_finite() && t > 0.0) {
                errors.push(format!("{name}: transformation ratio is not finite ({t})"));
            }
        }
    }
}

fn check_stroke(name: &str, stroke: &StrokeLimits, errors: &mut Vec<String>) {
    if !(stroke.min.is_finite() && stroke.max.is_finite() && stroke.min < stroke.max) {
        errors.push(format!(
            "{name}.stroke_min_m must be below {name}.stroke_max_m (got {} .. {})",
            stroke.min, stroke.max
        ));
    }
}

/// Load reflected at the output piston. `external_force` is positive when it
/// opposes extension (gravity on a lifted payload).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadScenario {
    pub label: String,
    pub mass: f64,
    pub external_force: f64,
    pub loss_coeff: f64,
}

impl LoadScenario {
    pub fn new(label: impl Into<String>, mass: f64, external_force: f64) -> Self {
        Self {
            label: label.into(),
            mass,
            external_force,
            loss_coeff: 0.0,
        }
    }

    fn validate(&self, errors: &mut Vec<String>) {
        let name = format!("load.{}", self.label);
        if !(self.mass.is_finite() && self.mass > 0.0) {
            errors.push(format!(
                "{name}.mass_kg must be finite and > 0 (got {})",
                self.mass
            ));
        }
        if !self.external_force.is_finite() {
            errors.push(format!("{name}.external_force_n must be finite"));
        }
        if !(self.loss_coeff.is_finite() && self.loss_coeff >= 0.0) {
            errors.push(format!(
                "{name}.loss_coeff_ns_per_m must be finite and >= 0"
            ));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidSpec {
    /// kg/m³
    pub density: f64,
    /// Slave cylinder piston area, m². Used to turn force into pressure.
    pub cylinder_area: f64,
    /// Cylinder pressure rating, Pa.
    pub rated_pressure: f64,
}

/// Optional lumped compliance of the hydraulic line, modelled as a single
/// spring-damper between the summed master displacement and the slave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCompliance {
    pub enabled: bool,
    /// N/m at the slave piston.
    pub stiffness: f64,
    pub damping: f64,
}

/// Spring-damper used for every unilateral stop (stroke ends, ground, support).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopSpec {
    pub stiffness: f64,
    pub damping: f64,
}

impl StopSpec {
    /// Force pushing back out of a stop, never pulling. `penetration` and
    /// `penetration_rate` are positive going into the stop.
    pub fn force(&self, penetration: f64, penetration_rate: f64) -> f64 {
        if penetration <= 0.0 {
            return 0.0;
        }
        (self.stiffness * penetration + self.damping * penetration_rate).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorParams {
    pub line1: MotorScrewLine,
    pub line2: MotorScrewLine,
    pub output_stroke: StrokeLimits,
    pub fluid: FluidSpec,
    pub compliance: LineCompliance,
    pub stops: StopSpec,
    pub valve: ValveSpec,
    pub valve_sizing: ValveSizing,
    pub materials: BTreeMap<String, MaterialSpec>,
    pub scenarios: Vec<LoadScenario>,
}

impl ActuatorParams {
    pub fn scenario(&self, label: &str) -> Option<&LoadScenario> {
        self.scenarios.iter().find(|s| s.label == label)
    }

    pub fn material(&self, name: &str) -> Option<&MaterialSpec> {
        self.materials.get(name)
    }

    /// Returns every violated invariant.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        self.line1.validate("line1", &mut errors);
        self.line2.validate("line2", &mut errors);
        check_stroke("output", &self.output_stroke, &mut errors);
        if !(self.fluid.density.is_finite() && self.fluid.density > 0.0) {
            errors.push(format!(
                "fluid.density_kg_m3 must be > 0 (got {})",
                self.fluid.density
            ));
        }
        if !(self.fluid.cylinder_area.is_finite() && self.fluid.cylinder_area > 0.0) {
            errors.push(format!(
                "fluid.cylinder_area_m2 must be > 0 (got {})",
                self.fluid.cylinder_area
            ));
        }
        if !(self.fluid.rated_pressure.is_finite() && self.fluid.rated_pressure > 0.0) {
            errors.push("fluid.rated_pressure_pa must be > 0".into());
        }
        if self.compliance.enabled
            && !(self.compliance.stiffness > 0.0 && self.compliance.damping >= 0.0)
        {
            errors.push(
                "fluid.compliance_stiffness_n_per_m must be > 0 when compliance is enabled".into(),
            );
        }
        if !(self.stops.stiffness > 0.0 && self.stops.damping >= 0.0) {
            errors.push("stop.stiffness_n_per_m must be > 0 and stop.damping_ns_per_m >= 0".into());
        }
        self.valve.validate(&mut errors);
        self.valve_sizing.validate(&mut errors);
        for (name, material) in &self.materials {
            material.validate(name, &mut errors);
        }
        for material in [
            &self.valve_sizing.reference_material,
            &self.valve_sizing.body_material,
        ] {
            if !self.materials.contains_key(material) {
                errors.push(format!(
                    "valve material `{material}` has no material.{material}.* entry"
                ));
            }
        }
        for scenario in &self.scenarios {
            scenario.validate(&mut errors);
        }
        errors
    }

    /// Conditions that do not prevent use but degrade model fidelity.
    pub fn warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let t1 = self.line1.transformation_ratio();
        let t2 = self.line2.transformation_ratio();
        if t2 / t1 < RATIO_SEPARATION_WARNING {
            warnings.push(format!(
                "T2/T1 = {:.2} < {RATIO_SEPARATION_WARNING}: the high-speed reduced model \
                 neglects M2 coupling terms that are no longer small",
                t2 / t1
            ));
        }
        let hf_hold_pressure = self.line2.max_force() / self.fluid.cylinder_area;
        if hf_hold_pressure > self.fluid.rated_pressure {
            warnings.push(format!(
                "HF maximum force implies {:.2} MPa, above the {:.2} MPa cylinder rating",
                hf_hold_pressure / 1e6,
                self.fluid.rated_pressure / 1e6
            ));
        }
        warnings
    }
}

/// The two operating modes of the transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ActuatorMode {
    /// Valves open: both masters feed the slave, force limited by EM1.
    HighSpeed,
    /// Valves closed: only M2 drives the slave, M1 vents to the reservoir.
    HighForce,
}

impl ActuatorMode {
    pub fn label(self) -> &'static str {
        match self {
            ActuatorMode::HighSpeed => "HS",
            ActuatorMode::HighForce => "HF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeConstants {
    /// Reflected actuator inertia at the output piston, kg.
    pub reflected_mass: f64,
    pub max_force: f64,
    pub max_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub t1: f64,
    pub t2: f64,
    pub high_speed: ModeConstants,
    pub high_force: ModeConstants,
}

impl DerivedConstants {
    pub fn mode(&self, mode: ActuatorMode) -> &ModeConstants {
        match mode {
            ActuatorMode::HighSpeed => &self.high_speed,
            ActuatorMode::HighForce => &self.high_force,
        }
    }
}

pub fn derived_constants(params: &ActuatorParams) -> DerivedConstants {
    let per_line = |line: &MotorScrewLine| ModeConstants {
        reflected_mass: line.reflected_mass(),
        max_force: line.max_force(),
        max_speed: line.max_piston_speed(),
    };
    DerivedConstants {
        t1: params.line1.transformation_ratio(),
        t2: params.line2.transformation_ratio(),
        high_speed: per_line(&params.line1),
        high_force: per_line(&params.line2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    #[test]
    fn transformation_ratios_of_prototype() {
        let params = Config::default().params;
        let d = derived_constants(&params);
        assert!((d.t1 - 314.159_265).abs() < 1e-3);
        assert!((d.t2 - 35_185.837_7).abs() < 1e-2);
    }

    #[test]
    fn reflected_masses_and_limits() {
        let d = derived_constants(&Config::default().params);
        assert!((d.high_speed.reflected_mass - 10.0).abs() < 1e-3);
        assert!((d.high_force.reflected_mass - 8900.0).abs() / 8900.0 < 1e-4);
        assert!((d.high_speed.max_force - 350.0).abs() < 0.05);
        assert!((d.high_force.max_force - 2880.0).abs() < 0.5);
        assert!((d.high_speed.max_speed - 0.8).abs() < 1e-4);
        assert!((d.high_force.max_speed - 0.025).abs() < 1e-5);
    }

    #[test]
    fn derived_constants_are_pure() {
        let params = Config::default().params;
        let a = derived_constants(&params);
        let b = derived_constants(&params);
        assert_eq!(a.t1.to_bits(), b.t1.to_bits());
        assert_eq!(
            a.high_force.reflected_mass.to_bits(),
            b.high_force.reflected_mass.to_bits()
        );
    }

    #[test]
    fn zero_lead_is_reported_by_name() {
        let mut params = Config::default().params;
        params.line1.screw_lead = 0.0;
        let errors = params.validate();
        assert!(
            errors.iter().any(|e| e.contains("line1.screw_lead_m")),
            "{errors:?}"
        );
    }

    #[test]
    fn close_ratios_warn() {
        let mut params = Config::default().params;
        params.line2.reduction_ratio = 1.0;
        params.line2.screw_lead = 0.005;
        assert!(params.warnings().iter().any(|w| w.contains("T2/T1")));
        assert!(params.validate().is_empty());
    }

    #[test]
    fn stop_never_pulls() {
        let stop = StopSpec {
            stiffness: 1e6,
            damping: 1e4,
        };
        assert_eq!(stop.force(-0.001, 1.0), 0.0);
        assert_eq!(stop.force(1e-5, -10.0), 0.0);
        assert!((stop.force(1e-3, 0.0) - 1000.0).abs() < 1e-9);
    }
}

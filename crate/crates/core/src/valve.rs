//! Servo ball valve: rate-limited ball angle, throttling loss map, and the
//! semi-empirical mass model used to size the valve unit.
//!
//! Angle convention: 0 is fully open, π/2 fully closed.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};

/// Breakaway torque fit, N·m per metre of bore and offset (fit on 6.35, 9.52
/// and 12.7 mm brass valves).
pub const TORQUE_SLOPE: f64 = 132.0;
pub const TORQUE_OFFSET: f64 = 0.2;
/// Brass three-way valve body mass fit, kg per metre of bore and offset.
pub const BODY_SLOPE: f64 = 41.0;
pub const BODY_OFFSET: f64 = 0.07;

/// Bore range over which the torque fit is trusted, m.
pub const TORQUE_FIT_RANGE: (f64, f64) = (4.0e-3, 20.0e-3);
/// Catalogue range behind the body mass fit, m.
pub const BODY_FIT_RANGE: (f64, f64) = (6.35e-3, 19.05e-3);

/// Loss coefficient as a function of ball angle, interpolated log-linearly
/// between table points. Beyond the last point the last value is held.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMap {
    k_open: f64,
    /// (angle rad, k), strictly increasing in angle, all above 0.
    points: Vec<(f64, f64)>,
}

impl LossMap {
    pub fn new(k_open: f64, points: Vec<(f64, f64)>) -> Result<Self> {
        let map = Self { k_open, points };
        let mut errors = Vec::new();
        map.check(&mut errors);
        if errors.is_empty() {
            Ok(map)
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn k_open(&self) -> f64 {
        self.k_open
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn check(&self, errors: &mut Vec<String>) {
        if !(self.k_open.is_finite() && self.k_open > 0.0) {
            errors.push(format!("valve.k_open must be > 0 (got {})", self.k_open));
        }
        let mut prev_angle = 0.0;
        let mut prev_k = self.k_open;
        for &(angle, k) in &self.points {
            if !(angle > prev_angle && angle <= FRAC_PI_2) {
                errors.push(format!(
                    "valve.loss_map_angles_deg must be strictly increasing within (0, 90] (at {:.3} deg)",
                    angle.to_degrees()
                ));
            }
            if !(k.is_finite() && k >= prev_k) {
                errors.push(format!(
                    "valve.loss_map_k must be nondecreasing and >= valve.k_open (got {k} at {:.3} deg)",
                    angle.to_degrees()
                ));
            }
            prev_angle = angle;
            prev_k = k;
        }
    }

    pub fn coefficient(&self, angle: f64) -> f64 {
        let mut lo = (0.0, self.k_open);
        if angle <= 0.0 {
            return self.k_open;
        }
        for &hi in &self.points {
            if angle <= hi.0 {
                let s = (angle - lo.0) / (hi.0 - lo.0);
                return (lo.1.ln() + s * (hi.1.ln() - lo.1.ln())).exp();
            }
            lo = hi;
        }
        lo.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValveSpec {
    pub bore_diameter: f64,
    /// Servo slew limit, rad/s.
    pub max_angular_speed: f64,
    /// Angular band around full closure/opening treated as closed/open, rad.
    pub closed_tolerance: f64,
    pub loss_map: LossMap,
}

impl ValveSpec {
    pub fn bore_area(&self) -> f64 {
        PI * self.bore_diameter * self.bore_diameter / 4.0
    }

    pub fn is_closed(&self, angle: f64) -> bool {
        angle >= FRAC_PI_2 - self.closed_tolerance
    }

    pub fn is_open(&self, angle: f64) -> bool {
        angle <= self.closed_tolerance
    }

    /// Time for a full quarter turn at the slew limit.
    pub fn commutation_time(&self) -> f64 {
        FRAC_PI_2 / self.max_angular_speed
    }

    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        if !(self.bore_diameter.is_finite() && self.bore_diameter > 0.0) {
            errors.push(format!(
                "valve.bore_diameter_m must be > 0 (got {})",
                self.bore_diameter
            ));
        }
        if !(self.max_angular_speed.is_finite() && self.max_angular_speed > 0.0) {
            errors.push("valve.max_angular_speed_radps must be > 0".into());
        }
        if !(self.closed_tolerance >= 0.0 && self.closed_tolerance < PI / 8.0) {
            errors.push("valve.closed_tolerance_deg must be within [0, 22.5)".into());
        }
        self.loss_map.check(errors);
    }
}

/// Advances the ball angle toward `commanded` by at most one slew-limited
/// increment. The result always lies in [0, π/2].
pub fn step_valve(commanded: f64, current: f64, dt: f64, spec: &ValveSpec) -> f64 {
    debug_assert!(dt > 0.0);
    let target = commanded.clamp(0.0, FRAC_PI_2);
    let max_step = spec.max_angular_speed * dt;
    let delta = target - current;
    if delta.abs() <= max_step {
        target
    } else {
        (current + max_step.copysign(delta)).clamp(0.0, FRAC_PI_2)
    }
}

pub fn loss_coefficient(angle: f64, spec: &ValveSpec) -> f64 {
    spec.loss_map.coefficient(angle)
}

pub fn breakaway_torque(bore_diameter: f64) -> Result<f64> {
    let tau = TORQUE_SLOPE * bore_diameter - TORQUE_OFFSET;
    if tau > 0.0 {
        Ok(tau)
    } else {
        Err(Error::Domain(format!(
            "breakaway torque fit is nonpositive ({tau:.4} N·m) for a {:.2} mm bore",
            bore_diameter * 1e3
        )))
    }
}

pub fn body_mass_brass(bore_diameter: f64) -> Result<f64> {
    let mass = BODY_SLOPE * bore_diameter - BODY_OFFSET;
    if mass > 0.0 {
        Ok(mass)
    } else {
        Err(Error::Domain(format!(
            "body mass fit is nonpositive ({mass:.4} kg) for a {:.2} mm bore",
            bore_diameter * 1e3
        )))
    }
}

/// Whether `d` lies outside the range either regression was fitted on.
pub fn outside_fit_range(bore_diameter: f64) -> bool {
    let outside = |(lo, hi): (f64, f64)| bore_diameter < lo || bore_diameter > hi;
    outside(TORQUE_FIT_RANGE) || outside(BODY_FIT_RANGE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    /// kg/m³
    pub density: f64,
    /// Pa
    pub yield_strength: f64,
}

impl MaterialSpec {
    /// Strength-to-weight ratio, Pa·m³/kg.
    pub fn specific_strength(&self) -> f64 {
        self.yield_strength / self.density
    }

    pub(crate) fn validate(&self, name: &str, errors: &mut Vec<String>) {
        if !(self.density > 0.0 && self.density.is_finite()) {
            errors.push(format!("material.{name}.density_kg_m3 must be > 0"));
        }
        if !(self.yield_strength > 0.0 && self.yield_strength.is_finite()) {
            errors.push(format!("material.{name}.yield_strength_pa must be > 0"));
        }
    }
}

/// Sizing constants of the valve unit mass model.
#[derive(Debug, Clone, PartialEq)]
pub struct ValveSizing {
    /// Motor specific power, W/kg.
    pub motor_specific_power: f64,
    /// Gearbox specific torque, N·m/kg.
    pub gearbox_specific_torque: f64,
    /// Material the body regression was fitted on.
    pub reference_material: String,
    /// Material of the installed valve body.
    pub body_material: String,
}

impl ValveSizing {
    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        if !(self.motor_specific_power > 0.0) {
            errors.push("valve.motor_specific_power_w_per_kg must be > 0".into());
        }
        if !(self.gearbox_specific_torque > 0.0) {
            errors.push("valve.gearbox_specific_torque_nm_per_kg must be > 0".into());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassBreakdown {
    pub motor: f64,
    pub gearbox: f64,
    pub body: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValveDesignPoint {
    pub bore_diameter: f64,
    /// 90° cycle time, s.
    pub cycle_time: f64,
    pub material: MaterialSpec,
    pub masses: MassBreakdown,
    pub breakaway_torque: f64,
    /// Bore outside the regression ranges.
    pub extrapolated: bool,
}

/// Mass of a motorized ball valve as a function of bore and cycle time. The
/// motor is sized to hold the breakaway torque over the whole quarter turn.
#[derive(Debug, Clone, PartialEq)]
pub struct ValveMassModel {
    pub motor_specific_power: f64,
    pub gearbox_specific_torque: f64,
    pub reference: MaterialSpec,
}

impl ValveMassModel {
    pub fn from_params(params: &crate::model::ActuatorParams) -> Result<Self> {
        let reference = params
            .material(&params.valve_sizing.reference_material)
            .cloned()
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown reference material `{}`",
                    params.valve_sizing.reference_material
                ))
            })?;
        Ok(Self {
            motor_specific_power: params.valve_sizing.motor_specific_power,
            gearbox_specific_torque: params.valve_sizing.gearbox_specific_torque,
            reference,
        })
    }

    pub fn unit_mass(
        &self,
        bore_diameter: f64,
        cycle_time: f64,
        material: &MaterialSpec,
    ) -> Result<ValveDesignPoint> {
        if !(cycle_time > 0.0) {
            return Err(Error::Domain(format!(
                "cycle time must be > 0 (got {cycle_time})"
            )));
        }
        let tau = breakaway_torque(bore_diameter)?;
        let brass_body = body_mass_brass(bore_diameter)?;
        let motor = PI * tau / (2.0 * self.motor_specific_power * cycle_time);
        let gearbox = tau / self.gearbox_specific_torque;
        let body = self.reference.specific_strength() / material.specific_strength() * brass_body;
        Ok(ValveDesignPoint {
            bore_diameter,
            cycle_time,
            material: material.clone(),
            masses: MassBreakdown {
                motor,
                gearbox,
                body,
                total: motor + gearbox + body,
            },
            breakaway_torque: tau,
            extrapolated: outside_fit_range(bore_diameter),
        })
    }

    /// Dense (bore, cycle time) grid, bore-major.
    pub fn mass_map(
        &self,
        bore_range: (f64, f64),
        cycle_range: (f64, f64),
        material: &MaterialSpec,
        resolution: (usize, usize),
        exec: Execution,
    ) -> Result<MassGrid> {
        let (nd, nt) = resolution;
        if nd == 0 || nt == 0 {
            return Err(Error::Domain(
                "mass map resolution must be at least 1x1".into(),
            ));
        }
        if !(bore_range.0 > 0.0 && bore_range.1 >= bore_range.0)
            || !(cycle_range.0 > 0.0 && cycle_range.1 >= cycle_range.0)
        {
            return Err(Error::Domain(
                "mass map ranges must be positive and ordered".into(),
            ));
        }
        let diameters = linspace(bore_range, nd);
        let cycle_times = linspace(cycle_range, nt);
        let cells = map_indices(nd * nt, exec, |i| {
            self.unit_mass(diameters[i / nt], cycle_times[i % nt], material)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(MassGrid {
            diameters,
            cycle_times,
            cells,
        })
    }
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassGrid {
    pub diameters: Vec<f64>,
    pub cycle_times: Vec<f64>,
    pub cells: Vec<ValveDesignPoint>,
}

impl MassGrid {
    pub fn cell(&self, bore_index: usize, cycle_index: usize) -> &ValveDesignPoint {
        &self.cells[bore_index * self.cycle_times.len() + cycle_index]
    }

    /// The grid node closest to (d, Δt).
    pub fn nearest(&self, bore_diameter: f64, cycle_time: f64) -> &ValveDesignPoint {
        let closest = |values: &[f64], x: f64| {
            values
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        self.cell(
            closest(&self.diameters, bore_diameter),
            closest(&self.cycle_times, cycle_time),
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for cell in &self.cells {
            out.serialize(MassMapRow::from(cell))?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// One line of `valve_mass_map.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassMapRow {
    pub d_m: f64,
    pub dt_s: f64,
    pub mass_motor_kg: f64,
    pub mass_gearbox_kg: f64,
    pub mass_body_kg: f64,
    pub mass_total_kg: f64,
}

impl From<&ValveDesignPoint> for MassMapRow {
    fn from(p: &ValveDesignPoint) -> Self {
        Self {
            d_m: p.bore_diameter,
            dt_s: p.cycle_time,
            mass_motor_kg: p.masses.motor,
            mass_gearbox_kg: p.masses.gearbox,
            mass_body_kg: p.masses.body,
            mass_total_kg: p.masses.total,
        }
    }
}

pub fn read_mass_map_csv<R: Read>(reader: R) -> Result<Vec<MassMapRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

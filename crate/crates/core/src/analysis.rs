//! Static capability analyses, quadrant regions, payload estimates and
//! randomized cross-checks of the reduced mode models.

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, Config};
use crate::dynamics::{
    constrained_full_accel, full_accel, hf_accel, hs_accel, throttle_force, ActuationInput,
    ContinuousState,
};
use crate::error::{Error, Result};
use crate::exec::{map_indices, map_slice, Execution};
use crate::model::{derived_constants, ActuatorMode, ActuatorParams, LoadScenario};
use crate::sim::{run_scenario_with_dt, Scenario, SimTrace};

/// Reference accelerations reported for the prototype, `(swing, stance)` in
/// m/s². Emitted next to the computed values, never used in computation.
pub const PRINTED_ACCELERATIONS: [(ActuatorMode, f64, f64); 2] = [
    (ActuatorMode::HighSpeed, 11.5, -1.1),
    (ActuatorMode::HighForce, 3.9, 3.5),
];

/// Payload carried in the stance scenario of the capability table, kg.
pub const STANCE_PAYLOAD_KG: f64 = 25.0;

const SWING_MASS_KG: f64 = 17.0;
const STANCE_MASS_KG: f64 = 460.0;

/// Frame in which the computed accelerations are expressed.
pub const FRAME: &str = "piston";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRow {
    pub mode: String,
    #[serde(rename = "m_A_kg")]
    pub reflected_mass_kg: f64,
    #[serde(rename = "F_max_N")]
    pub max_force_n: f64,
    pub v_max_mps: f64,
    pub a_swing_mps2: f64,
    pub a_stance_mps2: f64,
    pub a_swing_printed_mps2: f64,
    pub a_stance_printed_mps2: f64,
    /// Computed minus printed.
    pub a_swing_discrepancy_mps2: f64,
    pub a_stance_discrepancy_mps2: f64,
    pub frame: String,
}

/// Loads used for the two acceleration columns. The swing load is the leg in
/// the air; the stance load carries the payload with its gravity force.
pub fn capability_loads(analysis: &AnalysisConfig) -> (LoadScenario, LoadScenario) {
    let swing = LoadScenario::new("swing", SWING_MASS_KG, 0.0);
    let stance = LoadScenario::new(
        "stance",
        STANCE_MASS_KG,
        STANCE_PAYLOAD_KG * analysis.force_per_kg,
    );
    (swing, stance)
}

/// Maximum acceleration from rest of `load` in `mode` at full current.
pub fn max_acceleration(params: &ActuatorParams, mode: ActuatorMode, load: &LoadScenario) -> f64 {
    let rest = ContinuousState::default();
    match mode {
        ActuatorMode::HighSpeed => {
            let input = ActuationInput {
                i1: params.line1.max_current,
                i2: 0.0,
                valve_angle: 0.0,
            };
            hs_accel(&rest, &input, params, load)
        }
        ActuatorMode::HighForce => {
            let input = ActuationInput {
                i1: 0.0,
                i2: params.line2.max_current,
                valve_angle: FRAC_PI_2,
            };
            hf_accel(&rest, &input, params, load).0
        }
    }
}

pub fn capability_table(params: &ActuatorParams, analysis: &AnalysisConfig) -> Vec<CapabilityRow> {
    let derived = derived_constants(params);
    let (swing, stance) = capability_loads(analysis);
    PRINTED_ACCELERATIONS
        .iter()
        .map(|&(mode, printed_swing, printed_stance)| {
            let c = derived.mode(mode);
            let a_swing = max_acceleration(params, mode, &swing);
            let a_stance = max_acceleration(params, mode, &stance);
            CapabilityRow {
                mode: mode.label().to_string(),
                reflected_mass_kg: c.reflected_mass,
                max_force_n: c.max_force,
                v_max_mps: c.max_speed,
                a_swing_mps2: a_swing,
                a_stance_mps2: a_stance,
                a_swing_printed_mps2: printed_swing,
                a_stance_printed_mps2: printed_stance,
                a_swing_discrepancy_mps2: a_swing - printed_swing,
                a_stance_discrepancy_mps2: a_stance - printed_stance,
                frame: FRAME.to_string(),
            }
        })
        .collect()
}

pub fn write_capability_csv<W: Write>(rows: &[CapabilityRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_capability_csv<R: Read>(reader: R) -> Result<Vec<CapabilityRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Payload in kg each mode can hold statically, `(HS, HF)`.
pub fn payload_capacity(params: &ActuatorParams, force_per_kg: f64) -> Result<(f64, f64)> {
    if !(force_per_kg > 0.0) {
        return Err(Error::Domain(format!(
            "force per kg must be > 0 (got {force_per_kg})"
        )));
    }
    let d = derived_constants(params);
    Ok((
        d.high_speed.max_force / force_per_kg,
        d.high_force.max_force / force_per_kg,
    ))
}

/// A closed region of the force-velocity plane. Vertices are `(v, F)` with
/// the first vertex repeated at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantRegion {
    pub label: String,
    /// Quadrants the region touches, 1 to 4.
    pub quadrants: Vec<u8>,
    pub boundary: Vec<(f64, f64)>,
}

impl QuadrantRegion {
    fn closed(label: &str, quadrants: Vec<u8>, mut boundary: Vec<(f64, f64)>) -> Self {
        if let Some(&first) = boundary.first() {
            boundary.push(first);
        }
        Self {
            label: label.to_string(),
            quadrants,
            boundary,
        }
    }

    fn rectangle(label: &str, v: f64, f: f64) -> Self {
        Self::closed(
            label,
            vec![1, 2, 3, 4],
            vec![(-v, -f), (v, -f), (v, f), (-v, f)],
        )
    }

    pub fn is_closed(&self) -> bool {
        self.boundary.len() >= 4 && self.boundary.first() == self.boundary.last()
    }

    /// Inside or on the boundary.
    pub fn contains(&self, v: f64, f: f64) -> bool {
        let on_edge = self
            .boundary
            .windows(2)
            .any(|e| on_segment(e[0], e[1], (v, f)));
        on_edge || crossings(&self.boundary, (v, f)) % 2 == 1
    }

    /// True when no two non-adjacent edges touch.
    pub fn is_simple(&self) -> bool {
        let edges: Vec<_> = self.boundary.windows(2).map(|w| (w[0], w[1])).collect();
        let n = edges.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if !adjacent && segments_touch(edges[i], edges[j]) {
                    return false;
                }
            }
        }
        true
    }
}

fn crossings(poly: &[(f64, f64)], (x, y): (f64, f64)) -> usize {
    poly.windows(2)
        .filter(|e| {
            let ((x0, y0), (x1, y1)) = (e[0], e[1]);
            (y0 > y) != (y1 > y) && x < x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        })
        .count()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    let scale = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1.0);
    cross(a, b, p).abs() <= 1e-12 * scale * scale
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

fn segments_touch((a, b): ((f64, f64), (f64, f64)), (c, d): ((f64, f64), (f64, f64))) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

/// Points sampled along each braking boundary curve.
pub const BRAKING_CURVE_POINTS: usize = 41;

/// HS and HF driving rectangles plus the valve braking regions in quadrants
/// II and IV. Braking force is the throttle force at `braking_angle` with
/// M2 at rest, so the piston speed equals the output speed.
pub fn quadrant_map(params: &ActuatorParams, braking_angle: f64) -> Vec<QuadrantRegion> {
    let d = derived_constants(params);
    let hs = d.high_speed;
    let hf = d.high_force;
    let curve: Vec<(f64, f64)> = (1..BRAKING_CURVE_POINTS)
        .map(|i| {
            let v = hs.max_speed * i as f64 / (BRAKING_CURVE_POINTS - 1) as f64;
            (
                v,
                throttle_force(braking_angle, v, &params.fluid, &params.valve),
            )
        })
        .collect();

    let mut q4 = vec![(0.0, 0.0)];
    q4.extend(curve.iter().map(|&(v, b)| (v, -b)));
    q4.push((hs.max_speed, 0.0));

    let mut q2 = vec![(0.0, 0.0), (-hs.max_speed, 0.0)];
    q2.extend(curve.iter().rev().map(|&(v, b)| (-v, b)));

    vec![
        QuadrantRegion::rectangle("HS", hs.max_speed, hs.max_force),
        QuadrantRegion::rectangle("HF", hf.max_speed, hf.max_force),
        QuadrantRegion::closed("braking-II", vec![2], q2),
        QuadrantRegion::closed("braking-IV", vec![4], q4),
    ]
}

/// Labels of every region containing `(v, F)`.
pub fn regions_containing(regions: &[QuadrantRegion], v: f64, f: f64) -> Vec<&str> {
    regions
        .iter()
        .filter(|r| r.contains(v, f))
        .map(|r| r.label.as_str())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QuadrantRow {
    region: String,
    quadrants: String,
    vertex: usize,
    v_mps: f64,
    #[serde(rename = "F_N")]
    f_n: f64,
}

/// One row per vertex; each region's polyline ends on its first vertex.
pub fn write_quadrant_csv<W: Write>(regions: &[QuadrantRegion], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in regions {
        let quadrants = r
            .quadrants
            .iter()
            .map(u8::to_string)
            .collect::<Vec<_>>()
            .join(";");
        for (vertex, &(v, f)) in r.boundary.iter().enumerate() {
            w.serialize(QuadrantRow {
                region: r.label.clone(),
                quadrants: quadrants.clone(),
                vertex,
                v_mps: v,
                f_n: f,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_quadrant_csv<R: Read>(reader: R) -> Result<Vec<QuadrantRegion>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut regions: Vec<QuadrantRegion> = Vec::new();
    for row in r.deserialize::<QuadrantRow>() {
        let row = row?;
        if row.vertex == 0 {
            let quadrants = row
                .quadrants
                .split(';')
                .map(|q| {
                    q.parse::<u8>()
                        .map_err(|e| Error::Domain(format!("bad quadrant `{q}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            regions.push(QuadrantRegion {
                label: row.region.clone(),
                quadrants,
                boundary: Vec::new(),
            });
        }
        match regions.last_mut() {
            Some(region) if region.label == row.region && region.boundary.len() == row.vertex => {
                region.boundary.push((row.v_mps, row.f_n));
            }
            _ => {
                return Err(Error::Domain(format!(
                    "vertex {} of `{}` is out of sequence",
                    row.vertex, row.region
                )))
            }
        }
    }
    Ok(regions)
}

/// Worst disagreements found by [`reduction_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionReport {
    pub samples: usize,
    /// Closed valve: full model with M1 held vs the HF model, relative.
    pub max_hf_error: f64,
    /// Open valve on the swing load: full model vs the HS approximation, relative.
    pub max_hs_error: f64,
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn sample_hf(params: &ActuatorParams, rng: &mut ChaCha8Rng) -> Result<f64> {
    let load = LoadScenario {
        label: "random".into(),
        mass: rng.random_range(1.0..600.0),
        external_force: rng.random_range(-2000.0..2000.0),
        loss_coeff: rng.random_range(0.0..100.0),
    };
    let v_o = rng.random_range(-0.05..0.05);
    let state = ContinuousState {
        v_o,
        v1: rng.random_range(-0.8..0.8),
        v2: v_o,
        valve_angle: FRAC_PI_2,
        ..Default::default()
    };
    let input = ActuationInput {
        i1: rng.random_range(-1.0..1.0) * params.line1.max_current,
        i2: rng.random_range(-1.0..1.0) * params.line2.max_current,
        valve_angle: FRAC_PI_2,
    };
    let full = constrained_full_accel(&state, &input, params, &load)?;
    let (reduced, _) = hf_accel(&state, &input, params, &load);
    Ok(relative(full, reduced))
}

fn sample_hs(params: &ActuatorParams, load: &LoadScenario, rng: &mut ChaCha8Rng) -> Result<f64> {
    let magnitude = rng.random_range(0.2..=1.0);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let v2 = rng.random_range(-1.0..1.0) * params.line2.max_piston_speed();
    let v_o = rng.random_range(-0.5..0.5) * params.line1.max_piston_speed();
    let state = ContinuousState {
        v_o,
        v1: v_o - v2,
        v2,
        ..Default::default()
    };
    let input = ActuationInput {
        i1: sign * magnitude * params.line1.max_current,
        i2: rng.random_range(-0.1..0.1) * params.line2.max_current,
        valve_angle: 0.0,
    };
    let (full, _) = full_accel(&state, &input, params, load)?;
    Ok(relative(full, hs_accel(&state, &input, params, load)))
}

/// Compares the full open-valve model with the two reduced mode models on
/// `n` seeded random inputs. Sample `i` draws from stream `i` of the seed,
/// so sequential and parallel runs give identical reports.
pub fn reduction_check(
    params: &ActuatorParams,
    swing: &LoadScenario,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<ReductionReport> {
    let errors = map_indices(n, exec, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        Ok::<_, Error>((
            sample_hf(params, &mut rng)?,
            sample_hs(params, swing, &mut rng)?,
        ))
    });
    let mut report = ReductionReport {
        samples: n,
        max_hf_error: 0.0,
        max_hs_error: 0.0,
    };
    for e in errors {
        let (hf, hs) = e?;
        report.max_hf_error = report.max_hf_error.max(hf);
        report.max_hs_error = report.max_hs_error.max(hs);
    }
    Ok(report)
}

/// Runs one scenario at each time step.
pub fn dt_sweep(
    scenario: &Scenario,
    config: &Config,
    dts: &[f64],
    exec: Execution,
) -> Vec<Result<SimTrace>> {
    map_slice(dts, exec, |&dt| run_scenario_with_dt(scenario, config, dt))
}

/// Observed order of accuracy from three solutions at steps `h`, `h/2`, `h/4`.
pub fn observed_order(coarse: f64, medium: f64, fine: f64) -> f64 {
    ((coarse - medium).abs() / (medium - fine).abs()).log2()
}

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::energy::EnergyTotals;
use crate::control::{ControlMode, Rejection};
use crate::error::Result;

/// One row of the trace, taken at every control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// `None` for open-loop runs.
    pub mode: Option<ControlMode>,
    pub x_o: f64,
    pub v_o: f64,
    pub x1: f64,
    pub v1: f64,
    pub x2: f64,
    pub v2: f64,
    pub phi: f64,
    pub i1: f64,
    pub w2_cmd: f64,
    pub f_out: f64,
    pub pressure: f64,
    /// Power dissipated in the valve, W.
    pub p_throttle: f64,
    /// Running energy ledger residual, J.
    pub e_residual: f64,
}

/// CSV layout of a trace row. Column order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub mode: String,
    pub x_o_m: f64,
    pub v_o_mps: f64,
    pub x1_m: f64,
    pub v1_mps: f64,
    pub x2_m: f64,
    pub v2_mps: f64,
    pub phi_rad: f64,
    #[serde(rename = "I1_A")]
    pub i1_a: f64,
    pub w2_cmd_radps: f64,
    #[serde(rename = "F_out_N")]
    pub f_out_n: f64,
    #[serde(rename = "P_Pa")]
    pub p_pa: f64,
    #[serde(rename = "P_throttle_W")]
    pub p_throttle_w: f64,
    #[serde(rename = "E_residual_J")]
    pub e_residual_j: f64,
}

pub const TRACE_COLUMNS: [&str; 15] = [
    "t_s",
    "mode",
    "x_o_m",
    "v_o_mps",
    "x1_m",
    "v1_mps",
    "x2_m",
    "v2_mps",
    "phi_rad",
    "I1_A",
    "w2_cmd_radps",
    "F_out_N",
    "P_Pa",
    "P_throttle_W",
    "E_residual_J",
];

impl From<&TraceSample> for TraceRow {
    fn from(s: &TraceSample) -> Self {
        Self {
            t_s: s.t,
            mode: s.mode.map_or("OPEN", ControlMode::label).to_string(),
            x_o_m: s.x_o,
            v_o_mps: s.v_o,
            x1_m: s.x1,
            v1_mps: s.v1,
            x2_m: s.x2,
            v2_mps: s.v2,
            phi_rad: s.phi,
            i1_a: s.i1,
            w2_cmd_radps: s.w2_cmd,
            f_out_n: s.f_out,
            p_pa: s.pressure,
            p_throttle_w: s.p_throttle,
            e_residual_j: s.e_residual,
        }
    }
}

/// Valve travel between the two end positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValveTravel {
    pub start: f64,
    pub end: f64,
}

impl ValveTravel {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub value: f64,
    pub time: f64,
}

/// Quantities tracked at integrator-step resolution.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Metrics {
    /// First contact of the output with the ground, or the drop impact.
    pub impact_time: Option<f64>,
    /// When the controller's contact detector fired.
    pub contact_time: Option<f64>,
    /// Valve travels from fully open to fully closed.
    pub closings: Vec<ValveTravel>,
    /// Valve travels from fully closed to fully open.
    pub openings: Vec<ValveTravel>,
    /// Lowest slave force while DOWNSHIFTING.
    pub min_hold_force: Option<Peak>,
    /// Largest throttle force magnitude.
    pub peak_throttle_force: Option<Peak>,
    pub peak_throttle_power: Option<Peak>,
    pub peak_pressure: Option<Peak>,
    /// Largest `|v_o - v1 - v2|` while the valve path was open.
    pub max_constraint_residual: f64,
}

impl Metrics {
    /// First closing that starts at or after the contact detection.
    pub fn downshift(&self) -> Option<ValveTravel> {
        let after = self.contact_time?;
        self.closings
            .iter()
            .copied()
            .find(|t| t.start >= after - 1e-9)
    }

    pub fn upshift(&self) -> Option<ValveTravel> {
        let closed = self.downshift()?;
        self.openings
            .iter()
            .copied()
            .find(|t| t.start >= closed.end)
    }

    pub fn contact_delay(&self) -> Option<f64> {
        Some(self.contact_time? - self.impact_time?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub scenario: String,
    pub dt: f64,
    pub sample_interval: f64,
    pub samples: Vec<TraceSample>,
    pub events: Vec<TraceEvent>,
    pub metrics: Metrics,
    pub energy: EnergyTotals,
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
    /// The scenario expected a ground contact and none was detected.
    pub missed_contact: bool,
}

impl SimTrace {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            w.serialize(TraceRow::from(s))?;
        }
        if self.samples.is_empty() {
            w.write_record(TRACE_COLUMNS)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn final_sample(&self) -> Option<&TraceSample> {
        self.samples.last()
    }
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_COLUMNS {
        return Err(crate::Error::Domain(format!(
            "unexpected trace header {header:?}"
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

use serde::Serialize;

use super::SimTrace;

/// Running energy accumulators of one simulation, J.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyTotals {
    /// Mechanical work delivered by the two motors at their pistons.
    pub input: f64,
    pub external: f64,
    pub viscous: f64,
    pub throttle: f64,
    /// Work absorbed by the end stops, stored or dissipated.
    pub stops: f64,
    /// Sum of kinetic energy jumps at discrete events (impulses, regime
    /// projections, load switches).
    pub events: f64,
    /// Integral of every power flow magnitude plus every event magnitude.
    pub gross: f64,
    pub kinetic_initial: f64,
    pub kinetic_final: f64,
}

impl EnergyTotals {
    /// Energy not accounted for by any ledger term.
    pub fn residual(&self) -> f64 {
        let continuous_change = self.kinetic_final - self.kinetic_initial - self.events;
        self.input - continuous_change - self.external - self.viscous - self.throttle - self.stops
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerSummary {
    pub input: f64,
    pub kinetic_change: f64,
    pub events: f64,
    pub external: f64,
    pub viscous: f64,
    pub throttle: f64,
    pub stops: f64,
    pub gross: f64,
    pub residual: f64,
    /// `|residual| / gross`, zero for a trace with no energy flow at all.
    pub relative_residual: f64,
}

pub fn energy_audit(trace: &SimTrace) -> LedgerSummary {
    let e = &trace.energy;
    let residual = e.residual();
    LedgerSummary {
        input: e.input,
        kinetic_change: e.kinetic_final - e.kinetic_initial,
        events: e.events,
        external: e.external,
        viscous: e.viscous,
        throttle: e.throttle,
        stops: e.stops,
        gross: e.gross,
        residual,
        relative_residual: if e.gross > 0.0 {
            residual.abs() / e.gross
        } else {
            residual.abs()
        },
    }
}

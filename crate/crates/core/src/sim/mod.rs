//! Fixed-step hybrid simulation: dynamics, valve servo and controller
//! stepped together, with a scripted load schedule per scenario.

mod energy;
mod impact;
mod rk4;
mod scenario;
mod simulator;
mod summary;
mod trace;

pub use energy::{energy_audit, EnergyTotals, LedgerSummary};
pub use impact::{contact_speed, impact_coupling, piston_velocity};
pub use rk4::rk4_step;
pub use scenario::{
    gait_script, ControlSpec, DropSpec, Expectations, LoadEntry, LoadSource, LowerStop, Scenario,
    Trigger, BUILTIN_NAMES,
};
pub use simulator::{run_batch, run_scenario, run_scenario_with_dt, Simulator};
pub use summary::{check_expectations, summary_text};
pub use trace::{
    read_trace_csv, Metrics, Peak, SimTrace, TraceEvent, TraceRow, TraceSample, ValveTravel,
    TRACE_COLUMNS,
};

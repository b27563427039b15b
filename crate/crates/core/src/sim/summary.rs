use std::fmt::Write as _;

use super::energy::LedgerSummary;
use super::scenario::Scenario;
use super::trace::SimTrace;

fn opt(v: Option<f64>, unit: &str, scale: f64) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.4} {unit}", x * scale))
}

/// Plain-text report of one run.
pub fn summary_text(trace: &SimTrace, ledger: &LedgerSummary) -> String {
    let m = &trace.metrics;
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", trace.scenario);
    let _ = writeln!(out, "dt_s: {}", trace.dt);
    let _ = writeln!(out, "samples: {}", trace.samples.len());
    let _ = writeln!(out, "impact_time_s: {}", opt(m.impact_time, "s", 1.0));
    let _ = writeln!(out, "contact_detected_s: {}", opt(m.contact_time, "s", 1.0));
    let _ = writeln!(out, "contact_delay_s: {}", opt(m.contact_delay(), "s", 1.0));
    if trace.missed_contact {
        let _ = writeln!(out, "missed_contact: yes");
    }
    let _ = writeln!(
        out,
        "downshift_duration_s: {}",
        opt(m.downshift().map(|t| t.duration()), "s", 1.0)
    );
    let _ = writeln!(
        out,
        "upshift_duration_s: {}",
        opt(m.upshift().map(|t| t.duration()), "s", 1.0)
    );
    let _ = writeln!(
        out,
        "min_force_while_downshifting_N: {}",
        opt(m.min_hold_force.map(|p| p.value), "N", 1.0)
    );
    let _ = writeln!(
        out,
        "peak_braking_force_N: {}",
        opt(m.peak_throttle_force.map(|p| p.value), "N", 1.0)
    );
    let _ = writeln!(
        out,
        "peak_throttle_power_W: {}",
        opt(m.peak_throttle_power.map(|p| p.value), "W", 1.0)
    );
    let _ = writeln!(
        out,
        "peak_pressure_MPa: {}",
        opt(m.peak_pressure.map(|p| p.value), "MPa", 1e-6)
    );
    let _ = writeln!(
        out,
        "max_constraint_residual_mps: {:e}",
        m.max_constraint_residual
    );
    let _ = writeln!(out, "energy_input_J: {:.6}", ledger.input);
    let _ = writeln!(out, "energy_kinetic_change_J: {:.6}", ledger.kinetic_change);
    let _ = writeln!(out, "energy_events_J: {:.6}", ledger.events);
    let _ = writeln!(out, "energy_external_J: {:.6}", ledger.external);
    let _ = writeln!(out, "energy_viscous_J: {:.6}", ledger.viscous);
    let _ = writeln!(out, "energy_throttle_J: {:.6}", ledger.throttle);
    let _ = writeln!(out, "energy_stops_J: {:.6}", ledger.stops);
    let _ = writeln!(out, "energy_gross_J: {:.6}", ledger.gross);
    let _ = writeln!(out, "energy_residual_J: {:.3e}", ledger.residual);
    let _ = writeln!(
        out,
        "energy_residual_fraction: {:.3e}",
        ledger.relative_residual
    );
    for e in &trace.events {
        let _ = writeln!(out, "event: {:.4} s {}: {}", e.time, e.kind, e.detail);
    }
    for r in &trace.rejections {
        let _ = writeln!(out, "rejected: {:.4} s {}", r.time, r.message);
    }
    for w in &trace.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

/// Every target of the scenario that the run missed.
pub fn check_expectations(
    trace: &SimTrace,
    scenario: &Scenario,
    ledger: &LedgerSummary,
) -> Vec<String> {
    let x = &scenario.expect;
    let m = &trace.metrics;
    let mut v = Vec::new();
    if let Some(want) = x.contact {
        if want != m.contact_time.is_some() {
            v.push(format!(
                "contact detected: {} (expected {want})",
                m.contact_time.is_some()
            ));
        }
    }
    if let Some(max) = x.max_contact_delay_s {
        match m.contact_delay() {
            Some(d) if d <= max => {}
            other => v.push(format!("contact delay {other:?} s exceeds {max} s")),
        }
    }
    let window = |name: &str, got: Option<f64>, [lo, hi]: [f64; 2], v: &mut Vec<String>| match got {
        Some(d) if (lo..=hi).contains(&d) => {}
        other => v.push(format!("{name} duration {other:?} s outside [{lo}, {hi}]")),
    };
    if let Some(w) = x.downshift_s {
        window("downshift", m.downshift().map(|t| t.duration()), w, &mut v);
    }
    if let Some(w) = x.upshift_s {
        window("upshift", m.upshift().map(|t| t.duration()), w, &mut v);
    }
    if let Some(min) = x.min_hold_force_n {
        match m.min_hold_force {
            Some(p) if p.value >= min => {}
            other => v.push(format!(
                "force while downshifting {:?} N below {min} N",
                other.map(|p| p.value)
            )),
        }
    }
    if let Some(min) = x.peak_braking_force_n {
        match m.peak_throttle_force {
            Some(p) if p.value >= min => {}
            other => v.push(format!(
                "peak braking force {:?} N below {min} N",
                other.map(|p| p.value)
            )),
        }
    }
    if let Some(min) = x.peak_throttle_power_w {
        match m.peak_throttle_power {
            Some(p) if p.value > min => {}
            other => v.push(format!(
                "peak throttle power {:?} W not above {min} W",
                other.map(|p| p.value)
            )),
        }
    }
    if let Some(max) = x.max_energy_residual {
        if ledger.relative_residual > max {
            v.push(format!(
                "energy residual {:.3e} of gross exceeds {max}",
                ledger.relative_residual
            ));
        }
    }
    v
}

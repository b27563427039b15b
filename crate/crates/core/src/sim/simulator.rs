use std::f64::consts::FRAC_PI_2;

use super::energy::EnergyTotals;
use super::impact::impact_coupling;
use super::rk4::rk4_step;
use super::scenario::{ControlSpec, LoadEntry, LowerStop, Scenario, Trigger};
use super::trace::{Metrics, Peak, SimTrace, TraceEvent, TraceSample, ValveTravel};
use crate::config::Config;
use crate::control::{ControlCommand, ControlMode, Controller, HighLevelRefs, Script, SensorFrame};
use crate::dynamics::{
    evaluate, force_to_pressure, kinetic_energy, project_onto_regime, ActuationInput,
    ContinuousState, Environment, Evaluation, Regime, StopLimits,
};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::model::{LoadScenario, StrokeLimits};
use crate::valve::step_valve;

// Layout of the integrated vector.
const X_O: usize = 0;
const X1: usize = 1;
const X2: usize = 2;
const V_O: usize = 3;
const V1: usize = 4;
const V2: usize = 5;
const Q: usize = 6;
const E_IN: usize = 7;
const W_FE: usize = 8;
const D_VISC: usize = 9;
const D_THR: usize = 10;
const W_STOP: usize = 11;
const GROSS: usize = 12;
const DIM: usize = 13;

type Vector = [f64; DIM];

fn pack(s: &ContinuousState, acc: &Vector) -> Vector {
    let mut y = *acc;
    y[X_O] = s.x_o;
    y[X1] = s.x1;
    y[X2] = s.x2;
    y[V_O] = s.v_o;
    y[V1] = s.v1;
    y[V2] = s.v2;
    y[Q] = s.compression;
    y
}

fn unpack(y: &Vector, valve_angle: f64) -> ContinuousState {
    ContinuousState {
        x_o: y[X_O],
        x1: y[X1],
        x2: y[X2],
        v_o: y[V_O],
        v1: y[V1],
        v2: y[V2],
        valve_angle,
        compression: y[Q],
    }
}

fn derivative(
    y: &Vector,
    input: &ActuationInput,
    env: &Environment<'_>,
) -> Result<(Vector, Evaluation)> {
    let s = unpack(y, input.valve_angle);
    let e = evaluate(&s, input, env)?;
    let p = &e.powers;
    let mut d = [0.0; DIM];
    d[X_O] = s.v_o;
    d[X1] = s.v1;
    d[X2] = s.v2;
    d[V_O] = e.a_o;
    d[V1] = e.a1;
    d[V2] = e.a2;
    d[Q] = e.compression_rate;
    d[E_IN] = p.input;
    d[W_FE] = p.external;
    d[D_VISC] = p.viscous;
    d[D_THR] = p.throttle;
    d[W_STOP] = p.stops;
    d[GROSS] = p.gross();
    Ok((d, e))
}

fn higher(peak: &mut Option<Peak>, value: f64, time: f64) {
    if peak.is_none_or(|p| value > p.value) {
        *peak = Some(Peak { value, time });
    }
}

fn lower(peak: &mut Option<Peak>, value: f64, time: f64) {
    if peak.is_none_or(|p| value < p.value) {
        *peak = Some(Peak { value, time });
    }
}

/// Hybrid fixed-step simulator for one scenario.
pub struct Simulator<'a> {
    config: &'a Config,
    scenario: &'a Scenario,
    dt: f64,
    steps: u64,
    substeps_per_tick: u64,
    step_index: u64,
    y: Vector,
    angle: f64,
    regime: Regime,
    load: LoadScenario,
    limits: StopLimits,
    controller: Option<Controller>,
    command: ControlCommand,
    open_loop: Option<ActuationInput>,
    schedule_next: usize,
    kinetic_initial: f64,
    event_energy: f64,
    metrics: Metrics,
    travel_from_open: Option<f64>,
    travel_from_closed: Option<f64>,
    samples: Vec<TraceSample>,
    events: Vec<TraceEvent>,
    warnings: Vec<String>,
}

impl<'a> Simulator<'a> {
    pub fn new(config: &'a Config, scenario: &'a Scenario) -> Result<Self> {
        let dt = scenario.dt.unwrap_or(config.sim.dt);
        Self::with_dt(config, scenario, dt)
    }

    pub fn with_dt(config: &'a Config, scenario: &'a Scenario, dt: f64) -> Result<Self> {
        let params = &config.params;
        let period = config.control.period();
        let ratio = period / dt;
        let substeps_per_tick = ratio.round();
        let mut errors = Vec::new();
        if !(dt > 0.0 && dt.is_finite()) {
            errors.push(format!("time step must be > 0 (got {dt})"));
        } else if substeps_per_tick < 1.0 || (ratio - substeps_per_tick).abs() > 1e-6 * ratio {
            errors.push(format!(
                "time step {dt} s must divide the control period {period} s"
            ));
        }
        let steps = (scenario.duration / dt).round();
        if dt > 0.0 && (steps * dt - scenario.duration).abs() > 1e-9 * scenario.duration.max(1.0) {
            errors.push(format!(
                "duration {} s is not a whole number of {dt} s steps",
                scenario.duration
            ));
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }

        let first = scenario
            .schedule
            .first()
            .ok_or_else(|| Error::Validation(vec!["scenario has an empty load schedule".into()]))?;
        let load = first.load.resolve(params)?;
        let (controller, open_loop) = match &scenario.control {
            ControlSpec::Closed { initial_mode, .. } => (
                Some(Controller::new(&config.control, params, *initial_mode)),
                None,
            ),
            ControlSpec::Open(input) => (None, Some(*input)),
        };
        let angle = scenario.initial.valve_angle.clamp(0.0, FRAC_PI_2);
        let regime = Regime::from_angle(angle, &params.valve);
        let mut sim = Self {
            config,
            scenario,
            dt,
            steps: steps as u64,
            substeps_per_tick: substeps_per_tick as u64,
            step_index: 0,
            y: pack(&scenario.initial, &[0.0; DIM]),
            angle,
            regime,
            load,
            limits: StopLimits::from_params(params),
            controller,
            command: ControlCommand {
                phi_cmd: angle,
                ..Default::default()
            },
            open_loop,
            schedule_next: 0,
            kinetic_initial: 0.0,
            event_energy: 0.0,
            metrics: Metrics::default(),
            travel_from_open: None,
            travel_from_closed: None,
            samples: Vec::with_capacity((scenario.duration / period) as usize + 2),
            events: Vec::new(),
            warnings: Vec::new(),
        };
        sim.apply_schedule(0.0)?;
        sim.kinetic_initial = sim.kinetic_energy();
        sim.event_energy = 0.0;
        sim.y[GROSS] = 0.0;
        Ok(sim)
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn state(&self) -> ContinuousState {
        unpack(&self.y, self.angle)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn load(&self) -> &LoadScenario {
        &self.load
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.steps
    }

    fn kinetic_energy(&self) -> f64 {
        kinetic_energy(&self.state(), &self.config.params, &self.load)
    }

    fn input(&self) -> ActuationInput {
        match self.open_loop {
            Some(input) => ActuationInput {
                valve_angle: self.angle,
                ..input
            },
            None => ActuationInput {
                i1: self.command.i1,
                i2: self.command.i2,
                valve_angle: self.angle,
            },
        }
    }

    fn environment(&self) -> Environment<'_> {
        Environment {
            params: &self.config.params,
            load: &self.load,
            limits: &self.limits,
            regime: self.regime,
            throttle_horizon: Some(self.dt),
        }
    }

    fn energy(&self) -> EnergyTotals {
        EnergyTotals {
            input: self.y[E_IN],
            external: self.y[W_FE],
            viscous: self.y[D_VISC],
            throttle: self.y[D_THR],
            stops: self.y[W_STOP],
            events: self.event_energy,
            gross: self.y[GROSS],
            kinetic_initial: self.kinetic_initial,
            kinetic_final: self.kinetic_energy(),
        }
    }

    /// Replaces the velocities through a discrete event and books the
    /// kinetic energy jump.
    fn set_state(&mut self, s: ContinuousState, before: f64) {
        self.y = pack(&s, &self.y);
        let jump = self.kinetic_energy() - before;
        self.event_energy += jump;
        self.y[GROSS] += jump.abs();
    }

    fn event(&mut self, time: f64, kind: &str, detail: String) {
        log::debug!("t = {time:.4} s: {kind}: {detail}");
        self.events.push(TraceEvent {
            time,
            kind: kind.into(),
            detail,
        });
    }

    fn ground_engaged(&self) -> bool {
        let stroke_max = self.config.params.output_stroke.max;
        self.limits.output.max < stroke_max && self.y[X_O] > self.limits.output.max
    }

    fn apply_schedule(&mut self, t: f64) -> Result<()> {
        while let Some(entry) = self.scenario.schedule.get(self.schedule_next) {
            let fire = match entry.trigger {
                Trigger::Start => true,
                Trigger::Time(at) | Trigger::Impact(at) => t >= at - 1e-12,
                Trigger::GroundArrest { speed, latest } => {
                    (self.ground_engaged() && self.y[V_O] <= speed) || t >= latest - 1e-12
                }
            };
            if !fire {
                break;
            }
            self.schedule_next += 1;
            self.apply_entry(entry, t)?;
        }
        Ok(())
    }

    fn apply_entry(&mut self, entry: &LoadEntry, t: f64) -> Result<()> {
        let params = &self.config.params;
        let before = self.kinetic_energy();
        self.load = entry.load.resolve(params)?;
        let stroke = params.output_stroke;
        self.limits.output = StrokeLimits {
            min: match entry.lower_stop {
                LowerStop::Stroke => stroke.min,
                LowerStop::At(x) => x,
                LowerStop::Current => self.y[X_O],
            },
            max: entry.upper_stop.unwrap_or(stroke.max),
        };
        let mut s = self.state();
        if let (Trigger::Impact(_), Some(drop)) = (entry.trigger, self.scenario.drop) {
            s = impact_coupling(
                -drop.contact_speed(),
                &s,
                drop.force_ratio,
                self.regime,
                params,
                &self.load,
            )?;
            self.metrics.impact_time = Some(t);
        }
        self.set_state(s, before);
        let detail = format!(
            "{} (m_o = {:.1} kg, f_e = {:.1} N, stops {:.4}..{:.4} m)",
            self.load.label,
            self.load.mass,
            self.load.external_force,
            self.limits.output.min,
            self.limits.output.max
        );
        let kind = match entry.trigger {
            Trigger::Start => "load",
            Trigger::Time(_) => "load-time",
            Trigger::GroundArrest { .. } => "load-arrest",
            Trigger::Impact(_) => "impact",
        };
        self.event(t, kind, detail);
        Ok(())
    }

    fn evaluate_now(&self, input: &ActuationInput) -> Result<Evaluation> {
        Ok(derivative(&self.y, input, &self.environment())?.1)
    }

    fn control_tick(&mut self, t: f64) -> Result<()> {
        let Some(controller) = self.controller.as_ref() else {
            return Ok(());
        };
        let _ = controller;
        let before = self.evaluate_now(&self.input())?;
        let s = self.state();
        let frame = SensorFrame {
            time: t,
            knee_position: s.x_o,
            knee_velocity: s.v_o,
            slave_pressure: force_to_pressure(before.output_force, &self.config.params.fluid)
                .pressure,
            x1: s.x1,
            x2: s.x2,
            valve_angle: self.angle,
            em2_velocity: self.config.params.line2.transformation_ratio() * s.v2,
        };
        let refs = self.refs(t);
        let controller = self.controller.as_mut().expect("closed loop");
        let mode_before = controller.mode();
        self.command = controller.tick(&frame, &refs);
        let mode_after = controller.mode();
        if self.metrics.contact_time.is_none() {
            self.metrics.contact_time = controller.contact_time();
        }
        if mode_after != mode_before {
            self.event(t, "mode", format!("{mode_before} -> {mode_after}"));
        }
        Ok(())
    }

    fn script(&self) -> Option<&Script> {
        match &self.scenario.control {
            ControlSpec::Closed { script, .. } => Some(script),
            ControlSpec::Open(_) => None,
        }
    }

    fn refs(&self, t: f64) -> HighLevelRefs {
        self.script()
            .expect("closed loop")
            .refs(t, self.config.params.line1.max_current)
    }

    fn mode(&self) -> Option<ControlMode> {
        self.controller.as_ref().map(Controller::mode)
    }

    fn record_sample(&mut self, t: f64) -> Result<()> {
        let input = self.input();
        let e = self.evaluate_now(&input)?;
        let s = self.state();
        let out = force_to_pressure(e.output_force, &self.config.params.fluid);
        self.samples.push(TraceSample {
            t,
            mode: self.mode(),
            x_o: s.x_o,
            v_o: s.v_o,
            x1: s.x1,
            v1: s.v1,
            x2: s.x2,
            v2: s.v2,
            phi: self.angle,
            i1: input.i1,
            w2_cmd: self.command.w2_cmd,
            f_out: out.force,
            pressure: out.pressure,
            p_throttle: e.powers.throttle,
            e_residual: self.energy().residual(),
        });
        Ok(())
    }

    fn track_valve(&mut self, t: f64, old: f64, new: f64) {
        let t_end = t + self.dt;
        if old <= 0.0 && new > 0.0 {
            self.travel_from_open = Some(t);
            self.travel_from_closed = None;
        }
        if old >= FRAC_PI_2 && new < FRAC_PI_2 {
            self.travel_from_closed = Some(t);
            self.travel_from_open = None;
        }
        if new >= FRAC_PI_2 && old < FRAC_PI_2 {
            if let Some(start) = self.travel_from_open.take() {
                self.metrics
                    .closings
                    .push(ValveTravel { start, end: t_end });
            }
        }
        if new <= 0.0 && old > 0.0 {
            if let Some(start) = self.travel_from_closed.take() {
                self.metrics
                    .openings
                    .push(ValveTravel { start, end: t_end });
            }
        }
    }

    fn track_forces(&mut self, t: f64, e: &Evaluation) {
        let params = &self.config.params;
        if self.metrics.impact_time.is_none() && self.ground_engaged() {
            self.metrics.impact_time = Some(t);
        }
        if self.mode() == Some(ControlMode::Downshifting) {
            lower(&mut self.metrics.min_hold_force, e.output_force, t);
        }
        if self.regime == Regime::Open {
            higher(
                &mut self.metrics.peak_throttle_force,
                e.forces.throttle.abs(),
                t,
            );
            higher(&mut self.metrics.peak_throttle_power, e.powers.throttle, t);
        }
        let pressure = force_to_pressure(e.output_force, &params.fluid);
        higher(&mut self.metrics.peak_pressure, pressure.pressure.abs(), t);
        if pressure.over_rating && !self.warnings.iter().any(|w| w.starts_with("pressure")) {
            self.warnings.push(format!(
                "pressure {:.2} MPa exceeds the {:.2} MPa cylinder rating at t = {t:.4} s",
                pressure.pressure / 1e6,
                params.fluid.rated_pressure / 1e6
            ));
        }
    }

    /// Advances by one integration step.
    pub fn step(&mut self) -> Result<()> {
        let t = self.time();
        self.apply_schedule(t)?;
        if self.step_index.is_multiple_of(self.substeps_per_tick) {
            self.control_tick(t)?;
            self.record_sample(t)?;
        }

        let params = &self.config.params;
        let commanded = self
            .open_loop
            .map_or(self.command.phi_cmd, |i| i.valve_angle);
        let old = self.angle;
        self.angle = step_valve(commanded, old, self.dt, &params.valve);
        self.track_valve(t, old, self.angle);

        let regime = Regime::from_angle(self.angle, &params.valve);
        if regime != self.regime {
            let before = self.kinetic_energy();
            let projected = project_onto_regime(&self.state(), regime, params, &self.load);
            self.regime = regime;
            self.set_state(projected, before);
            let label = match regime {
                Regime::Open => "valve path opened",
                Regime::Closed => "valve path closed",
            };
            self.event(t, "regime", label.into());
        }

        let input = self.input();
        let env = self.environment();
        let (_, first) = derivative(&self.y, &input, &env)?;
        let next = rk4_step(&self.y, self.dt, |y| Ok(derivative(y, &input, &env)?.0))?;
        self.track_forces(t, &first);
        if let Some(bad) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::Instability {
                time: t + self.dt,
                detail: format!("state component {bad} became {}", next[bad]),
            });
        }
        self.y = next;
        self.step_index += 1;
        if self.regime == Regime::Open && !self.config.params.compliance.enabled {
            let r = self.state().constraint_residual().abs();
            self.metrics.max_constraint_residual = self.metrics.max_constraint_residual.max(r);
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<SimTrace> {
        while !self.is_finished() {
            self.step()?;
        }
        if self.step_index.is_multiple_of(self.substeps_per_tick) {
            self.record_sample(self.time())?;
        }
        let mut warnings = std::mem::take(&mut self.warnings);
        let rejections = self
            .controller
            .as_ref()
            .map(|c| c.rejections().to_vec())
            .unwrap_or_default();
        let missed_contact =
            self.scenario.expect.contact == Some(true) && self.metrics.contact_time.is_none();
        if missed_contact {
            warnings.push("no ground contact was detected; the downshift never started".into());
        }
        Ok(SimTrace {
            scenario: self.scenario.name.clone(),
            dt: self.dt,
            sample_interval: self.config.control.period(),
            samples: self.samples,
            events: self.events,
            metrics: self.metrics,
            energy: EnergyTotals {
                input: self.y[E_IN],
                external: self.y[W_FE],
                viscous: self.y[D_VISC],
                throttle: self.y[D_THR],
                stops: self.y[W_STOP],
                events: self.event_energy,
                gross: self.y[GROSS],
                kinetic_initial: self.kinetic_initial,
                kinetic_final: kinetic_energy(
                    &unpack(&self.y, self.angle),
                    &self.config.params,
                    &self.load,
                ),
            },
            rejections,
            warnings,
            missed_contact,
        })
    }
}

pub fn run_scenario(scenario: &Scenario, config: &Config) -> Result<SimTrace> {
    Simulator::new(config, scenario)?.run()
}

pub fn run_scenario_with_dt(scenario: &Scenario, config: &Config, dt: f64) -> Result<SimTrace> {
    Simulator::with_dt(config, scenario, dt)?.run()
}

/// Runs independent scenarios, concurrently when `exec` allows.
/// Results come back in input order.
pub fn run_batch(
    scenarios: &[Scenario],
    config: &Config,
    exec: Execution,
) -> Vec<Result<SimTrace>> {
    map_slice(scenarios, exec, |s| run_scenario(s, config))
}

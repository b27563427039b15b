use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use super::{
    next_mode, pid_step, ContactDetector, ControlCommand, ControlConfig, ControlMode, Events,
    HighLevelRefs, ModeRequest, PidLimits, PidState, SensorFrame,
};
use crate::model::ActuatorParams;
use crate::valve::ValveSpec;

/// A high-level request the mode graph could not serve.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub time: f64,
    pub mode: ControlMode,
    pub request: ModeRequest,
    pub message: String,
}

#[derive(Debug, Clone)]
struct Limits {
    t2: f64,
    force_per_amp1: f64,
    i1_max: f64,
    i2_max: f64,
    f1_max: f64,
    v2_max: f64,
    w2_max: f64,
}

/// Mode state machine plus the per-mode command laws, sampled at the
/// control rate.
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControlConfig,
    limits: Limits,
    valve: ValveSpec,
    mode: ControlMode,
    detector: ContactDetector,
    em2: PidState,
    stroke: PidState,
    last_hs_current: f64,
    held_current: f64,
    rejections: Vec<Rejection>,
    seen: BTreeSet<(ControlMode, ModeRequest)>,
    transitions: Vec<(f64, ControlMode, ControlMode)>,
}

impl Controller {
    pub fn new(config: &ControlConfig, params: &ActuatorParams, initial: ControlMode) -> Self {
        let l1 = &params.line1;
        let l2 = &params.line2;
        Self {
            config: config.clone(),
            limits: Limits {
                t2: l2.transformation_ratio(),
                force_per_amp1: l1.force(1.0),
                i1_max: l1.max_current,
                i2_max: l2.max_current,
                f1_max: l1.max_force(),
                v2_max: l2.max_piston_speed(),
                w2_max: l2.max_speed,
            },
            valve: params.valve.clone(),
            mode: initial,
            detector: ContactDetector::new(config.contact),
            em2: PidState::default(),
            stroke: PidState::default(),
            last_hs_current: 0.0,
            held_current: 0.0,
            rejections: Vec::new(),
            seen: BTreeSet::new(),
            transitions: Vec::new(),
        }
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn period(&self) -> f64 {
        self.config.period()
    }

    pub fn contact_time(&self) -> Option<f64> {
        self.detector.latched_at()
    }

    pub fn rejections(&self) -> &[Rejection] {
        &self.rejections
    }

    /// `(time, from, to)` for every mode change so far.
    pub fn transitions(&self) -> &[(f64, ControlMode, ControlMode)] {
        &self.transitions
    }

    pub fn tick(&mut self, frame: &SensorFrame, refs: &HighLevelRefs) -> ControlCommand {
        let contact = self.detector.push(*frame);
        let events = Events {
            contact,
            valve_closed: self.valve.is_closed(frame.valve_angle),
            valve_open: self.valve.is_open(frame.valve_angle),
            request: Some(refs.request),
        };
        let (next, diagnostic) = next_mode(self.mode, &events);
        if let Some(message) = diagnostic {
            if self.seen.insert((self.mode, refs.request)) {
                log::warn!("t = {:.4} s: {message}", frame.time);
                self.rejections.push(Rejection {
                    time: frame.time,
                    mode: self.mode,
                    request: refs.request,
                    message,
                });
            }
        }
        if next != self.mode {
            self.enter(next, frame.time);
        }
        self.command(frame, refs)
    }

    fn enter(&mut self, next: ControlMode, time: f64) {
        log::debug!("t = {time:.4} s: {} -> {next}", self.mode);
        self.transitions.push((time, self.mode, next));
        match next {
            ControlMode::Downshifting => {
                self.held_current = self
                    .last_hs_current
                    .clamp(-self.limits.i1_max, self.limits.i1_max);
            }
            ControlMode::Hf => self.stroke = PidState::default(),
            ControlMode::Hs => {
                self.detector.reset();
                self.stroke = PidState::default();
            }
            ControlMode::Upshifting | ControlMode::Braking => {}
        }
        self.mode = next;
    }

    fn command(&mut self, frame: &SensorFrame, refs: &HighLevelRefs) -> ControlCommand {
        let dt = self.config.period();
        let lim = &self.limits;
        let velocity_ref = refs.velocity.clamp(-lim.v2_max, lim.v2_max);
        let (i1, w2_cmd, phi_cmd) = match self.mode {
            ControlMode::Hs => {
                let i1 = refs.current.clamp(-lim.i1_max, lim.i1_max);
                self.last_hs_current = i1;
                let (v2, s) = pid_step(
                    frame.x1,
                    frame.x2,
                    self.stroke,
                    &self.config.stroke_hs,
                    &PidLimits::symmetric(lim.v2_max),
                    dt,
                );
                self.stroke = s;
                (i1, lim.t2 * v2, 0.0)
            }
            ControlMode::Downshifting => (self.held_current, lim.t2 * velocity_ref, FRAC_PI_2),
            ControlMode::Hf | ControlMode::Upshifting => {
                let (f1, s) = pid_step(
                    frame.x2,
                    frame.x1,
                    self.stroke,
                    &self.config.stroke_hf,
                    &PidLimits::symmetric(lim.f1_max),
                    dt,
                );
                self.stroke = s;
                let phi = if self.mode == ControlMode::Hf {
                    FRAC_PI_2
                } else {
                    0.0
                };
                (f1 / lim.force_per_amp1, lim.t2 * velocity_ref, phi)
            }
            ControlMode::Braking => (0.0, 0.0, self.config.braking_angle),
        };
        let w2_cmd = w2_cmd.clamp(-lim.w2_max, lim.w2_max);
        let (i2, em2) = pid_step(
            w2_cmd,
            frame.em2_velocity,
            self.em2,
            &self.config.em2_velocity,
            &PidLimits::symmetric(lim.i2_max),
            dt,
        );
        self.em2 = em2;
        ControlCommand {
            i1: i1.clamp(-lim.i1_max, lim.i1_max),
            w2_cmd,
            i2,
            phi_cmd,
        }
    }
}

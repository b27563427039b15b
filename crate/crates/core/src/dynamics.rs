//! Lumped-parameter dynamics of the two master lines and the output piston.
//!
//! Velocities are piston-frame and extension-positive. With the valves open
//! the slave sees the summed flow, `v_o = v1 + v2`, and the state is
//! integrated with the full two degree of freedom model. With the valves
//! closed M1 vents to the reservoir and moves on its own while M2 drives the
//! output directly (`v_o = v2`).

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model::{ActuatorParams, FluidSpec, LoadScenario, StopSpec, StrokeLimits};
use crate::valve::{loss_coefficient, ValveSpec};

/// Relative determinant below which the mass matrix is treated as singular.
const SINGULAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContinuousState {
    pub x_o: f64,
    pub x1: f64,
    pub x2: f64,
    pub v_o: f64,
    pub v1: f64,
    pub v2: f64,
    /// Ball angle, 0 open, π/2 closed. Stepped by the valve servo, not integrated.
    pub valve_angle: f64,
    /// Compression of the optional line compliance, m at the slave.
    pub compression: f64,
}

impl ContinuousState {
    /// `v_o - v1 - v2`, zero on any open-valve trajectory of the rigid model.
    pub fn constraint_residual(&self) -> f64 {
        self.v_o - self.v1 - self.v2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuationInput {
    pub i1: f64,
    pub i2: f64,
    pub valve_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Valves open or throttling: full coupled model.
    Open,
    /// Valves closed: M2 drives the output, M1 vents.
    Closed,
}

impl Regime {
    pub fn from_angle(angle: f64, valve: &ValveSpec) -> Self {
        if valve.is_closed(angle) {
            Regime::Closed
        } else {
            Regime::Open
        }
    }
}

/// Stroke windows for the three pistons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopLimits {
    pub output: StrokeLimits,
    pub line1: StrokeLimits,
    pub line2: StrokeLimits,
}

impl StopLimits {
    pub fn from_params(params: &ActuatorParams) -> Self {
        Self {
            output: params.output_stroke,
            line1: params.line1.stroke,
            line2: params.line2.stroke,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StopForces {
    pub output: f64,
    pub line1: f64,
    pub line2: f64,
}

fn window_force(x: f64, v: f64, limits: &StrokeLimits, spec: &StopSpec) -> f64 {
    spec.force(limits.min - x, -v) - spec.force(x - limits.max, v)
}

pub fn stop_forces(state: &ContinuousState, limits: &StopLimits, spec: &StopSpec) -> StopForces {
    StopForces {
        output: window_force(state.x_o, state.v_o, &limits.output, spec),
        line1: window_force(state.x1, state.v1, &limits.line1, spec),
        line2: window_force(state.x2, state.v2, &limits.line2, spec),
    }
}

/// Mass matrix of the open-valve model for explicit reflected masses.
pub fn mass_matrix_from(m_o: f64, m_a1: f64, m_a2: f64) -> Result<Matrix2<f64>> {
    let h = Matrix2::new(m_o + m_a2, -m_a2, -m_a2, m_a1 + m_a2);
    let det = h.determinant();
    let scale = h[(0, 0)].abs().max(h[(1, 1)].abs()).powi(2);
    if !(det > SINGULAR_RTOL * scale) || !det.is_finite() {
        return Err(Error::SingularMassMatrix { det });
    }
    Ok(h)
}

pub fn mass_matrix(params: &ActuatorParams, load: &LoadScenario) -> Result<Matrix2<f64>> {
    mass_matrix_from(
        load.mass,
        params.line1.reflected_mass(),
        params.line2.reflected_mass(),
    )
}

/// Dissipative force of the throttling valve on M1. Always opposes `v1`.
pub fn throttle_force(angle: f64, v1: f64, fluid: &FluidSpec, valve: &ValveSpec) -> f64 {
    let k = loss_coefficient(angle, valve);
    0.5 * k * v1 * v1.abs() * fluid.density * valve.bore_area()
}

/// Forces acting on the three bodies for one state and input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceSet {
    pub f1: f64,
    pub f2: f64,
    pub b_o: f64,
    pub b1: f64,
    pub b2: f64,
    pub throttle: f64,
    pub external: f64,
    pub stops: StopForces,
}

impl ForceSet {
    pub fn new(
        state: &ContinuousState,
        input: &ActuationInput,
        params: &ActuatorParams,
        load: &LoadScenario,
        stops: StopForces,
    ) -> Self {
        Self {
            f1: params.line1.force(input.i1),
            f2: params.line2.force(input.i2),
            b_o: load.loss_coeff * state.v_o,
            b1: params.line1.viscous_coeff * state.v1,
            b2: params.line2.viscous_coeff * state.v2,
            throttle: throttle_force(input.valve_angle, state.v1, &params.fluid, &params.valve),
            external: load.external_force,
            stops,
        }
    }

    fn full_rhs(&self) -> Vector2<f64> {
        let s = &self.stops;
        Vector2::new(
            self.f2 - self.b_o - self.b2 - self.external + s.output + s.line2,
            self.f1 - self.f2 - self.b1 + self.b2 - self.throttle + s.line1 - s.line2,
        )
    }
}

/// Open-valve accelerations `(v̇_o, v̇1)`.
pub fn full_accel(
    state: &ContinuousState,
    input: &ActuationInput,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> Result<(f64, f64)> {
    let forces = ForceSet::new(state, input, params, load, StopForces::default());
    full_accel_with(&forces, params, load)
}

pub fn full_accel_with(
    forces: &ForceSet,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> Result<(f64, f64)> {
    let h = mass_matrix(params, load)?;
    let rhs = forces.full_rhs();
    let det = h.determinant();
    // Cramer's rule on the 2x2 system.
    let a_o = (rhs[0] * h[(1, 1)] - h[(0, 1)] * rhs[1]) / det;
    let a_1 = (h[(0, 0)] * rhs[1] - h[(1, 0)] * rhs[0]) / det;
    Ok((a_o, a_1))
}

/// First row of the open-valve model with M1 held (`v1 = v̇1 = 0`).
pub fn constrained_full_accel(
    state: &ContinuousState,
    input: &ActuationInput,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> Result<f64> {
    let held = ContinuousState {
        v1: 0.0,
        v2: state.v_o,
        ..*state
    };
    let forces = ForceSet::new(&held, input, params, load, StopForces::default());
    let h = mass_matrix(params, load)?;
    Ok(forces.full_rhs()[0] / h[(0, 0)])
}

/// Closed-valve accelerations `(v̇_o, v̇1)` with M1 moving freely.
pub fn hf_accel(
    state: &ContinuousState,
    input: &ActuationInput,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> (f64, f64) {
    let on_output = ContinuousState {
        v2: state.v_o,
        ..*state
    };
    let f = ForceSet::new(&on_output, input, params, load, StopForces::default());
    let a_o = (f.f2 - f.b_o - f.b2 - f.external) / (load.mass + params.line2.reflected_mass());
    let a_1 = (f.f1 - f.b1) / params.line1.reflected_mass();
    (a_o, a_1)
}

/// High-speed approximation: M2 treated as stationary.
pub fn hs_accel(
    state: &ContinuousState,
    input: &ActuationInput,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> f64 {
    let through_m1 = ContinuousState {
        v1: state.v_o,
        v2: 0.0,
        ..*state
    };
    let f = ForceSet::new(&through_m1, input, params, load, StopForces::default());
    (f.f1 - f.b_o - f.b1 - f.throttle - f.external) / (load.mass + params.line1.reflected_mass())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputForce {
    /// Net hydraulic force on the slave piston, extension positive, N.
    pub force: f64,
    pub pressure: f64,
    pub over_rating: bool,
}

pub fn force_to_pressure(force: f64, fluid: &FluidSpec) -> OutputForce {
    let pressure = force / fluid.cylinder_area;
    OutputForce {
        force,
        pressure,
        over_rating: pressure.abs() > fluid.rated_pressure,
    }
}

/// Slave force inferred from the output's equation of motion, in whichever
/// regime the valve angle selects. Stops are ignored.
pub fn output_force_and_pressure(
    state: &ContinuousState,
    input: &ActuationInput,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> Result<OutputForce> {
    let a_o = match Regime::from_angle(input.valve_angle, &params.valve) {
        Regime::Open => full_accel(state, input, params, load)?.0,
        Regime::Closed => hf_accel(state, input, params, load).0,
    };
    let force = load.mass * a_o + load.loss_coeff * state.v_o + load.external_force;
    Ok(force_to_pressure(force, &params.fluid))
}

/// Power flows at one instant, W. Dissipations are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerFlows {
    /// Mechanical power delivered by both motors at their pistons.
    pub input: f64,
    /// Power spent against the external load force.
    pub external: f64,
    pub viscous: f64,
    pub throttle: f64,
    /// Power absorbed by the end stops (stored and dissipated).
    pub stops: f64,
}

impl PowerFlows {
    pub fn gross(&self) -> f64 {
        self.input.abs() + self.external.abs() + self.viscous + self.throttle + self.stops.abs()
    }
}

/// Everything the integrator needs from one right-hand-side evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub a_o: f64,
    pub a1: f64,
    pub a2: f64,
    /// Rate of change of the line compliance compression.
    pub compression_rate: f64,
    pub output_force: f64,
    pub forces: ForceSet,
    pub powers: PowerFlows,
}

/// Context shared by every evaluation within one integration step.
#[derive(Debug, Clone, Copy)]
pub struct Environment<'a> {
    pub params: &'a ActuatorParams,
    pub load: &'a LoadScenario,
    pub limits: &'a StopLimits,
    pub regime: Regime,
    /// When set, the throttle force is capped at what would stop M1 within
    /// this many seconds. Keeps explicit steps stable as the valve nears
    /// closure, where the loss coefficient grows by orders of magnitude.
    pub throttle_horizon: Option<f64>,
}

pub fn evaluate(
    state: &ContinuousState,
    input: &ActuationInput,
    env: &Environment<'_>,
) -> Result<Evaluation> {
    let params = env.params;
    let load = env.load;
    let stops = stop_forces(state, env.limits, &params.stops);
    let mut f = ForceSet::new(state, input, params, load, stops);
    if env.regime == Regime::Closed {
        f.throttle = 0.0;
    }
    let m_a1 = params.line1.reflected_mass();
    let m_a2 = params.line2.reflected_mass();
    let compliance = &params.compliance;
    let linked_v1 = if env.regime == Regime::Open {
        state.v1
    } else {
        0.0
    };

    if let (Some(h), Regime::Open) = (env.throttle_horizon, env.regime) {
        let m_eff = if compliance.enabled {
            m_a1
        } else {
            let h_mat = mass_matrix(params, load)?;
            h_mat.determinant() / h_mat[(0, 0)]
        };
        let cap = m_eff * state.v1.abs() / h;
        f.throttle = f.throttle.clamp(-cap, cap);
    }

    let (a_o, a1, a2, q_rate, output_force, spring_loss) = if compliance.enabled {
        let q_rate = linked_v1 + state.v2 - state.v_o;
        let p = compliance.stiffness * state.compression + compliance.damping * q_rate;
        let a_o = (p - f.b_o - f.external + stops.output) / load.mass;
        let a1 = match env.regime {
            Regime::Open => (f.f1 - p - f.b1 - f.throttle + stops.line1) / m_a1,
            Regime::Closed => (f.f1 - f.b1 + stops.line1) / m_a1,
        };
        let a2 = (f.f2 - p - f.b2 + stops.line2) / m_a2;
        (a_o, a1, a2, q_rate, p, compliance.damping * q_rate * q_rate)
    } else {
        let (a_o, a1, a2) = match env.regime {
            Regime::Open => {
                let (a_o, a1) = full_accel_with(&f, params, load)?;
                (a_o, a1, a_o - a1)
            }
            Regime::Closed => {
                let a_o = (f.f2 - f.b_o - f.b2 - f.external + stops.output + stops.line2)
                    / (load.mass + m_a2);
                let a1 = (f.f1 - f.b1 + stops.line1) / m_a1;
                (a_o, a1, a_o)
            }
        };
        let output_force = load.mass * a_o + f.b_o + f.external - stops.output;
        (a_o, a1, a2, 0.0, output_force, 0.0)
    };

    let powers = PowerFlows {
        input: f.f1 * state.v1 + f.f2 * state.v2,
        external: f.external * state.v_o,
        viscous: f.b_o * state.v_o + f.b1 * state.v1 + f.b2 * state.v2 + spring_loss,
        throttle: f.throttle * linked_v1,
        stops: -(stops.output * state.v_o + stops.line1 * state.v1 + stops.line2 * state.v2),
    };
    Ok(Evaluation {
        a_o,
        a1,
        a2,
        compression_rate: q_rate,
        output_force,
        forces: f,
        powers,
    })
}

/// Velocity jump applied when the valve path opens or closes, in the
/// kinetic-energy metric (fully inelastic). Closing locks the output to M2
/// and leaves M1 alone; opening restores `v_o = v1 + v2` through one
/// pressure impulse shared by all three pistons. With line compliance the
/// pistons are never rigidly linked and velocities are left unchanged.
pub fn project_onto_regime(
    state: &ContinuousState,
    to: Regime,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> ContinuousState {
    if params.compliance.enabled {
        return *state;
    }
    let m_o = load.mass;
    let m1 = params.line1.reflected_mass();
    let m2 = params.line2.reflected_mass();
    let mut s = *state;
    match to {
        Regime::Closed => {
            let v = (m_o * s.v_o + m2 * s.v2) / (m_o + m2);
            s.v_o = v;
            s.v2 = v;
        }
        Regime::Open => {
            let lambda = s.constraint_residual() / (1.0 / m_o + 1.0 / m1 + 1.0 / m2);
            s.v_o -= lambda / m_o;
            s.v1 += lambda / m1;
            s.v2 += lambda / m2;
        }
    }
    s
}

/// Kinetic energy of the three bodies plus energy stored in the compliance.
pub fn kinetic_energy(
    state: &ContinuousState,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> f64 {
    let m1 = params.line1.reflected_mass();
    let m2 = params.line2.reflected_mass();
    let mut e =
        0.5 * (load.mass * state.v_o.powi(2) + m1 * state.v1.powi(2) + m2 * state.v2.powi(2));
    if params.compliance.enabled {
        e += 0.5 * params.compliance.stiffness * state.compression.powi(2);
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn params() -> ActuatorParams {
        Config::default().params
    }

    fn swing() -> LoadScenario {
        LoadScenario::new("swing", 17.0, 0.0)
    }

    #[test]
    fn mass_matrix_with_table_inertias() {
        let h = mass_matrix_from(17.0, 10.0, 8900.0).unwrap();
        assert_eq!(h, Matrix2::new(8917.0, -8900.0, -8900.0, 8910.0));
        assert_relative_eq!(h.determinant(), 240_470.0, max_relative = 1e-12);
        assert!(matches!(
            mass_matrix_from(1.0, 0.0, 0.0),
            Err(Error::SingularMassMatrix { .. })
        ));
    }

    #[test]
    fn throttle_baselines() {
        let p = params();
        assert_eq!(throttle_force(0.7, 0.0, &p.fluid, &p.valve), 0.0);
        assert!(throttle_force(0.0, 0.8, &p.fluid, &p.valve).abs() < 1.0);
        let b = throttle_force(45f64.to_radians(), 0.47, &p.fluid, &p.valve);
        assert!((b - 1500.0).abs() < 30.0, "{b}");
        assert_eq!(
            throttle_force(0.7, -0.3, &p.fluid, &p.valve),
            -throttle_force(0.7, 0.3, &p.fluid, &p.valve)
        );
    }

    #[test]
    fn equilibrium_and_static_hold() {
        let p = params();
        let rest = ContinuousState::default();
        let (a, b) = full_accel(&rest, &ActuationInput::default(), &p, &swing()).unwrap();
        assert_eq!((a, b), (0.0, 0.0));

        let payload = LoadScenario::new("payload", 460.0, 1155.0);
        let i2 = 1155.0 / (p.line2.torque_constant * p.line2.transformation_ratio());
        let i1 = 1155.0 / (p.line1.torque_constant * p.line1.transformation_ratio());
        let input = ActuationInput {
            i1,
            i2,
            valve_angle: 0.0,
        };
        let (a, b) = full_accel(&rest, &input, &p, &payload).unwrap();
        assert!(a.abs() < 1e-9 && b.abs() < 1e-9, "{a} {b}");
        let closed = ActuationInput {
            i1: 0.0,
            i2,
            valve_angle: FRAC_PI_2,
        };
        assert!(hf_accel(&rest, &closed, &p, &payload).0.abs() < 1e-12);
    }

    #[test]
    fn reduced_models_on_prototype() {
        let p = params();
        let rest = ContinuousState::default();
        let hf = ActuationInput {
            i1: 0.0,
            i2: p.line2.max_current,
            valve_angle: FRAC_PI_2,
        };
        let (a, free) = hf_accel(&rest, &hf, &p, &swing());
        assert_relative_eq!(a, p.line2.max_force() / (17.0 + p.line2.reflected_mass()));
        assert!((a - 0.323).abs() < 1e-3);
        assert_eq!(free, 0.0);

        let hs = ActuationInput {
            i1: p.line1.max_current,
            i2: 0.0,
            valve_angle: 0.0,
        };
        assert!((hs_accel(&rest, &hs, &p, &swing()) - 12.96).abs() < 0.01);
        let stance = LoadScenario::new("stance", 460.0, 1155.0);
        assert!((hs_accel(&rest, &hs, &p, &stance) + 1.71).abs() < 0.01);
    }

    #[test]
    fn output_pressure_examples() {
        let f = force_to_pressure(2880.0, &params().fluid);
        assert!((f.pressure - 5.05e6).abs() < 0.01e6 && f.over_rating);
        let f = force_to_pressure(350.0, &params().fluid);
        assert!((f.pressure - 0.614e6).abs() < 0.001e6 && !f.over_rating);
        let out = output_force_and_pressure(
            &ContinuousState::default(),
            &ActuationInput::default(),
            &params(),
            &swing(),
        )
        .unwrap();
        assert_eq!(out.pressure, 0.0);
    }

    #[test]
    fn evaluation_matches_free_functions() {
        let p = params();
        let limits = StopLimits::from_params(&p);
        let load = swing();
        let s = ContinuousState {
            x_o: 0.02,
            x1: 0.01,
            x2: 0.01,
            v_o: 0.3,
            v1: 0.25,
            v2: 0.05,
            ..Default::default()
        };
        let input = ActuationInput {
            i1: 10.0,
            i2: 1.0,
            valve_angle: 0.4,
        };
        let env = Environment {
            params: &p,
            load: &load,
            limits: &limits,
            regime: Regime::Open,
            throttle_horizon: None,
        };
        let e = evaluate(&s, &input, &env).unwrap();
        let (a_o, a1) = full_accel(&s, &input, &p, &load).unwrap();
        assert_relative_eq!(e.a_o, a_o, max_relative = 1e-12);
        assert_relative_eq!(e.a1, a1, max_relative = 1e-12);
        assert_relative_eq!(e.a2, a_o - a1, max_relative = 1e-12);
        // Power balance of the open model.
        let ke_rate = load.mass * s.v_o * e.a_o
            + p.line1.reflected_mass() * s.v1 * e.a1
            + p.line2.reflected_mass() * s.v2 * e.a2;
        let pw = e.powers;
        let balance = pw.input - pw.external - pw.viscous - pw.throttle - pw.stops;
        assert_relative_eq!(ke_rate, balance, max_relative = 1e-9);
    }

    #[test]
    fn projections_satisfy_constraints_and_lose_energy() {
        let p = params();
        let load = swing();
        let s = ContinuousState {
            v_o: 0.3,
            v1: 0.4,
            v2: 0.02,
            ..Default::default()
        };
        let open = project_onto_regime(&s, Regime::Open, &p, &load);
        assert!(open.constraint_residual().abs() < 1e-15);
        assert!(kinetic_energy(&open, &p, &load) <= kinetic_energy(&s, &p, &load));
        let closed = project_onto_regime(&open, Regime::Closed, &p, &load);
        assert_eq!(closed.v_o, closed.v2);
        assert_eq!(closed.v1, open.v1);
        assert!(kinetic_energy(&closed, &p, &load) <= kinetic_energy(&open, &p, &load));
        // Already consistent states are fixed points.
        let again = project_onto_regime(&open, Regime::Open, &p, &load);
        assert!((again.v_o - open.v_o).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mass_matrix_is_spd(m_o in 1e-3..1e3f64, m1 in 1e-3..1e4f64, m2 in 1e-3..1e5f64) {
            let h = mass_matrix_from(m_o, m1, m2).unwrap();
            prop_assert_eq!(h[(0, 1)], h[(1, 0)]);
            prop_assert!(h[(0, 0)] > 0.0 && h.determinant() > 0.0);
            let eig = h.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&l| l > 0.0));
        }

        #[test]
        fn throttle_is_dissipative(angle in 0.0..FRAC_PI_2, v1 in -2.0..2.0f64) {
            let p = params();
            // b(φ) enters the M1 row with a minus sign, so its power is -b·v1.
            prop_assert!(-throttle_force(angle, v1, &p.fluid, &p.valve) * v1 <= 0.0);
        }
    }
}

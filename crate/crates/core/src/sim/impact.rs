use crate::dynamics::{mass_matrix, ContinuousState, Regime};
use crate::error::Result;
use crate::model::{ActuatorParams, LoadScenario};

/// Free-fall speed after dropping `height`.
pub fn contact_speed(height: f64, gravity: f64) -> f64 {
    (2.0 * gravity * height).sqrt()
}

/// Piston velocity matching a load velocity through a force ratio `r`
/// (load force = r × piston force, so piston travel = r × load travel).
pub fn piston_velocity(load_velocity: f64, force_ratio: f64) -> f64 {
    load_velocity / force_ratio
}

/// Locks the output piston to a moving load at contact. The load velocity
/// is mapped to the piston through `force_ratio` and imposed with a single
/// impulse on the output, which the hydraulic coupling shares with the
/// masters according to the active regime.
pub fn impact_coupling(
    load_velocity: f64,
    piston: &ContinuousState,
    force_ratio: f64,
    regime: Regime,
    params: &ActuatorParams,
    load: &LoadScenario,
) -> Result<ContinuousState> {
    let target = piston_velocity(load_velocity, force_ratio);
    let mut s = *piston;
    let dv_o = target - s.v_o;
    match regime {
        _ if params.compliance.enabled => s.v_o = target,
        Regime::Closed => {
            s.v_o = target;
            s.v2 = target;
        }
        Regime::Open => {
            // Impulse J on the output: Δu = H⁻¹ [J, 0]ᵀ.
            let h_inv = mass_matrix(params, load)?
                .try_inverse()
                .expect("mass matrix checked nonsingular");
            let j = dv_o / h_inv[(0, 0)];
            let dv1 = h_inv[(1, 0)] * j;
            s.v_o = target;
            s.v1 += dv1;
            s.v2 = s.v_o - s.v1;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    #[test]
    fn drop_speeds() {
        let v = contact_speed(0.25, 9.81);
        assert!((v - 2.2147).abs() < 1e-4);
        assert!((piston_velocity(v, 4.71) - 0.470).abs() < 1e-3);
        assert_eq!(piston_velocity(1.3, 1.0), 1.3);
    }

    #[test]
    fn open_impulse_keeps_constraint() {
        let params = Config::default().params;
        let load = LoadScenario::new("drop", 377.0, 785.0);
        let s = impact_coupling(
            -2.2147,
            &ContinuousState::default(),
            4.71,
            Regime::Open,
            &params,
            &load,
        )
        .unwrap();
        assert!((s.v_o + 0.4702).abs() < 1e-3);
        assert!(s.constraint_residual().abs() < 1e-15);
        // The heavy M2 barely moves; M1 takes almost all of the flow.
        assert!(s.v2.abs() < 1e-3 && s.v1 < -0.46);
    }
}

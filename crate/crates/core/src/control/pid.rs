#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

/// Output saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidLimits {
    pub min: f64,
    pub max: f64,
}

impl PidLimits {
    pub fn symmetric(limit: f64) -> Self {
        Self {
            min: -limit,
            max: limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
    /// Whether the last output hit a limit.
    pub saturated: bool,
}

/// One PID update. The integrator only accumulates when doing so does not
/// push further into saturation (conditional integration). The derivative
/// acts on the error and is zero on the first call.
pub fn pid_step(
    setpoint: f64,
    measurement: f64,
    state: PidState,
    gains: &PidGains,
    limits: &PidLimits,
    dt: f64,
) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let error = setpoint - measurement;
    let derivative = state.prev_error.map_or(0.0, |prev| (error - prev) / dt);
    let integral = state.integral + error * dt;
    let raw = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    let winding_up = (raw > limits.max && error > 0.0) || (raw < limits.min && error < 0.0);
    let integral = if winding_up { state.integral } else { integral };
    let raw = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    let out = raw.clamp(limits.min, limits.max);
    (
        out,
        PidState {
            integral,
            prev_error: Some(error),
            saturated: out != raw,
        },
    )
}

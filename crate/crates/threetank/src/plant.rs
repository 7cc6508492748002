//! Nonlinear three-tank dynamics, outflow laws, and a fixed-step RK4
//! integrator with level clamping.

use thiserror::Error;

/// Internal integrator step [s].
pub const INTERNAL_DT: f64 = 0.05;
/// Measurement sample period [s].
pub const SAMPLE_TS: f64 = 1.0;

/// Physical parameters of the three-tank rig.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Tank cross-section [m^2].
    pub tank_area: f64,
    /// Connecting-pipe cross-section [m^2].
    pub pipe_area: f64,
    /// Outflow coefficient of the T1-T3 pipe [m^(1/2)/s].
    pub mu13: f64,
    /// Outflow coefficient of the T3-T2 pipe [m^(1/2)/s].
    pub mu32: f64,
    /// Outflow coefficient of the T2-reservoir pipe [m^(1/2)/s].
    pub mu20: f64,
    /// Maximum water level [m].
    pub h_max: f64,
    /// Maximum pump flow [m^3/s].
    pub u_max: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            tank_area: 0.0154,
            pipe_area: 5e-5,
            mu13: 8.5273e-5,
            mu32: 8.5563e-5,
            mu20: 1.5901e-4,
            h_max: 0.62,
            u_max: 1e-4,
        }
    }
}

impl PlantParams {
    /// Pump saturation expressed per unit tank area [m/s].
    pub fn u_sat(&self) -> f64 {
        self.u_max / self.tank_area
    }

    /// Checks that every parameter is strictly positive.
    pub fn validate(&self) -> Result<(), PlantError> {
        let fields = [
            ("tank_area", self.tank_area),
            ("pipe_area", self.pipe_area),
            ("mu13", self.mu13),
            ("mu32", self.mu32),
            ("mu20", self.mu20),
            ("h_max", self.h_max),
            ("u_max", self.u_max),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::InvalidParameter { name, value: v });
            }
        }
        Ok(())
    }
}

/// Water levels of the three tanks at a time instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    /// Level of tank T1 [m].
    pub x1: f64,
    /// Level of tank T2 [m].
    pub x2: f64,
    /// Level of tank T3 [m].
    pub x3: f64,
    /// Time [s].
    pub t: f64,
}

impl PlantState {
    /// State at the given levels and time.
    pub fn new(x1: f64, x2: f64, x3: f64, t: f64) -> Self {
        Self { x1, x2, x3, t }
    }
}

/// Pump commands expressed per unit tank area [m/s].
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct InputVector {
    pub u1: f64,
    pub u2: f64,
}

impl InputVector {
    pub fn new(u1: f64, u2: f64) -> Self {
        Self { u1, u2 }
    }
}

/// Errors raised by the plant layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("plant parameter {name} = {value} must be strictly positive and finite")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("integration produced a non-finite value for {variable}")]
    IntegrationFailure { variable: &'static str },
    #[error("singular configuration: require x1 > x3 > 0 with induced x2 > 0, got x1 = {x1}, x3 = {x3}")]
    SingularConfiguration { x1: f64, x3: f64 },
}

/// Signed square root sgn(v)*sqrt(|v|); zero at v = 0.
pub fn signed_root(v: f64) -> f64 {
    v.signum() * v.abs().sqrt()
}

/// Inter-tank and outlet flow rates per unit tank area, in the reported sign
/// convention: q13 from T1 toward T3, q32 signed by (x2 - x3), q20 out of T2.
pub fn outflow_rates(state: &PlantState, params: &PlantParams) -> (f64, f64, f64) {
    let q13 = params.mu13 * signed_root(state.x1 - state.x3);
    let q32 = params.mu32 * (state.x2 - state.x3).signum() * (state.x3 - state.x2).abs().sqrt();
    let q20 = params.mu20 * signed_root(state.x2);
    (q13, q32, q20)
}

/// Level rates of change (x1_dot, x2_dot, x3_dot) [m/s]. Internally the
/// T3-to-T2 flow is signed by (x3 - x2) so that water runs downhill.
pub fn dynamics(state: &PlantState, u: &InputVector, params: &PlantParams) -> (f64, f64, f64) {
    let q13 = params.mu13 * signed_root(state.x1 - state.x3);
    let q32 = params.mu32 * signed_root(state.x3 - state.x2);
    let q20 = params.mu20 * signed_root(state.x2);
    (-q13 + u.u1, -q20 + q32 + u.u2, q13 - q32)
}

/// Second time derivative of x3 along the flow, given the level rates.
pub fn x3_acceleration(state: &PlantState, xdot: (f64, f64, f64), params: &PlantParams) -> f64 {
    let (x1d, x2d, x3d) = xdot;
    let d13 = state.x1 - state.x3;
    let d32 = state.x3 - state.x2;
    let q13_dot = if d13.abs() > 1e-12 {
        params.mu13 * (x1d - x3d) / (2.0 * d13.abs().sqrt())
    } else {
        0.0
    };
    let q32_dot = if d32.abs() > 1e-12 {
        params.mu32 * (x3d - x2d) / (2.0 * d32.abs().sqrt())
    } else {
        0.0
    };
    q13_dot - q32_dot
}

fn rk4(state: &PlantState, u: &InputVector, dt: f64, params: &PlantParams) -> PlantState {
    let f = |x1: f64, x2: f64, x3: f64| {
        dynamics(&PlantState::new(x1, x2, x3, state.t), u, params)
    };
    let (x1, x2, x3) = (state.x1, state.x2, state.x3);
    let k1 = f(x1, x2, x3);
    let k2 = f(
        x1 + 0.5 * dt * k1.0,
        x2 + 0.5 * dt * k1.1,
        x3 + 0.5 * dt * k1.2,
    );
    let k3 = f(
        x1 + 0.5 * dt * k2.0,
        x2 + 0.5 * dt * k2.1,
        x3 + 0.5 * dt * k2.2,
    );
    let k4 = f(x1 + dt * k3.0, x2 + dt * k3.1, x3 + dt * k3.2);
    PlantState::new(
        x1 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        x2 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        x3 + dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
        state.t + dt,
    )
}

/// One RK4 step with the resulting levels clamped to [0, h_max]; the flag
/// reports whether any level had to be clamped.
pub fn integrate_step_flagged(
    state: &PlantState,
    u: &InputVector,
    dt: f64,
    params: &PlantParams,
) -> Result<(PlantState, bool), PlantError> {
    assert!(dt > 0.0, "dt must be positive");
    let mut next = rk4(state, u, dt, params);
    for (name, v) in [("x1", next.x1), ("x2", next.x2), ("x3", next.x3)] {
        if !v.is_finite() {
            return Err(PlantError::IntegrationFailure { variable: name });
        }
    }
    let mut clamped = false;
    for level in [&mut next.x1, &mut next.x2, &mut next.x3] {
        if *level < 0.0 {
            *level = 0.0;
            clamped = true;
        } else if *level > params.h_max {
            *level = params.h_max;
            clamped = true;
        }
    }
    Ok((next, clamped))
}

/// One clamped RK4 step of length dt.
pub fn integrate_step(
    state: &PlantState,
    u: &InputVector,
    dt: f64,
    params: &PlantParams,
) -> Result<PlantState, PlantError> {
    integrate_step_flagged(state, u, dt, params).map(|(s, _)| s)
}

/// Advances one sample period with fixed internal substeps; returns the new
/// state and the number of substeps in which a level was clamped.
pub fn integrate_interval(
    state: &PlantState,
    u: &InputVector,
    duration: f64,
    substep: f64,
    params: &PlantParams,
) -> Result<(PlantState, usize), PlantError> {
    let n = (duration / substep).round() as usize;
    assert!(n >= 1, "duration must cover at least one substep");
    let mut s = *state;
    let mut clamp_events = 0;
    for _ in 0..n {
        let (next, clamped) = integrate_step_flagged(&s, u, substep, params)?;
        if clamped {
            clamp_events += 1;
        }
        s = next;
    }
    Ok((s, clamp_events))
}

/// Steady state for prescribed levels x1 and x3: returns the induced x2 and
/// the pump inputs that hold the point. Requires x1 > x3 > 0 with x2 > 0.
pub fn find_equilibrium(
    x1: f64,
    x3: f64,
    params: &PlantParams,
) -> Result<(f64, InputVector), PlantError> {
    if !(x1 > x3 && x3 > 0.0) {
        return Err(PlantError::SingularConfiguration { x1, x3 });
    }
    let ratio = params.mu13 / params.mu32;
    let x2 = x3 - ratio * ratio * (x1 - x3);
    if x2 <= 0.0 {
        return Err(PlantError::SingularConfiguration { x1, x3 });
    }
    let u1 = params.mu13 * (x1 - x3).sqrt();
    let u2 = params.mu20 * x2.sqrt() - params.mu13 * (x1 - x3).sqrt();
    Ok((x2, InputVector::new(u1, u2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PlantParams {
        PlantParams::default()
    }

    #[test]
    fn outflow_matches_reported_values_at_reference_point() {
        let s = PlantState::new(0.20, 0.10, 0.15, 0.0);
        let (q13, q32, q20) = outflow_rates(&s, &p());
        assert!((q13 - 1.9067e-5).abs() < 1e-9);
        assert!((q32 - (-1.9132e-5)).abs() < 1e-9);
        assert!((q20 - 5.0283e-5).abs() < 1e-9);
    }

    #[test]
    fn outflow_zero_at_empty_tanks_and_equal_levels() {
        let empty = PlantState::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(outflow_rates(&empty, &p()), (0.0, 0.0, 0.0));
        let equal = PlantState::new(0.3, 0.1, 0.3, 0.0);
        let (q13, _, _) = outflow_rates(&equal, &p());
        assert_eq!(q13, 0.0);
    }

    #[test]
    fn dynamics_near_zero_at_reference_equilibrium() {
        let s = PlantState::new(0.20, 0.10, 0.15, 0.0);
        let u = InputVector::new(1.9067e-5, 3.1151e-5);
        let (d1, d2, d3) = dynamics(&s, &u, &p());
        assert!(d1.abs() < 1e-8);
        assert!(d2.abs() < 1e-8);
        assert!((d3 - (-6.5e-8)).abs() < 5e-10);
    }

    #[test]
    fn dynamics_trivial_cases() {
        let rest = PlantState::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(dynamics(&rest, &InputVector::default(), &p()), (0.0, 0.0, 0.0));
        let fed = dynamics(&rest, &InputVector::new(2e-5, 3e-5), &p());
        assert_eq!(fed, (2e-5, 3e-5, 0.0));
    }

    #[test]
    fn equilibrium_persists_under_integration() {
        let params = p();
        let (x2, u) = find_equilibrium(0.20, 0.15, &params).unwrap();
        let s0 = PlantState::new(0.20, x2, 0.15, 0.0);
        let s1 = integrate_step(&s0, &u, INTERNAL_DT, &params).unwrap();
        assert!((s1.x1 - s0.x1).abs() < 1e-8);
        assert!((s1.x2 - s0.x2).abs() < 1e-8);
        assert!((s1.x3 - s0.x3).abs() < 1e-8);
    }

    #[test]
    fn integration_unchanged_at_rest() {
        let s0 = PlantState::new(0.0, 0.0, 0.0, 0.0);
        let s1 = integrate_step(&s0, &InputVector::default(), 0.7, &p()).unwrap();
        assert_eq!((s1.x1, s1.x2, s1.x3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_step_close_to_two_half_steps() {
        let params = p();
        let s0 = PlantState::new(0.3, 0.1, 0.2, 0.0);
        let u = InputVector::new(5e-5, 5e-5);
        let full = integrate_step(&s0, &u, INTERNAL_DT, &params).unwrap();
        let half = integrate_step(&s0, &u, INTERNAL_DT / 2.0, &params).unwrap();
        let half2 = integrate_step(&half, &u, INTERNAL_DT / 2.0, &params).unwrap();
        assert!((full.x1 - half2.x1).abs() < 1e-10);
        assert!((full.x2 - half2.x2).abs() < 1e-10);
        assert!((full.x3 - half2.x3).abs() < 1e-10);
    }

    #[test]
    fn non_finite_input_is_reported_by_variable() {
        let s0 = PlantState::new(0.3, 0.1, 0.2, 0.0);
        let u = InputVector::new(f64::INFINITY, 0.0);
        let err = integrate_step(&s0, &u, INTERNAL_DT, &p()).unwrap_err();
        assert_eq!(err, PlantError::IntegrationFailure { variable: "x1" });
    }

    #[test]
    fn levels_clamp_at_bounds() {
        let params = p();
        let near_full = PlantState::new(0.6199, 0.1, 0.2, 0.0);
        let (s, clamped) =
            integrate_step_flagged(&near_full, &InputVector::new(6e-3, 0.0), 1.0, &params).unwrap();
        assert!(clamped);
        assert_eq!(s.x1, params.h_max);
        let (s, clamped) = integrate_step_flagged(
            &PlantState::new(0.0, 5e-4, 0.0, 0.0),
            &InputVector::new(0.0, -1e-3),
            1.0,
            &params,
        )
        .unwrap();
        assert!(clamped);
        assert_eq!(s.x2, 0.0);
    }

    #[test]
    fn equilibrium_at_reference_point() {
        let params = p();
        let (x2, u) = find_equilibrium(0.20, 0.15, &params).unwrap();
        assert!((x2 - 0.10).abs() < 1e-3);
        assert!((x2 - 0.100340).abs() < 1e-5);
        assert!((u.u1 - 1.90677e-5).abs() < 1e-9);
        assert!((u.u2 - 3.13012e-5).abs() < 1e-9);
        let (d1, d2, d3) = dynamics(&PlantState::new(0.20, x2, 0.15, 0.0), &u, &params);
        assert!(d1.abs() < 1e-12 && d2.abs() < 1e-12 && d3.abs() < 1e-12);
    }

    #[test]
    fn equal_levels_are_singular() {
        assert!(matches!(
            find_equilibrium(0.15, 0.15, &p()),
            Err(PlantError::SingularConfiguration { .. })
        ));
        assert!(find_equilibrium(0.10, 0.15, &p()).is_err());
    }

    #[test]
    fn interval_integration_counts_clamped_substeps() {
        let params = p();
        let s0 = PlantState::new(0.619, 0.1, 0.2, 0.0);
        let (s, clamps) =
            integrate_interval(&s0, &InputVector::new(6e-3, 0.0), 1.0, INTERNAL_DT, &params)
                .unwrap();
        assert!(clamps > 0);
        assert_eq!(s.x1, params.h_max);
    }
}

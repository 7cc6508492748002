//! Reference trajectories, flatness feedforward, and the two discrete PI
//! feedback loops that close the level control.
//!
//! The reference for the flat output Z1 = (x1, x3) is a quintic polynomial
//! with zero first and second derivatives at both endpoints. The feedforward
//! evaluates the Z1 redundancy map along the reference; sign-preserving
//! square roots keep it defined even when the reference demands a reversed
//! inter-tank flow, so one aggressive trajectory segment cannot abort a run.
//! Feedback is per-level PI in incremental form with clamped corrections.

use thiserror::Error;

use crate::fault::MeasurementFrame;
use crate::flatness::DomainError;
use crate::plant::{find_equilibrium, signed_root, InputVector, PlantError, PlantParams};

/// Start and end points of a quintic flat-output reference.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrajectorySpec {
    /// Initial flat output (x1, x3) [m].
    pub z_initial: [f64; 2],
    /// Final flat output (x1, x3) [m].
    pub z_final: [f64; 2],
    /// Start of the transition [s].
    pub t_initial: f64,
    /// End of the transition [s].
    pub t_final: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            z_initial: [0.20, 0.15],
            z_final: [0.35, 0.25],
            t_initial: 0.0,
            t_final: 400.0,
        }
    }
}

impl TrajectorySpec {
    /// Checks the time ordering and that both endpoints admit an equilibrium
    /// with x1 > x3 > x2 > 0.
    pub fn validate(&self, params: &PlantParams) -> Result<(), ControlError> {
        if !(self.t_final > self.t_initial) {
            return Err(ControlError::InvalidTimes {
                t_initial: self.t_initial,
                t_final: self.t_final,
            });
        }
        for (side, z) in [("initial", self.z_initial), ("final", self.z_final)] {
            find_equilibrium(z[0], z[1], params)
                .map_err(|source| ControlError::InfeasibleEndpoint { side, source })?;
        }
        Ok(())
    }
}

/// Errors raised by trajectory validation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("trajectory times are not ordered: t_initial = {t_initial}, t_final = {t_final}")]
    InvalidTimes { t_initial: f64, t_final: f64 },
    #[error("{side} trajectory endpoint admits no equilibrium: {source}")]
    InfeasibleEndpoint {
        side: &'static str,
        source: PlantError,
    },
}

/// Evaluates the quintic reference at time t: component values, first and
/// second derivatives. Outside [t_initial, t_final] the nearer endpoint is
/// held with zero derivatives.
pub fn quintic_eval(spec: &TrajectorySpec, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let span = spec.t_final - spec.t_initial;
    let s = ((t - spec.t_initial) / span).clamp(0.0, 1.0);
    let sigma = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let sigma_d = (30.0 * s * s - 60.0 * s * s * s + 30.0 * s * s * s * s) / span;
    let sigma_dd = (60.0 * s - 180.0 * s * s + 120.0 * s * s * s) / (span * span);
    let mut z = [0.0; 2];
    let mut z_dot = [0.0; 2];
    let mut z_ddot = [0.0; 2];
    for i in 0..2 {
        let delta = spec.z_final[i] - spec.z_initial[i];
        z[i] = spec.z_initial[i] + delta * sigma;
        z_dot[i] = delta * sigma_d;
        z_ddot[i] = delta * sigma_dd;
    }
    (z, z_dot, z_ddot)
}

/// One discrete PI loop in incremental form: u_k = u_{k-1} + b0 e_k + b1 e_{k-1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiController {
    pub b0: f64,
    pub b1: f64,
    /// Previous output u_{k-1}.
    pub output: f64,
    /// Previous error e_{k-1}.
    pub prev_error: f64,
}

impl PiController {
    pub fn new(b0: f64, b1: f64) -> Self {
        Self {
            b0,
            b1,
            output: 0.0,
            prev_error: 0.0,
        }
    }

    /// Level-1 loop coefficients.
    pub fn c11() -> Self {
        Self::new(-0.001043, 0.0009565)
    }

    /// Level-2 loop coefficients.
    pub fn c22() -> Self {
        Self::new(-0.00104, 0.00096)
    }
}

/// Advances the PI loop by one sample and returns the new output.
pub fn pi_step(ctrl: &mut PiController, error: f64) -> f64 {
    let out = ctrl.output + ctrl.b0 * error + ctrl.b1 * ctrl.prev_error;
    ctrl.output = out;
    ctrl.prev_error = error;
    out
}

/// PI step with the stored output clamped into [lo, hi]; storing the clamped
/// value is what keeps the integrator from winding up while saturated.
/// Returns the new output and whether the clamp engaged.
pub fn pi_step_clamped(ctrl: &mut PiController, error: f64, lo: f64, hi: f64) -> (f64, bool) {
    let raw = ctrl.output + ctrl.b0 * error + ctrl.b1 * ctrl.prev_error;
    let out = raw.clamp(lo, hi);
    ctrl.output = out;
    ctrl.prev_error = error;
    (out, out != raw)
}

/// Feedforward along the flat-output reference: pump inputs and the full
/// reference level vector (x1, x2, x3) implied by (z, z_dot, z_ddot).
///
/// Evaluates the Z1 redundancy formulas with sign-preserving square roots so
/// that references whose rates exceed the plant's reach still yield finite
/// commands; only z1 <= z2 is rejected.
pub fn feedforward(
    z: [f64; 2],
    z_dot: [f64; 2],
    z_ddot: [f64; 2],
    params: &PlantParams,
) -> Result<(f64, f64, [f64; 3]), DomainError> {
    let [z1, z2] = z;
    let [z1_dot, z2_dot] = z_dot;
    let z2_ddot = z_ddot[1];
    let head = z1 - z2;
    if head <= 0.0 {
        return Err(DomainError {
            argument: "z1 - z2",
            value: head,
        });
    }
    let root = head.sqrt();
    let a = -z2_dot + params.mu13 * root;
    let y2z = z2 - a.signum() * (a / params.mu32).powi(2);
    let u1 = z1_dot + params.mu13 * root;
    let a_dot = if root > 1e-9 {
        -z2_ddot + params.mu13 * (z1_dot - z2_dot) / (2.0 * root)
    } else {
        -z2_ddot
    };
    let y2z_dot = z2_dot - 2.0 * a.abs() * a_dot / (params.mu32 * params.mu32);
    let u2 = y2z_dot + params.mu20 * signed_root(y2z) - params.mu32 * signed_root(z2 - y2z);
    Ok((u1, u2, [z1, y2z, z2]))
}

/// The two PI loops of the closed-loop scheme: pump 1 regulates y1, pump 2
/// regulates y2 around its flatness-derived reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopControllers {
    pub c11: PiController,
    pub c22: PiController,
}

impl Default for LoopControllers {
    fn default() -> Self {
        Self {
            c11: PiController::c11(),
            c22: PiController::c22(),
        }
    }
}

/// Outcome of one closed-loop command computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandOutcome {
    /// Commanded pump inputs, saturated to [0, u_max / tank_area].
    pub u: InputVector,
    /// Feedforward part of the command.
    pub u_ref: InputVector,
    /// Reference levels (x1, x2, x3) at this instant.
    pub reference: [f64; 3],
    /// Whether either loop hit the saturation clamp this sample.
    pub saturated: bool,
}

/// Computes the pump command for one sample: feedforward along the reference
/// plus clamped PI corrections on the measured y1 and y2. Only the level
/// fields of the frame are read, so the frame's actuator entries may still
/// hold placeholders when this runs.
pub fn closed_loop_command(
    t: f64,
    frame: &MeasurementFrame,
    traj: &TrajectorySpec,
    controllers: &mut LoopControllers,
    params: &PlantParams,
) -> Result<CommandOutcome, DomainError> {
    let (z, z_dot, z_ddot) = quintic_eval(traj, t);
    let (u1_ref, u2_ref, reference) = feedforward(z, z_dot, z_ddot, params)?;
    let u_sat = params.u_sat();
    let e1 = frame.y1s - reference[0];
    let e2 = frame.y2s - reference[1];
    let (c1, sat1) = pi_step_clamped(&mut controllers.c11, e1, -u1_ref, u_sat - u1_ref);
    let (c2, sat2) = pi_step_clamped(&mut controllers.c22, e2, -u2_ref, u_sat - u2_ref);
    let u1 = (u1_ref + c1).clamp(0.0, u_sat);
    let u2 = (u2_ref + c2).clamp(0.0, u_sat);
    Ok(CommandOutcome {
        u: InputVector::new(u1, u2),
        u_ref: InputVector::new(u1_ref, u2_ref),
        reference,
        saturated: sat1 || sat2,
    })
}

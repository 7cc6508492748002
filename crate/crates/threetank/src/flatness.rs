//! Analytic redundancy from flat outputs: given one flat output of the
//! three-tank system and its first two time derivatives, every level and
//! every pump input can be reconstructed in closed form.
//!
//! Two flat outputs are supported: Z1 = (x1, x3) and Z2 = (x2, x3). Each map
//! returns the full reconstructed frame or a domain error naming the
//! square-root argument that left its admissible range; no partial frames
//! are produced.

use thiserror::Error;

use crate::plant::PlantParams;

/// Identifier of the measured flat output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum FlatOutputId {
    /// Z1 = (x1, x3).
    Z1,
    /// Z2 = (x2, x3).
    Z2,
}

impl std::fmt::Display for FlatOutputId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FlatOutputId::Z1 => "Z1",
            FlatOutputId::Z2 => "Z2",
        })
    }
}

/// A flat output with derivatives up to second order at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatOutputSample {
    pub id: FlatOutputId,
    /// Flat-output components [m].
    pub z: [f64; 2],
    /// First derivatives [m/s].
    pub z_dot: [f64; 2],
    /// Second derivatives [m/s^2].
    pub z_ddot: [f64; 2],
}

/// Levels and inputs reconstructed from a flat output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedundantFrame {
    /// Reconstructed level of tank T1 [m].
    pub y1z: f64,
    /// Reconstructed level of tank T2 [m].
    pub y2z: f64,
    /// Reconstructed level of tank T3 [m].
    pub y3z: f64,
    /// Reconstructed pump input 1 [m/s].
    pub u1z: f64,
    /// Reconstructed pump input 2 [m/s].
    pub u2z: f64,
}

/// A square-root argument left its admissible range, typically because a
/// faulted or noisy measurement violated the level ordering x1 > x3 > x2.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("flatness domain error: {argument} = {value} is outside its admissible range")]
pub struct DomainError {
    pub argument: &'static str,
    pub value: f64,
}

/// Reconstructs all levels and inputs from Z1 = (x1, x3).
///
/// Requires z1 > z2 and a reconstructed x2 inside [0, z2]; violations are
/// reported by the name of the offending square-root argument.
pub fn z1_redundancy(
    s: &FlatOutputSample,
    params: &PlantParams,
) -> Result<RedundantFrame, DomainError> {
    assert_eq!(s.id, FlatOutputId::Z1, "sample must carry flat output Z1");
    let [z1, z2] = s.z;
    let [z1_dot, z2_dot] = s.z_dot;
    let z2_ddot = s.z_ddot[1];

    let head = z1 - z2;
    if head <= 0.0 {
        return Err(DomainError {
            argument: "z1 - z2",
            value: head,
        });
    }
    let root_head = head.sqrt();

    let a = -z2_dot + params.mu13 * root_head;
    let y2z = z2 - a.signum() * (a / params.mu32).powi(2);
    if y2z < 0.0 {
        return Err(DomainError {
            argument: "y2z",
            value: y2z,
        });
    }
    if y2z > z2 {
        return Err(DomainError {
            argument: "z2 - y2z",
            value: z2 - y2z,
        });
    }

    let u1z = z1_dot + params.mu13 * root_head;
    let a_dot = -z2_ddot + params.mu13 * (z1_dot - z2_dot) / (2.0 * root_head);
    let y2z_dot = z2_dot - 2.0 * a.abs() * a_dot / (params.mu32 * params.mu32);
    let u2z = y2z_dot + params.mu20 * y2z.sqrt() - params.mu32 * (z2 - y2z).sqrt();

    Ok(RedundantFrame {
        y1z: z1,
        y2z,
        y3z: z2,
        u1z,
        u2z,
    })
}

/// Reconstructs all levels and inputs from Z2 = (x2, x3).
///
/// Requires z22 > z21 > 0 and a forward T1-to-T3 flow; violations are
/// reported by the name of the offending square-root argument.
pub fn z2_redundancy(
    s: &FlatOutputSample,
    params: &PlantParams,
) -> Result<RedundantFrame, DomainError> {
    assert_eq!(s.id, FlatOutputId::Z2, "sample must carry flat output Z2");
    let [z21, z22] = s.z;
    let [z21_dot, z22_dot] = s.z_dot;
    let z22_ddot = s.z_ddot[1];

    if z21 <= 0.0 {
        return Err(DomainError {
            argument: "z21",
            value: z21,
        });
    }
    let drop = z22 - z21;
    if drop <= 0.0 {
        return Err(DomainError {
            argument: "z22 - z21",
            value: drop,
        });
    }
    let root_drop = drop.sqrt();

    let b = z22_dot + params.mu32 * root_drop;
    if b < 0.0 {
        return Err(DomainError {
            argument: "y1z - z22",
            value: -(b / params.mu13).powi(2),
        });
    }
    let y1z = z22 + (b / params.mu13).powi(2);

    let u2z = z21_dot + params.mu20 * z21.sqrt() - params.mu32 * root_drop;
    let b_dot = z22_ddot + params.mu32 * (z22_dot - z21_dot) / (2.0 * root_drop);
    let y1z_dot = z22_dot + 2.0 * b * b_dot / (params.mu13 * params.mu13);
    let u1z = y1z_dot + params.mu13 * (y1z - z22).sqrt();

    Ok(RedundantFrame {
        y1z,
        y2z: z21,
        y3z: z22,
        u1z,
        u2z,
    })
}

/// Dispatches to the redundancy map matching the sample's flat output.
pub fn redundancy(
    s: &FlatOutputSample,
    params: &PlantParams,
) -> Result<RedundantFrame, DomainError> {
    match s.id {
        FlatOutputId::Z1 => z1_redundancy(s, params),
        FlatOutputId::Z2 => z2_redundancy(s, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{find_equilibrium, PlantParams};

    fn p() -> PlantParams {
        PlantParams::default()
    }

    fn sample(id: FlatOutputId, z: [f64; 2]) -> FlatOutputSample {
        FlatOutputSample {
            id,
            z,
            z_dot: [0.0; 2],
            z_ddot: [0.0; 2],
        }
    }

    #[test]
    fn z1_map_reproduces_the_equilibrium() {
        let params = p();
        let frame = z1_redundancy(&sample(FlatOutputId::Z1, [0.20, 0.15]), &params).unwrap();
        assert!((frame.y2z - 0.10).abs() < 1e-3);
        assert!((frame.y2z - 0.100340).abs() < 1e-5);
        assert!((frame.u1z - 1.90676e-5).abs() < 1e-9);
        assert!((frame.u2z - 3.13012e-5).abs() < 1e-9);
        let (x2, u) = find_equilibrium(0.20, 0.15, &params).unwrap();
        assert!((frame.y2z - x2).abs() < 1e-12);
        assert!((frame.u1z - u.u1).abs() < 1e-15);
        assert!((frame.u2z - u.u2).abs() < 1e-15);
    }

    #[test]
    fn z2_map_reproduces_the_equilibrium() {
        let params = p();
        let frame = z2_redundancy(&sample(FlatOutputId::Z2, [0.10, 0.15]), &params).unwrap();
        assert!((frame.y1z - 0.2003407).abs() < 1e-7);
        assert!((frame.u2z - 3.1150909e-5).abs() < 1e-10);
        assert!((frame.u1z - 1.913243e-5).abs() < 1e-10);
    }

    #[test]
    fn measured_components_pass_through_exactly() {
        let params = p();
        let z1 = z1_redundancy(&sample(FlatOutputId::Z1, [0.31, 0.22]), &params).unwrap();
        assert_eq!(z1.y1z, 0.31);
        assert_eq!(z1.y3z, 0.22);
        let z2 = z2_redundancy(&sample(FlatOutputId::Z2, [0.13, 0.19]), &params).unwrap();
        assert_eq!(z2.y2z, 0.13);
        assert_eq!(z2.y3z, 0.19);
    }

    #[test]
    fn maps_agree_at_a_shared_state() {
        let params = p();
        let (x2, _) = find_equilibrium(0.20, 0.15, &params).unwrap();
        let f1 = z1_redundancy(&sample(FlatOutputId::Z1, [0.20, 0.15]), &params).unwrap();
        let f2 = z2_redundancy(&sample(FlatOutputId::Z2, [x2, 0.15]), &params).unwrap();
        assert!((f1.y1z - f2.y1z).abs() < 1e-9);
        assert!((f1.y2z - f2.y2z).abs() < 1e-9);
        assert!((f1.y3z - f2.y3z).abs() < 1e-9);
        assert!((f1.u1z - f2.u1z).abs() < 1e-9);
        assert!((f1.u2z - f2.u2z).abs() < 1e-9);
    }

    #[test]
    fn z1_domain_errors_name_the_violated_argument() {
        let params = p();
        let err = z1_redundancy(&sample(FlatOutputId::Z1, [0.15, 0.15]), &params).unwrap_err();
        assert_eq!(err.argument, "z1 - z2");
        let mut s = sample(FlatOutputId::Z1, [0.20, 0.15]);
        s.z_dot = [0.0, -5e-2];
        let err = z1_redundancy(&s, &params).unwrap_err();
        assert_eq!(err.argument, "y2z");
        s.z_dot = [0.0, 5e-2];
        let err = z1_redundancy(&s, &params).unwrap_err();
        assert_eq!(err.argument, "z2 - y2z");
    }

    #[test]
    fn z2_domain_errors_name_the_violated_argument() {
        let params = p();
        let err = z2_redundancy(&sample(FlatOutputId::Z2, [0.0, 0.15]), &params).unwrap_err();
        assert_eq!(err.argument, "z21");
        let err = z2_redundancy(&sample(FlatOutputId::Z2, [0.15, 0.10]), &params).unwrap_err();
        assert_eq!(err.argument, "z22 - z21");
        let mut s = sample(FlatOutputId::Z2, [0.10, 0.15]);
        s.z_dot = [0.0, -5e-2];
        let err = z2_redundancy(&s, &params).unwrap_err();
        assert_eq!(err.argument, "y1z - z22");
    }

    #[test]
    fn maps_are_continuous_toward_the_boundary() {
        let params = p();
        let eps = 1e-12;
        let near = z1_redundancy(&sample(FlatOutputId::Z1, [0.15 + eps, 0.15]), &params).unwrap();
        assert!(near.u1z.abs() < 1e-9);
        let near = z2_redundancy(&sample(FlatOutputId::Z2, [0.10, 0.10 + eps]), &params).unwrap();
        let drain_only = params.mu20 * 0.10_f64.sqrt();
        assert!((near.u2z - drain_only).abs() < 1e-9);
    }

    #[test]
    fn analytic_rate_matches_finite_difference_of_the_reconstruction() {
        let params = p();
        let h = 0.01;
        let z1_path = |t: f64| {
            let z1 = 0.22 + 0.002 * (0.001 * t).sin();
            let z2 = 0.15 + 0.001 * (0.0008 * t).cos();
            let z1_dot = 0.002 * 0.001 * (0.001 * t).cos();
            let z2_dot = -0.001 * 0.0008 * (0.0008 * t).sin();
            let z2_ddot = -0.001 * 0.0008 * 0.0008 * (0.0008 * t).cos();
            FlatOutputSample {
                id: FlatOutputId::Z1,
                z: [z1, z2],
                z_dot: [z1_dot, z2_dot],
                z_ddot: [0.0, z2_ddot],
            }
        };
        let t = 130.0;
        let frame = z1_redundancy(&z1_path(t), &params).unwrap();
        let analytic_rate =
            frame.u2z - params.mu20 * frame.y2z.sqrt() + params.mu32 * (frame.y3z - frame.y2z).sqrt();
        let ahead = z1_redundancy(&z1_path(t + h), &params).unwrap().y2z;
        let behind = z1_redundancy(&z1_path(t - h), &params).unwrap().y2z;
        let fd_rate = (ahead - behind) / (2.0 * h);
        assert!((analytic_rate - fd_rate).abs() / fd_rate.abs() < 1e-5);

        let z2_path = |t: f64| {
            let z21 = 0.10 + 0.001 * (0.001 * t).sin();
            let z22 = 0.16 + 0.001 * (0.0007 * t).cos();
            let z21_dot = 0.001 * 0.001 * (0.001 * t).cos();
            let z22_dot = -0.001 * 0.0007 * (0.0007 * t).sin();
            let z22_ddot = -0.001 * 0.0007 * 0.0007 * (0.0007 * t).cos();
            FlatOutputSample {
                id: FlatOutputId::Z2,
                z: [z21, z22],
                z_dot: [z21_dot, z22_dot],
                z_ddot: [0.0, z22_ddot],
            }
        };
        let frame = z2_redundancy(&z2_path(t), &params).unwrap();
        let analytic_rate = frame.u1z - params.mu13 * (frame.y1z - frame.y3z).sqrt();
        let ahead = z2_redundancy(&z2_path(t + h), &params).unwrap().y1z;
        let behind = z2_redundancy(&z2_path(t - h), &params).unwrap().y1z;
        let fd_rate = (ahead - behind) / (2.0 * h);
        assert!((analytic_rate - fd_rate).abs() / fd_rate.abs() < 1e-5);
    }
}

//! Sensor and actuator fault injection plus the measurement path that the
//! supervision layer observes.
//!
//! A fault scales its channel by a gain in [0, 1] and adds a bias from its
//! start time onward. Sensor faults corrupt the measured level while the
//! true state evolves unfaulted; actuator faults corrupt the physically
//! delivered flow while the measurement frame keeps reporting the commanded
//! value, which is all the supervision layer knows.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::plant::{InputVector, PlantState};

/// Faultable channels: three level sensors and two pump actuators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ChannelId {
    S1,
    S2,
    S3,
    A1,
    A2,
}

impl ChannelId {
    /// All channels in canonical order.
    pub const ALL: [ChannelId; 5] = [
        ChannelId::S1,
        ChannelId::S2,
        ChannelId::S3,
        ChannelId::A1,
        ChannelId::A2,
    ];

    pub fn is_sensor(self) -> bool {
        matches!(self, ChannelId::S1 | ChannelId::S2 | ChannelId::S3)
    }

    pub fn label(self) -> &'static str {
        match self {
            ChannelId::S1 => "S1",
            ChannelId::S2 => "S2",
            ChannelId::S3 => "S3",
            ChannelId::A1 => "A1",
            ChannelId::A2 => "A2",
        }
    }
}

impl std::fmt::Display for ChannelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A single multiplicative-plus-additive fault on one channel.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FaultSpec {
    /// Channel the fault acts on.
    pub target: ChannelId,
    /// Multiplicative gain in [0, 1]; 1 leaves the channel scaled intact.
    pub gain: f64,
    /// Additive offset in the channel's units.
    #[serde(default)]
    pub bias: f64,
    /// Time [s] at which the fault becomes active.
    pub start_time: f64,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<(), FaultError> {
        if !(0.0..=1.0).contains(&self.gain) || !self.gain.is_finite() {
            return Err(FaultError::InvalidGain { gain: self.gain });
        }
        if !(self.start_time >= 0.0) || !self.start_time.is_finite() {
            return Err(FaultError::InvalidStartTime {
                start_time: self.start_time,
            });
        }
        if !self.bias.is_finite() {
            return Err(FaultError::InvalidBias { bias: self.bias });
        }
        Ok(())
    }
}

/// Errors raised by fault specification checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("fault gain {gain} must lie in [0, 1]")]
    InvalidGain { gain: f64 },
    #[error("fault start_time {start_time} must be non-negative and finite")]
    InvalidStartTime { start_time: f64 },
    #[error("fault bias {bias} must be finite")]
    InvalidBias { bias: f64 },
}

/// Per-sensor standard deviations of the additive measurement noise [m].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub sigma_y1: f64,
    pub sigma_y2: f64,
    pub sigma_y3: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_y1: 5e-4,
            sigma_y2: 5e-4,
            sigma_y3: 5e-4,
        }
    }
}

impl NoiseConfig {
    /// Noise-free measurements.
    pub fn zero() -> Self {
        Self {
            sigma_y1: 0.0,
            sigma_y2: 0.0,
            sigma_y3: 0.0,
        }
    }
}

/// One sampling instant as seen by the supervision layer: measured levels
/// and the commanded actuator values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementFrame {
    /// Sample time [s].
    pub t: f64,
    /// Measured level of tank T1 [m].
    pub y1s: f64,
    /// Measured level of tank T2 [m].
    pub y2s: f64,
    /// Measured level of tank T3 [m].
    pub y3s: f64,
    /// Known (commanded) pump value 1 [m/s].
    pub u1m: f64,
    /// Known (commanded) pump value 2 [m/s].
    pub u2m: f64,
}

/// Applies the fault to one channel value: identity before start_time or on
/// any other channel, gain * value + bias afterwards.
pub fn apply_fault(true_value: f64, channel: ChannelId, fault: Option<&FaultSpec>, t: f64) -> f64 {
    match fault {
        Some(spec) if spec.target == channel && t >= spec.start_time => {
            spec.gain * true_value + spec.bias
        }
        _ => true_value,
    }
}

/// Flow the plant actually receives for a given command; differs from the
/// command only while an actuator fault is active.
pub fn delivered_input(u_commanded: &InputVector, fault: Option<&FaultSpec>, t: f64) -> InputVector {
    InputVector::new(
        apply_fault(u_commanded.u1, ChannelId::A1, fault, t),
        apply_fault(u_commanded.u2, ChannelId::A2, fault, t),
    )
}

/// Builds the measurement frame for one sample: faulted levels plus Gaussian
/// sensor noise, and commanded actuator values. A zero sigma draws nothing
/// from the generator, so noise-free channels stay bit-deterministic.
pub fn sense<R: Rng>(
    state: &PlantState,
    u_commanded: &InputVector,
    fault: Option<&FaultSpec>,
    noise: &NoiseConfig,
    rng: &mut R,
) -> MeasurementFrame {
    let mut draw = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("sigma is positive and finite").sample(rng)
        } else {
            0.0
        }
    };
    let y1s = apply_fault(state.x1, ChannelId::S1, fault, state.t) + draw(noise.sigma_y1);
    let y2s = apply_fault(state.x2, ChannelId::S2, fault, state.t) + draw(noise.sigma_y2);
    let y3s = apply_fault(state.x3, ChannelId::S3, fault, state.t) + draw(noise.sigma_y3);
    MeasurementFrame {
        t: state.t,
        y1s,
        y2s,
        y3s,
        u1m: u_commanded.u1,
        u2m: u_commanded.u2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sensor_fault(target: ChannelId, gain: f64, bias: f64, start_time: f64) -> FaultSpec {
        FaultSpec {
            target,
            gain,
            bias,
            start_time,
        }
    }

    #[test]
    fn gain_loss_scales_after_start_time() {
        let spec = sensor_fault(ChannelId::S1, 0.8, 0.0, 200.0);
        assert_eq!(apply_fault(0.5, ChannelId::S1, Some(&spec), 250.0), 0.4);
        assert_eq!(apply_fault(0.5, ChannelId::S1, Some(&spec), 199.0), 0.5);
        assert_eq!(apply_fault(0.5, ChannelId::S2, Some(&spec), 250.0), 0.5);
        assert_eq!(apply_fault(0.5, ChannelId::S1, None, 250.0), 0.5);
    }

    #[test]
    fn unit_gain_is_identity_and_bias_is_additive() {
        let id = sensor_fault(ChannelId::S3, 1.0, 0.0, 0.0);
        assert_eq!(apply_fault(0.31, ChannelId::S3, Some(&id), 5.0), 0.31);
        let bias = sensor_fault(ChannelId::S2, 1.0, 0.02, 10.0);
        assert!((apply_fault(0.30, ChannelId::S2, Some(&bias), 10.0) - 0.32).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_out_of_range_specs() {
        assert!(sensor_fault(ChannelId::S1, 1.2, 0.0, 0.0).validate().is_err());
        assert!(sensor_fault(ChannelId::S1, -0.1, 0.0, 0.0).validate().is_err());
        assert!(sensor_fault(ChannelId::S1, 0.5, 0.0, -1.0).validate().is_err());
        assert!(sensor_fault(ChannelId::S1, 0.5, f64::NAN, 0.0).validate().is_err());
        assert!(sensor_fault(ChannelId::S1, 0.8, 0.0, 200.0).validate().is_ok());
    }

    #[test]
    fn noise_free_frame_equals_truth() {
        let state = PlantState::new(0.20, 0.10, 0.15, 12.0);
        let u = InputVector::new(1.9e-5, 3.1e-5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = sense(&state, &u, None, &NoiseConfig::zero(), &mut rng);
        assert_eq!(frame.t, 12.0);
        assert_eq!((frame.y1s, frame.y2s, frame.y3s), (0.20, 0.10, 0.15));
        assert_eq!((frame.u1m, frame.u2m), (1.9e-5, 3.1e-5));
    }

    #[test]
    fn zero_sigma_draws_nothing_from_the_generator() {
        let state = PlantState::new(0.2, 0.1, 0.15, 0.0);
        let u = InputVector::default();
        let mut used = ChaCha8Rng::seed_from_u64(42);
        sense(&state, &u, None, &NoiseConfig::zero(), &mut used);
        let mut fresh = ChaCha8Rng::seed_from_u64(42);
        assert_eq!(used.gen::<u64>(), fresh.gen::<u64>());
    }

    #[test]
    fn faulted_run_matches_unfaulted_before_start_time() {
        let u = InputVector::new(2e-5, 3e-5);
        let spec = sensor_fault(ChannelId::S2, 0.8, 0.0, 100.0);
        let mut rng_a = ChaCha8Rng::seed_from_u64(9);
        let mut rng_b = ChaCha8Rng::seed_from_u64(9);
        for k in 0..100 {
            let state = PlantState::new(0.2, 0.1, 0.15, k as f64);
            let fa = sense(&state, &u, Some(&spec), &NoiseConfig::default(), &mut rng_a);
            let fb = sense(&state, &u, None, &NoiseConfig::default(), &mut rng_b);
            assert_eq!(fa, fb);
        }
        let state = PlantState::new(0.2, 0.1, 0.15, 100.0);
        let fa = sense(&state, &u, Some(&spec), &NoiseConfig::zero(), &mut rng_a);
        assert!((fa.y2s - 0.08).abs() < 1e-15);
    }

    #[test]
    fn actuator_fault_corrupts_delivery_not_the_report() {
        let u = InputVector::new(5e-5, 4e-5);
        let spec = FaultSpec {
            target: ChannelId::A1,
            gain: 0.8,
            bias: 0.0,
            start_time: 200.0,
        };
        let delivered = delivered_input(&u, Some(&spec), 300.0);
        assert!((delivered.u1 - 4e-5).abs() < 1e-20);
        assert_eq!(delivered.u2, 4e-5);
        let state = PlantState::new(0.2, 0.1, 0.15, 300.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frame = sense(&state, &u, Some(&spec), &NoiseConfig::zero(), &mut rng);
        assert_eq!(frame.u1m, 5e-5);
        let before = delivered_input(&u, Some(&spec), 100.0);
        assert_eq!(before, u);
    }

    #[test]
    fn sense_is_deterministic_per_seed() {
        let state = PlantState::new(0.2, 0.1, 0.15, 3.0);
        let u = InputVector::default();
        let mut rng_a = ChaCha8Rng::seed_from_u64(11);
        let mut rng_b = ChaCha8Rng::seed_from_u64(11);
        let fa = sense(&state, &u, None, &NoiseConfig::default(), &mut rng_a);
        let fb = sense(&state, &u, None, &NoiseConfig::default(), &mut rng_b);
        assert_eq!(fa, fb);
        assert_ne!(fa.y1s, 0.2);
    }
}

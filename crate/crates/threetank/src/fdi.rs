//! Residue generation, threshold calibration, sensitivity and signature
//! analysis, and runtime fault isolation.
//!
//! Each flat output yields three non-trivial residues, measured minus
//! reconstructed: for Z1 the level y2 and both pump inputs, for Z2 the level
//! y1 and both pump inputs. Six residue channels run side by side, each with
//! its own differentiator window tuned to its noise gain. A signature matrix
//! obtained by thresholding residue sensitivities tells which alarm patterns
//! identify which faulty channel.

use thiserror::Error;

use crate::differentiator::{precompute_weights, DifferentiatorConfig, DifferentiatorError};
use crate::fault::{ChannelId, MeasurementFrame};
use crate::flatness::{z1_redundancy, z2_redundancy, DomainError, FlatOutputId, FlatOutputSample};
use crate::plant::PlantParams;

/// Default debounce length: consecutive over-threshold samples required
/// before an alarm is raised.
pub const DEBOUNCE_DEFAULT: usize = 5;

/// Default sensitivity threshold for signature-matrix construction.
pub const SENSITIVITY_THRESHOLD_DEFAULT: f64 = 0.5;

/// Fault hypotheses labelling signature-matrix columns, in canonical order.
pub const FAULT_COLUMNS: [ChannelId; 5] = ChannelId::ALL;

/// Stacked residue channel labels in engine order.
pub const CHANNEL_LABELS: [&str; 6] = [
    "R_S2_Z1", "R_A1_Z1", "R_A2_Z1", "R_S1_Z2", "R_A1_Z2", "R_A2_Z2",
];

/// Columns of the sensitivity tables: measured levels, their first
/// derivatives, the second derivative of y3, and the pump inputs.
pub const SENSITIVITY_COLUMNS: [&str; 9] = [
    "y1s", "y2s", "y3s", "dy1s", "dy2s", "dy3s", "ddy3s", "u1", "u2",
];

/// Residue row labels for one flat output.
pub fn residue_labels(id: FlatOutputId) -> [&'static str; 3] {
    match id {
        FlatOutputId::Z1 => ["R_S2", "R_A1", "R_A2"],
        FlatOutputId::Z2 => ["R_S1", "R_A1", "R_A2"],
    }
}

/// Errors raised by the supervision layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdiError {
    #[error("threshold calibration needs at least one nominal run")]
    EmptyCalibration,
    #[error("calibration runs disagree on channel count: {got} vs {want}")]
    ChannelCountMismatch { got: usize, want: usize },
    #[error("signature matrices have mismatched columns and cannot be stacked")]
    ColumnMismatch,
    #[error("cannot stack an empty list of signature matrices")]
    EmptyAugment,
    #[error("alarm pattern has {got} entries but the matrix has {want} rows")]
    PatternLength { got: usize, want: usize },
    #[error("equilibrium is singular for sensitivity analysis: {0}")]
    SingularEquilibrium(DomainError),
    #[error(transparent)]
    Differentiator(#[from] DifferentiatorError),
}

/// The three residues of one flat output at one evaluation instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidueVector {
    pub id: FlatOutputId,
    /// Evaluation time [s].
    pub t: f64,
    /// Ordered channels: Z1 gives (R_S2, R_A1, R_A2), Z2 gives (R_S1, R_A1, R_A2).
    pub values: [f64; 3],
    /// True when a redundancy domain error froze the values at the previous
    /// valid sample.
    pub held: bool,
}

/// Residues from one measurement frame plus derivative estimates of the flat
/// output. A redundancy domain error holds the previous residue values and
/// flags the sample instead of aborting the run.
pub fn compute_residues(
    frame: &MeasurementFrame,
    z_dot: [f64; 2],
    z_ddot: [f64; 2],
    id: FlatOutputId,
    previous: Option<&ResidueVector>,
    params: &PlantParams,
) -> ResidueVector {
    let z = match id {
        FlatOutputId::Z1 => [frame.y1s, frame.y3s],
        FlatOutputId::Z2 => [frame.y2s, frame.y3s],
    };
    let sample = FlatOutputSample {
        id,
        z,
        z_dot,
        z_ddot,
    };
    let reconstructed = match id {
        FlatOutputId::Z1 => z1_redundancy(&sample, params),
        FlatOutputId::Z2 => z2_redundancy(&sample, params),
    };
    let held_values = previous.map(|p| p.values).unwrap_or([0.0; 3]);
    match reconstructed {
        Ok(rf) => {
            let values = match id {
                FlatOutputId::Z1 => [frame.y2s - rf.y2z, frame.u1m - rf.u1z, frame.u2m - rf.u2z],
                FlatOutputId::Z2 => [frame.y1s - rf.y1z, frame.u1m - rf.u1z, frame.u2m - rf.u2z],
            };
            if values.iter().all(|v| v.is_finite()) {
                ResidueVector {
                    id,
                    t: frame.t,
                    values,
                    held: false,
                }
            } else {
                ResidueVector {
                    id,
                    t: frame.t,
                    values: held_values,
                    held: true,
                }
            }
        }
        Err(_) => ResidueVector {
            id,
            t: frame.t,
            values: held_values,
            held: true,
        },
    }
}

/// One residue channel evaluated over a whole run, indexed by evaluation
/// time te = k * Ts; entries outside the channel's reach are NaN.
#[derive(Debug, Clone)]
pub struct ChannelTrace {
    pub label: &'static str,
    pub scheme: FlatOutputId,
    /// Residue value at te = k * Ts.
    pub values: Vec<f64>,
    /// True where the value was frozen by a redundancy domain error.
    pub held: Vec<bool>,
    /// First sample index eligible for alarms.
    pub warmup_end: usize,
}

struct ProfileBank {
    cfg: DifferentiatorConfig,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

struct EngineChannel {
    label: &'static str,
    scheme: FlatOutputId,
    component: usize,
    profile: usize,
}

/// Runs all six residue channels over measurement traces. Each channel owns
/// a differentiator profile; mid-window evaluation on the slow channels
/// trades delay for noise rejection, while the input residues use a short
/// endpoint window to catch actuator steps quickly.
pub struct ResidueEngine {
    profiles: Vec<ProfileBank>,
    channels: [EngineChannel; 6],
    /// Alarm eligibility margin [samples] added after each channel's first
    /// estimate.
    settle_samples: usize,
}

impl ResidueEngine {
    /// The calibrated six-channel configuration: mid-window level residues
    /// at T = 300 s, a short 60 s endpoint window for the input residues,
    /// and two acceleration-bearing profiles at T = 300 s and T = 450 s.
    pub fn standard() -> Self {
        let profile = |window_t: f64, eval_offset: f64| DifferentiatorConfig {
            window_t,
            sample_ts: 1.0,
            taylor_order: 2,
            extra_nu: 0,
            max_derivative: 2,
            eval_offset,
        };
        Self::with_profiles([
            profile(300.0, 150.0),
            profile(60.0, 0.0),
            profile(300.0, 0.0),
            profile(450.0, 150.0),
        ])
        .expect("standard profiles are valid")
    }

    /// Builds the engine from four differentiator profiles: level residues,
    /// input residues, and the two acceleration-bearing channels (fast for
    /// R_A2 of Z1, slow for R_A1 of Z2).
    pub fn with_profiles(configs: [DifferentiatorConfig; 4]) -> Result<Self, DifferentiatorError> {
        let mut profiles = Vec::with_capacity(4);
        for cfg in configs {
            profiles.push(ProfileBank {
                w1: precompute_weights(&cfg, 1)?,
                w2: precompute_weights(&cfg, 2)?,
                cfg,
            });
        }
        let ch = |label, scheme, component, profile| EngineChannel {
            label,
            scheme,
            component,
            profile,
        };
        Ok(Self {
            profiles,
            channels: [
                ch("R_S2_Z1", FlatOutputId::Z1, 0, 0),
                ch("R_A1_Z1", FlatOutputId::Z1, 1, 1),
                ch("R_A2_Z1", FlatOutputId::Z1, 2, 2),
                ch("R_S1_Z2", FlatOutputId::Z2, 0, 0),
                ch("R_A1_Z2", FlatOutputId::Z2, 1, 3),
                ch("R_A2_Z2", FlatOutputId::Z2, 2, 1),
            ],
            settle_samples: 30,
        })
    }

    /// Channel labels in engine order.
    pub fn labels(&self) -> [&'static str; 6] {
        let mut out = [""; 6];
        for (i, c) in self.channels.iter().enumerate() {
            out[i] = c.label;
        }
        out
    }

    /// Indices of the channels belonging to one flat output.
    pub fn scheme_channels(&self, id: FlatOutputId) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.scheme == id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Evaluates all channels over a run of measurement frames sampled at a
    /// fixed period.
    pub fn process(&self, frames: &[MeasurementFrame], params: &PlantParams) -> Vec<ChannelTrace> {
        let k_total = frames.len();
        let y: [Vec<f64>; 3] = [
            frames.iter().map(|f| f.y1s).collect(),
            frames.iter().map(|f| f.y2s).collect(),
            frames.iter().map(|f| f.y3s).collect(),
        ];

        struct Derivatives {
            m: usize,
            dlag: usize,
            d1: [Vec<f64>; 3],
            d2y3: Vec<f64>,
        }
        let banks: Vec<Derivatives> = self
            .profiles
            .iter()
            .map(|p| {
                let m = p.cfg.window_samples();
                let convolve = |w: &[f64], series: &[f64]| -> Vec<f64> {
                    if k_total <= m {
                        return Vec::new();
                    }
                    (m..k_total)
                        .map(|ks| w.iter().enumerate().map(|(i, wi)| wi * series[ks - i]).sum())
                        .collect()
                };
                Derivatives {
                    m,
                    dlag: p.cfg.delay_samples(),
                    d1: [
                        convolve(&p.w1, &y[0]),
                        convolve(&p.w1, &y[1]),
                        convolve(&p.w1, &y[2]),
                    ],
                    d2y3: convolve(&p.w2, &y[2]),
                }
            })
            .collect();

        self.channels
            .iter()
            .map(|ch| {
                let bank = &banks[ch.profile];
                let mut values = vec![f64::NAN; k_total];
                let mut held = vec![false; k_total];
                let mut previous: Option<ResidueVector> = None;
                for ks in bank.m..k_total {
                    let i = ks - bank.m;
                    let te_index = ks - bank.dlag;
                    let frame = &frames[te_index];
                    let z_dot = match ch.scheme {
                        FlatOutputId::Z1 => [bank.d1[0][i], bank.d1[2][i]],
                        FlatOutputId::Z2 => [bank.d1[1][i], bank.d1[2][i]],
                    };
                    let z_ddot = [0.0, bank.d2y3[i]];
                    let rv = compute_residues(
                        frame,
                        z_dot,
                        z_ddot,
                        ch.scheme,
                        previous.as_ref(),
                        params,
                    );
                    values[te_index] = rv.values[ch.component];
                    held[te_index] = rv.held;
                    previous = Some(rv);
                }
                ChannelTrace {
                    label: ch.label,
                    scheme: ch.scheme,
                    values,
                    held,
                    warmup_end: bank.m - bank.dlag + self.settle_samples,
                }
            })
            .collect()
    }
}

/// Symmetric per-channel alarm thresholds for the six stacked residues.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ThresholdSet {
    pub values: [f64; 6],
}

impl ThresholdSet {
    pub fn validate(&self) -> Result<(), FdiError> {
        if self.values.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(FdiError::EmptyCalibration)
        }
    }
}

/// Worst-case thresholds from nominal runs: per channel, 1.05 times the
/// largest post-warm-up residue magnitude seen across all runs.
pub fn calibrate_thresholds(nominal_runs: &[Vec<ChannelTrace>]) -> Result<ThresholdSet, FdiError> {
    if nominal_runs.is_empty() {
        return Err(FdiError::EmptyCalibration);
    }
    let mut worst = [0.0_f64; 6];
    for run in nominal_runs {
        if run.len() != 6 {
            return Err(FdiError::ChannelCountMismatch {
                got: run.len(),
                want: 6,
            });
        }
        for (c, trace) in run.iter().enumerate() {
            for k in trace.warmup_end..trace.values.len() {
                let v = trace.values[k];
                if v.is_finite() {
                    worst[c] = worst[c].max(v.abs());
                }
            }
        }
    }
    let mut values = [0.0; 6];
    for c in 0..6 {
        values[c] = 1.05 * worst[c];
    }
    Ok(ThresholdSet { values })
}

/// Magnitudes of the residue partial derivatives with respect to the
/// measured signals, their derivatives, and the inputs at an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTable {
    pub id: FlatOutputId,
    pub rows: [&'static str; 3],
    pub columns: [&'static str; 9],
    pub entries: [[f64; 9]; 3],
}

fn residue_map(
    zeta: &[f64; 9],
    id: FlatOutputId,
    params: &PlantParams,
) -> Result<[f64; 3], DomainError> {
    let [y1s, y2s, y3s, dy1s, dy2s, dy3s, ddy3s, u1, u2] = *zeta;
    let (z, z_dot) = match id {
        FlatOutputId::Z1 => ([y1s, y3s], [dy1s, dy3s]),
        FlatOutputId::Z2 => ([y2s, y3s], [dy2s, dy3s]),
    };
    let sample = FlatOutputSample {
        id,
        z,
        z_dot,
        z_ddot: [0.0, ddy3s],
    };
    let rf = match id {
        FlatOutputId::Z1 => z1_redundancy(&sample, params)?,
        FlatOutputId::Z2 => z2_redundancy(&sample, params)?,
    };
    Ok(match id {
        FlatOutputId::Z1 => [y2s - rf.y2z, u1 - rf.u1z, u2 - rf.u2z],
        FlatOutputId::Z2 => [y1s - rf.y1z, u1 - rf.u1z, u2 - rf.u2z],
    })
}

/// Sensitivity table with an explicit finite-difference step.
///
/// Entries are central differences of the residue maps, each coordinate of
/// (y, dy, ddy3, u) perturbed independently. The feedback loops add a unit
/// entry where a regulated level enters its own pump's residue without being
/// a component of the scheme's flat output: (R_A2, y2s) for Z1 and
/// (R_A1, y1s) for Z2.
pub fn sensitivity_matrix_with_step(
    eq: [f64; 3],
    id: FlatOutputId,
    params: &PlantParams,
    step: f64,
) -> Result<SensitivityTable, FdiError> {
    let [x1, x2, x3] = eq;
    let u1 = params.mu13 * (x1 - x3).max(0.0).sqrt();
    let u2 = params.mu20 * x2.max(0.0).sqrt() - params.mu32 * (x3 - x2).max(0.0).sqrt();
    let base = [x1, x2, x3, 0.0, 0.0, 0.0, 0.0, u1, u2];
    residue_map(&base, id, params).map_err(FdiError::SingularEquilibrium)?;

    let mut signed = [[0.0; 9]; 3];
    for j in 0..9 {
        let mut plus = base;
        plus[j] += step;
        let mut minus = base;
        minus[j] -= step;
        let rp = residue_map(&plus, id, params).map_err(FdiError::SingularEquilibrium)?;
        let rm = residue_map(&minus, id, params).map_err(FdiError::SingularEquilibrium)?;
        for i in 0..3 {
            signed[i][j] = (rp[i] - rm[i]) / (2.0 * step);
        }
    }
    match id {
        FlatOutputId::Z1 => signed[2][1] += 1.0,
        FlatOutputId::Z2 => signed[1][0] += 1.0,
    }
    let mut entries = [[0.0; 9]; 3];
    for i in 0..3 {
        for j in 0..9 {
            entries[i][j] = signed[i][j].abs();
        }
    }
    Ok(SensitivityTable {
        id,
        rows: residue_labels(id),
        columns: SENSITIVITY_COLUMNS,
        entries,
    })
}

/// Sensitivity table at the default finite-difference step of 1e-6.
pub fn sensitivity_matrix(
    eq: [f64; 3],
    id: FlatOutputId,
    params: &PlantParams,
) -> Result<SensitivityTable, FdiError> {
    sensitivity_matrix_with_step(eq, id, params, 1e-6)
}

/// Boolean fault signatures: rows are residue channels, columns the five
/// faultable channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix {
    pub row_labels: Vec<String>,
    pub columns: [ChannelId; 5],
    pub bits: Vec<[bool; 5]>,
}

impl SignatureMatrix {
    /// Signature of one fault column as a bit vector over the rows.
    pub fn column(&self, j: usize) -> Vec<bool> {
        self.bits.iter().map(|row| row[j]).collect()
    }
}

/// Thresholds a sensitivity table into a signature matrix: a residue is
/// sensitive to a fault channel when any associated sensitivity entry
/// (level and its derivatives for a sensor, the input for an actuator)
/// exceeds the threshold.
pub fn build_signature_matrix(sens: &SensitivityTable, threshold: f64) -> SignatureMatrix {
    assert!(threshold > 0.0, "sensitivity threshold must be positive");
    let groups: [&[usize]; 5] = [&[0, 3], &[1, 4], &[2, 5, 6], &[7], &[8]];
    let suffix = match sens.id {
        FlatOutputId::Z1 => "_Z1",
        FlatOutputId::Z2 => "_Z2",
    };
    let bits = sens
        .entries
        .iter()
        .map(|row| {
            let mut out = [false; 5];
            for (j, cols) in groups.iter().enumerate() {
                out[j] = cols.iter().any(|&c| row[c] > threshold);
            }
            out
        })
        .collect();
    SignatureMatrix {
        row_labels: sens.rows.iter().map(|r| format!("{r}{suffix}")).collect(),
        columns: FAULT_COLUMNS,
        bits,
    }
}

/// Detectability and isolability summary of a signature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolabilityReport {
    /// Channels whose column contains at least one 1.
    pub detectable: Vec<ChannelId>,
    /// Detectable channels whose column signature is unique.
    pub isolable: Vec<ChannelId>,
    /// Number of columns whose signature appears exactly once.
    pub mu: usize,
    /// Columns grouped by identical signature, in first-occurrence order.
    pub signature_classes: Vec<Vec<ChannelId>>,
}

/// Analyzes which faults a signature matrix can detect and isolate.
pub fn analyze(matrix: &SignatureMatrix) -> IsolabilityReport {
    let columns: Vec<Vec<bool>> = (0..5).map(|j| matrix.column(j)).collect();
    let mut signature_classes: Vec<Vec<ChannelId>> = Vec::new();
    let mut class_keys: Vec<&Vec<bool>> = Vec::new();
    for j in 0..5 {
        match class_keys.iter().position(|k| **k == columns[j]) {
            Some(c) => signature_classes[c].push(matrix.columns[j]),
            None => {
                class_keys.push(&columns[j]);
                signature_classes.push(vec![matrix.columns[j]]);
            }
        }
    }
    let detectable: Vec<ChannelId> = (0..5)
        .filter(|&j| columns[j].iter().any(|&b| b))
        .map(|j| matrix.columns[j])
        .collect();
    let unique: Vec<ChannelId> = signature_classes
        .iter()
        .filter(|class| class.len() == 1)
        .map(|class| class[0])
        .collect();
    let isolable: Vec<ChannelId> = unique
        .iter()
        .copied()
        .filter(|c| detectable.contains(c))
        .collect();
    IsolabilityReport {
        detectable,
        mu: unique.len(),
        isolable,
        signature_classes,
    }
}

/// Stacks signature matrices sharing the same columns into one.
pub fn augment(matrices: &[SignatureMatrix]) -> Result<SignatureMatrix, FdiError> {
    let first = matrices.first().ok_or(FdiError::EmptyAugment)?;
    let mut row_labels = Vec::new();
    let mut bits = Vec::new();
    for m in matrices {
        if m.columns != first.columns {
            return Err(FdiError::ColumnMismatch);
        }
        row_labels.extend(m.row_labels.iter().cloned());
        bits.extend(m.bits.iter().copied());
    }
    Ok(SignatureMatrix {
        row_labels,
        columns: first.columns,
        bits,
    })
}

/// Two flat outputs are independent when stacking their signature matrices
/// strictly increases the unique-signature count over both.
pub fn independence(a: &SignatureMatrix, b: &SignatureMatrix) -> Result<bool, FdiError> {
    let stacked = augment(&[a.clone(), b.clone()])?;
    let mu_a = analyze(a).mu;
    let mu_b = analyze(b).mu;
    let mu_s = analyze(&stacked).mu;
    Ok(mu_s > mu_a && mu_s > mu_b)
}

/// Fault hypotheses consistent with an alarm pattern: every column whose
/// signature equals the pattern. Empty means no fault (all-zero pattern) or
/// an unknown pattern; multiple entries mean the pattern cannot separate
/// them.
pub fn isolate(
    alarm_pattern: &[bool],
    matrix: &SignatureMatrix,
) -> Result<Vec<ChannelId>, FdiError> {
    if alarm_pattern.len() != matrix.bits.len() {
        return Err(FdiError::PatternLength {
            got: alarm_pattern.len(),
            want: matrix.bits.len(),
        });
    }
    Ok((0..5)
        .filter(|&j| matrix.column(j) == alarm_pattern)
        .map(|j| matrix.columns[j])
        .collect())
}

/// Debounced per-sample alarm flags for each channel trace: a channel alarms
/// at sample k when its residue magnitude has exceeded the threshold for
/// `debounce` consecutive eligible samples. Warm-up samples and NaN gaps
/// reset the count.
pub fn alarm_stream(
    traces: &[ChannelTrace],
    thresholds: &ThresholdSet,
    debounce: usize,
) -> Vec<Vec<bool>> {
    assert!(debounce >= 1, "debounce must be at least one sample");
    traces
        .iter()
        .enumerate()
        .map(|(c, trace)| {
            let th = thresholds.values[c];
            let mut run = 0usize;
            trace
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    if k < trace.warmup_end || !v.is_finite() || v.abs() <= th {
                        run = 0;
                    } else {
                        run += 1;
                    }
                    run >= debounce
                })
                .collect()
        })
        .collect()
}

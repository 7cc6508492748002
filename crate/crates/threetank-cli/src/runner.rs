//! Closed-loop scenario execution: simulation, residue evaluation, alarm
//! flags, and the time-indexed trace with its CSV round trip.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use threetank::control::{closed_loop_command, LoopControllers};
use threetank::fault::{delivered_input, sense, MeasurementFrame};
use threetank::fdi::{alarm_stream, ChannelTrace, ResidueEngine, ThresholdSet, DEBOUNCE_DEFAULT};
use threetank::plant::{
    find_equilibrium, integrate_interval, InputVector, PlantState, INTERNAL_DT, SAMPLE_TS,
};

use crate::commands::CliError;
use crate::config::{FlatChoice, ScenarioConfig};
use crate::csvio::{fmt_f64, parse_f64, read_csv, write_csv};

/// Everything one scenario run produces.
pub struct RunArtifacts {
    /// Sample times t = k * Ts.
    pub t: Vec<f64>,
    /// True tank levels per sample.
    pub truth: Vec<[f64; 3]>,
    /// Measured levels and commanded inputs per sample.
    pub frames: Vec<MeasurementFrame>,
    /// Reference levels (x1, x2, x3) per sample.
    pub references: Vec<[f64; 3]>,
    /// All six residue channels, regardless of the export selection.
    pub traces: Vec<ChannelTrace>,
    /// Debounced alarm flags per channel, empty without thresholds.
    pub alarms: Vec<Vec<bool>>,
    /// Integrator substeps where a level clamp engaged.
    pub clamped_substeps: usize,
}

/// Engine channel indices a flat-output selection exports.
pub fn selected_channels(choice: FlatChoice) -> Vec<usize> {
    match choice {
        FlatChoice::Z1 => vec![0, 1, 2],
        FlatChoice::Z2 => vec![3, 4, 5],
        FlatChoice::Both => vec![0, 1, 2, 3, 4, 5],
    }
}

/// Runs one scenario: closed-loop simulation, residue evaluation, and alarm
/// flags when thresholds are given.
pub fn run_scenario(
    config: &ScenarioConfig,
    thresholds: Option<&ThresholdSet>,
) -> Result<RunArtifacts, CliError> {
    config.validate()?;
    let params = &config.plant;
    let engine = config.engine()?;
    let fault = config.fault();
    let (x2_init, _) = find_equilibrium(
        config.trajectory.z_initial[0],
        config.trajectory.z_initial[1],
        params,
    )
    .map_err(|e| CliError::Numerical(format!("initial equilibrium: {e}")))?;
    let mut state = PlantState::new(
        config.trajectory.z_initial[0],
        x2_init,
        config.trajectory.z_initial[1],
        0.0,
    );
    let mut controllers = LoopControllers::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let samples = (config.duration / SAMPLE_TS).round() as usize + 1;
    let mut t = Vec::with_capacity(samples);
    let mut truth = Vec::with_capacity(samples);
    let mut frames = Vec::with_capacity(samples);
    let mut references = Vec::with_capacity(samples);
    let mut clamped_substeps = 0;

    for k in 0..samples {
        let tk = k as f64 * SAMPLE_TS;
        let mut frame = sense(&state, &InputVector::default(), fault, &config.noise, &mut rng);
        let out = closed_loop_command(tk, &frame, &config.trajectory, &mut controllers, params)
            .map_err(|e| CliError::Numerical(format!("control at t = {tk}: {e}")))?;
        frame.u1m = out.u.u1;
        frame.u2m = out.u.u2;
        t.push(tk);
        truth.push([state.x1, state.x2, state.x3]);
        frames.push(frame);
        references.push(out.reference);
        if k + 1 < samples {
            let delivered = delivered_input(&out.u, fault, tk);
            let (next, clamped) =
                integrate_interval(&state, &delivered, SAMPLE_TS, INTERNAL_DT, params)
                    .map_err(|e| CliError::Numerical(format!("integration at t = {tk}: {e}")))?;
            clamped_substeps += clamped;
            state = next;
        }
    }

    let traces = engine.process(&frames, params);
    let alarms = match thresholds {
        Some(th) => alarm_stream(&traces, th, DEBOUNCE_DEFAULT),
        None => Vec::new(),
    };
    Ok(RunArtifacts {
        t,
        truth,
        frames,
        references,
        traces,
        alarms,
        clamped_substeps,
    })
}

/// Alarm pattern over a time window: per selected channel, whether any
/// debounced alarm fired with evaluation time inside [start, end].
pub fn window_pattern(
    artifacts: &RunArtifacts,
    channels: &[usize],
    window: (f64, f64),
) -> Vec<bool> {
    channels
        .iter()
        .map(|&c| {
            artifacts
                .alarms
                .get(c)
                .map(|flags| {
                    flags.iter().enumerate().any(|(k, &alarm)| {
                        let te = k as f64 * SAMPLE_TS;
                        alarm && te >= window.0 && te <= window.1
                    })
                })
                .unwrap_or(false)
        })
        .collect()
}

/// Number of raised alarm samples per channel, post warm-up.
pub fn alarm_counts(artifacts: &RunArtifacts) -> Vec<usize> {
    artifacts
        .alarms
        .iter()
        .map(|flags| flags.iter().filter(|&&a| a).count())
        .collect()
}

/// Writes the time-indexed trace: truth, measurements, commands, references,
/// selected residues, and their alarm flags.
pub fn write_trace(
    path: &Path,
    artifacts: &RunArtifacts,
    choice: FlatChoice,
) -> Result<(), CliError> {
    let channels = selected_channels(choice);
    let mut header: Vec<String> = [
        "t", "x1", "x2", "x3", "y1s", "y2s", "y3s", "u1", "u2", "ref_x1", "ref_x2", "ref_x3",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for &c in &channels {
        header.push(artifacts.traces[c].label.to_string());
    }
    for &c in &channels {
        header.push(format!("alarm_{}", artifacts.traces[c].label));
    }
    let rows = (0..artifacts.t.len()).map(|k| {
        let mut row = vec![
            fmt_f64(artifacts.t[k]),
            fmt_f64(artifacts.truth[k][0]),
            fmt_f64(artifacts.truth[k][1]),
            fmt_f64(artifacts.truth[k][2]),
            fmt_f64(artifacts.frames[k].y1s),
            fmt_f64(artifacts.frames[k].y2s),
            fmt_f64(artifacts.frames[k].y3s),
            fmt_f64(artifacts.frames[k].u1m),
            fmt_f64(artifacts.frames[k].u2m),
            fmt_f64(artifacts.references[k][0]),
            fmt_f64(artifacts.references[k][1]),
            fmt_f64(artifacts.references[k][2]),
        ];
        for &c in &channels {
            row.push(fmt_f64(artifacts.traces[c].values[k]));
        }
        for &c in &channels {
            let alarm = artifacts.alarms.get(c).map(|f| f[k]).unwrap_or(false);
            row.push(if alarm { "1" } else { "0" }.to_string());
        }
        row
    });
    write_csv(path, &header, rows)
}

/// A trace read back from CSV, sufficient to recompute residues.
pub struct TraceData {
    pub t: Vec<f64>,
    pub truth: Vec<[f64; 3]>,
    pub frames: Vec<MeasurementFrame>,
    pub references: Vec<[f64; 3]>,
    /// Residue columns as written, keyed by channel label.
    pub residues: Vec<(String, Vec<f64>)>,
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace(path: &Path) -> Result<TraceData, CliError> {
    let (header, rows) = read_csv(path)?;
    let col = |name: &str| -> Result<usize, CliError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{} lacks column {name}", path.display())))
    };
    let fixed: Vec<usize> = [
        "t", "x1", "x2", "x3", "y1s", "y2s", "y3s", "u1", "u2", "ref_x1", "ref_x2", "ref_x3",
    ]
    .iter()
    .map(|n| col(n))
    .collect::<Result<_, _>>()?;
    let residue_cols: Vec<(String, usize)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("R_"))
        .map(|(i, h)| (h.clone(), i))
        .collect();

    let mut data = TraceData {
        t: Vec::new(),
        truth: Vec::new(),
        frames: Vec::new(),
        references: Vec::new(),
        residues: residue_cols
            .iter()
            .map(|(label, _)| (label.clone(), Vec::new()))
            .collect(),
    };
    for row in rows {
        let get = |i: usize| parse_f64(&row[i]);
        data.t.push(get(fixed[0])?);
        data.truth
            .push([get(fixed[1])?, get(fixed[2])?, get(fixed[3])?]);
        data.frames.push(MeasurementFrame {
            t: get(fixed[0])?,
            y1s: get(fixed[4])?,
            y2s: get(fixed[5])?,
            y3s: get(fixed[6])?,
            u1m: get(fixed[7])?,
            u2m: get(fixed[8])?,
        });
        data.references
            .push([get(fixed[9])?, get(fixed[10])?, get(fixed[11])?]);
        for (slot, (_, i)) in data.residues.iter_mut().zip(&residue_cols) {
            slot.1.push(get(*i)?);
        }
    }
    Ok(data)
}

/// Writes a calibrated threshold set keyed by channel label.
pub fn write_thresholds(path: &Path, thresholds: &ThresholdSet) -> Result<(), CliError> {
    let engine = ResidueEngine::standard();
    let header = vec!["channel".to_string(), "threshold".to_string()];
    let rows = engine
        .labels()
        .iter()
        .zip(thresholds.values.iter())
        .map(|(label, th)| vec![label.to_string(), fmt_f64(*th)])
        .collect::<Vec<_>>();
    write_csv(path, &header, rows)
}

/// Reads a threshold set written by [`write_thresholds`].
pub fn read_thresholds(path: &Path) -> Result<ThresholdSet, CliError> {
    let (header, rows) = read_csv(path)?;
    if header != ["channel", "threshold"] {
        return Err(CliError::Config(format!(
            "{} is not a threshold file",
            path.display()
        )));
    }
    let labels = ResidueEngine::standard().labels();
    if rows.len() != labels.len() {
        return Err(CliError::Config(format!(
            "{} holds {} channels, expected {}",
            path.display(),
            rows.len(),
            labels.len()
        )));
    }
    let mut values = [0.0; 6];
    for (row, (slot, label)) in rows.iter().zip(values.iter_mut().zip(labels.iter())) {
        if row.len() != 2 || row[0] != *label {
            return Err(CliError::Config(format!(
                "{} channel order must be {:?}",
                path.display(),
                labels
            )));
        }
        *slot = parse_f64(&row[1])?;
    }
    let set = ThresholdSet { values };
    set.validate()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(set)
}

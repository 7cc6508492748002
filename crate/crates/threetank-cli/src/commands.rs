//! The four subcommands behind the binary: simulate, calibrate, report, and
//! batch, plus the error-to-exit-code contract.

use std::path::{Path, PathBuf};

use thiserror::Error;

use threetank::fdi::{
    analyze, augment, build_signature_matrix, calibrate_thresholds, independence,
    sensitivity_matrix, IsolabilityReport, SensitivityTable, SignatureMatrix, ThresholdSet,
    SENSITIVITY_THRESHOLD_DEFAULT,
};
use threetank::flatness::FlatOutputId;
use threetank::plant::PlantParams;

use crate::config::{FlatChoice, ScenarioConfig};
use crate::csvio::{fmt_f64, write_csv};
use crate::runner::{
    alarm_counts, read_thresholds, run_scenario, write_thresholds, write_trace, RunArtifacts,
};

/// Environment variable that overrides the output directory when --out is
/// absent.
pub const OUT_DIR_ENV: &str = "THREETANK_OUT";

/// Default equilibrium for sensitivity reports [m].
pub const REPORT_EQUILIBRIUM: [f64; 3] = [0.20, 0.10, 0.15];

/// Failures of a command, partitioned by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Configuration, file-format, or I/O problem; exit code 2.
    #[error("{0}")]
    Config(String),
    /// Simulation or analysis blew up numerically; exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// The process exit code this error maps to: 2 for configuration
    /// errors, 3 for numerical failures. Success exits 0.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

/// Command-line overrides shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub flat_output: Option<FlatChoice>,
}

/// Output directory precedence: --out, then the environment variable, then
/// the scenario's own entry, then "./out".
pub fn resolve_out_dir(cli: Option<&Path>, config: Option<&str>) -> PathBuf {
    let env = std::env::var(OUT_DIR_ENV).ok();
    resolve_out_dir_with(cli, env.as_deref(), config)
}

fn resolve_out_dir_with(cli: Option<&Path>, env: Option<&str>, config: Option<&str>) -> PathBuf {
    if let Some(dir) = cli {
        return dir.to_path_buf();
    }
    if let Some(dir) = env {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    if let Some(dir) = config {
        return PathBuf::from(dir);
    }
    PathBuf::from("out")
}

fn apply_overrides(config: &mut ScenarioConfig, overrides: &Overrides) {
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(flat) = overrides.flat_output {
        config.flat_output = flat;
    }
}

/// Outcome of one simulated scenario.
pub struct SimSummary {
    pub name: String,
    pub seed: u64,
    pub flat_output: FlatChoice,
    pub samples: usize,
    pub terminal_truth: [f64; 3],
    pub terminal_reference: [f64; 3],
    pub clamped_substeps: usize,
    /// Raised alarm samples per engine channel; zeros without thresholds.
    pub alarm_counts: Vec<usize>,
    pub trace_path: PathBuf,
}

impl SimSummary {
    fn from_run(
        config: &ScenarioConfig,
        artifacts: &RunArtifacts,
        trace_path: PathBuf,
    ) -> Self {
        Self {
            name: config.name.clone(),
            seed: config.seed,
            flat_output: config.flat_output,
            samples: artifacts.t.len(),
            terminal_truth: *artifacts.truth.last().unwrap(),
            terminal_reference: *artifacts.references.last().unwrap(),
            clamped_substeps: artifacts.clamped_substeps,
            alarm_counts: if artifacts.alarms.is_empty() {
                vec![0; artifacts.traces.len()]
            } else {
                alarm_counts(artifacts)
            },
            trace_path,
        }
    }
}

fn run_and_write(
    config: &ScenarioConfig,
    out_dir: &Path,
) -> Result<(RunArtifacts, SimSummary), CliError> {
    let thresholds = config
        .thresholds
        .as_ref()
        .map(|p| read_thresholds(Path::new(p)))
        .transpose()?;
    let artifacts = run_scenario(config, thresholds.as_ref())?;
    let trace_path = out_dir.join(format!("{}_trace.csv", config.name));
    write_trace(&trace_path, &artifacts, config.flat_output)?;
    let summary = SimSummary::from_run(config, &artifacts, trace_path);
    Ok((artifacts, summary))
}

/// Runs one scenario and writes its trace.
pub fn cmd_simulate(config_path: &Path, overrides: &Overrides) -> Result<SimSummary, CliError> {
    let mut config = ScenarioConfig::load(config_path)?;
    apply_overrides(&mut config, overrides);
    let out_dir = resolve_out_dir(overrides.out.as_deref(), config.out_dir.as_deref());
    let (_, summary) = run_and_write(&config, &out_dir)?;
    Ok(summary)
}

/// Runs at least three nominal scenarios and writes the calibrated
/// per-channel thresholds.
pub fn cmd_calibrate(
    config_paths: &[PathBuf],
    overrides: &Overrides,
) -> Result<(ThresholdSet, PathBuf), CliError> {
    if config_paths.len() < 3 {
        return Err(CliError::Config(format!(
            "calibration needs at least 3 nominal scenarios, got {}",
            config_paths.len()
        )));
    }
    let mut configs = Vec::new();
    for path in config_paths {
        let mut config = ScenarioConfig::load(path)?;
        apply_overrides(&mut config, overrides);
        if let Some(fault) = config.fault() {
            return Err(CliError::Config(format!(
                "calibration scenario {} injects a {} fault; only nominal runs calibrate",
                config.name, fault.target
            )));
        }
        configs.push(config);
    }
    let out_dir = resolve_out_dir(
        overrides.out.as_deref(),
        configs[0].out_dir.as_deref(),
    );
    let mut runs = Vec::new();
    for config in &configs {
        let artifacts = run_scenario(config, None)?;
        runs.push(artifacts.traces);
    }
    let thresholds =
        calibrate_thresholds(&runs).map_err(|e| CliError::Numerical(e.to_string()))?;
    thresholds
        .validate()
        .map_err(|_| CliError::Numerical("calibration produced a non-positive threshold".into()))?;
    let path = out_dir.join("thresholds.csv");
    write_thresholds(&path, &thresholds)?;
    Ok((thresholds, path))
}

/// Everything the report command derives and writes.
pub struct ReportSummary {
    pub sensitivity_z1: SensitivityTable,
    pub sensitivity_z2: SensitivityTable,
    pub signature_z1: SignatureMatrix,
    pub signature_z2: SignatureMatrix,
    pub signature_stacked: SignatureMatrix,
    pub report_z1: IsolabilityReport,
    pub report_z2: IsolabilityReport,
    pub report_stacked: IsolabilityReport,
    pub independent: bool,
}

fn write_sensitivity(path: &Path, table: &SensitivityTable) -> Result<(), CliError> {
    let mut header = vec!["residue".to_string()];
    header.extend(table.columns.iter().map(|c| c.to_string()));
    let rows = table
        .rows
        .iter()
        .zip(table.entries.iter())
        .map(|(label, entries)| {
            let mut row = vec![label.to_string()];
            row.extend(entries.iter().map(|v| fmt_f64(*v)));
            row
        })
        .collect::<Vec<_>>();
    write_csv(path, &header, rows)
}

fn write_signature(path: &Path, matrix: &SignatureMatrix) -> Result<(), CliError> {
    let mut header = vec!["residue".to_string()];
    header.extend(matrix.columns.iter().map(|c| c.to_string()));
    let rows = matrix
        .row_labels
        .iter()
        .zip(matrix.bits.iter())
        .map(|(label, bits)| {
            let mut row = vec![label.clone()];
            row.extend(bits.iter().map(|b| if *b { "1" } else { "0" }.to_string()));
            row
        })
        .collect::<Vec<_>>();
    write_csv(path, &header, rows)
}

fn channel_list(channels: &[threetank::fault::ChannelId]) -> String {
    channels
        .iter()
        .map(|c| c.label())
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_isolability(path: &Path, summary: &ReportSummary) -> Result<(), CliError> {
    let mut text = String::new();
    for (name, report) in [
        ("z1", &summary.report_z1),
        ("z2", &summary.report_z2),
        ("stacked", &summary.report_stacked),
    ] {
        text.push_str(&format!("{name} mu = {}\n", report.mu));
        text.push_str(&format!(
            "{name} detectable = {}\n",
            channel_list(&report.detectable)
        ));
        text.push_str(&format!(
            "{name} isolable = {}\n",
            channel_list(&report.isolable)
        ));
        let classes = report
            .signature_classes
            .iter()
            .map(|class| format!("{{{}}}", channel_list(class)))
            .collect::<Vec<_>>()
            .join(" ");
        text.push_str(&format!("{name} classes = {classes}\n"));
    }
    text.push_str(&format!("independence = {}\n", summary.independent));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Builds the sensitivity tables, signature matrices, and isolability
/// analysis at an equilibrium, and writes them under the output directory.
pub fn cmd_report(
    config_path: Option<&Path>,
    overrides: &Overrides,
    equilibrium: [f64; 3],
    sensitivity_threshold: f64,
) -> Result<ReportSummary, CliError> {
    let (params, config_out) = match config_path {
        Some(path) => {
            let config = ScenarioConfig::load(path)?;
            (config.plant, config.out_dir)
        }
        None => (PlantParams::default(), None),
    };
    let out_dir = resolve_out_dir(overrides.out.as_deref(), config_out.as_deref());

    let numerical = |e: threetank::fdi::FdiError| CliError::Numerical(e.to_string());
    let sensitivity_z1 =
        sensitivity_matrix(equilibrium, FlatOutputId::Z1, &params).map_err(numerical)?;
    let sensitivity_z2 =
        sensitivity_matrix(equilibrium, FlatOutputId::Z2, &params).map_err(numerical)?;
    let signature_z1 = build_signature_matrix(&sensitivity_z1, sensitivity_threshold);
    let signature_z2 = build_signature_matrix(&sensitivity_z2, sensitivity_threshold);
    let signature_stacked =
        augment(&[signature_z1.clone(), signature_z2.clone()]).map_err(numerical)?;
    let independent = independence(&signature_z1, &signature_z2).map_err(numerical)?;
    let summary = ReportSummary {
        report_z1: analyze(&signature_z1),
        report_z2: analyze(&signature_z2),
        report_stacked: analyze(&signature_stacked),
        sensitivity_z1,
        sensitivity_z2,
        signature_z1,
        signature_z2,
        signature_stacked,
        independent,
    };

    let flat = overrides.flat_output.unwrap_or(FlatChoice::Both);
    if flat != FlatChoice::Z2 {
        write_sensitivity(&out_dir.join("sensitivity_z1.csv"), &summary.sensitivity_z1)?;
        write_signature(&out_dir.join("signature_z1.csv"), &summary.signature_z1)?;
    }
    if flat != FlatChoice::Z1 {
        write_sensitivity(&out_dir.join("sensitivity_z2.csv"), &summary.sensitivity_z2)?;
        write_signature(&out_dir.join("signature_z2.csv"), &summary.signature_z2)?;
    }
    if flat == FlatChoice::Both {
        write_signature(
            &out_dir.join("signature_stacked.csv"),
            &summary.signature_stacked,
        )?;
    }
    write_isolability(&out_dir.join("isolability.txt"), &summary)?;
    Ok(summary)
}

/// Report with the default equilibrium and sensitivity threshold.
pub fn cmd_report_defaults(
    config_path: Option<&Path>,
    overrides: &Overrides,
) -> Result<ReportSummary, CliError> {
    cmd_report(
        config_path,
        overrides,
        REPORT_EQUILIBRIUM,
        SENSITIVITY_THRESHOLD_DEFAULT,
    )
}

/// Runs several scenarios in listing order and writes a merged summary.
/// With --seed N, scenario i runs with seed N + i.
pub fn cmd_batch(
    config_paths: &[PathBuf],
    overrides: &Overrides,
) -> Result<Vec<SimSummary>, CliError> {
    if config_paths.is_empty() {
        return Err(CliError::Config("batch needs at least one scenario".into()));
    }
    let mut summaries = Vec::new();
    for (i, path) in config_paths.iter().enumerate() {
        let mut config = ScenarioConfig::load(path)?;
        if let Some(flat) = overrides.flat_output {
            config.flat_output = flat;
        }
        if let Some(base) = overrides.seed {
            config.seed = base + i as u64;
        }
        let out_dir = resolve_out_dir(overrides.out.as_deref(), config.out_dir.as_deref());
        let (_, summary) = run_and_write(&config, &out_dir)?;
        summaries.push(summary);
    }
    let out_dir = resolve_out_dir(overrides.out.as_deref(), None);
    let mut header = vec![
        "name".to_string(),
        "seed".to_string(),
        "samples".to_string(),
        "clamped_substeps".to_string(),
        "terminal_x1".to_string(),
        "terminal_x2".to_string(),
        "terminal_x3".to_string(),
    ];
    for label in threetank::fdi::CHANNEL_LABELS {
        header.push(format!("alarms_{label}"));
    }
    let rows = summaries
        .iter()
        .map(|s| {
            let mut row = vec![
                s.name.clone(),
                s.seed.to_string(),
                s.samples.to_string(),
                s.clamped_substeps.to_string(),
                fmt_f64(s.terminal_truth[0]),
                fmt_f64(s.terminal_truth[1]),
                fmt_f64(s.terminal_truth[2]),
            ];
            row.extend(s.alarm_counts.iter().map(|c| c.to_string()));
            row
        })
        .collect::<Vec<_>>();
    write_csv(&out_dir.join("batch_summary.csv"), &header, rows)?;
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_partition_the_error_space() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 3);
    }

    #[test]
    fn out_dir_resolution_orders_flag_env_config_default() {
        let cli = PathBuf::from("cli_dir");
        assert_eq!(
            resolve_out_dir_with(Some(&cli), Some("env_dir"), Some("cfg_dir")),
            PathBuf::from("cli_dir")
        );
        assert_eq!(
            resolve_out_dir_with(None, Some("env_dir"), Some("cfg_dir")),
            PathBuf::from("env_dir")
        );
        assert_eq!(
            resolve_out_dir_with(None, Some(""), Some("cfg_dir")),
            PathBuf::from("cfg_dir")
        );
        assert_eq!(
            resolve_out_dir_with(None, None, None),
            PathBuf::from("out")
        );
    }

    #[test]
    fn calibrate_rejects_too_few_or_faulted_scenarios() {
        let overrides = Overrides::default();
        let err = cmd_calibrate(&[PathBuf::from("a.toml")], &overrides).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn report_defaults_reproduce_the_isolability_story() {
        let dir = std::env::temp_dir().join("threetank_report_test");
        let overrides = Overrides {
            out: Some(dir.clone()),
            ..Default::default()
        };
        let summary = cmd_report_defaults(None, &overrides).unwrap();
        assert_eq!(summary.report_z1.mu, 3);
        assert_eq!(summary.report_z2.mu, 3);
        assert_eq!(summary.report_stacked.mu, 5);
        assert!(summary.independent);
        for file in [
            "sensitivity_z1.csv",
            "sensitivity_z2.csv",
            "signature_z1.csv",
            "signature_z2.csv",
            "signature_stacked.csv",
            "isolability.txt",
        ] {
            assert!(dir.join(file).exists(), "{file} missing");
        }
        let text = std::fs::read_to_string(dir.join("isolability.txt")).unwrap();
        assert!(text.contains("stacked mu = 5"));
        assert!(text.contains("independence = true"));
        assert!(text.contains("z1 classes = {S1} {S2 S3} {A1} {A2}"));
        std::fs::remove_dir_all(&dir).ok();
    }
}

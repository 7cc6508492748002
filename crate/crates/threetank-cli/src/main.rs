use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use threetank_cli::commands::{
    cmd_batch, cmd_calibrate, cmd_report_defaults, cmd_simulate, CliError, Overrides, SimSummary,
};
use threetank_cli::config::FlatChoice;
use threetank_cli::runner::selected_channels;

/// Three-tank benchmark simulator and fault-diagnosis toolchain.
#[derive(Parser)]
#[command(name = "threetank", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory; falls back to THREETANK_OUT, then the scenario
    /// file, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed override; batch gives scenario i the seed N + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Residue channels to evaluate and export.
    #[arg(long = "flat-output", value_enum)]
    flat_output: Option<FlatChoice>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            flat_output: self.flat_output,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its time-indexed trace.
    Simulate {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run nominal scenarios and write calibrated residue thresholds.
    Calibrate {
        /// At least three nominal scenario TOML files.
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write sensitivity tables, signature matrices, and the isolability
    /// analysis at the reporting equilibrium.
    Report {
        /// Optional scenario TOML file supplying plant parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run several scenarios in order and write a merged summary.
    Batch {
        /// Scenario TOML files, run in listing order.
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Prints one line to stdout, exiting quietly when the consumer closed the
/// pipe.
fn out_line(text: String) {
    use std::io::Write;
    if writeln!(std::io::stdout(), "{text}").is_err() {
        std::process::exit(0);
    }
}

fn print_summary(summary: &SimSummary) {
    out_line(format!(
        "{}: {} samples, seed {}, terminal levels ({:.4}, {:.4}, {:.4}) m, \
         reference ({:.4}, {:.4}, {:.4}) m, {} clamped substeps",
        summary.name,
        summary.samples,
        summary.seed,
        summary.terminal_truth[0],
        summary.terminal_truth[1],
        summary.terminal_truth[2],
        summary.terminal_reference[0],
        summary.terminal_reference[1],
        summary.terminal_reference[2],
        summary.clamped_substeps,
    ));
    let counts: Vec<String> = selected_channels(summary.flat_output)
        .into_iter()
        .map(|c| format!("{}={}", threetank::fdi::CHANNEL_LABELS[c], summary.alarm_counts[c]))
        .collect();
    out_line(format!("  alarm samples: {}", counts.join(" ")));
    out_line(format!("  trace: {}", summary.trace_path.display()));
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, common } => {
            let summary = cmd_simulate(&config, &common.overrides())?;
            print_summary(&summary);
        }
        Command::Calibrate { config, common } => {
            let (thresholds, path) = cmd_calibrate(&config, &common.overrides())?;
            for (label, value) in threetank::fdi::CHANNEL_LABELS
                .iter()
                .zip(thresholds.values.iter())
            {
                out_line(format!("{label}: {value:.6e}"));
            }
            out_line(format!("thresholds: {}", path.display()));
        }
        Command::Report { config, common } => {
            let summary = cmd_report_defaults(config.as_deref(), &common.overrides())?;
            out_line(format!(
                "mu_z1 = {}, mu_z2 = {}, mu_stacked = {}, independence = {}",
                summary.report_z1.mu,
                summary.report_z2.mu,
                summary.report_stacked.mu,
                summary.independent
            ));
        }
        Command::Batch { config, common } => {
            let summaries = cmd_batch(&config, &common.overrides())?;
            for summary in &summaries {
                print_summary(summary);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

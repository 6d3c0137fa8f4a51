//! `migrid` — batch motor-imagery decoding pipeline.
//!
//! Subcommands mirror the workflow stages: `fetch` (or `synth`) to get
//! EDF data, `run` to grid-search every subject, then `aggregate`,
//! `stats`, and `report` over the emitted CSV files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 partial fetch.

mod commands;
mod config;
mod fetch;

use clap::{Args, Parser, Subcommand};
use config::{config_err, data_err, CliError};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

const DEFAULT_BASE_URL: &str = "https://physionet.org/files/eegmmidb/1.0.0";

#[derive(Parser)]
#[command(
    name = "migrid",
    version,
    about = "Motor-imagery EEG decoding: CSP + shrinkage LDA grid search over time windows and frequency bands"
)]
struct Cli {
    /// Plain key=value file whose entries override the flags below
    /// (keys: data_dir, out, subjects, runs, folds, seed, jobs, base_url).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory (default: $MIGRID_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Download dataset runs that are missing or invalid.
    Fetch {
        #[command(flatten)]
        data: DataArgs,
        /// Subjects, e.g. "1-109" or "1,2,5".
        #[arg(long, default_value = "1-109")]
        subjects: String,
        /// Runs to download.
        #[arg(long, default_value = "4,8,12")]
        runs: String,
        /// Base URL of the dataset mirror.
        #[arg(long, default_value = DEFAULT_BASE_URL)]
        base_url: String,
    },
    /// Generate synthetic subjects with a known discriminative effect.
    Synth {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "1-2")]
        subjects: String,
        /// Run ids used in the file names.
        #[arg(long, default_value = "4,8,12")]
        runs: String,
        #[arg(long, default_value_t = 16)]
        channels: usize,
        #[arg(long, default_value_t = 45)]
        trials_per_label: usize,
        /// Effect band "lo,hi" in Hz.
        #[arg(long, default_value = "10,14")]
        effect_band: String,
        /// Effect window "start,end" in seconds post-cue.
        #[arg(long, default_value = "0.5,2.5")]
        effect_window: String,
        /// Amplitude of the class-dependent component relative to the
        /// baseline band component (band power ratio = 1 + strength^2).
        #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
        effect_strength: f64,
        /// Broadband noise RMS in microvolts.
        #[arg(long, default_value_t = 10.0)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Cross-validate the full band x window grid per subject.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "1-109")]
        subjects: String,
        #[arg(long, default_value = "4,8,12")]
        runs: String,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory for results.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads across subjects.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Average per-subject results into a population table.
    Aggregate {
        /// results.csv produced by `run`.
        #[arg(long, default_value = "out/results.csv")]
        results: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Repeated-measures ANOVA and pairwise contrasts over the CSV.
    Stats {
        #[arg(long, default_value = "out/results.csv")]
        results: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Uncorrected significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Emit the population heatmap and per-subject optima.
    Report {
        #[arg(long, default_value = "out/results.csv")]
        results: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn overrides_for(cli: &Cli) -> Result<BTreeMap<String, String>, CliError> {
    match &cli.config {
        Some(path) => config::load_config_file(path).map_err(config_err),
        None => Ok(BTreeMap::new()),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let overrides = overrides_for(&cli)?;
    match cli.command {
        Command::Fetch {
            data,
            subjects,
            runs,
            base_url,
        } => {
            let data_dir =
                config::resolve_data_dir(&overrides, data.data_dir.as_deref()).map_err(config_err)?;
            let subjects = config::parse_id_list(&config::override_string(
                &overrides, "subjects", &subjects,
            ))
            .map_err(config_err)?;
            let runs =
                config::parse_id_list(&config::override_string(&overrides, "runs", &runs))
                    .map_err(config_err)?;
            let base_url = config::override_string(&overrides, "base_url", &base_url);
            let report = fetch::fetch_dataset(&base_url, &subjects, &runs, &data_dir)
                .map_err(data_err)?;
            println!(
                "fetched {}, skipped {}, failed {}",
                report.fetched.len(),
                report.skipped.len(),
                report.failed.len()
            );
            for (rel, reason) in &report.failed {
                eprintln!("failed {rel}: {reason}");
            }
            if !report.failed.is_empty() {
                return Err(CliError::PartialFetch {
                    failed: report.failed.len(),
                });
            }
            Ok(())
        }
        Command::Synth {
            data,
            subjects,
            runs,
            channels,
            trials_per_label,
            effect_band,
            effect_window,
            effect_strength,
            noise,
            seed,
        } => {
            let data_dir =
                config::resolve_data_dir(&overrides, data.data_dir.as_deref()).map_err(config_err)?;
            let params = commands::SynthParams {
                subjects: config::parse_id_list(&config::override_string(
                    &overrides, "subjects", &subjects,
                ))
                .map_err(config_err)?,
                runs: config::parse_id_list(&config::override_string(&overrides, "runs", &runs))
                    .map_err(config_err)?,
                channels,
                trials_per_label,
                effect_band: config::parse_pair(&effect_band).map_err(config_err)?,
                effect_window: config::parse_pair(&effect_window).map_err(config_err)?,
                effect_strength,
                noise_level: noise,
                seed: config::override_u64(&overrides, "seed", seed).map_err(config_err)?,
            };
            commands::synth_command(&data_dir, &params).map_err(data_err)
        }
        Command::Run {
            data,
            subjects,
            runs,
            folds,
            seed,
            out,
            jobs,
        } => {
            let data_dir =
                config::resolve_data_dir(&overrides, data.data_dir.as_deref()).map_err(config_err)?;
            let out = config::override_path(&overrides, "out", &out);
            let params = commands::RunParams {
                subjects: config::parse_id_list(&config::override_string(
                    &overrides, "subjects", &subjects,
                ))
                .map_err(config_err)?,
                runs: config::parse_id_list(&config::override_string(&overrides, "runs", &runs))
                    .map_err(config_err)?,
                k_folds: config::override_u32(&overrides, "folds", folds as u32)
                    .map_err(config_err)? as usize,
                seed: config::override_u64(&overrides, "seed", seed).map_err(config_err)?,
                jobs: config::override_u32(&overrides, "jobs", jobs as u32).map_err(config_err)?
                    as usize,
            };
            if params.k_folds < 2 {
                return Err(config_err(anyhow::anyhow!("--folds must be at least 2")));
            }
            commands::run_command(&data_dir, &out, &params).map_err(data_err)
        }
        Command::Aggregate { results, out } => {
            let out = config::override_path(&overrides, "out", &out);
            commands::aggregate_command(&results, &out).map_err(data_err)
        }
        Command::Stats {
            results,
            out,
            alpha,
        } => {
            let out = config::override_path(&overrides, "out", &out);
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(config_err(anyhow::anyhow!(
                    "--alpha must be in (0, 1), got {alpha}"
                )));
            }
            commands::stats_command(&results, &out, alpha).map_err(data_err)
        }
        Command::Report { results, out } => {
            let out = config::override_path(&overrides, "out", &out);
            commands::report_command(&results, &out).map_err(data_err)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("migrid: {}", error.message());
            ExitCode::from(error.exit_code())
        }
    }
}

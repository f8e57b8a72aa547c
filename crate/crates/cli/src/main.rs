use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Result};
use clap::{Args, Parser, Subcommand};
use modkf::simkit::NoiseKind;
use modkf_cli::*;

#[derive(Parser)]
#[command(name = "modkf", version, about = "Modulation-domain Kalman filter for noisy reverberant speech")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SceneOpts {
    /// Clean mono 16 kHz WAV.
    clean: PathBuf,
    #[arg(long)]
    t60: f64,
    #[arg(long, allow_hyphen_values = true)]
    drr: f64,
    /// Noise level relative to the reverberant speech, dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: f64,
    #[arg(long, default_value = "white")]
    noise: NoiseKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bins to record: `all` or a comma list. Defaults to the 1 kHz bin.
    #[arg(long)]
    bins: Option<String>,
}

impl SceneOpts {
    fn into_args(self) -> SceneArgs {
        SceneArgs {
            clean: self.clean,
            t60: self.t60,
            drr: self.drr,
            snr: self.snr,
            noise: self.noise,
            seed: self.seed,
            bins: self.bins,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a noisy reverberant recording.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        /// Write the per-frame filter state of the selected bins as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Bins to trace: `all` or a comma list. Defaults to the 1 kHz bin.
        #[arg(long)]
        bins: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Reverberate a clean recording in the STFT domain and add noise.
    Simulate {
        #[command(flatten)]
        scene: SceneOpts,
        output: PathBuf,
        /// Write the true component log-magnitudes of the selected bins.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Simulate a scene and record the filter's estimates against the truth.
    Track {
        #[command(flatten)]
        scene: SceneOpts,
        /// Trace CSV of the filter's estimates.
        output: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Convert T60 and DRR to the reverberation model parameters.
    Params {
        #[arg(long, allow_hyphen_values = true)]
        t60: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        drr: Option<f64>,
        /// Frame increment, seconds.
        #[arg(long = "L", default_value_t = 0.008)]
        frame_increment: f64,
        /// Print the reference room table.
        #[arg(long, conflicts_with_all = ["t60", "drr", "fig1"])]
        table: bool,
        /// Print β curves against T60 and DRR as CSV.
        #[arg(long, conflicts_with_all = ["t60", "drr"])]
        fig1: bool,
    },
    /// Compare a test recording with a clean reference.
    Eval {
        reference: PathBuf,
        test: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Enhance { input, output, trace, bins, config } => {
            let config = load_config(config.config.as_deref(), &config.overrides)?;
            cmd_enhance(&EnhanceArgs { input, output, trace, bins, config })
        }
        Command::Simulate { scene, output, truth } => cmd_simulate(&scene.into_args(), &output, truth.as_deref()),
        Command::Track { scene, output, truth, config } => {
            let config = load_config(config.config.as_deref(), &config.overrides)?;
            cmd_track(&scene.into_args(), &config, &output, truth.as_deref())
        }
        Command::Params { t60, drr, frame_increment, table, fig1 } => {
            if table {
                print(&table_text(frame_increment)?)
            } else if fig1 {
                print(&fig1_csv(frame_increment)?)
            } else {
                ensure!(t60.is_some() && drr.is_some(), "need --t60 and --drr, or --table, or --fig1");
                print(&param_row(t60.unwrap(), drr.unwrap(), frame_increment)?.display())
            }
        }
        Command::Eval { reference, test, json } => {
            let m = cmd_eval(&reference, &test)?;
            print(&if json { metrics_json(&m) } else { metrics_text(&m) })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvqkd_core::cascade::BlockLength;
use cvqkd_core::experiment::{ExperimentConfig, REFERENCE_DEAD_TIME_FRACTION};
use cvqkd_core::info::AdvantageEstimator;
use cvqkd_core::protocol::{ThresholdSpec, ThresholdUnits};
use std::path::PathBuf;

/// Environment variable read for `--seed` when the flag is absent.
pub const SEED_ENV: &str = "CVQKD_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "cvqkd",
    version,
    about = "Coherent-state polarization QKD with post-selection: simulation and key distillation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a seeded session end to end and write the report and artifacts.
    Run(RunArgs),
    /// Sweep the channel transmission and tabulate the model predictions.
    Scan(ScanArgs),
    /// Emit scatter-plot data (Q-function or dual-detector correlation).
    Scatter(ScatterArgs),
    /// Check the Stokes-operator algebra on a truncated Fock space.
    Verify(VerifyArgs),
    /// Print the effective configuration as TOML.
    Config(ConfigOnly),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Units {
    Outcome,
    AlphaSent,
    AlphaReceived,
}

impl From<Units> for ThresholdUnits {
    fn from(u: Units) -> Self {
        match u {
            Units::Outcome => ThresholdUnits::Outcome,
            Units::AlphaSent => ThresholdUnits::AlphaSent,
            Units::AlphaReceived => ThresholdUnits::AlphaReceived,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Estimator {
    PerEvent,
    Aggregate,
}

impl From<Estimator> for AdvantageEstimator {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::PerEvent => AdvantageEstimator::PerEvent,
            Estimator::Aggregate => AdvantageEstimator::Aggregate,
        }
    }
}

/// Flags that override fields of the configuration file.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub excess_noise: Option<f64>,
    #[arg(long, short = 'n')]
    pub n_events: Option<u64>,
    /// Seconds per event.
    #[arg(long)]
    pub event_duration: Option<f64>,
    #[arg(long, conflicts_with = "reference_duty_cycle")]
    pub dead_time_fraction: Option<f64>,
    /// Dead time calibrated to the published 1069 bit/s raw rate.
    #[arg(long)]
    pub reference_duty_cycle: bool,
    /// Master seed.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Simulate a passive beam-splitting eavesdropper.
    #[arg(long)]
    pub eve: bool,
    /// `auto` or a number (see --threshold-units).
    #[arg(long, conflicts_with = "yield_target")]
    pub threshold: Option<String>,
    #[arg(long, value_enum, default_value = "outcome")]
    pub threshold_units: Units,
    /// Pick the threshold whose model yield equals this fraction.
    #[arg(long)]
    pub yield_target: Option<f64>,
    #[arg(long)]
    pub passes: Option<u32>,
    /// `auto` or a block length.
    #[arg(long)]
    pub initial_block: Option<String>,
    #[arg(long)]
    pub cascade_seed: Option<u64>,
    #[arg(long)]
    pub safety_margin: Option<usize>,
    #[arg(long, value_enum)]
    pub estimator: Option<Estimator>,
    /// Stop after sifting.
    #[arg(long)]
    pub no_cascade: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Human-readable report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Machine-readable report (JSON).
    #[arg(long)]
    pub report_json: Option<PathBuf>,
    /// Concatenated wire frames of the session.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Per-event CSV.
    #[arg(long)]
    pub events_csv: Option<PathBuf>,
    /// Write report.txt, report.json, transcript.bin and events.csv here
    /// unless a path is given explicitly.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated transmissions; defaults to 0.1, 0.2, ..., 1.0.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Qfunction,
    DualDetector,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Number of points.
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
    /// Dual-detector mode without modulation.
    #[arg(long)]
    pub unmodulated: bool,
    /// CSV destination; stdout when absent.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 8)]
    pub n_max: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ConfigOnly {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid value for --{flag}: {reason}")]
pub struct FlagError {
    pub flag: &'static str,
    pub reason: String,
}

impl ConfigArgs {
    /// Applies the flags on top of `cfg`.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), FlagError> {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            alpha,
            eta,
            excess_noise,
            n_events,
            event_duration,
            dead_time_fraction,
            seed
        );
        if self.reference_duty_cycle {
            cfg.dead_time_fraction = REFERENCE_DEAD_TIME_FRACTION;
        }
        if self.eve {
            cfg.eve = true;
        }
        if let Some(t) = &self.threshold {
            cfg.threshold = if t.eq_ignore_ascii_case("auto") {
                ThresholdSpec::Auto
            } else {
                let value = t.parse::<f64>().map_err(|e| FlagError {
                    flag: "threshold",
                    reason: format!("expected `auto` or a number: {e}"),
                })?;
                ThresholdSpec::Fixed {
                    value,
                    units: self.threshold_units.into(),
                }
            };
        }
        if let Some(target) = self.yield_target {
            cfg.threshold = ThresholdSpec::Yield { target };
        }
        if let Some(p) = self.passes {
            cfg.cascade.passes = p;
        }
        if let Some(b) = &self.initial_block {
            cfg.cascade.initial_block = if b.eq_ignore_ascii_case("auto") {
                BlockLength::Auto
            } else {
                BlockLength::Fixed(b.parse().map_err(|e| FlagError {
                    flag: "initial-block",
                    reason: format!("expected `auto` or a count: {e}"),
                })?)
            };
        }
        if let Some(s) = self.cascade_seed {
            cfg.cascade.seed = Some(s);
        }
        if let Some(m) = self.safety_margin {
            cfg.cascade.safety_margin = m;
        }
        if let Some(e) = self.estimator {
            cfg.cascade.estimator = e.into();
        }
        if self.no_cascade {
            cfg.cascade.enabled = false;
        }
        Ok(())
    }
}

impl OutputArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let out = &mut cfg.output;
        if let Some(dir) = &self.out_dir {
            out.report.get_or_insert_with(|| dir.join("report.txt"));
            out.report_json
                .get_or_insert_with(|| dir.join("report.json"));
            out.transcript
                .get_or_insert_with(|| dir.join("transcript.bin"));
            out.events_csv.get_or_insert_with(|| dir.join("events.csv"));
        }
        for (flag, slot) in [
            (&self.report, &mut out.report),
            (&self.report_json, &mut out.report_json),
            (&self.transcript, &mut out.transcript),
            (&self.events_csv, &mut out.events_csv),
        ] {
            if let Some(p) = flag {
                *slot = Some(p.clone());
            }
        }
    }
}

mod args;

use args::{Cli, Command, ConfigArgs, Mode};
use clap::Parser;
use cvqkd_core::experiment::{
    self, default_eta_grid, scan_csv, write_events_csv, ExperimentConfig, ScatterMode,
};
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

enum Failure {
    Config(String),
    Check(String),
}

impl Failure {
    fn check(e: impl std::fmt::Display) -> Self {
        Failure::Check(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a.config, &a.output),
        Command::Scan(a) => cmd_scan(&a),
        Command::Scatter(a) => cmd_scatter(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Config(a) => load(&a.config).map(|mut cfg| {
            a.output.apply(&mut cfg);
            print!("{cfg}");
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    args.apply(&mut cfg)
        .map_err(|e| Failure::Config(e.to_string()))?;
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<File, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::check(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map_err(|e| Failure::check(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    create(path)?
        .write_all(bytes)
        .map_err(|e| Failure::check(format!("{}: {e}", path.display())))
}

fn cmd_run(config: &ConfigArgs, output: &args::OutputArgs) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    output.apply(&mut cfg);
    let out = experiment::run(&cfg).map_err(Failure::check)?;
    let report = &out.report;
    let text = report.to_text();
    print!("{text}");
    let paths = &cfg.output;
    if let Some(p) = &paths.report {
        write_file(p, text.as_bytes())?;
    }
    if let Some(p) = &paths.report_json {
        write_file(p, report.to_json().as_bytes())?;
    }
    if let Some(p) = &paths.transcript {
        write_file(p, out.session.transcript.as_bytes())?;
    }
    if let Some(p) = &paths.events_csv {
        write_events_csv(&out.session, create(p)?)
            .map_err(|e| Failure::check(format!("{}: {e}", p.display())))?;
    }
    if report.degenerate {
        return Err(Failure::Check("degenerate run: no decided events".into()));
    }
    if let Some(l) = &report.leakage {
        if !l.verified {
            return Err(Failure::Check(
                "reconciliation failed: verification hash mismatch".into(),
            ));
        }
    }
    if report.final_keys_match == Some(false) {
        return Err(Failure::Check("final keys differ".into()));
    }
    Ok(())
}

fn cmd_scan(a: &args::ScanArgs) -> Result<(), Failure> {
    let cfg = load(&a.config)?;
    let grid = a.grid.clone().unwrap_or_else(default_eta_grid);
    let rows = experiment::scan(&cfg, &grid).map_err(|e| match e {
        experiment::ExperimentError::Grid(_) => Failure::Config(e.to_string()),
        other => Failure::check(other),
    })?;
    if let Some(p) = &a.csv {
        write_file(p, scan_csv(&rows).as_bytes())?;
    }
    if a.json {
        println!("{}", to_json(&rows)?);
        return Ok(());
    }
    println!(
        "{:>6} {:>10} {:>8} {:>10} {:>8} {:>10} {:>10} {:>8} {:>10}",
        "eta", "threshold", "yield", "post_err", "I_AE", "adv", "adv_aggr", "leak", "final"
    );
    for r in &rows {
        println!(
            "{:>6.3} {:>10.6} {:>8.4} {:>10.6} {:>8.4} {:>10.6} {:>10.6} {:>8.4} {:>10.6}",
            r.eta,
            r.threshold,
            r.yield_fraction,
            r.post_error,
            r.eve_info,
            r.advantage,
            r.advantage_aggregate,
            r.leak_fraction,
            r.final_fraction
        );
    }
    Ok(())
}

fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(Failure::check)
}

fn cmd_scatter(a: &args::ScatterArgs) -> Result<(), Failure> {
    let cfg = load(&a.config)?;
    let mode = match a.mode {
        Mode::Qfunction => ScatterMode::QFunction,
        Mode::DualDetector => ScatterMode::DualDetector {
            modulated: !a.unmodulated,
        },
    };
    let s = experiment::scatter(&cfg, mode, a.points).map_err(Failure::check)?;
    match &a.output {
        Some(p) => s
            .write_csv(create(p)?)
            .map_err(|e| Failure::check(format!("{}: {e}", p.display())))?,
        None => s.write_csv(io::stdout().lock()).map_err(Failure::check)?,
    }
    if let Some(rho) = s.correlation {
        let bound = 3.0 / (a.points as f64).sqrt();
        eprintln!(
            "correlation {rho:.6} over {} points (3/sqrt(N) = {bound:.6})",
            a.points
        );
    }
    Ok(())
}

fn cmd_verify(a: &args::VerifyArgs) -> Result<(), Failure> {
    let report = experiment::verify(a.n_max, a.seed).map_err(Failure::check)?;
    if a.json {
        println!("{}", to_json(&report)?);
    } else {
        print!("{}", report.to_text());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check("algebra check beyond tolerance".into()))
    }
}

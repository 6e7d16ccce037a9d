//! Seeded experiments behind the command-line tool: full sessions with
//! Table-style reports, loss scans, scatter data and the Fock-space
//! verification suite.

mod config;
mod report;

pub use config::{
    CascadeSettings, ConfigError, ExperimentConfig, OutputPaths, REFERENCE_DEAD_TIME_FRACTION,
};
pub use report::{
    reference_row, AdvantageReport, LeakageReport, ReferenceComparison, ReferenceDelta,
    ReferenceRow, SessionReport, ThresholdReport, ERROR_FLAG_THRESHOLD, REFERENCE_ROWS,
};

use crate::cascade::{reconcile_local, CascadeError};
use crate::channel::{
    apply_loss, dual_detector_experiment, measure, Basis, ChannelError, ChannelParams, Signal,
};
use crate::info::{selection_stats, InfoError, InfoParams};
use crate::protocol::{run_local, signed, SessionAbort, SessionOutput};
use crate::rng::{streams, RngStream};
use crate::stokes::{
    antipodal_overlap, bridge_allowance, coherent_state, overlap, random_coherent_state,
    FockCutoff, StokesAlgebra, StokesAxis, StokesError,
};
use num_complex::Complex64;
use serde::Serialize;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Session(#[from] SessionAbort),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error("eta grid value {0} outside (0, 1]")]
    Grid(f64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub struct RunOutput {
    pub report: SessionReport,
    pub session: SessionOutput,
}

/// Full pipeline for one configuration.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    let session = run_local(&cfg.session_config()?)?;
    Ok(RunOutput {
        report: SessionReport::build(cfg, &session),
        session,
    })
}

/// `event_id,basis,x,selected,alice_bit,bob_bit`, one line per event.
/// `alice_bit` is Alice's sign in Bob's basis; `bob_bit` is empty when
/// `x == 0`.
pub fn write_events_csv<W: Write>(out: &SessionOutput, w: W) -> io::Result<()> {
    let mut w = io::BufWriter::new(w);
    writeln!(w, "event_id,basis,x,selected,alice_bit,bob_bit")?;
    for r in &out.measured {
        let alice = out.sent[r.event_id as usize].bit(r.basis) as u8;
        let bob = r.bit.map_or(String::new(), |b| (b as u8).to_string());
        writeln!(
            w,
            "{},{},{:?},{},{},{}",
            r.event_id, r.basis, r.x, r.selected as u8, alice, bob
        )?;
    }
    w.flush()
}

/// Ten-point transmission grid 0.1, 0.2, …, 1.0.
pub fn default_eta_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Key length used to estimate Cascade leakage in a scan.
pub const SCAN_CASCADE_BITS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub eta: f64,
    pub threshold: f64,
    pub yield_fraction: f64,
    pub post_error: f64,
    pub eve_info: f64,
    pub advantage: f64,
    pub advantage_aggregate: f64,
    /// Disclosed fraction of a seeded Cascade run at `post_error`.
    pub leak_fraction: f64,
    /// `yield × (1 − leak) × advantage`, floored at zero: final key bits
    /// per event.
    pub final_fraction: f64,
}

/// Model sweep over transmissions at the configured amplitude, noise,
/// threshold mode and Cascade settings.
pub fn scan(cfg: &ExperimentConfig, grid: &[f64]) -> Result<Vec<ScanRow>, ExperimentError> {
    cfg.validate()?;
    let sigma2 = 0.5 + cfg.excess_noise;
    let cascade = cfg.cascade_config();
    grid.iter()
        .map(|&eta| {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(ExperimentError::Grid(eta));
            }
            let params = InfoParams::new(cfg.alpha, eta, sigma2)?;
            let t = cfg.threshold.resolve(&params)?;
            let m = selection_stats(&params, t)?;
            let leak_fraction = simulated_leak(m.post_error, &cascade)?;
            let advantage = m.advantage_by(cfg.cascade.estimator);
            Ok(ScanRow {
                eta,
                threshold: t,
                yield_fraction: m.yield_fraction,
                post_error: m.post_error,
                eve_info: m.eve_info,
                advantage: m.advantage,
                advantage_aggregate: m.advantage_aggregate,
                leak_fraction,
                final_fraction: (m.yield_fraction * (1.0 - leak_fraction) * advantage).max(0.0),
            })
        })
        .collect()
}

fn simulated_leak(p: f64, cascade: &crate::cascade::CascadeConfig) -> Result<f64, CascadeError> {
    if !(p > 0.0 && p < 0.5) {
        return Ok(if p <= 0.0 { 0.0 } else { 1.0 });
    }
    let mut rng = RngStream::new(cascade.seed, streams::SCATTER + 100);
    let alice: Vec<bool> = (0..SCAN_CASCADE_BITS).map(|_| rng.bit()).collect();
    let bob: Vec<bool> = alice.iter().map(|&b| b ^ (rng.uniform() < p)).collect();
    Ok(reconcile_local(&alice, &bob, cascade, p)?.disclosed_fraction())
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut s = String::from(
        "eta,threshold,yield,post_error,eve_info,advantage,advantage_aggregate,leak_fraction,final_fraction\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
            r.eta,
            r.threshold,
            r.yield_fraction,
            r.post_error,
            r.eve_info,
            r.advantage,
            r.advantage_aggregate,
            r.leak_fraction,
            r.final_fraction
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScatterMode {
    /// Simultaneous S2/S3 readout behind a 50:50 split.
    QFunction,
    /// Two S2 detectors behind a 50:50 split.
    DualDetector { modulated: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub header: &'static str,
    pub rows: Vec<(u8, f64, f64)>,
    pub correlation: Option<f64>,
}

impl Scatter {
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = io::BufWriter::new(w);
        writeln!(w, "{}", self.header)?;
        for (tag, a, b) in &self.rows {
            writeln!(w, "{tag},{a:?},{b:?}")?;
        }
        w.flush()
    }
}

/// Point cloud for one of the two scatter experiments. The channel loss of
/// `cfg` is applied before the split in Q-function mode.
pub fn scatter(
    cfg: &ExperimentConfig,
    mode: ScatterMode,
    n: usize,
) -> Result<Scatter, ExperimentError> {
    cfg.validate()?;
    let mut rng = RngStream::new(cfg.seed, streams::SCATTER);
    match mode {
        ScatterMode::QFunction => {
            let ch = cfg.channel()?;
            let half = ChannelParams::lossy(0.5)?;
            let rows = (0..n)
                .map(|_| {
                    let (b2, b3) = (rng.bit(), rng.bit());
                    let sig = Signal::new(signed(b2, cfg.alpha), signed(b3, cfg.alpha));
                    let split = apply_loss(apply_loss(sig, &ch), &half);
                    let x2 = measure(split, Basis::S2, cfg.excess_noise, &mut rng).x;
                    let x3 = measure(split, Basis::S3, cfg.excess_noise, &mut rng).x;
                    (b2 as u8 * 2 + b3 as u8, x2, x3)
                })
                .collect();
            Ok(Scatter {
                header: "state,s2,s3",
                rows,
                correlation: None,
            })
        }
        ScatterMode::DualDetector { modulated } => {
            let run = dual_detector_experiment(cfg.alpha, n, modulated, &mut rng)?;
            let rows = run
                .detector1
                .iter()
                .zip(&run.detector2)
                .map(|(&a, &b)| (modulated as u8, a, b))
                .collect();
            Ok(Scatter {
                header: "modulated,detector1,detector2",
                rows,
                correlation: Some(run.correlation),
            })
        }
    }
}

pub const VERIFY_MIN_CUTOFF: usize = 4;
pub const VERIFY_STATES: usize = 100;
pub const OVERLAP_TOLERANCE: f64 = 1e-6;
pub const HERMITICITY_TOLERANCE: f64 = 1e-12;
pub const COMMUTATOR_TOLERANCE: f64 = 1e-10;
pub const UNCERTAINTY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("truncation inadequate: n_max = {n_max} is below the suite minimum of {min}")]
    CutoffTooSmall { n_max: usize, min: usize },
    #[error(transparent)]
    Stokes(#[from] StokesError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    /// Measured deviation (or, for ratio checks, deviation over allowance).
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub n_max: usize,
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("algebra verification, n_max = {}\n", self.n_max);
        for c in &self.checks {
            s.push_str(&format!(
                "  [{}] {:<44} {:>12.3e}  (limit {:.1e})\n",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.value,
                c.limit
            ));
        }
        s
    }
}

fn check(name: impl Into<String>, value: f64, limit: f64, passed: bool) -> VerifyCheck {
    VerifyCheck {
        name: name.into(),
        value,
        limit,
        passed,
    }
}

/// Runs the overlap, Hermiticity, commutator, uncertainty and shot-noise
/// checks at cutoff `n_max`.
pub fn verify(n_max: usize, seed: u64) -> Result<VerifyReport, VerifyError> {
    if n_max < VERIFY_MIN_CUTOFF {
        return Err(VerifyError::CutoffTooSmall {
            n_max,
            min: VERIFY_MIN_CUTOFF,
        });
    }
    let cut = FockCutoff::new(n_max)?;
    let alg = StokesAlgebra::new(cut);
    let mut checks = Vec::new();

    let zero = Complex64::new(0.0, 0.0);
    let plus = coherent_state(zero, Complex64::new(0.6, 0.0), cut)?;
    let minus = coherent_state(zero, Complex64::new(-0.6, 0.0), cut)?;
    let f = overlap(&plus, &minus)?;
    let dev = (f - antipodal_overlap(0.6)).norm();
    let allowed = OVERLAP_TOLERANCE + plus.norm_deficit();
    checks.push(check(
        "overlap |<0.6|-0.6>| vs e^-0.72",
        dev,
        allowed,
        dev < allowed,
    ));

    let herm = alg
        .operators()
        .all()
        .iter()
        .map(|op| op.hermiticity_defect())
        .fold(0.0, f64::max);
    checks.push(check(
        "hermiticity of S0..S3",
        herm,
        HERMITICITY_TOLERANCE,
        herm <= HERMITICITY_TOLERANCE,
    ));

    for (k, l) in [
        (StokesAxis::S1, StokesAxis::S2),
        (StokesAxis::S2, StokesAxis::S3),
        (StokesAxis::S3, StokesAxis::S1),
    ] {
        let d = alg.commutator_deviation(k, l)?;
        checks.push(check(
            format!("commutator [{k},{l}] on protected subspace"),
            d,
            COMMUTATOR_TOLERANCE,
            d < COMMUTATOR_TOLERANCE,
        ));
    }

    let mut rng = RngStream::new(seed, streams::VERIFY);
    let mut worst_violation: f64 = 0.0;
    let mut worst_bridge: f64 = 0.0;
    let ops = alg.operators();
    for _ in 0..VERIFY_STATES {
        let state = random_coherent_state(cut, &mut rng);
        for k in StokesAxis::ALL {
            for l in StokesAxis::ALL {
                if k != l {
                    let u = alg.uncertainty(&state, k, l)?;
                    worst_violation = worst_violation.max(-u.slack());
                }
            }
        }
        let s0 = state.expectation(&ops.s0).re;
        let allowance = bridge_allowance(&state);
        for op in [&ops.s2, &ops.s3] {
            worst_bridge = worst_bridge.max((state.variance(op) - s0).abs() / allowance);
        }
    }
    checks.push(check(
        format!("uncertainty violation over {VERIFY_STATES} coherent states"),
        worst_violation,
        UNCERTAINTY_TOLERANCE,
        worst_violation <= UNCERTAINTY_TOLERANCE,
    ));
    checks.push(check(
        "shot-noise bridge V(S2),V(S3) vs <S0> (ratio)",
        worst_bridge,
        1.0,
        worst_bridge <= 1.0,
    ));
    Ok(VerifyReport { n_max, checks })
}

use super::config::ExperimentConfig;
use crate::info::{mean_error, AdvantageEstimator};
use crate::protocol::SessionOutput;
use serde::Serialize;
use std::fmt::Write;

/// One column of the published rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub label: &'static str,
    pub eta: f64,
    pub raw_rate: f64,
    pub pre_error: f64,
    pub post_rate: f64,
    pub post_error: f64,
    /// In units of the coherent amplitude.
    pub threshold: f64,
    pub advantage: f64,
    pub ec_rate: f64,
    pub final_rate: f64,
}

pub const REFERENCE_ROWS: [ReferenceRow; 2] = [
    ReferenceRow {
        label: "21% loss",
        eta: 0.79,
        raw_rate: 1069.0,
        pre_error: 0.220,
        post_rate: 415.0,
        post_error: 0.060,
        threshold: 1.0,
        advantage: 0.76,
        ec_rate: 249.0,
        final_rate: 189.0,
    },
    ReferenceRow {
        label: "64% loss",
        eta: 0.36,
        raw_rate: 1096.0,
        pre_error: 0.273,
        post_rate: 165.0,
        post_error: 0.076,
        threshold: 2.3,
        advantage: 0.49,
        ec_rate: 80.0,
        final_rate: 39.0,
    },
];

/// Error-rate gaps beyond this many absolute units are flagged.
pub const ERROR_FLAG_THRESHOLD: f64 = 0.015;

pub fn reference_row(alpha: f64, eta: f64) -> Option<&'static ReferenceRow> {
    if (alpha - 0.6).abs() > 1e-9 {
        return None;
    }
    REFERENCE_ROWS.iter().find(|r| (r.eta - eta).abs() < 1e-9)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceDelta {
    pub quantity: &'static str,
    pub model: f64,
    pub reference: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceComparison {
    pub column: &'static str,
    pub deltas: Vec<ReferenceDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub outcome: f64,
    /// Threshold divided by Alice's amplitude `α`.
    pub alpha_sent: f64,
    /// Threshold divided by the received amplitude `α√η`.
    pub alpha_received: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdvantageReport {
    pub per_event: Option<f64>,
    pub aggregate: Option<f64>,
    pub estimator: AdvantageEstimator,
    pub eve_info: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageReport {
    pub parity_bits: u64,
    pub hash_bits: u64,
    pub total_bits: u64,
    pub per_pass: Vec<u64>,
    pub disclosed_fraction: f64,
    pub initial_block: usize,
    pub corrections: usize,
    pub verified: bool,
    pub residual_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionReport {
    pub alpha: f64,
    pub eta: f64,
    pub excess_noise: f64,
    pub n_events: u64,
    pub seed: u64,
    pub event_duration: f64,
    pub dead_time_fraction: f64,
    pub duration_s: f64,

    pub raw_bits: usize,
    pub raw_rate: f64,
    pub pre_error: f64,
    pub pre_error_model: f64,

    pub post_bits: usize,
    pub post_rate: f64,
    pub post_error: f64,
    pub post_error_model: Option<f64>,
    pub yield_model: Option<f64>,
    pub eve_error: Option<f64>,

    pub threshold: ThresholdReport,
    pub advantage: AdvantageReport,

    /// Corrected bits net of disclosed parities and tags.
    pub ec_bits: usize,
    pub ec_rate: f64,
    pub leakage: Option<LeakageReport>,

    pub final_bits: usize,
    pub final_rate: f64,
    pub final_keys_match: Option<bool>,

    pub reference: Option<ReferenceComparison>,
    /// No events, or no event with a defined bit.
    pub degenerate: bool,
}

impl SessionReport {
    pub fn build(cfg: &ExperimentConfig, out: &SessionOutput) -> SessionReport {
        let s = &out.summary;
        let sigma2 = 0.5 + cfg.excess_noise;
        let received = cfg.alpha * cfg.eta.sqrt();
        let (ec_bits, leakage) = match &s.reconciliation {
            Some(r) => (
                r.corrected_length
                    .saturating_sub(r.ledger.total_disclosed() as usize),
                Some(LeakageReport {
                    parity_bits: r.ledger.parity_bits_disclosed,
                    hash_bits: r.ledger.hash_bits_disclosed,
                    total_bits: r.ledger.total_disclosed(),
                    per_pass: r.ledger.per_pass.clone(),
                    disclosed_fraction: if r.corrected_length == 0 {
                        0.0
                    } else {
                        r.ledger.total_disclosed() as f64 / r.corrected_length as f64
                    },
                    initial_block: r.initial_block,
                    corrections: r.corrections,
                    verified: r.verified,
                    residual_errors: r.residual_errors,
                }),
            ),
            None => (0, None),
        };
        let mut report = SessionReport {
            alpha: cfg.alpha,
            eta: cfg.eta,
            excess_noise: cfg.excess_noise,
            n_events: cfg.n_events,
            seed: cfg.seed,
            event_duration: cfg.event_duration,
            dead_time_fraction: cfg.dead_time_fraction,
            duration_s: cfg.duration(),
            raw_bits: s.decided,
            raw_rate: cfg.rate(s.decided),
            pre_error: s.pre_error(),
            pre_error_model: mean_error(received, sigma2).unwrap_or(0.5),
            post_bits: s.selected,
            post_rate: cfg.rate(s.selected),
            post_error: s.post_error(),
            post_error_model: s.model.map(|m| m.post_error),
            yield_model: s.model.map(|m| m.yield_fraction),
            eve_error: s.eve_error(),
            threshold: ThresholdReport {
                outcome: s.threshold,
                alpha_sent: s.threshold / cfg.alpha,
                alpha_received: s.threshold / received,
            },
            advantage: AdvantageReport {
                per_event: s.model.map(|m| m.advantage),
                aggregate: s.model.map(|m| m.advantage_aggregate),
                estimator: cfg.cascade.estimator,
                eve_info: s.model.map(|m| m.eve_info),
            },
            ec_bits,
            ec_rate: cfg.rate(ec_bits),
            leakage,
            final_bits: s.final_key_length,
            final_rate: cfg.rate(s.final_key_length),
            final_keys_match: s.final_keys_match,
            reference: None,
            degenerate: cfg.n_events == 0 || s.decided == 0,
        };
        if !report.degenerate {
            report.reference = reference_row(cfg.alpha, cfg.eta).map(|row| report.compare(row));
        }
        report
    }

    fn compare(&self, row: &ReferenceRow) -> ReferenceComparison {
        let advantage = match self.advantage.estimator {
            AdvantageEstimator::PerEvent => self.advantage.per_event,
            AdvantageEstimator::Aggregate => self.advantage.aggregate,
        };
        let mut deltas = Vec::new();
        let mut push = |quantity, model: f64, reference: f64, is_error: bool| {
            let delta = model - reference;
            let flag = (is_error && delta.abs() > ERROR_FLAG_THRESHOLD).then(|| {
                format!(
                    "ideal model differs from the measured value by {:+.1} percentage points",
                    100.0 * delta
                )
            });
            deltas.push(ReferenceDelta {
                quantity,
                model,
                reference,
                delta,
                flag,
            });
        };
        push("raw_rate", self.raw_rate, row.raw_rate, false);
        push("pre_error", self.pre_error, row.pre_error, true);
        push("post_rate", self.post_rate, row.post_rate, false);
        push("post_error", self.post_error, row.post_error, true);
        push(
            "threshold_alpha_sent",
            self.threshold.alpha_sent,
            row.threshold,
            false,
        );
        push(
            "threshold_alpha_received",
            self.threshold.alpha_received,
            row.threshold,
            false,
        );
        push(
            "advantage",
            advantage.unwrap_or(f64::NAN),
            row.advantage,
            false,
        );
        push("ec_rate", self.ec_rate, row.ec_rate, false);
        push("final_rate", self.final_rate, row.final_rate, false);
        ReferenceComparison {
            column: row.label,
            deltas,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(t, "session report");
        let _ = writeln!(
            t,
            "  alpha {}  eta {}  excess_noise {}  events {}  seed {}",
            self.alpha, self.eta, self.excess_noise, self.n_events, self.seed
        );
        let _ = writeln!(
            t,
            "  event duration {} s  dead time {:.4}  span {:.3} s",
            self.event_duration, self.dead_time_fraction, self.duration_s
        );
        let _ = writeln!(t);
        let _ = writeln!(t, "  {:<34}{:>14}{:>14}", "quantity", "value", "model");
        let mut row = |name: &str, value: String, model: String| {
            let _ = writeln!(t, "  {name:<34}{value:>14}{model:>14}");
        };
        row("raw bits", self.raw_bits.to_string(), "-".into());
        row(
            "raw rate [bit/s]",
            format!("{:.2}", self.raw_rate),
            "-".into(),
        );
        row(
            "errors before post selection",
            format!("{:.6}", self.pre_error),
            format!("{:.6}", self.pre_error_model),
        );
        row(
            "threshold [outcome units]",
            format!("{:.6}", self.threshold.outcome),
            "-".into(),
        );
        row(
            "threshold [alpha sent]",
            format!("{:.6}", self.threshold.alpha_sent),
            "-".into(),
        );
        row(
            "threshold [alpha received]",
            format!("{:.6}", self.threshold.alpha_received),
            "-".into(),
        );
        row(
            "bits after post selection",
            self.post_bits.to_string(),
            opt(self.yield_model.map(|y| y * self.n_events as f64)),
        );
        row(
            "rate after post selection",
            format!("{:.2}", self.post_rate),
            "-".into(),
        );
        row(
            "errors after post selection",
            format!("{:.6}", self.post_error),
            opt(self.post_error_model),
        );
        if let Some(e) = self.eve_error {
            row("eve errors on kept events", format!("{e:.6}"), "-".into());
        }
        row(
            "eve information I_AE",
            "-".into(),
            opt(self.advantage.eve_info),
        );
        row(
            "advantage (per event)",
            "-".into(),
            opt(self.advantage.per_event),
        );
        row(
            "advantage (aggregate)",
            "-".into(),
            opt(self.advantage.aggregate),
        );
        row(
            "advantage estimator",
            format!("{:?}", self.advantage.estimator),
            "-".into(),
        );
        if let Some(l) = &self.leakage {
            row(
                "cascade initial block",
                l.initial_block.to_string(),
                "-".into(),
            );
            row(
                "parity bits disclosed",
                l.parity_bits.to_string(),
                "-".into(),
            );
            row("hash bits disclosed", l.hash_bits.to_string(), "-".into());
            row(
                "disclosed fraction",
                format!("{:.6}", l.disclosed_fraction),
                "-".into(),
            );
            row("corrections", l.corrections.to_string(), "-".into());
            row("verification hash", l.verified.to_string(), "-".into());
            row("residual errors", l.residual_errors.to_string(), "-".into());
        }
        row(
            "bits after error correction",
            self.ec_bits.to_string(),
            "-".into(),
        );
        row(
            "rate after error correction",
            format!("{:.2}", self.ec_rate),
            "-".into(),
        );
        row(
            "bits after privacy amplification",
            self.final_bits.to_string(),
            "-".into(),
        );
        row(
            "rate after privacy amplification",
            format!("{:.2}", self.final_rate),
            "-".into(),
        );
        if let Some(m) = self.final_keys_match {
            row("final keys match", m.to_string(), "-".into());
        }
        if let Some(p) = &self.reference {
            let _ = writeln!(t);
            let _ = writeln!(t, "  published reference ({})", p.column);
            let _ = writeln!(
                t,
                "  {:<28}{:>14}{:>14}{:>14}",
                "quantity", "this run", "published", "delta"
            );
            for d in &p.deltas {
                let _ = writeln!(
                    t,
                    "  {:<28}{:>14.4}{:>14.4}{:>+14.4}",
                    d.quantity, d.model, d.reference, d.delta
                );
                if let Some(f) = &d.flag {
                    let _ = writeln!(t, "    ! {f}");
                }
            }
        }
        if self.degenerate {
            let _ = writeln!(t);
            let _ = writeln!(t, "  degenerate run: no decided events");
        }
        t
    }
}

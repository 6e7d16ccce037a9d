use crate::cascade::{BlockLength, CascadeConfig};
use crate::channel::ChannelParams;
use crate::info::AdvantageEstimator;
use crate::protocol::{DistillConfig, SessionConfig, ThresholdSpec};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Dead-time fraction that turns 2000 events/s into the 1069 bit/s raw
/// rate of the 21%-loss measurement.
pub const REFERENCE_DEAD_TIME_FRACTION: f64 = 1.0 - 1069.0 / 2000.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", origin.display())]
    Io {
        origin: PathBuf,
        source: std::io::Error,
    },
    #[error("{}", render_parse(.origin, .source))]
    Parse {
        origin: Option<PathBuf>,
        source: Box<toml::de::Error>,
    },
    #[error("{}", render_invalid(.origin, .line, .field, .reason))]
    Invalid {
        origin: Option<PathBuf>,
        line: Option<usize>,
        field: &'static str,
        reason: String,
    },
    #[error("cannot encode config: {0}")]
    Encode(#[from] toml::ser::Error),
}

fn render_parse(origin: &Option<PathBuf>, source: &toml::de::Error) -> String {
    let name = origin
        .as_ref()
        .map_or_else(|| "<config>".to_string(), |p| p.display().to_string());
    format!("{name}: {}", source.to_string().trim_end())
}

fn render_invalid(
    origin: &Option<PathBuf>,
    line: &Option<usize>,
    field: &str,
    reason: &str,
) -> String {
    let mut out = origin
        .as_ref()
        .map_or_else(String::new, |p| format!("{}:", p.display()));
    if let Some(l) = line {
        out.push_str(&format!("{l}:"));
    }
    if !out.is_empty() {
        out.push(' ');
    }
    out.push_str(&format!("field `{field}`: {reason}"));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeSettings {
    pub enabled: bool,
    pub passes: u32,
    pub initial_block: BlockLength,
    /// Shuffle-seed source; defaults to the master seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub safety_margin: usize,
    pub estimator: AdvantageEstimator,
}

impl Default for CascadeSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            passes: 5,
            initial_block: BlockLength::Auto,
            seed: None,
            safety_margin: 0,
            estimator: AdvantageEstimator::PerEvent,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_json: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub eta: f64,
    pub excess_noise: f64,
    pub n_events: u64,
    /// Seconds per event.
    pub event_duration: f64,
    /// Fraction of wall time without events; stretches every event period
    /// by `1 / (1 − dead_time_fraction)`.
    pub dead_time_fraction: f64,
    pub seed: u64,
    pub eve: bool,
    pub threshold: ThresholdSpec,
    pub cascade: CascadeSettings,
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            eta: 0.79,
            excess_noise: 0.0,
            n_events: 1_000_000,
            event_duration: 5e-4,
            dead_time_fraction: 0.0,
            seed: 0,
            eve: false,
            threshold: ThresholdSpec::Auto,
            cascade: CascadeSettings::default(),
            output: OutputPaths::default(),
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_toml() {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_origin(text, None)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            origin: path.to_path_buf(),
            source,
        })?;
        Self::parse_with_origin(&text, Some(path))
    }

    fn parse_with_origin(text: &str, origin: Option<&Path>) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|source| ConfigError::Parse {
            origin: origin.map(Path::to_path_buf),
            source: Box::new(source),
        })?;
        cfg.validate().map_err(|e| match e {
            ConfigError::Invalid { field, reason, .. } => ConfigError::Invalid {
                origin: origin.map(Path::to_path_buf),
                line: locate(text, field),
                field,
                reason,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, reason: String| {
            Err(ConfigError::Invalid {
                origin: None,
                line: None,
                field,
                reason,
            })
        };
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(
                "alpha",
                format!("must be finite and > 0, got {}", self.alpha),
            );
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta", format!("must lie in (0, 1], got {}", self.eta));
        }
        if !(self.excess_noise >= 0.0 && self.excess_noise.is_finite()) {
            return bad(
                "excess_noise",
                format!("must be finite and >= 0, got {}", self.excess_noise),
            );
        }
        if self.n_events > u32::MAX as u64 {
            return bad("n_events", format!("must be at most {}", u32::MAX));
        }
        if !(self.event_duration > 0.0 && self.event_duration.is_finite()) {
            return bad(
                "event_duration",
                format!("must be finite and > 0, got {}", self.event_duration),
            );
        }
        if !(0.0..1.0).contains(&self.dead_time_fraction) {
            return bad(
                "dead_time_fraction",
                format!("must lie in [0, 1), got {}", self.dead_time_fraction),
            );
        }
        match self.threshold {
            ThresholdSpec::Fixed { value, .. } if !(value >= 0.0 && value.is_finite()) => {
                return bad(
                    "value",
                    format!("threshold must be finite and >= 0, got {value}"),
                );
            }
            ThresholdSpec::Yield { target } if !(target > 0.0 && target <= 1.0) => {
                return bad("target", format!("yield must lie in (0, 1], got {target}"));
            }
            _ => {}
        }
        if self.cascade.passes == 0 {
            return bad("passes", "cascade needs at least one pass".into());
        }
        if self.cascade.initial_block == BlockLength::Fixed(0) {
            return bad("initial_block", "fixed block length must be >= 1".into());
        }
        Ok(())
    }

    /// Wall time covered by the run, in seconds.
    pub fn duration(&self) -> f64 {
        self.n_events as f64 * self.event_duration / (1.0 - self.dead_time_fraction)
    }

    /// Counts per second over [`ExperimentConfig::duration`].
    pub fn rate(&self, count: usize) -> f64 {
        let d = self.duration();
        if d > 0.0 {
            count as f64 / d
        } else {
            0.0
        }
    }

    pub fn channel(&self) -> Result<ChannelParams, ConfigError> {
        ChannelParams::new(self.eta, self.excess_noise).map_err(|e| ConfigError::Invalid {
            origin: None,
            line: None,
            field: "eta",
            reason: e.to_string(),
        })
    }

    pub fn cascade_config(&self) -> CascadeConfig {
        CascadeConfig {
            passes: self.cascade.passes,
            initial_block: self.cascade.initial_block,
            seed: self.cascade.seed.unwrap_or(self.seed),
        }
    }

    pub fn session_config(&self) -> Result<SessionConfig, ConfigError> {
        self.validate()?;
        Ok(SessionConfig {
            alpha: self.alpha,
            channel: self.channel()?,
            threshold: self.threshold,
            n_events: self.n_events as u32,
            seed: self.seed,
            eve: self.eve,
            distill: self.cascade.enabled.then(|| DistillConfig {
                cascade: self.cascade_config(),
                safety_margin: self.cascade.safety_margin,
                estimator: self.cascade.estimator,
            }),
        })
    }
}

/// 1-based line on which `key` is assigned, if it appears literally.
fn locate(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|line| {
            line.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ThresholdUnits;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let cfg = ExperimentConfig {
            alpha: 0.612345678901234,
            eta: 0.36,
            excess_noise: 0.0125,
            n_events: 12345,
            event_duration: 2.5e-4,
            dead_time_fraction: REFERENCE_DEAD_TIME_FRACTION,
            seed: u64::MAX,
            eve: true,
            threshold: ThresholdSpec::Fixed {
                value: 2.3,
                units: ThresholdUnits::AlphaReceived,
            },
            cascade: CascadeSettings {
                enabled: true,
                passes: 4,
                initial_block: BlockLength::Fixed(9),
                seed: Some(7),
                safety_margin: 3,
                estimator: AdvantageEstimator::Aggregate,
            },
            output: OutputPaths {
                report: Some("out/report.txt".into()),
                report_json: Some("out/report.json".into()),
                transcript: Some("out/transcript.bin".into()),
                events_csv: None,
            },
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let y = ExperimentConfig {
            threshold: ThresholdSpec::Yield { target: 0.388 },
            ..ExperimentConfig::default()
        };
        assert_eq!(
            ExperimentConfig::from_toml(&y.to_toml().unwrap()).unwrap(),
            y
        );
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg =
            ExperimentConfig::from_toml("eta = 0.36\n[threshold]\nmode = \"auto\"\n").unwrap();
        assert_eq!(cfg.eta, 0.36);
        assert_eq!(cfg.alpha, 0.6);
        assert_eq!(cfg.cascade.passes, 5);
    }

    #[test]
    fn unknown_field_reports_line() {
        let err = ExperimentConfig::from_toml("alpha = 0.6\netaa = 0.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Parse { .. }));
        assert!(msg.contains("etaa"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn invalid_value_reports_field_and_line() {
        let err = ExperimentConfig::from_toml("alpha = 0.6\n\neta = 1.5\n").unwrap_err();
        match &err {
            ConfigError::Invalid { field, line, .. } => {
                assert_eq!(*field, "eta");
                assert_eq!(*line, Some(3));
            }
            other => panic!("{other:?}"),
        }
        assert!(err.to_string().starts_with("3: field `eta`"), "{err}");
        let err = ExperimentConfig::from_toml("[cascade]\npasses = 0\n").unwrap_err();
        assert!(err.to_string().contains("`passes`"));
    }

    #[test]
    fn rates_use_event_duration() {
        let cfg = ExperimentConfig {
            n_events: 2000,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.duration(), 1.0);
        assert_eq!(cfg.rate(415), 415.0);
        let reference = ExperimentConfig {
            dead_time_fraction: REFERENCE_DEAD_TIME_FRACTION,
            ..cfg
        };
        assert!((reference.rate(2000) - 1069.0).abs() < 1e-9);
        let empty = ExperimentConfig {
            n_events: 0,
            ..ExperimentConfig::default()
        };
        assert_eq!(empty.rate(0), 0.0);
    }
}

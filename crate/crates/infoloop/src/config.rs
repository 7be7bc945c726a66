//! Experiment configuration: TOML schemas with defaults, field-level
//! validation, and a canonical content digest (comments stripped, keys
//! sorted, whitespace normalized) so identical configs hash identically on
//! every platform.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exact::{FiniteLoopSpec, SignalModel, TransitionKind, DEFAULT_BUDGET};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
}

fn field_err(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidField {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn require_positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if !(v > 0.0) {
        return Err(field_err(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn require_min(field: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v < min {
        return Err(field_err(field, format!("must be >= {min}, got {v}")));
    }
    Ok(())
}

pub fn parse_config<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Canonical digest of a config document: parse, rewrite with sorted keys
/// and fixed spacing, hash. Stable under key reordering and comments.
pub fn canonical_digest(text: &str) -> Result<String, ConfigError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut canon = String::new();
    canonicalize(&value, &mut canon);
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn canonicalize(value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            let mut keys: Vec<&String> = t.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(k);
                out.push('=');
                canonicalize(&t[*k], out);
            }
            out.push('}');
        }
        toml::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonicalize(item, out);
            }
            out.push(']');
        }
        toml::Value::Float(f) => out.push_str(&format!("{:e}", f)),
        toml::Value::Integer(i) => out.push_str(&i.to_string()),
        toml::Value::Boolean(b) => out.push_str(&b.to_string()),
        toml::Value::String(s) => {
            out.push('"');
            out.push_str(s);
            out.push('"');
        }
        toml::Value::Datetime(d) => out.push_str(&d.to_string()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSignalConfig {
    pub law: Vec<Vec<f64>>,
    pub filters: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactSpecConfig {
    pub name: String,
    pub x_prior: Vec<f64>,
    pub emissions: Vec<Vec<f64>>,
    pub n_samples: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub identity_transition: bool,
    pub signal: Option<ExactSignalConfig>,
    pub budget: usize,
}

impl Default for ExactSpecConfig {
    fn default() -> Self {
        // two hypotheses, opposite biased coins, batches of 4
        ExactSpecConfig {
            name: "reference".into(),
            x_prior: vec![0.5, 0.5],
            emissions: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
            n_samples: 4,
            alpha: 1.0,
            iterations: 3,
            identity_transition: false,
            signal: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl ExactSpecConfig {
    pub fn to_spec(&self) -> FiniteLoopSpec {
        FiniteLoopSpec {
            x_prior: self.x_prior.clone(),
            emissions: self.emissions.clone(),
            n_samples: self.n_samples,
            alpha: self.alpha,
            iterations: self.iterations,
            transition: if self.identity_transition {
                TransitionKind::Identity
            } else {
                TransitionKind::Resample
            },
            signal: self.signal.as_ref().map(|s| SignalModel {
                law: s.law.clone(),
                filters: s.filters.clone(),
            }),
            budget: self.budget,
        }
    }
}

pub fn reference_closed_suite() -> Vec<ExactSpecConfig> {
    let base = ExactSpecConfig::default;
    vec![
        base(),
        ExactSpecConfig {
            name: "identity-channel".into(),
            identity_transition: true,
            ..base()
        },
        ExactSpecConfig {
            name: "skewed-prior".into(),
            x_prior: vec![0.3, 0.7],
            emissions: vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            n_samples: 5,
            iterations: 4,
            ..base()
        },
        ExactSpecConfig {
            name: "three-outputs".into(),
            emissions: vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.2, 0.7]],
            ..base()
        },
        ExactSpecConfig {
            name: "three-hypotheses".into(),
            x_prior: vec![1.0 / 3.0; 3],
            emissions: vec![
                vec![0.8, 0.1, 0.1],
                vec![0.1, 0.8, 0.1],
                vec![0.1, 0.1, 0.8],
            ],
            ..base()
        },
        ExactSpecConfig {
            name: "large-batch".into(),
            n_samples: 12,
            iterations: 4,
            ..base()
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosedLoopDpiConfig {
    pub specs: Vec<ExactSpecConfig>,
}

impl Default for ClosedLoopDpiConfig {
    fn default() -> Self {
        ClosedLoopDpiConfig {
            specs: reference_closed_suite(),
        }
    }
}

impl ClosedLoopDpiConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.specs.is_empty() {
            return Err(field_err("specs", "at least one spec required"));
        }
        for (i, s) in self.specs.iter().enumerate() {
            if s.signal.is_some() {
                return Err(field_err(
                    &format!("specs[{i}].signal"),
                    "closed-loop experiment cannot take an open (signalled) spec",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpenLoopBoundConfig {
    /// signal that reveals X exactly each iteration
    pub revealing: ExactSpecConfig,
    /// one-valued vacuous signal; must reduce to the closed analysis
    pub constant: ExactSpecConfig,
    /// binary symmetric 0.2-noise view of X
    pub partial: ExactSpecConfig,
}

impl Default for OpenLoopBoundConfig {
    fn default() -> Self {
        let weak_emissions = vec![vec![0.6, 0.4], vec![0.4, 0.6]];
        OpenLoopBoundConfig {
            revealing: ExactSpecConfig {
                name: "revealing".into(),
                emissions: weak_emissions.clone(),
                iterations: 6,
                signal: Some(ExactSignalConfig {
                    law: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                    filters: vec![vec![4.0, 1.0], vec![1.0, 4.0]],
                }),
                ..ExactSpecConfig::default()
            },
            constant: ExactSpecConfig {
                name: "constant-signal".into(),
                signal: Some(ExactSignalConfig {
                    law: vec![vec![1.0], vec![1.0]],
                    filters: vec![vec![1.0, 1.0]],
                }),
                ..ExactSpecConfig::default()
            },
            partial: ExactSpecConfig {
                name: "partial-bsc".into(),
                emissions: weak_emissions,
                iterations: 6,
                signal: Some(ExactSignalConfig {
                    law: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
                    filters: vec![vec![3.0, 1.0], vec![1.0, 3.0]],
                }),
                ..ExactSpecConfig::default()
            },
        }
    }
}

impl OpenLoopBoundConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, spec) in [
            ("revealing", &self.revealing),
            ("constant", &self.constant),
            ("partial", &self.partial),
        ] {
            if spec.signal.is_none() {
                return Err(field_err(
                    &format!("{field}.signal"),
                    "open-loop spec requires a signal",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaLevelConfig {
    pub ny: usize,
    pub m_values: Vec<usize>,
    pub seeds: usize,
    pub accuracy_threshold: f64,
    pub max_steps: usize,
    pub samples_per_iter: usize,
    pub learning_rate: f64,
}

impl Default for MetaLevelConfig {
    fn default() -> Self {
        MetaLevelConfig {
            ny: 32,
            m_values: vec![2, 4, 8, 16],
            seeds: 20,
            accuracy_threshold: 0.9,
            max_steps: 400,
            samples_per_iter: 64,
            learning_rate: 1.0,
        }
    }
}

impl MetaLevelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_min("ny", self.ny, 2)?;
        require_min("seeds", self.seeds, 1)?;
        require_min("max_steps", self.max_steps, 1)?;
        require_min("samples_per_iter", self.samples_per_iter, 1)?;
        require_positive("learning_rate", self.learning_rate)?;
        if !(0.0 < self.accuracy_threshold && self.accuracy_threshold < 1.0) {
            return Err(field_err("accuracy_threshold", "must be in (0, 1)"));
        }
        if self.m_values.is_empty() {
            return Err(field_err("m_values", "at least one M required"));
        }
        for &m in &self.m_values {
            if m == 0 || m > self.ny {
                return Err(field_err("m_values", format!("M={m} outside 1..=ny")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiversityConfig {
    /// number of competing acceptance hypotheses (= partition blocks)
    pub hypotheses: usize,
    /// outputs per partition block
    pub block_size: usize,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        DiversityConfig {
            hypotheses: 4,
            block_size: 2,
        }
    }
}

impl DiversityConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_min("hypotheses", self.hypotheses, 3)?;
        require_min("block_size", self.block_size, 1)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseRobustnessConfig {
    /// per-rubric verdict flip probability; the default hits 24%
    /// sample-level consistency at 16 repetitions over 5 rubrics
    pub flip_prob: f64,
    pub seeds: usize,
    pub iterations: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    /// accuracy slack: noisy arm within delta of clean, biased arm at
    /// least 2*delta short
    pub delta: f64,
    pub consistency_pairs: usize,
    pub consistency_reps: usize,
}

impl Default for NoiseRobustnessConfig {
    fn default() -> Self {
        NoiseRobustnessConfig {
            flip_prob: 0.017681,
            seeds: 20,
            iterations: 120,
            group_size: 16,
            learning_rate: 2.0,
            delta: 0.05,
            consistency_pairs: 1000,
            consistency_reps: 16,
        }
    }
}

impl NoiseRobustnessConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..0.5).contains(&self.flip_prob) {
            return Err(field_err("flip_prob", "must be in [0, 0.5)"));
        }
        require_min("seeds", self.seeds, 1)?;
        require_min("iterations", self.iterations, 1)?;
        require_min("group_size", self.group_size, 2)?;
        require_positive("learning_rate", self.learning_rate)?;
        require_positive("delta", self.delta)?;
        require_min("consistency_pairs", self.consistency_pairs, 1)?;
        require_min("consistency_reps", self.consistency_reps, 2)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardHackingConfig {
    pub train_pairs: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// probability the content feature reflects true correctness
    pub content_reliability: f64,
    pub seeds: usize,
    pub plateau_band: f64,
    /// fraction of training after which the held-out curve must plateau
    pub plateau_fraction: f64,
}

impl Default for RewardHackingConfig {
    fn default() -> Self {
        RewardHackingConfig {
            train_pairs: 4000,
            steps: 60,
            learning_rate: 0.6,
            content_reliability: 0.8,
            seeds: 10,
            plateau_band: 0.03,
            plateau_fraction: 0.2,
        }
    }
}

impl RewardHackingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_min("train_pairs", self.train_pairs, 1)?;
        require_min("steps", self.steps, 5)?;
        require_positive("learning_rate", self.learning_rate)?;
        require_min("seeds", self.seeds, 1)?;
        if !(0.5 < self.content_reliability && self.content_reliability < 1.0) {
            return Err(field_err("content_reliability", "must be in (0.5, 1)"));
        }
        require_positive("plateau_band", self.plateau_band)?;
        if !(0.0 < self.plateau_fraction && self.plateau_fraction < 1.0) {
            return Err(field_err("plateau_fraction", "must be in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JudgeDriftConfig {
    pub kappa: f64,
    pub iterations: usize,
    pub final_rate_max: f64,
}

impl Default for JudgeDriftConfig {
    fn default() -> Self {
        JudgeDriftConfig {
            kappa: 0.1,
            iterations: 100,
            final_rate_max: 0.05,
        }
    }
}

impl JudgeDriftConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.kappa < 0.0 {
            return Err(field_err("kappa", "must be nonnegative"));
        }
        require_min("iterations", self.iterations, 1)?;
        require_positive("final_rate_max", self.final_rate_max)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorEvaluatorConfig {
    pub seeds: usize,
    pub iterations: usize,
    pub samples_per_iter: usize,
    pub learning_rate: f64,
    pub min_wins: usize,
}

impl Default for GeneratorEvaluatorConfig {
    fn default() -> Self {
        GeneratorEvaluatorConfig {
            seeds: 20,
            iterations: 40,
            samples_per_iter: 30,
            learning_rate: 0.8,
            min_wins: 15,
        }
    }
}

impl GeneratorEvaluatorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        require_min("seeds", self.seeds, 1)?;
        require_min("iterations", self.iterations, 1)?;
        require_min("samples_per_iter", self.samples_per_iter, 1)?;
        require_positive("learning_rate", self.learning_rate)?;
        if self.min_wins > self.seeds {
            return Err(field_err("min_wins", "cannot exceed seeds"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_stable_under_reordering_and_comments() {
        let a = "b = 2\na = 1\n[t]\nx = 1.5\n";
        let b = "# comment\na    = 1\n\nb=2\n[t]\n x = 1.5 # trailing\n";
        assert_eq!(canonical_digest(a).unwrap(), canonical_digest(b).unwrap());
        let c = "a = 1\nb = 3\n[t]\nx = 1.5\n";
        assert_ne!(canonical_digest(a).unwrap(), canonical_digest(c).unwrap());
    }

    #[test]
    fn unknown_field_named_in_error() {
        let err = parse_config::<JudgeDriftConfig>("kapa = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("kapa"), "{err}");
    }

    #[test]
    fn validation_names_field() {
        let cfg: MetaLevelConfig = parse_config("learning_rate = -1.0\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn defaults_parse_from_empty_and_roundtrip() {
        let cfg: NoiseRobustnessConfig = parse_config("").unwrap();
        assert_eq!(cfg.seeds, NoiseRobustnessConfig::default().seeds);
        let text = toml::to_string_pretty(&NoiseRobustnessConfig::default()).unwrap();
        let back: NoiseRobustnessConfig = parse_config(&text).unwrap();
        assert_eq!(back.flip_prob, cfg.flip_prob);
    }

    #[test]
    fn closed_config_rejects_open_spec() {
        let mut cfg = ClosedLoopDpiConfig::default();
        cfg.specs[0].signal = Some(ExactSignalConfig {
            law: vec![vec![1.0], vec![1.0]],
            filters: vec![vec![1.0, 1.0]],
        });
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("signal"), "{err}");
    }
}

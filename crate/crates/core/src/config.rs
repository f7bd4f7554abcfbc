//! Flat `key = value` run configuration.
//!
//! Every key has a default, unknown keys are rejected, and the resolved
//! configuration has one canonical text form that is embedded in checkpoints
//! and report headers.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::augment::{ClassLabel, DEFAULT_PER_CLASS};
use crate::autodiff::RmsPropConfig;
use crate::corpus::MAX_SEQ_LEN;
use crate::gan::{CriticConfig, GeneratorConfig, NUM_CONV_LAYERS};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: cannot parse {value:?} for {key}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub n_critic: usize,
    pub learning_rate: f64,
    pub clip_value: f64,
    pub total_generator_steps: u64,
    /// Emit a checkpoint every this many generator steps; 0 disables.
    pub checkpoint_interval: u64,
    pub use_gradient_penalty: bool,
    pub gp_lambda: f64,
    pub rmsprop_rho: f64,
    pub rmsprop_eps: f64,
    pub generator: GeneratorConfig,
    pub critic: CriticConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 100,
            n_critic: 5,
            learning_rate: 5e-5,
            clip_value: 0.01,
            total_generator_steps: 17_701,
            checkpoint_interval: 1000,
            use_gradient_penalty: false,
            gp_lambda: 10.0,
            rmsprop_rho: 0.9,
            rmsprop_eps: 1e-8,
            generator: GeneratorConfig::default(),
            critic: CriticConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Small models and batches for tests and laptops.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 16,
            generator: GeneratorConfig::desk(),
            critic: CriticConfig::desk(),
            ..Self::default()
        }
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rmsprop_rho,
            eps: self.rmsprop_eps,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.n_critic < 1 {
            return bad("n_critic must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.clip_value > 0.0) || !self.clip_value.is_finite() {
            return bad("clip_value must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.gp_lambda >= 0.0) || !self.gp_lambda.is_finite() {
            return bad("gp_lambda must be non-negative");
        }
        if !(0.0..1.0).contains(&self.rmsprop_rho) || !(self.rmsprop_eps >= 0.0) {
            return bad("rmsprop_rho must be in [0, 1) and rmsprop_eps non-negative");
        }
        if self.generator.seq_len != self.critic.seq_len {
            return bad("generator and critic seq_len differ");
        }
        if self.generator.seq_len > MAX_SEQ_LEN {
            return bad("seq_len exceeds 576");
        }
        self.generator
            .validate()
            .and_then(|_| self.critic.validate())
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleConfig {
    pub count: usize,
    pub class: ClassLabel,
    pub temperature: f64,
    pub lint_run_threshold: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            count: 10,
            class: ClassLabel::REAL,
            temperature: 1.0,
            lint_run_threshold: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub per_class_count: usize,
    pub sample: SampleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            per_class_count: DEFAULT_PER_CLASS,
            sample: SampleConfig::default(),
        }
    }
}

/// Every recognised key, in canonical order.
pub const KEYS: &[&str] = &[
    "seed",
    "batch_size",
    "n_critic",
    "learning_rate",
    "clip_value",
    "total_generator_steps",
    "checkpoint_interval",
    "use_gradient_penalty",
    "gp_lambda",
    "rmsprop_rho",
    "rmsprop_eps",
    "noise_len",
    "seq_len",
    "lstm_units",
    "num_classes",
    "generator_dropout",
    "critic_filters",
    "kernel_size",
    "leaky_slope",
    "critic_dropout",
    "bn_momentum",
    "bn_eps",
    "per_class_count",
    "sample_count",
    "sample_class",
    "temperature",
    "lint_run_threshold",
];

fn parse<T: FromStr>(raw: &str) -> Option<T> {
    raw.parse().ok()
}

fn parse_filters(raw: &str) -> Option<[usize; NUM_CONV_LAYERS]> {
    let v: Vec<usize> = raw
        .split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()?;
    v.try_into().ok()
}

impl RunConfig {
    pub fn desk() -> Self {
        RunConfig {
            train: TrainConfig::desk(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate()?;
        let s = &self.sample;
        if s.count < 1 {
            return Err(ConfigError::Invalid(
                "sample_count must be at least 1".into(),
            ));
        }
        if !s.temperature.is_finite() || s.temperature < 0.0 {
            return Err(ConfigError::Invalid(
                "temperature must be finite and non-negative".into(),
            ));
        }
        if s.lint_run_threshold < 2 {
            return Err(ConfigError::Invalid(
                "lint_run_threshold must be at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Applies one `key = value` assignment. Returns `None` on a value that
    /// does not parse, `Some(false)` for an unknown key.
    fn assign(&mut self, key: &str, raw: &str) -> Option<bool> {
        let t = &mut self.train;
        match key {
            "seed" => t.seed = parse(raw)?,
            "batch_size" => t.batch_size = parse(raw)?,
            "n_critic" => t.n_critic = parse(raw)?,
            "learning_rate" => t.learning_rate = parse(raw)?,
            "clip_value" => t.clip_value = parse(raw)?,
            "total_generator_steps" => t.total_generator_steps = parse(raw)?,
            "checkpoint_interval" => t.checkpoint_interval = parse(raw)?,
            "use_gradient_penalty" => t.use_gradient_penalty = parse(raw)?,
            "gp_lambda" => t.gp_lambda = parse(raw)?,
            "rmsprop_rho" => t.rmsprop_rho = parse(raw)?,
            "rmsprop_eps" => t.rmsprop_eps = parse(raw)?,
            "noise_len" => t.generator.noise_len = parse(raw)?,
            "seq_len" => {
                let n = parse(raw)?;
                t.generator.seq_len = n;
                t.critic.seq_len = n;
            }
            "lstm_units" => t.generator.lstm_units = parse(raw)?,
            "num_classes" => {
                let n = parse(raw)?;
                t.generator.num_classes = n;
                t.critic.num_classes = n;
            }
            "generator_dropout" => t.generator.dropout_rate = parse(raw)?,
            "critic_filters" => t.critic.filters = parse_filters(raw)?,
            "kernel_size" => t.critic.kernel_size = parse(raw)?,
            "leaky_slope" => t.critic.leaky_slope = parse(raw)?,
            "critic_dropout" => t.critic.dropout_rate = parse(raw)?,
            "bn_momentum" => t.critic.bn_momentum = parse(raw)?,
            "bn_eps" => t.critic.bn_eps = parse(raw)?,
            "per_class_count" => self.per_class_count = parse(raw)?,
            "sample_count" => self.sample.count = parse(raw)?,
            "sample_class" => self.sample.class = ClassLabel::new(parse(raw)?).ok()?,
            "temperature" => self.sample.temperature = parse(raw)?,
            "lint_run_threshold" => self.sample.lint_run_threshold = parse(raw)?,
            _ => return Some(false),
        }
        Some(true)
    }

    /// Canonical text: every key in [`KEYS`] order, one per line.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let f = &t.critic.filters;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("seed", t.seed.to_string());
        line("batch_size", t.batch_size.to_string());
        line("n_critic", t.n_critic.to_string());
        line("learning_rate", t.learning_rate.to_string());
        line("clip_value", t.clip_value.to_string());
        line("total_generator_steps", t.total_generator_steps.to_string());
        line("checkpoint_interval", t.checkpoint_interval.to_string());
        line("use_gradient_penalty", t.use_gradient_penalty.to_string());
        line("gp_lambda", t.gp_lambda.to_string());
        line("rmsprop_rho", t.rmsprop_rho.to_string());
        line("rmsprop_eps", t.rmsprop_eps.to_string());
        line("noise_len", t.generator.noise_len.to_string());
        line("seq_len", t.generator.seq_len.to_string());
        line("lstm_units", t.generator.lstm_units.to_string());
        line("num_classes", t.generator.num_classes.to_string());
        line("generator_dropout", t.generator.dropout_rate.to_string());
        line(
            "critic_filters",
            format!("{},{},{},{}", f[0], f[1], f[2], f[3]),
        );
        line("kernel_size", t.critic.kernel_size.to_string());
        line("leaky_slope", t.critic.leaky_slope.to_string());
        line("critic_dropout", t.critic.dropout_rate.to_string());
        line("bn_momentum", t.critic.bn_momentum.to_string());
        line("bn_eps", t.critic.bn_eps.to_string());
        line("per_class_count", self.per_class_count.to_string());
        line("sample_count", self.sample.count.to_string());
        line("sample_class", self.sample.class.to_string());
        line("temperature", self.sample.temperature.to_string());
        line(
            "lint_run_threshold",
            self.sample.lint_run_threshold.to_string(),
        );
        out
    }
}

/// Parses `key = value` lines over the defaults. `#` starts a comment.
pub fn load_config(text: &str) -> Result<RunConfig, ConfigError> {
    load_config_over(RunConfig::default(), text)
}

/// Like [`load_config`], starting from `base` instead of the defaults.
pub fn load_config_over(base: RunConfig, text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = base;
    let mut seen = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if seen.contains(&key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        match cfg.assign(key, value) {
            Some(true) => seen.push(key),
            Some(false) => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
            None => {
                return Err(ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = load_config("").unwrap();
        assert_eq!(c.train.batch_size, 100);
        assert_eq!(c.train.n_critic, 5);
        assert_eq!(c.train.learning_rate, 0.00005);
        assert_eq!(c.train.clip_value, 0.01);
        assert_eq!(c.train.generator.noise_len, 128);
        assert_eq!(c.train.generator.lstm_units, 1024);
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn overrides_and_comments() {
        let c = load_config("# header\nclip_value = 0.05  # wider\n\nseq_len=48\n").unwrap();
        assert_eq!(c.train.clip_value, 0.05);
        assert_eq!(c.train.generator.seq_len, 48);
        assert_eq!(c.train.critic.seq_len, 48);
        let c = load_config("critic_filters = 4, 8, 12, 16").unwrap();
        assert_eq!(c.train.critic.filters, [4, 8, 12, 16]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            load_config("n_critic = 0"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            load_config("frobnicate = 1"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            load_config("batch_size = many"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            load_config("seed = 1\nseed = 2"),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
        assert!(matches!(
            load_config("seed"),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(load_config("critic_filters = 8,4,12,16").is_err());
        assert!(load_config("critic_filters = 4,8,12").is_err());
        assert!(load_config("kernel_size = 3").is_err());
        assert!(load_config("sample_class = 4").is_err());
        assert!(load_config("lint_run_threshold = 1").is_err());
        assert!(load_config("seq_len = 577").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = RunConfig::desk();
        c.train.learning_rate = 1.2345e-4;
        c.train.use_gradient_penalty = true;
        c.sample.temperature = 0.3;
        let text = c.to_text();
        assert_eq!(text.lines().count(), KEYS.len());
        for (l, k) in text.lines().zip(KEYS) {
            assert!(l.starts_with(&format!("{k} = ")));
        }
        assert_eq!(load_config(&text).unwrap(), c);
    }
}

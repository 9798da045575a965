//! Experiment configuration assembly from a simple key-value file plus
//! command-line overrides.
//!
//! File format: one `key = value` pair per line, `#` comments, blank
//! lines ignored. Keys mirror the CLI flags; `ranker` and `harm` may
//! repeat (or take comma-separated lists). CLI flags applied after the
//! file win.

use std::fs;
use std::path::{Path, PathBuf};

use super::{ExperimentConfig, HarnessError, RankerConfig, StrategyKind};

/// Accumulates settings from file and flags, then resolves them into an
/// [`ExperimentConfig`]. Ranker tokens are kept raw until `build` so a
/// later `strategy` key still applies to a bare `llm` ranker.
#[derive(Debug, Default, Clone)]
pub struct ConfigBuilder {
    dataset: Option<PathBuf>,
    n: Option<usize>,
    m: Option<usize>,
    harm: Vec<f64>,
    seed: Option<u64>,
    ranker_tokens: Vec<String>,
    strategy: Option<StrategyKind>,
    model: Option<String>,
    exemplars: Option<usize>,
    embeddings: Option<PathBuf>,
    out: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    max_in_flight: Option<usize>,
    rpm: Option<u32>,
    k_tp: Option<Vec<usize>>,
    k_pp: Option<Vec<usize>>,
    llm_base_url: Option<String>,
    text_budget: Option<usize>,
}

fn bad(key: &str, value: &str, expected: &str) -> HarnessError {
    HarnessError::Config {
        message: format!("invalid value '{value}' for '{key}' (expected {expected})"),
    }
}

fn parse_list<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &str,
) -> Result<Vec<T>, HarnessError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| bad(key, value, expected)))
        .collect()
}

impl ConfigBuilder {
    /// Reads every pair from a config file, in order.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let mut builder = ConfigBuilder::default();
        builder.load_file(path)?;
        Ok(builder)
    }

    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io {
            message: format!("failed to read config {}: {e}", path.display()),
        })?;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Config {
                message: format!(
                    "config {} line {}: expected 'key = value', got '{raw_line}'",
                    path.display(),
                    idx + 1
                ),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies one setting. Keys match CLI flag names without the `--`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "n" => self.n = Some(value.parse().map_err(|_| bad(key, value, "integer"))?),
            "m" => self.m = Some(value.parse().map_err(|_| bad(key, value, "integer"))?),
            "harm" => self
                .harm
                .extend(parse_list::<f64>(key, value, "fractions in (0,1)")?),
            "seed" => self.seed = Some(value.parse().map_err(|_| bad(key, value, "u64"))?),
            "ranker" => self.ranker_tokens.push(value.to_string()),
            "strategy" => self.strategy = Some(StrategyKind::parse(value)?),
            "model" => self.model = Some(value.to_string()),
            "exemplars" => {
                self.exemplars = Some(value.parse().map_err(|_| bad(key, value, "integer"))?)
            }
            "embeddings" => self.embeddings = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "cache-dir" => self.cache_dir = Some(PathBuf::from(value)),
            "max-in-flight" => {
                self.max_in_flight = Some(value.parse().map_err(|_| bad(key, value, "integer"))?)
            }
            "rpm" => self.rpm = Some(value.parse().map_err(|_| bad(key, value, "integer"))?),
            "k-tp" => self.k_tp = Some(parse_list(key, value, "integers")?),
            "k-pp" => self.k_pp = Some(parse_list(key, value, "integers")?),
            "llm-base-url" => self.llm_base_url = Some(value.to_string()),
            "text-budget" => {
                // 0 disables truncation.
                self.text_budget = Some(value.parse().map_err(|_| bad(key, value, "integer"))?)
            }
            other => {
                return Err(HarnessError::Config {
                    message: format!("unknown configuration key '{other}'"),
                })
            }
        }
        Ok(())
    }

    pub fn set_dataset(&mut self, path: PathBuf) {
        self.dataset = Some(path);
    }

    pub fn add_ranker_token(&mut self, token: String) {
        self.ranker_tokens.push(token);
    }

    pub fn add_harm(&mut self, fraction: f64) {
        self.harm.push(fraction);
    }

    /// Resolves everything into a validated-shape config (structural
    /// validation still happens in [`ExperimentConfig::validate`]).
    pub fn build(self) -> Result<ExperimentConfig, HarnessError> {
        let dataset = self.dataset.ok_or_else(|| HarnessError::Config {
            message: "a dataset path is required".to_string(),
        })?;
        let mut config = ExperimentConfig::new(dataset);
        if let Some(n) = self.n {
            config.n = n;
        }
        if let Some(m) = self.m {
            config.m = m;
        }
        if !self.harm.is_empty() {
            config.harm_fractions = self.harm;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        let default_strategy = self.strategy.unwrap_or(StrategyKind::ZeroShot);
        if !self.ranker_tokens.is_empty() {
            config.rankers = self
                .ranker_tokens
                .iter()
                .map(|t| RankerConfig::parse(t, default_strategy))
                .collect::<Result<_, _>>()?;
        }
        if let Some(k_tp) = self.k_tp {
            config.k_tp = k_tp;
        }
        if let Some(k_pp) = self.k_pp {
            config.k_pp = k_pp;
        }
        if let Some(exemplars) = self.exemplars {
            config.exemplar_count = exemplars;
        }
        config.embeddings = self.embeddings.or(config.embeddings);
        config.out_dir = self.out.or(config.out_dir);
        config.cache_dir = self.cache_dir.or(config.cache_dir);
        if let Some(max_in_flight) = self.max_in_flight {
            config.max_in_flight = max_in_flight;
        }
        config.requests_per_minute = self.rpm.or(config.requests_per_minute);
        if let Some(model) = self.model {
            config.llm_model = model;
        }
        if let Some(base_url) = self.llm_base_url {
            config.llm_base_url = base_url;
        }
        if let Some(budget) = self.text_budget {
            config.text_budget = if budget == 0 { None } else { Some(budget) };
        }
        Ok(config)
    }
}

//! Experiment orchestration: configuration, ranker construction, paired
//! evaluation over simulated sequences, and report assembly.
//!
//! One run samples `m` sequences per harm fraction (shared by every
//! ranker, so comparisons are paired), applies each configured ranker,
//! scores the outputs, and aggregates means per (ranker, harm
//! percentage).

pub mod configfile;
pub mod dataset;
pub mod report;
pub mod sample;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::domain::{validate_ranked, ContentItem, ContentSequence, HarmLabel, RankedSequence};
use crate::judges::{LlmJudge, ModerationScorer, NoisyJudge, OracleJudge, PerspectiveScorer};
use crate::llm::{
    ChatClient, ChatConfig, DiskCache, HttpClient, LlmError, ReqwestTransport, RetryPolicy,
    LLM_API_KEY_VAR, MODERATION_API_KEY_VAR, PERSPECTIVE_API_KEY_VAR,
};
use crate::metrics::{compute_all, MetricsError};
use crate::prompts::cluster::{select_exemplars, ClusterError, EmbeddingSet};
use crate::prompts::PromptStrategy;
use crate::rerank::{
    identity_rank, rank_by_score, rerank_pairwise, HarmScorer, PairwiseJudge, RankError,
    RerankError, RerankPolicy, RerankTelemetry,
};

pub use dataset::load_dataset;
pub use report::{
    aggregate, emit_report, AggregateCell, AggregateRow, MetricsReport, ReportFormat, RunSummary,
    SequenceRow,
};
pub use sample::{derive_seed, harmful_count, sample_sequences};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dataset line {line}: {message}")]
    Load { line: usize, message: String },
    #[error("{message}")]
    Io { message: String },
    #[error("not enough {class} items: need {required}, have {available}")]
    Sampling {
        class: &'static str,
        required: usize,
        available: usize,
    },
    #[error("configuration error: {message}")]
    Config { message: String },
    #[error("aggregation error: {message}")]
    Aggregation { message: String },
    #[error("internal error: {message}")]
    Internal { message: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Which prompt strategy an LLM ranker uses; exemplar content for the
/// few-shot variant is selected at build time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    ZeroShot,
    ZeroShotPe,
    FewShotIcl,
}

impl StrategyKind {
    pub fn slug(self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "zero-shot",
            StrategyKind::ZeroShotPe => "zero-shot-pe",
            StrategyKind::FewShotIcl => "few-shot-icl",
        }
    }

    pub fn parse(token: &str) -> Result<Self, HarnessError> {
        match token {
            "zero-shot" => Ok(StrategyKind::ZeroShot),
            "zero-shot-pe" => Ok(StrategyKind::ZeroShotPe),
            "few-shot-icl" => Ok(StrategyKind::FewShotIcl),
            other => Err(HarnessError::Config {
                message: format!(
                    "unknown strategy '{other}' (expected zero-shot, zero-shot-pe, few-shot-icl)"
                ),
            }),
        }
    }
}

/// Declarative ranker selection.
#[derive(Debug, Clone, PartialEq)]
pub enum RankerConfig {
    /// The platform order, unchanged.
    Original,
    /// Pairwise rerank with the ground-truth judge.
    Oracle,
    /// Pairwise rerank with a seeded noisy judge.
    Noisy { accuracy: f64 },
    /// Rank by moderation-API category scores.
    Moderation,
    /// Rank by toxicity-API summary scores.
    Perspective,
    /// Pairwise rerank with an LLM judge.
    Llm { strategy: StrategyKind },
}

impl RankerConfig {
    pub fn id(&self) -> String {
        match self {
            RankerConfig::Original => "original".to_string(),
            RankerConfig::Oracle => "oracle".to_string(),
            RankerConfig::Noisy { accuracy } => format!("noisy-{accuracy:.2}"),
            RankerConfig::Moderation => "moderation".to_string(),
            RankerConfig::Perspective => "perspective".to_string(),
            RankerConfig::Llm { strategy } => format!("llm-{}", strategy.slug()),
        }
    }

    /// Parses a ranker token: `original`, `oracle`, `moderation`,
    /// `perspective`, `noisy:<accuracy>`, `llm`, or `llm:<strategy>`.
    /// A bare `llm` takes `default_strategy`.
    pub fn parse(token: &str, default_strategy: StrategyKind) -> Result<Self, HarnessError> {
        match token {
            "original" => Ok(RankerConfig::Original),
            "oracle" => Ok(RankerConfig::Oracle),
            "moderation" => Ok(RankerConfig::Moderation),
            "perspective" => Ok(RankerConfig::Perspective),
            "llm" => Ok(RankerConfig::Llm {
                strategy: default_strategy,
            }),
            other => {
                if let Some(rest) = other.strip_prefix("noisy:") {
                    let accuracy: f64 = rest.parse().map_err(|_| HarnessError::Config {
                        message: format!("invalid noisy accuracy '{rest}'"),
                    })?;
                    if !(0.0..=1.0).contains(&accuracy) {
                        return Err(HarnessError::Config {
                            message: format!("noisy accuracy {accuracy} must lie in [0, 1]"),
                        });
                    }
                    Ok(RankerConfig::Noisy { accuracy })
                } else if let Some(rest) = other.strip_prefix("llm:") {
                    Ok(RankerConfig::Llm {
                        strategy: StrategyKind::parse(rest)?,
                    })
                } else {
                    Err(HarnessError::Config {
                        message: format!("unknown ranker '{other}'"),
                    })
                }
            }
        }
    }
}

/// Full experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    /// Sequence length.
    pub n: usize,
    /// Sequences per harm fraction.
    pub m: usize,
    pub harm_fractions: Vec<f64>,
    pub seed: u64,
    pub rankers: Vec<RankerConfig>,
    pub k_tp: Vec<usize>,
    pub k_pp: Vec<usize>,
    /// Exemplar count for the few-shot strategy.
    pub exemplar_count: usize,
    pub embeddings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
    pub llm_model: String,
    pub llm_base_url: String,
    /// Per-text character budget before prompt assembly; `None` disables.
    pub text_budget: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            n: 20,
            m: 100,
            harm_fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            seed: 0,
            rankers: vec![RankerConfig::Original],
            k_tp: vec![5, 10],
            k_pp: vec![1, 2, 3],
            exemplar_count: 20,
            embeddings: None,
            out_dir: None,
            cache_dir: None,
            max_in_flight: 8,
            requests_per_minute: None,
            llm_model: "gpt-3.5-turbo".to_string(),
            llm_base_url: "https://api.openai.com/v1".to_string(),
            text_budget: Some(crate::judges::DEFAULT_TEXT_BUDGET),
        }
    }

    /// Checks structural validity; returns advisory warnings (currently
    /// EWN-degeneracy notes for fractions that round to 0 or n harmful
    /// items).
    pub fn validate(&self) -> Result<Vec<String>, HarnessError> {
        if self.n < 2 {
            return Err(HarnessError::Config {
                message: format!("sequence length n = {} must be at least 2", self.n),
            });
        }
        if self.m < 1 {
            return Err(HarnessError::Config {
                message: "sequence count m must be at least 1".to_string(),
            });
        }
        if self.harm_fractions.is_empty() {
            return Err(HarnessError::Config {
                message: "at least one harm fraction is required".to_string(),
            });
        }
        for &fraction in &self.harm_fractions {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(HarnessError::Config {
                    message: format!("harm fraction {fraction} must lie strictly in (0, 1)"),
                });
            }
        }
        if self.rankers.is_empty() {
            return Err(HarnessError::Config {
                message: "at least one ranker is required".to_string(),
            });
        }
        for &k in &self.k_tp {
            if k == 0 || k > self.n {
                return Err(HarnessError::Config {
                    message: format!("k_tp value {k} is out of range for n = {}", self.n),
                });
            }
        }
        for &k in &self.k_pp {
            if k == 0 {
                return Err(HarnessError::Config {
                    message: "k_pp values must be at least 1".to_string(),
                });
            }
        }
        if self.max_in_flight == 0 {
            return Err(HarnessError::Config {
                message: "max_in_flight must be at least 1".to_string(),
            });
        }

        let mut warnings = Vec::new();
        for &fraction in &self.harm_fractions {
            let h = harmful_count(self.n, fraction);
            if h == 0 || h == self.n {
                warnings.push(format!(
                    "harm fraction {fraction} rounds to {h}/{} harmful items; EWN is degenerate there",
                    self.n
                ));
            }
        }
        Ok(warnings)
    }

    fn rerank_policy(&self) -> RerankPolicy {
        RerankPolicy {
            max_in_flight: std::num::NonZeroUsize::new(self.max_in_flight.max(1))
                .expect("validated above"),
            ..RerankPolicy::default()
        }
    }
}

/// API credentials, normally taken from the environment.
#[derive(Debug, Clone, Default)]
pub struct Credentials {
    pub llm_api_key: Option<String>,
    pub moderation_api_key: Option<String>,
    pub perspective_api_key: Option<String>,
}

impl Credentials {
    pub fn from_env() -> Self {
        Credentials {
            llm_api_key: std::env::var(LLM_API_KEY_VAR).ok(),
            moderation_api_key: std::env::var(MODERATION_API_KEY_VAR).ok(),
            perspective_api_key: std::env::var(PERSPECTIVE_API_KEY_VAR).ok(),
        }
    }
}

/// A constructed ranker ready to apply to sequences.
pub enum Ranker {
    Original,
    Pairwise {
        judge: Box<dyn PairwiseJudge>,
        policy: RerankPolicy,
    },
    Scored {
        scorer: Box<dyn HarmScorer>,
    },
}

/// Ranker plus the identifier used in report rows.
pub struct NamedRanker {
    pub id: String,
    pub ranker: Ranker,
}

impl NamedRanker {
    /// Applies this ranker to one sequence.
    pub async fn apply(
        &self,
        seq: &ContentSequence,
    ) -> Result<(RankedSequence, RerankTelemetry), HarnessError> {
        match &self.ranker {
            Ranker::Original => Ok((identity_rank(seq), RerankTelemetry::default())),
            Ranker::Pairwise { judge, policy } => {
                let outcome = rerank_pairwise(seq, judge.as_ref(), policy).await?;
                Ok((outcome.ranked, outcome.telemetry))
            }
            Ranker::Scored { scorer } => {
                let ranked = rank_by_score(seq, scorer.as_ref()).await?;
                Ok((ranked, RerankTelemetry::default()))
            }
        }
    }
}

/// Construction output: the rankers plus the shared chat client (when any
/// LLM ranker is configured) for stats and cache flushing.
pub struct BuiltRankers {
    pub rankers: Vec<NamedRanker>,
    pub chat_client: Option<Arc<ChatClient>>,
}

fn build_prompt_strategy(
    kind: StrategyKind,
    config: &ExperimentConfig,
    items: &[ContentItem],
) -> Result<PromptStrategy, HarnessError> {
    match kind {
        StrategyKind::ZeroShot => Ok(PromptStrategy::ZeroShot),
        StrategyKind::ZeroShotPe => Ok(PromptStrategy::zero_shot_pe_default()),
        StrategyKind::FewShotIcl => {
            let embeddings_path =
                config
                    .embeddings
                    .as_ref()
                    .ok_or_else(|| HarnessError::Config {
                        message: "few-shot-icl requires an embeddings file".to_string(),
                    })?;
            let embeddings = EmbeddingSet::load_jsonl(embeddings_path)?;
            let harmful: Vec<ContentItem> = items
                .iter()
                .filter(|i| i.label() == Some(HarmLabel::Harmful))
                .cloned()
                .collect();
            let exemplars =
                select_exemplars(&harmful, &embeddings, config.exemplar_count, config.seed)?;
            Ok(PromptStrategy::FewShotIcl {
                exemplars: exemplars.into_iter().map(|e| e.text).collect(),
            })
        }
    }
}

/// Builds every configured ranker, failing fast (before any sampling or
/// network activity) when credentials or inputs are missing.
pub fn build_rankers(
    config: &ExperimentConfig,
    credentials: &Credentials,
    items: &[ContentItem],
) -> Result<BuiltRankers, HarnessError> {
    let needs_remote = config.rankers.iter().any(|r| {
        matches!(
            r,
            RankerConfig::Moderation | RankerConfig::Perspective | RankerConfig::Llm { .. }
        )
    });

    let (http, cache) = if needs_remote {
        let transport = Arc::new(ReqwestTransport::new(Duration::from_secs(60))?);
        let http = HttpClient::new(
            transport,
            RetryPolicy::default(),
            config.requests_per_minute,
            config.max_in_flight,
        );
        let cache = match &config.cache_dir {
            Some(dir) => Some(DiskCache::open(dir)?),
            None => None,
        };
        (Some(http), cache)
    } else {
        (None, None)
    };

    let mut chat_client: Option<Arc<ChatClient>> = None;
    let mut rankers = Vec::with_capacity(config.rankers.len());
    for ranker_config in &config.rankers {
        let id = ranker_config.id();
        let ranker = match ranker_config {
            RankerConfig::Original => Ranker::Original,
            RankerConfig::Oracle => Ranker::Pairwise {
                judge: Box::new(OracleJudge),
                policy: config.rerank_policy(),
            },
            RankerConfig::Noisy { accuracy } => {
                let seed = derive_seed(config.seed, &id);
                let judge = NoisyJudge::new(*accuracy, seed).map_err(|e| HarnessError::Config {
                    message: e.to_string(),
                })?;
                Ranker::Pairwise {
                    judge: Box::new(judge),
                    policy: config.rerank_policy(),
                }
            }
            RankerConfig::Moderation => {
                let api_key =
                    credentials
                        .moderation_api_key
                        .clone()
                        .ok_or_else(|| HarnessError::Config {
                            message: format!("{MODERATION_API_KEY_VAR} is not set"),
                        })?;
                let mut scorer =
                    ModerationScorer::new(http.clone().expect("remote http built"), api_key);
                if let Some(cache) = &cache {
                    scorer = scorer.with_cache(cache.clone());
                }
                Ranker::Scored {
                    scorer: Box::new(scorer),
                }
            }
            RankerConfig::Perspective => {
                let api_key = credentials.perspective_api_key.clone().ok_or_else(|| {
                    HarnessError::Config {
                        message: format!("{PERSPECTIVE_API_KEY_VAR} is not set"),
                    }
                })?;
                let mut scorer =
                    PerspectiveScorer::new(http.clone().expect("remote http built"), api_key);
                if let Some(cache) = &cache {
                    scorer = scorer.with_cache(cache.clone());
                }
                Ranker::Scored {
                    scorer: Box::new(scorer),
                }
            }
            RankerConfig::Llm { strategy } => {
                let client = match &chat_client {
                    Some(client) => client.clone(),
                    None => {
                        let api_key = credentials.llm_api_key.clone().ok_or_else(|| {
                            HarnessError::Config {
                                message: format!("{LLM_API_KEY_VAR} is not set"),
                            }
                        })?;
                        let chat_config =
                            ChatConfig::new(config.llm_base_url.clone(), config.llm_model.clone())
                                .with_api_key(api_key);
                        let client = Arc::new(ChatClient::new(
                            chat_config,
                            http.clone().expect("remote http built"),
                            cache.clone(),
                        ));
                        chat_client = Some(client.clone());
                        client
                    }
                };
                let prompt_strategy = build_prompt_strategy(*strategy, config, items)?;
                let judge = LlmJudge::new(client, prompt_strategy)
                    .with_text_budget(config.text_budget)
                    .with_name(id.clone());
                Ranker::Pairwise {
                    judge: Box::new(judge),
                    policy: config.rerank_policy(),
                }
            }
        };
        rankers.push(NamedRanker { id, ranker });
    }
    Ok(BuiltRankers {
        rankers,
        chat_client,
    })
}

fn harm_pct(fraction: f64) -> u32 {
    (fraction * 100.0).round() as u32
}

/// Runs the paired evaluation with pre-built rankers over in-memory
/// items. Sequences are sampled once per harm fraction and shared by
/// every ranker.
pub async fn run_with_rankers(
    config: &ExperimentConfig,
    items: &[ContentItem],
    rankers: &[NamedRanker],
) -> Result<MetricsReport, HarnessError> {
    config.validate()?;
    let mut sequence_rows = Vec::new();

    for &fraction in &config.harm_fractions {
        let sequences = sample_sequences(items, config.n, config.m, fraction, config.seed)?;
        let pct = harm_pct(fraction);
        for ranker in rankers {
            for (sequence_index, seq) in sequences.iter().enumerate() {
                let (ranked, telemetry) = ranker.apply(seq).await?;
                if let Err(violation) = validate_ranked(seq, &ranked) {
                    return Err(HarnessError::Internal {
                        message: format!(
                            "ranker '{}' produced an invalid ranking: {violation}",
                            ranker.id
                        ),
                    });
                }
                let labels = ranked.labels().map_err(|e| HarnessError::Internal {
                    message: format!("ranked sequence lost labels: {e}"),
                })?;
                let metrics = compute_all(&labels, &config.k_tp, &config.k_pp)?;
                sequence_rows.push(SequenceRow {
                    config_id: ranker.id.clone(),
                    harm_pct: pct,
                    sequence_index,
                    n: config.n,
                    metrics,
                    telemetry,
                });
            }
        }
    }

    let aggregates = aggregate(&sequence_rows)?;
    Ok(MetricsReport {
        config: RunSummary {
            n: config.n,
            m: config.m,
            seed: config.seed,
            harm_fractions: config.harm_fractions.clone(),
            k_tp: config.k_tp.clone(),
            k_pp: config.k_pp.clone(),
            rankers: rankers.iter().map(|r| r.id.clone()).collect(),
        },
        aggregates,
        sequences: sequence_rows,
        client_stats: None,
    })
}

/// Loads the dataset, builds rankers from the environment's credentials,
/// runs the paired evaluation, and attaches client statistics.
pub async fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport, HarnessError> {
    let items = load_dataset(&config.dataset)?;
    let credentials = Credentials::from_env();
    let built = build_rankers(config, &credentials, &items)?;
    let mut report = run_with_rankers(config, &items, &built.rankers).await?;
    if let Some(client) = &built.chat_client {
        report.client_stats = Some(client.stats());
        client.flush_cache()?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ewn;

    fn pool() -> Vec<ContentItem> {
        let mut items = Vec::new();
        for i in 0..12 {
            items.push(
                ContentItem::labeled(
                    format!("h{i:02}"),
                    format!("harmful {i}"),
                    HarmLabel::Harmful,
                )
                .unwrap(),
            );
        }
        for i in 0..28 {
            items.push(
                ContentItem::labeled(
                    format!("n{i:02}"),
                    format!("harmless {i}"),
                    HarmLabel::Harmless,
                )
                .unwrap(),
            );
        }
        items
    }

    fn base_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::new("unused.jsonl");
        config.m = 5;
        config.harm_fractions = vec![0.3];
        config.seed = 11;
        config
    }

    #[test]
    fn ranker_tokens_parse() {
        assert_eq!(
            RankerConfig::parse("original", StrategyKind::ZeroShot).unwrap(),
            RankerConfig::Original
        );
        assert_eq!(
            RankerConfig::parse("noisy:0.8", StrategyKind::ZeroShot).unwrap(),
            RankerConfig::Noisy { accuracy: 0.8 }
        );
        assert_eq!(
            RankerConfig::parse("llm", StrategyKind::FewShotIcl).unwrap(),
            RankerConfig::Llm {
                strategy: StrategyKind::FewShotIcl
            }
        );
        assert_eq!(
            RankerConfig::parse("llm:zero-shot-pe", StrategyKind::ZeroShot).unwrap(),
            RankerConfig::Llm {
                strategy: StrategyKind::ZeroShotPe
            }
        );
        assert!(RankerConfig::parse("noisy:1.5", StrategyKind::ZeroShot).is_err());
        assert!(RankerConfig::parse("bogus", StrategyKind::ZeroShot).is_err());
    }

    #[test]
    fn validation_flags_bad_parameters() {
        let mut config = base_config();
        config.n = 1;
        assert!(config.validate().is_err());

        let mut config = base_config();
        config.harm_fractions = vec![0.0];
        assert!(config.validate().is_err());

        let mut config = base_config();
        config.k_tp = vec![25];
        assert!(config.validate().is_err());

        let mut config = base_config();
        config.n = 4;
        config.k_tp = vec![2];
        config.harm_fractions = vec![0.05];
        let warnings = config.validate().unwrap();
        assert_eq!(warnings.len(), 1, "{warnings:?}");
        assert!(warnings[0].contains("degenerate"));
    }

    #[test]
    fn llm_ranker_without_key_is_config_error() {
        let mut config = base_config();
        config.rankers = vec![RankerConfig::Llm {
            strategy: StrategyKind::ZeroShot,
        }];
        match build_rankers(&config, &Credentials::default(), &pool()) {
            Err(HarnessError::Config { message }) => {
                assert!(message.contains(LLM_API_KEY_VAR))
            }
            Err(other) => panic!("unexpected {other:?}"),
            Ok(_) => panic!("expected a configuration error"),
        }
    }

    #[test]
    fn moderation_ranker_without_key_is_config_error() {
        let mut config = base_config();
        config.rankers = vec![RankerConfig::Moderation];
        assert!(matches!(
            build_rankers(&config, &Credentials::default(), &pool()),
            Err(HarnessError::Config { .. })
        ));
    }

    #[tokio::test]
    async fn oracle_run_reaches_exact_aggregates() {
        let mut config = base_config();
        config.rankers = vec![RankerConfig::Oracle];
        let built = build_rankers(&config, &Credentials::default(), &pool()).unwrap();
        let report = run_with_rankers(&config, &pool(), &built.rankers)
            .await
            .unwrap();
        let row = &report.aggregates[0];
        assert_eq!(row.ewn.mean, Some(1.0));
        assert_eq!(row.tp[&5].mean, Some(1.0));
        assert_eq!(row.tp[&10].mean, Some(1.0));
        assert_eq!(row.pp[&1].mean, Some(0.75));
        assert_eq!(row.pp[&2].mean, Some(0.80));
        assert_eq!(row.pp[&3].mean, Some(0.85));
        assert_eq!(row.telemetry.judgments, 5 * 380);
    }

    #[tokio::test]
    async fn original_ranker_matches_direct_metric_pass() {
        let mut config = base_config();
        config.rankers = vec![RankerConfig::Original];
        let items = pool();
        let built = build_rankers(&config, &Credentials::default(), &items).unwrap();
        let report = run_with_rankers(&config, &items, &built.rankers)
            .await
            .unwrap();

        let sequences = sample_sequences(
            &items,
            config.n,
            config.m,
            config.harm_fractions[0],
            config.seed,
        )
        .unwrap();
        for (row, seq) in report.sequences.iter().zip(&sequences) {
            let labels = seq.labels().unwrap();
            let direct = compute_all(&labels, &config.k_tp, &config.k_pp).unwrap();
            assert_eq!(row.metrics, direct);
        }
    }

    #[tokio::test]
    async fn original_never_beats_oracle_per_sequence() {
        let mut config = base_config();
        config.rankers = vec![RankerConfig::Original, RankerConfig::Oracle];
        let items = pool();
        let built = build_rankers(&config, &Credentials::default(), &items).unwrap();
        let report = run_with_rankers(&config, &items, &built.rankers)
            .await
            .unwrap();
        let originals: Vec<&SequenceRow> = report
            .sequences
            .iter()
            .filter(|r| r.config_id == "original")
            .collect();
        let oracles: Vec<&SequenceRow> = report
            .sequences
            .iter()
            .filter(|r| r.config_id == "oracle")
            .collect();
        assert_eq!(originals.len(), oracles.len());
        for (original, oracle) in originals.iter().zip(&oracles) {
            assert_eq!(original.sequence_index, oracle.sequence_index);
            assert!(original.metrics.ewn <= oracle.metrics.ewn);
        }
    }

    #[tokio::test]
    async fn noisy_full_accuracy_equals_oracle() {
        let mut config = base_config();
        config.rankers = vec![RankerConfig::Oracle, RankerConfig::Noisy { accuracy: 1.0 }];
        let items = pool();
        let built = build_rankers(&config, &Credentials::default(), &items).unwrap();
        let report = run_with_rankers(&config, &items, &built.rankers)
            .await
            .unwrap();
        let by_config = |id: &str| -> Vec<f64> {
            report
                .sequences
                .iter()
                .filter(|r| r.config_id == id)
                .map(|r| r.metrics.ewn)
                .collect()
        };
        assert_eq!(by_config("oracle"), by_config("noisy-1.00"));
    }

    #[tokio::test]
    async fn paired_design_shares_sequences() {
        let items = pool();
        let config = base_config();
        let a = sample_sequences(&items, config.n, config.m, 0.3, config.seed).unwrap();
        let b = sample_sequences(&items, config.n, config.m, 0.3, config.seed).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let ids = |s: &ContentSequence| -> Vec<String> {
                s.items().iter().map(|i| i.id().to_string()).collect()
            };
            assert_eq!(ids(x), ids(y));
        }
    }

    #[tokio::test]
    async fn oracle_outputs_have_perfect_ewn_even_via_report() {
        let mut config = base_config();
        config.m = 3;
        config.rankers = vec![RankerConfig::Oracle];
        let items = pool();
        let built = build_rankers(&config, &Credentials::default(), &items).unwrap();
        let report = run_with_rankers(&config, &items, &built.rankers)
            .await
            .unwrap();
        for row in &report.sequences {
            assert_eq!(row.metrics.ewn, 1.0);
        }
        // Cross-check one sequence by hand.
        let sequences = sample_sequences(&items, config.n, config.m, 0.3, config.seed).unwrap();
        let labels = sequences[0].labels().unwrap();
        assert!(ewn(&labels).unwrap().value <= 1.0);
    }
}

//! Oracles: pluggable assessors that accept or reject candidate mappings.
//!
//! Two production implementations exist. [`SimulatedOracle`] answers from the
//! reference alignment, flipping each answer with a configured probability,
//! deterministically per mapping. [`LlmOracle`] asks a chat-completions
//! endpoint. [`ReplayOracle`] stands in when every answer must come from a
//! previously persisted verdict log.

mod batch;
mod limiter;
mod llm;
mod log;
mod simulated;

use std::collections::BTreeMap;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::alignment::{Decision, MappingKey};
use crate::prompt::{PromptInstance, PromptTemplateId, SystemPromptId};

pub use batch::{batch_assess, BatchOptions, VerdictCache};
pub use limiter::RateLimiter;
pub use llm::{LlmConfig, LlmOracle};
pub use log::{read_verdict_log, VerdictLogRecord, VerdictLogWriter};
pub use simulated::SimulatedOracle;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("authentication rejected (HTTP {status}); check the API key")]
    Auth { status: u16 },
    #[error("replay log has no verdict for {key} under model {model:?}")]
    ReplayMiss { key: MappingKey, model: String },
    #[error("verdict log {path}: {message}")]
    Log { path: String, message: String },
    #[error("oracle configuration: {0}")]
    Config(String),
}

/// Outcome of assessing one mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub decision: Decision,
    /// Completed validation attempts (throttling retries excluded).
    pub attempts: u32,
    /// Verbatim content of the response that settled the decision, when the
    /// oracle has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

impl OracleVerdict {
    pub fn decided(decision: Decision) -> Self {
        OracleVerdict {
            decision,
            attempts: 1,
            raw_response: None,
            input_tokens: None,
            output_tokens: None,
        }
    }
}

/// An assessor of candidate mappings.
///
/// `assess` returns `Err` only for conditions that invalidate the whole run
/// (bad credentials, replay miss); per-mapping trouble degrades to
/// [`Decision::Abstain`] instead.
#[async_trait]
pub trait Oracle: Send + Sync {
    /// Stable identifier stored in verdict logs and cache keys.
    fn model_id(&self) -> &str;

    async fn assess(&self, prompt: &PromptInstance) -> Result<OracleVerdict, OracleError>;
}

/// Identity of one oracle consultation. Verdicts are interchangeable only
/// when all four coordinates agree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConsultationKey {
    pub template: PromptTemplateId,
    pub system: SystemPromptId,
    pub mapping: MappingKey,
    pub model: String,
}

impl ConsultationKey {
    pub fn of(prompt: &PromptInstance, model: &str) -> Self {
        ConsultationKey {
            template: prompt.template,
            system: prompt.system,
            mapping: prompt.mapping_key.clone(),
            model: model.to_string(),
        }
    }
}

/// Oracle that answers exclusively from a pre-recorded verdict log. Any miss
/// is a hard error: replay must never fall back to the network.
pub struct ReplayOracle {
    model: String,
}

impl ReplayOracle {
    /// `model` must match the model id stored in the log being replayed.
    pub fn new(model: impl Into<String>) -> Self {
        ReplayOracle {
            model: model.into(),
        }
    }

    /// Builds the cache a replay run starts from.
    pub fn cache_from_records(records: &[VerdictLogRecord]) -> VerdictCache {
        let mut cache = VerdictCache::default();
        for record in records {
            cache.insert(record.consultation_key(), record.verdict());
        }
        cache
    }
}

#[async_trait]
impl Oracle for ReplayOracle {
    fn model_id(&self) -> &str {
        &self.model
    }

    async fn assess(&self, prompt: &PromptInstance) -> Result<OracleVerdict, OracleError> {
        Err(OracleError::ReplayMiss {
            key: prompt.mapping_key.clone(),
            model: self.model.clone(),
        })
    }
}

/// Declarative oracle selection, as it appears in run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    /// Reference-backed assessor with a seeded error rate.
    Simulated {
        #[serde(default)]
        error_rate: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Chat-completions endpoint.
    Llm(LlmConfig),
    /// Answers only from a previously recorded verdict log; the network is
    /// never touched.
    Replay { log: std::path::PathBuf },
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        match self {
            OracleConfig::Simulated { error_rate, .. } => {
                if !(0.0..=1.0).contains(error_rate) {
                    return Err(OracleError::Config(format!(
                        "error_rate must be within [0, 1], got {error_rate}"
                    )));
                }
                Ok(())
            }
            OracleConfig::Llm(config) => config.validate(),
            OracleConfig::Replay { log } => {
                if log.as_os_str().is_empty() {
                    return Err(OracleError::Config(
                        "replay log path must not be empty".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Instantiates the oracle. The reference keys feed the simulated
    /// variant; the other variants ignore them.
    pub fn instantiate(
        &self,
        reference: impl IntoIterator<Item = MappingKey>,
    ) -> Result<Box<dyn Oracle>, OracleError> {
        self.validate()?;
        match self {
            OracleConfig::Simulated { error_rate, seed } => Ok(Box::new(SimulatedOracle::new(
                *error_rate,
                *seed,
                reference,
            ))),
            OracleConfig::Llm(config) => Ok(Box::new(LlmOracle::new(config.clone())?)),
            OracleConfig::Replay { log } => {
                let records = read_verdict_log(log)?;
                let model = records.first().map(|r| r.model.clone()).ok_or_else(|| {
                    OracleError::Config(format!("replay log {} holds no verdicts", log.display()))
                })?;
                Ok(Box::new(ReplayOracle::new(model)))
            }
        }
    }
}

/// Per-run overrides for the built-in system prompt texts, keyed by id.
pub type SystemPromptOverrides = BTreeMap<SystemPromptId, String>;

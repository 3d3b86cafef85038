//! Chat-completions oracle with structured output and a validation loop.

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::time::{sleep, Duration};

use crate::alignment::Decision;
use crate::prompt::PromptInstance;

use super::{Oracle, OracleError, OracleVerdict};

/// Waits on HTTP 429 tolerated per request before the attempt is written
/// off as failed.
const MAX_THROTTLE_WAITS: u32 = 5;

fn default_temperature() -> f64 {
    0.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_timeout_secs() -> u64 {
    30
}
fn default_max_in_flight() -> usize {
    8
}
fn default_rpm_limit() -> u32 {
    500
}

/// Connection settings for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    /// Full URL of the chat completions route.
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token. Unset
    /// means anonymous access (local gateways, test servers).
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    /// Sampling temperature; zero pins the model to its modal answer.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Re-asks after a malformed reply, beyond the first attempt.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
    /// Ceiling on concurrently outstanding requests in a batch.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Requests-per-minute budget enforced by the batch token bucket.
    #[serde(default = "default_rpm_limit")]
    pub rpm_limit: u32,
}

impl LlmConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        LlmConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            api_key_env_var: None,
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            request_timeout_secs: default_timeout_secs(),
            max_in_flight: default_max_in_flight(),
            rpm_limit: default_rpm_limit(),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.endpoint_url.is_empty() {
            return Err(OracleError::Config("endpoint_url must not be empty".into()));
        }
        if self.model_name.is_empty() {
            return Err(OracleError::Config("model_name must not be empty".into()));
        }
        if self.max_in_flight == 0 {
            return Err(OracleError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        if self.rpm_limit == 0 {
            return Err(OracleError::Config("rpm_limit must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(OracleError::Config(format!(
                "temperature must be a finite non-negative number, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// The structured answer demanded from the endpoint.
#[derive(Debug, Deserialize)]
struct AnswerDocument {
    answer: bool,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

enum SendOutcome {
    /// HTTP 200 with message content extracted.
    Content(String, Option<Usage>),
    Auth(u16),
    Throttled(Option<Duration>),
    /// Transport error, bad status, or a body without content.
    Failure(String),
}

/// Oracle that asks a chat-completions endpoint one boolean question per
/// mapping.
///
/// Every attempt sends the identical payload: a malformed reply says nothing
/// about the question, so the question does not change. Replies are accepted
/// either as the requested `{"answer": <bool>}` document or, for providers
/// that ignore the schema, as free text containing exactly one of the
/// whole words "true"/"false" (case-insensitive).
pub struct LlmOracle {
    config: LlmConfig,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl LlmOracle {
    pub fn new(config: LlmConfig) -> Result<Self, OracleError> {
        config.validate()?;
        let api_key = match &config.api_key_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                OracleError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| OracleError::Config(format!("building HTTP client: {e}")))?;
        Ok(LlmOracle {
            config,
            api_key,
            client,
        })
    }

    fn request_body(&self, prompt: &PromptInstance) -> serde_json::Value {
        let mut messages = Vec::new();
        if let Some(system_text) = &prompt.system_text {
            messages.push(json!({"role": "system", "content": system_text}));
        }
        messages.push(json!({"role": "user", "content": prompt.user_text}));
        json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": "mapping_assessment",
                    "strict": true,
                    "schema": {
                        "type": "object",
                        "properties": {"answer": {"type": "boolean"}},
                        "required": ["answer"],
                        "additionalProperties": false
                    }
                }
            }
        })
    }

    async fn send(&self, body: &serde_json::Value) -> SendOutcome {
        let mut request = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send().await {
            Ok(r) => r,
            Err(e) => return SendOutcome::Failure(format!("transport: {e}")),
        };
        let status = response.status().as_u16();
        match status {
            200 => {}
            401 | 403 => return SendOutcome::Auth(status),
            429 => {
                let retry_after = response
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.parse::<u64>().ok())
                    .map(Duration::from_secs);
                return SendOutcome::Throttled(retry_after);
            }
            _ => {
                let body = response.text().await.unwrap_or_default();
                let head: String = body.chars().take(200).collect();
                return SendOutcome::Failure(format!("HTTP {status}: {head}"));
            }
        }
        let parsed: ChatResponse = match response.json().await {
            Ok(p) => p,
            Err(e) => return SendOutcome::Failure(format!("undecodable body: {e}")),
        };
        let usage = parsed.usage;
        match parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
        {
            Some(content) => SendOutcome::Content(content, usage),
            None => SendOutcome::Failure("response had no message content".into()),
        }
    }
}

#[async_trait]
impl Oracle for LlmOracle {
    fn model_id(&self) -> &str {
        &self.config.model_name
    }

    async fn assess(&self, prompt: &PromptInstance) -> Result<OracleVerdict, OracleError> {
        let body = self.request_body(prompt);
        let max_attempts = self.config.max_retries + 1;
        let mut throttle_waits = 0u32;
        let mut last_raw: Option<String> = None;

        for attempt in 1..=max_attempts {
            let outcome = loop {
                match self.send(&body).await {
                    SendOutcome::Throttled(retry_after) if throttle_waits < MAX_THROTTLE_WAITS => {
                        throttle_waits += 1;
                        let wait = retry_after.unwrap_or_else(|| {
                            Duration::from_millis(500) * 2u32.pow(throttle_waits - 1)
                        });
                        tracing::debug!(?wait, "throttled by endpoint, backing off");
                        sleep(wait.min(Duration::from_secs(30))).await;
                    }
                    other => break other,
                }
            };
            match outcome {
                SendOutcome::Content(content, usage) => {
                    if let Some(decision) = interpret(&content) {
                        let (input_tokens, output_tokens) = match usage {
                            Some(u) => (u.prompt_tokens, u.completion_tokens),
                            None => (None, None),
                        };
                        return Ok(OracleVerdict {
                            decision,
                            attempts: attempt,
                            raw_response: Some(content),
                            input_tokens,
                            output_tokens,
                        });
                    }
                    tracing::debug!(attempt, "reply failed validation, re-asking");
                    last_raw = Some(content);
                }
                SendOutcome::Auth(status) => return Err(OracleError::Auth { status }),
                SendOutcome::Throttled(_) => {
                    last_raw = Some("throttled beyond the backoff budget".into());
                }
                SendOutcome::Failure(description) => {
                    tracing::debug!(attempt, %description, "request failed");
                    last_raw = Some(description);
                }
            }
        }

        Ok(OracleVerdict {
            decision: Decision::Abstain,
            attempts: max_attempts,
            raw_response: last_raw,
            input_tokens: None,
            output_tokens: None,
        })
    }
}

/// Decides from reply content: the structured document first, then the
/// whole-token fallback. Content naming both booleans, or neither, is
/// malformed.
fn interpret(content: &str) -> Option<Decision> {
    if let Ok(doc) = serde_json::from_str::<AnswerDocument>(content.trim()) {
        return Some(if doc.answer {
            Decision::Accept
        } else {
            Decision::Reject
        });
    }
    let mut saw_true = false;
    let mut saw_false = false;
    for token in content.split(|c: char| !c.is_ascii_alphanumeric()) {
        if token.eq_ignore_ascii_case("true") {
            saw_true = true;
        } else if token.eq_ignore_ascii_case("false") {
            saw_false = true;
        }
    }
    match (saw_true, saw_false) {
        (true, false) => Some(Decision::Accept),
        (false, true) => Some(Decision::Reject),
        _ => None,
    }
}

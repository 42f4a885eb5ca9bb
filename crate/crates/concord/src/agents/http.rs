//! Chat-completions HTTP backend.
//!
//! One POST per trajectory to `{base_url}/chat/completions` with the full
//! context as a single user message. Transient failures (connect/timeout,
//! 429, 5xx) retry with exponential backoff up to `max_retries`; auth and
//! other 4xx classes fail immediately. The service finish reason maps onto
//! the agent enum ("length" -> LengthBudget, anything else -> Stop).

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::debate::GenParams;

use super::{Agent, FinishReason, Generation};

/// Connection settings for a chat-completions-compatible service.
#[derive(Debug, Clone)]
pub struct HttpModelSpec {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token; empty disables auth.
    pub api_key_env: String,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; doubles per attempt.
    pub backoff_base: Duration,
}

impl HttpModelSpec {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        HttpModelSpec {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: "CONCORD_API_KEY".into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(250),
        }
    }
}

pub struct HttpAgent {
    spec: HttpModelSpec,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl HttpAgent {
    pub fn new(spec: HttpModelSpec) -> Result<Self, String> {
        if spec.base_url.is_empty() {
            return Err("base_url must be non-empty".into());
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(spec.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpAgent { spec, client })
    }

    fn error(text: impl Into<String>) -> Generation {
        Generation {
            text: text.into(),
            finish_reason: FinishReason::Error,
        }
    }
}

impl Agent for HttpAgent {
    fn generate(&mut self, context: &str, params: &GenParams) -> Generation {
        let api_key = if self.spec.api_key_env.is_empty() {
            None
        } else {
            match std::env::var(&self.spec.api_key_env) {
                Ok(k) => Some(k),
                Err(_) => {
                    return Self::error(format!(
                        "api key env var {} not set",
                        self.spec.api_key_env
                    ))
                }
            }
        };
        let url = format!("{}/chat/completions", self.spec.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": context}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_new_tokens,
        });

        let mut last_diag = String::new();
        for attempt in 0..=self.spec.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.spec.backoff_base * 2u32.pow(attempt - 1));
            }
            let mut req = self.client.post(&url).json(&body);
            if let Some(key) = &api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Err(e) => {
                    last_diag = format!("transport error: {e}");
                    continue; // connect/timeout class: retry
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: Result<ChatResponse, _> = resp.json();
                        return match parsed {
                            Ok(cr) => match cr.choices.into_iter().next() {
                                Some(choice) => Generation {
                                    text: choice.message.content,
                                    finish_reason: match choice.finish_reason.as_deref() {
                                        Some("length") => FinishReason::LengthBudget,
                                        _ => FinishReason::Stop,
                                    },
                                },
                                None => Self::error("response had no choices"),
                            },
                            Err(e) => Self::error(format!("bad response body: {e}")),
                        };
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_diag = format!("retryable status {status}");
                        continue;
                    }
                    // Auth and other client errors: no retry.
                    return Self::error(format!("request rejected with status {status}"));
                }
            }
        }
        Self::error(format!(
            "exhausted {} retries: {last_diag}",
            self.spec.max_retries
        ))
    }
}

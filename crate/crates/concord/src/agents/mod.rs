//! Pluggable generation backends.
//!
//! [`simulated`] provides seeded agents with known answer distributions for
//! verifiable desk-scale experiments; [`http`] is a chat-completions client
//! for real model services. The debate engine drives both through [`Agent`].

pub mod http;
pub mod simulated;

pub use http::{HttpAgent, HttpModelSpec};
pub use simulated::{AnswerDist, SimulatedAgent, SimulatedBackend, SimulatedAgentSpec};

use serde::{Deserialize, Serialize};

use crate::debate::GenParams;

/// How a generation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    /// Natural stop.
    Stop,
    /// max_new_tokens budget exhausted; the response is truncated.
    LengthBudget,
    /// Backend failure; `text` carries a diagnostic, not a response.
    Error,
}

/// One generation result.
#[derive(Debug, Clone)]
pub struct Generation {
    pub text: String,
    pub finish_reason: FinishReason,
}

/// A generation backend. The engine serializes calls per agent instance
/// (one debate owns its agents), so implementations take `&mut self`.
/// Backends must honor `max_new_tokens`, reporting truncation through
/// [`FinishReason::LengthBudget`].
pub trait Agent {
    fn generate(&mut self, context: &str, params: &GenParams) -> Generation;
}

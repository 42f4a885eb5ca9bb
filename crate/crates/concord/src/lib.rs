//! Desk-scale toolkit for consensus-aligned post-training experiments.
//!
//! The crate orchestrates multi-round debates among pluggable agents, extracts
//! majority-vote consensus from the final round, builds preference datasets
//! from the consensus/dissent split, trains a small exact categorical policy
//! with four majority-vote objectives (SFT, DPO, KTO, GRPO), and measures
//! self-consistency and accuracy with sampling estimators.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`answers`]: final-answer extraction (strict/relaxed) and answer equality
//! - [`agents`]: generation backends (seeded simulated agents, HTTP client)
//! - [`debate`]: the iterative debate engine and transcript persistence
//! - [`consensus`]: majority vote, consensus partition, dataset builders
//! - [`policy`]: the exact n-gram categorical policy and its tokenizer
//! - [`objectives`]: losses with analytic gradients and the training loop
//! - [`metrics`]: consistency curves, Pass@t/MV@t, agreement histograms
//! - [`pipeline`]: configuration, manifests, and the outer iteration loop
//!
//! Batchable inner loops go through [`par`], which dispatches to rayon when
//! the default `parallel` feature is enabled and to a sequential fallback
//! otherwise; results are order-preserving either way.

pub mod agents;
pub mod answers;
pub mod consensus;
pub mod debate;
pub mod metrics;
pub mod objectives;
pub mod par;
pub mod pipeline;
pub mod policy;

pub use answers::{Answer, AnswerKind, ParseMode, ParseOutcome};
pub use debate::{DebateConfig, DebateTranscript, GenParams, Trajectory};
pub use policy::{ToyPolicy, Vocab};

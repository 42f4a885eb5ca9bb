//! Configuration, manifests, and the outer debate -> build -> train -> eval
//! loop.

mod config;
mod manifest;
mod stages;

pub use config::{
    Ablations, AgentsConfig, BackendKind, DebateSection, EvalSection, LabelSource,
    ObjectiveSection, PairingKind, PolicySection, RawDist, ReferenceMode, RunConfig,
    SelectionStrategy, SimTableFile, TaskConfig, TaskFile, TaskPrompt, TaskSet, TiePolicyConfig,
};
pub use manifest::{sha256_file, ArtifactEntry, IterationRecord, RunLock, RunManifest};
pub use stages::{EvalSummary, Run};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output dir locked by another instance: {0}")]
    Locked(PathBuf),
    #[error("missing artifact {0} (run the previous stage first)")]
    MissingArtifact(PathBuf),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("{stage} failed at iteration {iteration} (last good iteration {last_good}): {message}")]
    Stage {
        stage: String,
        iteration: usize,
        last_good: usize,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error(transparent)]
    Debate(#[from] crate::debate::DebateError),
    #[error(transparent)]
    Consensus(#[from] crate::consensus::ConsensusError),
    #[error(transparent)]
    Objective(#[from] crate::objectives::ObjectiveError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
}

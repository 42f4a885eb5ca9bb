//! Run configuration: one TOML file per run, key names mirroring the
//! config structs. Secrets stay in environment variables (the HTTP backend
//! reads its key from the env var named in the config).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{AnswerDist, HttpModelSpec};
use crate::answers::{Answer, AnswerKind, ParserChoice};
use crate::consensus::{BalancePolicy, ContextMode, TiePolicy};
use crate::debate::GenParams;
use crate::objectives::{Method, ObjectiveHyperparams};

use super::PipelineError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub method: Method,
    pub task: TaskConfig,
    pub debate: DebateSection,
    pub agents: AgentsConfig,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub ablations: Ablations,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskConfig {
    pub questions_file: PathBuf,
    pub answer_kind: AnswerKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebateSection {
    pub num_agents: usize,
    pub num_rounds: usize,
    pub batch_size: usize,
    pub iterations: usize,
    #[serde(default)]
    pub parser: ParserChoice,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default)]
    pub gen: GenParams,
}

fn default_retries() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Simulated,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentsConfig {
    pub backend: BackendKind,
    /// Simulated: JSON answer-table file.
    #[serde(default)]
    pub table_file: Option<PathBuf>,
    #[serde(default = "default_grounding")]
    pub grounding: f64,
    #[serde(default = "default_verbosity_min")]
    pub verbosity_min: usize,
    #[serde(default = "default_verbosity_max")]
    pub verbosity_max: usize,
    /// HTTP backend fields.
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_http_retries")]
    pub max_retries: u32,
}

fn default_grounding() -> f64 {
    0.35
}
fn default_verbosity_min() -> usize {
    2
}
fn default_verbosity_max() -> usize {
    6
}
fn default_api_key_env() -> String {
    "CONCORD_API_KEY".into()
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_http_retries() -> u32 {
    3
}

impl AgentsConfig {
    pub fn http_spec(&self) -> Result<HttpModelSpec, PipelineError> {
        let base_url = self
            .base_url
            .clone()
            .ok_or_else(|| PipelineError::Config("http backend requires agents.base_url".into()))?;
        let model_name = self
            .model_name
            .clone()
            .ok_or_else(|| PipelineError::Config("http backend requires agents.model_name".into()))?;
        Ok(HttpModelSpec {
            base_url,
            model_name,
            api_key_env: self.api_key_env.clone(),
            timeout: Duration::from_secs(self.timeout_secs),
            max_retries: self.max_retries,
            backoff_base: Duration::from_millis(250),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySection {
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_filler_continue")]
    pub filler_continue: f64,
    /// Divergent per-agent checkpoints: each agent trains on its own
    /// trajectory data and keeps its own policy across iterations. Off by
    /// default (all clones share one policy per iteration).
    #[serde(default)]
    pub per_agent: bool,
}

fn default_order() -> usize {
    2
}
fn default_filler_continue() -> f64 {
    0.75
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            order: default_order(),
            filler_continue: default_filler_continue(),
            per_agent: false,
        }
    }
}

/// Reference handling across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Snapshot the current policy at each iteration's training start.
    #[default]
    Reset,
    /// Keep the original base policy as the reference throughout.
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveSection {
    #[serde(flatten)]
    pub hyperparams: ObjectiveHyperparams,
    #[serde(default)]
    pub reference: ReferenceMode,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        ObjectiveSection {
            hyperparams: ObjectiveHyperparams::default(),
            reference: ReferenceMode::Reset,
        }
    }
}

/// Which answers label the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    #[default]
    Consensus,
    GroundTruth,
}

/// How DPO pairs are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Majority/minority partition (G+ x G-).
    #[default]
    Consensus,
    /// Confidence ranking by policy log-probability (top half vs bottom half).
    Logprob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingKind {
    AllPairs,
    MaxPerPrompt,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ablations {
    #[serde(default)]
    pub context: ContextMode,
    #[serde(default)]
    pub labels: LabelSource,
    #[serde(default = "default_tie")]
    pub tie_policy: TiePolicyConfig,
    #[serde(default = "default_pairing")]
    pub pairing: PairingKind,
    #[serde(default = "default_max_pairs")]
    pub max_pairs_per_prompt: usize,
    #[serde(default = "default_balance")]
    pub balance: BalancePolicy,
    #[serde(default)]
    pub selection: SelectionStrategy,
    /// Count non-parseable final responses as dissent.
    #[serde(default)]
    pub nonparseable_negatives: bool,
}

/// Serializable tie policy (the random variant derives its seed from the
/// run seed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicyConfig {
    Drop,
    First,
    Random,
}

impl TiePolicyConfig {
    pub fn resolve(&self, seed: u64) -> TiePolicy {
        match self {
            TiePolicyConfig::Drop => TiePolicy::Drop,
            TiePolicyConfig::First => TiePolicy::First,
            TiePolicyConfig::Random => TiePolicy::Random(seed),
        }
    }
}

fn default_tie() -> TiePolicyConfig {
    TiePolicyConfig::Drop
}
fn default_pairing() -> PairingKind {
    PairingKind::AllPairs
}
fn default_max_pairs() -> usize {
    4
}
fn default_balance() -> BalancePolicy {
    BalancePolicy::Equal
}

impl Default for Ablations {
    fn default() -> Self {
        Ablations {
            context: ContextMode::default(),
            labels: LabelSource::default(),
            tie_policy: default_tie(),
            pairing: default_pairing(),
            max_pairs_per_prompt: default_max_pairs(),
            balance: default_balance(),
            selection: SelectionStrategy::default(),
            nonparseable_negatives: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSection {
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default = "default_samples")]
    pub samples_per_prompt: usize,
    #[serde(default)]
    pub permutation_average: bool,
}

fn default_holdout() -> f64 {
    0.25
}
fn default_samples() -> usize {
    20
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            holdout_fraction: default_holdout(),
            samples_per_prompt: default_samples(),
            permutation_average: false,
        }
    }
}

impl RunConfig {
    /// Loads a TOML config; relative file paths resolve against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("bad config {}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.task.questions_file = resolve(dir, &cfg.task.questions_file);
            if let Some(t) = &cfg.agents.table_file {
                cfg.agents.table_file = Some(resolve(dir, t));
            }
            cfg.output_dir = resolve(dir, &cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.debate.num_agents < 1
            || self.debate.num_rounds < 1
            || self.debate.batch_size < 1
            || self.debate.iterations < 1
        {
            return Err(PipelineError::Config(
                "debate.{num_agents,num_rounds,batch_size,iterations} must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.eval.holdout_fraction) {
            return Err(PipelineError::Config(
                "eval.holdout_fraction must be in [0,1)".into(),
            ));
        }
        if self.eval.samples_per_prompt < 1 {
            return Err(PipelineError::Config("eval.samples_per_prompt must be >= 1".into()));
        }
        if self.agents.backend == BackendKind::Simulated && self.agents.table_file.is_none() {
            return Err(PipelineError::Config(
                "simulated backend requires agents.table_file".into(),
            ));
        }
        if self.ablations.selection == SelectionStrategy::Logprob && self.method != Method::Dpo {
            return Err(PipelineError::Config(
                "ablations.selection = \"logprob\" applies to method = \"dpo\" only".into(),
            ));
        }
        if self.ablations.labels == LabelSource::GroundTruth && self.debate.num_rounds < 1 {
            return Err(PipelineError::Config("ground-truth labels need a debate".into()));
        }
        Ok(())
    }

    /// Stable digest of the full configuration.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

/// One task prompt with optional ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskPrompt {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub answer: Option<String>,
}

/// Task file: answer kind plus the prompt list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskFile {
    pub kind: AnswerKind,
    pub prompts: Vec<TaskPrompt>,
}

/// Loaded task with parsed ground-truth answers.
#[derive(Debug, Clone)]
pub struct TaskSet {
    pub kind: AnswerKind,
    pub prompts: Vec<TaskPrompt>,
}

impl TaskSet {
    pub fn load(path: &Path, expected_kind: AnswerKind) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: TaskFile = serde_json::from_slice(&bytes)
            .map_err(|e| PipelineError::Config(format!("bad task file {}: {e}", path.display())))?;
        if file.kind != expected_kind {
            return Err(PipelineError::Config(format!(
                "task file kind {:?} does not match config answer_kind {:?}",
                file.kind, expected_kind
            )));
        }
        if file.prompts.is_empty() {
            return Err(PipelineError::Config("task file has no prompts".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &file.prompts {
            if p.question.trim().is_empty() {
                return Err(PipelineError::Config(format!("prompt {} has empty question", p.id)));
            }
            if !seen.insert(&p.id) {
                return Err(PipelineError::Config(format!("duplicate prompt id {}", p.id)));
            }
            if let Some(a) = &p.answer {
                if Answer::from_raw(a, file.kind).is_none() {
                    return Err(PipelineError::Config(format!(
                        "prompt {}: ground truth {a:?} is not a valid {:?} answer",
                        p.id, file.kind
                    )));
                }
            }
        }
        Ok(TaskSet {
            kind: file.kind,
            prompts: file.prompts,
        })
    }

    pub fn ground_truth(&self, id: &str) -> Option<Answer> {
        self.prompts
            .iter()
            .find(|p| p.id == id)
            .and_then(|p| p.answer.as_deref())
            .and_then(|a| Answer::from_raw(a, self.kind))
    }

    pub fn has_ground_truth(&self) -> bool {
        self.prompts.iter().all(|p| p.answer.is_some())
    }
}

/// Raw distribution entry in the answers-table file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDist {
    pub answers: Vec<(String, f64)>,
    #[serde(default)]
    pub nonparseable_prob: f64,
}

/// Simulated answers table file: a default distribution plus per-prompt
/// overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimTableFile {
    #[serde(default)]
    pub default: Option<RawDist>,
    #[serde(default)]
    pub overrides: BTreeMap<String, RawDist>,
}

impl SimTableFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| PipelineError::Config(format!("bad table file {}: {e}", path.display())))
    }

    pub fn resolve_dist(&self, raw: &RawDist, kind: AnswerKind) -> Result<AnswerDist, PipelineError> {
        let mut answers = Vec::with_capacity(raw.answers.len());
        for (s, w) in &raw.answers {
            let a = Answer::from_raw(s, kind).ok_or_else(|| {
                PipelineError::Config(format!("table answer {s:?} is not a valid {kind:?} answer"))
            })?;
            answers.push((a, *w));
        }
        let dist = AnswerDist {
            answers,
            nonparseable_prob: raw.nonparseable_prob,
        };
        dist.validate().map_err(PipelineError::Config)?;
        Ok(dist)
    }
}

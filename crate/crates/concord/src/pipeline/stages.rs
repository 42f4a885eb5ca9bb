//! Pipeline stages: debate -> build -> train -> eval, plus the outer
//! iteration loop that feeds each trained policy back into the next
//! iteration's simulated agents.
//!
//! Every stage reads inputs produced by the previous stage (as listed in
//! the manifest), writes its artifacts under the run's output directory,
//! and registers checksums. With the simulated backend and a fixed seed the
//! whole pipeline is deterministic: two runs produce identical checksum
//! maps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    simulated::AnswerSource, Agent, FinishReason, HttpAgent, SimulatedAgentSpec, SimulatedBackend,
};
use crate::answers::{parse_relaxed, parse_strict, Answer};
use crate::consensus::{
    self, build_dpo_pairs, build_grpo_targets, build_kto_examples, build_sft_dataset, partition,
    partition_by_label, BalancePolicy, ConsensusPartition, PairingStrategy,
    PartitionOptions, PreferencePair,
};
use crate::debate::{
    initial_prompt, run_debate_batch, AgentFactory, DebateConfig, DebateTranscript, GenParams,
    PromptSpec,
};
use crate::metrics::{
    self, agreement_histogram, consistency_curve, mv_at_t, pass_at_t, sampling_consistency,
    AgreementHistogram, SampleSet,
};
use crate::objectives::{train_from, Method, TrainingData};
use crate::par;
use crate::policy::{AnswerModelConfig, ReferenceSnapshot, ToyPolicy, Vocab};

use super::config::{
    BackendKind, LabelSource, PairingKind, ReferenceMode, RunConfig, SelectionStrategy,
    SimTableFile, TaskSet,
};
use super::manifest::{RunLock, RunManifest};
use super::PipelineError;

const SALT_SPLIT: u64 = 0x5eed_0001;
const SALT_DEBATE: u64 = 0x5eed_0002;
const SALT_TRAIN: u64 = 0x5eed_0003;
const SALT_EVAL_SAMPLE: u64 = 0x5eed_0004;
const SALT_EVAL_DEBATE: u64 = 0x5eed_0005;
const SALT_PAIRS: u64 = 0x5eed_0006;
const SALT_TIE: u64 = 0x5eed_0007;

fn mix(seed: u64, salt: u64, extra: u64) -> u64 {
    seed ^ salt ^ extra.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// An open run: config, task, prompt split, manifest, and the directory lock.
pub struct Run {
    pub cfg: RunConfig,
    task: TaskSet,
    train_idx: Vec<usize>,
    heldout_idx: Vec<usize>,
    manifest: RunManifest,
    _lock: RunLock,
}

/// Eval summary persisted as JSON next to the CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub label: String,
    pub n_heldout: usize,
    pub t_max: usize,
    pub mean_consistency: f64,
    pub parseable_rate: f64,
    pub unanimous_initial: f64,
    pub unanimous_final: f64,
    pub mean_agreement_final: f64,
    pub greedy_accuracy: Option<f64>,
    pub pass_at_tmax: Option<f64>,
    pub mv_at_tmax: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvalRecord {
    prompt_id: String,
    sample_index: usize,
    strict_correct: bool,
    relaxed_correct: bool,
    truncated: bool,
}

/// Scored samples for one held-out prompt.
struct PromptEval {
    set: SampleSet,
    records: Vec<EvalRecord>,
    greedy_correct: Option<bool>,
}

/// Per-debate HTTP agents; the service holds all state, so every debate
/// gets fresh clients against the same endpoint.
struct HttpFactory {
    spec: crate::agents::HttpModelSpec,
    m: usize,
}

impl AgentFactory for HttpFactory {
    fn agents_for(&self, _i: usize) -> Vec<Box<dyn Agent>> {
        (0..self.m)
            .map(|_| {
                Box::new(HttpAgent::new(self.spec.clone()).expect("client builds"))
                    as Box<dyn Agent>
            })
            .collect()
    }
}

impl Run {
    /// Opens (creating if needed) the output directory, loads the task,
    /// splits prompts into train/held-out, and acquires the lock.
    pub fn open(cfg: RunConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.output_dir)?;
        let lock = RunLock::acquire(&cfg.output_dir)?;
        let task = TaskSet::load(&cfg.task.questions_file, cfg.task.answer_kind)?;

        // Seeded held-out split, disjoint from training prompts.
        let n = task.prompts.len();
        let mut indices: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, SALT_SPLIT, 0));
        indices.shuffle(&mut rng);
        let heldout_count = if n > 1 {
            ((n as f64 * cfg.eval.holdout_fraction).round() as usize).clamp(0, n - 1)
        } else {
            0
        };
        let mut heldout_idx: Vec<usize> = indices[..heldout_count].to_vec();
        let mut train_idx: Vec<usize> = indices[heldout_count..].to_vec();
        heldout_idx.sort_unstable();
        train_idx.sort_unstable();

        let manifest_path = cfg.output_dir.join("manifest.json");
        let manifest = if manifest_path.exists() {
            let m = RunManifest::load(&manifest_path)?;
            if m.config_hash != cfg.digest() {
                return Err(PipelineError::Config(format!(
                    "output dir {} was produced by a different config",
                    cfg.output_dir.display()
                )));
            }
            m
        } else {
            RunManifest::new(cfg.digest())
        };

        Ok(Run {
            cfg,
            task,
            train_idx,
            heldout_idx,
            manifest,
            _lock: lock,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.cfg.output_dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn train_prompts(&self) -> Vec<PromptSpec> {
        self.train_idx
            .iter()
            .map(|&i| PromptSpec {
                id: self.task.prompts[i].id.clone(),
                question: self.task.prompts[i].question.clone(),
            })
            .collect()
    }

    pub fn heldout_prompts(&self) -> Vec<PromptSpec> {
        self.heldout_idx
            .iter()
            .map(|&i| PromptSpec {
                id: self.task.prompts[i].id.clone(),
                question: self.task.prompts[i].question.clone(),
            })
            .collect()
    }

    fn save_manifest(&mut self) -> Result<(), PipelineError> {
        self.manifest.save(&self.cfg.output_dir.join("manifest.json"))
    }

    fn record(&mut self, rel: &str, stage: &str, iteration: usize) -> Result<(), PipelineError> {
        let out = self.cfg.output_dir.clone();
        self.manifest.record(&out, rel, stage, iteration)?;
        self.save_manifest()
    }

    fn debate_config(&self) -> DebateConfig {
        DebateConfig {
            num_agents: self.cfg.debate.num_agents,
            num_rounds: self.cfg.debate.num_rounds,
            gen: self.cfg.debate.gen.clone(),
            batch_size: self.cfg.debate.batch_size,
            iterations: self.cfg.debate.iterations,
            parser: self.cfg.debate.parser,
            max_retries: self.cfg.debate.max_retries,
        }
    }

    fn simulated_spec(&self, seed: u64) -> Result<SimulatedAgentSpec, PipelineError> {
        let table_path = self
            .cfg
            .agents
            .table_file
            .as_ref()
            .expect("validated: simulated backend has a table file");
        let table = SimTableFile::load(table_path)?;
        let mut answer_table = BTreeMap::new();
        for (id, raw) in &table.overrides {
            answer_table.insert(id.clone(), table.resolve_dist(raw, self.task.kind)?);
        }
        let default = table
            .default
            .as_ref()
            .map(|raw| table.resolve_dist(raw, self.task.kind))
            .transpose()?;
        Ok(SimulatedAgentSpec {
            answer_table,
            default,
            grounding: self.cfg.agents.grounding,
            verbosity: (self.cfg.agents.verbosity_min, self.cfg.agents.verbosity_max),
            seed,
        })
    }

    fn all_questions(&self) -> Vec<(String, String)> {
        self.task
            .prompts
            .iter()
            .map(|p| (p.id.clone(), p.question.clone()))
            .collect()
    }

    fn simulated_factory_multi(
        &self,
        seed: u64,
        sources: Vec<AnswerSource>,
    ) -> Result<SimulatedBackend, PipelineError> {
        let spec = self.simulated_spec(seed)?;
        SimulatedBackend::with_sources(
            &spec,
            &self.all_questions(),
            self.task.kind,
            self.cfg.debate.num_agents,
            sources,
        )
        .map_err(PipelineError::Config)
    }

    /// The base policy mirrors the simulated backend's default answer
    /// distribution; built once and checkpointed.
    pub fn base_policy(&self) -> Result<ToyPolicy, PipelineError> {
        let table_path = self.cfg.agents.table_file.as_ref().ok_or_else(|| {
            PipelineError::Config("base policy construction needs agents.table_file".into())
        })?;
        let table = SimTableFile::load(table_path)?;
        let raw = table.default.as_ref().ok_or_else(|| {
            PipelineError::Config("answers table needs a \"default\" distribution".into())
        })?;
        let dist = table.resolve_dist(raw, self.task.kind)?;
        let cfg = AnswerModelConfig {
            answers: dist
                .answers
                .iter()
                .map(|(a, w)| (a.as_str(), *w))
                .collect(),
            nonparseable_prob: dist.nonparseable_prob,
            filler_continue: self.cfg.policy.filler_continue,
        };
        Ok(ToyPolicy::from_answer_model(
            Vocab::standard(),
            self.cfg.policy.order,
            &cfg,
        )?)
    }

    fn http_factory(&self) -> Result<HttpFactory, PipelineError> {
        Ok(HttpFactory {
            spec: self.cfg.agents.http_spec()?,
            m: self.cfg.debate.num_agents,
        })
    }

    fn ensure_base_checkpoint(&mut self) -> Result<PathBuf, PipelineError> {
        let path = self.cfg.output_dir.join("checkpoint_base.json");
        if !path.exists() {
            // Simulated runs mirror the table's default distribution; HTTP
            // runs have nothing to mirror and start from a uniform policy.
            let policy = match self.cfg.agents.backend {
                BackendKind::Simulated => self.base_policy()?,
                BackendKind::Http => {
                    ToyPolicy::uniform(Vocab::standard(), self.cfg.policy.order)?
                }
            };
            policy.save(&path)?;
            self.record("checkpoint_base.json", "init", 0)?;
        }
        Ok(path)
    }

    fn checkpoint_path(&self, iteration: usize) -> PathBuf {
        if iteration == 0 {
            self.cfg.output_dir.join("checkpoint_base.json")
        } else {
            self.cfg.output_dir.join(format!("checkpoint_iter{iteration}.json"))
        }
    }

    fn agent_checkpoint_rel(iteration: usize, agent: usize) -> String {
        format!("checkpoint_iter{iteration}_agent{agent}.json")
    }

    /// Loads the iteration's policy. In the per-agent variant agent 0's
    /// checkpoint stands in wherever one representative policy is needed.
    fn load_policy(&mut self, iteration: usize) -> Result<ToyPolicy, PipelineError> {
        if iteration == 0 {
            self.ensure_base_checkpoint()?;
        }
        let mut path = self.checkpoint_path(iteration);
        if !path.exists() && iteration >= 1 && self.cfg.policy.per_agent {
            path = self.cfg.output_dir.join(Self::agent_checkpoint_rel(iteration, 0));
        }
        if !path.exists() {
            return Err(PipelineError::MissingArtifact(path));
        }
        Ok(ToyPolicy::load(&path)?)
    }

    /// Loads one agent's policy for an iteration (base policy for
    /// iteration 0 or outside the per-agent variant).
    fn load_agent_policy(&mut self, iteration: usize, agent: usize) -> Result<ToyPolicy, PipelineError> {
        if iteration == 0 || !self.cfg.policy.per_agent {
            return self.load_policy(iteration);
        }
        let path = self.cfg.output_dir.join(Self::agent_checkpoint_rel(iteration, agent));
        if !path.exists() {
            return Err(PipelineError::MissingArtifact(path));
        }
        Ok(ToyPolicy::load(&path)?)
    }

    /// All agent policies for an iteration: one shared entry, or one per
    /// agent in the per-agent variant.
    fn agent_policies(&mut self, iteration: usize) -> Result<Vec<Arc<ToyPolicy>>, PipelineError> {
        if self.cfg.policy.per_agent && iteration >= 1 {
            (0..self.cfg.debate.num_agents)
                .map(|m| Ok(Arc::new(self.load_agent_policy(iteration, m)?)))
                .collect()
        } else {
            Ok(vec![Arc::new(self.load_policy(iteration)?)])
        }
    }

    /// Latest trained iteration with a checkpoint on disk (0 = base only).
    pub fn latest_iteration(&self) -> usize {
        let exists = |l: usize| {
            self.checkpoint_path(l).exists()
                || self.cfg.output_dir.join(Self::agent_checkpoint_rel(l, 0)).exists()
        };
        let mut l = 0;
        while exists(l + 1) {
            l += 1;
        }
        l
    }

    // --- debate stage -------------------------------------------------------

    /// Runs debates over the training prompts with the given iteration's
    /// agents (iteration 1 samples from the configured backend; later
    /// iterations from the previous checkpoint's policy).
    pub fn cmd_debate(&mut self, iteration: usize) -> Result<PathBuf, PipelineError> {
        let prompts = self.train_prompts();
        let cfg = self.debate_config();
        let seed = mix(self.cfg.seed, SALT_DEBATE, iteration as u64);
        let transcripts = match self.cfg.agents.backend {
            BackendKind::Http => {
                let factory = self.http_factory()?;
                run_debate_batch(&prompts, self.task.kind, &factory, &cfg)?
            }
            BackendKind::Simulated => {
                let sources = if iteration <= 1 {
                    vec![AnswerSource::Table]
                } else {
                    self.agent_policies(iteration - 1)?
                        .into_iter()
                        .map(AnswerSource::Policy)
                        .collect()
                };
                let factory = self.simulated_factory_multi(seed, sources)?;
                run_debate_batch(&prompts, self.task.kind, &factory, &cfg)?
            }
        };
        let rel = format!("transcripts_iter{iteration}.jsonl");
        crate::debate::write_transcripts_file(&self.cfg.output_dir.join(&rel), &transcripts)?;
        self.record(&rel, "debate", iteration)?;
        Ok(self.cfg.output_dir.join(rel))
    }

    // --- build stage ----------------------------------------------------------

    fn partitions_for(
        &self,
        transcripts: &[DebateTranscript],
    ) -> Result<Vec<(DebateTranscript, ConsensusPartition)>, PipelineError> {
        let opts = PartitionOptions {
            tie_policy: self
                .cfg
                .ablations
                .tie_policy
                .resolve(mix(self.cfg.seed, SALT_TIE, 0)),
            nonparseable_negatives: self.cfg.ablations.nonparseable_negatives,
        };
        let mut out = Vec::with_capacity(transcripts.len());
        for t in transcripts {
            let part = match self.cfg.ablations.labels {
                LabelSource::Consensus => partition(t, &opts)?,
                LabelSource::GroundTruth => {
                    let gt = self.task.ground_truth(&t.prompt_id).ok_or_else(|| {
                        PipelineError::Config(format!(
                            "ground-truth labels requested but prompt {} has no answer",
                            t.prompt_id
                        ))
                    })?;
                    partition_by_label(t, &gt, &opts)?
                }
            };
            out.push((t.clone(), part));
        }
        Ok(out)
    }

    fn pairing_for(&self, prompt_index: usize) -> PairingStrategy {
        match self.cfg.ablations.pairing {
            PairingKind::AllPairs => PairingStrategy::AllPairs,
            PairingKind::MaxPerPrompt => PairingStrategy::MaxPerPrompt {
                k: self.cfg.ablations.max_pairs_per_prompt,
                seed: mix(self.cfg.seed, SALT_PAIRS, prompt_index as u64),
            },
        }
    }

    /// Confidence-ranked pairing (the log-probability selection strategy):
    /// rank parseable final-round trajectories by sequence log-probability
    /// under the scoring policy, then pair best-vs-worst inward.
    fn logprob_pairs(
        &self,
        items: &[(DebateTranscript, ConsensusPartition)],
        scorer: &ToyPolicy,
    ) -> Vec<PreferencePair> {
        let mode = self.cfg.ablations.context;
        let mut out = Vec::new();
        for (idx, (transcript, _)) in items.iter().enumerate() {
            let parseable: Vec<_> = transcript
                .final_round()
                .into_iter()
                .filter(|t| t.parse.answer.is_some())
                .cloned()
                .collect();
            if parseable.len() < 2 {
                continue;
            }
            let order = consensus::rank_by_logprob(&parseable, scorer);
            let mut pairs = Vec::new();
            for i in 0..parseable.len() / 2 {
                let chosen = &parseable[order[i]];
                let rejected = &parseable[order[parseable.len() - 1 - i]];
                if chosen.parse.answer == rejected.parse.answer {
                    continue; // no learnable separation
                }
                pairs.push(PreferencePair {
                    prompt_id: transcript.prompt_id.clone(),
                    context: consensus::context_for(transcript, chosen, mode),
                    chosen: chosen.response.clone(),
                    rejected: rejected.response.clone(),
                });
            }
            if let PairingStrategy::MaxPerPrompt { k, .. } = self.pairing_for(idx) {
                pairs.truncate(k);
            }
            out.extend(pairs);
        }
        out
    }

    /// Builds the method-specific dataset from an iteration's transcripts.
    pub fn cmd_build(&mut self, iteration: usize) -> Result<Vec<PathBuf>, PipelineError> {
        let rel_in = format!("transcripts_iter{iteration}.jsonl");
        let path_in = self.require(&rel_in)?;
        let transcripts = crate::debate::read_transcripts(&path_in)?;
        let items = self.partitions_for(&transcripts)?;
        let mode = self.cfg.ablations.context;
        let mut written = Vec::new();
        match self.cfg.method {
            Method::Sft => {
                let data = build_sft_dataset(&items, mode);
                if data.is_empty() {
                    return Err(PipelineError::EmptyDataset(
                        "no consensus-supporting trajectories; base competence may be insufficient"
                            .into(),
                    ));
                }
                let rel = format!("dataset_iter{iteration}_sft.jsonl");
                consensus::write_sft_file(&self.cfg.output_dir.join(&rel), &data)?;
                self.record(&rel, "build", iteration)?;
                written.push(self.cfg.output_dir.join(rel));
            }
            Method::Dpo => {
                let pairs = match self.cfg.ablations.selection {
                    SelectionStrategy::Consensus => {
                        let mut pairs = Vec::new();
                        for (idx, (transcript, part)) in items.iter().enumerate() {
                            pairs.extend(build_dpo_pairs(
                                transcript,
                                part,
                                mode,
                                self.pairing_for(idx),
                            ));
                        }
                        pairs
                    }
                    SelectionStrategy::Logprob => {
                        let scorer = self.load_policy(iteration - 1)?;
                        self.logprob_pairs(&items, &scorer)
                    }
                };
                if pairs.is_empty() {
                    return Err(PipelineError::EmptyDataset(
                        "no preference pairs (all debates unanimous, tied, or non-parseable)"
                            .into(),
                    ));
                }
                let rel = format!("dataset_iter{iteration}_dpo.jsonl");
                consensus::write_dpo_file(&self.cfg.output_dir.join(&rel), &pairs)?;
                self.record(&rel, "build", iteration)?;
                written.push(self.cfg.output_dir.join(rel));
            }
            Method::Kto => {
                let result = build_kto_examples(&items, mode, self.cfg.ablations.balance);
                let (examples, weights) = match result {
                    Ok(x) => x,
                    Err(crate::consensus::ConsensusError::EmptyClass(which)) => {
                        // Degenerate dataset: fall back to equal weights.
                        eprintln!(
                            "warning: inverse-frequency balance undefined ({which} class empty); using equal weights"
                        );
                        build_kto_examples(&items, mode, BalancePolicy::Equal)?
                    }
                    Err(e) => return Err(e.into()),
                };
                if examples.is_empty() {
                    return Err(PipelineError::EmptyDataset("no labeled examples".into()));
                }
                let rel = format!("dataset_iter{iteration}_kto.jsonl");
                let rel_sidecar = format!("kto_lambda_iter{iteration}.json");
                consensus::write_kto_files(
                    &self.cfg.output_dir.join(&rel),
                    &self.cfg.output_dir.join(&rel_sidecar),
                    &examples,
                    &weights,
                )?;
                self.record(&rel, "build", iteration)?;
                self.record(&rel_sidecar, "build", iteration)?;
                written.push(self.cfg.output_dir.join(rel));
                written.push(self.cfg.output_dir.join(rel_sidecar));
            }
            Method::Grpo => {
                let targets = build_grpo_targets(&items, mode);
                if targets.is_empty() {
                    return Err(PipelineError::EmptyDataset(
                        "no prompts reached consensus".into(),
                    ));
                }
                let rel = format!("dataset_iter{iteration}_grpo.jsonl");
                consensus::write_grpo_file(&self.cfg.output_dir.join(&rel), &targets)?;
                self.record(&rel, "build", iteration)?;
                written.push(self.cfg.output_dir.join(rel));
            }
        }
        Ok(written)
    }

    // --- train stage ----------------------------------------------------------

    /// Trains the iteration's policy on the built dataset and writes the
    /// checkpoint plus the loss curve. The per-agent variant trains one
    /// policy per agent on that agent's own trajectory data instead.
    pub fn cmd_train(&mut self, iteration: usize) -> Result<PathBuf, PipelineError> {
        if self.cfg.policy.per_agent {
            return self.cmd_train_per_agent(iteration);
        }
        let init = self.load_policy(iteration - 1)?;
        let reference = match self.cfg.objective.reference {
            ReferenceMode::Reset => ReferenceSnapshot::of(&init),
            ReferenceMode::Fixed => ReferenceSnapshot::of(&self.load_policy(0)?),
        };
        let mut hp = self.cfg.objective.hyperparams.clone();
        hp.seed = mix(self.cfg.seed.wrapping_add(hp.seed), SALT_TRAIN, iteration as u64);
        let data = match self.cfg.method {
            Method::Sft => {
                let rel = format!("dataset_iter{iteration}_sft.jsonl");
                TrainingData::Sft(consensus::read_sft_file(&self.require(&rel)?)?)
            }
            Method::Dpo => {
                let rel = format!("dataset_iter{iteration}_dpo.jsonl");
                TrainingData::Dpo(consensus::read_dpo_file(&self.require(&rel)?)?)
            }
            Method::Kto => {
                let rel = format!("dataset_iter{iteration}_kto.jsonl");
                let rel_sidecar = format!("kto_lambda_iter{iteration}.json");
                let (examples, weights) =
                    consensus::read_kto_files(&self.require(&rel)?, &self.require(&rel_sidecar)?)?;
                hp.lambda_plus = weights.lambda_plus.as_f64();
                hp.lambda_minus = weights.lambda_minus.as_f64();
                TrainingData::Kto(examples)
            }
            Method::Grpo => {
                let rel = format!("dataset_iter{iteration}_grpo.jsonl");
                TrainingData::Grpo(consensus::read_grpo_file(&self.require(&rel)?)?)
            }
        };
        let outcome = train_from(init, &data, &hp, reference)?;

        let rel_curve = format!("loss_curve_iter{iteration}.csv");
        let mut curve = String::from("epoch,loss\n");
        for (epoch, loss) in &outcome.curve {
            curve.push_str(&format!("{epoch},{loss}\n"));
        }
        std::fs::write(self.cfg.output_dir.join(&rel_curve), curve)?;
        let rel_ck = format!("checkpoint_iter{iteration}.json");
        outcome.policy.save(&self.cfg.output_dir.join(&rel_ck))?;
        self.record(&rel_curve, "train", iteration)?;
        self.record(&rel_ck, "train", iteration)?;
        Ok(self.cfg.output_dir.join(rel_ck))
    }

    /// Divergent per-agent training: each agent's dataset keeps only its
    /// own final-round trajectories (DPO pairs keep the full dissent pool
    /// as rejected candidates, since one agent contributes at most one
    /// trajectory per prompt). Checkpoints and curves are written per
    /// agent; agent 0 serves as the representative policy elsewhere.
    fn cmd_train_per_agent(&mut self, iteration: usize) -> Result<PathBuf, PipelineError> {
        let rel_in = format!("transcripts_iter{iteration}.jsonl");
        let transcripts = crate::debate::read_transcripts(&self.require(&rel_in)?)?;
        let items = self.partitions_for(&transcripts)?;
        let mode = self.cfg.ablations.context;
        let num_agents = self.cfg.debate.num_agents;

        let filter_to_agent = |agent: usize, own_negatives: bool| {
            items
                .iter()
                .map(|(t, p)| {
                    let mut p = p.clone();
                    p.positives.retain(|x| x.agent_id == agent);
                    if own_negatives {
                        p.negatives.retain(|x| x.agent_id == agent);
                    }
                    (t.clone(), p)
                })
                .collect::<Vec<_>>()
        };

        for agent in 0..num_agents {
            let init = self.load_agent_policy(iteration - 1, agent)?;
            let reference = match self.cfg.objective.reference {
                ReferenceMode::Reset => ReferenceSnapshot::of(&init),
                ReferenceMode::Fixed => ReferenceSnapshot::of(&self.load_policy(0)?),
            };
            let mut hp = self.cfg.objective.hyperparams.clone();
            hp.seed = mix(
                self.cfg.seed.wrapping_add(hp.seed),
                SALT_TRAIN,
                (iteration * 1009 + agent + 1) as u64,
            );
            let data = match self.cfg.method {
                Method::Sft => {
                    TrainingData::Sft(build_sft_dataset(&filter_to_agent(agent, false), mode))
                }
                Method::Dpo => {
                    let own = filter_to_agent(agent, false);
                    let mut pairs = Vec::new();
                    for (idx, (t, p)) in own.iter().enumerate() {
                        pairs.extend(build_dpo_pairs(t, p, mode, self.pairing_for(idx)));
                    }
                    TrainingData::Dpo(pairs)
                }
                Method::Kto => {
                    let own = filter_to_agent(agent, true);
                    let (examples, weights) =
                        match build_kto_examples(&own, mode, self.cfg.ablations.balance) {
                            Ok(x) => x,
                            Err(crate::consensus::ConsensusError::EmptyClass(_)) => {
                                build_kto_examples(&own, mode, BalancePolicy::Equal)?
                            }
                            Err(e) => return Err(e.into()),
                        };
                    hp.lambda_plus = weights.lambda_plus.as_f64();
                    hp.lambda_minus = weights.lambda_minus.as_f64();
                    TrainingData::Kto(examples)
                }
                Method::Grpo => {
                    let mut targets = std::collections::BTreeMap::new();
                    for (t, p) in &items {
                        let Some(answer) = p.consensus.answer.clone() else { continue };
                        let Some(own) =
                            t.final_round().into_iter().find(|x| x.agent_id == agent).cloned()
                        else {
                            continue;
                        };
                        targets.insert(
                            t.prompt_id.clone(),
                            consensus::GrpoTarget {
                                prompt_id: t.prompt_id.clone(),
                                context: consensus::context_for(t, &own, mode),
                                answer,
                                kind: t.kind,
                            },
                        );
                    }
                    TrainingData::Grpo(targets)
                }
            };
            if data.is_empty() {
                return Err(PipelineError::EmptyDataset(format!(
                    "agent {agent} has no training data under the per-agent split"
                )));
            }
            let outcome = train_from(init, &data, &hp, reference)?;
            let rel_curve = format!("loss_curve_iter{iteration}_agent{agent}.csv");
            let mut curve = String::from("epoch,loss\n");
            for (epoch, loss) in &outcome.curve {
                curve.push_str(&format!("{epoch},{loss}\n"));
            }
            std::fs::write(self.cfg.output_dir.join(&rel_curve), curve)?;
            let rel_ck = Self::agent_checkpoint_rel(iteration, agent);
            outcome.policy.save(&self.cfg.output_dir.join(&rel_ck))?;
            self.record(&rel_curve, "train", iteration)?;
            self.record(&rel_ck, "train", iteration)?;
        }
        Ok(self
            .cfg
            .output_dir
            .join(Self::agent_checkpoint_rel(iteration, 0)))
    }

    /// A stage input must exist and be listed in the manifest by the stage
    /// that produced it.
    fn require(&self, rel: &str) -> Result<PathBuf, PipelineError> {
        let path = self.cfg.output_dir.join(rel);
        if !path.exists() || self.manifest.find(rel).is_none() {
            return Err(PipelineError::MissingArtifact(path));
        }
        Ok(path)
    }

    // --- eval stage -----------------------------------------------------------

    /// Samples trajectories per held-out prompt — from the checkpointed
    /// policy with the simulated backend, or from the model service with
    /// the HTTP backend — runs evaluation debates, and writes all metric
    /// CSVs. `iteration` 0 evaluates the base policy under the label "base".
    pub fn cmd_eval(&mut self, iteration: usize) -> Result<EvalSummary, PipelineError> {
        let label = if iteration == 0 {
            "base".to_string()
        } else {
            format!("iter{iteration}")
        };
        let heldout = self.heldout_prompts();
        if heldout.is_empty() {
            return Err(PipelineError::Config("held-out split is empty".into()));
        }
        let t_max = self.cfg.eval.samples_per_prompt;
        let kind = self.task.kind;
        let max_steps = self.cfg.debate.gen.max_new_tokens;
        let seed = self.cfg.seed;
        let gts: Vec<Option<Answer>> = heldout
            .iter()
            .map(|p| self.task.ground_truth(&p.id))
            .collect();

        let score = |prompt: &PromptSpec,
                     gt: &Option<Answer>,
                     samples: Vec<(String, bool)>,
                     greedy_text: Option<String>|
         -> PromptEval {
            let mut answers = Vec::with_capacity(samples.len());
            let mut truncated = Vec::with_capacity(samples.len());
            let mut records = Vec::with_capacity(samples.len());
            let mut bits = Vec::with_capacity(samples.len());
            for (s, (text, is_truncated)) in samples.into_iter().enumerate() {
                let strict = parse_strict(&text, kind);
                let relaxed = parse_relaxed(&text, kind);
                if let Some(gt) = gt {
                    let strict_ok = strict.answer.as_ref() == Some(gt);
                    let relaxed_ok = relaxed.answer.as_ref() == Some(gt);
                    bits.push(strict_ok);
                    records.push(EvalRecord {
                        prompt_id: prompt.id.clone(),
                        sample_index: s,
                        strict_correct: strict_ok,
                        relaxed_correct: relaxed_ok,
                        truncated: is_truncated,
                    });
                }
                answers.push(strict.answer);
                truncated.push(is_truncated);
            }
            let greedy_correct = match (gt, greedy_text) {
                (Some(gt), Some(text)) => {
                    Some(parse_strict(&text, kind).answer.as_ref() == Some(gt))
                }
                _ => None,
            };
            PromptEval {
                set: SampleSet {
                    prompt_id: prompt.id.clone(),
                    answers,
                    correctness: gt.as_ref().map(|_| bits),
                    truncated,
                },
                records,
                greedy_correct,
            }
        };

        // Per-agent policies produce one labeled curve each; agent 0 is the
        // representative for the accuracy tables. The shared-policy default
        // has a single entry.
        let mut agent_evals: Vec<(String, Vec<PromptEval>)> = Vec::new();
        match self.cfg.agents.backend {
            BackendKind::Simulated => {
                let policies = self.agent_policies(iteration)?;
                let per_agent = policies.len() > 1;
                for (m, policy) in policies.iter().enumerate() {
                    // Per-prompt sampling on disjoint RNG streams, in
                    // parallel; order-preserving.
                    let indexed: Vec<(usize, PromptSpec)> =
                        heldout.iter().cloned().enumerate().collect();
                    let stream_base = (m as u64) << 32;
                    let evals = par::map(&indexed, |(i, prompt)| {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix(
                            seed,
                            SALT_EVAL_SAMPLE,
                            stream_base + *i as u64,
                        ));
                        let context =
                            initial_prompt(&prompt.question, kind).expect("validated question");
                        let ctx_tokens = policy.vocab().tokenize(&context);
                        let samples: Vec<(String, bool)> = (0..t_max)
                            .map(|_| {
                                let sampled = policy.sample(&ctx_tokens, max_steps, &mut rng);
                                (policy.vocab().detokenize(&sampled.tokens), !sampled.terminated)
                            })
                            .collect();
                        let greedy = policy.greedy(&ctx_tokens, max_steps);
                        score(
                            prompt,
                            &gts[*i],
                            samples,
                            Some(policy.vocab().detokenize(&greedy.tokens)),
                        )
                    });
                    let sub_label = if per_agent {
                        format!("{label}_agent{m}")
                    } else {
                        label.clone()
                    };
                    agent_evals.push((sub_label, evals));
                }
            }
            BackendKind::Http => {
                // One agent per prompt, sequential out of politeness to the
                // service; the greedy pass reuses the agent at temperature 0.
                let spec = self.cfg.agents.http_spec()?;
                let params = self.cfg.debate.gen.clone();
                let greedy_params = GenParams {
                    temperature: 0.0,
                    ..params.clone()
                };
                let mut evals = Vec::with_capacity(heldout.len());
                for (i, prompt) in heldout.iter().enumerate() {
                    let mut agent = HttpAgent::new(spec.clone())
                        .map_err(PipelineError::Config)?;
                    let context = initial_prompt(&prompt.question, kind)?;
                    let samples: Vec<(String, bool)> = (0..t_max)
                        .map(|_| {
                            let gen = agent.generate(&context, &params);
                            match gen.finish_reason {
                                FinishReason::Error => (String::new(), false),
                                reason => (gen.text, reason == FinishReason::LengthBudget),
                            }
                        })
                        .collect();
                    let greedy = agent.generate(&context, &greedy_params);
                    let greedy_text =
                        (greedy.finish_reason != FinishReason::Error).then_some(greedy.text);
                    evals.push(score(prompt, &gts[i], samples, greedy_text));
                }
                agent_evals.push((label.clone(), evals));
            }
        }

        let mut curves: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
        for (sub_label, evals) in &agent_evals {
            let sets: Vec<SampleSet> = evals.iter().map(|e| e.set.clone()).collect();
            curves.insert(sub_label.clone(), consistency_curve(&sets, t_max));
        }
        if agent_evals.len() > 1 {
            // Mean-over-agents curve under the plain label.
            let mean: Vec<(usize, f64)> = (1..=t_max)
                .map(|t| {
                    let v = curves.values().map(|c| c[t - 1].1).sum::<f64>()
                        / agent_evals.len() as f64;
                    (t, v)
                })
                .collect();
            curves.insert(label.clone(), mean);
        }
        let label_curve = curves.get(&label).expect("label curve present").clone();
        let mean_consistency = label_curve.last().map(|(_, v)| *v).unwrap_or(0.0);
        let parseable_rate = label_curve.first().map(|(_, v)| *v).unwrap_or(0.0);

        // Agent 0 (or the shared policy / service) drives the accuracy
        // tables and records.
        let evals = &agent_evals[0].1;
        let sets: Vec<SampleSet> = evals.iter().map(|e| e.set.clone()).collect();

        let eval_dir_rel = format!("eval_{label}");
        let eval_dir = self.cfg.output_dir.join(&eval_dir_rel);
        std::fs::create_dir_all(&eval_dir)?;

        let mut buf = Vec::new();
        metrics::write_consistency_curve(&mut buf, &curves)?;
        std::fs::write(eval_dir.join("consistency_curve.csv"), buf)?;

        // Per-prompt table for correlation reports.
        let mut per_prompt = String::from("prompt_id,s_tmax,accuracy_strict,accuracy_relaxed\n");
        for e in evals {
            let s = sampling_consistency(&e.set, t_max);
            let (acc_s, acc_r) = if e.records.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let n = e.records.len() as f64;
                (
                    e.records.iter().filter(|r| r.strict_correct).count() as f64 / n,
                    e.records.iter().filter(|r| r.relaxed_correct).count() as f64 / n,
                )
            };
            per_prompt.push_str(&format!("{},{s},{acc_s},{acc_r}\n", e.set.prompt_id));
        }
        std::fs::write(eval_dir.join("per_prompt.csv"), per_prompt)?;

        // Pass@t / MV@t need ground truth on every held-out prompt.
        let all_gt: Option<Vec<Answer>> = gts.iter().cloned().collect();
        let mut pass_tmax = None;
        let mut mv_tmax = None;
        let mut greedy_accuracy = None;
        if let Some(gt) = &all_gt {
            let mut rows = Vec::with_capacity(t_max);
            for t in 1..=t_max {
                rows.push((t, pass_at_t(&sets, t)?, mv_at_t(&sets, t, gt)?));
            }
            pass_tmax = rows.last().map(|(_, p, _)| *p);
            mv_tmax = rows.last().map(|(_, _, m)| *m);
            let greedy_hits = evals.iter().filter(|e| e.greedy_correct == Some(true)).count();
            let greedy = greedy_hits as f64 / evals.len() as f64;
            greedy_accuracy = Some(greedy);
            let mut buf = Vec::new();
            metrics::write_pass_mv(&mut buf, &rows, greedy)?;
            std::fs::write(eval_dir.join("pass_mv.csv"), buf)?;
            if self.cfg.eval.permutation_average {
                let mut text = String::from("t,pass_at_t_permuted\n");
                for t in 1..=t_max {
                    let v = metrics::pass_at_t_permuted(&sets, t, 16, mix(seed, SALT_EVAL_SAMPLE, 1))?;
                    text.push_str(&format!("{t},{v}\n"));
                }
                std::fs::write(eval_dir.join("pass_permuted.csv"), text)?;
            }

            let mut records_buf = Vec::new();
            for e in evals {
                for r in &e.records {
                    serde_json::to_writer(&mut records_buf, r)?;
                    records_buf.push(b'\n');
                }
            }
            std::fs::write(eval_dir.join("records.jsonl"), records_buf)?;
        } else {
            eprintln!("warning: held-out prompts lack ground truth; Pass@t/MV@t disabled");
        }

        // Debate eval on the held-out prompts: agents backed by the
        // evaluated policy (or policies, in the per-agent variant), or by
        // the service with the HTTP backend.
        let cfgd = self.debate_config();
        let transcripts = match self.cfg.agents.backend {
            BackendKind::Simulated => {
                let sources = self
                    .agent_policies(iteration)?
                    .into_iter()
                    .map(AnswerSource::Policy)
                    .collect();
                let factory = self.simulated_factory_multi(
                    mix(seed, SALT_EVAL_DEBATE, iteration as u64),
                    sources,
                )?;
                run_debate_batch(&heldout, kind, &factory, &cfgd)?
            }
            BackendKind::Http => {
                let factory = self.http_factory()?;
                run_debate_batch(&heldout, kind, &factory, &cfgd)?
            }
        };
        let mut histograms: Vec<AgreementHistogram> = Vec::new();
        for round in 1..=cfgd.num_rounds {
            histograms.push(agreement_histogram(&transcripts, round));
        }
        let unanimous_initial = histograms.first().map(|h| h.unanimous_fraction).unwrap_or(0.0);
        let unanimous_final = histograms.last().map(|h| h.unanimous_fraction).unwrap_or(0.0);
        let mean_agreement_final = transcripts
            .iter()
            .map(|t| metrics::debate_agreement(&t.final_answers()))
            .sum::<f64>()
            / transcripts.len().max(1) as f64;
        let mut buf = Vec::new();
        metrics::write_agreement(&mut buf, &histograms)?;
        std::fs::write(eval_dir.join("agreement.csv"), buf)?;

        let summary = EvalSummary {
            label: label.clone(),
            n_heldout: heldout.len(),
            t_max,
            mean_consistency,
            parseable_rate,
            unanimous_initial,
            unanimous_final,
            mean_agreement_final,
            greedy_accuracy,
            pass_at_tmax: pass_tmax,
            mv_at_tmax: mv_tmax,
        };
        std::fs::write(
            eval_dir.join("summary.json"),
            serde_json::to_vec_pretty(&summary)?,
        )?;

        for file in [
            "consistency_curve.csv",
            "per_prompt.csv",
            "pass_mv.csv",
            "agreement.csv",
            "records.jsonl",
            "summary.json",
        ] {
            if eval_dir.join(file).exists() {
                self.record(&format!("{eval_dir_rel}/{file}"), "eval", iteration)?;
            }
        }
        Ok(summary)
    }

    // --- iterate ---------------------------------------------------------------

    /// The outer loop: base eval, then for each iteration
    /// debate -> build -> train -> eval, feeding each trained policy into
    /// the next iteration's simulated agents. Stops at the first failing
    /// stage, reporting the last good iteration.
    pub fn cmd_iterate(&mut self) -> Result<(), PipelineError> {
        let stage = |name: &str, iteration: usize, e: PipelineError| PipelineError::Stage {
            stage: name.into(),
            iteration,
            last_good: iteration.saturating_sub(1),
            message: e.to_string(),
        };
        self.ensure_base_checkpoint()?;
        let base = self.cmd_eval(0).map_err(|e| stage("eval", 0, e))?;
        self.manifest.iterations.push(super::manifest::IterationRecord {
            index: 0,
            mean_consistency: Some(base.mean_consistency),
            unanimous_fraction: Some(base.unanimous_final),
        });
        self.save_manifest()?;
        for iteration in 1..=self.cfg.debate.iterations {
            self.cmd_debate(iteration)
                .map_err(|e| stage("debate", iteration, e))?;
            self.cmd_build(iteration)
                .map_err(|e| stage("build", iteration, e))?;
            self.cmd_train(iteration)
                .map_err(|e| stage("train", iteration, e))?;
            let summary = self
                .cmd_eval(iteration)
                .map_err(|e| stage("eval", iteration, e))?;
            self.manifest.iterations.push(super::manifest::IterationRecord {
                index: iteration,
                mean_consistency: Some(summary.mean_consistency),
                unanimous_fraction: Some(summary.unanimous_final),
            });
            self.save_manifest()?;
        }
        Ok(())
    }

    // --- report ------------------------------------------------------------------

    /// Cross-eval reports: gain decomposition (base vs latest), consistency
    /// vs accuracy correlations, and the majority-vs-confidence pair
    /// selection comparison.
    pub fn cmd_report(&mut self) -> Result<PathBuf, PipelineError> {
        let latest = self.latest_iteration();
        if latest == 0 {
            return Err(PipelineError::Config(
                "report needs at least one trained iteration".into(),
            ));
        }
        let report_dir = self.cfg.output_dir.join("report");
        std::fs::create_dir_all(&report_dir)?;

        // Both evals must exist; produce any that are missing.
        for it in [0, latest] {
            let label = if it == 0 { "base".into() } else { format!("iter{it}") };
            if !self
                .cfg
                .output_dir
                .join(format!("eval_{label}"))
                .join("records.jsonl")
                .exists()
            {
                self.cmd_eval(it)?;
            }
        }
        let before = self.read_records("base")?;
        let after = self.read_records(&format!("iter{latest}"))?;
        let row = metrics::decompose_gains(&before, &after)?;
        let mut buf = Vec::new();
        metrics::write_decomposition(&mut buf, &row)?;
        std::fs::write(report_dir.join("decomposition.csv"), buf)?;

        // Correlations between per-prompt consistency and accuracy.
        let base_pp = self.read_per_prompt("base")?;
        let post_pp = self.read_per_prompt(&format!("iter{latest}"))?;
        let mut rows = Vec::new();
        let col = |pp: &[(String, f64, f64)], which: usize| -> Vec<f64> {
            pp.iter()
                .map(|(_, s, a)| if which == 0 { *s } else { *a })
                .collect()
        };
        for (label, pp) in [("base", &base_pp), (&format!("iter{latest}"), &post_pp)] {
            if let Ok(r) = metrics::pearson_r(&col(pp, 0), &col(pp, 1)) {
                rows.push((
                    format!("s_tmax_{label}"),
                    format!("accuracy_{label}"),
                    r,
                    pp.len(),
                ));
            }
        }
        if base_pp.len() == post_pp.len() {
            let ds: Vec<f64> = base_pp
                .iter()
                .zip(post_pp.iter())
                .map(|(b, p)| p.1 - b.1)
                .collect();
            let da: Vec<f64> = base_pp
                .iter()
                .zip(post_pp.iter())
                .map(|(b, p)| p.2 - b.2)
                .collect();
            if let Ok(r) = metrics::pearson_r(&ds, &da) {
                rows.push(("consistency_gain".into(), "accuracy_gain".into(), r, ds.len()));
            }
        }
        let mut buf = Vec::new();
        metrics::write_correlation(&mut buf, &rows)?;
        std::fs::write(report_dir.join("correlation.csv"), buf)?;

        // Pair-selection comparison on the latest transcripts.
        let transcripts =
            crate::debate::read_transcripts(&self.require(&format!("transcripts_iter{latest}.jsonl"))?)?;
        let scorer = self.load_policy(latest)?;
        let opts = PartitionOptions::default();
        let mut majority = SelectionStats::default();
        let mut confidence = SelectionStats::default();
        let mut prompts_seen = 0usize;
        for t in &transcripts {
            let Some(gt) = self.task.ground_truth(&t.prompt_id) else {
                continue;
            };
            prompts_seen += 1;
            let part = partition(t, &opts)?;
            if !part.positives.is_empty() && !part.negatives.is_empty() {
                majority.usable += 1;
                majority.add(
                    part.positives.iter().map(|x| x.parse.answer.as_ref() == Some(&gt)),
                    part.negatives.iter().map(|x| x.parse.answer.as_ref() == Some(&gt)),
                );
            }
            let parseable: Vec<_> = t
                .final_round()
                .into_iter()
                .filter(|x| x.parse.answer.is_some())
                .cloned()
                .collect();
            if parseable.len() >= 2 {
                let order = consensus::rank_by_logprob(&parseable, &scorer);
                let half = parseable.len() / 2;
                confidence.usable += 1;
                confidence.add(
                    order[..half]
                        .iter()
                        .map(|&i| parseable[i].parse.answer.as_ref() == Some(&gt)),
                    order[parseable.len() - half..]
                        .iter()
                        .map(|&i| parseable[i].parse.answer.as_ref() == Some(&gt)),
                );
            }
        }
        if prompts_seen == 0 {
            return Err(PipelineError::Config(
                "report needs ground-truth answers in the task file".into(),
            ));
        }
        let mut text = String::from("strategy,pos_accuracy,neg_accuracy,gap,usable_fraction\n");
        for (name, stats) in [("majority", &majority), ("confidence", &confidence)] {
            let (pos, neg) = stats.accuracies();
            text.push_str(&format!(
                "{name},{pos},{neg},{},{}\n",
                pos - neg,
                stats.usable as f64 / prompts_seen as f64
            ));
        }
        std::fs::write(report_dir.join("selection.csv"), text)?;

        for file in ["decomposition.csv", "correlation.csv", "selection.csv"] {
            self.record(&format!("report/{file}"), "report", latest)?;
        }
        Ok(report_dir)
    }

    fn read_records(&self, label: &str) -> Result<Vec<metrics::ResponseRecord>, PipelineError> {
        let path = self
            .cfg
            .output_dir
            .join(format!("eval_{label}"))
            .join("records.jsonl");
        if !path.exists() {
            return Err(PipelineError::MissingArtifact(path));
        }
        let text = std::fs::read_to_string(&path)?;
        let mut out = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let r: EvalRecord = serde_json::from_str(line)?;
            out.push(metrics::ResponseRecord {
                strict_correct: r.strict_correct,
                relaxed_correct: r.relaxed_correct,
                truncated: r.truncated,
            });
        }
        Ok(out)
    }

    fn read_per_prompt(&self, label: &str) -> Result<Vec<(String, f64, f64)>, PipelineError> {
        let path = self
            .cfg
            .output_dir
            .join(format!("eval_{label}"))
            .join("per_prompt.csv");
        if !path.exists() {
            return Err(PipelineError::MissingArtifact(path));
        }
        let text = std::fs::read_to_string(&path)?;
        let mut out = Vec::new();
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                continue;
            }
            let s: f64 = cols[1].parse().unwrap_or(f64::NAN);
            let a: f64 = cols[2].parse().unwrap_or(f64::NAN);
            if s.is_finite() && a.is_finite() {
                out.push((cols[0].to_string(), s, a));
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct SelectionStats {
    usable: usize,
    pos_correct: usize,
    pos_total: usize,
    neg_correct: usize,
    neg_total: usize,
}

impl SelectionStats {
    fn add(
        &mut self,
        pos: impl Iterator<Item = bool>,
        neg: impl Iterator<Item = bool>,
    ) {
        for p in pos {
            self.pos_total += 1;
            self.pos_correct += p as usize;
        }
        for n in neg {
            self.neg_total += 1;
            self.neg_correct += n as usize;
        }
    }

    fn accuracies(&self) -> (f64, f64) {
        (
            self.pos_correct as f64 / self.pos_total.max(1) as f64,
            self.neg_correct as f64 / self.neg_total.max(1) as f64,
        )
    }
}

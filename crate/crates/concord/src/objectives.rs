//! Majority-vote training objectives over the toy policy.
//!
//! Four losses, each returning the value and its analytic gradient with
//! respect to the policy logits:
//!
//! - SFT: mean negative sequence log-probability of consensus-supporting
//!   targets.
//! - DPO: mean -log sigmoid(beta * margin) over preference pairs, margin =
//!   (chosen log-ratio) - (rejected log-ratio) against a frozen reference.
//! - KTO: unpaired variant with per-class weights; an empty class
//!   contributes zero.
//! - GRPO: policy-gradient surrogate over freshly sampled groups with
//!   mean-baseline advantages (no variance division) plus an exact KL term
//!   to the reference, averaged over visited states.
//!
//! Gradients treat advantages as constants (standard policy-gradient
//! detachment); everything is verified against central finite differences in
//! the tests and the acceptance suite.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::parse_strict;
use crate::consensus::{GrpoTarget, KtoExample, PreferencePair, SftExample};
use crate::policy::{PolicyError, ReferenceSnapshot, TokenId, ToyPolicy};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Hyperparameters shared by the objectives and the training loop. Every
/// field has a config default so partial TOML sections parse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveHyperparams {
    /// Preference temperature (DPO/KTO).
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// GRPO KL coefficient.
    #[serde(default = "default_lambda_kl")]
    pub lambda_kl: f64,
    /// KTO class weights.
    #[serde(default = "default_lambda")]
    pub lambda_plus: f64,
    #[serde(default = "default_lambda")]
    pub lambda_minus: f64,
    /// GRPO online samples per prompt.
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Plain gradient descent when 0.
    #[serde(default)]
    pub momentum: f64,
    /// Step cap for GRPO sampling.
    #[serde(default = "default_sample_steps")]
    pub max_sample_steps: usize,
}

fn default_beta() -> f64 {
    0.1
}
fn default_lambda_kl() -> f64 {
    0.05
}
fn default_lambda() -> f64 {
    1.0
}
fn default_group_size() -> usize {
    4
}
fn default_lr() -> f64 {
    1.0
}
fn default_epochs() -> usize {
    40
}
fn default_sample_steps() -> usize {
    64
}

impl Default for ObjectiveHyperparams {
    fn default() -> Self {
        ObjectiveHyperparams {
            beta: default_beta(),
            lambda_kl: default_lambda_kl(),
            lambda_plus: default_lambda(),
            lambda_minus: default_lambda(),
            group_size: default_group_size(),
            learning_rate: default_lr(),
            epochs: default_epochs(),
            seed: 0,
            momentum: 0.0,
            max_sample_steps: default_sample_steps(),
        }
    }
}

/// Loss value with its gradient w.r.t. the policy logits.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Tokenized imitation example.
#[derive(Debug, Clone)]
pub struct TokenizedExample {
    pub context: Vec<TokenId>,
    pub target: Vec<TokenId>,
}

/// Tokenized preference pair.
#[derive(Debug, Clone)]
pub struct TokenizedPair {
    pub context: Vec<TokenId>,
    pub chosen: Vec<TokenId>,
    pub rejected: Vec<TokenId>,
}

/// Tokenized labeled example.
#[derive(Debug, Clone)]
pub struct TokenizedLabeled {
    pub context: Vec<TokenId>,
    pub text: Vec<TokenId>,
    pub positive: bool,
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean negative sequence log-probability over the batch.
pub fn sft_loss(policy: &ToyPolicy, batch: &[TokenizedExample]) -> Result<LossEval, ObjectiveError> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let mut grad = vec![0.0; policy.params().len()];
    let scale = -1.0 / batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        total += policy.accumulate_sequence_grad(&ex.context, &ex.target, scale, &mut grad)?;
    }
    Ok(LossEval {
        loss: -total / batch.len() as f64,
        grad,
    })
}

/// Mean -log sigmoid(beta * margin) over pairs; gradient w.r.t. the policy
/// only (the reference is frozen).
pub fn dpo_loss(
    policy: &ToyPolicy,
    reference: &ReferenceSnapshot,
    pairs: &[TokenizedPair],
    beta: f64,
) -> Result<LossEval, ObjectiveError> {
    if pairs.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    if beta <= 0.0 {
        return Err(ObjectiveError::BadBeta(beta));
    }
    let mut grad = vec![0.0; policy.params().len()];
    let n = pairs.len() as f64;
    let mut total = 0.0;
    for pair in pairs {
        let lp_chosen = policy.sequence_logprob(&pair.context, &pair.chosen)?;
        let lp_rejected = policy.sequence_logprob(&pair.context, &pair.rejected)?;
        let ref_chosen = reference.policy().sequence_logprob(&pair.context, &pair.chosen)?;
        let ref_rejected = reference
            .policy()
            .sequence_logprob(&pair.context, &pair.rejected)?;
        let margin = (lp_chosen - ref_chosen) - (lp_rejected - ref_rejected);
        total += softplus(-beta * margin);
        // d/dm of softplus(-beta m) = -beta * sigmoid(-beta m)
        let dm = -beta * sigmoid(-beta * margin) / n;
        policy.accumulate_sequence_grad(&pair.context, &pair.chosen, dm, &mut grad)?;
        policy.accumulate_sequence_grad(&pair.context, &pair.rejected, -dm, &mut grad)?;
    }
    Ok(LossEval {
        loss: total / n,
        grad,
    })
}

/// Weighted unpaired loss: lambda_plus * mean over positives of
/// -log sigmoid(beta r) plus lambda_minus * mean over negatives of
/// -log sigmoid(-beta r), r the log-ratio to the reference. Empty classes
/// contribute zero.
pub fn kto_loss(
    policy: &ToyPolicy,
    reference: &ReferenceSnapshot,
    examples: &[TokenizedLabeled],
    beta: f64,
    lambda_plus: f64,
    lambda_minus: f64,
) -> Result<LossEval, ObjectiveError> {
    if examples.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    if beta <= 0.0 {
        return Err(ObjectiveError::BadBeta(beta));
    }
    let n_plus = examples.iter().filter(|e| e.positive).count();
    let n_minus = examples.len() - n_plus;
    let mut grad = vec![0.0; policy.params().len()];
    let mut pos_total = 0.0;
    let mut neg_total = 0.0;
    for ex in examples {
        let lp = policy.sequence_logprob(&ex.context, &ex.text)?;
        let lr = reference.policy().sequence_logprob(&ex.context, &ex.text)?;
        let ratio = lp - lr;
        if ex.positive {
            pos_total += softplus(-beta * ratio);
            let dr = lambda_plus * (-beta * sigmoid(-beta * ratio)) / n_plus as f64;
            policy.accumulate_sequence_grad(&ex.context, &ex.text, dr, &mut grad)?;
        } else {
            neg_total += softplus(beta * ratio);
            let dr = lambda_minus * (beta * sigmoid(beta * ratio)) / n_minus as f64;
            policy.accumulate_sequence_grad(&ex.context, &ex.text, dr, &mut grad)?;
        }
    }
    let mut loss = 0.0;
    if n_plus > 0 {
        loss += lambda_plus * pos_total / n_plus as f64;
    }
    if n_minus > 0 {
        loss += lambda_minus * neg_total / n_minus as f64;
    }
    Ok(LossEval { loss, grad })
}

/// Group-normalized advantages: reward minus the group mean. No variance
/// division.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    rewards.iter().map(|r| r - mean).collect()
}

/// One sampled trajectory inside a GRPO group.
#[derive(Debug, Clone)]
pub struct GrpoSample {
    pub tokens: Vec<TokenId>,
    pub reward: f64,
    pub truncated: bool,
}

/// All samples drawn for one prompt.
#[derive(Debug, Clone)]
pub struct SampledGroup {
    pub prompt_id: String,
    pub context: Vec<TokenId>,
    pub samples: Vec<GrpoSample>,
}

/// Policy-gradient surrogate plus KL anchor over a fixed sampled set.
/// Advantages are recomputed from the stored rewards and treated as
/// constants. The KL term is the exact per-state KL to the reference
/// averaged over the distinct states visited by the samples.
pub fn grpo_surrogate(
    policy: &ToyPolicy,
    reference: &ReferenceSnapshot,
    groups: &[SampledGroup],
    lambda_kl: f64,
) -> Result<LossEval, ObjectiveError> {
    if groups.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let mut grad = vec![0.0; policy.params().len()];
    let mut pg_loss = 0.0;
    let mut visited: BTreeSet<usize> = BTreeSet::new();
    for group in groups {
        let rewards: Vec<f64> = group.samples.iter().map(|s| s.reward).collect();
        let advantages = group_advantages(&rewards);
        let scale_group = 1.0 / (groups.len() * group.samples.len()) as f64;
        for (sample, advantage) in group.samples.iter().zip(advantages.iter()) {
            let lp = policy.accumulate_sequence_grad(
                &group.context,
                &sample.tokens,
                -advantage * scale_group,
                &mut grad,
            )?;
            pg_loss -= advantage * lp * scale_group;
            visited.extend(policy.visited_states(&group.context, &sample.tokens));
        }
    }
    let mut kl_total = 0.0;
    if lambda_kl != 0.0 && !visited.is_empty() {
        let scale = lambda_kl / visited.len() as f64;
        for &state in &visited {
            kl_total += policy.accumulate_state_kl_grad(reference.policy(), state, scale, &mut grad);
        }
        kl_total = lambda_kl * kl_total / visited.len() as f64;
    }
    Ok(LossEval {
        loss: pg_loss + kl_total,
        grad,
    })
}

/// Samples `group_size` trajectories per target from the current policy,
/// scores them against the consensus answer (truncated samples get reward
/// zero), and evaluates the surrogate on the sampled set.
pub fn grpo_step(
    policy: &ToyPolicy,
    reference: &ReferenceSnapshot,
    targets: &BTreeMap<String, GrpoTarget>,
    hp: &ObjectiveHyperparams,
    rng: &mut ChaCha8Rng,
) -> Result<(LossEval, Vec<SampledGroup>), ObjectiveError> {
    if targets.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    if hp.group_size < 2 {
        return Err(ObjectiveError::GroupTooSmall(hp.group_size));
    }
    let mut groups = Vec::with_capacity(targets.len());
    for (prompt_id, target) in targets {
        let context = policy.vocab().tokenize(&target.context);
        let mut samples = Vec::with_capacity(hp.group_size);
        for _ in 0..hp.group_size {
            let sampled = policy.sample(&context, hp.max_sample_steps, rng);
            let truncated = !sampled.terminated;
            let reward = if truncated {
                0.0
            } else {
                let text = policy.vocab().detokenize(&sampled.tokens);
                let parsed = parse_strict(&text, target.kind);
                match parsed.answer {
                    Some(a) if a == target.answer => 1.0,
                    _ => 0.0,
                }
            };
            samples.push(GrpoSample {
                tokens: sampled.tokens,
                reward,
                truncated,
            });
        }
        groups.push(SampledGroup {
            prompt_id: prompt_id.clone(),
            context,
            samples,
        });
    }
    let eval = grpo_surrogate(policy, reference, &groups, hp.lambda_kl)?;
    Ok((eval, groups))
}

/// Which objective a dataset feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sft,
    Dpo,
    Kto,
    Grpo,
}

/// Training data, tokenized lazily against the policy vocabulary.
#[derive(Debug, Clone)]
pub enum TrainingData {
    Sft(Vec<SftExample>),
    Dpo(Vec<PreferencePair>),
    Kto(Vec<KtoExample>),
    Grpo(BTreeMap<String, GrpoTarget>),
}

impl TrainingData {
    pub fn method(&self) -> Method {
        match self {
            TrainingData::Sft(_) => Method::Sft,
            TrainingData::Dpo(_) => Method::Dpo,
            TrainingData::Kto(_) => Method::Kto,
            TrainingData::Grpo(_) => Method::Grpo,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TrainingData::Sft(v) => v.len(),
            TrainingData::Dpo(v) => v.len(),
            TrainingData::Kto(v) => v.len(),
            TrainingData::Grpo(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Trained policy plus the per-epoch loss curve (loss evaluated before each
/// update, so entry 0 is the loss at the reference).
#[derive(Debug)]
pub struct TrainOutcome {
    pub policy: ToyPolicy,
    pub curve: Vec<(usize, f64)>,
}

enum Tokenized {
    Sft(Vec<TokenizedExample>),
    Dpo(Vec<TokenizedPair>),
    Kto(Vec<TokenizedLabeled>),
    Grpo(BTreeMap<String, GrpoTarget>),
}

/// Full-batch gradient descent with an optional momentum term. The
/// reference snapshot is taken once at start; GRPO resamples each epoch
/// from the current policy on a stream seeded by `hp.seed`. Deterministic
/// given the seed. Non-finite losses abort.
pub fn train(
    policy: ToyPolicy,
    data: &TrainingData,
    hp: &ObjectiveHyperparams,
) -> Result<TrainOutcome, ObjectiveError> {
    let reference = ReferenceSnapshot::of(&policy);
    train_from(policy, data, hp, reference)
}

/// Like [`train`] but against an externally supplied frozen reference
/// (the fixed-original-reference iteration variant).
pub fn train_from(
    policy: ToyPolicy,
    data: &TrainingData,
    hp: &ObjectiveHyperparams,
    reference: ReferenceSnapshot,
) -> Result<TrainOutcome, ObjectiveError> {
    if data.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let vocab = policy.vocab().clone();
    let tokenized = match data {
        TrainingData::Sft(items) => Tokenized::Sft(
            items
                .iter()
                .map(|e| TokenizedExample {
                    context: vocab.tokenize(&e.context),
                    target: vocab.tokenize(&e.target),
                })
                .collect(),
        ),
        TrainingData::Dpo(items) => Tokenized::Dpo(
            items
                .iter()
                .map(|p| TokenizedPair {
                    context: vocab.tokenize(&p.context),
                    chosen: vocab.tokenize(&p.chosen),
                    rejected: vocab.tokenize(&p.rejected),
                })
                .collect(),
        ),
        TrainingData::Kto(items) => Tokenized::Kto(
            items
                .iter()
                .map(|e| TokenizedLabeled {
                    context: vocab.tokenize(&e.context),
                    text: vocab.tokenize(&e.text),
                    positive: e.positive(),
                })
                .collect(),
        ),
        TrainingData::Grpo(targets) => Tokenized::Grpo(targets.clone()),
    };

    let mut policy = policy;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut velocity = vec![0.0; policy.params().len()];
    let mut curve = Vec::with_capacity(hp.epochs);

    for epoch in 0..hp.epochs {
        let eval = match &tokenized {
            Tokenized::Sft(batch) => sft_loss(&policy, batch)?,
            Tokenized::Dpo(pairs) => dpo_loss(&policy, &reference, pairs, hp.beta)?,
            Tokenized::Kto(examples) => kto_loss(
                &policy,
                &reference,
                examples,
                hp.beta,
                hp.lambda_plus,
                hp.lambda_minus,
            )?,
            Tokenized::Grpo(targets) => grpo_step(&policy, &reference, targets, hp, &mut rng)?.0,
        };
        if !eval.loss.is_finite() {
            return Err(ObjectiveError::Diverged {
                epoch,
                loss: eval.loss,
            });
        }
        curve.push((epoch, eval.loss));
        let params = policy.params_mut();
        for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(eval.grad.iter()) {
            *v = hp.momentum * *v + g;
            *p -= hp.learning_rate * *v;
        }
    }
    Ok(TrainOutcome { policy, curve })
}

//! Majority-vote consensus, the supporting/dissenting partition, and the
//! method-specific training dataset builders.
//!
//! Final-round trajectories of one debate split into G+ (answer equals the
//! consensus answer), G- (parseable but different), and excluded
//! (non-parseable, or everything parseable when no consensus exists). The
//! builders turn partitions into SFT targets, DPO preference pairs, KTO
//! labeled examples with class-balance weights, and GRPO reward targets.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{Answer, AnswerKind};
use crate::debate::{debate_prompt, initial_prompt, DebateTranscript, Trajectory};
use crate::policy::ToyPolicy;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("transcript {0} incomplete: missing final round")]
    IncompleteTranscript(String),
    #[error("inverse-frequency balance undefined: {0} class is empty")]
    EmptyClass(&'static str),
    #[error("no labeled examples")]
    NoExamples,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset decode error: {0}")]
    Decode(#[from] serde_json::Error),
}

/// Tie handling for the majority vote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Ties yield no consensus.
    Drop,
    /// Earliest-agent answer among the tied classes wins.
    First,
    /// Seeded uniform choice among the tied classes.
    Random(u64),
}

/// Majority-vote outcome over one answer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub answer: Option<Answer>,
    pub support_count: usize,
    pub total_counted: usize,
    pub tie: bool,
    pub nonparseable_count: usize,
}

/// Plurality over the present answers. Absent entries count only toward
/// `nonparseable_count`; equality is canonical answer equality.
pub fn majority_vote(answers: &[Option<Answer>], tie_policy: TiePolicy) -> ConsensusResult {
    let mut counts: Vec<(Answer, usize, usize)> = Vec::new(); // (answer, count, first index)
    let mut nonparseable = 0usize;
    let mut total = 0usize;
    for (idx, slot) in answers.iter().enumerate() {
        match slot {
            None => nonparseable += 1,
            Some(a) => {
                total += 1;
                match counts.iter_mut().find(|(b, _, _)| b == a) {
                    Some((_, c, _)) => *c += 1,
                    None => counts.push((a.clone(), 1, idx)),
                }
            }
        }
    }
    if total == 0 {
        return ConsensusResult {
            answer: None,
            support_count: 0,
            total_counted: 0,
            tie: false,
            nonparseable_count: nonparseable,
        };
    }
    let best = counts.iter().map(|(_, c, _)| *c).max().unwrap();
    let mut tied: Vec<&(Answer, usize, usize)> =
        counts.iter().filter(|(_, c, _)| *c == best).collect();
    tied.sort_by_key(|(_, _, first)| *first);
    let tie = tied.len() > 1;
    let winner = match (tie, tie_policy) {
        (false, _) => Some(tied[0].0.clone()),
        (true, TiePolicy::Drop) => None,
        (true, TiePolicy::First) => Some(tied[0].0.clone()),
        (true, TiePolicy::Random(seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::Rng;
            Some(tied[rng.gen_range(0..tied.len())].0.clone())
        }
    };
    ConsensusResult {
        support_count: winner.as_ref().map_or(0, |_| best),
        answer: winner,
        total_counted: total,
        tie,
        nonparseable_count: nonparseable,
    }
}

/// The G+/G- split of one debate's final round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusPartition {
    pub prompt_id: String,
    pub consensus: ConsensusResult,
    pub positives: Vec<Trajectory>,
    pub negatives: Vec<Trajectory>,
    pub excluded: Vec<Trajectory>,
}

#[derive(Debug, Clone)]
pub struct PartitionOptions {
    pub tie_policy: TiePolicy,
    /// Count non-parseable responses as dissent instead of excluding them.
    pub nonparseable_negatives: bool,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            tie_policy: TiePolicy::Drop,
            nonparseable_negatives: false,
        }
    }
}

/// Partitions a transcript's final round by consensus alignment.
pub fn partition(
    transcript: &DebateTranscript,
    opts: &PartitionOptions,
) -> Result<ConsensusPartition, ConsensusError> {
    let final_round = transcript.final_round();
    if final_round.is_empty() {
        return Err(ConsensusError::IncompleteTranscript(
            transcript.prompt_id.clone(),
        ));
    }
    let answers: Vec<Option<Answer>> = final_round.iter().map(|t| t.parse.answer.clone()).collect();
    let consensus = majority_vote(&answers, opts.tie_policy);
    Ok(split_by_answer(
        transcript,
        consensus.answer.clone(),
        consensus,
        opts,
    ))
}

/// Ground-truth ablation: positives are trajectories matching `label`
/// regardless of consensus.
pub fn partition_by_label(
    transcript: &DebateTranscript,
    label: &Answer,
    opts: &PartitionOptions,
) -> Result<ConsensusPartition, ConsensusError> {
    let final_round = transcript.final_round();
    if final_round.is_empty() {
        return Err(ConsensusError::IncompleteTranscript(
            transcript.prompt_id.clone(),
        ));
    }
    let total = final_round.iter().filter(|t| t.parse.answer.is_some()).count();
    let support = final_round
        .iter()
        .filter(|t| t.parse.answer.as_ref() == Some(label))
        .count();
    let consensus = ConsensusResult {
        answer: Some(label.clone()),
        support_count: support,
        total_counted: total,
        tie: false,
        nonparseable_count: final_round.len() - total,
    };
    Ok(split_by_answer(transcript, Some(label.clone()), consensus, opts))
}

fn split_by_answer(
    transcript: &DebateTranscript,
    target: Option<Answer>,
    consensus: ConsensusResult,
    opts: &PartitionOptions,
) -> ConsensusPartition {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut excluded = Vec::new();
    for traj in transcript.final_round() {
        match (&traj.parse.answer, &target) {
            (Some(a), Some(t)) if a == t => positives.push(traj.clone()),
            (Some(_), Some(_)) => negatives.push(traj.clone()),
            (Some(_), None) => excluded.push(traj.clone()), // no consensus
            (None, _) => {
                if opts.nonparseable_negatives && target.is_some() {
                    negatives.push(traj.clone());
                } else {
                    excluded.push(traj.clone());
                }
            }
        }
    }
    ConsensusPartition {
        prompt_id: transcript.prompt_id.clone(),
        consensus,
        positives,
        negatives,
        excluded,
    }
}

/// Training context selection (the peer-context ablation axes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Initial prompt only, no peer responses.
    None,
    /// Debate-style context rebuilt from round-1 peer responses.
    Initial,
    /// The trajectory's own recorded final-round context.
    #[default]
    Debate,
}

/// Context for one final-round trajectory under the given mode.
pub(crate) fn context_for(
    transcript: &DebateTranscript,
    traj: &Trajectory,
    mode: ContextMode,
) -> String {
    match mode {
        ContextMode::Debate => traj.context.clone(),
        ContextMode::None => initial_prompt(&transcript.question, transcript.kind)
            .unwrap_or_else(|_| traj.context.clone()),
        ContextMode::Initial => {
            let peers: Vec<String> = transcript
                .round(1)
                .iter()
                .filter(|t| t.agent_id != traj.agent_id)
                .map(|t| t.response.clone())
                .collect();
            debate_prompt(&transcript.question, &peers)
        }
    }
}

/// One imitation example: context and target response text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SftExample {
    pub prompt_id: String,
    pub context: String,
    pub target: String,
}

/// One SFT example per consensus-supporting trajectory.
pub fn build_sft_dataset(
    items: &[(DebateTranscript, ConsensusPartition)],
    mode: ContextMode,
) -> Vec<SftExample> {
    let mut out = Vec::new();
    for (transcript, part) in items {
        for traj in &part.positives {
            out.push(SftExample {
                prompt_id: part.prompt_id.clone(),
                context: context_for(transcript, traj, mode),
                target: traj.response.clone(),
            });
        }
    }
    out
}

/// A (chosen, rejected) pair from the same prompt's partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt_id: String,
    pub context: String,
    pub chosen: String,
    pub rejected: String,
}

/// Pair selection cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingStrategy {
    /// Full cartesian product G+ x G-.
    AllPairs,
    /// Seeded uniform subsample of size min(k, |G+|*|G-|).
    MaxPerPrompt { k: usize, seed: u64 },
}

/// Builds preference pairs for one prompt. The pair context is the chosen
/// trajectory's context under the given mode.
pub fn build_dpo_pairs(
    transcript: &DebateTranscript,
    part: &ConsensusPartition,
    mode: ContextMode,
    pairing: PairingStrategy,
) -> Vec<PreferencePair> {
    let n = part.positives.len() * part.negatives.len();
    if n == 0 {
        return Vec::new();
    }
    let make = |flat: usize| {
        let pos = &part.positives[flat / part.negatives.len()];
        let neg = &part.negatives[flat % part.negatives.len()];
        PreferencePair {
            prompt_id: part.prompt_id.clone(),
            context: context_for(transcript, pos, mode),
            chosen: pos.response.clone(),
            rejected: neg.response.clone(),
        }
    };
    match pairing {
        PairingStrategy::AllPairs => (0..n).map(make).collect(),
        PairingStrategy::MaxPerPrompt { k, seed } => {
            let take = k.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picked = rand::seq::index::sample(&mut rng, n, take);
            let mut indices: Vec<usize> = picked.into_iter().collect();
            indices.sort_unstable();
            indices.into_iter().map(make).collect()
        }
    }
}

/// Class label of an unpaired example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KtoLabel {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

/// One unpaired labeled example for KTO.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KtoExample {
    pub prompt_id: String,
    pub context: String,
    pub text: String,
    pub label: KtoLabel,
}

impl KtoExample {
    pub fn positive(&self) -> bool {
        self.label == KtoLabel::Positive
    }
}

/// Class balance for KTO weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancePolicy {
    Equal,
    InverseFrequency,
}

/// Exact rational class weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

impl Rational {
    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Class-balance weights; `lambda_plus * n_plus == lambda_minus * n_minus`
/// holds exactly in rational arithmetic under inverse-frequency balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KtoWeights {
    pub lambda_plus: Rational,
    pub lambda_minus: Rational,
}

/// Every G+ member becomes a positive example and every G- member a
/// negative one; weights depend on the balance policy.
pub fn build_kto_examples(
    items: &[(DebateTranscript, ConsensusPartition)],
    mode: ContextMode,
    balance: BalancePolicy,
) -> Result<(Vec<KtoExample>, KtoWeights), ConsensusError> {
    let mut examples = Vec::new();
    for (transcript, part) in items {
        for traj in &part.positives {
            examples.push(KtoExample {
                prompt_id: part.prompt_id.clone(),
                context: context_for(transcript, traj, mode),
                text: traj.response.clone(),
                label: KtoLabel::Positive,
            });
        }
        for traj in &part.negatives {
            examples.push(KtoExample {
                prompt_id: part.prompt_id.clone(),
                context: context_for(transcript, traj, mode),
                text: traj.response.clone(),
                label: KtoLabel::Negative,
            });
        }
    }
    if examples.is_empty() {
        return Err(ConsensusError::NoExamples);
    }
    let n_plus = examples.iter().filter(|e| e.positive()).count() as u64;
    let n_minus = examples.len() as u64 - n_plus;
    let weights = match balance {
        BalancePolicy::Equal => KtoWeights {
            lambda_plus: Rational { num: 1, den: 1 },
            lambda_minus: Rational { num: 1, den: 1 },
        },
        BalancePolicy::InverseFrequency => {
            if n_plus == 0 {
                return Err(ConsensusError::EmptyClass("positive"));
            }
            if n_minus == 0 {
                return Err(ConsensusError::EmptyClass("negative"));
            }
            let total = n_plus + n_minus;
            KtoWeights {
                lambda_plus: Rational {
                    num: total,
                    den: 2 * n_plus,
                },
                lambda_minus: Rational {
                    num: total,
                    den: 2 * n_minus,
                },
            }
        }
    };
    Ok((examples, weights))
}

/// Reward target for online sampling: the consensus answer per prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpoTarget {
    pub prompt_id: String,
    pub context: String,
    #[serde(rename = "consensus_answer")]
    pub answer: Answer,
    pub kind: AnswerKind,
}

/// One target per prompt with consensus; no-consensus prompts are omitted.
/// The stored context is agent 0's context under the given mode.
pub fn build_grpo_targets(
    items: &[(DebateTranscript, ConsensusPartition)],
    mode: ContextMode,
) -> BTreeMap<String, GrpoTarget> {
    let mut out = BTreeMap::new();
    for (transcript, part) in items {
        let Some(answer) = part.consensus.answer.clone() else {
            continue;
        };
        let Some(first) = transcript.final_round().first().cloned().cloned() else {
            continue;
        };
        out.insert(
            part.prompt_id.clone(),
            GrpoTarget {
                prompt_id: part.prompt_id.clone(),
                context: context_for(transcript, &first, mode),
                answer,
                kind: transcript.kind,
            },
        );
    }
    out
}

/// Orders trajectory indices by descending total log-probability under the
/// policy (stable: equal scores keep input order). The confidence-based
/// ranking strategy compared against majority partitioning.
pub fn rank_by_logprob(trajectories: &[Trajectory], policy: &ToyPolicy) -> Vec<usize> {
    let scores: Vec<f64> = trajectories
        .iter()
        .map(|t| {
            let ctx = policy.vocab().tokenize(&t.context);
            let y = policy.vocab().tokenize(&t.response);
            policy.sequence_logprob(&ctx, &y).unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

// --- JSONL persistence -----------------------------------------------------

fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<(), ConsensusError> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ConsensusError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_sft_file(path: &Path, items: &[SftExample]) -> Result<(), ConsensusError> {
    write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), items)
}

pub fn read_sft_file(path: &Path) -> Result<Vec<SftExample>, ConsensusError> {
    read_jsonl(path)
}

pub fn write_dpo_file(path: &Path, items: &[PreferencePair]) -> Result<(), ConsensusError> {
    write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), items)
}

pub fn read_dpo_file(path: &Path) -> Result<Vec<PreferencePair>, ConsensusError> {
    read_jsonl(path)
}

pub fn write_kto_files(
    path: &Path,
    sidecar: &Path,
    items: &[KtoExample],
    weights: &KtoWeights,
) -> Result<(), ConsensusError> {
    write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), items)?;
    #[derive(Serialize)]
    struct Sidecar {
        lambda_plus: f64,
        lambda_minus: f64,
        lambda_plus_exact: Rational,
        lambda_minus_exact: Rational,
    }
    let s = Sidecar {
        lambda_plus: weights.lambda_plus.as_f64(),
        lambda_minus: weights.lambda_minus.as_f64(),
        lambda_plus_exact: weights.lambda_plus,
        lambda_minus_exact: weights.lambda_minus,
    };
    std::fs::write(sidecar, serde_json::to_vec_pretty(&s)?)?;
    Ok(())
}

pub fn read_kto_files(
    path: &Path,
    sidecar: &Path,
) -> Result<(Vec<KtoExample>, KtoWeights), ConsensusError> {
    let items = read_jsonl(path)?;
    #[derive(Deserialize)]
    struct Sidecar {
        lambda_plus_exact: Rational,
        lambda_minus_exact: Rational,
    }
    let s: Sidecar = serde_json::from_slice(&std::fs::read(sidecar)?)?;
    Ok((
        items,
        KtoWeights {
            lambda_plus: s.lambda_plus_exact,
            lambda_minus: s.lambda_minus_exact,
        },
    ))
}

pub fn write_grpo_file(
    path: &Path,
    targets: &BTreeMap<String, GrpoTarget>,
) -> Result<(), ConsensusError> {
    let items: Vec<&GrpoTarget> = targets.values().collect();
    write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?), &items)
}

pub fn read_grpo_file(path: &Path) -> Result<BTreeMap<String, GrpoTarget>, ConsensusError> {
    let items: Vec<GrpoTarget> = read_jsonl(path)?;
    Ok(items.into_iter().map(|t| (t.prompt_id.clone(), t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answers::{ParseMode, ParseOutcome};
    use crate::debate::DEBATE_PREAMBLE;
    use rand::Rng;

    fn num(s: &str) -> Answer {
        Answer::numeric(s).unwrap()
    }

    fn traj(agent_id: usize, round: usize, answer: Option<&str>) -> Trajectory {
        let parse = match answer {
            Some(a) => ParseOutcome {
                answer: Some(num(a)),
                mode_used: ParseMode::Strict,
                truncated_hint: false,
            },
            None => ParseOutcome::empty(),
        };
        Trajectory {
            agent_id,
            round,
            context: format!("ctx for agent {agent_id} round {round}"),
            response: match answer {
                Some(a) => format!("agent {agent_id} says \\boxed{{{a}}}"),
                None => "ran out of".into(),
            },
            parse,
        }
    }

    fn transcript(final_answers: &[Option<&str>]) -> DebateTranscript {
        let m = final_answers.len();
        let mut trajectories = Vec::new();
        for (i, a) in final_answers.iter().enumerate() {
            trajectories.push(traj(i, 1, Some("0")));
            let mut t = traj(i, 2, *a);
            t.context = format!("{DEBATE_PREAMBLE}: ctx {i}");
            trajectories.push(t);
        }
        DebateTranscript {
            prompt_id: "p0".into(),
            question: "how far?".into(),
            kind: AnswerKind::Numeric,
            num_rounds: 2,
            trajectories: {
                let _ = m;
                trajectories
            },
        }
    }

    #[test]
    fn majority_basic() {
        let answers = vec![Some(num("48")), Some(num("48")), Some(num("300"))];
        let c = majority_vote(&answers, TiePolicy::Drop);
        assert_eq!(c.answer, Some(num("48")));
        assert_eq!(c.support_count, 2);
        assert_eq!(c.total_counted, 3);
        assert!(!c.tie);
    }

    #[test]
    fn majority_all_distinct_is_tie() {
        let answers = vec![Some(num("1")), Some(num("2")), Some(num("3"))];
        let c = majority_vote(&answers, TiePolicy::Drop);
        assert_eq!(c.answer, None);
        assert!(c.tie);
        let c = majority_vote(&answers, TiePolicy::First);
        assert_eq!(c.answer, Some(num("1")));
        assert!(c.tie);
        let c1 = majority_vote(&answers, TiePolicy::Random(7));
        let c2 = majority_vote(&answers, TiePolicy::Random(7));
        assert_eq!(c1.answer, c2.answer);
        assert!(c1.answer.is_some());
    }

    #[test]
    fn majority_counts_nonparseable_separately() {
        let answers = vec![Some(num("5")), None, None];
        let c = majority_vote(&answers, TiePolicy::Drop);
        assert_eq!(c.answer, Some(num("5")));
        assert_eq!(c.total_counted, 1);
        assert_eq!(c.nonparseable_count, 2);
        let empty = majority_vote(&[None, None], TiePolicy::Drop);
        assert_eq!(empty.answer, None);
        assert_eq!(empty.total_counted, 0);
    }

    #[test]
    fn majority_matches_bruteforce_oracle() {
        // Brute-force oracle: exhaustive count-and-argmax over the multiset,
        // written independently of the implementation path.
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..1000 {
            let n = rng.gen_range(0..=7);
            let answers: Vec<Option<Answer>> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        None
                    } else {
                        Some(num(&rng.gen_range(0..4).to_string()))
                    }
                })
                .collect();
            let got = majority_vote(&answers, TiePolicy::Drop);
            // oracle
            let mut tally: BTreeMap<String, usize> = BTreeMap::new();
            for a in answers.iter().flatten() {
                *tally.entry(a.as_str()).or_insert(0) += 1;
            }
            let best = tally.values().copied().max().unwrap_or(0);
            let winners: Vec<&String> =
                tally.iter().filter(|(_, c)| **c == best).map(|(k, _)| k).collect();
            if best == 0 || winners.len() > 1 {
                assert_eq!(got.answer, None);
            } else {
                assert_eq!(got.answer.as_ref().map(|a| a.as_str()).as_deref(), Some(winners[0].as_str()));
                assert_eq!(got.support_count, best);
            }
        }
    }

    #[test]
    fn majority_permutation_invariant_under_drop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let mut answers: Vec<Option<Answer>> = (0..n)
                .map(|_| (!rng.gen_bool(0.2)).then(|| num(&rng.gen_range(0..3).to_string())))
                .collect();
            let before = majority_vote(&answers, TiePolicy::Drop);
            use rand::seq::SliceRandom;
            answers.shuffle(&mut rng);
            let after = majority_vote(&answers, TiePolicy::Drop);
            assert_eq!(before.answer, after.answer);
            assert_eq!(before.support_count, after.support_count);
        }
    }

    #[test]
    fn partition_splits_and_is_total() {
        let t = transcript(&[Some("27"), Some("27"), Some("48")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        assert_eq!(p.positives.len(), 2);
        assert_eq!(p.negatives.len(), 1);
        assert_eq!(p.excluded.len(), 0);
        assert_eq!(p.consensus.answer, Some(num("27")));

        let t = transcript(&[Some("27"), None, None]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        assert_eq!((p.positives.len(), p.negatives.len(), p.excluded.len()), (1, 0, 2));

        // No consensus: all parseable trajectories excluded.
        let t = transcript(&[Some("1"), Some("2"), Some("3")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        assert_eq!((p.positives.len(), p.negatives.len(), p.excluded.len()), (0, 0, 3));
    }

    #[test]
    fn partition_totality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let m = rng.gen_range(1..=5);
            let answers: Vec<Option<String>> = (0..m)
                .map(|_| (!rng.gen_bool(0.25)).then(|| rng.gen_range(0..3).to_string()))
                .collect();
            let refs: Vec<Option<&str>> = answers.iter().map(|o| o.as_deref()).collect();
            let t = transcript(&refs);
            let p = partition(&t, &PartitionOptions::default()).unwrap();
            assert_eq!(p.positives.len() + p.negatives.len() + p.excluded.len(), m);
            // Recount oracle on sizes.
            let c = majority_vote(&t.final_answers(), TiePolicy::Drop);
            match c.answer {
                Some(a) => {
                    let pos = refs.iter().flatten().filter(|s| num(s) == a).count();
                    assert_eq!(p.positives.len(), pos);
                    assert!(p.positives.iter().all(|tr| tr.parse.answer.as_ref() == Some(&a)));
                }
                None => assert_eq!(p.positives.len(), 0),
            }
        }
    }

    #[test]
    fn partition_by_label_overrides_consensus() {
        let t = transcript(&[Some("27"), Some("48"), Some("48")]);
        let p = partition_by_label(&t, &num("27"), &PartitionOptions::default()).unwrap();
        assert_eq!(p.positives.len(), 1);
        assert_eq!(p.negatives.len(), 2);
    }

    #[test]
    fn sft_dataset_counts_and_context_modes() {
        let t = transcript(&[Some("27"), Some("27"), Some("48")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        let items = vec![(t, p)];
        assert_eq!(build_sft_dataset(&items, ContextMode::Debate).len(), 2);
        // No-context ablation rewrites contexts to the initial prompt.
        let none = build_sft_dataset(&items, ContextMode::None);
        assert!(none.iter().all(|e| !e.context.contains(DEBATE_PREAMBLE)));
        assert!(none.iter().all(|e| e.context.starts_with("Solve the following math problem.")));
        // Initial mode embeds round-1 peers.
        let init = build_sft_dataset(&items, ContextMode::Initial);
        assert!(init.iter().all(|e| e.context.starts_with(DEBATE_PREAMBLE)));

        let no_consensus = transcript(&[Some("1"), Some("2"), Some("3")]);
        let p = partition(&no_consensus, &PartitionOptions::default()).unwrap();
        assert!(build_sft_dataset(&[(no_consensus, p)], ContextMode::Debate).is_empty());
    }

    #[test]
    fn dpo_pair_counts() {
        let t = transcript(&[Some("27"), Some("27"), Some("48")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        let pairs = build_dpo_pairs(&t, &p, ContextMode::Debate, PairingStrategy::AllPairs);
        assert_eq!(pairs.len(), 2);
        for pair in &pairs {
            assert!(pair.chosen.contains("27"));
            assert!(pair.rejected.contains("48"));
        }
        // |G-| = 0 -> no pairs.
        let t = transcript(&[Some("27"), Some("27"), Some("27")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        assert!(build_dpo_pairs(&t, &p, ContextMode::Debate, PairingStrategy::AllPairs).is_empty());
    }

    #[test]
    fn dpo_max_per_prompt_sampling() {
        let t = transcript(&[Some("27"), Some("27"), Some("27"), Some("48"), Some("48")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        assert_eq!(p.positives.len() * p.negatives.len(), 6);
        let pairs = build_dpo_pairs(
            &t,
            &p,
            ContextMode::Debate,
            PairingStrategy::MaxPerPrompt { k: 4, seed: 3 },
        );
        assert_eq!(pairs.len(), 4);
        // Distinct pairs.
        let mut seen: Vec<(String, String)> = pairs
            .iter()
            .map(|p| (p.chosen.clone(), p.rejected.clone()))
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        // k above the product size takes everything.
        let all = build_dpo_pairs(
            &t,
            &p,
            ContextMode::Debate,
            PairingStrategy::MaxPerPrompt { k: 100, seed: 3 },
        );
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn kto_weights() {
        let t = transcript(&[Some("27"), Some("27"), Some("27"), Some("48")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        let items = vec![(t, p)];
        let (examples, w) = build_kto_examples(&items, ContextMode::Debate, BalancePolicy::Equal).unwrap();
        assert_eq!(examples.len(), 4);
        assert_eq!(w.lambda_plus.as_f64(), 1.0);
        assert_eq!(w.lambda_minus.as_f64(), 1.0);

        let (_, w) =
            build_kto_examples(&items, ContextMode::Debate, BalancePolicy::InverseFrequency).unwrap();
        // n+=3, n-=1: lambda+ = 4/6 = 2/3, lambda- = 4/2 = 2.
        assert_eq!(w.lambda_plus, Rational { num: 4, den: 6 });
        assert_eq!(w.lambda_minus, Rational { num: 4, den: 2 });
        // Exact balance in integer arithmetic: l+ * n+ == l- * n-.
        let lhs = (w.lambda_plus.num * 3) * w.lambda_minus.den;
        let rhs = w.lambda_minus.num * w.lambda_plus.den;
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn kto_inverse_frequency_empty_class_errors() {
        let t = transcript(&[Some("27"), Some("27"), Some("27")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        let items = vec![(t, p)];
        assert!(matches!(
            build_kto_examples(&items, ContextMode::Debate, BalancePolicy::InverseFrequency),
            Err(ConsensusError::EmptyClass("negative"))
        ));
        // Equal-class weights coincide at (1,1): two supporters, two
        // dissenters across distinct answers (no tie).
        let t = transcript(&[Some("27"), Some("27"), Some("48"), Some("300")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        let (_, w) =
            build_kto_examples(&[(t, p)], ContextMode::Debate, BalancePolicy::InverseFrequency)
                .unwrap();
        assert_eq!(w.lambda_plus.as_f64(), 1.0);
        assert_eq!(w.lambda_minus.as_f64(), 1.0);
    }

    #[test]
    fn grpo_targets_only_for_consensus_prompts() {
        let mut items = Vec::new();
        for i in 0..10 {
            let mut t = if i < 7 {
                transcript(&[Some("27"), Some("27"), Some("48")])
            } else {
                transcript(&[Some("1"), Some("2"), Some("3")])
            };
            t.prompt_id = format!("p{i}");
            let p = partition(&t, &PartitionOptions::default()).unwrap();
            items.push((t, p));
        }
        let targets = build_grpo_targets(&items, ContextMode::Debate);
        assert_eq!(targets.len(), 7);
        assert!(!targets.contains_key("p9"));
        assert_eq!(targets.get("p0").unwrap().answer, num("27"));
    }

    #[test]
    fn grpo_targets_roundtrip() {
        let t = transcript(&[Some("27"), Some("27"), Some("48")]);
        let p = partition(&t, &PartitionOptions::default()).unwrap();
        let targets = build_grpo_targets(&[(t, p)], ContextMode::Debate);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grpo.jsonl");
        write_grpo_file(&path, &targets).unwrap();
        let back = read_grpo_file(&path).unwrap();
        assert_eq!(back.len(), targets.len());
        assert_eq!(back.get("p0").unwrap().answer, targets.get("p0").unwrap().answer);
        assert_eq!(back.get("p0").unwrap().context, targets.get("p0").unwrap().context);
        // Bit-exact file reproduction.
        let path2 = dir.path().join("grpo2.jsonl");
        write_grpo_file(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn logprob_ranking_is_descending_and_stable() {
        use crate::policy::Vocab;
        let mut policy = ToyPolicy::uniform(Vocab::standard(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for z in policy.params_mut() {
            *z = rng.gen_range(-1.0..1.0);
        }
        for _ in 0..100 {
            let m = rng.gen_range(2..6);
            let trajectories: Vec<Trajectory> = (0..m)
                .map(|i| {
                    let a = rng.gen_range(0..3).to_string();
                    let mut t = traj(i, 1, Some(&a));
                    t.context = "shared context".into();
                    t
                })
                .collect();
            let order = rank_by_logprob(&trajectories, &policy);
            // Independent score-and-sort oracle.
            let scores: Vec<f64> = trajectories
                .iter()
                .map(|t| {
                    policy
                        .sequence_logprob(
                            &policy.vocab().tokenize(&t.context),
                            &policy.vocab().tokenize(&t.response),
                        )
                        .unwrap()
                })
                .collect();
            for w in order.windows(2) {
                assert!(scores[w[0]] >= scores[w[1]]);
                if scores[w[0]] == scores[w[1]] {
                    assert!(w[0] < w[1], "stable order broken");
                }
            }
        }
    }
}

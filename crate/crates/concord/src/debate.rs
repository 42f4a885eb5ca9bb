//! Iterative debate engine.
//!
//! One debate runs R rounds over M agents: round 1 generates independently
//! from the initial prompt, rounds 2..R condition each agent on all peers'
//! previous-round responses. A barrier separates rounds (no round-r
//! generation starts before every round-(r-1) response exists). Responses
//! are parsed with the configured parser as they arrive.
//!
//! Across debates, batches run up to `batch_size` concurrently through
//! [`crate::par`]; per-debate agent instances come from an [`AgentFactory`]
//! so concurrent debates never share mutable agent state.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, FinishReason};
use crate::answers::{Answer, AnswerKind, ParseMode, ParseOutcome, ParserChoice};
use crate::par;

pub type PromptText = String;

/// Initial-round template for numeric tasks.
pub const NUMERIC_INITIAL_TEMPLATE: &str = "Solve the following math problem. {question}\n\nProvide a bullet point summary of your step-by-step reasoning.\nYour final answer should be a single numerical number, in the form \\boxed{answer}, at the end of your response.";

/// Initial-round template for multiple-choice tasks.
pub const CHOICE_INITIAL_TEMPLATE: &str = "Answer the following multiple choice question as accurately as possible. \n{question}\n\nProvide a bullet point summary of your step-by-step reasoning.\nYour final answer should be a single choice letter in the form \\boxed{answer}, at the end of your response.";

/// Debate-round template embedding peers' previous responses.
pub const DEBATE_TEMPLATE: &str = "Here are solutions from other agents: \n{agent_responses}\n\nUsing each response as additional advice, give an updated bullet point summary of your step-by-step reasoning to the question: {question}\n\nMake sure your final answer is in the form \\boxed{answer}, at the end of your response.";

/// First line of the debate template; used to detect debate rounds from the
/// context text alone.
pub const DEBATE_PREAMBLE: &str = "Here are solutions from other agents";

#[derive(Debug, Error)]
pub enum DebateError {
    #[error("question must be non-empty")]
    EmptyQuestion,
    #[error("config invalid: {0}")]
    BadConfig(String),
    #[error("expected {expected} agents, got {got}")]
    AgentArity { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript decode error: {0}")]
    Decode(#[from] serde_json::Error),
}

/// Sampling parameters forwarded to agent backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Temperature; 0 denotes greedy decoding.
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            temperature: 1.0,
            top_p: 0.9,
            max_new_tokens: 256,
            seed: None,
        }
    }
}

/// Debate shape: M agents, R rounds (R=1 means initial round only), batches
/// of B concurrent debates, L outer iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebateConfig {
    pub num_agents: usize,
    pub num_rounds: usize,
    #[serde(default)]
    pub gen: GenParams,
    pub batch_size: usize,
    pub iterations: usize,
    #[serde(default)]
    pub parser: ParserChoice,
    /// Bounded retries on backend failure before recording an empty
    /// trajectory.
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_retries() -> usize {
    3
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), DebateError> {
        if self.num_agents < 1 || self.num_rounds < 1 || self.batch_size < 1 || self.iterations < 1
        {
            return Err(DebateError::BadConfig(
                "num_agents, num_rounds, batch_size, iterations must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One agent response in one round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent_id: usize,
    /// 1-based round index.
    pub round: usize,
    /// Prompt text used for generation.
    pub context: PromptText,
    /// Raw response text (empty when the backend failed).
    pub response: String,
    pub parse: ParseOutcome,
}

/// All trajectories for one prompt across R rounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub prompt_id: String,
    pub question: String,
    pub kind: AnswerKind,
    pub num_rounds: usize,
    pub trajectories: Vec<Trajectory>,
}

impl DebateTranscript {
    pub fn num_agents(&self) -> usize {
        self.trajectories.len() / self.num_rounds
    }

    /// Trajectories of a round, ascending agent id.
    pub fn round(&self, round: usize) -> Vec<&Trajectory> {
        let mut out: Vec<&Trajectory> =
            self.trajectories.iter().filter(|t| t.round == round).collect();
        out.sort_by_key(|t| t.agent_id);
        out
    }

    pub fn final_round(&self) -> Vec<&Trajectory> {
        self.round(self.num_rounds)
    }

    /// Parsed final-round answers, ascending agent id (absent = unparseable).
    pub fn final_answers(&self) -> Vec<Option<Answer>> {
        self.final_round()
            .iter()
            .map(|t| t.parse.answer.clone())
            .collect()
    }
}

/// Builds the initial-round prompt for the task kind.
pub fn initial_prompt(question: &str, kind: AnswerKind) -> Result<PromptText, DebateError> {
    if question.trim().is_empty() {
        return Err(DebateError::EmptyQuestion);
    }
    let template = match kind {
        AnswerKind::Numeric => NUMERIC_INITIAL_TEMPLATE,
        AnswerKind::Choice => CHOICE_INITIAL_TEMPLATE,
    };
    Ok(template.replace("{question}", question))
}

/// Builds a debate-round prompt from peers' previous-round responses,
/// concatenated in ascending agent order (self excluded by the caller).
pub fn debate_prompt(question: &str, peer_responses: &[String]) -> PromptText {
    let block = peer_responses.join("\n\n");
    DEBATE_TEMPLATE
        .replace("{agent_responses}", &block)
        .replace("{question}", question)
}

fn generate_with_retries(
    agent: &mut dyn Agent,
    context: &str,
    params: &GenParams,
    max_retries: usize,
) -> (String, FinishReason) {
    let mut last = (String::new(), FinishReason::Error);
    for _ in 0..=max_retries {
        let gen = agent.generate(context, params);
        if gen.finish_reason != FinishReason::Error {
            return (gen.text, gen.finish_reason);
        }
        last = (String::new(), FinishReason::Error);
    }
    last
}

/// Runs one full debate. Backend failures (after bounded retries) become
/// empty trajectories with empty parses; the debate continues.
pub fn run_debate(
    prompt_id: &str,
    question: &str,
    kind: AnswerKind,
    agents: &mut [Box<dyn Agent>],
    cfg: &DebateConfig,
) -> Result<DebateTranscript, DebateError> {
    cfg.validate()?;
    if agents.len() != cfg.num_agents {
        return Err(DebateError::AgentArity {
            expected: cfg.num_agents,
            got: agents.len(),
        });
    }
    let init_context = initial_prompt(question, kind)?;
    let mut trajectories: Vec<Trajectory> = Vec::with_capacity(cfg.num_agents * cfg.num_rounds);
    let mut prev_round: Vec<String> = Vec::new();

    for round in 1..=cfg.num_rounds {
        let mut this_round: Vec<String> = Vec::with_capacity(cfg.num_agents);
        for (agent_id, agent) in agents.iter_mut().enumerate() {
            let context = if round == 1 {
                init_context.clone()
            } else {
                let peers: Vec<String> = prev_round
                    .iter()
                    .enumerate()
                    .filter(|(peer, _)| *peer != agent_id)
                    .map(|(_, r)| r.clone())
                    .collect();
                debate_prompt(question, &peers)
            };
            let (response, finish) =
                generate_with_retries(agent.as_mut(), &context, &cfg.gen, cfg.max_retries);
            let parse = match finish {
                FinishReason::Error => ParseOutcome::empty(),
                _ => cfg
                    .parser
                    .parse(&response, kind)
                    .with_truncated(finish == FinishReason::LengthBudget),
            };
            this_round.push(response.clone());
            trajectories.push(Trajectory {
                agent_id,
                round,
                context,
                response,
                parse,
            });
        }
        prev_round = this_round;
    }

    Ok(DebateTranscript {
        prompt_id: prompt_id.to_string(),
        question: question.to_string(),
        kind,
        num_rounds: cfg.num_rounds,
        trajectories,
    })
}

/// Supplies per-debate agent instances so concurrent debates stay isolated
/// and deterministic. `debate_index` is the position in the batch.
pub trait AgentFactory: Sync {
    fn agents_for(&self, debate_index: usize) -> Vec<Box<dyn Agent>>;
}

/// A prompt to debate, with a stable identifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub question: String,
}

/// Runs debates for every prompt, at most `batch_size` in flight, output
/// order matching input order. Per-debate failures are isolated.
pub fn run_debate_batch(
    prompts: &[PromptSpec],
    kind: AnswerKind,
    factory: &dyn AgentFactory,
    cfg: &DebateConfig,
) -> Result<Vec<DebateTranscript>, DebateError> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(prompts.len());
    let mut start = 0usize;
    while start < prompts.len() {
        let end = (start + cfg.batch_size).min(prompts.len());
        let chunk: Vec<usize> = (start..end).collect();
        let results = par::map(&chunk, |&i| {
            let mut agents = factory.agents_for(i);
            run_debate(&prompts[i].id, &prompts[i].question, kind, &mut agents, cfg)
        });
        for r in results {
            out.push(r?);
        }
        start = end;
    }
    Ok(out)
}

/// One JSONL line per trajectory; templates round-trip bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub prompt_id: String,
    pub question: String,
    pub kind: AnswerKind,
    pub round: usize,
    pub agent_id: usize,
    pub context: String,
    pub response: String,
    pub parsed_answer: Option<String>,
    pub parse_mode: ParseMode,
    pub truncated_hint: bool,
}

/// Writes transcripts as JSONL, one line per trajectory, grouped by prompt
/// in input order, rounds ascending then agents ascending.
pub fn write_transcripts<W: Write>(
    mut w: W,
    transcripts: &[DebateTranscript],
) -> Result<(), DebateError> {
    for t in transcripts {
        for traj in &t.trajectories {
            let line = TrajectoryLine {
                prompt_id: t.prompt_id.clone(),
                question: t.question.clone(),
                kind: t.kind,
                round: traj.round,
                agent_id: traj.agent_id,
                context: traj.context.clone(),
                response: traj.response.clone(),
                parsed_answer: traj.parse.answer.as_ref().map(|a| a.as_str()),
                parse_mode: traj.parse.mode_used,
                truncated_hint: traj.parse.truncated_hint,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_transcripts_file(
    path: &Path,
    transcripts: &[DebateTranscript],
) -> Result<(), DebateError> {
    let file = std::fs::File::create(path)?;
    write_transcripts(std::io::BufWriter::new(file), transcripts)
}

/// Reassembles transcripts from JSONL, preserving first-seen prompt order.
pub fn read_transcripts(path: &Path) -> Result<Vec<DebateTranscript>, DebateError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut order: Vec<String> = Vec::new();
    let mut by_id: std::collections::HashMap<String, DebateTranscript> =
        std::collections::HashMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryLine = serde_json::from_str(&line)?;
        let answer = rec
            .parsed_answer
            .as_deref()
            .and_then(|raw| Answer::from_raw(raw, rec.kind));
        let traj = Trajectory {
            agent_id: rec.agent_id,
            round: rec.round,
            context: rec.context,
            response: rec.response,
            parse: ParseOutcome {
                answer,
                mode_used: rec.parse_mode,
                truncated_hint: rec.truncated_hint,
            },
        };
        let entry = by_id.entry(rec.prompt_id.clone()).or_insert_with(|| {
            order.push(rec.prompt_id.clone());
            DebateTranscript {
                prompt_id: rec.prompt_id,
                question: rec.question,
                kind: rec.kind,
                num_rounds: 0,
                trajectories: Vec::new(),
            }
        });
        entry.num_rounds = entry.num_rounds.max(traj.round);
        entry.trajectories.push(traj);
    }
    Ok(order.into_iter().map(|id| by_id.remove(&id).unwrap()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Generation;

    /// Scripted agent: answers from a fixed list, cycling.
    struct Scripted {
        responses: Vec<String>,
        cursor: usize,
    }

    impl Agent for Scripted {
        fn generate(&mut self, _context: &str, _params: &GenParams) -> Generation {
            let text = self.responses[self.cursor % self.responses.len()].clone();
            self.cursor += 1;
            Generation {
                text,
                finish_reason: FinishReason::Stop,
            }
        }
    }

    fn scripted(answers: &[&str]) -> Box<dyn Agent> {
        Box::new(Scripted {
            responses: answers.iter().map(|a| format!("so \\boxed{{{a}}}")).collect(),
            cursor: 0,
        })
    }

    fn cfg(m: usize, r: usize) -> DebateConfig {
        DebateConfig {
            num_agents: m,
            num_rounds: r,
            gen: GenParams::default(),
            batch_size: 4,
            iterations: 1,
            parser: ParserChoice::Strict,
            max_retries: 3,
        }
    }

    #[test]
    fn initial_prompt_templates() {
        let p = initial_prompt("2+2?", AnswerKind::Numeric).unwrap();
        assert!(p.starts_with("Solve the following math problem. 2+2?"));
        assert!(p.contains("single numerical number, in the form \\boxed{answer}"));
        let p = initial_prompt("Which gas? (A) O2 (B) N2", AnswerKind::Choice).unwrap();
        assert!(p.starts_with("Answer the following multiple choice question as accurately as possible."));
        assert!(p.contains("single choice letter in the form \\boxed{answer}"));
    }

    #[test]
    fn initial_prompt_rejects_empty_question() {
        assert!(matches!(
            initial_prompt("", AnswerKind::Numeric),
            Err(DebateError::EmptyQuestion)
        ));
    }

    #[test]
    fn debate_prompt_embeds_peers_in_order() {
        let p = debate_prompt("q", &["first solution".into(), "second solution".into()]);
        let i1 = p.find("first solution").unwrap();
        let i2 = p.find("second solution").unwrap();
        assert!(i1 < i2);
        assert!(p.starts_with(DEBATE_PREAMBLE));
        assert!(p.contains("reasoning to the question: q"));
    }

    #[test]
    fn debate_prompt_empty_peers() {
        let p = debate_prompt("q", &[]);
        assert!(p.starts_with("Here are solutions from other agents: \n\n\nUsing each response"));
    }

    #[test]
    fn transcript_shape_and_contexts() {
        let mut agents = vec![scripted(&["1"]), scripted(&["2"]), scripted(&["3"])];
        let t = run_debate("p0", "q?", AnswerKind::Numeric, &mut agents, &cfg(3, 2)).unwrap();
        assert_eq!(t.trajectories.len(), 6);
        for round in 1..=2 {
            assert_eq!(t.round(round).len(), 3);
        }
        // Final-round contexts embed both peers' round-1 responses verbatim,
        // self excluded.
        let r1 = t.round(1);
        for traj in t.final_round() {
            for peer in &r1 {
                if peer.agent_id == traj.agent_id {
                    continue;
                }
                assert!(traj.context.contains(&peer.response));
            }
            assert!(!traj.context.contains(&r1[traj.agent_id].response) || {
                // identical response text may legitimately collide
                r1.iter()
                    .any(|p| p.agent_id != traj.agent_id && p.response == r1[traj.agent_id].response)
            });
        }
    }

    #[test]
    fn single_round_has_no_debate_template() {
        let mut agents = vec![scripted(&["1"]), scripted(&["2"]), scripted(&["3"])];
        let t = run_debate("p0", "q?", AnswerKind::Numeric, &mut agents, &cfg(3, 1)).unwrap();
        assert_eq!(t.trajectories.len(), 3);
        assert!(t.trajectories.iter().all(|tr| !tr.context.contains(DEBATE_PREAMBLE)));
    }

    #[test]
    fn agent_arity_checked() {
        let mut agents = vec![scripted(&["1"])];
        assert!(matches!(
            run_debate("p", "q", AnswerKind::Numeric, &mut agents, &cfg(3, 2)),
            Err(DebateError::AgentArity { expected: 3, got: 1 })
        ));
    }

    /// Always-failing agent to exercise the retry-then-empty path.
    struct Failing {
        calls: usize,
    }

    impl Agent for Failing {
        fn generate(&mut self, _c: &str, _p: &GenParams) -> Generation {
            self.calls += 1;
            Generation {
                text: "diagnostic".into(),
                finish_reason: FinishReason::Error,
            }
        }
    }

    #[test]
    fn failed_agent_recorded_empty_and_debate_continues() {
        let mut agents: Vec<Box<dyn Agent>> =
            vec![Box::new(Failing { calls: 0 }), scripted(&["7"]), scripted(&["7"])];
        let t = run_debate("p", "q", AnswerKind::Numeric, &mut agents, &cfg(3, 2)).unwrap();
        assert_eq!(t.trajectories.len(), 6);
        let r1 = t.round(1);
        assert_eq!(r1[0].response, "");
        assert_eq!(r1[0].parse.answer, None);
        assert_eq!(r1[1].parse.answer, Some(Answer::Numeric("7".into())));
    }

    struct ScriptedFactory;

    impl AgentFactory for ScriptedFactory {
        fn agents_for(&self, i: usize) -> Vec<Box<dyn Agent>> {
            let a = format!("{}", i);
            vec![scripted(&[&a]), scripted(&[&a]), scripted(&[&a])]
        }
    }

    #[test]
    fn batch_preserves_order() {
        let prompts: Vec<PromptSpec> = (0..10)
            .map(|i| PromptSpec {
                id: format!("p{i}"),
                question: format!("q{i}"),
            })
            .collect();
        let mut c = cfg(3, 1);
        c.batch_size = 4;
        let ts = run_debate_batch(&prompts, AnswerKind::Numeric, &ScriptedFactory, &c).unwrap();
        assert_eq!(ts.len(), 10);
        for (i, t) in ts.iter().enumerate() {
            assert_eq!(t.prompt_id, format!("p{i}"));
            assert_eq!(
                t.final_answers()[0],
                Some(Answer::Numeric(i.to_string()))
            );
        }
        let empty = run_debate_batch(&[], AnswerKind::Numeric, &ScriptedFactory, &c).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn jsonl_roundtrip_is_bit_exact() {
        let mut agents = vec![scripted(&["27"]), scripted(&["48"]), scripted(&["27"])];
        let t = run_debate("p0", "how far?", AnswerKind::Numeric, &mut agents, &cfg(3, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_transcripts_file(&path, std::slice::from_ref(&t)).unwrap();
        let back = read_transcripts(&path).unwrap();
        assert_eq!(back.len(), 1);
        let b = &back[0];
        assert_eq!(b.num_rounds, 2);
        assert_eq!(b.trajectories.len(), t.trajectories.len());
        for (x, y) in t.trajectories.iter().zip(b.trajectories.iter()) {
            assert_eq!(x.context, y.context);
            assert_eq!(x.response, y.response);
            assert_eq!(x.parse.answer, y.parse.answer);
        }
        // Writing again must produce identical bytes.
        let path2 = dir.path().join("t2.jsonl");
        write_transcripts_file(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}

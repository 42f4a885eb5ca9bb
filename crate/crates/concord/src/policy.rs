//! Exact n-gram categorical policy and its word/box tokenizer.
//!
//! The policy is a table of logits indexed by (context-window state, next
//! token): an autoregressive categorical model whose per-state distributions
//! are exact softmaxes. That keeps sequence probabilities, gradients, and KL
//! divergences computable in closed form, which is what the training
//! objectives and their finite-difference oracles need.
//!
//! Tokenization is word-level over a small fixed vocabulary, with one twist:
//! `\boxed{...}` regions are split into an opening token, one token per
//! non-whitespace content character, and a closing token. Answer strings
//! round-trip exactly through sampling and re-parsing while all other prose
//! collapses to filler/unknown tokens.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::boxed_spans;

pub type TokenId = usize;

/// Checkpoint / construction errors for the toy policy.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("token id {0} out of vocabulary (size {1})")]
    TokenOutOfVocab(TokenId, usize),
    #[error("vocabulary too large: {0} tokens (max {MAX_VOCAB})")]
    VocabTooLarge(usize),
    #[error("state table too large: {0} parameters")]
    TableTooLarge(u128),
    #[error("context order must be at least 1")]
    ZeroOrder,
    #[error("answer set not representable at this context order: state for {0:?} conflicts")]
    NotRepresentable(String),
    #[error("answer model weights must be positive and sum with nonparseable prob to 1 (got {0})")]
    BadAnswerWeights(f64),
    #[error("checkpoint version {0} unsupported")]
    BadVersion(u32),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint decode error: {0}")]
    Decode(#[from] serde_json::Error),
}

pub const MAX_VOCAB: usize = 64;
const MAX_PARAMS: u128 = 1 << 24;

/// Fixed token inventory shared by the tokenizer and the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, TokenId>,
}

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
pub const BOXED_OPEN: TokenId = 3;
pub const BOXED_CLOSE: TokenId = 4;

const BOS_STR: &str = "<bos>";
const EOS_STR: &str = "<eos>";
const UNK_STR: &str = "<unk>";
const BOXED_OPEN_STR: &str = "\\boxed{";
const BOXED_CLOSE_STR: &str = "}";

/// A trie-walk step: token history so far plus the still-live answers
/// with their weights.
type TrieStep = (Vec<TokenId>, Vec<(usize, f64)>);

/// Filler lexicon used by default vocabularies and the simulated agents.
/// Words outside the vocabulary tokenize to `<unk>`, so this list only
/// affects how readable generated filler is.
pub const FILLER_WORDS: &[&str] = &[
    "we", "compute", "the", "result", "step", "by", "so", "then", "check", "value", "total",
    "thus",
];

impl Vocab {
    /// Builds a vocabulary from explicit token strings. The five specials
    /// are prepended automatically.
    pub fn new(extra: &[&str]) -> Result<Self, PolicyError> {
        let mut tokens: Vec<String> = vec![
            BOS_STR.into(),
            EOS_STR.into(),
            UNK_STR.into(),
            BOXED_OPEN_STR.into(),
            BOXED_CLOSE_STR.into(),
        ];
        tokens.extend(extra.iter().map(|s| s.to_string()));
        if tokens.len() > MAX_VOCAB {
            return Err(PolicyError::VocabTooLarge(tokens.len()));
        }
        let mut vocab = Vocab {
            tokens,
            index: BTreeMap::new(),
        };
        vocab.rebuild_index();
        Ok(vocab)
    }

    /// Standard vocabulary: specials, the answer alphabet (digits, point,
    /// minus, letters A-E), and the filler lexicon.
    pub fn standard() -> Self {
        let mut extra: Vec<String> = ('0'..='9').map(String::from).collect();
        extra.push(".".into());
        extra.push("-".into());
        extra.extend(('A'..='E').map(String::from));
        extra.extend(FILLER_WORDS.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = extra.iter().map(String::as_str).collect();
        Vocab::new(&refs).expect("standard vocabulary fits")
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_str(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn lookup(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Ids of the filler words present in this vocabulary.
    pub fn filler_ids(&self) -> Vec<TokenId> {
        FILLER_WORDS
            .iter()
            .filter_map(|w| self.index.get(*w).copied())
            .collect()
    }

    /// Tokenizes text: words by whitespace, `\boxed{...}` regions expanded
    /// into open token, per-character content tokens, close token. A
    /// truncated `\boxed{` with no closing brace still emits the open token
    /// and its partial content, mirroring budget-exhausted responses.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        let spans = boxed_spans(text);
        let mut cursor = 0usize;
        for (start, content, end) in &spans {
            self.tokenize_words(&text[cursor..*start], &mut out);
            out.push(BOXED_OPEN);
            self.tokenize_box_content(&text[content.clone()], &mut out);
            out.push(BOXED_CLOSE);
            cursor = *end;
        }
        // Tail may still contain a truncated, unclosed marker.
        let tail = &text[cursor..];
        if let Some(pos) = tail.find(BOXED_OPEN_STR) {
            self.tokenize_words(&tail[..pos], &mut out);
            out.push(BOXED_OPEN);
            self.tokenize_box_content(&tail[pos + BOXED_OPEN_STR.len()..], &mut out);
        } else {
            self.tokenize_words(tail, &mut out);
        }
        out
    }

    fn tokenize_words(&self, text: &str, out: &mut Vec<TokenId>) {
        for word in text.split_whitespace() {
            out.push(self.lookup(word));
        }
    }

    fn tokenize_box_content(&self, content: &str, out: &mut Vec<TokenId>) {
        for ch in content.chars().filter(|c| !c.is_whitespace()) {
            out.push(self.lookup(&ch.to_string()));
        }
    }

    /// Inverse of `tokenize` up to filler wording: tokens joined by spaces,
    /// box content concatenated tightly so `\boxed{27}` re-parses.
    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        let mut out = String::new();
        let mut in_box = false;
        for &tok in tokens {
            match tok {
                BOS | EOS => {}
                BOXED_OPEN => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(BOXED_OPEN_STR);
                    in_box = true;
                }
                BOXED_CLOSE if in_box => {
                    out.push('}');
                    in_box = false;
                }
                _ => {
                    if in_box {
                        out.push_str(self.token_str(tok));
                    } else {
                        if !out.is_empty() {
                            out.push(' ');
                        }
                        out.push_str(self.token_str(tok));
                    }
                }
            }
        }
        out
    }
}

/// Frozen reference snapshot taken at training start (the anchor of the
/// log-ratio losses and the KL term).
#[derive(Debug, Clone)]
pub struct ReferenceSnapshot {
    policy: ToyPolicy,
}

impl ReferenceSnapshot {
    pub fn of(policy: &ToyPolicy) -> Self {
        ReferenceSnapshot {
            policy: policy.clone(),
        }
    }

    pub fn policy(&self) -> &ToyPolicy {
        &self.policy
    }
}

/// A sampled trajectory from the policy.
#[derive(Debug, Clone)]
pub struct SampledSequence {
    /// Emitted tokens, end-of-sequence excluded.
    pub tokens: Vec<TokenId>,
    /// False when the step cap was hit before end-of-sequence.
    pub terminated: bool,
}

/// Small differentiable autoregressive categorical policy.
///
/// Parameters are logits over the next token for every state, where a state
/// is the last `order` tokens of (context ++ generated prefix), padded with
/// begin-of-sequence on the left.
#[derive(Debug, Clone)]
pub struct ToyPolicy {
    vocab: Vocab,
    order: usize,
    logits: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    vocab: Vec<String>,
    order: usize,
    logits: Vec<f64>,
}

/// Configuration of the synthetic base behavior a policy can be built from:
/// geometric filler, then `\boxed{answer}` with the given answer weights, or
/// end-of-sequence before any box with probability `nonparseable_prob`.
#[derive(Debug, Clone)]
pub struct AnswerModelConfig {
    /// (canonical answer string, probability); must sum with
    /// `nonparseable_prob` to 1 within 1e-12.
    pub answers: Vec<(String, f64)>,
    pub nonparseable_prob: f64,
    /// Probability of emitting another filler word at each filler step.
    pub filler_continue: f64,
}

impl ToyPolicy {
    /// Uniform policy (all logits zero).
    pub fn uniform(vocab: Vocab, order: usize) -> Result<Self, PolicyError> {
        if order == 0 {
            return Err(PolicyError::ZeroOrder);
        }
        let states = (vocab.len() as u128).pow(order as u32);
        let params = states * vocab.len() as u128;
        if params > MAX_PARAMS {
            return Err(PolicyError::TableTooLarge(params));
        }
        Ok(ToyPolicy {
            order,
            logits: vec![0.0; params as usize],
            vocab,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_states(&self) -> usize {
        self.logits.len() / self.vocab.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.logits
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    /// State index for the last `order` tokens of `history`, BOS-padded.
    pub fn state_of(&self, history: &[TokenId]) -> usize {
        let v = self.vocab.len();
        let mut idx = 0usize;
        for slot in 0..self.order {
            let pos = history.len() as isize - self.order as isize + slot as isize;
            let tok = if pos < 0 { BOS } else { history[pos as usize] };
            idx = idx * v + tok;
        }
        idx
    }

    fn advance_state(&self, state: usize, tok: TokenId) -> usize {
        let v = self.vocab.len();
        let high = self.vocab.len().pow((self.order - 1) as u32);
        (state % high) * v + tok
    }

    fn row(&self, state: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.logits[state * v..(state + 1) * v]
    }

    /// Log-probabilities of the next token for a state (exact log-softmax).
    pub fn next_log_probs(&self, state: usize) -> Vec<f64> {
        let row = self.row(state);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
        row.iter().map(|z| z - lse).collect()
    }

    /// Next-token probabilities for a state.
    pub fn next_probs(&self, state: usize) -> Vec<f64> {
        self.next_log_probs(state).iter().map(|l| l.exp()).collect()
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<(), PolicyError> {
        let v = self.vocab.len();
        for &t in tokens {
            if t >= v {
                return Err(PolicyError::TokenOutOfVocab(t, v));
            }
        }
        Ok(())
    }

    /// Total log-probability of emitting `y` then end-of-sequence, given the
    /// context: sum over t of log p(y_t | last n of context ++ y_{<t}).
    pub fn sequence_logprob(&self, context: &[TokenId], y: &[TokenId]) -> Result<f64, PolicyError> {
        self.check_tokens(context)?;
        self.check_tokens(y)?;
        let mut state = self.state_of(context);
        let mut total = 0.0;
        for &tok in y.iter().chain(std::iter::once(&EOS)) {
            total += self.next_log_probs(state)[tok];
            state = self.advance_state(state, tok);
        }
        Ok(total)
    }

    /// Accumulates `scale * d(sequence logprob)/d(logits)` into `grad` and
    /// returns the log-probability. `grad` must have `params` length.
    pub fn accumulate_sequence_grad(
        &self,
        context: &[TokenId],
        y: &[TokenId],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64, PolicyError> {
        self.check_tokens(context)?;
        self.check_tokens(y)?;
        debug_assert_eq!(grad.len(), self.logits.len());
        let v = self.vocab.len();
        let mut state = self.state_of(context);
        let mut total = 0.0;
        for &tok in y.iter().chain(std::iter::once(&EOS)) {
            let log_probs = self.next_log_probs(state);
            total += log_probs[tok];
            let base = state * v;
            // d log p(tok) / d z_u = 1[u = tok] - p(u)
            for (u, lp) in log_probs.iter().enumerate() {
                grad[base + u] -= scale * lp.exp();
            }
            grad[base + tok] += scale;
            state = self.advance_state(state, tok);
        }
        Ok(total)
    }

    /// States visited while scoring `y` given `context` (one per emission
    /// step, end-of-sequence step included).
    pub fn visited_states(&self, context: &[TokenId], y: &[TokenId]) -> Vec<usize> {
        let mut state = self.state_of(context);
        let mut states = Vec::with_capacity(y.len() + 1);
        for &tok in y.iter().chain(std::iter::once(&EOS)) {
            states.push(state);
            state = self.advance_state(state, tok);
        }
        states
    }

    /// Samples a trajectory; stops at end-of-sequence or after `max_steps`.
    pub fn sample<R: Rng>(&self, context: &[TokenId], max_steps: usize, rng: &mut R) -> SampledSequence {
        let mut state = self.state_of(context);
        let mut tokens = Vec::new();
        for _ in 0..max_steps {
            let probs = self.next_probs(state);
            let mut draw: f64 = rng.gen();
            let mut choice = probs.len() - 1;
            for (tok, p) in probs.iter().enumerate() {
                if draw < *p {
                    choice = tok;
                    break;
                }
                draw -= p;
            }
            if choice == EOS {
                return SampledSequence {
                    tokens,
                    terminated: true,
                };
            }
            tokens.push(choice);
            state = self.advance_state(state, choice);
        }
        SampledSequence {
            tokens,
            terminated: false,
        }
    }

    /// Greedy decode: argmax next token until end-of-sequence or cap.
    pub fn greedy(&self, context: &[TokenId], max_steps: usize) -> SampledSequence {
        let mut state = self.state_of(context);
        let mut tokens = Vec::new();
        for _ in 0..max_steps {
            let row = self.row(state);
            let choice = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if choice == EOS {
                return SampledSequence {
                    tokens,
                    terminated: true,
                };
            }
            tokens.push(choice);
            state = self.advance_state(state, choice);
        }
        SampledSequence {
            tokens,
            terminated: false,
        }
    }

    /// Exact KL(self || reference) of the next-token distribution at `state`.
    pub fn state_kl(&self, reference: &ToyPolicy, state: usize) -> f64 {
        let lp = self.next_log_probs(state);
        let lq = reference.next_log_probs(state);
        lp.iter()
            .zip(lq.iter())
            .map(|(a, b)| a.exp() * (a - b))
            .sum()
    }

    /// Accumulates `scale * d KL(self || reference)(state) / d logits`.
    ///
    /// d KL / d z_u = p_u * ((log p_u - log q_u) - KL)
    pub fn accumulate_state_kl_grad(
        &self,
        reference: &ToyPolicy,
        state: usize,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let lp = self.next_log_probs(state);
        let lq = reference.next_log_probs(state);
        let kl: f64 = lp
            .iter()
            .zip(lq.iter())
            .map(|(a, b)| a.exp() * (a - b))
            .sum();
        let base = state * self.vocab.len();
        for (u, (a, b)) in lp.iter().zip(lq.iter()).enumerate() {
            grad[base + u] += scale * a.exp() * ((a - b) - kl);
        }
        kl
    }

    /// Builds a policy whose sampled responses follow a synthetic skeleton:
    /// geometric filler over the vocabulary's filler words (or `<unk>` when
    /// none exist), then `\boxed{answer}` with answers drawn from the given
    /// weights, or end-of-sequence before any box with the nonparseable
    /// probability. Requires the answer set to be representable at the
    /// chosen context order (no state may need two different distributions).
    pub fn from_answer_model(
        vocab: Vocab,
        order: usize,
        cfg: &AnswerModelConfig,
    ) -> Result<Self, PolicyError> {
        let total: f64 = cfg.answers.iter().map(|(_, w)| w).sum::<f64>() + cfg.nonparseable_prob;
        if (total - 1.0).abs() > 1e-12
            || cfg.answers.iter().any(|(_, w)| *w <= 0.0)
            || cfg.nonparseable_prob < 0.0
            || !(0.0..1.0).contains(&cfg.filler_continue)
        {
            return Err(PolicyError::BadAnswerWeights(total));
        }
        let mut policy = ToyPolicy::uniform(vocab, order)?;
        let mut fillers = policy.vocab.filler_ids();
        if fillers.is_empty() {
            fillers.push(UNK);
        }

        // Desired transition distributions per state. Built first, then
        // written as logits; conflicting requirements are construction errors.
        let mut desired: BTreeMap<usize, BTreeMap<TokenId, f64>> = BTreeMap::new();
        fn require(
            desired: &mut BTreeMap<usize, BTreeMap<TokenId, f64>>,
            state: usize,
            dist: BTreeMap<TokenId, f64>,
            what: &str,
        ) -> Result<(), PolicyError> {
            match desired.get(&state) {
                None => {
                    desired.insert(state, dist);
                    Ok(())
                }
                Some(existing) => {
                    let same = existing.len() == dist.len()
                        && existing
                            .iter()
                            .all(|(k, v)| dist.get(k).is_some_and(|w| (w - v).abs() < 1e-12));
                    if same {
                        Ok(())
                    } else {
                        Err(PolicyError::NotRepresentable(what.to_string()))
                    }
                }
            }
        }

        // Filler phase. Any state whose trailing token is filler-like keeps
        // the same outgoing distribution, so we enumerate every reachable
        // filler-context state: all order-length suffixes over {fillers, BOS,
        // UNK-context tokens}. Contexts tokenize to arbitrary words, so the
        // conservative choice is to define the filler row for every state
        // ending in a filler word or UNK or BOS (the start padding).
        let q_continue = cfg.filler_continue;
        let q_rest = 1.0 - q_continue;
        let q_eos = q_rest * cfg.nonparseable_prob;
        let q_box = q_rest - q_eos;
        let mut filler_row: BTreeMap<TokenId, f64> = BTreeMap::new();
        for &f in &fillers {
            *filler_row.entry(f).or_insert(0.0) += q_continue / fillers.len() as f64;
        }
        if q_box > 0.0 {
            filler_row.insert(BOXED_OPEN, q_box);
        }
        if q_eos > 0.0 {
            filler_row.insert(EOS, q_eos);
        }

        let mut filler_like: Vec<TokenId> = fillers.clone();
        filler_like.push(UNK);
        filler_like.push(BOS);
        // Enumerate states ending in a filler-like token with any prefix of
        // filler-like tokens: those are the reachable pre-box states.
        let mut stack: Vec<Vec<TokenId>> = vec![vec![]];
        for _ in 0..order {
            let mut next = Vec::new();
            for prefix in &stack {
                for &tok in &filler_like {
                    let mut p = prefix.clone();
                    p.push(tok);
                    next.push(p);
                }
            }
            stack = next;
        }
        for suffix in &stack {
            let state = policy.state_of(suffix);
            require(&mut desired, state, filler_row.clone(), "filler")?;
        }

        // Answer trie. Node at prefix `p` of the boxed content distributes
        // mass among continuation characters and the closing brace. The state
        // right after `\boxed{` still carries the preceding filler tokens in
        // its window, so the walk runs once per filler-like prefix; the
        // variants merge as soon as the window is filled with box content.
        let answers: Vec<(Vec<TokenId>, f64)> = cfg
            .answers
            .iter()
            .map(|(s, w)| {
                let toks: Vec<TokenId> = s
                    .chars()
                    .map(|c| policy.vocab.lookup(&c.to_string()))
                    .collect();
                (toks, *w)
            })
            .collect();
        for (toks, _) in &answers {
            if toks.contains(&UNK) {
                return Err(PolicyError::NotRepresentable(
                    "answer uses characters outside the vocabulary".into(),
                ));
            }
        }
        let mut filler_prefixes: Vec<Vec<TokenId>> = vec![vec![]];
        for _ in 0..order.saturating_sub(1) {
            let mut next = Vec::new();
            for prefix in &filler_prefixes {
                for &tok in &filler_like {
                    let mut p = prefix.clone();
                    p.push(tok);
                    next.push(p);
                }
            }
            filler_prefixes = next;
        }
        for filler_prefix in &filler_prefixes {
            let mut base_history = filler_prefix.clone();
            base_history.push(BOXED_OPEN);
            let prefix_len = base_history.len();
            let mut walk: Vec<TrieStep> = vec![(
                base_history,
                answers.iter().enumerate().map(|(i, (_, w))| (i, *w)).collect(),
            )];
            while let Some((history, live)) = walk.pop() {
                let depth = history.len() - prefix_len; // chars emitted so far
                let mut next_mass: BTreeMap<TokenId, f64> = BTreeMap::new();
                let mut close_mass = 0.0;
                for (ai, w) in &live {
                    let toks = &answers[*ai].0;
                    if depth == toks.len() {
                        close_mass += w;
                    } else {
                        *next_mass.entry(toks[depth]).or_insert(0.0) += w;
                    }
                }
                let total_mass: f64 = close_mass + next_mass.values().sum::<f64>();
                let mut dist: BTreeMap<TokenId, f64> = next_mass
                    .iter()
                    .map(|(t, m)| (*t, m / total_mass))
                    .collect();
                if close_mass > 0.0 {
                    dist.insert(BOXED_CLOSE, close_mass / total_mass);
                }
                let state = policy.state_of(&history);
                require(&mut desired, state, dist, &policy.vocab.detokenize(&history))?;
                for (tok, _) in next_mass {
                    let mut h = history.clone();
                    h.push(tok);
                    let live_next: Vec<(usize, f64)> = live
                        .iter()
                        .filter(|(ai, _)| {
                            let toks = &answers[*ai].0;
                            depth < toks.len() && toks[depth] == tok
                        })
                        .cloned()
                        .collect();
                    walk.push((h, live_next));
                }
                if close_mass > 0.0 {
                    // After the closing brace: end the sequence.
                    let mut h = history.clone();
                    h.push(BOXED_CLOSE);
                    let state = policy.state_of(&h);
                    let mut eos_row = BTreeMap::new();
                    eos_row.insert(EOS, 1.0);
                    require(&mut desired, state, eos_row, "post-close")?;
                }
            }
        }

        // Write logits: ln(p) for desired targets, strongly negative masses
        // elsewhere so the softmax matches the requested distribution to
        // ~1e-12.
        const FORBIDDEN: f64 = -40.0;
        let v = policy.vocab.len();
        for (state, dist) in desired {
            let base = state * v;
            for slot in policy.logits[base..base + v].iter_mut() {
                *slot = FORBIDDEN;
            }
            for (tok, p) in dist {
                policy.logits[base + tok] = p.ln();
            }
        }
        Ok(policy)
    }

    /// Writes a versioned JSON checkpoint with exact f64 round-trip.
    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let ck = Checkpoint {
            version: 1,
            vocab: self.vocab.tokens.clone(),
            order: self.order,
            logits: self.logits.clone(),
        };
        let bytes = serde_json::to_vec(&ck)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let bytes = std::fs::read(path)?;
        let ck: Checkpoint = serde_json::from_slice(&bytes)?;
        if ck.version != 1 {
            return Err(PolicyError::BadVersion(ck.version));
        }
        let mut vocab = Vocab {
            tokens: ck.vocab,
            index: BTreeMap::new(),
        };
        vocab.rebuild_index();
        let expected = vocab.len().pow(ck.order as u32) * vocab.len();
        if ck.logits.len() != expected || ck.order == 0 {
            return Err(PolicyError::BadVersion(1));
        }
        Ok(ToyPolicy {
            vocab,
            order: ck.order,
            logits: ck.logits,
        })
    }

    /// Debug rendering of a state's top transitions.
    pub fn describe_state(&self, state: usize, top: usize) -> String {
        let mut probs: Vec<(usize, f64)> = self.next_probs(state).into_iter().enumerate().collect();
        probs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut out = String::new();
        for (tok, p) in probs.into_iter().take(top) {
            let _ = write!(out, "{}:{:.3} ", self.vocab.token_str(tok), p);
        }
        out
    }
}

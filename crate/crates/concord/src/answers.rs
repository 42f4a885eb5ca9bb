//! Final-answer extraction and answer equality.
//!
//! Responses carry their conclusion either in a `\boxed{...}` marker (the
//! strict format) or in loose natural-language patterns ("The answer is A",
//! "Answer: 42", "= 42" at a line end). The strict parser accepts only the
//! boxed form; the relaxed parser tries strict first and then falls back to
//! the loose patterns, always keeping the last occurrence.
//!
//! Numeric answers are compared as exact canonical decimals ("27.0" equals
//! "27"); choice answers are single letters A-E. Both parsers are pure and
//! never fail: unparseable input yields an empty outcome.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Task answer format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    /// Exact decimal number.
    Numeric,
    /// Single choice letter A-E.
    Choice,
}

/// A parsed final answer in canonical form.
///
/// Numeric values are stored with no leading zeros, no trailing fractional
/// zeros, and "-0" normalized to "0", so equality is plain comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Answer {
    Numeric(String),
    Choice(char),
}

impl Answer {
    /// Builds a numeric answer from any decimal string, canonicalizing it.
    /// Returns `None` when the string is not a plain decimal.
    pub fn numeric(raw: &str) -> Option<Self> {
        canonical_decimal(raw).map(Answer::Numeric)
    }

    /// Builds a choice answer; the letter must be one of A-E.
    pub fn choice(letter: char) -> Option<Self> {
        matches!(letter, 'A'..='E').then_some(Answer::Choice(letter))
    }

    /// Parses an answer of the given kind from a raw string fragment.
    pub fn from_raw(raw: &str, kind: AnswerKind) -> Option<Self> {
        match kind {
            AnswerKind::Numeric => Self::numeric(raw),
            AnswerKind::Choice => {
                let trimmed = raw.trim();
                let mut chars = trimmed.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Self::choice(c),
                    _ => None,
                }
            }
        }
    }

    pub fn kind(&self) -> AnswerKind {
        match self {
            Answer::Numeric(_) => AnswerKind::Numeric,
            Answer::Choice(_) => AnswerKind::Choice,
        }
    }

    /// Canonical surface form, suitable for embedding in `\boxed{...}`.
    pub fn as_str(&self) -> String {
        match self {
            Answer::Numeric(s) => s.clone(),
            Answer::Choice(c) => c.to_string(),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Numeric(s) => write!(f, "{s}"),
            Answer::Choice(c) => write!(f, "{c}"),
        }
    }
}

/// Answer equality: canonical decimal comparison for numerics, letter
/// equality for choices, cross-kind never equal.
pub fn answers_equal(a: &Answer, b: &Answer) -> bool {
    a == b
}

/// Which parser produced an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    Strict,
    Relaxed,
    None,
}

/// Result of extracting a final answer from response text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub answer: Option<Answer>,
    pub mode_used: ParseMode,
    /// Response ended mid-token-budget with no terminator. Set by the debate
    /// engine from the backend finish reason; parsers leave it false.
    pub truncated_hint: bool,
}

impl ParseOutcome {
    pub fn empty() -> Self {
        ParseOutcome {
            answer: None,
            mode_used: ParseMode::None,
            truncated_hint: false,
        }
    }

    fn found(answer: Answer, mode: ParseMode) -> Self {
        ParseOutcome {
            answer: Some(answer),
            mode_used: mode,
            truncated_hint: false,
        }
    }

    pub fn with_truncated(mut self, truncated: bool) -> Self {
        self.truncated_hint = truncated;
        self
    }
}

/// Parser strictness selector for engine configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserChoice {
    #[default]
    Strict,
    Relaxed,
}

impl ParserChoice {
    pub fn parse(&self, text: &str, kind: AnswerKind) -> ParseOutcome {
        match self {
            ParserChoice::Strict => parse_strict(text, kind),
            ParserChoice::Relaxed => parse_relaxed(text, kind),
        }
    }
}

/// Canonicalizes a decimal string: optional sign, digits, at most one point.
/// Strips leading integer zeros and trailing fractional zeros; "-0" -> "0".
fn canonical_decimal(raw: &str) -> Option<String> {
    let trimmed = raw.trim().trim_matches('$').trim();
    if trimmed.is_empty() {
        return None;
    }
    let (negative, digits) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
    };
    let mut parts = digits.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    if int_part.is_empty() && frac_part.is_none_or(str::is_empty) {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if let Some(frac) = frac_part {
        if !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
    }
    let int_norm = int_part.trim_start_matches('0');
    let int_norm = if int_norm.is_empty() { "0" } else { int_norm };
    let frac_norm = frac_part.unwrap_or("").trim_end_matches('0');
    let mut out = String::new();
    let is_zero = int_norm == "0" && frac_norm.is_empty();
    if negative && !is_zero {
        out.push('-');
    }
    out.push_str(int_norm);
    if !frac_norm.is_empty() {
        out.push('.');
        out.push_str(frac_norm);
    }
    Some(out)
}

/// Byte spans of well-formed `\boxed{...}` occurrences, scanning with
/// balanced braces so LaTeX like `\boxed{\frac{1}{2}}` closes correctly.
/// Each span is (start of `\boxed{`, content range, index after closing `}`).
pub(crate) fn boxed_spans(text: &str) -> Vec<(usize, std::ops::Range<usize>, usize)> {
    const MARKER: &str = "\\boxed{";
    let mut spans = Vec::new();
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(rel) = text[from..].find(MARKER) {
        let start = from + rel;
        let content_start = start + MARKER.len();
        let mut depth = 1usize;
        let mut idx = content_start;
        let mut closed = None;
        while idx < bytes.len() {
            match bytes[idx] {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        closed = Some(idx);
                        break;
                    }
                }
                _ => {}
            }
            idx += 1;
        }
        match closed {
            Some(end) => {
                spans.push((start, content_start..end, end + 1));
                from = end + 1;
            }
            None => break, // truncated marker, nothing well-formed past here
        }
    }
    spans
}

/// Strict extraction: content of the last well-formed `\boxed{...}`,
/// normalized for the kind. Empty outcome if no well-formed occurrence
/// exists or the last one's content fails normalization.
pub fn parse_strict(text: &str, kind: AnswerKind) -> ParseOutcome {
    match boxed_spans(text).last() {
        Some((_, content, _)) => match Answer::from_raw(&text[content.clone()], kind) {
            Some(answer) => ParseOutcome::found(answer, ParseMode::Strict),
            None => ParseOutcome::empty(),
        },
        None => ParseOutcome::empty(),
    }
}

static CHOICE_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    vec![
        Regex::new(r"[Tt]he answer is ([A-E])").unwrap(),
        Regex::new(r"Answer:\s*([A-E])").unwrap(),
    ]
});

static NUMERIC_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    vec![
        Regex::new(r"(?m)=\s*(-?(?:\d+(?:\.\d+)?|\.\d+))\s*$").unwrap(),
        Regex::new(r"[Tt]he final answer is\s+(-?(?:\d+(?:\.\d+)?|\.\d+))").unwrap(),
        Regex::new(r"Answer:\s*(-?(?:\d+(?:\.\d+)?|\.\d+))").unwrap(),
    ]
});

/// Relaxed extraction: strict first, then the fallback patterns; with
/// multiple fallback matches the last occurrence in the text wins.
pub fn parse_relaxed(text: &str, kind: AnswerKind) -> ParseOutcome {
    let strict = parse_strict(text, kind);
    if strict.answer.is_some() {
        return strict;
    }
    let patterns: &[Regex] = match kind {
        AnswerKind::Choice => &CHOICE_PATTERNS,
        AnswerKind::Numeric => &NUMERIC_PATTERNS,
    };
    let mut best: Option<(usize, Answer)> = None;
    for re in patterns {
        for caps in re.captures_iter(text) {
            let group = caps.get(1).expect("pattern has a capture group");
            if let Some(answer) = Answer::from_raw(group.as_str(), kind) {
                // Strictly later matches win; earlier-listed patterns win ties.
                if best.as_ref().is_none_or(|(pos, _)| group.start() > *pos) {
                    best = Some((group.start(), answer));
                }
            }
        }
    }
    match best {
        Some((_, answer)) => ParseOutcome::found(answer, ParseMode::Relaxed),
        None => ParseOutcome::empty(),
    }
}

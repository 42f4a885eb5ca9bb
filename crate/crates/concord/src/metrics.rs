//! Evaluation estimators: sampling consistency, debate agreement, Pass@t and
//! MV@t, agreement histograms, gain decomposition, and Pearson correlation.
//!
//! Sampling consistency over the first t samples is the largest parseable
//! answer-class size divided by t; non-parseable samples count in the
//! denominator and never match, so the t=1 curve value equals the parseable
//! rate exactly. Pass@t uses the literal first-t definition (a
//! permutation-averaged variant is available separately); MV@t counts ties
//! as incorrect.
//!
//! Report output is CSV with fixed, documented columns (see the `write_*`
//! functions); rendering is out of scope.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answers::{answers_equal, Answer};
use crate::debate::DebateTranscript;
use crate::par;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("correctness labels required but missing")]
    MissingCorrectness,
    #[error("t={t} out of range for sample set of size {len}")]
    BadT { t: usize, len: usize },
    #[error("record counts differ: before {before}, after {after}")]
    MismatchedRecords { before: usize, after: usize },
    #[error("need at least two points with nonzero variance")]
    ZeroVariance,
    #[error("ground truth entries ({gt}) do not match sample sets ({sets})")]
    GroundTruthArity { gt: usize, sets: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// t samples for one prompt: parsed answers, optional correctness bits, and
/// truncation flags. All lists share one length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    pub prompt_id: String,
    pub answers: Vec<Option<Answer>>,
    pub correctness: Option<Vec<bool>>,
    pub truncated: Vec<bool>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

/// Largest parseable answer-class size among the first t samples, over t.
/// With an internal tie any tied class gives the same value; all
/// non-parseable yields 0.
pub fn sampling_consistency(set: &SampleSet, t: usize) -> f64 {
    assert!(t >= 1 && t <= set.len(), "t out of range");
    let mut classes: Vec<(&Answer, usize)> = Vec::new();
    for slot in set.answers.iter().take(t) {
        let Some(a) = slot else { continue };
        match classes.iter_mut().find(|(b, _)| answers_equal(b, a)) {
            Some((_, c)) => *c += 1,
            None => classes.push((a, 1)),
        }
    }
    let best = classes.iter().map(|(_, c)| *c).max().unwrap_or(0);
    best as f64 / t as f64
}

/// Mean sampling consistency over prompts for every t in 1..=t_max.
pub fn consistency_curve(sets: &[SampleSet], t_max: usize) -> Vec<(usize, f64)> {
    assert!(sets.iter().all(|s| s.len() >= t_max), "sets shorter than t_max");
    let per_prompt: Vec<Vec<f64>> = par::map(sets, |s| {
        (1..=t_max).map(|t| sampling_consistency(s, t)).collect()
    });
    (1..=t_max)
        .map(|t| {
            let mean = per_prompt.iter().map(|row| row[t - 1]).sum::<f64>() / sets.len().max(1) as f64;
            (t, mean)
        })
        .collect()
}

/// Fraction of the M final answers equal to their plurality; non-parseable
/// answers count in the denominator and never match.
pub fn debate_agreement(final_answers: &[Option<Answer>]) -> f64 {
    assert!(!final_answers.is_empty());
    let mut classes: Vec<(&Answer, usize)> = Vec::new();
    for slot in final_answers.iter() {
        let Some(a) = slot else { continue };
        match classes.iter_mut().find(|(b, _)| answers_equal(b, a)) {
            Some((_, c)) => *c += 1,
            None => classes.push((a, 1)),
        }
    }
    let best = classes.iter().map(|(_, c)| *c).max().unwrap_or(0);
    best as f64 / final_answers.len() as f64
}

/// Per-round agreement buckets. Every response of the round lands in
/// exactly one bucket, so the four fractions sum to 1: non-parseable
/// responses in `nonparseable_fraction`, each parseable response in its
/// transcript's plurality band (plurality size over M, non-parseables never
/// matching): [1/M, 1/2] no majority, (1/2, 1) the two-thirds band, 1
/// unanimous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementHistogram {
    pub round: usize,
    pub nonparseable_fraction: f64,
    pub no_majority_fraction: f64,
    pub two_thirds_fraction: f64,
    pub unanimous_fraction: f64,
}

pub fn agreement_histogram(transcripts: &[DebateTranscript], round: usize) -> AgreementHistogram {
    let mut nonparseable = 0usize;
    let mut no_majority = 0usize;
    let mut two_thirds = 0usize;
    let mut unanimous = 0usize;
    let mut total = 0usize;
    for t in transcripts {
        let answers: Vec<Option<Answer>> = t
            .round(round)
            .iter()
            .map(|tr| tr.parse.answer.clone())
            .collect();
        let m = answers.len();
        total += m;
        let agreement = debate_agreement(&answers);
        for slot in &answers {
            match slot {
                None => nonparseable += 1,
                Some(_) => {
                    if agreement >= 1.0 {
                        unanimous += 1;
                    } else if agreement > 0.5 {
                        two_thirds += 1;
                    } else {
                        no_majority += 1;
                    }
                }
            }
        }
    }
    let denom = total.max(1) as f64;
    AgreementHistogram {
        round,
        nonparseable_fraction: nonparseable as f64 / denom,
        no_majority_fraction: no_majority as f64 / denom,
        two_thirds_fraction: two_thirds as f64 / denom,
        unanimous_fraction: unanimous as f64 / denom,
    }
}

fn require_correctness(sets: &[SampleSet], t: usize) -> Result<(), MetricsError> {
    for s in sets {
        if s.correctness.is_none() {
            return Err(MetricsError::MissingCorrectness);
        }
        if t < 1 || t > s.len() {
            return Err(MetricsError::BadT { t, len: s.len() });
        }
    }
    Ok(())
}

/// Fraction of prompts with at least one correct sample among the first t
/// (the literal order-dependent definition).
pub fn pass_at_t(sets: &[SampleSet], t: usize) -> Result<f64, MetricsError> {
    require_correctness(sets, t)?;
    let hits = sets
        .iter()
        .filter(|s| s.correctness.as_ref().unwrap().iter().take(t).any(|c| *c))
        .count();
    Ok(hits as f64 / sets.len().max(1) as f64)
}

/// Permutation-averaged Pass@t for variance reduction; reported separately
/// from the literal first-t estimator.
pub fn pass_at_t_permuted(
    sets: &[SampleSet],
    t: usize,
    permutations: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    require_correctness(sets, t)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..permutations.max(1) {
        let mut hits = 0usize;
        for s in sets {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.shuffle(&mut rng);
            let bits = s.correctness.as_ref().unwrap();
            if idx.iter().take(t).any(|&i| bits[i]) {
                hits += 1;
            }
        }
        total += hits as f64 / sets.len().max(1) as f64;
    }
    Ok(total / permutations.max(1) as f64)
}

/// Fraction of prompts whose plurality over the first t parseable samples
/// equals the ground truth; ties and all-non-parseable count as incorrect.
pub fn mv_at_t(sets: &[SampleSet], t: usize, ground_truth: &[Answer]) -> Result<f64, MetricsError> {
    if ground_truth.len() != sets.len() {
        return Err(MetricsError::GroundTruthArity {
            gt: ground_truth.len(),
            sets: sets.len(),
        });
    }
    for s in sets {
        if t < 1 || t > s.len() {
            return Err(MetricsError::BadT { t, len: s.len() });
        }
    }
    let mut hits = 0usize;
    for (s, gt) in sets.iter().zip(ground_truth.iter()) {
        let mut classes: Vec<(&Answer, usize)> = Vec::new();
        for slot in s.answers.iter().take(t) {
            let Some(a) = slot else { continue };
            match classes.iter_mut().find(|(b, _)| answers_equal(b, a)) {
                Some((_, c)) => *c += 1,
                None => classes.push((a, 1)),
            }
        }
        let Some(best) = classes.iter().map(|(_, c)| *c).max() else {
            continue;
        };
        let winners: Vec<&Answer> = classes
            .iter()
            .filter(|(_, c)| *c == best)
            .map(|(a, _)| *a)
            .collect();
        if winners.len() == 1 && answers_equal(winners[0], gt) {
            hits += 1;
        }
    }
    Ok(hits as f64 / sets.len().max(1) as f64)
}

/// Per-response scoring record for the gain decomposition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub strict_correct: bool,
    pub relaxed_correct: bool,
    pub truncated: bool,
}

/// Accuracy-gain decomposition between a before and an after population.
///
/// completion_gain is the accuracy the before model would add if its
/// truncated responses were scored by the relaxed parser's verdict on their
/// partial content (truncated AND relaxed-correct AND not already
/// strict-correct). reasoning_gain is stored as total - completion, so
/// total_gain - completion_gain - reasoning_gain is exactly zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub before_acc: f64,
    pub after_acc: f64,
    pub total_gain: f64,
    pub completion_gain: f64,
    pub reasoning_gain: f64,
    pub format_loss_before: f64,
    pub format_loss_after: f64,
}

pub fn decompose_gains(
    before: &[ResponseRecord],
    after: &[ResponseRecord],
) -> Result<DecompositionRow, MetricsError> {
    if before.len() != after.len() || before.is_empty() {
        return Err(MetricsError::MismatchedRecords {
            before: before.len(),
            after: after.len(),
        });
    }
    let n = before.len() as f64;
    let strict = |rs: &[ResponseRecord]| rs.iter().filter(|r| r.strict_correct).count() as f64;
    let relaxed = |rs: &[ResponseRecord]| rs.iter().filter(|r| r.relaxed_correct).count() as f64;
    let before_acc = strict(before) / n;
    let after_acc = strict(after) / n;
    let total_gain = after_acc - before_acc;
    let completion = before
        .iter()
        .filter(|r| r.truncated && r.relaxed_correct && !r.strict_correct)
        .count() as f64
        / n;
    Ok(DecompositionRow {
        before_acc,
        after_acc,
        total_gain,
        completion_gain: completion,
        reasoning_gain: total_gain - completion,
        format_loss_before: (relaxed(before) - strict(before)) / n,
        format_loss_after: (relaxed(after) - strict(after)) / n,
    })
}

/// Standard two-sided Pearson product-moment coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricsError::ZeroVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

// --- CSV report output -------------------------------------------------------
//
// Fixed column layouts, one header line each:
//   consistency_curve.csv: t,mean_s_t,model
//   pass_mv.csv:           t,pass_at_t,mv_at_t,greedy_accuracy
//   agreement.csv:         round,bucket,fraction
//   decomposition.csv:     before_acc,after_acc,total_gain,completion_gain,
//                          reasoning_gain,format_loss_before,format_loss_after
//   correlation.csv:       x,y,r,n

pub fn write_consistency_curve<W: Write>(
    mut w: W,
    curves: &BTreeMap<String, Vec<(usize, f64)>>,
) -> Result<(), MetricsError> {
    writeln!(w, "t,mean_s_t,model")?;
    for (model, curve) in curves {
        for (t, v) in curve {
            writeln!(w, "{t},{v},{model}")?;
        }
    }
    Ok(())
}

pub fn write_pass_mv<W: Write>(
    mut w: W,
    rows: &[(usize, f64, f64)],
    greedy_accuracy: f64,
) -> Result<(), MetricsError> {
    writeln!(w, "t,pass_at_t,mv_at_t,greedy_accuracy")?;
    for (t, pass, mv) in rows {
        writeln!(w, "{t},{pass},{mv},{greedy_accuracy}")?;
    }
    Ok(())
}

pub fn write_agreement<W: Write>(
    mut w: W,
    histograms: &[AgreementHistogram],
) -> Result<(), MetricsError> {
    writeln!(w, "round,bucket,fraction")?;
    for h in histograms {
        writeln!(w, "{},nonparseable,{}", h.round, h.nonparseable_fraction)?;
        writeln!(w, "{},no_majority,{}", h.round, h.no_majority_fraction)?;
        writeln!(w, "{},two_thirds,{}", h.round, h.two_thirds_fraction)?;
        writeln!(w, "{},unanimous,{}", h.round, h.unanimous_fraction)?;
    }
    Ok(())
}

pub fn write_decomposition<W: Write>(mut w: W, row: &DecompositionRow) -> Result<(), MetricsError> {
    writeln!(
        w,
        "before_acc,after_acc,total_gain,completion_gain,reasoning_gain,format_loss_before,format_loss_after"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        row.before_acc,
        row.after_acc,
        row.total_gain,
        row.completion_gain,
        row.reasoning_gain,
        row.format_loss_before,
        row.format_loss_after
    )?;
    Ok(())
}

pub fn write_correlation<W: Write>(
    mut w: W,
    rows: &[(String, String, f64, usize)],
) -> Result<(), MetricsError> {
    writeln!(w, "x,y,r,n")?;
    for (x, y, r, n) in rows {
        writeln!(w, "{x},{y},{r},{n}")?;
    }
    Ok(())
}

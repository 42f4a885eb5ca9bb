//! Acceptance suite: ten criteria, one pass/fail line each.
//!
//!  1. Gradient fidelity against central finite differences (< 1e-4 rel).
//!  2. Identity baselines at theta = reference (ln 2 within 1e-9).
//!  3. Advantage law: zero-sum within 1e-12; unanimous groups all-zero.
//!  4. Estimator correctness vs brute-force oracles; MV@t <= Pass@t and
//!     Pass@t monotone on every instance.
//!  5. Consistency estimator converges to the modal probability.
//!  6. End-to-end self-consistency gain from debate -> partition -> DPO.
//!  7. Ablation ordering: debate-context training vs single-round MV.
//!  8. Parser fixture corpus (>= 25 strings, 100% expected outcomes).
//!  9. Decomposition identity plus the published-marginal reproduction.
//! 10. Pipeline determinism: identical manifests for identical seeds.
//!
//! Oracles here are written independently of the library code paths they
//! check: multinomial draws for the consistency estimator, count-and-argmax
//! for majority voting, prefix scans for Pass@t/MV@t, and plain central
//! differences for every gradient.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use concord::agents::simulated::AnswerSource;
use concord::agents::{Agent, AnswerDist, SimulatedAgent, SimulatedAgentSpec};
use concord::answers::{
    parse_relaxed, parse_strict, Answer, AnswerKind, ParseMode,
};
use concord::consensus::{majority_vote, partition, PartitionOptions, TiePolicy};
use concord::debate::initial_prompt;
use concord::metrics::{
    consistency_curve, decompose_gains, mv_at_t, pass_at_t, ResponseRecord, SampleSet,
};
use concord::objectives::{
    dpo_loss, grpo_surrogate, group_advantages, kto_loss, sft_loss, GrpoSample, Method,
    SampledGroup, TokenizedExample, TokenizedLabeled, TokenizedPair,
};
use concord::pipeline::Run;
use concord::policy::{ReferenceSnapshot, TokenId, ToyPolicy, Vocab};

const LN2: f64 = std::f64::consts::LN_2;

fn verdict(n: usize, name: &str, ok: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {n:>2} {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn tiny_policy(seed: u64) -> ToyPolicy {
    // V = 8: five specials plus three content tokens.
    let vocab = Vocab::new(&["a", "b", "c"]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ToyPolicy::uniform(vocab, 2).unwrap();
    for z in p.params_mut() {
        *z = rng.gen_range(-1.5..1.5);
    }
    p
}

fn rand_tokens(rng: &mut ChaCha8Rng, v: usize, max_len: usize) -> Vec<TokenId> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| rng.gen_range(0..v)).collect()
}

/// Central finite differences over every parameter; the relative error
/// floor 1e-5 keeps roundoff on near-zero coordinates from dominating
/// (unvisited parameters are exactly zero on both sides).
fn max_rel_fd_error<F: Fn(&ToyPolicy) -> f64>(policy: &ToyPolicy, analytic: &[f64], f: F) -> f64 {
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for (i, ga) in analytic.iter().enumerate() {
        let mut plus = policy.clone();
        plus.params_mut()[i] += eps;
        let mut minus = policy.clone();
        minus.params_mut()[i] -= eps;
        let fd = (f(&plus) - f(&minus)) / (2.0 * eps);
        let denom = ga.abs().max(fd.abs()).max(1e-5);
        worst = worst.max((ga - fd).abs() / denom);
    }
    worst
}

#[test]
fn criterion_01_gradient_fidelity() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for instance in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let policy = tiny_policy(instance);
        let reference = ReferenceSnapshot::of(&tiny_policy(instance + 500));
        let v = policy.vocab_size();

        let batch: Vec<TokenizedExample> = (0..3)
            .map(|_| TokenizedExample {
                context: rand_tokens(&mut rng, v, 3),
                target: rand_tokens(&mut rng, v, 5),
            })
            .collect();
        let eval = sft_loss(&policy, &batch).unwrap();
        worst = worst.max(max_rel_fd_error(&policy, &eval.grad, |q| {
            sft_loss(q, &batch).unwrap().loss
        }));

        let pairs: Vec<TokenizedPair> = (0..3)
            .map(|_| TokenizedPair {
                context: rand_tokens(&mut rng, v, 3),
                chosen: rand_tokens(&mut rng, v, 5),
                rejected: rand_tokens(&mut rng, v, 5),
            })
            .collect();
        let beta = 0.1 + 0.2 * (instance % 3) as f64;
        let eval = dpo_loss(&policy, &reference, &pairs, beta).unwrap();
        worst = worst.max(max_rel_fd_error(&policy, &eval.grad, |q| {
            dpo_loss(q, &reference, &pairs, beta).unwrap().loss
        }));

        let examples: Vec<TokenizedLabeled> = (0..4)
            .map(|i| TokenizedLabeled {
                context: rand_tokens(&mut rng, v, 3),
                text: rand_tokens(&mut rng, v, 5),
                positive: i % 2 == 0,
            })
            .collect();
        let eval = kto_loss(&policy, &reference, &examples, beta, 0.8, 1.3).unwrap();
        worst = worst.max(max_rel_fd_error(&policy, &eval.grad, |q| {
            kto_loss(q, &reference, &examples, beta, 0.8, 1.3).unwrap().loss
        }));

        // Fixed-sample GRPO surrogate (mixed rewards, KL term on).
        let groups: Vec<SampledGroup> = (0..2)
            .map(|g| SampledGroup {
                prompt_id: format!("p{g}"),
                context: rand_tokens(&mut rng, v, 3),
                samples: (0..3)
                    .map(|s| GrpoSample {
                        tokens: rand_tokens(&mut rng, v, 5),
                        reward: f64::from((s % 2) as u8),
                        truncated: false,
                    })
                    .collect(),
            })
            .collect();
        let lambda = 0.3;
        let eval = grpo_surrogate(&policy, &reference, &groups, lambda).unwrap();
        worst = worst.max(max_rel_fd_error(&policy, &eval.grad, |q| {
            grpo_surrogate(q, &reference, &groups, lambda).unwrap().loss
        }));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let ok = worst < 1e-4 && elapsed < 30.0;
    assert!(verdict(
        1,
        "gradient fidelity",
        ok,
        &format!("max rel err {worst:.2e} over 50 instances x 4 losses, {elapsed:.1}s")
    ));
}

#[test]
fn criterion_02_identity_baselines() {
    let mut worst_dpo = 0.0f64;
    let mut worst_kto = 0.0f64;
    for instance in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + instance);
        let policy = tiny_policy(instance);
        let reference = ReferenceSnapshot::of(&policy);
        let v = policy.vocab_size();
        let pairs: Vec<TokenizedPair> = (0..5)
            .map(|_| TokenizedPair {
                context: rand_tokens(&mut rng, v, 3),
                chosen: rand_tokens(&mut rng, v, 5),
                rejected: rand_tokens(&mut rng, v, 5),
            })
            .collect();
        let eval = dpo_loss(&policy, &reference, &pairs, 0.17).unwrap();
        worst_dpo = worst_dpo.max((eval.loss - LN2).abs());

        let examples: Vec<TokenizedLabeled> = (0..6)
            .map(|i| TokenizedLabeled {
                context: rand_tokens(&mut rng, v, 3),
                text: rand_tokens(&mut rng, v, 5),
                positive: i % 2 == 0,
            })
            .collect();
        // lambda = 1: ln 2 per labeled example, i.e. 2 ln 2 for the two
        // class means together.
        let eval = kto_loss(&policy, &reference, &examples, 0.17, 1.0, 1.0).unwrap();
        worst_kto = worst_kto.max((eval.loss - 2.0 * LN2).abs());
    }
    let ok = worst_dpo < 1e-9 && worst_kto < 1e-9;
    assert!(verdict(
        2,
        "identity baselines",
        ok,
        &format!("DPO |loss-ln2| <= {worst_dpo:.2e}, KTO |loss-2ln2| <= {worst_kto:.2e}")
    ));
}

#[test]
fn criterion_03_advantage_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let mut worst_sum = 0.0f64;
    let mut unanimous_ok = true;
    for _ in 0..10_000 {
        let g = rng.gen_range(2..=16);
        let rewards: Vec<f64> = (0..g).map(|_| f64::from(rng.gen_range(0..2))).collect();
        let adv = group_advantages(&rewards);
        worst_sum = worst_sum.max(adv.iter().sum::<f64>().abs());
        if rewards.iter().all(|r| *r == rewards[0]) {
            unanimous_ok &= adv.iter().all(|a| *a == 0.0);
        }
    }
    // Explicit unanimous groups.
    for g in 2..=12 {
        for r in [0.0, 1.0] {
            let adv = group_advantages(&vec![r; g]);
            unanimous_ok &= adv.iter().all(|a| *a == 0.0);
        }
    }
    let ok = worst_sum < 1e-12 && unanimous_ok;
    assert!(verdict(
        3,
        "advantage law",
        ok,
        &format!("max |sum| {worst_sum:.2e} over 10^4 vectors; unanimous all-zero: {unanimous_ok}")
    ));
}

#[test]
fn criterion_04_estimator_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let answers_pool = ["0", "1", "2", "3"];
    let mut checked = 0usize;
    let mut ok = true;

    for _ in 0..1000 {
        // -- majority vote vs count-and-argmax oracle --------------------
        let n = rng.gen_range(0..=7);
        let votes: Vec<Option<Answer>> = (0..n)
            .map(|_| {
                (!rng.gen_bool(0.2))
                    .then(|| Answer::numeric(answers_pool[rng.gen_range(0..4)]).unwrap())
            })
            .collect();
        let got = majority_vote(&votes, TiePolicy::Drop);
        let mut tally: BTreeMap<String, usize> = BTreeMap::new();
        for a in votes.iter().flatten() {
            *tally.entry(a.as_str()).or_insert(0) += 1;
        }
        let best = tally.values().copied().max().unwrap_or(0);
        let winners: Vec<&String> = tally
            .iter()
            .filter(|(_, c)| **c == best)
            .map(|(k, _)| k)
            .collect();
        if best == 0 || winners.len() > 1 {
            ok &= got.answer.is_none();
        } else {
            ok &= got.answer.as_ref().map(|a| a.as_str()) == Some(winners[0].clone())
                && got.support_count == best;
        }

        // -- partition sizes vs recount oracle ----------------------------
        let m = rng.gen_range(1..=5);
        let final_answers: Vec<Option<&str>> = (0..m)
            .map(|_| (!rng.gen_bool(0.25)).then(|| answers_pool[rng.gen_range(0..4)]))
            .collect();
        let transcript = synthetic_transcript(&final_answers);
        let part = partition(&transcript, &PartitionOptions::default()).unwrap();
        ok &= part.positives.len() + part.negatives.len() + part.excluded.len() == m;
        let consensus = majority_vote(&transcript.final_answers(), TiePolicy::Drop);
        match &consensus.answer {
            Some(a) => {
                let pos = final_answers
                    .iter()
                    .flatten()
                    .filter(|s| Answer::numeric(s).unwrap() == *a)
                    .count();
                let neg = final_answers.iter().flatten().count() - pos;
                ok &= part.positives.len() == pos && part.negatives.len() == neg;
            }
            None => ok &= part.positives.is_empty() && part.negatives.is_empty(),
        }

        // -- Pass@t / MV@t vs prefix-scan oracles -------------------------
        let prompts = rng.gen_range(1..=4);
        let len = rng.gen_range(1..=6);
        let gt: Vec<Answer> = (0..prompts).map(|_| Answer::numeric("0").unwrap()).collect();
        let sets: Vec<SampleSet> = (0..prompts)
            .map(|i| {
                let answers: Vec<Option<Answer>> = (0..len)
                    .map(|_| {
                        (!rng.gen_bool(0.2))
                            .then(|| Answer::numeric(answers_pool[rng.gen_range(0..4)]).unwrap())
                    })
                    .collect();
                let bits: Vec<bool> = answers
                    .iter()
                    .map(|a| a.as_ref() == Some(&gt[0]))
                    .collect();
                SampleSet {
                    prompt_id: format!("p{i}"),
                    correctness: Some(bits),
                    truncated: vec![false; answers.len()],
                    answers,
                }
            })
            .collect();
        let mut prev_pass = 0.0;
        for t in 1..=len {
            let pass = pass_at_t(&sets, t).unwrap();
            let mv = mv_at_t(&sets, t, &gt).unwrap();
            let pass_oracle = sets
                .iter()
                .filter(|s| s.answers.iter().take(t).any(|a| a.as_ref() == Some(&gt[0])))
                .count() as f64
                / prompts as f64;
            let mv_oracle = sets
                .iter()
                .filter(|s| {
                    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
                    for a in s.answers.iter().take(t).flatten() {
                        *tally.entry(a.as_str()).or_insert(0) += 1;
                    }
                    let Some(best) = tally.values().copied().max() else {
                        return false;
                    };
                    let winners: Vec<_> = tally.iter().filter(|(_, c)| **c == best).collect();
                    winners.len() == 1 && winners[0].0 == "0"
                })
                .count() as f64
                / prompts as f64;
            ok &= pass == pass_oracle && mv == mv_oracle;
            ok &= mv <= pass + 1e-12;
            ok &= pass + 1e-12 >= prev_pass;
            prev_pass = pass;
        }
        checked += 1;
    }
    assert!(verdict(
        4,
        "estimator correctness",
        ok && checked == 1000,
        &format!("{checked} random instances vs brute-force oracles")
    ));
}

fn synthetic_transcript(final_answers: &[Option<&str>]) -> concord::debate::DebateTranscript {
    use concord::answers::ParseOutcome;
    use concord::debate::{DebateTranscript, Trajectory};
    let trajectories: Vec<Trajectory> = final_answers
        .iter()
        .enumerate()
        .map(|(i, a)| Trajectory {
            agent_id: i,
            round: 1,
            context: "c".into(),
            response: a.map(|s| format!("\\boxed{{{s}}}")).unwrap_or_default(),
            parse: match a {
                Some(s) => ParseOutcome {
                    answer: Answer::numeric(s),
                    mode_used: ParseMode::Strict,
                    truncated_hint: false,
                },
                None => ParseOutcome::empty(),
            },
        })
        .collect();
    DebateTranscript {
        prompt_id: "p".into(),
        question: "q".into(),
        kind: AnswerKind::Numeric,
        num_rounds: 1,
        trajectories,
    }
}

#[test]
fn criterion_05_consistency_estimator_convergence() {
    let started = Instant::now();
    let n_prompts = 10_000usize;
    let t_max = 20usize;

    // Full path: simulated two-answer agent (modal probability 0.7), text
    // generation, parsing, consistency curve.
    let spec = SimulatedAgentSpec {
        answer_table: BTreeMap::new(),
        default: Some(AnswerDist {
            answers: vec![
                (Answer::numeric("27").unwrap(), 0.7),
                (Answer::numeric("48").unwrap(), 0.3),
            ],
            nonparseable_prob: 0.0,
        }),
        grounding: 0.0,
        verbosity: (2, 5),
        seed: 505,
    };
    let question = ("p0".to_string(), "what is the quantity?".to_string());
    let context = initial_prompt(&question.1, AnswerKind::Numeric).unwrap();
    let params = concord::debate::GenParams::default();
    let questions = vec![question];
    let indices: Vec<usize> = (0..n_prompts).collect();
    let sets: Vec<SampleSet> = concord::par::map(&indices, |&i| {
        let mut agent = SimulatedAgent::new(
            &spec,
            &questions,
            AnswerKind::Numeric,
            AnswerSource::Table,
            i as u64 + 1,
        )
        .unwrap();
        let answers: Vec<Option<Answer>> = (0..t_max)
            .map(|_| {
                let gen = agent.generate(&context, &params);
                parse_strict(&gen.text, AnswerKind::Numeric).answer
            })
            .collect();
        SampleSet {
            prompt_id: format!("p{i}"),
            correctness: None,
            truncated: vec![false; t_max],
            answers,
        }
    });
    let curve = consistency_curve(&sets, t_max);

    // Independent Monte Carlo oracle: direct Bernoulli draws, max-count
    // estimator, separate RNG stream.
    let oracle_indices: Vec<usize> = (0..n_prompts).collect();
    let oracle_vals: Vec<f64> = concord::par::map(&oracle_indices, |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(900_000 + i as u64);
        let mut heads = 0usize;
        for _ in 0..t_max {
            if rng.gen_bool(0.7) {
                heads += 1;
            }
        }
        heads.max(t_max - heads) as f64 / t_max as f64
    });
    let oracle = oracle_vals.iter().sum::<f64>() / n_prompts as f64;

    let s20 = curve[t_max - 1].1;
    let close = (s20 - oracle).abs() <= 0.01;
    // Non-increasing toward the modal probability for t >= 5, within noise.
    let mut monotone = true;
    for w in curve[4..].windows(2) {
        monotone &= w[1].1 <= w[0].1 + 0.01;
    }
    let toward_modal = (s20 - 0.7).abs() <= 0.02;
    let elapsed = started.elapsed().as_secs_f64();
    let ok = close && monotone && toward_modal && elapsed < 60.0;
    assert!(verdict(
        5,
        "consistency estimator convergence",
        ok,
        &format!(
            "s_20 {s20:.4} vs oracle {oracle:.4} (|d|={:.4}); monotone t>=5: {monotone}; {elapsed:.1}s",
            (s20 - oracle).abs()
        )
    ));
}

#[test]
fn criterion_06_end_to_end_consistency_gain() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::standard_config(dir.path(), "out", Method::Dpo);
    let mut run = Run::open(cfg).unwrap();
    run.cmd_iterate().unwrap();
    let m = run.manifest();
    let base = &m.iterations[0];
    let post = &m.iterations[1];
    let s_base = base.mean_consistency.unwrap();
    let s_post = post.mean_consistency.unwrap();
    let u_base = base.unanimous_fraction.unwrap();
    let u_post = post.unanimous_fraction.unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let ok = s_post - s_base >= 0.10 && u_post > u_base && elapsed < 300.0;
    assert!(verdict(
        6,
        "end-to-end self-consistency gain",
        ok,
        &format!(
            "held-out s_20 {s_base:.3} -> {s_post:.3} (gain {:+.3}); unanimous {u_base:.3} -> {u_post:.3}; {elapsed:.1}s",
            s_post - s_base
        )
    ));
}

#[test]
fn criterion_07_ablation_ordering() {
    let eval = |rounds: usize, mode: concord::consensus::ContextMode| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = common::standard_config(dir.path(), "out", Method::Dpo);
        cfg.debate.num_rounds = rounds;
        cfg.ablations.context = mode;
        let mut run = Run::open(cfg).unwrap();
        run.cmd_iterate().unwrap();
        run.manifest().iterations[1].mean_consistency.unwrap()
    };
    let dmv_context = eval(2, concord::consensus::ContextMode::Debate);
    let single_round_mv = eval(1, concord::consensus::ContextMode::None);
    let delta = dmv_context - single_round_mv;
    // Report both conditions regardless of the outcome.
    println!(
        "ablation report: DMV(C) s_20 = {dmv_context:.4}, single-round MV(NC) s_20 = {single_round_mv:.4}, delta = {delta:+.4}"
    );
    if delta < -0.01 {
        println!("ablation warning: DMV(C) below single-round MV beyond the -0.01 tolerance");
    }
    // Hard failure only when DMV underperforms by more than 0.05.
    let ok = delta >= -0.05;
    assert!(verdict(
        7,
        "ablation ordering",
        ok,
        &format!("DMV(C) - MV(NC) = {delta:+.4} (soft tolerance -0.01, hard floor -0.05)")
    ));
}

#[test]
fn criterion_08_parser_corpus() {
    use AnswerKind::{Choice, Numeric};
    let num = |s: &str| Some(Answer::numeric(s).unwrap());
    let letter = |c: char| Some(Answer::Choice(c));

    // (text, kind, strict expectation, relaxed expectation)
    let fixtures: Vec<(&str, AnswerKind, Option<Answer>, Option<Answer>)> = vec![
        // boxed, strict format
        ("Distance is 18 x 1.5 = 27 miles. \\boxed{27}", Numeric, num("27"), num("27")),
        ("$\\boxed{27}$", Numeric, num("27"), num("27")),
        ("\\boxed{A}", Choice, letter('A'), letter('A')),
        ("reasoning \\boxed{E} end", Choice, letter('E'), letter('E')),
        ("\\boxed{-3}", Numeric, num("-3"), num("-3")),
        ("\\boxed{0.5}", Numeric, num("0.5"), num("0.5")),
        ("\\boxed{27.0}", Numeric, num("27"), num("27")),
        ("\\boxed{-0}", Numeric, num("0"), num("0")),
        // multiple boxed: last occurrence
        ("\\boxed{3} then \\boxed{5}", Numeric, num("5"), num("5")),
        ("\\boxed{A} revised to \\boxed{B}", Choice, letter('B'), letter('B')),
        // nested braces
        ("\\boxed{\\frac{1}{2}}", Numeric, None, None),
        ("\\boxed{\\frac{1}{2}} so \\boxed{4}", Numeric, num("4"), num("4")),
        // truncated marker
        ("we ran out of budget \\boxed{27", Numeric, None, None),
        ("", Numeric, None, None),
        // natural-language fallbacks (relaxed only)
        ("The answer is A", Choice, None, letter('A')),
        ("the answer is B", Choice, None, letter('B')),
        ("I think the answer is E.", Choice, None, letter('E')),
        ("Answer: C", Choice, None, letter('C')),
        ("Answer: 42", Numeric, None, num("42")),
        ("The final answer is 7", Numeric, None, num("7")),
        ("the final answer is 2.5 exactly", Numeric, None, num("2.5")),
        ("total cost = 42\nnext line", Numeric, None, num("42")),
        ("a = 1\nb = 2\nfinal = 9\n", Numeric, None, num("9")),
        // last-occurrence across relaxed patterns
        ("The final answer is 3\nbut really total = 9\n", Numeric, None, num("9")),
        ("Answer: 5 ... wait, the final answer is 8", Numeric, None, num("8")),
        // non-matches
        ("The answer is F", Choice, None, None),
        ("= 42 midline does not count", Numeric, None, None),
        ("no terminator at all", Numeric, None, None),
        ("Answer: maybe", Choice, None, None),
        // strict wins over fallback when both present
        ("The answer is B ... \\boxed{C}", Choice, letter('C'), letter('C')),
    ];
    assert!(fixtures.len() >= 25, "need at least 25 fixtures");

    let mut failures = Vec::new();
    for (text, kind, strict_want, relaxed_want) in &fixtures {
        let strict = parse_strict(text, *kind);
        let relaxed = parse_relaxed(text, *kind);
        if strict.answer != *strict_want {
            failures.push(format!("strict {text:?}: got {:?}", strict.answer));
        }
        if relaxed.answer != *relaxed_want {
            failures.push(format!("relaxed {text:?}: got {:?}", relaxed.answer));
        }
        // Mode bookkeeping: None iff absent; Strict reported when strict hit.
        if strict.answer.is_some() && strict.mode_used != ParseMode::Strict {
            failures.push(format!("strict mode wrong for {text:?}"));
        }
        if relaxed.answer.is_some() && strict.answer.is_some() && relaxed.mode_used != ParseMode::Strict
        {
            failures.push(format!("relaxed should report Strict for {text:?}"));
        }
    }
    let ok = failures.is_empty();
    for f in &failures {
        println!("  fixture failure: {f}");
    }
    assert!(verdict(
        8,
        "parser corpus",
        ok,
        &format!("{} fixtures, 100% required", fixtures.len())
    ));
}

#[test]
fn criterion_09_decomposition_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9000);
    let mut identity_ok = true;
    for _ in 0..1000 {
        let n = rng.gen_range(1..60);
        let make = |rng: &mut ChaCha8Rng| -> Vec<ResponseRecord> {
            (0..n)
                .map(|_| {
                    let strict = rng.gen_bool(0.4);
                    ResponseRecord {
                        strict_correct: strict,
                        relaxed_correct: strict || rng.gen_bool(0.3),
                        truncated: rng.gen_bool(0.35),
                    }
                })
                .collect()
        };
        let before = make(&mut rng);
        let after = make(&mut rng);
        let row = decompose_gains(&before, &after).unwrap();
        identity_ok &= (row.total_gain - row.completion_gain - row.reasoning_gain) == 0.0;
        identity_ok &= row.total_gain == row.after_acc - row.before_acc;
    }

    // Population matched to the published marginals (500 responses):
    // before accuracy 3.8% (19), truncated-and-relaxed-recoverable 18.6%
    // (93), after accuracy 63.4% (317). Expected completion gain: 18.6 pts.
    let n = 500usize;
    let mut before = Vec::with_capacity(n);
    for i in 0..n {
        let strict = i < 19;
        let recoverable = (19..19 + 93).contains(&i);
        before.push(ResponseRecord {
            strict_correct: strict,
            relaxed_correct: strict || recoverable,
            truncated: recoverable || (i >= 400), // extra truncated-and-wrong tail
        });
    }
    let after: Vec<ResponseRecord> = (0..n)
        .map(|i| ResponseRecord {
            strict_correct: i < 317,
            relaxed_correct: i < 320,
            truncated: i >= 495,
        })
        .collect();
    let row = decompose_gains(&before, &after).unwrap();
    let completion_pts = row.completion_gain * 100.0;
    let total_pts = row.total_gain * 100.0;
    let matched = (completion_pts - 18.6).abs() <= 0.1;
    let ok = identity_ok && matched;
    assert!(verdict(
        9,
        "decomposition identity",
        ok,
        &format!(
            "identity exact on 1000 sets; matched population: total {total_pts:.1} pts, completion {completion_pts:.1} pts (want 18.6 +/- 0.1)"
        )
    ));
}

#[test]
fn criterion_10_pipeline_determinism() {
    let run_once = |name: &str| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = common::standard_config(dir.path(), name, Method::Dpo);
        cfg.debate.iterations = 2;
        let mut run = Run::open(cfg).unwrap();
        run.cmd_iterate().unwrap();
        run.manifest().checksums()
    };
    let first = run_once("out_a");
    let second = run_once("out_b");
    let ok = first == second && !first.is_empty();
    assert!(verdict(
        10,
        "pipeline determinism",
        ok,
        &format!(
            "two L=2 runs, {} artifacts, checksum maps {}",
            first.len(),
            if ok { "identical" } else { "DIFFER" }
        )
    ));
}

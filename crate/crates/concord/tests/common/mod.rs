//! Shared fixtures for integration and acceptance tests: synthetic task
//! files, simulated answer tables, and run configurations.

use std::path::{Path, PathBuf};

use concord::answers::AnswerKind;
use concord::objectives::{Method, ObjectiveHyperparams};
use concord::pipeline::{
    Ablations, AgentsConfig, BackendKind, DebateSection, EvalSection, ObjectiveSection,
    PolicySection, RunConfig, TaskConfig,
};

/// Writes a numeric task with `n` prompts, all sharing the ground truth.
pub fn write_task(dir: &Path, n: usize, gt: &str) -> PathBuf {
    let prompts: Vec<serde_json::Value> = (0..n)
        .map(|i| {
            serde_json::json!({
                "id": format!("p{i:04}"),
                "question": format!("Problem {i}: what is the final quantity?"),
                "answer": gt,
            })
        })
        .collect();
    let path = dir.join("task.json");
    std::fs::write(
        &path,
        serde_json::to_vec_pretty(&serde_json::json!({
            "kind": "numeric",
            "prompts": prompts,
        }))
        .unwrap(),
    )
    .unwrap();
    path
}

/// Writes an answers table with one shared default distribution.
pub fn write_table(dir: &Path, answers: &[(&str, f64)], nonparseable: f64) -> PathBuf {
    let path = dir.join("answers.json");
    let entries: Vec<serde_json::Value> = answers
        .iter()
        .map(|(a, w)| serde_json::json!([a, w]))
        .collect();
    std::fs::write(
        &path,
        serde_json::to_vec_pretty(&serde_json::json!({
            "default": {"answers": entries, "nonparseable_prob": nonparseable},
            "overrides": {},
        }))
        .unwrap(),
    )
    .unwrap();
    path
}

/// Standard simulated-task configuration used across the suites: modal
/// answer probability about 0.5, mild grounding, M=3, R=2.
pub fn standard_config(dir: &Path, out_name: &str, method: Method) -> RunConfig {
    let task = write_task(dir, 320, "27");
    let table = write_table(dir, &[("27", 0.50), ("48", 0.28), ("300", 0.17)], 0.05);
    RunConfig {
        seed: 42,
        output_dir: dir.join(out_name),
        method,
        task: TaskConfig {
            questions_file: task,
            answer_kind: AnswerKind::Numeric,
        },
        debate: DebateSection {
            num_agents: 3,
            num_rounds: 2,
            batch_size: 16,
            iterations: 1,
            parser: Default::default(),
            max_retries: 3,
            gen: Default::default(),
        },
        agents: AgentsConfig {
            backend: BackendKind::Simulated,
            table_file: Some(table),
            grounding: 0.35,
            verbosity_min: 2,
            verbosity_max: 6,
            base_url: None,
            model_name: None,
            api_key_env: "CONCORD_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
        },
        policy: PolicySection::default(),
        objective: ObjectiveSection {
            hyperparams: ObjectiveHyperparams {
                beta: 0.1,
                lambda_kl: 0.05,
                learning_rate: 25.0,
                epochs: 60,
                group_size: 4,
                ..Default::default()
            },
            reference: Default::default(),
        },
        ablations: Ablations::default(),
        eval: EvalSection::default(),
    }
}

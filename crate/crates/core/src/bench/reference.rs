//! Scripted backend specs that answer every benchmark case with its
//! reference invocations. Used for offline sweeps and metric calibration.

use serde_json::json;

use super::BenchmarkCase;
use crate::llm::{Rule, ScriptedSpec};

/// Summarizer rule: cite the last execution record and repeat its summary.
pub const SUMMARIZER_PATTERN: &str = r"- (t\d+) \([a-z_]+, (?:done|failed)\): ([^\n]*)$";

pub fn subtask_description(case: &BenchmarkCase, step: usize) -> String {
    let call = &case.reference[step];
    format!(
        "Step {} of {}: call {} on the {}.",
        step + 1,
        case.id,
        call.command,
        call.dsm.replace('_', " ")
    )
}

/// The plan a perfect planner would return for `case`.
pub fn reference_plan(case: &BenchmarkCase) -> String {
    let subtasks: Vec<_> = case
        .reference
        .iter()
        .enumerate()
        .map(|(k, call)| {
            json!({
                "id": format!("t{}", k + 1),
                "dsm": call.dsm,
                "description": subtask_description(case, k),
                "depends_on": call.refs(),
            })
        })
        .collect();
    json!({
        "reasoning": format!("Reference decomposition for {}.", case.id),
        "category": case.category.as_str(),
        "subtasks": subtasks,
    })
    .to_string()
}

pub struct ReferenceSpecs {
    pub planner: ScriptedSpec,
    pub translator: ScriptedSpec,
    pub summarizer: ScriptedSpec,
}

/// Planner rules match the request line exactly; translator rules match the
/// generated subtask description.
pub fn reference_specs(cases: &[BenchmarkCase]) -> ReferenceSpecs {
    let mut planner = Vec::new();
    let mut translator = Vec::new();
    for case in cases {
        planner.push(Rule::pattern(
            format!(r"(?m)^{}$", regex::escape(case.request.trim())),
            vec![reference_plan(case)],
        ));
        for (k, call) in case.reference.iter().enumerate() {
            let command = json!({ "name": call.command, "args": call.args }).to_string();
            translator.push(Rule::contains(
                format!("Task: {}\n", subtask_description(case, k)),
                vec![command],
            ));
        }
    }
    let summary = json!({ "answer": "${1}: ${2}", "cited_records": ["${1}"] }).to_string();
    ReferenceSpecs {
        planner: ScriptedSpec { rules: planner },
        translator: ScriptedSpec { rules: translator },
        summarizer: ScriptedSpec {
            rules: vec![Rule::pattern(SUMMARIZER_PATTERN, vec![summary])],
        },
    }
}

//! Three verification stages, run in order and stopping at the first
//! failure: a regex screen for prose, the adjustment oracle, and a
//! language-model judge that fails closed.

use std::sync::OnceLock;

use adn_grid::{apply_adjustment, parse_case};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::InstructionAnswerPair;
use crate::dsm::parse_instruction;
use crate::llm::ChatBackend;

pub const LLM_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Regex,
    Rule,
    Llm,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Regex => "regex",
            Stage::Rule => "rule",
            Stage::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub stage: Stage,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Verdict {
    fn pass(stage: Stage) -> Self {
        Self {
            stage,
            passed: true,
            reason: None,
        }
    }

    fn fail(stage: Stage, reason: impl Into<String>) -> Self {
        Self {
            stage,
            passed: false,
            reason: Some(reason.into()),
        }
    }
}

fn prose() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| {
        Regex::new(
            r"(?i)\b(sure|certainly|here is|here's|below is|as requested|i have|i've|i hope|let me|note that|hope this helps|adjusted model:)",
        )
        .unwrap()
    })
}

/// Rejects answers that are empty, fenced, or carry conversational text.
pub fn verify_regex(pair: &InstructionAnswerPair) -> Verdict {
    let a = pair.answer_case.trim();
    if a.is_empty() {
        return Verdict::fail(Stage::Regex, "empty answer");
    }
    if a.contains("```") {
        return Verdict::fail(Stage::Regex, "code fence");
    }
    if !a.starts_with("function mpc") {
        return Verdict::fail(Stage::Regex, "preamble before the case definition");
    }
    if let Some(m) = prose().find(a) {
        return Verdict::fail(Stage::Regex, format!("prose marker `{}`", m.as_str()));
    }
    Verdict::pass(Stage::Regex)
}

/// Re-derives the answer with the oracle and compares field by field.
pub fn verify_rule(pair: &InstructionAnswerPair) -> Verdict {
    let Ok(req) = parse_instruction(&pair.instruction) else {
        return Verdict::fail(Stage::Rule, "instruction_out_of_grammar");
    };
    let input = match parse_case(&pair.input_case) {
        Ok(c) => c,
        Err(e) => return Verdict::fail(Stage::Rule, format!("input_unparseable: {e}")),
    };
    let answer = match parse_case(&pair.answer_case) {
        Ok(c) => c,
        Err(e) => return Verdict::fail(Stage::Rule, format!("answer_unparseable: {e}")),
    };
    let truth = match apply_adjustment(&input, &req) {
        Ok(c) => c,
        Err(e) => return Verdict::fail(Stage::Rule, format!("oracle_rejects: {e}")),
    };
    match truth.diff(&answer).first() {
        None => Verdict::pass(Stage::Rule),
        Some(d) => Verdict::fail(Stage::Rule, format!("mismatch {d}")),
    }
}

const JUDGE: &str = "You check instruction-answer pairs for a network model editing task. Given an instruction and the field changes between the input and the answer model, reply yes if the changes carry out exactly the instruction and nothing else, otherwise no. Reply with yes or no only.";

#[derive(Deserialize)]
struct JsonVerdict {
    verdict: String,
}

fn read_judgment(raw: &str) -> Option<bool> {
    let t = raw.trim();
    let word = match serde_json::from_str::<JsonVerdict>(t) {
        Ok(v) => v.verdict,
        Err(_) => t.trim_end_matches('.').to_string(),
    };
    match word.to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Asks `backend` for a yes/no judgment; unusable replies are retried and
/// reject the pair after the last attempt.
pub fn verify_llm(pair: &InstructionAnswerPair, backend: &dyn ChatBackend) -> Verdict {
    let changes = match (parse_case(&pair.input_case), parse_case(&pair.answer_case)) {
        (Ok(a), Ok(b)) => a
            .diff(&b)
            .iter()
            .map(|d| format!("- {d}"))
            .collect::<Vec<_>>()
            .join("\n"),
        _ => return Verdict::fail(Stage::Llm, "unparseable case"),
    };
    let mut user = format!(
        "## Verify\nInstruction: {}\nChanges:\n{}",
        pair.instruction,
        if changes.is_empty() { "(none)" } else { &changes }
    );
    for attempt in 1..=LLM_ATTEMPTS {
        if attempt > 1 {
            user.push_str("\n\n## Correction required\nReply with yes or no only.");
        }
        if let Ok(raw) = backend.ask(JUDGE, &user, None) {
            match read_judgment(&raw) {
                Some(true) => return Verdict::pass(Stage::Llm),
                Some(false) => return Verdict::fail(Stage::Llm, "llm_rejected"),
                None => {}
            }
        }
    }
    Verdict::fail(Stage::Llm, "verifier_malformed")
}

/// Runs the stages in order, stopping after the first failure, and stores
/// the verdicts on the pair. Returns whether the pair passed.
pub fn verify_pair(pair: &mut InstructionAnswerPair, judge: &dyn ChatBackend) -> bool {
    pair.verdicts.clear();
    let v = verify_regex(pair);
    let ok = v.passed;
    pair.verdicts.push(v);
    if !ok {
        return false;
    }
    let v = verify_rule(pair);
    let ok = v.passed;
    pair.verdicts.push(v);
    if !ok {
        return false;
    }
    let v = verify_llm(pair, judge);
    let ok = v.passed;
    pair.verdicts.push(v);
    ok
}

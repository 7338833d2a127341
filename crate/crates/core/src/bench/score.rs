//! Completion rate, DSM usage accuracy and result accuracy, plus report
//! rendering.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{canonical_call, BenchmarkCase, CanonicalCall, GroundTruth, RunSet, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub seed: u64,
    pub completed: bool,
    pub usage_correct: bool,
    pub result_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub runs: usize,
    /// `None` when there were no runs.
    pub completion: Option<f64>,
    pub usage: Option<f64>,
    pub result: Option<f64>,
    pub backends: Vec<String>,
    pub seeds: Vec<u64>,
    pub outcomes: Vec<CaseOutcome>,
}

impl MetricsReport {
    pub fn is_empty(&self) -> bool {
        self.runs == 0
    }
}

fn number_pattern() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| {
        Regex::new(r"(?i)(?:^|[^\w.])(-?\d+(?:\.\d+)?)(?:\s*(kwh|kw|mwh|mw|mvar|kvar|p\.u\.|%))?")
            .unwrap()
    })
}

/// First standalone number in `text`, with kW/kWh/kvar converted to the
/// mega units. Digits glued to letters (`t4`, `valley33`) are skipped.
pub fn extract_number(text: &str) -> Option<f64> {
    let c = number_pattern().captures(text)?;
    let v: f64 = c[1].parse().ok()?;
    let unit = c.get(2).map(|m| m.as_str().to_lowercase());
    Some(match unit.as_deref() {
        Some("kw" | "kwh" | "kvar") => v / 1000.0,
        _ => v,
    })
}

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn result_correct(truth: &GroundTruth, payloads: &[Value], answer: &str) -> bool {
    match truth {
        GroundTruth::Numeric { value, tolerance } => {
            let found = payloads
                .iter()
                .find_map(|p| p.get("value").and_then(Value::as_f64))
                .or_else(|| extract_number(answer));
            let tol = tolerance.unwrap_or(DEFAULT_TOLERANCE);
            found.is_some_and(|x| {
                let scale = if *value == 0.0 { 1.0 } else { value.abs() };
                (x - value).abs() <= tol * scale
            })
        }
        GroundTruth::Text { value } => {
            let want = fold(value);
            let cited = payloads
                .iter()
                .find_map(|p| ["branch", "value", "answer"].iter().find_map(|k| p.get(*k)?.as_str()));
            match cited {
                Some(s) => fold(s) == want,
                None => fold(answer)
                    .split(|c: char| c.is_whitespace() || ",;:()".contains(c))
                    .any(|tok| tok.trim_end_matches('.') == want),
            }
        }
    }
}

fn multiset(calls: impl Iterator<Item = CanonicalCall>) -> Vec<CanonicalCall> {
    let mut v: Vec<CanonicalCall> = calls.collect();
    v.sort();
    v
}

/// Scores a run set against its cases. Runs whose case is unknown count
/// as incorrect for usage and result.
pub fn score(method: &str, runs: &RunSet, cases: &[BenchmarkCase]) -> MetricsReport {
    let by_id: HashMap<&str, &BenchmarkCase> = cases.iter().map(|c| (c.id.as_str(), c)).collect();
    let outcomes: Vec<CaseOutcome> = runs
        .runs
        .iter()
        .map(|r| {
            let case = by_id.get(r.case_id.as_str());
            let usage_correct = case.is_some_and(|c| {
                let want = multiset(
                    c.reference
                        .iter()
                        .map(|x| canonical_call(&x.dsm, &x.command, &x.args)),
                );
                let got = multiset(r.executed.iter().map(|x| {
                    let args: Map<String, Value> = x
                        .command
                        .args
                        .iter()
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect();
                    canonical_call(&x.dsm, &x.command.name, &args)
                }));
                want == got
            });
            let result_correct = match (case, &r.answer) {
                (Some(c), Some(a)) => result_correct(&c.ground_truth, &r.cited_payloads, &a.text),
                _ => false,
            };
            CaseOutcome {
                case_id: r.case_id.clone(),
                seed: r.seed,
                completed: r.completed(),
                usage_correct,
                result_correct,
            }
        })
        .collect();
    let n = outcomes.len();
    let rate = |f: fn(&CaseOutcome) -> bool| {
        (n > 0).then(|| outcomes.iter().filter(|o| f(o)).count() as f64 / n as f64)
    };
    MetricsReport {
        method: method.to_string(),
        runs: n,
        completion: rate(|o| o.completed),
        usage: rate(|o| o.usage_correct),
        result: rate(|o| o.result_correct),
        backends: runs.backends.clone(),
        seeds: runs.seeds.clone(),
        outcomes,
    }
}

/// Percentage with one decimal, or `n/a`.
pub fn format_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{:.1}%", r * 100.0),
        None => "n/a".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    let (c, u, r) = (
        format_rate(report.completion),
        format_rate(report.usage),
        format_rate(report.result),
    );
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Markdown => format!(
            "| Method | Completion rate | DSM usage accuracy | Result accuracy |\n\
             |---|---|---|---|\n\
             | {} | {c} | {u} | {r} |\n",
            report.method
        ),
        ReportFormat::Text => {
            let seeds: Vec<String> = report.seeds.iter().map(u64::to_string).collect();
            format!(
                "method: {}\nruns: {}\nseeds: {}\nbackends: {}\ncompletion rate: {c}\nDSM usage accuracy: {u}\nresult accuracy: {r}\n",
                report.method,
                report.runs,
                seeds.join(", "),
                report.backends.join(", "),
            )
        }
    }
}

//! Benchmark suite: case schema, seeded sweeps, the three metrics and
//! report rendering.

mod canon;
mod reference;
mod run;
mod score;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dsm::as_record_ref;
use crate::orchestrator::Category;

pub use canon::{canonical_call, CanonicalCall};
pub use reference::{reference_plan, reference_specs, ReferenceSpecs, SUMMARIZER_PATTERN};
pub use run::{run_benchmark, ExecutedCall, RunOutcome, RunSet, RUNS_FILE};
pub use score::{
    extract_number, format_rate, render_report, score, CaseOutcome, MetricsReport, ReportFormat,
};

pub const DEFAULT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("case {case}: invalid field `{field}`: {message}")]
    Schema {
        case: String,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed run set: {0}")]
    RunSet(String),
}

/// One expected DSM invocation. Arguments may wire earlier references with
/// `{"$ref": "tN"}`, where `tN` is the N-th entry of the reference list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCall {
    pub dsm: String,
    pub command: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl ReferenceCall {
    /// Reference ids this call depends on.
    pub fn refs(&self) -> Vec<String> {
        self.args
            .values()
            .filter_map(as_record_ref)
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundTruth {
    /// Relative tolerance; defaults to [`DEFAULT_TOLERANCE`].
    Numeric {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
    },
    /// Compared after lowercasing and whitespace folding.
    Text { value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub id: String,
    pub category: Category,
    pub request: String,
    pub reference: Vec<ReferenceCall>,
    pub ground_truth: GroundTruth,
}

fn schema(case: &str, field: &str, message: impl Into<String>) -> BenchError {
    BenchError::Schema {
        case: case.to_string(),
        field: field.to_string(),
        message: message.into(),
    }
}

fn check_case(raw: &Value, index: usize) -> Result<BenchmarkCase, BenchError> {
    let id = raw
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("#{}", index + 1));
    let Some(obj) = raw.as_object() else {
        return Err(schema(&id, "case", "expected an object"));
    };
    for field in ["id", "category", "request", "reference", "ground_truth"] {
        if !obj.contains_key(field) {
            return Err(schema(&id, field, "missing"));
        }
    }
    if let Some(extra) = obj
        .keys()
        .find(|k| !["id", "category", "request", "reference", "ground_truth"].contains(&k.as_str()))
    {
        return Err(schema(&id, extra, "unknown field"));
    }
    let field = |name: &str| obj[name].clone();
    let id_text: String =
        serde_json::from_value(field("id")).map_err(|e| schema(&id, "id", e.to_string()))?;
    if id_text.trim().is_empty() {
        return Err(schema(&id, "id", "empty"));
    }
    let category: Category = serde_json::from_value(field("category")).map_err(|_| {
        schema(
            &id,
            "category",
            format!(
                "{} is not one of situation_awareness, decision_making, operation_analysis",
                obj["category"]
            ),
        )
    })?;
    let request: String = serde_json::from_value(field("request"))
        .map_err(|e| schema(&id, "request", e.to_string()))?;
    if request.trim().is_empty() {
        return Err(schema(&id, "request", "empty"));
    }
    let reference: Vec<ReferenceCall> = serde_json::from_value(field("reference"))
        .map_err(|e| schema(&id, "reference", e.to_string()))?;
    if reference.is_empty() {
        return Err(schema(&id, "reference", "must name at least one invocation"));
    }
    for (k, call) in reference.iter().enumerate() {
        for r in call.refs() {
            let ok = r
                .strip_prefix('t')
                .and_then(|n| n.parse::<usize>().ok())
                .is_some_and(|n| n >= 1 && n <= k);
            if !ok {
                return Err(schema(
                    &id,
                    &format!("reference[{k}].args"),
                    format!("`{r}` does not name an earlier invocation"),
                ));
            }
        }
    }
    let ground_truth: GroundTruth = serde_json::from_value(field("ground_truth"))
        .map_err(|e| schema(&id, "ground_truth", e.to_string()))?;
    match &ground_truth {
        GroundTruth::Numeric { value, tolerance } => {
            if !value.is_finite() {
                return Err(schema(&id, "ground_truth.value", "not finite"));
            }
            if tolerance.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
                return Err(schema(&id, "ground_truth.tolerance", "must be positive"));
            }
        }
        GroundTruth::Text { value } => {
            if value.trim().is_empty() {
                return Err(schema(&id, "ground_truth.value", "empty"));
            }
        }
    }
    Ok(BenchmarkCase {
        id: id_text,
        category,
        request,
        reference,
        ground_truth,
    })
}

/// Parses a JSON case list. Blank text is an empty suite.
pub fn parse_benchmark(text: &str) -> Result<Vec<BenchmarkCase>, BenchError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let raw: Vec<Value> =
        serde_json::from_str(text).map_err(|e| schema("(file)", "cases", e.to_string()))?;
    let mut cases = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let c = check_case(r, i)?;
        if cases.iter().any(|p: &BenchmarkCase| p.id == c.id) {
            return Err(schema(&c.id, "id", "duplicate"));
        }
        cases.push(c);
    }
    Ok(cases)
}

pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkCase>, BenchError> {
    parse_benchmark(&std::fs::read_to_string(path)?)
}

/// Case count per category.
pub fn category_counts(cases: &[BenchmarkCase]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for c in cases {
        *out.entry(c.category.as_str()).or_insert(0) += 1;
    }
    out
}

//! Canonical form of a DSM invocation for order-insensitive usage
//! matching. Names are lowercased, districts, dates, objectives,
//! statistics and adjustment instructions are normalized, numbers compare
//! by value, and record-reference wiring is dropped.

use std::collections::BTreeMap;

use adn_grid::Objective;
use serde_json::{Map, Number, Value};

use crate::datastore::{normalize_district, parse_date};
use crate::dsm::{as_record_ref, parse_instruction, render_instruction, StatisticKind};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CanonicalCall(pub String);

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn canonical_string(key: &str, s: &str) -> String {
    match key {
        "district" => normalize_district(s),
        "date" => parse_date(s)
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_else(|_| fold(s)),
        "objective" => Objective::parse(&fold(s))
            .map(|o| o.as_str().to_string())
            .unwrap_or_else(|| fold(s)),
        "kind" | "statistic" => StatisticKind::parse(s)
            .map(|k| k.as_str().to_string())
            .unwrap_or_else(|| fold(s)),
        "instruction" => parse_instruction(s)
            .map(|r| render_instruction(&r))
            .unwrap_or_else(|_| fold(s)),
        _ => fold(s),
    }
}

fn canonical_value(key: &str, v: &Value) -> Option<Value> {
    if as_record_ref(v).is_some() {
        return None;
    }
    Some(match v {
        Value::String(s) => Value::String(canonical_string(key, s)),
        Value::Number(n) => n
            .as_f64()
            .and_then(Number::from_f64)
            .map(Value::Number)
            .unwrap_or_else(|| v.clone()),
        Value::Array(items) => Value::Array(
            items
                .iter()
                .filter_map(|i| canonical_value(key, i))
                .collect(),
        ),
        Value::Object(m) => {
            let inner: BTreeMap<String, Value> = m
                .iter()
                .filter_map(|(k, v)| Some((k.to_lowercase(), canonical_value(k, v)?)))
                .collect();
            serde_json::to_value(inner).expect("map serializes")
        }
        other => other.clone(),
    })
}

pub fn canonical_call(dsm: &str, command: &str, args: &Map<String, Value>) -> CanonicalCall {
    let args: BTreeMap<String, Value> = args
        .iter()
        .filter_map(|(k, v)| Some((k.to_lowercase(), canonical_value(k, v)?)))
        .collect();
    let args = serde_json::to_string(&args).expect("map serializes");
    CanonicalCall(format!("{}.{}{}", fold(dsm), fold(command), args))
}

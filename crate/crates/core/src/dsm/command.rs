//! Translator output: a JSON command checked against the owning DSM's
//! schema before anything reaches a Worker.
//!
//! Wire form: `{"name": "simulate", "args": {"case": {"$ref": "t1"}, "hour": 12}}`.
//! A record reference is an object with the single key `$ref` naming a
//! subtask whose record is in the Translator's context.

use std::collections::BTreeMap;

use adn_grid::Objective;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::manifest::{ArgType, DsmManifest};
use super::organize::StatisticKind;
use crate::datastore::{parse_date, Datastore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Command {
    pub name: String,
    #[serde(default)]
    pub args: BTreeMap<String, Value>,
}

/// A prior execution record as seen by a Translator.
#[derive(Debug, Clone, Copy)]
pub struct RecordView<'a> {
    pub id: &'a str,
    pub dsm: &'a str,
    pub summary: &'a str,
    pub payload: &'a Value,
}

pub fn record_ref(id: &str) -> Value {
    json!({ "$ref": id })
}

/// Subtask id if `v` is a record reference.
pub fn as_record_ref(v: &Value) -> Option<&str> {
    match v {
        Value::Object(m) if m.len() == 1 => m.get("$ref").and_then(Value::as_str),
        _ => None,
    }
}

fn payload_has_case(p: &Value) -> bool {
    p.get("case").is_some_and(Value::is_string)
}

fn payload_is_profile(p: &Value) -> bool {
    p.get("pv").is_some_and(Value::is_array) && p.get("load").is_some_and(Value::is_array)
}

/// Parses and validates raw Translator output. All problems are collected
/// so the retry prompt can list them at once.
pub fn parse_command(
    raw: &str,
    manifest: &DsmManifest,
    datastore: &Datastore,
    records: &[RecordView<'_>],
) -> Result<Command, Vec<String>> {
    let cmd: Command = serde_json::from_str(raw.trim())
        .map_err(|e| vec![format!("response is not a valid command object: {e}")])?;
    let errors = validate_command(&cmd, manifest, datastore, records);
    if errors.is_empty() {
        Ok(normalize_command(cmd, manifest, datastore))
    } else {
        Err(errors)
    }
}

/// Rewrites district names to registry keys, dates to `YYYY-MM-DD` and
/// objective/statistic names to their canonical spelling. Expects a
/// command that passed [`validate_command`].
pub fn normalize_command(mut cmd: Command, manifest: &DsmManifest, datastore: &Datastore) -> Command {
    let Some(spec) = manifest.command(&cmd.name) else {
        return cmd;
    };
    for (name, v) in cmd.args.iter_mut() {
        let (Some(arg), Some(s)) = (spec.arg(name), v.as_str()) else {
            continue;
        };
        let canonical = match arg.ty {
            ArgType::District | ArgType::Case => datastore.resolve(s).ok(),
            ArgType::Date => parse_date(s).ok().map(|d| d.to_string()),
            ArgType::Objective => Objective::parse(s).map(|o| o.as_str().to_string()),
            ArgType::Statistic => StatisticKind::parse(s).map(|k| k.as_str().to_string()),
            _ => None,
        };
        if let Some(c) = canonical {
            *v = Value::String(c);
        }
    }
    cmd
}

pub fn validate_command(
    cmd: &Command,
    manifest: &DsmManifest,
    datastore: &Datastore,
    records: &[RecordView<'_>],
) -> Vec<String> {
    let Some(spec) = manifest.command(&cmd.name) else {
        let known: Vec<&str> = manifest.commands.iter().map(|c| c.name.as_str()).collect();
        return vec![format!(
            "unknown command `{}` for {}; expected one of: {}",
            cmd.name,
            manifest.name,
            known.join(", ")
        )];
    };
    let mut errors = Vec::new();
    for name in cmd.args.keys() {
        if spec.arg(name).is_none() {
            errors.push(format!("unknown argument `{name}` for {}", spec.name));
        }
    }
    for arg in &spec.args {
        let Some(v) = cmd.args.get(&arg.name) else {
            if arg.required {
                errors.push(format!("missing required argument `{}`", arg.name));
            }
            continue;
        };
        if let Err(e) = check_value(arg.ty, v, datastore, records) {
            errors.push(format!("argument `{}`: {e}", arg.name));
        }
    }
    errors
}

fn check_value(
    ty: ArgType,
    v: &Value,
    datastore: &Datastore,
    records: &[RecordView<'_>],
) -> Result<(), String> {
    if let Some(id) = as_record_ref(v) {
        if !ty.takes_reference() {
            return Err(format!("a {} cannot be a record reference", ty.as_str()));
        }
        let rec = records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| format!("reference to `{id}`, which is not an available record"))?;
        return match ty {
            ArgType::Case if !payload_has_case(rec.payload) => {
                Err(format!("record `{id}` does not hold a network model"))
            }
            ArgType::Profile if !payload_is_profile(rec.payload) => {
                Err(format!("record `{id}` does not hold a profile"))
            }
            _ => Ok(()),
        };
    }
    let s = v.as_str();
    match ty {
        ArgType::District | ArgType::Case => {
            let name = s.ok_or("expected a district name")?;
            datastore.resolve(name).map(|_| ()).map_err(|e| e.to_string())
        }
        ArgType::Profile | ArgType::Record => Err("expected a record reference {\"$ref\": id}".into()),
        ArgType::Date => parse_date(s.ok_or("expected a date string")?)
            .map(|_| ())
            .map_err(|e| e.to_string()),
        ArgType::Integer => match v.as_u64() {
            Some(_) => Ok(()),
            None => Err("expected a non-negative integer".into()),
        },
        ArgType::Number => match v.as_f64() {
            Some(x) if x.is_finite() => Ok(()),
            _ => Err("expected a number".into()),
        },
        ArgType::Text => match s {
            Some(t) if !t.trim().is_empty() => Ok(()),
            _ => Err("expected non-empty text".into()),
        },
        ArgType::Objective => s
            .and_then(Objective::parse)
            .map(|_| ())
            .ok_or_else(|| "expected min_cost, min_voltage_deviation or min_power_loss".into()),
        ArgType::Statistic => s
            .and_then(StatisticKind::parse)
            .map(|_| ())
            .ok_or_else(|| format!("expected one of {}", StatisticKind::NAMES.join(", "))),
    }
}

/// Replaces record references by the referenced payloads.
pub fn resolve_refs(cmd: &Command, records: &[RecordView<'_>]) -> Result<Map<String, Value>, String> {
    let mut out = Map::new();
    for (k, v) in &cmd.args {
        let value = match as_record_ref(v) {
            Some(id) => records
                .iter()
                .find(|r| r.id == id)
                .map(|r| r.payload.clone())
                .ok_or_else(|| format!("unresolved reference `{id}`"))?,
            None => v.clone(),
        };
        out.insert(k.clone(), value);
    }
    Ok(out)
}

//! Prompt templates and the builders that fill them.

use crate::dsm::{DsmManifest, RecordView};

pub const PLANNER: &str = include_str!("../../../data/prompts/planner.md");
pub const TRANSLATOR: &str = include_str!("../../../data/prompts/translator.md");
pub const SUMMARIZER: &str = include_str!("../../../data/prompts/summarizer.md");
pub const ADJUSTER: &str = include_str!("../../../data/prompts/adjuster.md");

/// Planner system prompt with the district list and DSM descriptions filled in.
pub fn planner_system(manifests: &[&DsmManifest], districts: &[String]) -> String {
    let dsms: Vec<String> = manifests.iter().map(|m| m.describe()).collect();
    PLANNER
        .replace("{districts}", &districts.join(", "))
        .replace("{dsms}", dsms.join("\n").trim_end())
}

fn correction(out: &mut String, errors: Option<&[String]>) {
    if let Some(errors) = errors {
        out.push_str("\n\n## Correction required\nYour previous answer was rejected:\n");
        for e in errors {
            out.push_str(&format!("- {e}\n"));
        }
        out.push_str("Return a corrected JSON object only.");
    }
}

pub fn planner_user(request: &str, errors: Option<&[String]>) -> String {
    let mut out = format!("## Operation request\n{}", request.trim());
    correction(&mut out, errors);
    out
}

/// One line per record: `- t4 (result_organization_tool, done): ...`.
pub fn record_line(id: &str, dsm: &str, status: &str, summary: &str) -> String {
    format!("- {id} ({dsm}, {status}): {summary}")
}

pub fn translator_user(
    subtask: &str,
    manifest: &DsmManifest,
    description: &str,
    records: &[RecordView<'_>],
    errors: Option<&[String]>,
) -> String {
    let mut out = format!(
        "## Subtask {subtask} for {}\nTask: {}\n\n### Commands\n",
        manifest.name,
        description.trim()
    );
    for c in &manifest.commands {
        out.push_str(&format!("- {}: {}\n", c.signature(), c.description));
        for a in &c.args {
            out.push_str(&format!(
                "  - {} ({}{}): {}\n",
                a.name,
                a.ty.as_str(),
                if a.required { ", required" } else { "" },
                a.description
            ));
        }
    }
    out.push_str("\n### Records\n");
    if records.is_empty() {
        out.push_str("(none)\n");
    }
    for r in records {
        out.push_str(&record_line(r.id, r.dsm, "done", r.summary));
        out.push('\n');
    }
    let mut out = out.trim_end().to_string();
    correction(&mut out, errors);
    out
}

/// `lines` are [`record_line`]s in execution order.
pub fn summarizer_user(request: &str, lines: &[String], errors: Option<&[String]>) -> String {
    let mut out = format!("## Operation request\n{}\n\n## Summarize\n", request.trim());
    out.push_str(&lines.join("\n"));
    correction(&mut out, errors);
    out
}

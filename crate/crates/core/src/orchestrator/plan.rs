//! Planner output and its validation. The error list is fed back to the
//! Planner verbatim on retry.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SituationAwareness,
    DecisionMaking,
    OperationAnalysis,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::SituationAwareness => "situation_awareness",
            Category::DecisionMaking => "decision_making",
            Category::OperationAnalysis => "operation_analysis",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtaskSpec {
    pub id: String,
    pub dsm: String,
    pub description: String,
    pub depends_on: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanMessage {
    pub reasoning: String,
    pub category: Category,
    pub subtasks: Vec<SubtaskSpec>,
}

/// Accepts `raw` iff it is a plan object whose DSMs are all in `dsms` and
/// whose dependencies point at earlier subtasks.
pub fn validate_plan(raw: &str, dsms: &[&str]) -> Result<PlanMessage, Vec<String>> {
    let plan: PlanMessage = serde_json::from_str(raw.trim())
        .map_err(|e| vec![format!("response is not a valid plan object: {e}")])?;
    let mut errors = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for st in &plan.subtasks {
        if st.id.trim().is_empty() {
            errors.push("subtask with an empty id".to_string());
        }
        if !dsms.contains(&st.dsm.as_str()) {
            errors.push(format!(
                "unknown DSM `{}` in subtask {}; available: {}",
                st.dsm,
                st.id,
                dsms.join(", ")
            ));
        }
        if st.description.trim().is_empty() {
            errors.push(format!("subtask {} has an empty description", st.id));
        }
        for dep in &st.depends_on {
            if !seen.contains(dep.as_str()) {
                errors.push(format!(
                    "forward dependency: subtask {} depends on `{dep}`, which is not declared before it",
                    st.id
                ));
            }
        }
        if !seen.insert(&st.id) {
            errors.push(format!("duplicate subtask id {}", st.id));
        }
    }
    if errors.is_empty() {
        Ok(plan)
    } else {
        Err(errors)
    }
}

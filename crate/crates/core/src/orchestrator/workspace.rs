//! Per-request workspace and the lifecycle events it is built from.
//!
//! The workspace is never mutated directly: every change is an [`Event`]
//! applied through [`Workspace::apply`], so replaying a persisted log
//! rebuilds the same state.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::plan::PlanMessage;
use crate::dsm::Command;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkspaceStatus {
    Planning,
    Executing,
    Summarizing,
    Completed,
    Incomplete,
}

impl WorkspaceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            WorkspaceStatus::Planning => "planning",
            WorkspaceStatus::Executing => "executing",
            WorkspaceStatus::Summarizing => "summarizing",
            WorkspaceStatus::Completed => "completed",
            WorkspaceStatus::Incomplete => "incomplete",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, WorkspaceStatus::Completed | WorkspaceStatus::Incomplete)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: String,
    pub dsm: String,
    pub description: String,
    pub depends_on: Vec<String>,
    pub status: SubtaskStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Done,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub subtask: String,
    pub dsm: String,
    pub command: Option<Command>,
    pub payload: Value,
    pub summary: String,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub duration_ms: u64,
}

impl ExecutionRecord {
    pub fn is_done(&self) -> bool {
        self.outcome == Outcome::Done
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub text: String,
    pub cited_records: Vec<String>,
    pub status: WorkspaceStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    RequestReceived {
        request_id: String,
        text: String,
        seed: u64,
    },
    PlanAttempt {
        attempt: u32,
        backend: String,
        errors: Vec<String>,
    },
    PlanReady {
        plan: PlanMessage,
    },
    PlanFailed {
        reason: String,
    },
    SubtaskStarted {
        subtask: String,
    },
    TranslateAttempt {
        subtask: String,
        attempt: u32,
        backend: String,
        errors: Vec<String>,
    },
    CommandIssued {
        subtask: String,
        command: Command,
    },
    SubtaskFinished {
        record: ExecutionRecord,
    },
    SummaryAttempt {
        attempt: u32,
        backend: String,
        errors: Vec<String>,
    },
    AnswerReady {
        answer: FinalAnswer,
    },
    StatusChanged {
        status: WorkspaceStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::RequestReceived { .. } => "request_received",
            Event::PlanAttempt { .. } => "plan_attempt",
            Event::PlanReady { .. } => "plan_ready",
            Event::PlanFailed { .. } => "plan_failed",
            Event::SubtaskStarted { .. } => "subtask_started",
            Event::TranslateAttempt { .. } => "translate_attempt",
            Event::CommandIssued { .. } => "command_issued",
            Event::SubtaskFinished { .. } => "subtask_finished",
            Event::SummaryAttempt { .. } => "summary_attempt",
            Event::AnswerReady { .. } => "answer_ready",
            Event::StatusChanged { .. } => "status_changed",
        }
    }
}

/// One line of the JSONL event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    /// 0-based position in the request's log.
    pub seq: u64,
    /// RFC 3339 UTC timestamp.
    pub at: String,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub request_id: String,
    pub text: String,
    pub seed: u64,
    pub status: WorkspaceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub plan: Option<PlanMessage>,
    pub subtasks: Vec<Subtask>,
    pub records: Vec<ExecutionRecord>,
    pub answer: Option<FinalAnswer>,
}

impl Workspace {
    pub fn new(request_id: &str, text: &str, seed: u64) -> Self {
        Self {
            request_id: request_id.to_string(),
            text: text.to_string(),
            seed,
            status: WorkspaceStatus::Planning,
            reason: None,
            plan: None,
            subtasks: Vec::new(),
            records: Vec::new(),
            answer: None,
        }
    }

    pub fn record(&self, subtask: &str) -> Option<&ExecutionRecord> {
        self.records.iter().find(|r| r.subtask == subtask)
    }

    pub fn failed_ids(&self) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| !r.is_done())
            .map(|r| r.subtask.as_str())
            .collect()
    }

    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::RequestReceived {
                request_id,
                text,
                seed,
            } => *self = Workspace::new(request_id, text, *seed),
            Event::PlanReady { plan } => {
                self.subtasks = plan
                    .subtasks
                    .iter()
                    .map(|s| Subtask {
                        id: s.id.clone(),
                        dsm: s.dsm.clone(),
                        description: s.description.clone(),
                        depends_on: s.depends_on.clone(),
                        status: SubtaskStatus::Pending,
                    })
                    .collect();
                self.plan = Some(plan.clone());
            }
            Event::PlanFailed { reason } => self.reason = Some(reason.clone()),
            Event::SubtaskStarted { subtask } => self.set_subtask(subtask, SubtaskStatus::Running),
            Event::SubtaskFinished { record } => {
                let status = if record.is_done() {
                    SubtaskStatus::Done
                } else {
                    SubtaskStatus::Failed
                };
                self.set_subtask(&record.subtask, status);
                self.records.push(record.clone());
            }
            Event::StatusChanged { status, reason } => {
                self.status = *status;
                if reason.is_some() {
                    self.reason = reason.clone();
                }
            }
            Event::AnswerReady { answer } => self.answer = Some(answer.clone()),
            Event::PlanAttempt { .. }
            | Event::TranslateAttempt { .. }
            | Event::CommandIssued { .. }
            | Event::SummaryAttempt { .. } => {}
        }
    }

    fn set_subtask(&mut self, id: &str, status: SubtaskStatus) {
        if let Some(s) = self.subtasks.iter_mut().find(|s| s.id == id) {
            s.status = status;
        }
    }

    /// Rebuilds a workspace from its event log.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a EventEnvelope>) -> Option<Self> {
        let mut iter = events.into_iter();
        let first = iter.next()?;
        let Event::RequestReceived {
            request_id,
            text,
            seed,
        } = &first.event
        else {
            return None;
        };
        let mut ws = Workspace::new(request_id, text, *seed);
        for e in iter {
            ws.apply(&e.event);
        }
        Some(ws)
    }
}

/// Reads a JSONL event log.
pub fn read_event_log(path: &Path) -> std::io::Result<Vec<EventEnvelope>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let env = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.push(env);
    }
    Ok(out)
}

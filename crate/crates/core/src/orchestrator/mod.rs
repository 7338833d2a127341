//! Request orchestration: plan, execute subtasks through their DSMs, then
//! summarize. Every step is recorded as an event in the request's own
//! workspace; requests share nothing but the read-only registry.

mod plan;
mod workspace;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Deserialize;
use thiserror::Error;

pub use plan::{validate_plan, Category, PlanMessage, SubtaskSpec};
pub use workspace::{
    read_event_log, Event, EventEnvelope, ExecutionRecord, FinalAnswer, Outcome, Subtask,
    SubtaskStatus, Workspace, WorkspaceStatus,
};

use crate::datastore::Datastore;
use crate::dsm::translate::{translate, MAX_ATTEMPTS};
use crate::dsm::{DsmRegistry, RecordView};
use crate::llm::{ChatBackend, Gateway};
use crate::prompts;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("request text is empty")]
    EmptyRequest,
    #[error("unknown request `{0}`")]
    UnknownRequest(String),
    #[error("gateway has no backend for role `{0}`")]
    MissingRole(&'static str),
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
}

struct RequestState {
    workspace: Workspace,
    events: Vec<EventEnvelope>,
    log: Option<BufWriter<File>>,
}

impl RequestState {
    fn emit(&mut self, event: Event) {
        let env = EventEnvelope {
            seq: self.events.len() as u64,
            at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            event,
        };
        self.workspace.apply(&env.event);
        if let Some(log) = &mut self.log {
            let line = serde_json::to_string(&env).expect("events serialize");
            // A failing audit log must not take the request down with it.
            if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
                log::warn!("event log write failed: {e}");
            }
        }
        self.events.push(env);
    }
}

type Handle = Arc<Mutex<RequestState>>;

pub struct Orchestrator {
    registry: Arc<DsmRegistry>,
    datastore: Arc<Datastore>,
    planner: Arc<dyn ChatBackend>,
    translator: Arc<dyn ChatBackend>,
    summarizer: Arc<dyn ChatBackend>,
    run_dir: Option<PathBuf>,
    requests: Mutex<HashMap<String, Handle>>,
    next_id: AtomicU64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryReply {
    answer: String,
    cited_records: Vec<String>,
}

/// True when `id` occurs in `text` as a whole token.
fn mentions(text: &str, id: &str) -> bool {
    text.match_indices(id).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + id.len()..].chars().next();
        !before.is_some_and(|c| c.is_alphanumeric() || c == '_')
            && !after.is_some_and(|c| c.is_alphanumeric() || c == '_')
    })
}

impl Orchestrator {
    pub fn new(
        registry: Arc<DsmRegistry>,
        datastore: Arc<Datastore>,
        planner: Arc<dyn ChatBackend>,
        translator: Arc<dyn ChatBackend>,
        summarizer: Arc<dyn ChatBackend>,
    ) -> Self {
        Self {
            registry,
            datastore,
            planner,
            translator,
            summarizer,
            run_dir: None,
            requests: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Uses the gateway's planner, translator and summarizer roles.
    pub fn from_gateway(
        registry: Arc<DsmRegistry>,
        datastore: Arc<Datastore>,
        gateway: &Gateway,
    ) -> Result<Self, OrchestratorError> {
        let role = |r: &'static str| gateway.role(r).ok_or(OrchestratorError::MissingRole(r));
        Ok(Self::new(
            registry,
            datastore,
            role("planner")?,
            role("translator")?,
            role("summarizer")?,
        ))
    }

    /// Persists one `{request id}.jsonl` event log per request under `dir`.
    pub fn with_run_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self, OrchestratorError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        self.run_dir = Some(dir);
        Ok(self)
    }

    pub fn registry(&self) -> &DsmRegistry {
        &self.registry
    }

    /// Planner, translator and summarizer backend names.
    pub fn backend_names(&self) -> Vec<String> {
        [&self.planner, &self.translator, &self.summarizer]
            .iter()
            .map(|b| b.name().to_string())
            .collect()
    }

    pub fn run_dir(&self) -> Option<&Path> {
        self.run_dir.as_deref()
    }

    pub fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.run_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    /// Registers a request and returns its id; [`Orchestrator::run`]
    /// processes it.
    pub fn submit(&self, text: &str, seed: u64) -> Result<String, OrchestratorError> {
        if text.trim().is_empty() {
            return Err(OrchestratorError::EmptyRequest);
        }
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let id = format!("req-{n:04}-{}", &uuid::Uuid::new_v4().simple().to_string()[..8]);
        let log = match self.log_path(&id) {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        let mut state = RequestState {
            workspace: Workspace::new(&id, text, seed),
            events: Vec::new(),
            log,
        };
        state.emit(Event::RequestReceived {
            request_id: id.clone(),
            text: text.to_string(),
            seed,
        });
        self.requests
            .lock()
            .unwrap()
            .insert(id.clone(), Arc::new(Mutex::new(state)));
        Ok(id)
    }

    pub fn handle_request(&self, text: &str, seed: u64) -> Result<Workspace, OrchestratorError> {
        let id = self.submit(text, seed)?;
        self.run(&id)
    }

    pub fn snapshot(&self, id: &str) -> Option<Workspace> {
        let h = self.handle(id).ok()?;
        let ws = h.lock().unwrap().workspace.clone();
        Some(ws)
    }

    /// Events with `seq >= from`.
    pub fn events_since(&self, id: &str, from: u64) -> Option<Vec<EventEnvelope>> {
        let h = self.handle(id).ok()?;
        let st = h.lock().unwrap();
        Some(st.events.iter().skip(from as usize).cloned().collect())
    }

    pub fn request_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.requests.lock().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn handle(&self, id: &str) -> Result<Handle, OrchestratorError> {
        self.requests
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| OrchestratorError::UnknownRequest(id.to_string()))
    }

    /// Plans, executes and summarizes a submitted request. The request's
    /// lock is released during backend and worker calls so snapshots stay
    /// readable.
    pub fn run(&self, id: &str) -> Result<Workspace, OrchestratorError> {
        let handle = self.handle(id)?;
        let emit = |e: Event| handle.lock().unwrap().emit(e);
        let (text, seed) = {
            let st = handle.lock().unwrap();
            (st.workspace.text.clone(), st.workspace.seed)
        };

        let Some(plan) = self.plan(&text, seed, &emit) else {
            let ws = handle.lock().unwrap().workspace.clone();
            return Ok(ws);
        };
        emit(Event::PlanReady { plan: plan.clone() });
        emit(Event::StatusChanged {
            status: WorkspaceStatus::Executing,
            reason: None,
        });

        let mut records: Vec<ExecutionRecord> = Vec::new();
        for st in &plan.subtasks {
            emit(Event::SubtaskStarted {
                subtask: st.id.clone(),
            });
            let record = self.execute_subtask(st, seed, &records, &emit);
            emit(Event::SubtaskFinished {
                record: record.clone(),
            });
            records.push(record);
        }

        let failed: Vec<&str> = records
            .iter()
            .filter(|r| !r.is_done())
            .map(|r| r.subtask.as_str())
            .collect();
        if failed.is_empty() {
            emit(Event::StatusChanged {
                status: WorkspaceStatus::Summarizing,
                reason: None,
            });
        } else {
            emit(Event::StatusChanged {
                status: WorkspaceStatus::Incomplete,
                reason: Some(format!("failed subtasks: {}", failed.join(", "))),
            });
        }

        let answer = self.summarize(&text, seed, &records, &failed, &emit);
        let final_status = answer.status;
        emit(Event::AnswerReady { answer });
        if final_status == WorkspaceStatus::Completed {
            emit(Event::StatusChanged {
                status: WorkspaceStatus::Completed,
                reason: None,
            });
        } else if failed.is_empty() {
            emit(Event::StatusChanged {
                status: WorkspaceStatus::Incomplete,
                reason: Some("summary failed".into()),
            });
        }
        let ws = handle.lock().unwrap().workspace.clone();
        Ok(ws)
    }

    fn plan(&self, text: &str, seed: u64, emit: &dyn Fn(Event)) -> Option<PlanMessage> {
        let names = self.registry.names();
        let system = prompts::planner_system(&self.registry.manifests(), &self.datastore.districts());
        let mut errors: Vec<String> = Vec::new();
        for attempt in 1..=MAX_ATTEMPTS {
            let user = prompts::planner_user(text, (attempt > 1).then_some(errors.as_slice()));
            let result = match self.planner.ask(&system, &user, Some(seed)) {
                Ok(raw) => validate_plan(&raw, &names),
                Err(e) => Err(vec![format!("backend error: {e}")]),
            };
            emit(Event::PlanAttempt {
                attempt,
                backend: self.planner.name().to_string(),
                errors: result.as_ref().err().cloned().unwrap_or_default(),
            });
            match result {
                Ok(plan) => return Some(plan),
                Err(e) => errors = e,
            }
        }
        let reason = format!(
            "plan failed after {MAX_ATTEMPTS} attempts: {}",
            errors.join("; ")
        );
        emit(Event::PlanFailed {
            reason: reason.clone(),
        });
        emit(Event::StatusChanged {
            status: WorkspaceStatus::Incomplete,
            reason: Some(reason),
        });
        None
    }

    fn execute_subtask(
        &self,
        st: &SubtaskSpec,
        seed: u64,
        prior: &[ExecutionRecord],
        emit: &dyn Fn(Event),
    ) -> ExecutionRecord {
        let started = Instant::now();
        let failed = |reason: String, command| ExecutionRecord {
            subtask: st.id.clone(),
            dsm: st.dsm.clone(),
            command,
            payload: serde_json::Value::Null,
            summary: String::new(),
            outcome: Outcome::Failed { reason },
            duration_ms: started.elapsed().as_millis() as u64,
        };
        let deps: Vec<&ExecutionRecord> = st
            .depends_on
            .iter()
            .filter_map(|d| prior.iter().find(|r| &r.subtask == d))
            .collect();
        if deps.iter().any(|r| !r.is_done()) {
            return failed("upstream failure".into(), None);
        }
        let Some(dsm) = self.registry.get(&st.dsm) else {
            return failed(format!("unknown DSM `{}`", st.dsm), None);
        };
        let views: Vec<RecordView<'_>> = deps
            .iter()
            .map(|r| RecordView {
                id: &r.subtask,
                dsm: &r.dsm,
                summary: &r.summary,
                payload: &r.payload,
            })
            .collect();
        let backend = self.translator.name().to_string();
        let cmd = translate(
            self.translator.as_ref(),
            &dsm.manifest,
            &self.datastore,
            &st.id,
            &st.description,
            &views,
            Some(seed),
            |a| {
                emit(Event::TranslateAttempt {
                    subtask: st.id.clone(),
                    attempt: a.attempt,
                    backend: backend.clone(),
                    errors: a.errors.clone(),
                })
            },
        );
        let cmd = match cmd {
            Ok(c) => c,
            Err(errors) => {
                return failed(
                    format!(
                        "translation failed after {MAX_ATTEMPTS} attempts: {}",
                        errors.join("; ")
                    ),
                    None,
                )
            }
        };
        emit(Event::CommandIssued {
            subtask: st.id.clone(),
            command: cmd.clone(),
        });
        match self.registry.execute(&st.dsm, &cmd, &views) {
            Ok(out) => ExecutionRecord {
                subtask: st.id.clone(),
                dsm: st.dsm.clone(),
                command: Some(cmd),
                payload: out.payload,
                summary: out.summary,
                outcome: Outcome::Done,
                duration_ms: started.elapsed().as_millis() as u64,
            },
            Err(e) => failed(e.to_string(), Some(cmd)),
        }
    }

    fn summarize(
        &self,
        text: &str,
        seed: u64,
        records: &[ExecutionRecord],
        failed: &[&str],
        emit: &dyn Fn(Event),
    ) -> FinalAnswer {
        let lines: Vec<String> = records
            .iter()
            .map(|r| match &r.outcome {
                Outcome::Done => prompts::record_line(&r.subtask, &r.dsm, "done", &r.summary),
                Outcome::Failed { reason } => {
                    prompts::record_line(&r.subtask, &r.dsm, "failed", reason)
                }
            })
            .collect();
        let status = if failed.is_empty() {
            WorkspaceStatus::Completed
        } else {
            WorkspaceStatus::Incomplete
        };
        let mut errors: Vec<String> = Vec::new();
        for attempt in 1..=MAX_ATTEMPTS {
            let user = prompts::summarizer_user(text, &lines, (attempt > 1).then_some(errors.as_slice()));
            let result = match self.summarizer.ask(prompts::SUMMARIZER, &user, Some(seed)) {
                Ok(raw) => check_summary(&raw, records, failed),
                Err(e) => Err(vec![format!("backend error: {e}")]),
            };
            emit(Event::SummaryAttempt {
                attempt,
                backend: self.summarizer.name().to_string(),
                errors: result.as_ref().err().cloned().unwrap_or_default(),
            });
            match result {
                Ok(reply) => {
                    return FinalAnswer {
                        text: reply.answer,
                        cited_records: reply.cited_records,
                        status,
                    }
                }
                Err(e) => errors = e,
            }
        }
        let mut text = String::from("No summary could be produced; execution records follow.");
        for l in &lines {
            text.push('\n');
            text.push_str(l);
        }
        FinalAnswer {
            text,
            cited_records: records
                .iter()
                .filter(|r| r.is_done())
                .map(|r| r.subtask.clone())
                .collect(),
            status: WorkspaceStatus::Incomplete,
        }
    }
}

fn check_summary(
    raw: &str,
    records: &[ExecutionRecord],
    failed: &[&str],
) -> Result<SummaryReply, Vec<String>> {
    let reply: SummaryReply = serde_json::from_str(raw.trim())
        .map_err(|e| vec![format!("response is not a valid summary object: {e}")])?;
    let mut errors = Vec::new();
    if reply.answer.trim().is_empty() {
        errors.push("answer is empty".to_string());
    }
    for c in &reply.cited_records {
        if !records.iter().any(|r| &r.subtask == c) {
            errors.push(format!("cited record `{c}` does not exist"));
        }
    }
    for f in failed {
        if !mentions(&reply.answer, f) {
            errors.push(format!("answer must state that subtask {f} failed"));
        }
    }
    if errors.is_empty() {
        Ok(reply)
    } else {
        Err(errors)
    }
}

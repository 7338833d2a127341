//! Seeded sweeps over a case list.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BenchError, BenchmarkCase};
use crate::dsm::Command;
use crate::orchestrator::{FinalAnswer, Orchestrator, WorkspaceStatus};

pub const RUNS_FILE: &str = "runs.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedCall {
    pub dsm: String,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub case_id: String,
    pub seed: u64,
    pub request_id: Option<String>,
    pub status: WorkspaceStatus,
    pub answer: Option<FinalAnswer>,
    /// Commands that reached a worker, in execution order.
    pub executed: Vec<ExecutedCall>,
    /// Payloads of the cited records, in citation order.
    pub cited_payloads: Vec<Value>,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.status == WorkspaceStatus::Completed && self.answer.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSet {
    pub backends: Vec<String>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunOutcome>,
}

impl RunSet {
    pub fn save(&self, dir: &Path) -> Result<(), BenchError> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("run set serializes");
        std::fs::write(dir.join(RUNS_FILE), text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| BenchError::RunSet(e.to_string()))
    }

    /// True when any run did not complete.
    pub fn had_failures(&self) -> bool {
        self.runs.iter().any(|r| !r.completed())
    }
}

fn run_one(orch: &Orchestrator, case: &BenchmarkCase, seed: u64) -> RunOutcome {
    let start = Instant::now();
    let result = orch.handle_request(&case.request, seed);
    let duration_ms = start.elapsed().as_millis() as u64;
    match result {
        Ok(ws) => {
            let executed = ws
                .records
                .iter()
                .filter_map(|r| {
                    Some(ExecutedCall {
                        dsm: r.dsm.clone(),
                        command: r.command.clone()?,
                    })
                })
                .collect();
            let cited_payloads = ws
                .answer
                .iter()
                .flat_map(|a| a.cited_records.iter())
                .filter_map(|id| ws.record(id).map(|r| r.payload.clone()))
                .collect();
            let log_file = orch
                .log_path(&ws.request_id)
                .and_then(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()));
            RunOutcome {
                case_id: case.id.clone(),
                seed,
                request_id: Some(ws.request_id.clone()),
                status: ws.status,
                answer: ws.answer,
                executed,
                cited_payloads,
                duration_ms,
                log_file,
                error: ws.reason,
            }
        }
        Err(e) => RunOutcome {
            case_id: case.id.clone(),
            seed,
            request_id: None,
            status: WorkspaceStatus::Incomplete,
            answer: None,
            executed: Vec::new(),
            cited_payloads: Vec::new(),
            duration_ms,
            log_file: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every case once per seed, case-major. Failures are recorded per
/// run and never stop the sweep. With `parallelism > 1` runs execute
/// concurrently; scripted backends that answer by call count should use
/// one worker so the sequence is reproducible.
pub fn run_benchmark(
    orch: &Orchestrator,
    cases: &[BenchmarkCase],
    seeds: &[u64],
    parallelism: usize,
) -> RunSet {
    let jobs: Vec<(&BenchmarkCase, u64)> = cases
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let runs = if parallelism <= 1 {
        jobs.iter().map(|(c, s)| run_one(orch, c, *s)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("thread pool");
        pool.install(|| jobs.par_iter().map(|(c, s)| run_one(orch, c, *s)).collect())
    };
    RunSet {
        backends: orch.backend_names(),
        seeds: seeds.to_vec(),
        runs,
    }
}

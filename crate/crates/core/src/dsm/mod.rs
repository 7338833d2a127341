//! Domain-specific models: manifests, command schemas, workers and the
//! registry the orchestrator dispatches through.

pub mod command;
pub mod grammar;
pub mod manifest;
pub mod organize;
pub mod translate;
pub mod workers;

use std::collections::BTreeMap;
use std::sync::Arc;

use adn_grid::{
    apply_adjustment, parse_case, serialize_case, AdjustError, AdjustmentRequest, CaseError,
    DispatchError, PowerFlowError,
};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::datastore::{DataError, Datastore};
use crate::llm::{ChatBackend, LlmError};
use crate::prompts;
pub use command::{as_record_ref, parse_command, record_ref, resolve_refs, Command, RecordView};
pub use grammar::{parse_instruction, render_instruction, UnparseableInstruction};
pub use manifest::{ArgSpec, ArgType, CommandSpec, DsmManifest, STANDARD_MANIFESTS};
pub use organize::{OrganizeError, Statistic, StatisticKind};

#[derive(Debug, Error)]
pub enum DsmError {
    #[error("bad DSM manifest: {0}")]
    BadManifest(String),
    #[error("DSM `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown DSM `{0}`")]
    Unknown(String),
}

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Adjust(#[from] AdjustError),
    #[error(transparent)]
    Organize(#[from] OrganizeError),
    #[error(transparent)]
    Instruction(#[from] UnparseableInstruction),
    #[error("adjusted model is not a valid case: {0}")]
    FormatInvalid(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerOutput {
    pub payload: Value,
    /// One-line digest shown to later Translators and the Summarizer.
    pub summary: String,
}

pub trait Worker: Send + Sync {
    fn execute(&self, command: &str, args: &Map<String, Value>) -> Result<WorkerOutput, WorkerError>;
}

/// How the model adjustment DSM turns instructions into edited cases.
#[derive(Clone)]
pub enum AdjustMode {
    /// Deterministic grammar plus [`apply_adjustment`].
    Oracle,
    /// A small model rewrites the case text; output is format-checked.
    Slm(Arc<dyn ChatBackend>),
}

impl std::fmt::Debug for AdjustMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdjustMode::Oracle => f.write_str("Oracle"),
            AdjustMode::Slm(b) => write!(f, "Slm({})", b.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustOutput {
    pub case_text: String,
    /// Whether `case_text` parses and validates as a case.
    pub format_ok: bool,
    /// Structured request, when the grammar was used.
    pub request: Option<AdjustmentRequest>,
}

/// Applies a natural-language adjustment to a serialized case.
pub fn model_adjust(
    case_text: &str,
    instruction: &str,
    mode: &AdjustMode,
) -> Result<AdjustOutput, WorkerError> {
    match mode {
        AdjustMode::Oracle => {
            let case = parse_case(case_text)?;
            let request = parse_instruction(instruction)?;
            let adjusted = apply_adjustment(&case, &request)?;
            let text = serialize_case(&adjusted);
            let format_ok = parse_case(&text).is_ok_and(|c| c.validate().is_ok());
            Ok(AdjustOutput {
                case_text: text,
                format_ok,
                request: Some(request),
            })
        }
        AdjustMode::Slm(backend) => {
            let user = format!("## Adjustment\nInstruction: {instruction}\n\n{case_text}");
            let text = backend.ask(prompts::ADJUSTER, &user, None)?;
            let format_ok = parse_case(&text).is_ok_and(|c| c.validate().is_ok());
            Ok(AdjustOutput {
                case_text: text,
                format_ok,
                request: None,
            })
        }
    }
}

pub struct Dsm {
    pub manifest: DsmManifest,
    pub worker: Arc<dyn Worker>,
}

#[derive(Default)]
pub struct DsmRegistry {
    dsms: BTreeMap<String, Dsm>,
    order: Vec<String>,
}

impl DsmRegistry {
    /// The six standard DSMs over `datastore`.
    pub fn standard(datastore: Arc<Datastore>, adjust: AdjustMode) -> Self {
        let workers: [Arc<dyn Worker>; 6] = [
            Arc::new(workers::DataTool(datastore.clone())),
            Arc::new(workers::ModelTool(datastore.clone())),
            Arc::new(workers::SimulationTool(datastore.clone())),
            Arc::new(workers::OptimizationTool(datastore.clone())),
            Arc::new(workers::ResultOrganizationTool(datastore.clone())),
            Arc::new(workers::ModelAdjustment {
                datastore,
                mode: adjust,
            }),
        ];
        let mut reg = Self::default();
        for (text, worker) in STANDARD_MANIFESTS.iter().zip(workers) {
            let manifest = DsmManifest::parse(text).expect("bundled manifest");
            reg.register(manifest, worker).expect("distinct bundled names");
        }
        reg
    }

    pub fn register(&mut self, manifest: DsmManifest, worker: Arc<dyn Worker>) -> Result<(), DsmError> {
        if self.dsms.contains_key(&manifest.name) {
            return Err(DsmError::Duplicate(manifest.name));
        }
        self.order.push(manifest.name.clone());
        self.dsms.insert(manifest.name.clone(), Dsm { manifest, worker });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Dsm> {
        self.dsms.get(name)
    }

    /// Manifests in registration order.
    pub fn manifests(&self) -> Vec<&DsmManifest> {
        self.order.iter().map(|n| &self.dsms[n].manifest).collect()
    }

    pub fn names(&self) -> Vec<&str> {
        self.order.iter().map(String::as_str).collect()
    }

    /// Resolves record references in `cmd` and runs it on the named DSM.
    pub fn execute(
        &self,
        dsm: &str,
        cmd: &Command,
        records: &[RecordView<'_>],
    ) -> Result<WorkerOutput, WorkerError> {
        let d = self
            .get(dsm)
            .ok_or_else(|| WorkerError::BadArgument(format!("unknown DSM `{dsm}`")))?;
        let args = resolve_refs(cmd, records).map_err(WorkerError::BadArgument)?;
        d.worker.execute(&cmd.name, &args)
    }
}

//! Instruction-answer pairs for the model adjustment task: generation,
//! augmentation, three-stage verification and dataset emission.

mod emit;
mod generate;
mod verify;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use emit::{
    emit_dataset, read_dataset, sample_for_inspection, DatasetManifest, TrainerConfig, DATASET_FILE,
    MANIFEST_FILE,
};
pub use generate::{generate_pairs, Generated};
pub use verify::{verify_llm, verify_pair, verify_regex, verify_rule, Stage, Verdict};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("malformed template file: {0}")]
    BadTemplate(String),
    #[error("pair {0} has not passed every verification stage")]
    Unverified(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    LoadVariation,
    EquipmentSwitching,
    NewPv,
    TopologyReconfiguration,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::LoadVariation => "load_variation",
            Scenario::EquipmentSwitching => "equipment_switching",
            Scenario::NewPv => "new_pv",
            Scenario::TopologyReconfiguration => "topology_reconfiguration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Fewshot,
    Llm,
    Perturbation,
    Synonym,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Fewshot => "fewshot",
            Origin::Llm => "llm",
            Origin::Perturbation => "perturbation",
            Origin::Synonym => "synonym",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    /// Scale factors and MW deltas are multiplied by a draw from
    /// `[1 - spread, 1 + spread]`.
    #[serde(default = "default_spread")]
    pub scale_spread: f64,
    #[serde(default = "default_cap_min")]
    pub capacity_min_mw: f64,
    #[serde(default = "default_cap_max")]
    pub capacity_max_mw: f64,
}

fn default_spread() -> f64 {
    0.3
}
fn default_cap_min() -> f64 {
    0.1
}
fn default_cap_max() -> f64 {
    2.0
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            scale_spread: default_spread(),
            capacity_min_mw: default_cap_min(),
            capacity_max_mw: default_cap_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationTemplate {
    pub scenario: Scenario,
    /// Generator prompt; `{scenario}`, `{case_name}` and `{examples}` are
    /// filled in.
    pub prompt: String,
    /// Expert-written instructions; their answers come from the oracle.
    pub fewshot: Vec<String>,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    /// Word to in-grammar alternatives.
    #[serde(default)]
    pub synonyms: BTreeMap<String, Vec<String>>,
}

pub fn load_templates(path: &Path) -> Result<Vec<GenerationTemplate>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| PipelineError::BadTemplate(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionAnswerPair {
    pub scenario: Scenario,
    pub origin: Origin,
    pub instruction: String,
    pub input_case: String,
    pub answer_case: String,
    /// Stage verdicts in the order they ran.
    #[serde(default)]
    pub verdicts: Vec<Verdict>,
}

impl InstructionAnswerPair {
    /// True when all three stages ran and passed.
    pub fn accepted(&self) -> bool {
        self.verdicts.len() == 3 && self.verdicts.iter().all(|v| v.passed)
    }

    /// First failing stage, if any.
    pub fn rejected_at(&self) -> Option<Stage> {
        self.verdicts.iter().find(|v| !v.passed).map(|v| v.stage)
    }
}

//! Dataset emission, trainer manifest and seeded inspection samples.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use adn_grid::parse_case;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{InstructionAnswerPair, PipelineError};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Settings forwarded to an external LoRA trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub base_model: String,
    pub generation_model: String,
    pub verification_model: String,
    pub samples: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub scheduler: String,
    pub lora_alpha: u32,
    pub lora_rank: u32,
}

impl TrainerConfig {
    pub fn with_samples(samples: usize) -> Self {
        Self {
            base_model: "qwen3-8b".into(),
            generation_model: "qwen-plus".into(),
            verification_model: "qwen-max".into(),
            samples,
            batch_size: 16,
            learning_rate: 3.0e-4,
            scheduler: "linear".into(),
            lora_alpha: 16,
            lora_rank: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub total_pairs: usize,
    pub emitted: usize,
    pub by_scenario: BTreeMap<String, usize>,
    pub by_origin: BTreeMap<String, usize>,
    /// Rejections keyed by the stage that failed.
    pub rejected: BTreeMap<String, usize>,
    pub trainer: TrainerConfig,
}

/// Writes accepted pairs as `{instruction, input, output}` lines plus a
/// manifest into `dir`. Every pair must carry verdicts; rejected pairs are
/// counted, not written.
pub fn emit_dataset(
    pairs: &[InstructionAnswerPair],
    dir: &Path,
) -> Result<DatasetManifest, PipelineError> {
    if let Some(i) = pairs
        .iter()
        .position(|p| !p.accepted() && p.rejected_at().is_none())
    {
        return Err(PipelineError::Unverified(i));
    }
    std::fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join(DATASET_FILE))?);
    let mut by_scenario = BTreeMap::new();
    let mut by_origin = BTreeMap::new();
    let mut rejected = BTreeMap::new();
    let mut emitted = 0;
    for p in pairs {
        if let Some(stage) = p.rejected_at() {
            *rejected.entry(stage.as_str().to_string()).or_insert(0) += 1;
            continue;
        }
        let line = json!({
            "instruction": p.instruction,
            "input": p.input_case,
            "output": p.answer_case,
        });
        writeln!(out, "{line}")?;
        *by_scenario.entry(p.scenario.as_str().to_string()).or_insert(0) += 1;
        *by_origin.entry(p.origin.as_str().to_string()).or_insert(0) += 1;
        emitted += 1;
    }
    out.flush()?;
    let manifest = DatasetManifest {
        total_pairs: pairs.len(),
        emitted,
        by_scenario,
        by_origin,
        rejected,
        trainer: TrainerConfig::with_samples(emitted),
    };
    std::fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

/// Reads an emitted dataset back as `(instruction, input, output)` triples.
pub fn read_dataset(path: &Path) -> Result<Vec<(String, String, String)>, PipelineError> {
    #[derive(Deserialize)]
    struct Line {
        instruction: String,
        input: String,
        output: String,
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let r: Line = serde_json::from_str(l)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            Ok((r.instruction, r.input, r.output))
        })
        .collect()
}

/// Seeded uniform sample of `k` pairs rendered for a human reviewer: the
/// instruction and the field changes from input to answer.
pub fn sample_for_inspection(pairs: &[InstructionAnswerPair], k: usize, seed: u64) -> String {
    let k = k.min(pairs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, pairs.len(), k).into_vec();
    idx.sort_unstable();
    let mut out = String::new();
    for i in idx {
        let p = &pairs[i];
        out.push_str(&format!(
            "## Pair {i} ({}, {})\nInstruction: {}\n",
            p.scenario.as_str(),
            p.origin.as_str(),
            p.instruction
        ));
        match (parse_case(&p.input_case), parse_case(&p.answer_case)) {
            (Ok(a), Ok(b)) => {
                let diff = a.diff(&b);
                if diff.is_empty() {
                    out.push_str("  (no changes)\n");
                }
                for d in diff {
                    out.push_str(&format!("  - {d}\n"));
                }
            }
            _ => out.push_str("  (answer is not a valid case)\n"),
        }
        out.push('\n');
    }
    out
}

//! Pair generation: few-shot seeds, language-model drafts, parameter
//! perturbation and synonym replacement.

use adn_grid::{
    apply_adjustment, serialize_case, AdjustmentRequest, BranchRef, BranchSwitch, BusKind,
    GridCase, LoadChange,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{GenerationTemplate, InstructionAnswerPair, Origin, Scenario};
use crate::dsm::{parse_instruction, render_instruction};
use crate::llm::ChatBackend;

const MAX_DRAWS: usize = 64;

const GENERATOR: &str = "You write instruction-answer pairs for a network model editing task. The answer is the complete adjusted model in MATPOWER case format with no other text.";

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub pairs: Vec<InstructionAnswerPair>,
    /// Slots lost to backend failures or unusable drafts.
    pub warnings: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Draft {
    instruction: String,
    answer: String,
}

fn oracle_pair(
    case: &GridCase,
    scenario: Scenario,
    origin: Origin,
    instruction: &str,
) -> Option<InstructionAnswerPair> {
    let req = parse_instruction(instruction).ok()?;
    let answer = apply_adjustment(case, &req).ok()?;
    Some(InstructionAnswerPair {
        scenario,
        origin,
        instruction: instruction.to_string(),
        input_case: serialize_case(case),
        answer_case: serialize_case(&answer),
        verdicts: Vec::new(),
    })
}

fn load_buses(case: &GridCase) -> Vec<u32> {
    case.buses()
        .iter()
        .filter(|b| b.kind != BusKind::Slack && b.p_demand > 0.0)
        .map(|b| b.id)
        .collect()
}

fn endpoints(case: &GridCase, k: usize) -> BranchRef {
    let b = &case.branches()[k];
    BranchRef::Endpoints(b.from_bus, b.to_bus)
}

/// Draws a new request of the same kind as `base`; `None` if no valid
/// draw was found.
fn perturb(
    base: &AdjustmentRequest,
    case: &GridCase,
    t: &GenerationTemplate,
    rng: &mut ChaCha8Rng,
) -> Option<AdjustmentRequest> {
    let spread = t.perturbation.scale_spread;
    let buses = load_buses(case);
    let n_branches = case.branches().len();
    for _ in 0..MAX_DRAWS {
        let req = match base {
            AdjustmentRequest::LoadVariation { change, .. } => {
                let bus = *buses.choose(rng)?;
                let m = rng.random_range(1.0 - spread..=1.0 + spread);
                let change = match *change {
                    LoadChange::Scale(f) => LoadChange::Scale(f * m),
                    LoadChange::DeltaMw(d) => LoadChange::DeltaMw(d * m),
                };
                AdjustmentRequest::LoadVariation { bus, change }
            }
            AdjustmentRequest::EquipmentSwitching { .. } => {
                let k = rng.random_range(0..n_branches);
                AdjustmentRequest::EquipmentSwitching {
                    branch: endpoints(case, k),
                    in_service: !case.branches()[k].in_service,
                }
            }
            AdjustmentRequest::NewPv { .. } => {
                let ids: Vec<u32> = case
                    .buses()
                    .iter()
                    .filter(|b| b.kind != BusKind::Slack)
                    .map(|b| b.id)
                    .collect();
                let cap = rng.random_range(
                    t.perturbation.capacity_min_mw..=t.perturbation.capacity_max_mw,
                );
                AdjustmentRequest::NewPv {
                    bus: *ids.choose(rng)?,
                    capacity_mw: (cap * 1000.0).round() / 1000.0,
                }
            }
            AdjustmentRequest::TopologyReconfiguration { .. } => {
                let ties: Vec<usize> = (0..n_branches)
                    .filter(|&k| !case.branches()[k].in_service)
                    .collect();
                let closed: Vec<usize> = (0..n_branches)
                    .filter(|&k| case.branches()[k].in_service)
                    .collect();
                let close = *ties.choose(rng)?;
                let open = *closed.choose(rng)?;
                AdjustmentRequest::TopologyReconfiguration {
                    switches: vec![
                        BranchSwitch {
                            branch: endpoints(case, close),
                            in_service: true,
                        },
                        BranchSwitch {
                            branch: endpoints(case, open),
                            in_service: false,
                        },
                    ],
                }
            }
        };
        if apply_adjustment(case, &req).is_ok() {
            return Some(req);
        }
    }
    None
}

/// Replaces one whole word that has synonyms; the result must stay in the
/// grammar and mean the same request.
fn synonymize(text: &str, t: &GenerationTemplate, rng: &mut ChaCha8Rng) -> Option<String> {
    let words: Vec<&str> = text.split(' ').collect();
    let candidates: Vec<usize> = (0..words.len())
        .filter(|&i| t.synonyms.contains_key(&words[i].to_lowercase()))
        .collect();
    let original = parse_instruction(text).ok()?;
    for _ in 0..MAX_DRAWS {
        let &i = candidates.choose(rng)?;
        let alt = t.synonyms[&words[i].to_lowercase()].choose(rng)?;
        let mut out = words.clone();
        out[i] = alt;
        let s = out.join(" ");
        if parse_instruction(&s).ok().as_ref() == Some(&original) {
            return Some(s);
        }
    }
    None
}

fn llm_prompt(t: &GenerationTemplate, case: &GridCase) -> String {
    let examples: Vec<String> = t.fewshot.iter().map(|e| format!("- {e}")).collect();
    t.prompt
        .replace("{scenario}", t.scenario.as_str())
        .replace("{case_name}", case.name())
        .replace("{examples}", &examples.join("\n"))
}

/// Generates `count` pairs over `case`. Few-shot seeds come first; the
/// remaining slots rotate through language-model drafts (when a backend
/// is given), perturbations and synonym variants. Deterministic for a
/// fixed template, seed and scripted backend.
pub fn generate_pairs(
    t: &GenerationTemplate,
    case: &GridCase,
    count: usize,
    backend: Option<&dyn ChatBackend>,
    seed: u64,
) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<InstructionAnswerPair> = Vec::with_capacity(count);
    let mut warnings = 0;
    let seeds: Vec<InstructionAnswerPair> = t
        .fewshot
        .iter()
        .filter_map(|f| oracle_pair(case, t.scenario, Origin::Fewshot, f))
        .collect();
    warnings += t.fewshot.len() - seeds.len();
    let bases: Vec<AdjustmentRequest> = seeds
        .iter()
        .filter_map(|p| parse_instruction(&p.instruction).ok())
        .collect();
    let mut rotation = vec![Origin::Perturbation, Origin::Synonym];
    if backend.is_some() {
        rotation.insert(0, Origin::Llm);
    }
    let prompt = llm_prompt(t, case);
    for slot in 0..count {
        if slot < seeds.len() {
            pairs.push(seeds[slot].clone());
            continue;
        }
        let origin = rotation[(slot - seeds.len()) % rotation.len()];
        let pair = match origin {
            Origin::Llm => backend.and_then(|b| {
                let user = format!("{prompt}\n\n## Generate pair {slot}");
                let raw = b.ask(GENERATOR, &user, Some(seed)).ok()?;
                let d: Draft = serde_json::from_str(raw.trim()).ok()?;
                Some(InstructionAnswerPair {
                    scenario: t.scenario,
                    origin,
                    instruction: d.instruction,
                    input_case: serialize_case(case),
                    answer_case: d.answer,
                    verdicts: Vec::new(),
                })
            }),
            Origin::Perturbation => bases.choose(&mut rng).and_then(|base| {
                let req = perturb(base, case, t, &mut rng)?;
                // The answer is re-derived from the rendered text, so the
                // pair is consistent even where rendering rounds.
                oracle_pair(case, t.scenario, origin, &render_instruction(&req))
            }),
            Origin::Synonym => {
                let pool: Vec<&InstructionAnswerPair> = pairs
                    .iter()
                    .filter(|p| matches!(p.origin, Origin::Fewshot | Origin::Perturbation))
                    .collect();
                pool.choose(&mut rng).copied().cloned().and_then(|p| {
                    let text = synonymize(&p.instruction, t, &mut rng)?;
                    Some(InstructionAnswerPair {
                        origin,
                        instruction: text,
                        verdicts: Vec::new(),
                        ..p
                    })
                })
            }
            Origin::Fewshot => unreachable!("few-shot slots are filled first"),
        };
        match pair {
            Some(p) => pairs.push(p),
            None => warnings += 1,
        }
    }
    Generated { pairs, warnings }
}

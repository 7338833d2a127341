//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use adn_core::datastore::Datastore;
use adn_core::dsm::{AdjustMode, DsmRegistry};
use adn_core::llm::{ChatBackend, Rule, ScriptedBackend, ScriptedSpec};
use adn_core::orchestrator::Orchestrator;
use adn_grid::{parse_case, solve_power_flow, GenKind, GridCase, InjectionProfile, PowerPair};

pub const PEAK_REQUEST: &str = "What is the peak voltage of the Valley District on October 12, 2024?";

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn datastore() -> Arc<Datastore> {
    Arc::new(Datastore::open(&data_dir().join("districts.toml")).expect("shipped registry"))
}

pub fn registry(ds: &Arc<Datastore>) -> Arc<DsmRegistry> {
    Arc::new(DsmRegistry::standard(ds.clone(), AdjustMode::Oracle))
}

pub fn scripted(name: &str, rules: Vec<Rule>) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::new(name, ScriptedSpec { rules }).unwrap())
}

pub fn peak_plan() -> String {
    serde_json::json!({
        "reasoning": "Situation awareness over one day: load the model and the profile, simulate every hour, extract the peak voltage.",
        "category": "situation_awareness",
        "subtasks": [
            {"id": "t1", "dsm": "model_tool", "description": "Extract the grid model of the Valley District.", "depends_on": []},
            {"id": "t2", "dsm": "data_tool", "description": "Extract the valley profile for 2024-10-12.", "depends_on": []},
            {"id": "t3", "dsm": "simulation_tool", "description": "Simulate power flow using the model from t1 and data from t2.", "depends_on": ["t1", "t2"]},
            {"id": "t4", "dsm": "result_organization_tool", "description": "Compute the peak voltage from the t3 results.", "depends_on": ["t3"]}
        ]
    })
    .to_string()
}

/// Translator rules for the four peak-voltage subtasks.
pub fn peak_translator_rules() -> Vec<Rule> {
    vec![
        Rule::pattern(
            r"Task: Extract the grid model of the (\w+) District",
            vec![r#"{"name": "get_model", "args": {"district": "${1}"}}"#.into()],
        ),
        Rule::pattern(
            r"Task: Extract the (\w+) profile for ([0-9-]+)",
            vec![r#"{"name": "get_profile", "args": {"district": "${1}", "date": "${2}"}}"#.into()],
        ),
        Rule::contains(
            "Task: Simulate power flow using the model from t1 and data from t2",
            vec![r#"{"name": "simulate", "args": {"case": {"$ref": "t1"}, "profile": {"$ref": "t2"}}}"#.into()],
        ),
        Rule::contains(
            "Task: Compute the peak voltage from the t3 results",
            vec![r#"{"name": "organize", "args": {"kind": "peak_voltage", "source": {"$ref": "t3"}}}"#.into()],
        ),
    ]
}

/// Answers with the summary of the last record, citing it.
pub fn summarizer_rule() -> Rule {
    Rule::pattern(
        r"- (t\d+) \([a-z_]+, (?:done|failed)\): ([^\n]*)$",
        vec![r#"{"answer": "${1}: ${2}", "cited_records": ["${1}"]}"#.into()],
    )
}

pub struct Backends {
    pub planner: Arc<ScriptedBackend>,
    pub translator: Arc<ScriptedBackend>,
    pub summarizer: Arc<ScriptedBackend>,
}

pub fn orchestrator_with(
    planner: Vec<Rule>,
    translator: Vec<Rule>,
    summarizer: Vec<Rule>,
) -> (Orchestrator, Backends) {
    let ds = datastore();
    let b = Backends {
        planner: scripted("planner", planner),
        translator: scripted("translator", translator),
        summarizer: scripted("summarizer", summarizer),
    };
    let orch = Orchestrator::new(
        registry(&ds),
        ds,
        b.planner.clone() as Arc<dyn ChatBackend>,
        b.translator.clone() as Arc<dyn ChatBackend>,
        b.summarizer.clone() as Arc<dyn ChatBackend>,
    );
    (orch, b)
}

pub fn peak_orchestrator() -> (Orchestrator, Backends) {
    orchestrator_with(
        vec![Rule::contains("peak voltage of the Valley District", vec![peak_plan()])],
        peak_translator_rules(),
        vec![summarizer_rule()],
    )
}

/// Profile rows read straight from a fixture CSV: (pv_mw, load_mult).
pub fn read_fixture_rows(path: &Path) -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.trim().parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect()
}

/// Injection for one fixture row built directly from the case tables:
/// demands scaled by the multiplier, PV shared pro rata to ratings.
pub fn harness_injection(case: &GridCase, pv_mw: f64, load_mult: f64) -> InjectionProfile {
    let mut inj = InjectionProfile::default();
    for b in case.buses() {
        inj.bus_demand.insert(
            b.id,
            PowerPair {
                p: b.p_demand * load_mult,
                q: b.q_demand * load_mult,
            },
        );
    }
    let pv: Vec<usize> = (0..case.generators().len())
        .filter(|&k| case.generators()[k].kind == GenKind::Pv && case.generators()[k].in_service)
        .collect();
    let total: f64 = pv.iter().map(|&k| case.generators()[k].p_max).sum();
    for k in pv {
        let g = &case.generators()[k];
        inj.generator_setpoints.insert(
            k,
            PowerPair {
                p: (pv_mw * g.p_max / total).min(g.p_max),
                q: 0.0,
            },
        );
    }
    inj
}

/// Peak |V| over the day on the valley fixture, by direct power flow.
/// Returns (value, bus id, hour).
pub fn harness_peak_voltage() -> (f64, u32, usize) {
    let dir = data_dir();
    let case = parse_case(&std::fs::read_to_string(dir.join("cases/valley33.m")).unwrap()).unwrap();
    let rows = read_fixture_rows(&dir.join("profiles/valley/2024-10-12.csv"));
    let mut best = (f64::MIN, 0, 0);
    for (h, (pv, load)) in rows.into_iter().enumerate() {
        let res = solve_power_flow(&case, &harness_injection(&case, pv, load)).unwrap();
        for (i, &v) in res.vm.iter().enumerate() {
            if v > best.0 {
                best = (v, res.bus_ids[i], h);
            }
        }
    }
    best
}

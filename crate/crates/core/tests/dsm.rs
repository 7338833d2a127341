mod common;

use std::collections::HashSet;
use std::sync::Arc;

use adn_core::dsm::command::{parse_command, validate_command, RecordView};
use adn_core::dsm::organize::{organize, SimulatedStep, SimulationPayload};
use adn_core::dsm::translate::translate;
use adn_core::dsm::{
    model_adjust, AdjustMode, DsmError, DsmManifest, DsmRegistry, Statistic, StatisticKind,
    WorkerError, STANDARD_MANIFESTS,
};
use adn_core::llm::{ChatBackend, Rule};
use adn_grid::{
    apply_adjustment, parse_case, serialize_case, solve_dispatch, solve_power_flow, BranchRef,
    DispatchProblem, GridCase, LoadChange, Objective, PowerFlowError,
};
use chrono::NaiveDate;
use common::*;
use proptest::prelude::*;
use serde_json::{json, Value};

fn manifest(name: &str) -> DsmManifest {
    STANDARD_MANIFESTS
        .iter()
        .map(|t| DsmManifest::parse(t).unwrap())
        .find(|m| m.name == name)
        .unwrap()
}

fn valley_case() -> GridCase {
    parse_case(&std::fs::read_to_string(data_dir().join("cases/valley33.m")).unwrap()).unwrap()
}

fn oct12() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 10, 12).unwrap()
}

#[test]
fn standard_registry_exposes_six_dsms() {
    let ds = datastore();
    let reg = registry(&ds);
    assert_eq!(
        reg.names(),
        [
            "data_tool",
            "model_tool",
            "simulation_tool",
            "optimization_tool",
            "result_organization_tool",
            "model_adjustment"
        ]
    );
    for m in reg.manifests() {
        assert!(!m.commands.is_empty());
        assert!(!m.functionality.is_empty());
        let text = m.describe();
        for c in &m.commands {
            assert!(text.contains(&c.signature()));
        }
    }
    assert_eq!(
        manifest("simulation_tool").commands[0].signature(),
        "simulate(case: case, profile?: profile, hour?: integer)"
    );
}

#[test]
fn duplicate_and_empty_manifests_are_rejected() {
    let ds = datastore();
    let mut reg = DsmRegistry::standard(ds.clone(), AdjustMode::Oracle);
    let worker = Arc::new(adn_core::dsm::workers::ModelTool(ds));
    assert!(matches!(
        reg.register(manifest("model_tool"), worker),
        Err(DsmError::Duplicate(_))
    ));
    let empty = r#"{"name": "x", "functionality": "f", "commands": []}"#;
    assert!(DsmManifest::parse(empty).is_err());
    assert!(DsmManifest::parse(r#"{"name": "x"}"#).is_err());
}

#[test]
fn translate_normalizes_district_arguments() {
    let ds = datastore();
    let backend = scripted(
        "translator",
        vec![Rule::pattern(
            r"Task: extract the grid model of the (.+)\n",
            vec![r#"{"name": "get_model", "args": {"district": "${1}"}}"#.into()],
        )],
    );
    let cmd = translate(
        backend.as_ref(),
        &manifest("model_tool"),
        &ds,
        "t1",
        "extract the grid model of the Valley District",
        &[],
        None,
        |_| {},
    )
    .unwrap();
    assert_eq!(cmd.name, "get_model");
    assert_eq!(cmd.args["district"], "valley");
}

#[test]
fn translate_binds_record_references() {
    let ds = datastore();
    let model = json!({"case": serialize_case(&valley_case())});
    let profile = serde_json::to_value(&*ds.get_profile("valley", oct12()).unwrap()).unwrap();
    let records = [
        RecordView { id: "t1", dsm: "model_tool", summary: "model", payload: &model },
        RecordView { id: "t2", dsm: "data_tool", summary: "profile", payload: &profile },
    ];
    let backend = scripted(
        "translator",
        vec![Rule::contains(
            "using the model from t1 and data from t2",
            vec![r#"{"name": "simulate", "args": {"case": {"$ref": "t1"}, "profile": {"$ref": "t2"}}}"#.into()],
        )],
    );
    let cmd = translate(
        backend.as_ref(),
        &manifest("simulation_tool"),
        &ds,
        "t3",
        "simulate power flow using the model from t1 and data from t2",
        &records,
        None,
        |_| {},
    )
    .unwrap();
    assert_eq!(cmd.args["case"], json!({"$ref": "t1"}));
    assert_eq!(cmd.args["profile"], json!({"$ref": "t2"}));
}

#[test]
fn translate_gives_up_after_three_attempts() {
    let ds = datastore();
    let backend = scripted(
        "translator",
        vec![Rule::contains("", vec![r#"{"name": "teleport", "args": {}}"#.into()])],
    );
    let mut attempts = Vec::new();
    let err = translate(
        backend.as_ref(),
        &manifest("model_tool"),
        &ds,
        "t1",
        "load valley",
        &[],
        None,
        |a| attempts.push(a.clone()),
    )
    .unwrap_err();
    assert!(err[0].contains("unknown command `teleport`"));
    assert_eq!(attempts.len(), 3);
    assert_eq!(backend.calls(), 3);
    assert!(attempts.iter().all(|a| !a.errors.is_empty()));
}

#[test]
fn command_validation_lists_every_problem() {
    let ds = datastore();
    let m = manifest("optimization_tool");
    let errs = parse_command(
        r#"{"name": "optimize", "args": {"case": "atlantis", "objective": "max_profit", "hour": -1, "colour": 1}}"#,
        &m,
        &ds,
        &[],
    )
    .unwrap_err();
    assert_eq!(errs.len(), 4, "{errs:?}");
    let profile_as_text =
        parse_command(r#"{"name": "optimize", "args": {"case": "valley", "objective": "min_cost", "profile": "today"}}"#, &m, &ds, &[]);
    assert!(profile_as_text.is_err());
    let dangling = parse_command(
        r#"{"name": "optimize", "args": {"case": {"$ref": "t9"}, "objective": "min_cost"}}"#,
        &m,
        &ds,
        &[],
    );
    assert!(dangling.unwrap_err()[0].contains("t9"));
    // A reference whose record holds no model is rejected for `case`.
    let stat = json!({"kind": "peak_voltage", "value": 1.0});
    let recs = [RecordView { id: "t1", dsm: "result_organization_tool", summary: "", payload: &stat }];
    assert!(parse_command(
        r#"{"name": "optimize", "args": {"case": {"$ref": "t1"}, "objective": "min_cost"}}"#,
        &m,
        &ds,
        &recs
    )
    .is_err());
}

fn arg_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(json!("valley")),
        Just(json!("atlantis")),
        Just(json!("2024-10-12")),
        Just(json!("min_cost")),
        Just(json!("peak_voltage")),
        Just(json!(12)),
        Just(json!(-3)),
        Just(json!(1.5)),
        Just(json!(null)),
        Just(json!({"$ref": "t1"})),
        Just(json!({"$ref": "t7"})),
        Just(json!({"$ref": "t1", "extra": 1})),
        Just(json!("increase the load at bus 5 by 10%")),
    ]
}

fn arg_name() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("district"), Just("date"), Just("case"), Just("profile"), Just("hour"),
        Just("objective"), Just("kind"), Just("source"), Just("instruction"), Just("bogus"),
    ]
    .prop_map(str::to_string)
}

fn command_name() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("get_profile"), Just("get_model"), Just("simulate"), Just("optimize"),
        Just("organize"), Just("adjust"), Just("launch"),
    ]
    .prop_map(str::to_string)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// Anything accepted conforms to the schema: known name, known argument
    /// names, every required argument present, references only to records
    /// in context.
    #[test]
    fn schema_firewall(
        name in command_name(),
        args in prop::collection::btree_map(arg_name(), arg_value(), 0..5),
        dsm in 0usize..6,
    ) {
        let ds = datastore();
        let m = DsmManifest::parse(STANDARD_MANIFESTS[dsm]).unwrap();
        let model = json!({"case": serialize_case(&valley_case()), "pv": [], "load": []});
        let recs = [RecordView { id: "t1", dsm: "model_tool", summary: "", payload: &model }];
        let raw = json!({"name": name, "args": args}).to_string();
        if let Ok(cmd) = parse_command(&raw, &m, &ds, &recs) {
            let spec = m.command(&cmd.name).expect("known command");
            for (k, v) in &cmd.args {
                let arg = spec.arg(k).expect("known argument");
                if let Some(obj) = v.as_object() {
                    prop_assert!(arg.ty.takes_reference());
                    prop_assert_eq!(obj.len(), 1);
                    prop_assert_eq!(obj["$ref"].as_str(), Some("t1"));
                }
            }
            for a in spec.args.iter().filter(|a| a.required) {
                prop_assert!(cmd.args.contains_key(&a.name));
            }
            prop_assert!(validate_command(&cmd, &m, &ds, &recs).is_empty());
        }
    }
}

#[test]
fn get_profile_returns_the_fixture() {
    let ds = datastore();
    let reg = registry(&ds);
    let raw = r#"{"name": "get_profile", "args": {"district": "valley", "date": "2024-10-12"}}"#;
    let cmd = parse_command(raw, &manifest("data_tool"), &ds, &[]).unwrap();
    let out = reg.execute("data_tool", &cmd, &[]).unwrap();
    let rows = read_fixture_rows(&data_dir().join("profiles/valley/2024-10-12.csv"));
    let pv: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let load: Vec<f64> = rows.iter().map(|r| r.1).collect();
    assert_eq!(out.payload["pv"], json!(pv));
    assert_eq!(out.payload["load"], json!(load));
    assert!(out.summary.contains("peak PV 1.489 MW at hour 12"), "{}", out.summary);
}

#[test]
fn simulation_matches_direct_power_flow() {
    let ds = datastore();
    let reg = registry(&ds);
    let case = valley_case();
    let model = reg
        .execute("model_tool", &parse_command(r#"{"name": "get_model", "args": {"district": "valley"}}"#, &manifest("model_tool"), &ds, &[]).unwrap(), &[])
        .unwrap();
    assert_eq!(model.payload["buses"], 33);
    assert_eq!(model.payload["in_service_branches"], 32);
    let profile = serde_json::to_value(&*ds.get_profile("valley", oct12()).unwrap()).unwrap();
    let recs = [
        RecordView { id: "t1", dsm: "model_tool", summary: "", payload: &model.payload },
        RecordView { id: "t2", dsm: "data_tool", summary: "", payload: &profile },
    ];
    let raw = r#"{"name": "simulate", "args": {"case": {"$ref": "t1"}, "profile": {"$ref": "t2"}, "hour": 13}}"#;
    let cmd = parse_command(raw, &manifest("simulation_tool"), &ds, &recs).unwrap();
    let out = reg.execute("simulation_tool", &cmd, &recs).unwrap();
    let sim: SimulationPayload = serde_json::from_value(out.payload).unwrap();
    let rows = read_fixture_rows(&data_dir().join("profiles/valley/2024-10-12.csv"));
    let direct = solve_power_flow(&case, &harness_injection(&case, rows[13].0, rows[13].1)).unwrap();
    assert_eq!(sim.steps.len(), 1);
    assert_eq!(sim.steps[0].step, 13);
    assert_eq!(sim.steps[0].vm, direct.vm);
    assert_eq!(sim.steps[0].losses_mw, direct.losses_mw);
    let loading: Vec<f64> = direct.branches.iter().map(|b| b.loading).collect();
    assert_eq!(sim.steps[0].loading, loading);
    assert_eq!(sim.bus_ids, direct.bus_ids);
}

#[test]
fn optimization_matches_direct_dispatch() {
    let ds = datastore();
    let reg = registry(&ds);
    let case = valley_case();
    let profile = serde_json::to_value(&*ds.get_profile("valley", oct12()).unwrap()).unwrap();
    let recs = [RecordView { id: "t2", dsm: "data_tool", summary: "", payload: &profile }];
    let raw = r#"{"name": "optimize", "args": {"case": "Valley", "profile": {"$ref": "t2"}, "objective": "min_power_loss", "hour": 12}}"#;
    let cmd = parse_command(raw, &manifest("optimization_tool"), &ds, &recs).unwrap();
    assert_eq!(cmd.args["case"], "valley");
    let out = reg.execute("optimization_tool", &cmd, &recs).unwrap();
    let rows = read_fixture_rows(&data_dir().join("profiles/valley/2024-10-12.csv"));
    let problem = DispatchProblem::new(
        case.clone(),
        vec![harness_injection(&case, rows[12].0, rows[12].1)],
        Objective::MinPowerLoss,
    );
    let direct = solve_dispatch(&problem).unwrap();
    assert_eq!(out.payload["strategy"], serde_json::to_value(&direct).unwrap());
    assert_eq!(out.payload["steps"], json!([12]));
}

#[test]
fn non_radial_case_surfaces_worker_error() {
    let ds = datastore();
    let reg = registry(&ds);
    let case = valley_case();
    let mut branches = case.branches().to_vec();
    let tie = branches.iter().position(|b| !b.in_service).unwrap();
    branches[tie].in_service = true;
    let meshed = GridCase::new(case.name(), case.base_mva(), case.buses().to_vec(), branches, case.generators().to_vec()).unwrap();
    let payload = json!({"case": serialize_case(&meshed)});
    let recs = [RecordView { id: "t1", dsm: "model_adjustment", summary: "", payload: &payload }];
    let cmd = parse_command(r#"{"name": "simulate", "args": {"case": {"$ref": "t1"}}}"#, &manifest("simulation_tool"), &ds, &recs).unwrap();
    let err = reg.execute("simulation_tool", &cmd, &recs).unwrap_err();
    assert!(matches!(err, WorkerError::PowerFlow(PowerFlowError::NotRadial(_))), "{err}");
}

fn sim_payload(vm_steps: Vec<Vec<f64>>, loading: Vec<Vec<f64>>, load: Vec<f64>) -> Value {
    let steps = vm_steps
        .into_iter()
        .zip(loading)
        .zip(load)
        .enumerate()
        .map(|(k, ((vm, loading), load_mw))| SimulatedStep {
            step: k,
            iterations: 1,
            vm,
            loading,
            losses_mw: 0.01,
            load_mw,
            pv_mw: 0.0,
        })
        .collect();
    serde_json::to_value(SimulationPayload {
        case_name: "c".into(),
        bus_ids: vec![1, 2, 3],
        branches: vec!["1-2".into(), "2-3".into()],
        steps,
    })
    .unwrap()
}

#[test]
fn organize_examples() {
    let p = sim_payload(vec![vec![1.01, 1.06, 0.98]], vec![vec![0.4, 0.9]], vec![3.0]);
    let peak = organize(StatisticKind::PeakVoltage, &p, None).unwrap();
    assert_eq!((peak.value, peak.bus), (1.06, Some(2)));
    assert_eq!(peak.summary(), "peak voltage = 1.060 p.u. at bus 2 (hour 0)");
    let low = organize(StatisticKind::MinVoltage, &p, None).unwrap();
    assert_eq!((low.value, low.bus), (0.98, Some(3)));
    let cong = organize(StatisticKind::MostCongestedBranch, &p, None).unwrap();
    assert_eq!((cong.value, cong.branch.as_deref()), (0.9, Some("2-3")));
    assert!(organize(StatisticKind::ObjectiveValue, &p, None).is_err());
    assert!(organize(StatisticKind::PeakVoltage, &json!({"x": 1}), None).is_err());
    assert!(StatisticKind::parse("median_voltage").is_none());
}

#[test]
fn peak_load_over_a_profile_is_the_brute_force_max() {
    let ds = datastore();
    let case = ds.get_model("railway").unwrap();
    let d = NaiveDate::from_ymd_opt(2024, 1, 17).unwrap();
    let profile = ds.get_profile("railway", d).unwrap();
    let stat = organize(
        StatisticKind::PeakLoad,
        &serde_json::to_value(&*profile).unwrap(),
        Some(&case),
    )
    .unwrap();
    let base: f64 = case.buses().iter().map(|b| b.p_demand).sum();
    let mut best = (0, f64::MIN);
    for (k, m) in profile.load.iter().enumerate() {
        let total = base * m;
        if total > best.1 {
            best = (k, total);
        }
    }
    assert_eq!(stat.step, Some(best.0));
    assert!((stat.value - best.1).abs() < 1e-12);
}

#[test]
fn organize_worker_reports_scalar_and_bus() {
    let ds = datastore();
    let reg = registry(&ds);
    let p = sim_payload(vec![vec![1.0, 1.02, 1.01], vec![1.0, 1.03, 1.03]], vec![vec![0.1, 0.2], vec![0.3, 0.2]], vec![1.0, 2.0]);
    let recs = [RecordView { id: "t3", dsm: "simulation_tool", summary: "", payload: &p }];
    let cmd = parse_command(r#"{"name": "organize", "args": {"kind": "Peak_Voltage", "source": {"$ref": "t3"}}}"#, &manifest("result_organization_tool"), &ds, &recs).unwrap();
    let out = reg.execute("result_organization_tool", &cmd, &recs).unwrap();
    let stat: Statistic = serde_json::from_value(out.payload).unwrap();
    // Ties keep the first occurrence.
    assert_eq!((stat.value, stat.bus, stat.step), (1.03, Some(2), Some(1)));
}

#[test]
fn oracle_adjustment_scales_load() {
    let case = valley_case();
    assert_eq!(case.bus(5).unwrap().p_demand, 0.06);
    let out = model_adjust(&serialize_case(&case), "increase the load at bus 5 by 20%", &AdjustMode::Oracle).unwrap();
    assert!(out.format_ok);
    let adjusted = parse_case(&out.case_text).unwrap();
    assert!((adjusted.bus(5).unwrap().p_demand - 0.072).abs() < 1e-12);
    let diff = case.diff(&adjusted);
    assert_eq!(diff.len(), 2, "{diff:?}");
    assert!(model_adjust(&serialize_case(&case), "make the grid nicer", &AdjustMode::Oracle).is_err());
}

#[test]
fn slm_adjustment_output_is_format_checked() {
    let ds = datastore();
    let case_text = serialize_case(&valley_case());
    let prose: Arc<dyn ChatBackend> = scripted("slm", vec![Rule::contains("## Adjustment", vec!["Sure! Here is the adjusted model.".into()])]);
    let out = model_adjust(&case_text, "open branch 7-8", &AdjustMode::Slm(prose.clone())).unwrap();
    assert!(!out.format_ok);

    let reg = DsmRegistry::standard(ds.clone(), AdjustMode::Slm(prose));
    let cmd = parse_command(r#"{"name": "adjust", "args": {"case": "valley", "instruction": "open branch 7-8"}}"#, &manifest("model_adjustment"), &ds, &[]).unwrap();
    assert!(matches!(reg.execute("model_adjustment", &cmd, &[]), Err(WorkerError::FormatInvalid(_))));

    // A model that answers with a valid case passes the check.
    let truth = apply_adjustment(
        &valley_case(),
        &adn_grid::AdjustmentRequest::EquipmentSwitching { branch: BranchRef::Endpoints(7, 8), in_service: false },
    )
    .unwrap();
    let good: Arc<dyn ChatBackend> = scripted("slm", vec![Rule::contains("## Adjustment", vec![serialize_case(&truth)])]);
    let reg = DsmRegistry::standard(ds.clone(), AdjustMode::Slm(good));
    let out = reg.execute("model_adjustment", &cmd, &[]).unwrap();
    assert_eq!(out.payload["format_ok"], true);
    assert_eq!(parse_case(out.payload["case"].as_str().unwrap()).unwrap(), truth);
}

fn request_strategy() -> impl Strategy<Value = adn_grid::AdjustmentRequest> {
    use adn_grid::AdjustmentRequest as R;
    prop_oneof![
        (2u32..=33, -50i32..=80).prop_map(|(bus, pct)| R::LoadVariation {
            bus,
            change: LoadChange::Scale(1.0 + pct as f64 / 100.0),
        }),
        (2u32..=33, 1u32..=60).prop_map(|(bus, kw)| R::LoadVariation {
            bus,
            change: LoadChange::DeltaMw(kw as f64 / 1000.0),
        }),
        (2u32..=33, 1u32..=20).prop_map(|(bus, c)| R::NewPv { bus, capacity_mw: c as f64 / 10.0 }),
        (1usize..=32).prop_map(|k| R::EquipmentSwitching { branch: BranchRef::Index(k), in_service: false }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Rendering a request, parsing it back and applying it equals applying
    /// the request directly.
    #[test]
    fn oracle_agrees_with_apply_adjustment(req in request_strategy()) {
        let case = valley_case();
        let text = adn_core::dsm::render_instruction(&req);
        let out = model_adjust(&serialize_case(&case), &text, &AdjustMode::Oracle).unwrap();
        prop_assert!(out.format_ok);
        let truth = apply_adjustment(&case, &req).unwrap();
        prop_assert_eq!(parse_case(&out.case_text).unwrap(), truth);
    }
}

#[test]
fn every_worker_rejects_foreign_commands() {
    let ds = datastore();
    let reg = registry(&ds);
    let seen: HashSet<&str> = reg.names().into_iter().collect();
    assert_eq!(seen.len(), 6);
    let cmd = adn_core::dsm::Command { name: "launch".into(), args: Default::default() };
    for name in reg.names() {
        assert!(matches!(reg.execute(name, &cmd, &[]), Err(WorkerError::UnknownCommand(_))));
    }
}

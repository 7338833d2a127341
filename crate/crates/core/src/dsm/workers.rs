//! Workers of the six standard DSMs. Each one is a thin adapter that
//! decodes resolved arguments, calls the underlying module and packs the
//! result as a JSON payload plus a one-line summary.

use std::sync::Arc;

use adn_grid::{
    parse_case, serialize_case, solve_dispatch, solve_power_flow, DispatchProblem, GridCase,
    InjectionProfile, Objective,
};
use serde_json::{json, Map, Value};

use super::organize::{organize, DispatchPayload, SimulatedStep, SimulationPayload, StatisticKind};
use super::{model_adjust, AdjustMode, WorkerError, WorkerOutput};
use crate::datastore::{parse_date, Datastore, DistrictProfile};
use crate::dsm::Worker;

fn bad(msg: impl Into<String>) -> WorkerError {
    WorkerError::BadArgument(msg.into())
}

fn str_arg<'a>(args: &'a Map<String, Value>, name: &str) -> Result<&'a str, WorkerError> {
    args.get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| bad(format!("`{name}` must be a string")))
}

fn case_arg(ds: &Datastore, v: Option<&Value>) -> Result<Arc<GridCase>, WorkerError> {
    match v {
        Some(Value::String(district)) => Ok(ds.get_model(district)?),
        Some(Value::Object(m)) => {
            let text = m
                .get("case")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("record holds no network model"))?;
            Ok(Arc::new(parse_case(text)?))
        }
        _ => Err(bad("`case` is required")),
    }
}

fn profile_arg(v: Option<&Value>) -> Result<Option<DistrictProfile>, WorkerError> {
    v.map(|p| serde_json::from_value(p.clone()).map_err(|e| bad(format!("profile: {e}"))))
        .transpose()
}

fn hour_arg(args: &Map<String, Value>) -> Result<Option<usize>, WorkerError> {
    args.get("hour")
        .map(|h| h.as_u64().map(|h| h as usize).ok_or_else(|| bad("`hour` must be an integer")))
        .transpose()
}

/// Snapshots selected by an optional profile and hour: all profile steps,
/// a single one, or the nominal case when no profile is given.
pub fn snapshots(
    case: &GridCase,
    profile: Option<&DistrictProfile>,
    hour: Option<usize>,
) -> Result<Vec<(usize, InjectionProfile)>, WorkerError> {
    match profile {
        None => Ok(vec![(hour.unwrap_or(0), InjectionProfile::default())]),
        Some(p) => {
            let steps: Vec<usize> = match hour {
                Some(h) if h >= p.resolution => {
                    return Err(bad(format!("hour {h} outside profile of {} steps", p.resolution)))
                }
                Some(h) => vec![h],
                None => (0..p.resolution).collect(),
            };
            Ok(steps.into_iter().map(|s| (s, p.injection(case, s))).collect())
        }
    }
}

pub struct DataTool(pub Arc<Datastore>);

impl Worker for DataTool {
    fn execute(&self, command: &str, args: &Map<String, Value>) -> Result<WorkerOutput, WorkerError> {
        if command != "get_profile" {
            return Err(WorkerError::UnknownCommand(command.into()));
        }
        let date = parse_date(str_arg(args, "date")?)?;
        let profile = self.0.get_profile(str_arg(args, "district")?, date)?;
        let (peak_step, peak) = profile
            .pv
            .iter()
            .enumerate()
            .fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let summary = format!(
            "profile of {} on {}: {} steps, peak PV {:.3} MW at hour {}, load multiplier {:.3}-{:.3}",
            profile.district,
            profile.date,
            profile.resolution,
            peak,
            peak_step,
            profile.load.iter().copied().fold(f64::INFINITY, f64::min),
            profile.load.iter().copied().fold(0.0, f64::max)
        );
        Ok(WorkerOutput {
            payload: serde_json::to_value(&*profile).unwrap(),
            summary,
        })
    }
}

pub struct ModelTool(pub Arc<Datastore>);

pub fn model_payload(district: Option<&str>, case: &GridCase) -> Value {
    json!({
        "district": district,
        "case_name": case.name(),
        "buses": case.buses().len(),
        "branches": case.branches().len(),
        "in_service_branches": case.in_service_branch_count(),
        "generators": case.generators().len(),
        "case": serialize_case(case),
    })
}

impl Worker for ModelTool {
    fn execute(&self, command: &str, args: &Map<String, Value>) -> Result<WorkerOutput, WorkerError> {
        if command != "get_model" {
            return Err(WorkerError::UnknownCommand(command.into()));
        }
        let district = self.0.resolve(str_arg(args, "district")?)?;
        let case = self.0.get_model(&district)?;
        Ok(WorkerOutput {
            payload: model_payload(Some(&district), &case),
            summary: format!(
                "model {} of the {district} district: {} buses, {} branches ({} in service), {} generators",
                case.name(),
                case.buses().len(),
                case.branches().len(),
                case.in_service_branch_count(),
                case.generators().len()
            ),
        })
    }
}

pub struct SimulationTool(pub Arc<Datastore>);

pub fn simulate(
    case: &GridCase,
    profile: Option<&DistrictProfile>,
    hour: Option<usize>,
) -> Result<SimulationPayload, WorkerError> {
    let mut steps = Vec::new();
    for (step, inj) in snapshots(case, profile, hour)? {
        let res = solve_power_flow(case, &inj)?;
        let load_mw = case
            .buses()
            .iter()
            .map(|b| inj.bus_demand.get(&b.id).map_or(b.p_demand, |d| d.p))
            .sum();
        let pv_mw = case
            .generators()
            .iter()
            .enumerate()
            .filter(|(_, g)| g.in_service && g.kind == adn_grid::GenKind::Pv)
            .map(|(k, g)| inj.generator_setpoints.get(&k).map_or(g.p_set, |s| s.p))
            .sum();
        steps.push(SimulatedStep {
            step,
            iterations: res.iterations,
            vm: res.vm,
            loading: res.branches.iter().map(|b| b.loading).collect(),
            losses_mw: res.losses_mw,
            load_mw,
            pv_mw,
        });
    }
    Ok(SimulationPayload {
        case_name: case.name().to_string(),
        bus_ids: case.buses().iter().map(|b| b.id).collect(),
        branches: case.branches().iter().map(|b| b.label()).collect(),
        steps,
    })
}

impl Worker for SimulationTool {
    fn execute(&self, command: &str, args: &Map<String, Value>) -> Result<WorkerOutput, WorkerError> {
        if command != "simulate" {
            return Err(WorkerError::UnknownCommand(command.into()));
        }
        let case = case_arg(&self.0, args.get("case"))?;
        let profile = profile_arg(args.get("profile"))?;
        let sim = simulate(&case, profile.as_ref(), hour_arg(args)?)?;
        let vmax = sim.steps.iter().flat_map(|s| s.vm.iter().copied()).fold(0.0, f64::max);
        let vmin = sim
            .steps
            .iter()
            .flat_map(|s| s.vm.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let losses: f64 = sim.steps.iter().map(|s| s.losses_mw).sum();
        let summary = format!(
            "power flow of {} over {} step(s): |V| {:.3}-{:.3} p.u., losses {:.4} MW summed",
            sim.case_name,
            sim.steps.len(),
            vmin,
            vmax,
            losses
        );
        Ok(WorkerOutput {
            payload: serde_json::to_value(&sim).unwrap(),
            summary,
        })
    }
}

pub struct OptimizationTool(pub Arc<Datastore>);

pub fn optimize(
    case: &GridCase,
    profile: Option<&DistrictProfile>,
    hour: Option<usize>,
    objective: Objective,
) -> Result<DispatchPayload, WorkerError> {
    let snaps = snapshots(case, profile, hour)?;
    let steps: Vec<usize> = snaps.iter().map(|s| s.0).collect();
    let mut problem = DispatchProblem::new(
        case.clone(),
        snaps.into_iter().map(|s| s.1).collect(),
        objective,
    );
    if let Some(p) = profile {
        problem.step_hours = p.step_hours();
    }
    let strategy = solve_dispatch(&problem)?;
    Ok(DispatchPayload {
        case_name: case.name().to_string(),
        steps,
        strategy,
    })
}

impl Worker for OptimizationTool {
    fn execute(&self, command: &str, args: &Map<String, Value>) -> Result<WorkerOutput, WorkerError> {
        if command != "optimize" {
            return Err(WorkerError::UnknownCommand(command.into()));
        }
        let case = case_arg(&self.0, args.get("case"))?;
        let profile = profile_arg(args.get("profile"))?;
        let objective = Objective::parse(str_arg(args, "objective")?)
            .ok_or_else(|| bad("unknown objective"))?;
        let d = optimize(&case, profile.as_ref(), hour_arg(args)?, objective)?;
        let summary = format!(
            "{} dispatch of {} over {} step(s): objective {:.6} {}{}",
            objective.as_str(),
            d.case_name,
            d.steps.len(),
            d.strategy.objective_value,
            d.strategy.unit,
            if d.strategy.feasible { "" } else { " (limits breached in exact check)" }
        );
        Ok(WorkerOutput {
            payload: serde_json::to_value(&d).unwrap(),
            summary,
        })
    }
}

pub struct ResultOrganizationTool(pub Arc<Datastore>);

impl Worker for ResultOrganizationTool {
    fn execute(&self, command: &str, args: &Map<String, Value>) -> Result<WorkerOutput, WorkerError> {
        if command != "organize" {
            return Err(WorkerError::UnknownCommand(command.into()));
        }
        let kind_name = str_arg(args, "kind")?;
        let kind = StatisticKind::parse(kind_name)
            .ok_or_else(|| super::organize::OrganizeError::UnsupportedKind(kind_name.into()))?;
        let source = args.get("source").ok_or_else(|| bad("`source` is required"))?;
        let case = match args.get("case") {
            Some(v) => Some(case_arg(&self.0, Some(v))?),
            None => None,
        };
        let stat = organize(kind, source, case.as_deref())?;
        Ok(WorkerOutput {
            summary: stat.summary(),
            payload: serde_json::to_value(&stat).unwrap(),
        })
    }
}

pub struct ModelAdjustment {
    pub datastore: Arc<Datastore>,
    pub mode: AdjustMode,
}

impl Worker for ModelAdjustment {
    fn execute(&self, command: &str, args: &Map<String, Value>) -> Result<WorkerOutput, WorkerError> {
        if command != "adjust" {
            return Err(WorkerError::UnknownCommand(command.into()));
        }
        let case = case_arg(&self.datastore, args.get("case"))?;
        let instruction = str_arg(args, "instruction")?;
        let out = model_adjust(&serialize_case(&case), instruction, &self.mode)?;
        if !out.format_ok {
            let head: String = out.case_text.chars().take(80).collect();
            return Err(WorkerError::FormatInvalid(head));
        }
        let adjusted = parse_case(&out.case_text)?;
        let changes: Vec<String> = case.diff(&adjusted).into_iter().map(|d| d.field).collect();
        let summary = format!(
            "adjusted {} ({}): {} field(s) changed{}",
            case.name(),
            instruction,
            changes.len(),
            if changes.is_empty() {
                String::new()
            } else {
                format!(" [{}]", changes.join(", "))
            }
        );
        Ok(WorkerOutput {
            payload: json!({
                "case_name": adjusted.name(),
                "case": out.case_text,
                "format_ok": out.format_ok,
                "request": out.request,
                "changes": changes,
            }),
            summary,
        })
    }
}

//! Result organization: one statistic distilled from a simulation,
//! dispatch or profile payload.

use adn_grid::{BusId, DispatchStrategy, GridCase};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::datastore::DistrictProfile;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrganizeError {
    #[error("unsupported statistic `{0}`")]
    UnsupportedKind(String),
    #[error("payload does not fit `{kind}`: {message}")]
    ShapeMismatch { kind: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    PeakVoltage,
    MinVoltage,
    MostCongestedBranch,
    PeakLoad,
    TotalLosses,
    ObjectiveValue,
}

impl StatisticKind {
    pub const NAMES: [&'static str; 6] = [
        "peak_voltage",
        "min_voltage",
        "most_congested_branch",
        "peak_load",
        "total_losses",
        "objective_value",
    ];
    const ALL: [StatisticKind; 6] = [
        StatisticKind::PeakVoltage,
        StatisticKind::MinVoltage,
        StatisticKind::MostCongestedBranch,
        StatisticKind::PeakLoad,
        StatisticKind::TotalLosses,
        StatisticKind::ObjectiveValue,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_lowercase();
        Self::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Self::ALL[i])
    }

    pub fn as_str(self) -> &'static str {
        Self::NAMES[Self::ALL.iter().position(|k| *k == self).unwrap()]
    }
}

/// Power-flow results over the simulated steps, as produced by the
/// simulation tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPayload {
    pub case_name: String,
    pub bus_ids: Vec<BusId>,
    /// Branch labels `from-to` in table order.
    pub branches: Vec<String>,
    pub steps: Vec<SimulatedStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedStep {
    pub step: usize,
    pub iterations: usize,
    pub vm: Vec<f64>,
    pub loading: Vec<f64>,
    pub losses_mw: f64,
    pub load_mw: f64,
    pub pv_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPayload {
    pub case_name: String,
    pub steps: Vec<usize>,
    pub strategy: DispatchStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub kind: StatisticKind,
    pub value: f64,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus: Option<BusId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

impl Statistic {
    fn new(kind: StatisticKind, value: f64, unit: &str) -> Self {
        Self {
            kind,
            value,
            unit: unit.to_string(),
            bus: None,
            branch: None,
            step: None,
        }
    }

    pub fn summary(&self) -> String {
        let label = self.kind.as_str().replace('_', " ");
        let value = if self.unit == "p.u." {
            format!("{:.3}", self.value)
        } else {
            format!("{:.4}", self.value)
        };
        let mut s = format!("{label} = {value} {}", self.unit);
        if let Some(b) = self.bus {
            s.push_str(&format!(" at bus {b}"));
        }
        if let Some(b) = &self.branch {
            s.push_str(&format!(" on branch {b}"));
        }
        if let Some(t) = self.step {
            s.push_str(&format!(" (hour {t})"));
        }
        s
    }
}

enum Source {
    Simulation(SimulationPayload),
    Dispatch(DispatchPayload),
    Profile(DistrictProfile),
}

fn classify(kind: StatisticKind, payload: &Value) -> Result<Source, OrganizeError> {
    let mismatch = |message: String| OrganizeError::ShapeMismatch {
        kind: kind.as_str().into(),
        message,
    };
    if payload.get("steps").is_some() && payload.get("bus_ids").is_some() {
        return serde_json::from_value(payload.clone())
            .map(Source::Simulation)
            .map_err(|e| mismatch(e.to_string()));
    }
    if payload.get("strategy").is_some() {
        return serde_json::from_value(payload.clone())
            .map(Source::Dispatch)
            .map_err(|e| mismatch(e.to_string()));
    }
    if payload.get("pv").is_some() && payload.get("load").is_some() {
        return serde_json::from_value(payload.clone())
            .map(Source::Profile)
            .map_err(|e| mismatch(e.to_string()));
    }
    Err(mismatch("not a simulation, optimization or profile record".into()))
}

/// Index and value of the extreme element; the first one wins ties.
fn extreme(values: impl Iterator<Item = f64>, max: bool) -> Option<(usize, f64)> {
    values.enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if (max && v <= b) || (!max && v >= b) => best,
        _ => Some((i, v)),
    })
}

pub fn organize(
    kind: StatisticKind,
    payload: &Value,
    case: Option<&GridCase>,
) -> Result<Statistic, OrganizeError> {
    let source = classify(kind, payload)?;
    let mismatch = |message: &str| OrganizeError::ShapeMismatch {
        kind: kind.as_str().into(),
        message: message.into(),
    };
    use StatisticKind::*;
    match (kind, source) {
        (PeakVoltage | MinVoltage, Source::Simulation(sim)) => {
            let max = kind == PeakVoltage;
            let mut best: Option<(usize, usize, f64)> = None;
            for (s, step) in sim.steps.iter().enumerate() {
                if let Some((i, v)) = extreme(step.vm.iter().copied(), max) {
                    let better = match best {
                        None => true,
                        Some((_, _, b)) => (max && v > b) || (!max && v < b),
                    };
                    if better {
                        best = Some((s, i, v));
                    }
                }
            }
            let (s, i, v) = best.ok_or_else(|| mismatch("no voltages"))?;
            let mut st = Statistic::new(kind, v, "p.u.");
            st.bus = sim.bus_ids.get(i).copied();
            st.step = Some(sim.steps[s].step);
            Ok(st)
        }
        (PeakVoltage | MinVoltage, Source::Dispatch(d)) => {
            let max = kind == PeakVoltage;
            let values = d.strategy.exact.iter().map(|e| if max { e.max_vm } else { e.min_vm });
            let (s, v) = extreme(values, max).ok_or_else(|| mismatch("no evaluated steps"))?;
            let mut st = Statistic::new(kind, v, "p.u.");
            st.step = d.steps.get(s).copied();
            Ok(st)
        }
        (MostCongestedBranch, Source::Simulation(sim)) => {
            let mut best: Option<(usize, usize, f64)> = None;
            for (s, step) in sim.steps.iter().enumerate() {
                if let Some((k, v)) = extreme(step.loading.iter().copied(), true) {
                    if best.is_none_or(|b| v > b.2) {
                        best = Some((s, k, v));
                    }
                }
            }
            let (s, k, v) = best.ok_or_else(|| mismatch("no branch loadings"))?;
            let mut st = Statistic::new(kind, v, "ratio");
            st.branch = sim.branches.get(k).cloned();
            st.step = Some(sim.steps[s].step);
            Ok(st)
        }
        (PeakLoad, Source::Simulation(sim)) => {
            let (s, v) = extreme(sim.steps.iter().map(|t| t.load_mw), true)
                .ok_or_else(|| mismatch("no steps"))?;
            let mut st = Statistic::new(kind, v, "MW");
            st.step = Some(sim.steps[s].step);
            Ok(st)
        }
        (PeakLoad, Source::Profile(p)) => {
            let case = case.ok_or_else(|| mismatch("a network model is needed for peak_load over a profile"))?;
            let base = case.total_demand().0;
            let (s, v) = extreme(p.load.iter().map(|m| base * m), true)
                .ok_or_else(|| mismatch("empty profile"))?;
            let mut st = Statistic::new(kind, v, "MW");
            st.step = Some(s);
            Ok(st)
        }
        (TotalLosses, Source::Simulation(sim)) => Ok(Statistic::new(
            kind,
            sim.steps.iter().map(|t| t.losses_mw).sum(),
            "MW",
        )),
        (TotalLosses, Source::Dispatch(d)) => Ok(Statistic::new(
            kind,
            d.strategy.exact.iter().map(|e| e.losses_mw).sum(),
            "MW",
        )),
        (ObjectiveValue, Source::Dispatch(d)) => Ok(Statistic::new(
            kind,
            d.strategy.objective_value,
            &d.strategy.unit,
        )),
        (_, _) => Err(mismatch("record type does not provide this statistic")),
    }
}

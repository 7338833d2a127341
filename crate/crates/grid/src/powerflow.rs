//! Forward-backward sweep power flow for radial feeders.
//!
//! Loads are constant power. Generators other than the slack unit act as
//! negative loads at their setpoints. Line charging is split half per
//! terminal and lumped into the bus shunt admittance.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BusId, GenKind, GridCase};
use crate::topology::{RadialTree, RadialityReport};

/// Convergence threshold on the largest complex power mismatch, p.u.
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPair {
    pub p: f64,
    pub q: f64,
}

/// Snapshot overrides. Demands replace the case values at the named buses,
/// setpoints replace those of the indexed generators (0-based).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectionProfile {
    #[serde(default)]
    pub bus_demand: BTreeMap<BusId, PowerPair>,
    #[serde(default)]
    pub generator_setpoints: BTreeMap<usize, PowerPair>,
}

impl InjectionProfile {
    pub fn is_empty(&self) -> bool {
        self.bus_demand.is_empty() && self.generator_setpoints.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Active power entering the branch at `from_bus`, MW.
    pub p_mw: f64,
    /// Reactive power entering the branch at `from_bus`, MVAr.
    pub q_mvar: f64,
    /// Series current magnitude, p.u.
    pub current: f64,
    /// Larger terminal apparent power over the rating; 0 when unrated.
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    pub converged: bool,
    pub iterations: usize,
    /// Bus ids in case order; the vectors below align with it.
    pub bus_ids: Vec<BusId>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// One entry per case branch, in case order; zero for open branches.
    pub branches: Vec<BranchFlow>,
    pub losses_mw: f64,
    pub max_mismatch: f64,
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
}

impl PowerFlowResult {
    pub fn voltage_at(&self, bus: BusId) -> Option<f64> {
        self.bus_ids
            .iter()
            .position(|&b| b == bus)
            .map(|i| self.vm[i])
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("network is not radial: {} island(s), {} loop(s)", .0.islands.len(), .0.loops.len())]
    NotRadial(RadialityReport),
    #[error("power flow did not converge in {} iterations (mismatch {:.3e} p.u.)", .0.iterations, .0.max_mismatch)]
    NotConverged(Box<PowerFlowResult>),
    #[error("invalid injection: {0}")]
    InvalidInjection(String),
    #[error("refusing to judge an unconverged power flow")]
    Unconverged,
}

/// Net demand (load minus non-slack generation) per bus, p.u.
fn net_demand(case: &GridCase, inj: &InjectionProfile) -> Result<Vec<Complex64>, PowerFlowError> {
    let base = case.base_mva();
    for bus in inj.bus_demand.keys() {
        if case.bus(*bus).is_none() {
            return Err(PowerFlowError::InvalidInjection(format!(
                "unknown bus {bus}"
            )));
        }
    }
    for (&g, s) in &inj.generator_setpoints {
        if g >= case.generators().len() {
            return Err(PowerFlowError::InvalidInjection(format!(
                "unknown generator {g}"
            )));
        }
        if !(s.p.is_finite() && s.q.is_finite()) {
            return Err(PowerFlowError::InvalidInjection(format!(
                "generator {g} setpoint"
            )));
        }
    }
    let mut out: Vec<Complex64> = case
        .buses()
        .iter()
        .map(|b| {
            let d = inj.bus_demand.get(&b.id).copied().unwrap_or(PowerPair {
                p: b.p_demand,
                q: b.q_demand,
            });
            Complex64::new(d.p / base, d.q / base)
        })
        .collect();
    if out.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
        return Err(PowerFlowError::InvalidInjection("non-finite demand".into()));
    }
    let slack = case.slack_bus().id;
    for (g, gen) in case.generators().iter().enumerate() {
        if !gen.in_service || (gen.kind == GenKind::Slack && gen.bus == slack) {
            continue;
        }
        let s = inj
            .generator_setpoints
            .get(&g)
            .copied()
            .unwrap_or(PowerPair {
                p: gen.p_set,
                q: gen.q_set,
            });
        let i = case.bus_index(gen.bus).expect("validated generator bus");
        out[i] -= Complex64::new(s.p / base, s.q / base);
    }
    Ok(out)
}

pub fn solve_power_flow(
    case: &GridCase,
    inj: &InjectionProfile,
) -> Result<PowerFlowResult, PowerFlowError> {
    let tree = RadialTree::build(case).map_err(|e| PowerFlowError::NotRadial(e.report))?;
    solve_with_tree(case, &tree, inj)
}

/// Same as [`solve_power_flow`] with a prebuilt tree, for repeated solves on
/// one topology.
pub fn solve_with_tree(
    case: &GridCase,
    tree: &RadialTree,
    inj: &InjectionProfile,
) -> Result<PowerFlowResult, PowerFlowError> {
    solve_detailed(case, tree, inj).map(|(r, _)| r)
}

/// Complex bus voltages and series branch currents (indexed by the child
/// bus of each tree branch) of a finished sweep.
pub(crate) struct SweepState {
    pub v: Vec<Complex64>,
    pub series: Vec<Complex64>,
}

pub(crate) fn solve_detailed(
    case: &GridCase,
    tree: &RadialTree,
    inj: &InjectionProfile,
) -> Result<(PowerFlowResult, SweepState), PowerFlowError> {
    let n = case.buses().len();
    let base = case.base_mva();
    let demand = net_demand(case, inj)?;

    let mut shunt = vec![Complex64::new(0.0, 0.0); n];
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for &i in &tree.order {
        if let Some((p, k)) = tree.parent[i] {
            let br = &case.branches()[k];
            z[i] = Complex64::new(br.r, br.x);
            let half = Complex64::new(0.0, br.b / 2.0);
            shunt[i] += half;
            shunt[p] += half;
        }
    }

    let v0 = Complex64::new(case.slack_voltage(), 0.0);
    let mut v = vec![v0; n];
    let mut injected = vec![Complex64::new(0.0, 0.0); n];
    let mut series = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = 0;
    let mut mismatch = f64::INFINITY;

    let required = |v: &[Complex64], i: usize| (demand[i] / v[i]).conj() + shunt[i] * v[i];

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for i in 0..n {
            injected[i] = required(&v, i);
        }
        for &i in tree.order.iter().rev() {
            let mut j = injected[i];
            for &c in &tree.children[i] {
                j += series[c];
            }
            series[i] = j;
        }
        for &i in tree.order.iter().skip(1) {
            let (p, _) = tree.parent[i].expect("non-root bus has a parent");
            v[i] = v[p] - z[i] * series[i];
        }
        mismatch = tree
            .order
            .iter()
            .skip(1)
            .map(|&i| (v[i] * (injected[i] - required(&v, i)).conj()).norm())
            .fold(0.0, f64::max);
        if !mismatch.is_finite() {
            break;
        }
        if mismatch <= TOLERANCE {
            break;
        }
    }
    let converged = mismatch <= TOLERANCE;

    let mut branches: Vec<BranchFlow> = case
        .branches()
        .iter()
        .map(|br| BranchFlow {
            from_bus: br.from_bus,
            to_bus: br.to_bus,
            p_mw: 0.0,
            q_mvar: 0.0,
            current: 0.0,
            loading: 0.0,
        })
        .collect();
    let mut losses = 0.0;
    let mut slack_s = demand[tree.root];
    for &i in tree.order.iter().skip(1) {
        let (p, k) = tree.parent[i].expect("non-root bus has a parent");
        let br = &case.branches()[k];
        let j = series[i];
        let half = br.b / 2.0;
        let s_parent = v[p] * j.conj() - Complex64::new(0.0, half * v[p].norm_sqr());
        let s_child = -v[i] * j.conj() - Complex64::new(0.0, half * v[i].norm_sqr());
        if p == tree.root {
            slack_s += s_parent;
        }
        let s_from = if case.buses()[p].id == br.from_bus {
            s_parent
        } else {
            s_child
        };
        let flow = &mut branches[k];
        flow.p_mw = s_from.re * base;
        flow.q_mvar = s_from.im * base;
        flow.current = j.norm();
        flow.loading = if br.rate > 0.0 {
            s_parent.norm().max(s_child.norm()) * base / br.rate
        } else {
            0.0
        };
        losses += br.r * j.norm_sqr() * base;
    }
    // generators sitting at the slack bus that are not the slack unit were
    // netted into its demand; the slack unit supplies the remainder
    let result = PowerFlowResult {
        converged,
        iterations,
        bus_ids: case.buses().iter().map(|b| b.id).collect(),
        vm: v.iter().map(|c| c.norm()).collect(),
        va: v.iter().map(|c| c.arg()).collect(),
        branches,
        losses_mw: losses,
        max_mismatch: mismatch,
        slack_p_mw: slack_s.re * base,
        slack_q_mvar: slack_s.im * base,
    };
    if converged {
        Ok((result, SweepState { v, series }))
    } else {
        Err(PowerFlowError::NotConverged(Box::new(result)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageViolation {
    pub bus: BusId,
    pub magnitude: f64,
    pub bound: Bound,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overload {
    /// 0-based branch index.
    pub branch: usize,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub loading: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub voltage: Vec<VoltageViolation>,
    pub overloads: Vec<Overload>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.voltage.is_empty() && self.overloads.is_empty()
    }
}

/// Buses strictly outside their voltage band and branches strictly above
/// their rating.
pub fn detect_violations(
    result: &PowerFlowResult,
    case: &GridCase,
) -> Result<ViolationReport, PowerFlowError> {
    if !result.converged {
        return Err(PowerFlowError::Unconverged);
    }
    let mut report = ViolationReport::default();
    for (bus, &vm) in case.buses().iter().zip(&result.vm) {
        if vm > bus.v_max {
            report.voltage.push(VoltageViolation {
                bus: bus.id,
                magnitude: vm,
                bound: Bound::Upper,
                limit: bus.v_max,
            });
        } else if vm < bus.v_min {
            report.voltage.push(VoltageViolation {
                bus: bus.id,
                magnitude: vm,
                bound: Bound::Lower,
                limit: bus.v_min,
            });
        }
    }
    for (k, flow) in result.branches.iter().enumerate() {
        if flow.loading > 1.0 {
            report.overloads.push(Overload {
                branch: k,
                from_bus: flow.from_bus,
                to_bus: flow.to_bus,
                loading: flow.loading,
            });
        }
    }
    Ok(report)
}

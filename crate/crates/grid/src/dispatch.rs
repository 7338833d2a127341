//! Multi-period DER dispatch.
//!
//! The network is modelled with LinDistFlow sensitivities anchored at an
//! exact power-flow solution of the current setpoints. Each anchor yields a
//! smooth surrogate (voltages and branch flows affine in the device
//! setpoints, losses quadratic in the flows) that is minimised by a
//! spectral projected-gradient method with Armijo backtracking. The anchor
//! is then moved to the new setpoints and the surrogate rebuilt, a few
//! times at most. Voltage and thermal limits enter as quadratic penalties;
//! the final strategy is re-checked with the exact solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BusId, GenCost, GenKind, GridCase};
use crate::powerflow::{
    detect_violations, solve_detailed, InjectionProfile, PowerFlowError, PowerPair, ViolationReport,
};
use crate::topology::{RadialTree, RadialityReport};

pub const PENALTY_WEIGHT: f64 = 1e4;
pub const INITIAL_STEP: f64 = 0.1;
pub const MAX_INNER_ITERATIONS: usize = 2000;
pub const GRADIENT_TOLERANCE: f64 = 1e-7;
pub const MAX_OUTER_ITERATIONS: usize = 5;
pub const ANCHOR_TOLERANCE: f64 = 1e-5;
/// Voltage slack (p.u.) tolerated by the ex-post feasibility check.
pub const VOLTAGE_SLACK: f64 = 0.005;
/// Loading ratio tolerated by the ex-post feasibility check.
pub const LOADING_SLACK: f64 = 1.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MinCost,
    MinVoltageDeviation,
    MinPowerLoss,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::MinCost => "min_cost",
            Objective::MinVoltageDeviation => "min_voltage_deviation",
            Objective::MinPowerLoss => "min_power_loss",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Objective::MinCost => "$",
            Objective::MinVoltageDeviation => "p.u.^2",
            Objective::MinPowerLoss => "MW",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "min_cost" | "cost" => Some(Objective::MinCost),
            "min_voltage_deviation" | "voltage_deviation" => Some(Objective::MinVoltageDeviation),
            "min_power_loss" | "power_loss" | "losses" => Some(Objective::MinPowerLoss),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchProblem {
    pub case: GridCase,
    /// One snapshot per step. Demand overrides apply as in power flow; a
    /// setpoint override on a PV unit is its available output for the step.
    pub horizon: Vec<InjectionProfile>,
    pub objective: Objective,
    pub step_hours: f64,
    /// Generator indices the solver may move; `None` selects every
    /// in-service unit except the slack.
    pub controllable: Option<Vec<usize>>,
}

impl DispatchProblem {
    pub fn new(case: GridCase, horizon: Vec<InjectionProfile>, objective: Objective) -> Self {
        DispatchProblem {
            case,
            horizon,
            objective,
            step_hours: 1.0,
            controllable: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSchedule {
    pub generator: usize,
    pub kind: GenKind,
    pub bus: BusId,
    pub p_mw: Vec<f64>,
    pub q_mvar: Vec<f64>,
    /// Stored energy at the start of each step plus the final value
    /// (`steps + 1` entries); storage units only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_mwh: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvaluation {
    pub losses_mw: f64,
    pub voltage_deviation: f64,
    pub cost: f64,
    pub min_vm: f64,
    pub max_vm: f64,
    pub slack_p_mw: f64,
    pub violations: ViolationReport,
}

impl StepEvaluation {
    pub fn metric(&self, objective: Objective) -> f64 {
        match objective {
            Objective::MinCost => self.cost,
            Objective::MinVoltageDeviation => self.voltage_deviation,
            Objective::MinPowerLoss => self.losses_mw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchStrategy {
    pub objective: Objective,
    /// Objective of these setpoints under the surrogate they were solved on.
    pub objective_value: f64,
    pub unit: String,
    pub devices: Vec<DeviceSchedule>,
    pub feasible: bool,
    pub binding: Vec<String>,
    /// Exact per-step evaluation of the strategy.
    pub exact: Vec<StepEvaluation>,
    pub exact_objective: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DispatchError {
    #[error("network is not radial: {} island(s), {} loop(s)", .0.islands.len(), .0.loops.len())]
    NotRadial(RadialityReport),
    #[error("dispatch horizon is empty")]
    EmptyHorizon,
    #[error("invalid dispatch problem: {0}")]
    InvalidProblem(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("strategy violates a device bound: {0}")]
    BoundViolation(String),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
}

#[derive(Debug, Clone)]
struct Storage {
    capacity: f64,
    init: f64,
    eta: f64,
}

#[derive(Debug, Clone)]
struct Device {
    gen: usize,
    kind: GenKind,
    bus: BusId,
    cost: GenCost,
    p_lo: Vec<f64>,
    p_hi: Vec<f64>,
    q_lo: f64,
    q_hi: f64,
    storage: Option<Storage>,
    /// Common-path resistance / reactance with every bus, p.u.
    sens_r: Vec<f64>,
    sens_x: Vec<f64>,
    /// Child-bus indices of the branches between the root and the device.
    path: Vec<usize>,
}

/// Surrogate data for one step, taken from an exact solution.
#[derive(Debug, Clone)]
struct Anchor {
    x: Vec<f64>,
    v0: Vec<f64>,
    /// Series power leaving the parent end of each tree branch, MW / MVAr,
    /// indexed by child bus.
    pf: Vec<f64>,
    qf: Vec<f64>,
    vf2: Vec<f64>,
    loss0: f64,
    slack0: f64,
}

struct Model<'a> {
    case: &'a GridCase,
    tree: RadialTree,
    devices: Vec<Device>,
    horizon: &'a [InjectionProfile],
    objective: Objective,
    dt: f64,
    steps: usize,
    /// Child buses of tree branches, in tree order.
    edges: Vec<usize>,
    r: Vec<f64>,
    rate: Vec<f64>,
    slack_cost: GenCost,
    /// Cost of units held at fixed setpoints, per step, $/h.
    fixed_cost: Vec<f64>,
}

fn pv_available(case: &GridCase, profile: &InjectionProfile, g: usize) -> f64 {
    let gen = &case.generators()[g];
    let p = profile
        .generator_setpoints
        .get(&g)
        .map(|s| s.p)
        .unwrap_or(gen.p_set);
    p.clamp(gen.p_min, gen.p_max)
}

impl<'a> Model<'a> {
    fn new(problem: &'a DispatchProblem) -> Result<Self, DispatchError> {
        let case = &problem.case;
        if problem.horizon.is_empty() {
            return Err(DispatchError::EmptyHorizon);
        }
        if !(problem.step_hours.is_finite() && problem.step_hours > 0.0) {
            return Err(DispatchError::InvalidProblem(
                "step length must be positive".into(),
            ));
        }
        let tree = RadialTree::build(case).map_err(|e| DispatchError::NotRadial(e.report))?;
        let n = case.buses().len();
        let slack_bus = case.slack_bus().id;
        let gens = case.generators();
        let slack_unit = gens
            .iter()
            .position(|g| g.in_service && g.kind == GenKind::Slack && g.bus == slack_bus)
            .ok_or_else(|| DispatchError::InvalidProblem("case has no slack generator".into()))?;

        let selected: Vec<usize> = match &problem.controllable {
            Some(list) => {
                let mut list = list.clone();
                list.sort_unstable();
                list.dedup();
                for &g in &list {
                    match gens.get(g) {
                        None => {
                            return Err(DispatchError::InvalidProblem(format!(
                                "unknown generator {g}"
                            )))
                        }
                        Some(gen) if gen.kind == GenKind::Slack => {
                            return Err(DispatchError::InvalidProblem(format!(
                                "generator {g} is the slack unit"
                            )))
                        }
                        Some(gen) if !gen.in_service => {
                            return Err(DispatchError::InvalidProblem(format!(
                                "generator {g} is out of service"
                            )))
                        }
                        _ => {}
                    }
                }
                list
            }
            None => (0..gens.len())
                .filter(|&g| gens[g].in_service && gens[g].kind != GenKind::Slack)
                .collect(),
        };

        for (t, profile) in problem.horizon.iter().enumerate() {
            for bus in profile.bus_demand.keys() {
                if case.bus(*bus).is_none() {
                    return Err(DispatchError::InvalidProblem(format!(
                        "step {t} refers to unknown bus {bus}"
                    )));
                }
            }
            for g in profile.generator_setpoints.keys() {
                if *g >= gens.len() {
                    return Err(DispatchError::InvalidProblem(format!(
                        "step {t} refers to unknown generator {g}"
                    )));
                }
            }
        }

        let mut edges = Vec::with_capacity(n.saturating_sub(1));
        let mut r = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut rate = vec![0.0; n];
        for &i in tree.order.iter().skip(1) {
            let (_, k) = tree.parent[i].expect("non-root bus has a parent");
            let br = &case.branches()[k];
            edges.push(i);
            r[i] = br.r;
            x[i] = br.x;
            rate[i] = br.rate;
        }

        let mut devices = Vec::with_capacity(selected.len());
        for g in selected {
            let gen = &gens[g];
            let bus_idx = case.bus_index(gen.bus).expect("validated generator bus");
            let mut on_path = vec![false; n];
            let mut path = Vec::new();
            let mut b = bus_idx;
            while let Some((p, _)) = tree.parent[b] {
                on_path[b] = true;
                path.push(b);
                b = p;
            }
            path.reverse();
            let mut sens_r = vec![0.0; n];
            let mut sens_x = vec![0.0; n];
            for &i in tree.order.iter().skip(1) {
                let (p, _) = tree.parent[i].expect("non-root bus has a parent");
                let (dr, dx) = if on_path[i] { (r[i], x[i]) } else { (0.0, 0.0) };
                sens_r[i] = sens_r[p] + dr;
                sens_x[i] = sens_x[p] + dx;
            }
            let steps = problem.horizon.len();
            let (p_lo, p_hi) = match gen.kind {
                GenKind::Pv => (
                    vec![gen.p_min; steps],
                    problem
                        .horizon
                        .iter()
                        .map(|h| pv_available(case, h, g))
                        .collect(),
                ),
                GenKind::Svc => (vec![0.0; steps], vec![0.0; steps]),
                _ => (vec![gen.p_min; steps], vec![gen.p_max; steps]),
            };
            let storage = if gen.kind == GenKind::Ess {
                if gen.p_min > 0.0 || gen.p_max < 0.0 {
                    return Err(DispatchError::Infeasible(format!(
                        "storage unit {g} cannot idle within [{}, {}] MW",
                        gen.p_min, gen.p_max
                    )));
                }
                Some(Storage {
                    capacity: gen.soc_capacity,
                    init: gen.soc_init,
                    eta: gen.efficiency,
                })
            } else {
                None
            };
            if gen.q_min > gen.q_max {
                return Err(DispatchError::Infeasible(format!(
                    "generator {g} reactive range"
                )));
            }
            devices.push(Device {
                gen: g,
                kind: gen.kind,
                bus: gen.bus,
                cost: gen.cost,
                p_lo,
                p_hi,
                q_lo: gen.q_min,
                q_hi: gen.q_max,
                storage,
                sens_r,
                sens_x,
                path,
            });
        }

        let controlled: Vec<usize> = devices.iter().map(|d| d.gen).collect();
        let fixed_cost = problem
            .horizon
            .iter()
            .map(|h| {
                gens.iter()
                    .enumerate()
                    .filter(|(g, gen)| {
                        gen.in_service
                            && *g != slack_unit
                            && gen.kind != GenKind::Pv
                            && !controlled.contains(g)
                    })
                    .map(|(g, gen)| {
                        let p = h
                            .generator_setpoints
                            .get(&g)
                            .map(|s| s.p)
                            .unwrap_or(gen.p_set);
                        gen.cost.eval(p)
                    })
                    .sum()
            })
            .collect();

        Ok(Model {
            case,
            tree,
            devices,
            horizon: &problem.horizon,
            objective: problem.objective,
            dt: problem.step_hours,
            steps: problem.horizon.len(),
            edges,
            r,
            rate,
            slack_cost: gens[slack_unit].cost,
            fixed_cost,
        })
    }

    fn width(&self) -> usize {
        2 * self.devices.len()
    }

    fn idx(&self, t: usize, d: usize) -> usize {
        t * self.width() + 2 * d
    }

    fn neutral(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.steps * self.width()];
        for t in 0..self.steps {
            for (d, dev) in self.devices.iter().enumerate() {
                let p = match dev.kind {
                    GenKind::Mgt => dev.p_lo[t],
                    GenKind::Pv => dev.p_hi[t],
                    _ => 0.0_f64.clamp(dev.p_lo[t], dev.p_hi[t]),
                };
                let i = self.idx(t, d);
                x[i] = p;
                x[i + 1] = 0.0_f64.clamp(dev.q_lo, dev.q_hi);
            }
        }
        x
    }

    /// Box clamp plus a forward pass keeping every storage unit inside its
    /// energy band.
    fn project(&self, x: &mut [f64]) {
        for (d, dev) in self.devices.iter().enumerate() {
            let mut soc = dev.storage.as_ref().map(|s| s.init);
            for t in 0..self.steps {
                let i = self.idx(t, d);
                let mut lo = dev.p_lo[t];
                let mut hi = dev.p_hi[t];
                if let (Some(s), Some(e)) = (dev.storage.as_ref(), soc) {
                    lo = lo.max(-(s.capacity - e).max(0.0) / (s.eta * self.dt));
                    hi = hi.min(e.max(0.0) * s.eta / self.dt);
                }
                x[i] = x[i].clamp(lo, hi.max(lo));
                x[i + 1] = x[i + 1].clamp(dev.q_lo, dev.q_hi);
                if let (Some(s), Some(e)) = (dev.storage.as_ref(), soc.as_mut()) {
                    *e += soc_delta(x[i], s.eta, self.dt);
                }
            }
        }
    }

    fn profile(&self, t: usize, x: &[f64]) -> InjectionProfile {
        let mut inj = self.horizon[t].clone();
        for (d, dev) in self.devices.iter().enumerate() {
            let i = self.idx(t, d);
            inj.generator_setpoints.insert(
                dev.gen,
                PowerPair {
                    p: x[i],
                    q: x[i + 1],
                },
            );
        }
        inj
    }

    fn anchor(&self, x: &[f64]) -> Result<Vec<Anchor>, DispatchError> {
        let base = self.case.base_mva();
        let n = self.case.buses().len();
        (0..self.steps)
            .map(|t| {
                let (res, state) = solve_detailed(self.case, &self.tree, &self.profile(t, x))?;
                let mut pf = vec![0.0; n];
                let mut qf = vec![0.0; n];
                let mut vf2 = vec![1.0; n];
                for &i in &self.edges {
                    let (p, _) = self.tree.parent[i].expect("non-root bus has a parent");
                    let s = state.v[p] * state.series[i].conj();
                    pf[i] = s.re * base;
                    qf[i] = s.im * base;
                    vf2[i] = state.v[p].norm_sqr();
                }
                let w = self.width();
                Ok(Anchor {
                    x: x[t * w..(t + 1) * w].to_vec(),
                    v0: res.vm,
                    pf,
                    qf,
                    vf2,
                    loss0: res.losses_mw,
                    slack0: res.slack_p_mw,
                })
            })
            .collect()
    }

    /// Surrogate objective, penalty and (optionally) gradient of one step.
    fn step(&self, t: usize, xs: &[f64], a: &Anchor, grad: Option<&mut [f64]>) -> (f64, f64) {
        let base = self.case.base_mva();
        let n = self.case.buses().len();
        let buses = self.case.buses();
        let mut v = a.v0.clone();
        let mut pf = a.pf.clone();
        let mut qf = a.qf.clone();
        let mut dp_total = 0.0;
        for (d, dev) in self.devices.iter().enumerate() {
            let dp = xs[2 * d] - a.x[2 * d];
            let dq = xs[2 * d + 1] - a.x[2 * d + 1];
            if dp == 0.0 && dq == 0.0 {
                continue;
            }
            dp_total += dp;
            for i in 0..n {
                v[i] += (dev.sens_r[i] * dp + dev.sens_x[i] * dq) / (base * a.v0[i]);
            }
            for &i in &dev.path {
                pf[i] -= dp;
                qf[i] -= dq;
            }
        }
        let mut loss = 0.0;
        for &i in &self.edges {
            loss += self.r[i] * (pf[i] * pf[i] + qf[i] * qf[i]) / (base * a.vf2[i]);
        }
        let slack = a.slack0 - dp_total + loss - a.loss0;

        let objective = match self.objective {
            Objective::MinVoltageDeviation => v.iter().map(|vi| (vi - 1.0) * (vi - 1.0)).sum(),
            Objective::MinPowerLoss => loss,
            Objective::MinCost => {
                let devices: f64 = self
                    .devices
                    .iter()
                    .enumerate()
                    .filter(|(_, dev)| dev.kind != GenKind::Pv)
                    .map(|(d, dev)| dev.cost.eval(xs[2 * d]))
                    .sum();
                (devices + self.slack_cost.eval(slack) + self.fixed_cost[t]) * self.dt
            }
        };

        let root = self.tree.root;
        let mut penalty = 0.0;
        // d(objective + penalty)/dV_i
        let mut dv = vec![0.0; n];
        for i in 0..n {
            if i == root {
                continue;
            }
            let (lo, hi) = (buses[i].v_min, buses[i].v_max);
            if v[i] > hi {
                penalty += PENALTY_WEIGHT * (v[i] - hi).powi(2);
                dv[i] += 2.0 * PENALTY_WEIGHT * (v[i] - hi);
            } else if v[i] < lo {
                penalty += PENALTY_WEIGHT * (lo - v[i]).powi(2);
                dv[i] -= 2.0 * PENALTY_WEIGHT * (lo - v[i]);
            }
        }
        if self.objective == Objective::MinVoltageDeviation {
            for i in 0..n {
                dv[i] += 2.0 * (v[i] - 1.0);
            }
        }
        // d(penalty)/d(branch flow), and d(loss)/d(branch flow)
        let mut dfp = vec![0.0; n];
        let mut dfq = vec![0.0; n];
        let mut dlp = vec![0.0; n];
        let mut dlq = vec![0.0; n];
        for &i in &self.edges {
            let s = (pf[i] * pf[i] + qf[i] * qf[i]).sqrt();
            if self.rate[i] > 0.0 && s > self.rate[i] {
                let excess = s / self.rate[i] - 1.0;
                penalty += PENALTY_WEIGHT * excess * excess;
                let k = 2.0 * PENALTY_WEIGHT * excess / (self.rate[i] * s);
                dfp[i] += k * pf[i];
                dfq[i] += k * qf[i];
            }
            dlp[i] = 2.0 * self.r[i] * pf[i] / (base * a.vf2[i]);
            dlq[i] = 2.0 * self.r[i] * qf[i] / (base * a.vf2[i]);
        }

        if let Some(g) = grad {
            let slack_marginal = self.slack_cost.derivative(slack);
            for (d, dev) in self.devices.iter().enumerate() {
                let mut gp = 0.0;
                let mut gq = 0.0;
                for i in 0..n {
                    if dv[i] != 0.0 {
                        gp += dv[i] * dev.sens_r[i] / (base * a.v0[i]);
                        gq += dv[i] * dev.sens_x[i] / (base * a.v0[i]);
                    }
                }
                let mut loss_p = 0.0;
                let mut loss_q = 0.0;
                for &i in &dev.path {
                    gp -= dfp[i];
                    gq -= dfq[i];
                    loss_p -= dlp[i];
                    loss_q -= dlq[i];
                }
                match self.objective {
                    Objective::MinPowerLoss => {
                        gp += loss_p;
                        gq += loss_q;
                    }
                    Objective::MinCost => {
                        let own = if dev.kind == GenKind::Pv {
                            0.0
                        } else {
                            dev.cost.derivative(xs[2 * d])
                        };
                        gp += (own + slack_marginal * (loss_p - 1.0)) * self.dt;
                        gq += slack_marginal * loss_q * self.dt;
                    }
                    Objective::MinVoltageDeviation => {}
                }
                g[2 * d] = gp;
                g[2 * d + 1] = gq;
            }
        }
        (objective, penalty)
    }

    fn evaluate(&self, x: &[f64], anchors: &[Anchor], grad: Option<&mut [f64]>) -> (f64, f64) {
        let w = self.width();
        let mut obj = 0.0;
        let mut pen = 0.0;
        match grad {
            Some(g) => {
                for t in 0..self.steps {
                    let (o, p) = self.step(
                        t,
                        &x[t * w..(t + 1) * w],
                        &anchors[t],
                        Some(&mut g[t * w..(t + 1) * w]),
                    );
                    obj += o;
                    pen += p;
                }
            }
            None => {
                for t in 0..self.steps {
                    let (o, p) = self.step(t, &x[t * w..(t + 1) * w], &anchors[t], None);
                    obj += o;
                    pen += p;
                }
            }
        }
        (obj, pen)
    }

    /// Spectral projected gradient with Armijo backtracking.
    fn minimize(&self, start: &[f64], anchors: &[Anchor]) -> (Vec<f64>, usize) {
        let m = start.len();
        let mut x = start.to_vec();
        self.project(&mut x);
        if m == 0 {
            return (x, 0);
        }
        let mut g = vec![0.0; m];
        let (o, p) = self.evaluate(&x, anchors, Some(&mut g));
        let mut f = o + p;
        let mut alpha = INITIAL_STEP;
        let mut trial = vec![0.0; m];
        let mut g_new = vec![0.0; m];
        let mut iterations = 0;
        while iterations < MAX_INNER_ITERATIONS {
            iterations += 1;
            for i in 0..m {
                trial[i] = x[i] - g[i];
            }
            self.project(&mut trial);
            let pg_norm = trial
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if pg_norm <= GRADIENT_TOLERANCE {
                break;
            }
            for i in 0..m {
                trial[i] = x[i] - alpha * g[i];
            }
            self.project(&mut trial);
            let dir: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
            if slope >= 0.0 {
                // the storage pass is not a Euclidean projection; fall back
                // to a shorter step before giving up
                alpha *= 0.5;
                if alpha < 1e-12 {
                    break;
                }
                continue;
            }
            let mut lambda = 1.0;
            let accepted = loop {
                for i in 0..m {
                    trial[i] = x[i] + lambda * dir[i];
                }
                self.project(&mut trial);
                let (o, p) = self.evaluate(&trial, anchors, None);
                if o + p <= f + 1e-4 * lambda * slope {
                    break Some(o + p);
                }
                lambda *= 0.5;
                if lambda < 1e-12 {
                    break None;
                }
            };
            let Some(f_new) = accepted else { break };
            self.evaluate(&trial, anchors, Some(&mut g_new));
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..m {
                let s = trial[i] - x[i];
                ss += s * s;
                sy += s * (g_new[i] - g[i]);
            }
            alpha = if sy > 0.0 {
                (ss / sy).clamp(1e-10, 1e10)
            } else {
                1e10
            };
            std::mem::swap(&mut x, &mut trial);
            std::mem::swap(&mut g, &mut g_new);
            if ss == 0.0 {
                break;
            }
            f = f_new;
        }
        (x, iterations)
    }

    fn schedules(&self, x: &[f64]) -> Vec<DeviceSchedule> {
        self.devices
            .iter()
            .enumerate()
            .map(|(d, dev)| {
                let p: Vec<f64> = (0..self.steps).map(|t| x[self.idx(t, d)]).collect();
                let q = (0..self.steps).map(|t| x[self.idx(t, d) + 1]).collect();
                let soc_mwh = dev
                    .storage
                    .as_ref()
                    .map(|s| soc_trajectory(&p, s.init, s.eta, self.dt));
                DeviceSchedule {
                    generator: dev.gen,
                    kind: dev.kind,
                    bus: dev.bus,
                    p_mw: p,
                    q_mvar: q,
                    soc_mwh,
                }
            })
            .collect()
    }

    fn binding(&self, x: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        for (d, dev) in self.devices.iter().enumerate() {
            for t in 0..self.steps {
                let i = self.idx(t, d);
                let label = format!("gen {} ({})", dev.gen, dev.kind);
                if dev.p_hi[t] > dev.p_lo[t] {
                    if (x[i] - dev.p_hi[t]).abs() <= 1e-6 {
                        out.push(format!("{label} p_max @ step {t}"));
                    } else if (x[i] - dev.p_lo[t]).abs() <= 1e-6 {
                        out.push(format!("{label} p_min @ step {t}"));
                    }
                }
                if dev.q_hi > dev.q_lo {
                    if (x[i + 1] - dev.q_hi).abs() <= 1e-6 {
                        out.push(format!("{label} q_max @ step {t}"));
                    } else if (x[i + 1] - dev.q_lo).abs() <= 1e-6 {
                        out.push(format!("{label} q_min @ step {t}"));
                    }
                }
            }
        }
        out
    }
}

fn soc_delta(p: f64, eta: f64, dt: f64) -> f64 {
    let charge = (-p).max(0.0);
    let discharge = p.max(0.0);
    (eta * charge - discharge / eta) * dt
}

fn soc_trajectory(p: &[f64], init: f64, eta: f64, dt: f64) -> Vec<f64> {
    let mut soc = Vec::with_capacity(p.len() + 1);
    soc.push(init);
    let mut e = init;
    for &pt in p {
        e += soc_delta(pt, eta, dt);
        soc.push(e);
    }
    soc
}

/// Optimises the controllable devices of `problem` for its objective.
pub fn solve_dispatch(problem: &DispatchProblem) -> Result<DispatchStrategy, DispatchError> {
    let model = Model::new(problem)?;
    let neutral = model.neutral();
    let neutral_anchor = model.anchor(&neutral)?;
    let (neutral_value, _) = model.evaluate(&neutral, &neutral_anchor, None);

    let mut best = (neutral.clone(), neutral_value);
    let mut anchor_x = neutral;
    let mut anchors = neutral_anchor;
    let mut outer = 0;
    let mut inner_total = 0;
    if !model.devices.is_empty() {
        while outer < MAX_OUTER_ITERATIONS {
            outer += 1;
            let (x, iters) = model.minimize(&anchor_x, &anchors);
            inner_total += iters;
            let (value, _) = model.evaluate(&x, &anchors, None);
            if value <= neutral_value {
                best = (x.clone(), value);
            }
            let shift = x
                .iter()
                .zip(&anchor_x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            anchor_x = x;
            if shift < ANCHOR_TOLERANCE {
                break;
            }
            anchors = model.anchor(&anchor_x)?;
        }
    }

    let (x, value) = best;
    let devices = model.schedules(&x);
    let mut binding = model.binding(&x);
    let exact = evaluate_devices(
        &problem.case,
        &model.tree,
        &devices,
        &problem.horizon,
        problem.step_hours,
    )?;
    let mut feasible = true;
    for (t, step) in exact.iter().enumerate() {
        for v in &step.violations.voltage {
            binding.push(format!("bus {} voltage {:?} @ step {t}", v.bus, v.bound).to_lowercase());
            if (v.magnitude - v.limit).abs() > VOLTAGE_SLACK {
                feasible = false;
            }
        }
        for o in &step.violations.overloads {
            binding.push(format!(
                "branch {}-{} thermal @ step {t}",
                o.from_bus, o.to_bus
            ));
            if o.loading > LOADING_SLACK {
                feasible = false;
            }
        }
    }
    let exact_objective = exact.iter().map(|s| s.metric(problem.objective)).sum();
    Ok(DispatchStrategy {
        objective: problem.objective,
        objective_value: value,
        unit: problem.objective.unit().to_string(),
        devices,
        feasible,
        binding,
        exact,
        exact_objective,
        outer_iterations: outer,
        inner_iterations: inner_total,
    })
}

/// Runs the exact power flow for every step of `strategy` and reports the
/// three objective metrics plus violations.
pub fn evaluate_strategy(
    case: &GridCase,
    strategy: &DispatchStrategy,
    horizon: &[InjectionProfile],
    step_hours: f64,
) -> Result<Vec<StepEvaluation>, DispatchError> {
    let tree = RadialTree::build(case).map_err(|e| DispatchError::NotRadial(e.report))?;
    evaluate_devices(case, &tree, &strategy.devices, horizon, step_hours)
}

fn check_bounds(
    case: &GridCase,
    devices: &[DeviceSchedule],
    horizon: &[InjectionProfile],
    step_hours: f64,
) -> Result<(), DispatchError> {
    const EPS: f64 = 1e-9;
    let fail = |msg: String| Err(DispatchError::BoundViolation(msg));
    for dev in devices {
        let Some(gen) = case.generators().get(dev.generator) else {
            return fail(format!("unknown generator {}", dev.generator));
        };
        if dev.p_mw.len() != horizon.len() || dev.q_mvar.len() != horizon.len() {
            return fail(format!(
                "generator {} schedule length does not match the horizon",
                dev.generator
            ));
        }
        for (t, (&p, &q)) in dev.p_mw.iter().zip(&dev.q_mvar).enumerate() {
            let hi = if gen.kind == GenKind::Pv {
                pv_available(case, &horizon[t], dev.generator)
            } else {
                gen.p_max
            };
            if !(p >= gen.p_min - EPS && p <= hi + EPS) {
                return fail(format!(
                    "generator {} P = {p} MW outside [{}, {hi}] at step {t}",
                    dev.generator, gen.p_min
                ));
            }
            if !(q >= gen.q_min - EPS && q <= gen.q_max + EPS) {
                return fail(format!(
                    "generator {} Q = {q} MVAr outside [{}, {}] at step {t}",
                    dev.generator, gen.q_min, gen.q_max
                ));
            }
        }
        if gen.kind == GenKind::Ess {
            let soc = soc_trajectory(&dev.p_mw, gen.soc_init, gen.efficiency, step_hours);
            for (t, e) in soc.iter().enumerate() {
                if *e < -EPS || *e > gen.soc_capacity + EPS {
                    return fail(format!(
                        "storage {} energy {e} MWh outside [0, {}] at step {t}",
                        dev.generator, gen.soc_capacity
                    ));
                }
            }
        }
    }
    Ok(())
}

fn evaluate_devices(
    case: &GridCase,
    tree: &RadialTree,
    devices: &[DeviceSchedule],
    horizon: &[InjectionProfile],
    step_hours: f64,
) -> Result<Vec<StepEvaluation>, DispatchError> {
    check_bounds(case, devices, horizon, step_hours)?;
    let gens = case.generators();
    let slack_bus = case.slack_bus().id;
    horizon
        .iter()
        .enumerate()
        .map(|(t, base)| {
            let mut inj = base.clone();
            for dev in devices {
                inj.generator_setpoints.insert(
                    dev.generator,
                    PowerPair {
                        p: dev.p_mw[t],
                        q: dev.q_mvar[t],
                    },
                );
            }
            let res = solve_detailed(case, tree, &inj)?.0;
            let violations = detect_violations(&res, case)?;
            let mut cost = 0.0;
            let mut slack_seen = false;
            for (g, gen) in gens.iter().enumerate() {
                if !gen.in_service || gen.kind == GenKind::Pv {
                    continue;
                }
                let p = if gen.kind == GenKind::Slack && gen.bus == slack_bus && !slack_seen {
                    slack_seen = true;
                    res.slack_p_mw
                } else {
                    inj.generator_setpoints
                        .get(&g)
                        .map(|s| s.p)
                        .unwrap_or(gen.p_set)
                };
                cost += gen.cost.eval(p);
            }
            Ok(StepEvaluation {
                losses_mw: res.losses_mw,
                voltage_deviation: res.vm.iter().map(|v| (v - 1.0) * (v - 1.0)).sum(),
                cost: cost * step_hours,
                min_vm: res.vm.iter().copied().fold(f64::INFINITY, f64::min),
                max_vm: res.vm.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                slack_p_mw: res.slack_p_mw,
                violations,
            })
        })
        .collect()
}

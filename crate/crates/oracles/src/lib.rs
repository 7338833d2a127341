//! Reference solvers kept deliberately separate from the production code:
//! a dense polar Newton-Raphson power flow, the analytic two-bus voltage,
//! exhaustive grid search over device setpoints, and direct metric
//! evaluation from power-flow results.

use adn_grid::{GenKind, GridCase, InjectionProfile, PowerFlowResult};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct NrSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Net injection (generation minus load) per bus in p.u., honouring the
/// same override semantics as the sweep solver.
fn net_injection(case: &GridCase, inj: &InjectionProfile) -> Vec<Complex64> {
    let base = case.base_mva();
    let slack = case.slack_bus().id;
    let mut s: Vec<Complex64> = case
        .buses()
        .iter()
        .map(|b| {
            let (p, q) = inj
                .bus_demand
                .get(&b.id)
                .map(|d| (d.p, d.q))
                .unwrap_or((b.p_demand, b.q_demand));
            -Complex64::new(p, q) / base
        })
        .collect();
    for (g, gen) in case.generators().iter().enumerate() {
        if !gen.in_service || (gen.kind == GenKind::Slack && gen.bus == slack) {
            continue;
        }
        let (p, q) = inj
            .generator_setpoints
            .get(&g)
            .map(|x| (x.p, x.q))
            .unwrap_or((gen.p_set, gen.q_set));
        let i = case.bus_index(gen.bus).unwrap();
        s[i] += Complex64::new(p, q) / base;
    }
    s
}

pub fn admittance_matrix(case: &GridCase) -> DMatrix<Complex64> {
    let n = case.buses().len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in case.branches().iter().filter(|b| b.in_service) {
        let f = case.bus_index(br.from_bus).unwrap();
        let t = case.bus_index(br.to_bus).unwrap();
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let sh = Complex64::new(0.0, br.b / 2.0);
        y[(f, f)] += ys + sh;
        y[(t, t)] += ys + sh;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    y
}

/// Full Newton-Raphson in polar coordinates with a dense Jacobian.
pub fn newton_raphson(case: &GridCase, inj: &InjectionProfile) -> NrSolution {
    let n = case.buses().len();
    let y = admittance_matrix(case);
    let target = net_injection(case, inj);
    let slack = case.bus_index(case.slack_bus().id).unwrap();
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    vm[slack] = case.slack_voltage();

    let mut iterations = 0;
    let mut mismatch = f64::INFINITY;
    for _ in 0..30 {
        let v = DVector::from_iterator(n, (0..n).map(|i| Complex64::from_polar(vm[i], va[i])));
        let current = &y * &v;
        let s_calc: Vec<Complex64> = (0..n).map(|i| v[i] * current[i].conj()).collect();
        let mis: Vec<Complex64> = pq.iter().map(|&i| s_calc[i] - target[i]).collect();
        mismatch = mis
            .iter()
            .map(|c| c.re.abs().max(c.im.abs()))
            .fold(0.0, f64::max);
        if mismatch < 1e-12 {
            break;
        }
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for (a, &i) in pq.iter().enumerate() {
            for (b, &k) in pq.iter().enumerate() {
                // dS_i/dVa_k and dS_i/dVm_k
                let (ds_da, ds_dm) = if i == k {
                    let yv = y[(i, i)] * v[i];
                    let da = Complex64::new(0.0, 1.0) * v[i] * (current[i] - yv).conj();
                    let unit = v[i] / vm[i];
                    let dm = v[i] * (y[(i, i)] * unit).conj() + current[i].conj() * unit;
                    (da, dm)
                } else {
                    let da = Complex64::new(0.0, -1.0) * v[i] * (y[(i, k)] * v[k]).conj();
                    let dm = v[i] * (y[(i, k)] * v[k] / vm[k]).conj();
                    (da, dm)
                };
                jac[(a, b)] = ds_da.re;
                jac[(a, m + b)] = ds_dm.re;
                jac[(m + a, b)] = ds_da.im;
                jac[(m + a, m + b)] = ds_dm.im;
            }
        }
        let rhs = DVector::from_iterator(
            2 * m,
            mis.iter().map(|c| -c.re).chain(mis.iter().map(|c| -c.im)),
        );
        let dx = jac.lu().solve(&rhs).expect("non-singular Jacobian");
        for (a, &i) in pq.iter().enumerate() {
            va[i] += dx[a];
            vm[i] += dx[m + a];
        }
    }
    NrSolution {
        vm,
        va,
        iterations,
        mismatch,
    }
}

/// Receiving-end voltage of a lossy line feeding a constant-power load,
/// the high-voltage root of
/// `V2^4 - (V1^2 - 2(rP + xQ)) V2^2 + |z|^2 |S|^2 = 0`.
pub fn two_bus_voltage(v1: f64, r: f64, x: f64, p: f64, q: f64) -> f64 {
    let a = v1 * v1 - 2.0 * (r * p + x * q);
    let c = (r * r + x * x) * (p * p + q * q);
    ((a + (a * a - 4.0 * c).sqrt()) / 2.0).sqrt()
}

/// Evenly spaced points from `lo` to `hi` with the given step, both ends
/// included.
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| (lo + k as f64 * step).min(hi)).collect()
}

/// Minimum of `f` over the Cartesian product of two grids.
pub fn grid_search_2d(
    xs: &[f64],
    ys: &[f64],
    mut f: impl FnMut(f64, f64) -> Option<f64>,
) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &x in xs {
        for &y in ys {
            if let Some(v) = f(x, y) {
                if best.is_none_or(|b| v < b.2) {
                    best = Some((x, y, v));
                }
            }
        }
    }
    best
}

/// Total losses, voltage deviation and generation cost of a solved snapshot,
/// recomputed from the raw result and case data.
pub struct Metrics {
    pub losses_mw: f64,
    pub voltage_deviation: f64,
    pub cost: f64,
}

pub fn metrics(case: &GridCase, inj: &InjectionProfile, res: &PowerFlowResult) -> Metrics {
    let base = case.base_mva();
    let mut losses = 0.0;
    for (br, flow) in case.branches().iter().zip(&res.branches) {
        losses += br.r * flow.current * flow.current * base;
    }
    let slack = case.slack_bus().id;
    let mut cost = 0.0;
    for (g, gen) in case.generators().iter().enumerate() {
        if !gen.in_service || gen.kind == GenKind::Pv {
            continue;
        }
        let p = if gen.kind == GenKind::Slack && gen.bus == slack {
            res.slack_p_mw
        } else {
            inj.generator_setpoints
                .get(&g)
                .map(|s| s.p)
                .unwrap_or(gen.p_set)
        };
        cost += gen.cost.c2 * p * p + gen.cost.c1 * p + gen.cost.c0;
    }
    Metrics {
        losses_mw: losses,
        voltage_deviation: res.vm.iter().map(|v| (v - 1.0).powi(2)).sum(),
        cost,
    }
}

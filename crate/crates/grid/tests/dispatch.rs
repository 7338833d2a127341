mod common;

use adn_grid::{
    evaluate_strategy, solve_dispatch, solve_power_flow, DispatchError, DispatchProblem, GenKind,
    GridCase, InjectionProfile, Objective, PowerPair,
};
use adn_oracles::{grid, grid_search_2d, metrics};

const OBJECTIVES: [Objective; 3] = [
    Objective::MinCost,
    Objective::MinVoltageDeviation,
    Objective::MinPowerLoss,
];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-3 * b.abs().max(1.0)
}

/// Midday snapshot: PV units available at their rating.
fn midday(case: &GridCase) -> InjectionProfile {
    let mut inj = InjectionProfile::default();
    for (g, gen) in case.generators().iter().enumerate() {
        if gen.kind == GenKind::Pv {
            inj.generator_setpoints.insert(
                g,
                PowerPair {
                    p: gen.p_max,
                    q: 0.0,
                },
            );
        }
    }
    inj
}

/// Night-time light load: no PV, demand at 40 %.
fn light(case: &GridCase) -> InjectionProfile {
    let mut inj = InjectionProfile::default();
    for b in case.buses() {
        inj.bus_demand.insert(
            b.id,
            PowerPair {
                p: b.p_demand * 0.4,
                q: b.q_demand * 0.4,
            },
        );
    }
    for (g, gen) in case.generators().iter().enumerate() {
        if gen.kind == GenKind::Pv {
            inj.generator_setpoints
                .insert(g, PowerPair { p: 0.0, q: 0.0 });
        }
    }
    inj
}

/// A day of hourly snapshots with a double-peak load and a bell-shaped PV
/// availability.
fn day(case: &GridCase) -> Vec<InjectionProfile> {
    (0..24)
        .map(|t| {
            let h = t as f64;
            let load = 0.6
                + 0.35 * (-(h - 8.0).powi(2) / 6.0).exp()
                + 0.45 * (-(h - 19.0).powi(2) / 5.0).exp();
            let sun = if (6.0..=18.0).contains(&h) {
                (-(h - 12.0).powi(2) / (2.0 * 2.5 * 2.5)).exp()
            } else {
                0.0
            };
            let mut inj = InjectionProfile::default();
            for b in case.buses() {
                inj.bus_demand.insert(
                    b.id,
                    PowerPair {
                        p: b.p_demand * load,
                        q: b.q_demand * load,
                    },
                );
            }
            for (g, gen) in case.generators().iter().enumerate() {
                if gen.kind == GenKind::Pv {
                    inj.generator_setpoints.insert(
                        g,
                        PowerPair {
                            p: gen.p_max * sun,
                            q: 0.0,
                        },
                    );
                }
            }
            inj
        })
        .collect()
}

fn exact_metric(case: &GridCase, inj: &InjectionProfile, objective: Objective) -> Option<f64> {
    let res = solve_power_flow(case, inj).ok()?;
    let within = case
        .buses()
        .iter()
        .zip(&res.vm)
        .all(|(b, v)| *v >= b.v_min && *v <= b.v_max)
        && res.branches.iter().all(|b| b.loading <= 1.0);
    if !within {
        return None;
    }
    let m = metrics(case, inj, &res);
    Some(match objective {
        Objective::MinCost => m.cost,
        Objective::MinVoltageDeviation => m.voltage_deviation,
        Objective::MinPowerLoss => m.losses_mw,
    })
}

/// Exhaustive search over one device's P and Q at 1 kW / 1 kVAr.
fn search(
    case: &GridCase,
    base: &InjectionProfile,
    g: usize,
    objective: Objective,
) -> (f64, f64, f64) {
    let gen = &case.generators()[g];
    let (p_lo, p_hi) = match gen.kind {
        GenKind::Pv => (gen.p_min, base.generator_setpoints[&g].p),
        GenKind::Svc => (0.0, 0.0),
        _ => (gen.p_min, gen.p_max),
    };
    let ps = grid(p_lo, p_hi, 0.001);
    let qs = grid(gen.q_min, gen.q_max, 0.001);
    grid_search_2d(&ps, &qs, |p, q| {
        let mut inj = base.clone();
        inj.generator_setpoints.insert(g, PowerPair { p, q });
        exact_metric(case, &inj, objective)
    })
    .expect("some feasible grid point")
}

#[test]
fn single_device_single_step_matches_grid_search() {
    let case = common::load("valley33");
    let mut lines = Vec::new();
    let mut interior = 0;
    for base in [midday(&case), light(&case)] {
        for (g, gen) in case.generators().iter().enumerate() {
            if gen.kind == GenKind::Slack {
                continue;
            }
            for objective in OBJECTIVES {
                let mut problem = DispatchProblem::new(case.clone(), vec![base.clone()], objective);
                problem.controllable = Some(vec![g]);
                let strategy = solve_dispatch(&problem).unwrap();
                let (p, q, best) = search(&case, &base, g, objective);
                let got = strategy.objective_value;
                lines.push(format!(
                "{} {:?}: solver {got:.9} grid {best:.9} at ({p:.3}, {q:.3}), setpoint ({:.4}, {:.4})",
                gen.kind, objective, strategy.devices[0].p_mw[0], strategy.devices[0].q_mvar[0]
            ));
                assert!(close(got, best), "{}", lines.last().unwrap());
                assert!(strategy.feasible);
                let inside = |v: f64, lo: f64, hi: f64| v > lo + 1e-9 && v < hi - 1e-9;
                if inside(p, gen.p_min, gen.p_max) || inside(q, gen.q_min, gen.q_max) {
                    interior += 1;
                }
            }
        }
    }
    println!("{}", lines.join("\n"));
    assert!(interior >= 3, "only {interior} interior optima exercised");
}

#[test]
fn optimized_never_worse_than_neutral() {
    for name in common::SHIPPED {
        let case = common::load(name);
        let horizon = day(&case);
        for objective in OBJECTIVES {
            let problem = DispatchProblem::new(case.clone(), horizon.clone(), objective);
            let strategy = solve_dispatch(&problem).unwrap();
            // neutral setpoints are not the case setpoints, so build them
            let mut neutral = strategy.clone();
            for dev in &mut neutral.devices {
                let gen = &case.generators()[dev.generator];
                for t in 0..horizon.len() {
                    dev.p_mw[t] = match gen.kind {
                        GenKind::Mgt => gen.p_min,
                        GenKind::Pv => horizon[t].generator_setpoints[&dev.generator].p,
                        _ => 0.0,
                    };
                    dev.q_mvar[t] = 0.0;
                }
                if let Some(soc) = dev.soc_mwh.as_mut() {
                    soc.iter_mut().for_each(|e| *e = gen.soc_init);
                }
            }
            let neutral_value: f64 = evaluate_strategy(&case, &neutral, &horizon, 1.0)
                .unwrap()
                .iter()
                .map(|s| s.metric(objective))
                .sum();
            assert!(
                strategy.objective_value <= neutral_value + 1e-9 * neutral_value.abs().max(1.0),
                "{name} {objective:?}: {} > {neutral_value}",
                strategy.objective_value
            );
            let rel = (strategy.exact_objective - strategy.objective_value).abs()
                / strategy.objective_value.abs().max(1e-12);
            assert!(rel < 0.05, "{name} {objective:?}: exact vs surrogate {rel}");
        }
    }
}

#[test]
fn storage_energy_is_conserved() {
    for name in common::SHIPPED {
        let case = common::load(name);
        let horizon = day(&case);
        for objective in OBJECTIVES {
            let strategy = solve_dispatch(&DispatchProblem::new(
                case.clone(),
                horizon.clone(),
                objective,
            ))
            .unwrap();
            for dev in strategy.devices.iter().filter(|d| d.kind == GenKind::Ess) {
                let gen = &case.generators()[dev.generator];
                let soc = dev.soc_mwh.as_ref().unwrap();
                assert_eq!(soc.len(), horizon.len() + 1);
                let eta = gen.efficiency;
                let net: f64 = dev
                    .p_mw
                    .iter()
                    .map(|&p| eta * (-p).max(0.0) - p.max(0.0) / eta)
                    .sum();
                assert!((soc[soc.len() - 1] - soc[0] - net).abs() < 1e-12);
                for e in soc {
                    assert!(*e >= -1e-12 && *e <= gen.soc_capacity + 1e-12);
                }
                for (p, q) in dev.p_mw.iter().zip(&dev.q_mvar) {
                    assert!(*p >= gen.p_min - 1e-12 && *p <= gen.p_max + 1e-12);
                    assert!(*q >= gen.q_min - 1e-12 && *q <= gen.q_max + 1e-12);
                }
            }
        }
    }
}

#[test]
fn nothing_to_control_returns_base_case() {
    let case = common::load("valley33");
    let mut problem = DispatchProblem::new(
        case.clone(),
        vec![InjectionProfile::default()],
        Objective::MinPowerLoss,
    );
    problem.controllable = Some(vec![]);
    let strategy = solve_dispatch(&problem).unwrap();
    let base = solve_power_flow(&case, &InjectionProfile::default()).unwrap();
    assert!(strategy.devices.is_empty());
    assert!((strategy.objective_value - base.losses_mw).abs() < 1e-12);
    assert_eq!(strategy.outer_iterations, 0);
}

#[test]
fn cost_scaling_keeps_the_argmin() {
    let case = common::load("valley33");
    let base = midday(&case);
    let solve = |c: &GridCase| {
        let mut p = DispatchProblem::new(c.clone(), vec![base.clone()], Objective::MinCost);
        p.controllable = Some(vec![1]);
        solve_dispatch(&p).unwrap()
    };
    let one = solve(&case);
    let mut gens = case.generators().to_vec();
    for g in &mut gens {
        g.cost.c2 *= 2.0;
        g.cost.c1 *= 2.0;
        g.cost.c0 *= 2.0;
    }
    let doubled = GridCase::new(
        case.name(),
        case.base_mva(),
        case.buses().to_vec(),
        case.branches().to_vec(),
        gens,
    )
    .unwrap();
    let two = solve(&doubled);
    assert!((one.devices[0].p_mw[0] - two.devices[0].p_mw[0]).abs() < 1e-4);
    assert!((two.objective_value / one.objective_value - 2.0).abs() < 1e-6);
}

#[test]
fn out_of_bound_strategy_rejected_before_evaluation() {
    let case = common::load("valley33");
    let horizon = vec![midday(&case)];
    let mut strategy = solve_dispatch(&DispatchProblem::new(
        case.clone(),
        horizon.clone(),
        Objective::MinPowerLoss,
    ))
    .unwrap();
    strategy.devices[0].p_mw[0] = 10.0;
    assert!(matches!(
        evaluate_strategy(&case, &strategy, &horizon, 1.0),
        Err(DispatchError::BoundViolation(_))
    ));
}

#[test]
fn no_load_zero_setpoints_evaluate_to_zero() {
    let case = common::load("valley33");
    let mut inj = InjectionProfile::default();
    for b in case.buses() {
        inj.bus_demand.insert(b.id, PowerPair { p: 0.0, q: 0.0 });
    }
    let mut p = DispatchProblem::new(case.clone(), vec![inj.clone()], Objective::MinPowerLoss);
    p.controllable = Some(vec![]);
    let strategy = solve_dispatch(&p).unwrap();
    let eval = evaluate_strategy(&case, &strategy, &[inj], 1.0).unwrap();
    assert_eq!(eval[0].losses_mw, 0.0);
    assert_eq!(eval[0].voltage_deviation, 0.0);
    assert!(eval[0].violations.is_empty());
}

#[test]
fn empty_horizon_is_an_error() {
    let case = common::load("valley33");
    assert!(matches!(
        solve_dispatch(&DispatchProblem::new(case, vec![], Objective::MinCost)),
        Err(DispatchError::EmptyHorizon)
    ));
}

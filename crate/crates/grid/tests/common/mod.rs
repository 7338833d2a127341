#![allow(dead_code)]

use std::path::PathBuf;

use adn_grid::{Branch, Bus, BusKind, GenKind, Generator, GridCase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SHIPPED: [&str; 3] = ["valley33", "railway69", "business141"];

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/cases")
        .join(format!("{name}.m"))
}

pub fn case_text(name: &str) -> String {
    std::fs::read_to_string(case_path(name)).expect("shipped case file")
}

pub fn load(name: &str) -> GridCase {
    adn_grid::parse_case(&case_text(name)).expect("shipped case parses")
}

/// A random radial feeder with `n` buses: bus 1 is the slack, every other
/// bus hangs off a random earlier bus.
pub fn random_tree(seed: u64, n: usize) -> GridCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buses = vec![Bus {
        id: 1,
        kind: BusKind::Slack,
        p_demand: 0.0,
        q_demand: 0.0,
        v_min: 1.0,
        v_max: 1.0,
        base_kv: 12.66,
    }];
    let mut branches = Vec::new();
    for i in 2..=n as u32 {
        buses.push(Bus {
            id: i,
            kind: BusKind::Pq,
            p_demand: rng.random_range(0.0..0.2),
            q_demand: rng.random_range(0.0..0.1),
            v_min: 0.9,
            v_max: 1.1,
            base_kv: 12.66,
        });
        branches.push(Branch {
            from_bus: rng.random_range(1..i),
            to_bus: i,
            r: rng.random_range(0.001..0.02),
            x: rng.random_range(0.001..0.02),
            b: 0.0,
            rate: 0.0,
            in_service: true,
        });
    }
    let slack = Generator {
        p_max: 100.0,
        q_min: -100.0,
        q_max: 100.0,
        ..Generator::new(1, GenKind::Slack)
    };
    GridCase::new(format!("random{seed}"), 10.0, buses, branches, vec![slack]).unwrap()
}

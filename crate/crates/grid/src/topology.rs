//! Radiality checks and the rooted tree used by the sweep solvers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BusId, GridCase};

/// Outcome of [`check_radial`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadialityReport {
    pub is_tree: bool,
    /// Bus sets not reachable from the slack bus through in-service branches.
    pub islands: Vec<Vec<BusId>>,
    /// One fundamental cycle per redundant in-service branch, as 0-based
    /// branch indices in ascending order.
    pub loops: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("network is not radial: {} island(s), {} loop(s)", report.islands.len(), report.loops.len())]
pub struct NotRadial {
    pub report: RadialityReport,
}

/// Spanning-forest search over in-service branches, rooted at the slack bus
/// and then at the lowest-indexed unvisited bus of each remaining component.
struct Forest {
    adjacency: Vec<Vec<(usize, usize)>>,
    order: Vec<usize>,
    parent: Vec<Option<(usize, usize)>>,
    component: Vec<usize>,
    depth: Vec<usize>,
}

fn build_forest(case: &GridCase) -> Forest {
    let n = case.buses().len();
    let mut adjacency = vec![Vec::new(); n];
    for (k, br) in case.branches().iter().enumerate() {
        if !br.in_service {
            continue;
        }
        // validated: endpoints exist
        let f = case.bus_index(br.from_bus).unwrap_or(0);
        let t = case.bus_index(br.to_bus).unwrap_or(0);
        adjacency[f].push((t, k));
        adjacency[t].push((f, k));
    }
    let root = case.bus_index(case.slack_bus().id).unwrap_or(0);
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut parent = vec![None; n];
    let mut component = vec![usize::MAX; n];
    let mut depth = vec![0; n];
    let starts = std::iter::once(root).chain(0..n);
    let mut comp = 0;
    for start in starts {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            component[u] = comp;
            for &(v, k) in &adjacency[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent[v] = Some((u, k));
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        comp += 1;
    }
    Forest {
        adjacency,
        order,
        parent,
        component,
        depth,
    }
}

/// Reports islands and loops of the in-service network.
pub fn check_radial(case: &GridCase) -> RadialityReport {
    let forest = build_forest(case);
    let n = case.buses().len();

    let mut islands: Vec<Vec<BusId>> = Vec::new();
    for i in 0..n {
        let c = forest.component[i];
        if c == 0 {
            continue;
        }
        if islands.len() < c {
            islands.resize_with(c, Vec::new);
        }
        islands[c - 1].push(case.buses()[i].id);
    }
    for island in &mut islands {
        island.sort_unstable();
    }

    let tree_edges: Vec<bool> = {
        let mut t = vec![false; case.branches().len()];
        for p in forest.parent.iter().flatten() {
            t[p.1] = true;
        }
        t
    };
    let mut loops = Vec::new();
    let mut seen = vec![false; case.branches().len()];
    for u in 0..n {
        for &(v, k) in &forest.adjacency[u] {
            if tree_edges[k] || seen[k] {
                continue;
            }
            seen[k] = true;
            let mut cycle = vec![k];
            let (mut a, mut b) = (u, v);
            while a != b {
                if forest.depth[a] >= forest.depth[b] {
                    let (p, e) = forest.parent[a].expect("non-root node has a parent");
                    cycle.push(e);
                    a = p;
                } else {
                    let (p, e) = forest.parent[b].expect("non-root node has a parent");
                    cycle.push(e);
                    b = p;
                }
            }
            cycle.sort_unstable();
            loops.push(cycle);
        }
    }
    loops.sort();

    RadialityReport {
        is_tree: islands.is_empty() && loops.is_empty(),
        islands,
        loops,
    }
}

/// The in-service network as a tree rooted at the slack bus. Bus positions
/// are indices into `case.buses()`.
#[derive(Debug, Clone)]
pub struct RadialTree {
    /// Breadth-first order, root first; parents precede children.
    pub order: Vec<usize>,
    /// Parent bus and connecting branch index; `None` at the root.
    pub parent: Vec<Option<(usize, usize)>>,
    pub children: Vec<Vec<usize>>,
    pub root: usize,
}

impl RadialTree {
    pub fn build(case: &GridCase) -> Result<Self, NotRadial> {
        let report = check_radial(case);
        if !report.is_tree {
            return Err(NotRadial { report });
        }
        let forest = build_forest(case);
        let n = case.buses().len();
        let mut children = vec![Vec::new(); n];
        for &i in &forest.order {
            if let Some((p, _)) = forest.parent[i] {
                children[p].push(i);
            }
        }
        Ok(RadialTree {
            root: forest.order[0],
            order: forest.order,
            parent: forest.parent,
            children,
        })
    }

    /// Buses on the path from the root to `bus`, root excluded, as the
    /// branch indices traversed.
    pub fn path_branches(&self, mut bus: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while let Some((p, k)) = self.parent[bus] {
            out.push(k);
            bus = p;
        }
        out.reverse();
        out
    }

    /// Whether `bus` lies in the subtree hanging below `ancestor`
    /// (a bus is its own descendant).
    pub fn is_descendant(&self, mut bus: usize, ancestor: usize) -> bool {
        loop {
            if bus == ancestor {
                return true;
            }
            match self.parent[bus] {
                Some((p, _)) => bus = p,
                None => return false,
            }
        }
    }
}

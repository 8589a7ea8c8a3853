#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use synthplan::molspace::{Inventory, MoleculeId, Reaction};
use synthplan::searchgraph::{NodeId, SearchGraph};

pub fn mol(i: usize) -> MoleculeId {
    MoleculeId::new(format!("m{i}"))
}

/// Shape of a random graph build.
#[derive(Debug, Clone, Copy)]
pub struct RandomGraph {
    /// Distinct molecule keys available to reactions.
    pub pool: usize,
    pub max_nodes: usize,
    pub max_reactions: usize,
    pub max_reactants: usize,
    /// Probability that a reaction reuses an ancestor of its product.
    pub cycle_rate: f64,
    /// Probability that a pool molecule is purchasable.
    pub inventory_rate: f64,
}

/// Grows a graph by expanding random open nodes with random reactions.
/// `after_step` sees the graph after each incremental update.
pub fn grow(
    rng: &mut ChaCha8Rng,
    shape: RandomGraph,
    dedup: bool,
    mut after_step: impl FnMut(&SearchGraph),
) -> (SearchGraph, Inventory) {
    let inv: Inventory = (0..shape.pool).filter(|_| rng.gen_bool(shape.inventory_rate)).map(mol).collect();
    let mut g = SearchGraph::with_dedup(dedup);
    let targets = rng.gen_range(1..=2);
    for _ in 0..targets {
        g.add_target(&mol(rng.gen_range(0..shape.pool)), &inv);
    }
    after_step(&g);
    while g.len() < shape.max_nodes {
        let open: Vec<NodeId> = g.open_nodes().iter().copied().collect();
        let Some(&v) = open.choose(rng) else { break };
        let product = g.molecule(v).unwrap().clone();
        let ancestors = ancestor_molecules(&g, v);
        let count = rng.gen_range(0..=shape.max_reactions);
        let mut reactions = Vec::new();
        for _ in 0..count {
            let n = rng.gen_range(1..=shape.max_reactants);
            let reactants: Vec<MoleculeId> = (0..n)
                .map(|_| {
                    if rng.gen_bool(shape.cycle_rate) {
                        ancestors.choose(rng).cloned().unwrap_or_else(|| product.clone())
                    } else {
                        mol(rng.gen_range(0..shape.pool))
                    }
                })
                .collect();
            let cost = rng.gen_range(0.05..2.0);
            reactions.push(Reaction::new(product.clone(), reactants, cost).unwrap());
        }
        let affected = g.merge_expand(v, &reactions, &inv).unwrap();
        g.propagate_update(&affected);
        after_step(&g);
    }
    (g, inv)
}

fn ancestor_molecules(g: &SearchGraph, v: NodeId) -> Vec<MoleculeId> {
    let mut seen = vec![false; g.len()];
    let mut stack = vec![v];
    let mut out = Vec::new();
    while let Some(u) = stack.pop() {
        if std::mem::replace(&mut seen[u.index()], true) {
            continue;
        }
        if let Some(m) = g.molecule(u) {
            out.push(m.clone());
        }
        stack.extend(g.node(u).predecessors().iter().copied());
    }
    out
}

/// Least fixpoint of the AND/OR success rules by plain Kleene iteration.
/// Also returns the iteration at which each node first became true, which
/// bounds the depth of a finite proof tree below it.
pub fn fixpoint_success(g: &SearchGraph) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = g.len();
    let mut level: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if g.node(NodeId(i)).molecule().is_some_and(|m| m.in_inventory) {
            level[i] = Some(0);
        }
    }
    for round in 1.. {
        let prev = level.clone();
        for i in 0..n {
            if prev[i].is_some() {
                continue;
            }
            let node = g.node(NodeId(i));
            let kids = node.successors();
            let ok = if node.is_molecule() {
                kids.iter().any(|c| prev[c.index()].is_some())
            } else {
                !kids.is_empty() && kids.iter().all(|c| prev[c.index()].is_some())
            };
            if ok {
                level[i] = Some(round);
            }
        }
        if level == prev {
            break;
        }
    }
    (level.iter().map(Option::is_some).collect(), level)
}

/// True when some directed cycle exists among the graph's nodes.
pub fn has_cycle(g: &SearchGraph) -> bool {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; g.len()];
    for root in 0..g.len() {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some((u, i)) = stack.pop() {
            let kids = g.node(NodeId(u)).successors();
            if i < kids.len() {
                stack.push((u, i + 1));
                let c = kids[i].index();
                match state[c] {
                    1 => return true,
                    0 => {
                        state[c] = 1;
                        stack.push((c, 0));
                    }
                    _ => {}
                }
            } else {
                state[u] = 2;
            }
        }
    }
    false
}

/// Minimum summed reaction cost over every simple path from a target,
/// by exhaustive depth-first enumeration.
pub fn simple_path_costs(g: &SearchGraph) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; g.len()];
    let mut on_path = vec![false; g.len()];
    fn dfs(g: &SearchGraph, u: NodeId, cost: f64, on_path: &mut [bool], best: &mut [f64]) {
        let target_cost = if g.is_target(u) { 0.0 } else { cost };
        best[u.index()] = best[u.index()].min(target_cost);
        on_path[u.index()] = true;
        for &c in g.node(u).successors() {
            if on_path[c.index()] {
                continue;
            }
            let step = g.node(c).reaction().map_or(0.0, |r| r.reaction_cost);
            dfs(g, c, cost + step, on_path, best);
        }
        on_path[u.index()] = false;
    }
    for &t in g.targets() {
        dfs(g, t, 0.0, &mut on_path, &mut best);
    }
    best
}

//! Seeded synthetic benchmark sets.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Inventory, MoleculeId, Reaction, TableDomain};
use crate::numerics::seeded_rng;

/// `count` distinct integers from `lo..=hi` satisfying `keep`, drawn with
/// `seed` and returned in ascending order.
pub fn sample_integers(lo: u64, hi: u64, count: usize, seed: u64, keep: impl Fn(u64) -> bool) -> Vec<MoleculeId> {
    let mut pool: Vec<u64> = (lo..=hi).filter(|&n| keep(n)).collect();
    assert!(pool.len() >= count, "only {} candidates for {count} targets", pool.len());
    pool.shuffle(&mut seeded_rng(seed));
    let mut picked = pool[..count].to_vec();
    picked.sort_unstable();
    picked.into_iter().map(|n| MoleculeId::new(n.to_string())).collect()
}

pub fn is_composite(n: u64) -> bool {
    n >= 4 && (2..).take_while(|d| d * d <= n).any(|d| n % d == 0)
}

/// A table domain whose targets come in groups that depend on one shared
/// intermediate ("hub").
#[derive(Debug, Clone)]
pub struct SharedFamily {
    pub domain: TableDomain,
    pub inventory: Inventory,
    /// Ordered so that targets of the same hub are adjacent.
    pub targets: Vec<MoleculeId>,
    /// Hub index of each target.
    pub hub_of: Vec<usize>,
}

/// Family of `targets` molecules, `group` per hub.
///
/// Hub `j` is reached through a chain of `depth` reactions ending in the
/// single inventory molecule `s`; every chain molecule also has cheaper
/// reactions into dead ends. A target needs its hub plus `s`, and has dead
/// ends of its own. Under uniform-cost search every dead end cheaper than
/// the next chain step is expanded first, so a hub costs roughly
/// `depth * (dead_ends + 1)` expansions, paid once per graph.
pub fn shared_intermediate_family(targets: usize, group: usize, seed: u64) -> SharedFamily {
    assert!(group >= 1);
    let mut rng = seeded_rng(seed);
    let hubs = targets.div_ceil(group);
    let mut reactions = Vec::new();
    let m = |s: &str| MoleculeId::new(s);
    let mut rx = |p: &str, rs: Vec<String>, c: f64| {
        let r = Reaction::new(m(p), rs.iter().map(|r| m(r)), c).expect("generated reactions are valid");
        reactions.push(r);
    };
    for j in 0..hubs {
        let depth = rng.gen_range(3..=6);
        let dead = rng.gen_range(4..=14);
        for k in 0..depth {
            let node = format!("f{j}h{k}");
            let next = if k + 1 == depth { "s".to_string() } else { format!("f{j}h{}", k + 1) };
            rx(&node, vec![next], 1.0 + rng.gen::<f64>() * 0.1);
            for x in 0..dead {
                rx(&node, vec![format!("f{j}h{k}d{x}")], 0.3 + rng.gen::<f64>() * 0.2);
            }
        }
    }
    let mut names = Vec::with_capacity(targets);
    let mut hub_of = Vec::with_capacity(targets);
    for i in 0..targets {
        let j = i / group;
        let t = format!("f{j}t{i}");
        rx(&t, vec![format!("f{j}h0"), "s".to_string()], 1.0 + rng.gen::<f64>() * 0.1);
        for x in 0..rng.gen_range(0..=10) {
            rx(&t, vec![format!("f{j}t{i}d{x}")], 0.3 + rng.gen::<f64>() * 0.2);
        }
        names.push(m(&t));
        hub_of.push(j);
    }
    SharedFamily {
        domain: TableDomain::from_reactions("shared-family", reactions),
        inventory: [m("s")].into_iter().collect(),
        targets: names,
        hub_of,
    }
}

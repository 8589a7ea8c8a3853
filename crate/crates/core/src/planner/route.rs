use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molspace::{ExpansionOracle, Inventory, MoleculeId};
use crate::searchgraph::{NodeId, SearchGraph};

/// A synthesis plan: each internal molecule carries exactly one reaction,
/// each leaf is an inventory molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTree {
    pub molecule: MoleculeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<RouteStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStep {
    pub cost: f64,
    pub reactants: Vec<RouteTree>,
}

impl RouteTree {
    pub fn leaf(molecule: MoleculeId) -> Self {
        RouteTree { molecule, reaction: None }
    }

    pub fn node(molecule: MoleculeId, cost: f64, reactants: Vec<RouteTree>) -> Self {
        RouteTree {
            molecule,
            reaction: Some(RouteStep { cost, reactants }),
        }
    }

    /// Pre-order walk over `(molecule, step)` pairs.
    pub fn walk(&self, f: &mut dyn FnMut(&RouteTree)) {
        f(self);
        if let Some(step) = &self.reaction {
            for c in &step.reactants {
                c.walk(f);
            }
        }
    }

    /// Internal molecules other than the root.
    pub fn intermediates(&self) -> BTreeSet<MoleculeId> {
        let mut out = BTreeSet::new();
        self.walk(&mut |t| {
            if t.reaction.is_some() && t.molecule != self.molecule {
                out.insert(t.molecule.clone());
            }
        });
        out
    }

    /// Leaves in the inventory, internal molecules with non-empty
    /// reactant lists, no molecule repeated along a root-to-leaf path.
    pub fn validate(&self, inv: &Inventory) -> Result<()> {
        fn go(t: &RouteTree, inv: &Inventory, path: &mut Vec<MoleculeId>) -> Result<()> {
            if path.contains(&t.molecule) {
                return Err(Error::Contract(format!("route revisits {} on one path", t.molecule)));
            }
            match &t.reaction {
                None if inv.contains(&t.molecule) => Ok(()),
                None => Err(Error::Contract(format!("route leaf {} is not in the inventory", t.molecule))),
                Some(step) => {
                    if step.reactants.is_empty() || !(step.cost > 0.0 && step.cost.is_finite()) {
                        return Err(Error::Contract(format!("malformed reaction for {}", t.molecule)));
                    }
                    path.push(t.molecule.clone());
                    for c in &step.reactants {
                        go(c, inv, path)?;
                    }
                    path.pop();
                    Ok(())
                }
            }
        }
        go(self, inv, &mut Vec::new())
    }

    /// Checks that the oracle proposes every reaction of the route (same
    /// product, reactants and cost) within its top `k`.
    pub fn verify_with_oracle(&self, oracle: &dyn ExpansionOracle, k: usize) -> Result<()> {
        let mut err = None;
        self.walk(&mut |t| {
            if err.is_some() {
                return;
            }
            if let Some(step) = &t.reaction {
                let mut reactants: Vec<MoleculeId> = step.reactants.iter().map(|c| c.molecule.clone()).collect();
                reactants.sort();
                match oracle.expand(&t.molecule, k) {
                    Ok(rs) if rs.iter().any(|r| r.reactants == reactants && r.cost == step.cost) => {}
                    Ok(_) => {
                        err = Some(Error::Contract(format!("oracle does not propose the route reaction for {}", t.molecule)))
                    }
                    Err(e) => err = Some(e),
                }
            }
        });
        err.map_or(Ok(()), Err)
    }
}

/// `(number of reactions, summed reaction cost)`.
pub fn route_stats(r: &RouteTree) -> (usize, f64) {
    let mut n = 0;
    let mut cost = 0.0;
    r.walk(&mut |t| {
        if let Some(step) = &t.reaction {
            n += 1;
            cost += step.cost;
        }
    });
    (n, cost)
}

#[derive(PartialEq)]
struct Entry(f64, NodeId);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest derivation of every molecule node: the least solution of
/// `V(m) = 0` for inventory molecules and `V(m) = min_r c(r) + sum V(child)`
/// otherwise, found by settling molecules in increasing value. Returns the
/// value and chosen reaction per node; unsettled molecules keep infinity.
fn cheapest_derivations(g: &SearchGraph) -> (Vec<f64>, Vec<Option<NodeId>>) {
    let n = g.len();
    let mut value = vec![f64::INFINITY; n];
    let mut choice: Vec<Option<NodeId>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut pending: Vec<usize> = (0..n).map(|i| g.node(NodeId(i)).successors().len()).collect();
    let mut reaction_sum = vec![0.0; n];
    let mut heap = BinaryHeap::new();
    for (v, node) in g.nodes() {
        if node.molecule().is_some_and(|m| m.in_inventory) {
            value[v.0] = 0.0;
            heap.push(Entry(0.0, v));
        }
    }
    while let Some(Entry(c, v)) = heap.pop() {
        if settled[v.0] || c > value[v.0] {
            continue;
        }
        settled[v.0] = true;
        for &r in g.node(v).predecessors() {
            // Each child edge is counted once; duplicate reactants are merged
            // at construction.
            pending[r.0] -= 1;
            reaction_sum[r.0] += c;
            if pending[r.0] == 0 {
                let rc = g.node(r).reaction().expect("molecule predecessors are reactions").reaction_cost;
                let total = rc + reaction_sum[r.0];
                for &p in g.node(r).predecessors() {
                    if !settled[p.0] && total < value[p.0] {
                        value[p.0] = total;
                        choice[p.0] = Some(r);
                        heap.push(Entry(total, p));
                    }
                }
            }
        }
    }
    (value, choice)
}

/// The cheapest route below a successful molecule node.
pub fn extract_route(g: &SearchGraph, target: NodeId) -> Result<RouteTree> {
    if !g.node(target).is_molecule() || !g.success(target) {
        return Err(Error::NoRoute(
            g.molecule(target).map_or_else(|| format!("node {}", target.0), |m| m.to_string()),
        ));
    }
    let (value, choice) = cheapest_derivations(g);
    if !value[target.0].is_finite() {
        return Err(Error::Contract(format!("successful node {} has no finite derivation", target.0)));
    }
    fn build(
        g: &SearchGraph,
        v: NodeId,
        value: &[f64],
        choice: &[Option<NodeId>],
        path: &mut Vec<NodeId>,
    ) -> Result<RouteTree> {
        if path.contains(&v) {
            return Err(Error::Contract(format!("route extraction revisited node {}", v.0)));
        }
        let molecule = g.molecule(v).expect("route nodes are molecules").clone();
        if g.node(v).molecule().is_some_and(|m| m.in_inventory) {
            return Ok(RouteTree::leaf(molecule));
        }
        let r = choice[v.0].ok_or_else(|| Error::Contract(format!("node {} has no chosen reaction", v.0)))?;
        path.push(v);
        let mut reactants = Vec::new();
        for &c in g.node(r).successors() {
            debug_assert!(value[c.0] < value[v.0]);
            reactants.push(build(g, c, value, choice, path)?);
        }
        path.pop();
        let cost = g.node(r).reaction().expect("chosen node is a reaction").reaction_cost;
        Ok(RouteTree::node(molecule, cost, reactants))
    }
    build(g, target, &value, &choice, &mut Vec::new())
}

/// Values of the cheapest derivations, exposed for cross-checks.
pub fn derivation_costs(g: &SearchGraph) -> Vec<f64> {
    cheapest_derivations(g).0
}

//! Deduplicated AND-OR search graph.
//!
//! Molecule nodes are OR nodes, reaction nodes are AND nodes, and every edge
//! joins one of each. A global molecule memory guarantees at most one node
//! per molecule key (unless the graph is built in tree mode, where every
//! reactant gets a fresh node).
//!
//! Success is the least fixpoint of the AND-OR recursion, so cycles can never
//! make a node succeed without a route that bottoms out in the inventory.
//! Historical cost `g(v)` is the cheapest directed path from any target to
//! `v`, counting the cost of every reaction node on the path.

mod snapshot;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molspace::{Inventory, MoleculeId, Reaction};

pub use snapshot::{GraphSnapshot, Label, NodeTag, SnapshotNode, SNAPSHOT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct MoleculeNode {
    pub molecule: MoleculeId,
    pub in_inventory: bool,
    /// Set once the node has been passed to [`SearchGraph::merge_expand`].
    pub expanded: bool,
}

#[derive(Debug, Clone)]
pub struct ReactionNode {
    pub reaction_cost: f64,
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Molecule(MoleculeNode),
    Reaction(ReactionNode),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub success: bool,
    pub hist_cost: f64,
    succ: Vec<NodeId>,
    pred: Vec<NodeId>,
}

impl Node {
    pub fn successors(&self) -> &[NodeId] {
        &self.succ
    }

    pub fn predecessors(&self) -> &[NodeId] {
        &self.pred
    }

    pub fn molecule(&self) -> Option<&MoleculeNode> {
        match &self.kind {
            NodeKind::Molecule(m) => Some(m),
            NodeKind::Reaction(_) => None,
        }
    }

    pub fn reaction(&self) -> Option<&ReactionNode> {
        match &self.kind {
            NodeKind::Reaction(r) => Some(r),
            NodeKind::Molecule(_) => None,
        }
    }

    pub fn is_molecule(&self) -> bool {
        matches!(self.kind, NodeKind::Molecule(_))
    }

    /// Unexpanded and not purchasable.
    pub fn is_open(&self) -> bool {
        match &self.kind {
            NodeKind::Molecule(m) => !m.in_inventory && !m.expanded,
            NodeKind::Reaction(_) => false,
        }
    }

    /// Expanded with zero reactions: can never succeed.
    pub fn is_dead_end(&self) -> bool {
        match &self.kind {
            NodeKind::Molecule(m) => m.expanded && self.succ.is_empty(),
            NodeKind::Reaction(_) => false,
        }
    }
}

/// Nodes whose success flag or historical cost may have changed in the last
/// expansion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AffectedSet {
    nodes: Vec<NodeId>,
}

impl AffectedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: NodeId) {
        self.nodes.push(v);
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.nodes.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

impl FromIterator<NodeId> for AffectedSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        AffectedSet {
            nodes: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchGraph {
    nodes: Vec<Node>,
    memory: HashMap<MoleculeId, NodeId>,
    dedup: bool,
    targets: Vec<NodeId>,
    open: BTreeSet<NodeId>,
    molecule_count: usize,
    edge_count: usize,
}

impl Default for SearchGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl SearchGraph {
    /// Empty graph with molecule deduplication.
    pub fn new() -> Self {
        Self::with_dedup(true)
    }

    /// Empty graph in tree mode: every reactant becomes a fresh node.
    pub fn tree() -> Self {
        Self::with_dedup(false)
    }

    pub fn with_dedup(dedup: bool) -> Self {
        SearchGraph {
            nodes: Vec::new(),
            memory: HashMap::new(),
            dedup,
            targets: Vec::new(),
            open: BTreeSet::new(),
            molecule_count: 0,
            edge_count: 0,
        }
    }

    pub fn dedup(&self) -> bool {
        self.dedup
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: NodeId) -> &Node {
        &self.nodes[v.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn molecule_count(&self) -> usize {
        self.molecule_count
    }

    pub fn reaction_count(&self) -> usize {
        self.nodes.len() - self.molecule_count
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Number of distinct keys held by the molecule memory.
    pub fn memory_len(&self) -> usize {
        self.memory.len()
    }

    pub fn lookup(&self, m: &MoleculeId) -> Option<NodeId> {
        self.memory.get(m).copied()
    }

    pub fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    pub fn is_target(&self, v: NodeId) -> bool {
        self.targets.contains(&v)
    }

    pub fn molecule(&self, v: NodeId) -> Option<&MoleculeId> {
        self.node(v).molecule().map(|m| &m.molecule)
    }

    pub fn success(&self, v: NodeId) -> bool {
        self.node(v).success
    }

    /// `g(v|G)`; `f64::INFINITY` for nodes no target reaches.
    pub fn hist_cost(&self, v: NodeId) -> f64 {
        self.node(v).hist_cost
    }

    pub fn open_nodes(&self) -> &BTreeSet<NodeId> {
        &self.open
    }

    pub fn all_targets_succeeded(&self) -> bool {
        self.targets.iter().all(|&t| self.success(t))
    }

    fn push_node(&mut self, kind: NodeKind, success: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        if matches!(kind, NodeKind::Molecule(_)) {
            self.molecule_count += 1;
        }
        self.nodes.push(Node {
            kind,
            success,
            hist_cost: f64::INFINITY,
            succ: Vec::new(),
            pred: Vec::new(),
        });
        id
    }

    fn add_molecule(&mut self, m: &MoleculeId, inv: &Inventory) -> (NodeId, bool) {
        if self.dedup {
            if let Some(&v) = self.memory.get(m) {
                return (v, false);
            }
        }
        let in_inventory = inv.contains(m);
        let v = self.push_node(
            NodeKind::Molecule(MoleculeNode {
                molecule: m.clone(),
                in_inventory,
                expanded: false,
            }),
            in_inventory,
        );
        if self.dedup {
            self.memory.insert(m.clone(), v);
        } else {
            self.memory.entry(m.clone()).or_insert(v);
        }
        if !in_inventory {
            self.open.insert(v);
        }
        (v, true)
    }

    fn add_edge(&mut self, src: NodeId, dst: NodeId) {
        self.nodes[src.0].succ.push(dst);
        self.nodes[dst.0].pred.push(src);
        self.edge_count += 1;
    }

    /// Adds `m` as a target with `g = 0`, reusing an existing node in graph
    /// mode.
    pub fn add_target(&mut self, m: &MoleculeId, inv: &Inventory) -> NodeId {
        let (v, _) = self.add_molecule(m, inv);
        if !self.targets.contains(&v) {
            self.targets.push(v);
        }
        if self.nodes[v.0].hist_cost > 0.0 {
            self.nodes[v.0].hist_cost = 0.0;
            let affected: AffectedSet = self.nodes[v.0].succ.iter().copied().collect();
            self.relax_costs(affected.iter());
        }
        v
    }

    /// Attaches `reactions` below the open molecule `v` and closes it.
    ///
    /// Reactants already in the memory are reused. The returned set holds
    /// `v`, every new reaction node and every reactant node touched; pass it
    /// to [`SearchGraph::propagate_update`].
    pub fn merge_expand(
        &mut self,
        v: NodeId,
        reactions: &[Reaction],
        inv: &Inventory,
    ) -> Result<AffectedSet> {
        let product = match self.nodes.get(v.0).map(|n| &n.kind) {
            Some(NodeKind::Molecule(m)) => {
                if m.expanded || m.in_inventory {
                    return Err(Error::ExpandClosed(v));
                }
                m.molecule.clone()
            }
            Some(NodeKind::Reaction(_)) => {
                return Err(Error::Contract(format!("{v:?} is a reaction node")))
            }
            None => return Err(Error::Contract(format!("{v:?} does not exist"))),
        };
        if let Some(r) = reactions.iter().find(|r| r.product != product) {
            return Err(Error::Contract(format!(
                "reaction for {} cannot expand {product}",
                r.product
            )));
        }

        if let NodeKind::Molecule(m) = &mut self.nodes[v.0].kind {
            m.expanded = true;
        }
        self.open.remove(&v);

        let mut affected = AffectedSet::new();
        affected.push(v);
        for r in reactions {
            let rn = self.push_node(
                NodeKind::Reaction(ReactionNode {
                    reaction_cost: r.cost,
                }),
                false,
            );
            self.add_edge(v, rn);
            affected.push(rn);
            for m in &r.reactants {
                let (mv, _) = self.add_molecule(m, inv);
                self.add_edge(rn, mv);
                affected.push(mv);
            }
        }
        #[cfg(debug_assertions)]
        self.check_invariants()
            .expect("search graph invariant broken by merge_expand");
        Ok(affected)
    }

    fn evaluate_success(&self, v: NodeId) -> bool {
        let n = &self.nodes[v.0];
        match &n.kind {
            NodeKind::Molecule(m) => m.in_inventory || n.succ.iter().any(|c| self.nodes[c.0].success),
            NodeKind::Reaction(_) => {
                !n.succ.is_empty() && n.succ.iter().all(|c| self.nodes[c.0].success)
            }
        }
    }

    /// Cost of the cheapest path from a target into `v` given its
    /// predecessors' current costs.
    fn incoming_cost(&self, v: NodeId) -> f64 {
        let n = &self.nodes[v.0];
        if self.targets.contains(&v) {
            return 0.0;
        }
        let step = match &n.kind {
            NodeKind::Reaction(r) => r.reaction_cost,
            NodeKind::Molecule(_) => 0.0,
        };
        n.pred
            .iter()
            .map(|p| self.nodes[p.0].hist_cost + step)
            .fold(f64::INFINITY, f64::min)
    }

    /// Recomputes every success flag from scratch as the least fixpoint:
    /// start from the inventory and apply the AND/OR rules until stable.
    pub fn recompute_success(&mut self) {
        for n in &mut self.nodes {
            n.success = matches!(&n.kind, NodeKind::Molecule(m) if m.in_inventory);
        }
        loop {
            let mut changed = false;
            for i in 0..self.nodes.len() {
                if !self.nodes[i].success && self.evaluate_success(NodeId(i)) {
                    self.nodes[i].success = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Recomputes every historical cost from scratch with Dijkstra from the
    /// targets.
    pub fn recompute_hist_costs(&mut self) {
        #[derive(PartialEq)]
        struct Entry(f64, NodeId);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
            }
        }

        for n in &mut self.nodes {
            n.hist_cost = f64::INFINITY;
        }
        let mut heap = BinaryHeap::new();
        for &t in &self.targets {
            self.nodes[t.0].hist_cost = 0.0;
            heap.push(Entry(0.0, t));
        }
        while let Some(Entry(d, u)) = heap.pop() {
            if d > self.nodes[u.0].hist_cost {
                continue;
            }
            for i in 0..self.nodes[u.0].succ.len() {
                let c = self.nodes[u.0].succ[i];
                let step = match &self.nodes[c.0].kind {
                    NodeKind::Reaction(r) => r.reaction_cost,
                    NodeKind::Molecule(_) => 0.0,
                };
                let nd = d + step;
                if nd < self.nodes[c.0].hist_cost {
                    self.nodes[c.0].hist_cost = nd;
                    heap.push(Entry(nd, c));
                }
            }
        }
    }

    fn relax_costs(&mut self, seeds: impl Iterator<Item = NodeId>) {
        let mut queue: VecDeque<NodeId> = VecDeque::new();
        let mut queued = vec![false; self.nodes.len()];
        for v in seeds {
            if !queued[v.0] {
                queued[v.0] = true;
                queue.push_back(v);
            }
        }
        while let Some(u) = queue.pop_front() {
            queued[u.0] = false;
            let cand = self.incoming_cost(u);
            if cand < self.nodes[u.0].hist_cost {
                self.nodes[u.0].hist_cost = cand;
                for i in 0..self.nodes[u.0].succ.len() {
                    let c = self.nodes[u.0].succ[i];
                    if !queued[c.0] {
                        queued[c.0] = true;
                        queue.push_back(c);
                    }
                }
            }
        }
    }

    /// Incrementally restores success flags and historical costs after an
    /// expansion. Success travels up through predecessors, cost decreases
    /// travel down through successors; the result equals a full recompute.
    pub fn propagate_update(&mut self, affected: &AffectedSet) {
        self.relax_costs(affected.iter());

        let mut queue: VecDeque<NodeId> = affected.iter().collect();
        let mut queued = vec![false; self.nodes.len()];
        for v in affected.iter() {
            queued[v.0] = true;
        }
        while let Some(u) = queue.pop_front() {
            queued[u.0] = false;
            if !self.nodes[u.0].success && self.evaluate_success(u) {
                self.nodes[u.0].success = true;
                for i in 0..self.nodes[u.0].pred.len() {
                    let p = self.nodes[u.0].pred[i];
                    if !queued[p.0] && !self.nodes[p.0].success {
                        queued[p.0] = true;
                        queue.push_back(p);
                    }
                }
            }
        }

        debug_assert!(
            affected.iter().all(|v| self.nodes[v.0].hist_cost.is_finite()),
            "expanded nodes must be reachable from a target"
        );
    }

    /// Structural checks: bipartite edges, one product per reaction, memory
    /// consistency, open-set bookkeeping.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Contract(msg));
        let mut edges = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            edges += n.succ.len();
            for c in &n.succ {
                if self.nodes[c.0].is_molecule() == n.is_molecule() {
                    return fail(format!("edge {i} -> {} joins nodes of one kind", c.0));
                }
                if !self.nodes[c.0].pred.contains(&NodeId(i)) {
                    return fail(format!("edge {i} -> {} missing from reverse adjacency", c.0));
                }
            }
            match &n.kind {
                NodeKind::Reaction(_) => {
                    if n.pred.len() != 1 || n.succ.is_empty() {
                        return fail(format!(
                            "reaction node {i} has {} products and {} reactants",
                            n.pred.len(),
                            n.succ.len()
                        ));
                    }
                }
                NodeKind::Molecule(m) => {
                    if m.in_inventory && !n.succ.is_empty() {
                        return fail(format!("inventory molecule {i} has successors"));
                    }
                    if n.is_open() != self.open.contains(&NodeId(i)) {
                        return fail(format!("open set out of sync at node {i}"));
                    }
                    if self.dedup && self.memory.get(&m.molecule) != Some(&NodeId(i)) {
                        return fail(format!("memory does not map {} to node {i}", m.molecule));
                    }
                }
            }
        }
        if edges != self.edge_count {
            return fail("edge count out of sync".to_string());
        }
        if self.dedup && self.memory.len() != self.molecule_count {
            return fail(format!(
                "{} molecule nodes but {} memory entries",
                self.molecule_count,
                self.memory.len()
            ));
        }
        Ok(())
    }

    /// Distinct molecule keys among the graph's molecule nodes.
    pub fn distinct_molecules(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| n.molecule().map(|m| &m.molecule))
            .collect::<BTreeSet<_>>()
            .len()
    }
}

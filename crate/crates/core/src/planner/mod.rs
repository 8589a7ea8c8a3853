//! Best-first planning over the search graph: select the cheapest open
//! molecule, expand it with the oracle's top reactions, propagate, repeat.

mod batch;
mod route;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::molspace::{ExpansionOracle, Inventory, MoleculeId};
use crate::searchgraph::{NodeId, SearchGraph};

pub use batch::{batch_plan, kmeans, make_batches, BatchConfig};
pub use route::{derivation_costs, extract_route, route_stats, RouteStep, RouteTree};

pub const DEFAULT_K: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Graph,
    Tree,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph" => Ok(SearchMode::Graph),
            "tree" => Ok(SearchMode::Tree),
            other => Err(Error::Config(format!("unknown search mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanConfig {
    /// Maximum number of expansions.
    pub budget: usize,
    /// Reactions requested from the oracle per expansion.
    pub k: usize,
    pub mode: SearchMode,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            budget: 100,
            k: DEFAULT_K,
            mode: SearchMode::Graph,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".to_string()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// One loop iteration, emitted after its update step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub expanded: MoleculeId,
    pub node: NodeId,
    pub reactions_added: usize,
    pub molecule_nodes: usize,
    pub reaction_nodes: usize,
    /// Success flag per target, in target order.
    pub successes: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub molecule: MoleculeId,
    pub success: bool,
    /// Iterations completed when the target first succeeded; 0 for
    /// inventory targets.
    pub first_success_iteration: Option<usize>,
    pub route_length: Option<usize>,
    pub route_cost: Option<f64>,
    pub route: Option<RouteTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub mode: SearchMode,
    pub cost_model: String,
    pub budget: usize,
    pub k: usize,
    pub targets: Vec<TargetResult>,
    pub iterations: usize,
    pub molecule_node_count: usize,
    pub reaction_node_count: usize,
    /// Distinct molecule keys among all molecule nodes.
    pub distinct_molecules: usize,
    pub trace: Vec<IterationRecord>,
}

impl PlanResult {
    pub fn success_count(&self) -> usize {
        self.targets.iter().filter(|t| t.success).count()
    }

    pub fn all_succeeded(&self) -> bool {
        self.targets.iter().all(|t| t.success)
    }

    /// Molecules in expansion order.
    pub fn expanded(&self) -> impl Iterator<Item = &MoleculeId> {
        self.trace.iter().map(|r| &r.expanded)
    }

    /// Distinct molecule keys among the expanded molecules.
    pub fn unique_expanded(&self) -> usize {
        self.expanded().collect::<BTreeSet<_>>().len()
    }
}

/// The open node of least total cost; ties go to the lowest id.
pub fn select_next(g: &SearchGraph, cm: &CostModel, oracle: &dyn ExpansionOracle) -> Result<NodeId> {
    if g.open_nodes().is_empty() {
        return Err(Error::Contract("select_next called with no open nodes".to_string()));
    }
    let costs = cm.open_costs(g, oracle)?;
    argmin(costs.iter().map(|(&v, &c)| (v, c))).ok_or_else(|| Error::Contract("cost model returned no costs".to_string()))
}

/// First minimum of an id-ordered sequence.
pub(crate) fn argmin(costs: impl Iterator<Item = (NodeId, f64)>) -> Option<NodeId> {
    let mut best: Option<(NodeId, f64)> = None;
    for (v, c) in costs {
        if best.map_or(true, |(_, b)| c < b) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v)
}

pub fn plan(
    targets: &[MoleculeId],
    oracle: &dyn ExpansionOracle,
    inv: &Inventory,
    cm: &CostModel,
    cfg: &PlanConfig,
) -> Result<PlanResult> {
    plan_observed(targets, oracle, inv, cm, cfg, &mut |_| {})
}

/// Planning loop with the final graph returned alongside the result.
pub fn plan_graph(
    targets: &[MoleculeId],
    oracle: &dyn ExpansionOracle,
    inv: &Inventory,
    cm: &CostModel,
    cfg: &PlanConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<(PlanResult, SearchGraph)> {
    cfg.validate()?;
    if targets.is_empty() {
        return Err(Error::Contract("no targets to plan".to_string()));
    }
    if targets.iter().collect::<BTreeSet<_>>().len() != targets.len() {
        return Err(Error::Contract("targets must be distinct".to_string()));
    }
    let mut g = SearchGraph::with_dedup(cfg.mode == SearchMode::Graph);
    let target_nodes: Vec<NodeId> = targets.iter().map(|t| g.add_target(t, inv)).collect();
    let mut first: Vec<Option<usize>> = target_nodes.iter().map(|&t| g.success(t).then_some(0)).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < cfg.budget && !g.all_targets_succeeded() && !g.open_nodes().is_empty() {
        let v = select_next(&g, cm, oracle)?;
        let m = g.molecule(v).expect("open nodes are molecules").clone();
        let reactions = oracle.expand(&m, cfg.k).map_err(|e| Error::Oracle {
            molecule: m.to_string(),
            reason: e.to_string(),
        })?;
        let affected = g.merge_expand(v, &reactions, inv)?;
        g.propagate_update(&affected);
        iterations += 1;
        for (slot, &t) in first.iter_mut().zip(&target_nodes) {
            if slot.is_none() && g.success(t) {
                *slot = Some(iterations);
            }
        }
        let record = IterationRecord {
            iteration: iterations,
            expanded: m,
            node: v,
            reactions_added: reactions.len(),
            molecule_nodes: g.molecule_count(),
            reaction_nodes: g.reaction_count(),
            successes: target_nodes.iter().map(|&t| g.success(t)).collect(),
        };
        observer(&record);
        trace.push(record);
    }
    if cfg!(debug_assertions) {
        g.check_invariants()?;
    }
    let mut results = Vec::with_capacity(targets.len());
    for ((m, &t), first) in targets.iter().zip(&target_nodes).zip(first) {
        let route = if g.success(t) { Some(extract_route(&g, t)?) } else { None };
        let stats = route.as_ref().map(route_stats);
        results.push(TargetResult {
            molecule: m.clone(),
            success: g.success(t),
            first_success_iteration: first,
            route_length: stats.map(|s| s.0),
            route_cost: stats.map(|s| s.1),
            route,
        });
    }
    let result = PlanResult {
        mode: cfg.mode,
        cost_model: cm.name().to_string(),
        budget: cfg.budget,
        k: cfg.k,
        targets: results,
        iterations,
        molecule_node_count: g.molecule_count(),
        reaction_node_count: g.reaction_count(),
        distinct_molecules: g.distinct_molecules(),
        trace,
    };
    Ok((result, g))
}

/// [`plan`] with `observer` called after every iteration.
pub fn plan_observed(
    targets: &[MoleculeId],
    oracle: &dyn ExpansionOracle,
    inv: &Inventory,
    cm: &CostModel,
    cfg: &PlanConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<PlanResult> {
    plan_graph(targets, oracle, inv, cm, cfg, observer).map(|(r, _)| r)
}

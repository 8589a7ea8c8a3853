//! Labeled graph snapshots for policy training, produced by replaying
//! successful baseline plans.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::molspace::{ExpansionOracle, FeatureVector, Inventory, MoleculeId, DEFAULT_FEATURE_BITS};
use crate::numerics::seeded_rng;
use crate::planner::{plan, PlanConfig, RouteTree};
use crate::searchgraph::{GraphSnapshot, Label, NodeId, SearchGraph};

pub const DATASET_VERSION: u32 = 1;
pub const DATASET_FORMAT: &str = "synthplan-dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub version: u32,
    pub target: MoleculeId,
    /// 0-based replay step.
    pub step: usize,
    /// Labels are set on exactly the open nodes.
    pub snapshot: GraphSnapshot,
}

impl TrainingExample {
    pub fn labels(&self) -> Result<Vec<Label>> {
        crate::policygnn::open_labels(&self.snapshot)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != DATASET_VERSION {
            return Err(Error::Contract(format!("unsupported example version {}", self.version)));
        }
        self.snapshot.validate()?;
        let labels = self.labels()?;
        if !labels.contains(&Label::Positive) {
            return Err(Error::Contract(format!("example {}#{} has no positive label", self.target, self.step)));
        }
        Ok(())
    }
}

/// How replay steps grow the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayExpansion {
    /// Attach only the route's reaction. Every open node is then on the
    /// route, so steps carry positives only.
    RouteOnly,
    /// Attach the oracle's full top-`k` list, as the planner would.
    FullK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub plan: PlanConfig,
    pub replay: ReplayExpansion,
    pub feature_bits: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            plan: PlanConfig::default(),
            replay: ReplayExpansion::FullK,
            feature_bits: DEFAULT_FEATURE_BITS,
        }
    }
}

fn route_reactions(route: &RouteTree) -> BTreeMap<MoleculeId, Vec<MoleculeId>> {
    let mut out = BTreeMap::new();
    route.walk(&mut |t| {
        if let Some(step) = &t.reaction {
            let mut rs: Vec<MoleculeId> = step.reactants.iter().map(|c| c.molecule.clone()).collect();
            rs.sort();
            out.insert(t.molecule.clone(), rs);
        }
    });
    out
}

/// Replays `route` for `target` from a target-only graph. At each step the
/// open route molecules are positive and all other open nodes negative;
/// the route molecule the plan expanded first among them is then expanded.
/// `order` ranks molecules by the plan's expansion order.
pub fn replay_route(
    target: &MoleculeId,
    route: &RouteTree,
    order: &[MoleculeId],
    oracle: &dyn ExpansionOracle,
    inv: &Inventory,
    cfg: &GenConfig,
) -> Result<(Vec<TrainingExample>, SearchGraph)> {
    let steps = route_reactions(route);
    let rank: BTreeMap<&MoleculeId, usize> = order.iter().enumerate().rev().map(|(i, m)| (m, i)).collect();
    let mut g = SearchGraph::new();
    g.add_target(target, inv);
    let feat = |m: &MoleculeId| -> FeatureVector { oracle.features(m, cfg.feature_bits) };
    let mut examples = Vec::new();
    loop {
        let frontier: Vec<NodeId> = g
            .open_nodes()
            .iter()
            .copied()
            .filter(|&v| steps.contains_key(g.molecule(v).expect("open nodes are molecules")))
            .collect();
        if frontier.is_empty() {
            break;
        }
        let mut snapshot = GraphSnapshot::capture(&g, Some((cfg.feature_bits, &feat)));
        for &v in g.open_nodes() {
            snapshot.nodes[v.0].label = Some(if frontier.contains(&v) { Label::Positive } else { Label::Negative });
        }
        examples.push(TrainingExample {
            version: DATASET_VERSION,
            target: target.clone(),
            step: examples.len(),
            snapshot,
        });
        let next = *frontier
            .iter()
            .min_by_key(|&&v| (rank.get(g.molecule(v).unwrap()).copied().unwrap_or(usize::MAX), v))
            .expect("frontier is non-empty");
        let mol = g.molecule(next).unwrap().clone();
        let wanted = &steps[&mol];
        let all = oracle.expand(&mol, cfg.plan.k)?;
        let chosen: Vec<_> = match cfg.replay {
            ReplayExpansion::FullK => all,
            ReplayExpansion::RouteOnly => all.into_iter().filter(|r| &r.reactants == wanted).take(1).collect(),
        };
        if !chosen.iter().any(|r| &r.reactants == wanted) {
            return Err(Error::Contract(format!("oracle no longer proposes the route reaction for {mol}")));
        }
        let affected = g.merge_expand(next, &chosen, inv)?;
        g.propagate_update(&affected);
    }
    Ok((examples, g))
}

/// Plans every target with the baseline cost model and replays each
/// successful route. Output is sorted by target key, then step.
pub fn generate(
    targets: &[MoleculeId],
    oracle: &dyn ExpansionOracle,
    inv: &Inventory,
    baseline: &CostModel,
    cfg: &GenConfig,
) -> Result<Vec<TrainingExample>> {
    if matches!(baseline, CostModel::Gnn(_)) {
        return Err(Error::Config("training data must come from a zero or value baseline".to_string()));
    }
    let mut sorted: Vec<&MoleculeId> = targets.iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut out = Vec::new();
    for t in sorted {
        let result = match plan(std::slice::from_ref(t), oracle, inv, baseline, &cfg.plan) {
            Ok(r) => r,
            Err(e @ (Error::Oracle { .. } | Error::Syntax { .. })) => {
                log::warn!("skipping target {t}: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let Some(route) = result.targets[0].route.as_ref() else {
            continue;
        };
        let order: Vec<MoleculeId> = result.expanded().cloned().collect();
        let (examples, _) = replay_route(t, route, &order, oracle, inv, cfg)?;
        out.extend(examples);
    }
    Ok(out)
}

/// `(molecule, remaining cost)` for every internal molecule of `route`:
/// the summed reaction cost of its subtree.
pub fn value_targets(route: &RouteTree) -> Vec<(MoleculeId, f64)> {
    fn go(t: &RouteTree, out: &mut Vec<(MoleculeId, f64)>) -> f64 {
        match &t.reaction {
            None => 0.0,
            Some(step) => {
                let c = step.cost + step.reactants.iter().map(|c| go(c, out)).sum::<f64>();
                out.push((t.molecule.clone(), c));
                c
            }
        }
    }
    let mut out = Vec::new();
    go(route, &mut out);
    out
}

/// Seeded disjoint split into `(train, val, test)`; each part keeps the
/// input order.
pub fn split<T: Clone>(data: &[T], val_n: usize, test_n: usize, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if val_n + test_n > data.len() {
        return Err(Error::Config(format!(
            "cannot take {val_n} validation and {test_n} test items from {}",
            data.len()
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let mut val: Vec<usize> = idx[..val_n].to_vec();
    let mut test: Vec<usize> = idx[val_n..val_n + test_n].to_vec();
    let mut train: Vec<usize> = idx[val_n + test_n..].to_vec();
    val.sort_unstable();
    test.sort_unstable();
    train.sort_unstable();
    let pick = |ix: Vec<usize>| ix.into_iter().map(|i| data[i].clone()).collect();
    Ok((pick(train), pick(val), pick(test)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    examples: usize,
}

/// Header line followed by one example per line.
pub fn write_jsonl(w: &mut impl Write, examples: &[TrainingExample]) -> Result<()> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        version: DATASET_VERSION,
        examples: examples.len(),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for e in examples {
        serde_json::to_writer(&mut *w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(r: impl BufRead, path: &str) -> Result<Vec<TrainingExample>> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_string(),
        line,
        reason,
    };
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| parse_err(1, "missing dataset header".to_string()))??;
    let header: DatasetHeader = serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(parse_err(1, format!("unsupported dataset {} v{}", header.format, header.version)));
    }
    let mut out = Vec::with_capacity(header.examples);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: TrainingExample = serde_json::from_str(&line).map_err(|e| parse_err(i + 2, e.to_string()))?;
        e.validate().map_err(|e| parse_err(i + 2, e.to_string()))?;
        out.push(e);
    }
    if out.len() != header.examples {
        return Err(parse_err(1, format!("header announces {} examples, found {}", header.examples, out.len())));
    }
    Ok(out)
}

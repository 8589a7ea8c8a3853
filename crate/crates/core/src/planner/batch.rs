use serde::{Deserialize, Serialize};

use super::{plan, PlanConfig, PlanResult};
use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::molspace::{ExpansionOracle, FeatureVector, Inventory, MoleculeId, DEFAULT_FEATURE_BITS};
use crate::numerics::seeded_rng;

pub const KMEANS_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub batch_size: usize,
    pub clusters: usize,
    pub feature_bits: usize,
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            batch_size: 1,
            clusters: 1,
            feature_bits: DEFAULT_FEATURE_BITS,
            seed: 0,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm on the 0/1 vectors read as reals. Centroids start at
/// `k` distinct points drawn with `seed`; a point joins the nearest
/// centroid (lowest index on ties); an empty cluster keeps its centroid.
/// Stops when assignments repeat or after 100 rounds.
pub fn kmeans(points: &[FeatureVector], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!("cannot form {k} clusters from {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("feature vectors differ in length".to_string()));
    }
    let dense: Vec<Vec<f64>> = points.iter().map(|p| p.to_dense()).collect();
    let mut rng = seeded_rng(seed);
    let mut centroids: Vec<Vec<f64>> = rand::seq::index::sample(&mut rng, points.len(), k)
        .into_iter()
        .map(|i| dense[i].clone())
        .collect();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let next: Vec<usize> = dense
            .iter()
            .map(|p| {
                let mut best = (0, f64::INFINITY);
                for (c, centroid) in centroids.iter().enumerate() {
                    let d = sq_dist(p, centroid);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best.0
            })
            .collect();
        if next == assign {
            break;
        }
        assign = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = dense.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            for (j, x) in centroid.iter_mut().enumerate() {
                *x = members.iter().map(|p| p[j]).sum::<f64>() / n;
            }
        }
    }
    Ok(assign)
}

/// Groups target indices by cluster (clusters in order of first member),
/// then cuts each cluster into consecutive batches of at most
/// `batch_size`.
pub fn make_batches(assignments: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = Vec::new();
    let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &c) in assignments.iter().enumerate() {
        if !members.contains_key(&c) {
            order.push(c);
        }
        members.entry(c).or_default().push(i);
    }
    order
        .iter()
        .flat_map(|c| members[c].chunks(batch_size).map(|b| b.to_vec()).collect::<Vec<_>>())
        .collect()
}

/// Plans each batch in one shared graph with budget `cfg.budget` times the
/// batch's size. Returns results in batch order with the target indices
/// of each batch.
pub fn batch_plan(
    targets: &[MoleculeId],
    oracle: &dyn ExpansionOracle,
    inv: &Inventory,
    cm: &CostModel,
    cfg: &PlanConfig,
    batch: &BatchConfig,
) -> Result<Vec<(Vec<usize>, PlanResult)>> {
    if batch.batch_size == 0 || batch.clusters == 0 {
        return Err(Error::Config("batch size and cluster count must be at least 1".to_string()));
    }
    if batch.clusters > targets.len() {
        return Err(Error::Config(format!(
            "{} clusters requested for {} targets",
            batch.clusters,
            targets.len()
        )));
    }
    let assignments = if batch.clusters == 1 {
        vec![0; targets.len()]
    } else {
        let feats: Vec<FeatureVector> = targets.iter().map(|t| oracle.features(t, batch.feature_bits)).collect();
        kmeans(&feats, batch.clusters, batch.seed)?
    };
    let mut out = Vec::new();
    for members in make_batches(&assignments, batch.batch_size) {
        let ts: Vec<MoleculeId> = members.iter().map(|&i| targets[i].clone()).collect();
        let sub = PlanConfig {
            budget: cfg.budget * members.len(),
            ..*cfg
        };
        out.push((members, plan(&ts, oracle, inv, cm, &sub)?));
    }
    Ok(out)
}

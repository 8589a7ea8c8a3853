//! JSON snapshot of a search graph, shared with the training-data format.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{NodeId, NodeKind, SearchGraph};
use crate::error::{Error, Result};
use crate::molspace::{FeatureVector, MoleculeId};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeTag {
    Molecule,
    Reaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

/// Infinite historical costs are written as `null`.
mod finite_or_null {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub kind: NodeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub molecule: Option<MoleculeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction_cost: Option<f64>,
    pub open: bool,
    pub success: bool,
    #[serde(with = "finite_or_null")]
    pub hist_cost: f64,
    #[serde(default)]
    pub in_inventory: bool,
    /// Set bit positions of the molecule fingerprint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<u32>>,
    #[serde(default)]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub version: u32,
    /// Fingerprint length for `features`; 0 when none are attached.
    pub feature_bits: usize,
    pub nodes: Vec<SnapshotNode>,
    pub edges: Vec<[usize; 2]>,
    pub targets: Vec<usize>,
}

impl GraphSnapshot {
    /// Captures `g`. With a featurizer every molecule node carries its
    /// fingerprint.
    pub fn capture(
        g: &SearchGraph,
        featurizer: Option<(usize, &dyn Fn(&MoleculeId) -> FeatureVector)>,
    ) -> Self {
        let mut nodes = Vec::with_capacity(g.len());
        let mut edges = Vec::with_capacity(g.edge_count());
        for (id, n) in g.nodes() {
            let (kind, molecule, reaction_cost, in_inventory, features) = match &n.kind {
                NodeKind::Molecule(m) => (
                    NodeTag::Molecule,
                    Some(m.molecule.clone()),
                    None,
                    m.in_inventory,
                    featurizer.map(|(_, f)| f(&m.molecule).indices()),
                ),
                NodeKind::Reaction(r) => (NodeTag::Reaction, None, Some(r.reaction_cost), false, None),
            };
            nodes.push(SnapshotNode {
                kind,
                molecule,
                reaction_cost,
                open: n.is_open(),
                success: n.success,
                hist_cost: n.hist_cost,
                in_inventory,
                features,
                label: None,
            });
            for c in n.successors() {
                edges.push([id.0, c.0]);
            }
        }
        GraphSnapshot {
            version: SNAPSHOT_VERSION,
            feature_bits: featurizer.map_or(0, |(b, _)| b),
            nodes,
            edges,
            targets: g.targets().iter().map(|t| t.0).collect(),
        }
    }

    pub fn open_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].open).collect()
    }

    pub fn node_id(&self, i: usize) -> NodeId {
        NodeId(i)
    }

    pub fn features(&self, i: usize) -> Option<FeatureVector> {
        self.nodes[i]
            .features
            .as_ref()
            .map(|ix| FeatureVector::from_indices(self.feature_bits, ix))
    }

    /// Well-formedness: version, edge endpoints, bipartite edges, labels on
    /// open nodes only.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(format!("snapshot: {m}")));
        if self.version != SNAPSHOT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        let n = self.nodes.len();
        for &[s, d] in &self.edges {
            if s >= n || d >= n {
                return bad(format!("edge {s} -> {d} out of range"));
            }
            if self.nodes[s].kind == self.nodes[d].kind {
                return bad(format!("edge {s} -> {d} joins nodes of one kind"));
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeTag::Molecule if node.molecule.is_none() => {
                    return bad(format!("molecule node {i} has no key"))
                }
                NodeTag::Reaction if node.reaction_cost.is_none() => {
                    return bad(format!("reaction node {i} has no cost"))
                }
                _ => {}
            }
            if node.label.is_some() && !node.open {
                return bad(format!("label on closed node {i}"));
            }
            if let Some(f) = &node.features {
                if f.iter().any(|&b| b as usize >= self.feature_bits) {
                    return bad(format!("feature bit out of range at node {i}"));
                }
            }
        }
        if self.targets.iter().any(|&t| t >= n) {
            return bad("target out of range".to_string());
        }
        Ok(())
    }

    /// Same graph with node indices relabeled: old node `i` becomes
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = self.nodes.clone();
        for (old, node) in self.nodes.iter().enumerate() {
            nodes[perm[old]] = node.clone();
        }
        GraphSnapshot {
            version: self.version,
            feature_bits: self.feature_bits,
            nodes,
            edges: self.edges.iter().map(|&[s, d]| [perm[s], perm[d]]).collect(),
            targets: self.targets.iter().map(|&t| perm[t]).collect(),
        }
    }
}

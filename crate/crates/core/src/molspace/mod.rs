//! Molecule identity, inventories, structural features and single-step
//! expansion oracles.
//!
//! An [`ExpansionOracle`] plays the role of the single-step model: given a
//! molecule it proposes at most `k` reactions producing it, cheapest first.
//! Two synthetic integer domains and a table-driven domain are provided.

mod bench;
mod features;
mod integer;
mod table;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use bench::{is_composite, sample_integers, shared_intermediate_family, SharedFamily};
pub use features::{hashed_features, FeatureVector, DEFAULT_FEATURE_BITS};
pub use integer::{IntegerDomain, SplitRule, DEFAULT_INVENTORY_MAX};
pub use table::TableDomain;

/// Canonical identity of a molecule. Equality is byte equality of the key.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MoleculeId(Arc<str>);

impl MoleculeId {
    /// Wraps an already canonical key. Use [`ExpansionOracle::canonical_id`]
    /// for raw user input.
    pub fn new(key: impl AsRef<str>) -> Self {
        MoleculeId(Arc::from(key.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for MoleculeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for MoleculeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for MoleculeId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for MoleculeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(MoleculeId::new(s))
    }
}

/// A single retrosynthetic step: `product <- reactants` at a positive cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub product: MoleculeId,
    /// Sorted and deduplicated.
    pub reactants: Vec<MoleculeId>,
    pub cost: f64,
}

impl Reaction {
    pub fn new(
        product: MoleculeId,
        reactants: impl IntoIterator<Item = MoleculeId>,
        cost: f64,
    ) -> Result<Self> {
        let set: BTreeSet<MoleculeId> = reactants.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InvalidReaction(format!(
                "reaction for {product} has no reactants"
            )));
        }
        if !(cost.is_finite() && cost > 0.0) {
            return Err(Error::InvalidReaction(format!(
                "reaction for {product} has cost {cost}, expected a finite value > 0"
            )));
        }
        Ok(Reaction {
            product,
            reactants: set.into_iter().collect(),
            cost,
        })
    }
}

/// Orders reactions cheapest first, equal costs by reactant keys.
pub(crate) fn sort_reactions(reactions: &mut [Reaction]) {
    reactions.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then_with(|| a.reactants.cmp(&b.reactants))
    });
}

/// The set of purchasable building blocks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Inventory {
    members: BTreeSet<MoleculeId>,
}

impl Inventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, m: MoleculeId) -> bool {
        self.members.insert(m)
    }

    pub fn contains(&self, m: &MoleculeId) -> bool {
        self.members.contains(m)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MoleculeId> {
        self.members.iter()
    }

    /// Reads one molecule key per line. Blank lines and `#` comments are
    /// skipped; keys are passed through the oracle's canonicalization.
    pub fn load(path: &Path, oracle: &dyn ExpansionOracle) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut inv = Inventory::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let m = oracle.canonical_id(line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            inv.insert(m);
        }
        Ok(inv)
    }
}

impl FromIterator<MoleculeId> for Inventory {
    fn from_iter<I: IntoIterator<Item = MoleculeId>>(iter: I) -> Self {
        Inventory {
            members: iter.into_iter().collect(),
        }
    }
}

pub fn is_available(m: &MoleculeId, inv: &Inventory) -> bool {
    inv.contains(m)
}

/// Single-step expansion model over some molecule space.
///
/// Implementations must be deterministic: the same molecule and `k` always
/// yield the same ordered list, and every reaction cost is finite and
/// strictly positive.
pub trait ExpansionOracle: Send + Sync {
    fn name(&self) -> &str;

    /// Parses `raw` in the domain syntax and returns its canonical key.
    fn canonical_id(&self, raw: &str) -> Result<MoleculeId>;

    /// At most `k` reactions producing `m`, sorted by ascending cost.
    fn expand(&self, m: &MoleculeId, k: usize) -> Result<Vec<Reaction>>;

    /// Structural sub-features hashed into the fingerprint.
    fn structural_tokens(&self, m: &MoleculeId) -> Vec<String>;

    fn features(&self, m: &MoleculeId, bits: usize) -> FeatureVector {
        hashed_features(&self.structural_tokens(m), bits)
    }
}

/// Reads a targets file: one molecule per line, canonicalized, first
/// occurrence wins for duplicates.
pub fn load_targets(path: &Path, oracle: &dyn ExpansionOracle) -> Result<Vec<MoleculeId>> {
    let text = std::fs::read_to_string(path)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let m = oracle.canonical_id(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if seen.insert(m.clone()) {
            out.push(m);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> MoleculeId {
        MoleculeId::new(s)
    }

    #[test]
    fn reaction_dedups_reactants() {
        let r = Reaction::new(m("6"), [m("3"), m("3")], 1.0).unwrap();
        assert_eq!(r.reactants, vec![m("3")]);
    }

    #[test]
    fn reaction_rejects_bad_cost() {
        assert!(Reaction::new(m("6"), [m("3")], 0.0).is_err());
        assert!(Reaction::new(m("6"), [m("3")], -1.0).is_err());
        assert!(Reaction::new(m("6"), [m("3")], f64::NAN).is_err());
        assert!(Reaction::new(m("6"), [m("3")], f64::INFINITY).is_err());
        assert!(Reaction::new(m("6"), Vec::new(), 1.0).is_err());
    }

    #[test]
    fn availability() {
        let inv: Inventory = [m("1"), m("2")].into_iter().collect();
        assert!(is_available(&m("1"), &inv));
        assert!(!is_available(&m("7"), &inv));
        let empty = Inventory::new();
        for k in ["1", "2", "x"] {
            assert!(!is_available(&m(k), &empty));
        }
    }

    #[test]
    fn equal_cost_ties_break_on_reactant_keys() {
        let mut rs = vec![
            Reaction::new(m("t"), [m("b")], 1.0).unwrap(),
            Reaction::new(m("t"), [m("a"), m("z")], 1.0).unwrap(),
            Reaction::new(m("t"), [m("c")], 0.5).unwrap(),
        ];
        sort_reactions(&mut rs);
        let keys: Vec<_> = rs.iter().map(|r| r.reactants[0].as_str()).collect();
        assert_eq!(keys, ["c", "a", "b"]);
    }
}

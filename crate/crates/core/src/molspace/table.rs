//! Reactions recorded in a JSONL file, one `{"product", "reactants",
//! "cost"}` object per line.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sort_reactions, ExpansionOracle, MoleculeId, Reaction};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ReactionLine {
    product: String,
    reactants: Vec<String>,
    cost: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TableDomain {
    name: String,
    by_product: BTreeMap<MoleculeId, Vec<Reaction>>,
}

fn canonical_key(domain: &str, raw: &str) -> Result<MoleculeId> {
    let t = raw.trim();
    if t.is_empty() || t.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(Error::Syntax {
            domain: domain.to_string(),
            input: raw.to_string(),
            reason: "keys are non-empty and contain no whitespace".to_string(),
        });
    }
    Ok(MoleculeId::new(t))
}

impl TableDomain {
    pub fn from_reactions(name: &str, reactions: impl IntoIterator<Item = Reaction>) -> Self {
        let mut by_product: BTreeMap<MoleculeId, Vec<Reaction>> = BTreeMap::new();
        for r in reactions {
            by_product.entry(r.product.clone()).or_default().push(r);
        }
        for rs in by_product.values_mut() {
            sort_reactions(rs);
        }
        TableDomain {
            name: name.to_string(),
            by_product,
        }
    }

    pub fn parse_jsonl(name: &str, text: &str) -> Result<Self> {
        let mut reactions = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse {
                path: name.to_string(),
                line: i + 1,
                reason,
            };
            let rec: ReactionLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            let product = canonical_key(name, &rec.product).map_err(|e| parse_err(e.to_string()))?;
            let reactants = rec
                .reactants
                .iter()
                .map(|r| canonical_key(name, r))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| parse_err(e.to_string()))?;
            let r = Reaction::new(product, reactants, rec.cost).map_err(|e| parse_err(e.to_string()))?;
            reactions.push(r);
        }
        Ok(Self::from_reactions(name, reactions))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_jsonl(&path.display().to_string(), &text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.by_product.values().flatten() {
            let line = ReactionLine {
                product: r.product.to_string(),
                reactants: r.reactants.iter().map(|m| m.to_string()).collect(),
                cost: r.cost,
            };
            out.push_str(&serde_json::to_string(&line).expect("reaction line serializes"));
            out.push('\n');
        }
        out
    }

    /// Whether this exact reaction (product, reactant set, cost) is recorded.
    pub fn contains(&self, r: &Reaction) -> bool {
        self.by_product
            .get(&r.product)
            .is_some_and(|rs| rs.iter().any(|x| x == r))
    }

    pub fn molecules(&self) -> impl Iterator<Item = &MoleculeId> {
        self.by_product.keys()
    }
}

impl ExpansionOracle for TableDomain {
    fn name(&self) -> &str {
        &self.name
    }

    fn canonical_id(&self, raw: &str) -> Result<MoleculeId> {
        canonical_key(&self.name, raw)
    }

    fn expand(&self, m: &MoleculeId, k: usize) -> Result<Vec<Reaction>> {
        Ok(self
            .by_product
            .get(m)
            .map(|rs| rs.iter().take(k).cloned().collect())
            .unwrap_or_default())
    }

    fn structural_tokens(&self, m: &MoleculeId) -> Vec<String> {
        let chars: Vec<char> = m.as_str().chars().collect();
        let mut toks = vec![format!("len:{}", chars.len())];
        for n in 1..=3 {
            for w in chars.windows(n) {
                toks.push(format!("g{n}:{}", w.iter().collect::<String>()));
            }
        }
        toks
    }
}

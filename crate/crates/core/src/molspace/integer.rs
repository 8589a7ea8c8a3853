//! Synthetic "molecules" that are positive integers.
//!
//! Under [`SplitRule::Additive`] every `n` is made from `{a, n - a}` for
//! `a = 1..=n/2`. Under [`SplitRule::Factor`] composite numbers additionally
//! split into divisor pairs `{a, n / a}`, while primes and 1 have no
//! reactions at all, so primes outside the inventory are dead ends.
//!
//! Each reaction gets a weight in (0, 1] from a ChaCha stream keyed by
//! `(seed, n, kind, a)`. Its cost is `-ln(w / (1 + sum w))`; the unit of
//! residual mass keeps costs strictly positive even for a single candidate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sort_reactions, ExpansionOracle, Inventory, MoleculeId, Reaction};
use crate::error::{Error, Result};

pub const DEFAULT_INVENTORY_MAX: u64 = 3;

const SMALL_PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    Additive,
    Factor,
}

#[derive(Debug, Clone)]
pub struct IntegerDomain {
    rule: SplitRule,
    seed: u64,
    name: String,
}

impl IntegerDomain {
    pub fn new(rule: SplitRule, seed: u64) -> Self {
        let name = match rule {
            SplitRule::Additive => "additive-split",
            SplitRule::Factor => "factor-split",
        };
        IntegerDomain {
            rule,
            seed,
            name: name.to_string(),
        }
    }

    pub fn additive(seed: u64) -> Self {
        Self::new(SplitRule::Additive, seed)
    }

    pub fn factor(seed: u64) -> Self {
        Self::new(SplitRule::Factor, seed)
    }

    pub fn rule(&self) -> SplitRule {
        self.rule
    }

    /// Inventory `{1, ..., max}`.
    pub fn inventory(max: u64) -> Inventory {
        (1..=max).map(|i| MoleculeId::new(i.to_string())).collect()
    }

    pub fn value(&self, m: &MoleculeId) -> Result<u64> {
        let n: u64 = m.as_str().parse().map_err(|_| self.syntax(m.as_str(), "not a canonical integer"))?;
        if n == 0 || m.as_str() != n.to_string() {
            return Err(self.syntax(m.as_str(), "not a canonical positive integer"));
        }
        Ok(n)
    }

    /// Weight in (0, 1] for reaction `(n, kind, a)`.
    pub fn weight(&self, n: u64, kind: u64, a: u64) -> f64 {
        let mut key = [0u8; 32];
        for (chunk, v) in key.chunks_exact_mut(8).zip([self.seed, n, kind, a]) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        1.0 - rng.gen::<f64>()
    }

    /// Every reaction for `n` as `(kind, a, reactant pair)` in enumeration
    /// order, before costing.
    fn candidates(&self, n: u64) -> Vec<(u64, u64, [u64; 2])> {
        let mut out = Vec::new();
        let composite = n >= 4 && (2..).take_while(|d| d * d <= n).any(|d| n % d == 0);
        if self.rule == SplitRule::Factor && !composite {
            return out;
        }
        for a in 1..=n / 2 {
            out.push((0, a, [a, n - a]));
        }
        if self.rule == SplitRule::Factor {
            for a in (2..).take_while(|d| d * d <= n) {
                if n % a == 0 {
                    out.push((1, a, [a, n / a]));
                }
            }
        }
        out
    }

    fn syntax(&self, input: &str, reason: &str) -> Error {
        Error::Syntax {
            domain: self.name.clone(),
            input: input.to_string(),
            reason: reason.to_string(),
        }
    }
}

impl ExpansionOracle for IntegerDomain {
    fn name(&self) -> &str {
        &self.name
    }

    fn canonical_id(&self, raw: &str) -> Result<MoleculeId> {
        let t = raw.trim();
        if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.syntax(raw, "expected decimal digits"));
        }
        let n: u64 = t.parse().map_err(|_| self.syntax(raw, "integer out of range"))?;
        if n == 0 {
            return Err(self.syntax(raw, "molecules are positive integers"));
        }
        Ok(MoleculeId::new(n.to_string()))
    }

    fn expand(&self, m: &MoleculeId, k: usize) -> Result<Vec<Reaction>> {
        let n = self.value(m)?;
        let cands = self.candidates(n);
        let weights: Vec<f64> = cands.iter().map(|&(kind, a, _)| self.weight(n, kind, a)).collect();
        let norm = 1.0 + weights.iter().sum::<f64>();
        let mut out = cands
            .iter()
            .zip(&weights)
            .map(|(&(_, _, pair), &w)| {
                Reaction::new(
                    m.clone(),
                    pair.iter().map(|x| MoleculeId::new(x.to_string())),
                    -(w / norm).ln(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        sort_reactions(&mut out);
        out.truncate(k);
        Ok(out)
    }

    fn structural_tokens(&self, m: &MoleculeId) -> Vec<String> {
        let s = m.as_str();
        let bytes = s.as_bytes();
        let mut toks = vec![format!("len:{}", bytes.len())];
        for (pos, &b) in bytes.iter().rev().enumerate() {
            toks.push(format!("d{pos}:{}", b as char));
        }
        for w in bytes.windows(2) {
            toks.push(format!("bg:{}{}", w[0] as char, w[1] as char));
        }
        if let Ok(n) = s.parse::<u64>() {
            for p in SMALL_PRIMES {
                toks.push(format!("mod{p}:{}", n % p));
            }
        }
        toks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> MoleculeId {
        MoleculeId::new(s)
    }

    #[test]
    fn canonicalization() {
        let d = IntegerDomain::additive(0);
        assert_eq!(d.canonical_id("12").unwrap(), id("12"));
        assert_eq!(d.canonical_id(" 12 ").unwrap(), id("12"));
        assert_eq!(d.canonical_id("0012").unwrap(), id("12"));
        let once = d.canonical_id("0007").unwrap();
        assert_eq!(d.canonical_id(once.as_str()).unwrap(), once);
    }

    #[test]
    fn syntax_errors_name_the_input() {
        let d = IntegerDomain::additive(0);
        for bad in ["", "abc", "-3", "1.5", "0", "000", "99999999999999999999999"] {
            let err = d.canonical_id(bad).unwrap_err();
            assert!(err.to_string().contains(&format!("{bad:?}")), "{err}");
        }
    }

    #[test]
    fn one_has_no_split() {
        let d = IntegerDomain::additive(0);
        assert!(d.expand(&id("1"), 5).unwrap().is_empty());
    }

    #[test]
    fn factor_rule_dead_ends_on_primes() {
        let d = IntegerDomain::factor(0);
        for p in ["2", "5", "7", "13", "97"] {
            assert!(d.expand(&id(p), 50).unwrap().is_empty(), "{p}");
        }
        let twelve = d.expand(&id("12"), 50).unwrap();
        // 6 additive splits plus {2,6} and {3,4}.
        assert_eq!(twelve.len(), 8);
    }

    #[test]
    fn costs_positive_and_sorted() {
        for d in [IntegerDomain::additive(9), IntegerDomain::factor(9)] {
            for n in 2..120u64 {
                let rs = d.expand(&id(&n.to_string()), 50).unwrap();
                assert!(rs.iter().all(|r| r.cost > 0.0 && r.cost.is_finite()));
                assert!(rs.windows(2).all(|w| w[0].cost <= w[1].cost));
                assert!(rs.iter().all(|r| r.product == id(&n.to_string())));
            }
        }
    }

    #[test]
    fn seeds_change_weights() {
        let a = IntegerDomain::additive(1).expand(&id("40"), 50).unwrap();
        let b = IntegerDomain::additive(2).expand(&id("40"), 50).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn tokens_cover_digits_bigrams_and_residues() {
        let d = IntegerDomain::additive(0);
        let t = d.structural_tokens(&id("105"));
        for want in ["len:3", "d0:5", "d2:1", "bg:10", "bg:05", "mod7:0", "mod2:1"] {
            assert!(t.iter().any(|x| x == want), "{want} missing");
        }
    }
}

use serde::{Deserialize, Serialize};

pub const DEFAULT_FEATURE_BITS: usize = 2048;

/// Fixed-length binary fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    len: usize,
    words: Vec<u64>,
}

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        FeatureVector {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_indices(len: usize, indices: &[u32]) -> Self {
        let mut fv = Self::zeros(len);
        for &i in indices {
            fv.set(i as usize);
        }
        fv
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for {} bits", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Positions of the set bits, ascending.
    pub fn indices(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.count_ones());
        for (wi, &w) in self.words.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                out.push((wi * 64) as u32 + w.trailing_zeros());
                w &= w - 1;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.len).map(|i| if self.get(i) { 1.0 } else { 0.0 }).collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashes each token to one bit position. FNV-1a keeps positions identical
/// across platforms and toolchains.
pub fn hashed_features(tokens: &[String], bits: usize) -> FeatureVector {
    assert!(bits >= 8, "fingerprints need at least 8 bits, got {bits}");
    let mut fv = FeatureVector::zeros(bits);
    for t in tokens {
        fv.set((fnv1a(t.as_bytes()) % bits as u64) as usize);
    }
    fv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn indices_round_trip() {
        let fv = FeatureVector::from_indices(100, &[3, 64, 99]);
        assert_eq!(fv.indices(), vec![3, 64, 99]);
        assert_eq!(fv.count_ones(), 3);
        assert_eq!(fv.to_dense().iter().sum::<f64>(), 3.0);
    }

    #[test]
    #[should_panic]
    fn too_few_bits() {
        hashed_features(&["x".to_string()], 4);
    }
}

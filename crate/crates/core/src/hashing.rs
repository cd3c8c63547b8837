//! Hashing-trick bag-of-words vectorization.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Sparse count vector. Entries are sorted by bucket, unique, and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    entries: Vec<(u32, f64)>,
    dim: usize,
}

impl SparseFeatures {
    pub fn empty(dim: usize) -> Self {
        Self { entries: Vec::new(), dim }
    }

    /// Builds features from arbitrary `(bucket, count)` pairs, merging duplicates and
    /// dropping non-positive counts.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (idx, c) in pairs {
            assert!((idx as usize) < dim, "bucket {idx} out of range for dim {dim}");
            *acc.entry(idx).or_insert(0.0) += c;
        }
        let entries = acc.into_iter().filter(|&(_, c)| c > 0.0).collect();
        Self { entries, dim }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_count(&self) -> f64 {
        self.entries.iter().map(|&(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|tok| !tok.is_empty())
        .map(|tok| tok.chars().flat_map(char::to_lowercase).collect())
}

/// Hashes every token of `text` into one of `dim` buckets and accumulates raw counts.
pub fn hash_vectorize(text: &str, dim: usize) -> SparseFeatures {
    assert!(dim >= 1, "hash dimension must be positive");
    let buckets = tokenize(text).map(|tok| ((fnv1a64(tok.as_bytes()) % dim as u64) as u32, 1.0));
    SparseFeatures::from_pairs(dim, buckets)
}

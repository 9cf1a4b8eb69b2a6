//! Text embedders.
//!
//! [`HashEmbedder`] is a deterministic bag-of-words embedder based on signed
//! feature hashing. It can alias tokens onto other tokens before hashing,
//! which is how a lexicon can be planted "near" some other vocabulary.

use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::error::{Error, Result};

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 256;

/// Maps text to a unit vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Lowercased alphanumeric runs of `text`.
pub fn hash_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn fnv64(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    // FNV alone diffuses poorly into the high bits for short tokens.
    let mut x = h.finish();
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

fn accumulate(vector: &mut [f64], token: &str) {
    let h = fnv64(token);
    let bucket = (h % vector.len() as u64) as usize;
    let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
    vector[bucket] += sign;
}

/// Scales `v` to unit length in place. Returns the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Signed feature hashing of the token multiset of `text`, L2-normalized.
pub fn hash_embed(text: &str, dim: usize) -> Result<Vec<f64>> {
    HashEmbedder::new(dim).embed(text)
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    aliases: HashMap<String, String>,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            aliases: HashMap::new(),
        }
    }

    /// Hashes every token of `lexicon` as if it were `target`.
    pub fn with_alias<S: AsRef<str>>(
        mut self,
        lexicon: impl IntoIterator<Item = S>,
        target: &str,
    ) -> Self {
        let target = target.to_lowercase();
        for t in lexicon {
            self.aliases
                .insert(t.as_ref().to_lowercase(), target.clone());
        }
        self
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        let mut seen = 0usize;
        for token in hash_tokens(text) {
            let token = self
                .aliases
                .get(&token)
                .map_or(token.as_str(), String::as_str);
            accumulate(&mut v, token);
            seen += 1;
        }
        if seen == 0 {
            return Err(Error::EmptyText);
        }
        // Every token may have cancelled out in its bucket; fall back to
        // the unsigned histogram so the result is still a unit vector.
        if normalize(&mut v) == 0.0 {
            for token in hash_tokens(text) {
                let token = self
                    .aliases
                    .get(&token)
                    .map_or(token.as_str(), String::as_str);
                let bucket = (fnv64(token) % self.dim as u64) as usize;
                v[bucket] += 1.0;
            }
            normalize(&mut v);
        }
        Ok(v)
    }
}

/// Removes a leading self-identification sentence ("I identify as ...")
/// before delegating, so gendered and neutral profiles embed identically.
#[derive(Debug, Clone)]
pub struct PrefixStripping<E> {
    inner: E,
}

impl<E> PrefixStripping<E> {
    pub fn new(inner: E) -> Self {
        Self { inner }
    }
}

/// Text after a leading "I identify as X." sentence, or `text` unchanged.
pub fn strip_identity_prefix(text: &str) -> &str {
    let trimmed = text.trim_start();
    if trimmed.len() >= IDENTITY_PREFIX.len()
        && trimmed[..IDENTITY_PREFIX.len()].eq_ignore_ascii_case(IDENTITY_PREFIX)
    {
        if let Some(end) = trimmed.find('.') {
            return trimmed[end + 1..].trim_start();
        }
    }
    text
}

/// Lead-in of the self-identification sentence used by the gender probe.
pub const IDENTITY_PREFIX: &str = "I identify as ";

impl<E: Embedder> Embedder for PrefixStripping<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.inner.embed(strip_identity_prefix(text))
    }
}

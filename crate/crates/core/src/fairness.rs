//! Demographic distributions and the diversity reward.
//!
//! Categories of an attribute are embedded on equally spaced points of
//! `[0, 1]` in schema order, so the 1-Wasserstein distance between two
//! distributions over the same schema is itself bounded by `[0, 1]`: it is
//! `0` for identical distributions and `1` when all mass sits on the first
//! category in one and on the last category in the other.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
/// Scale of the diversity score; puts scores in the tens for typical pools.
pub const DEFAULT_SCORE_SCALE: f64 = 100.0;

pub const MASS_TOLERANCE: f64 = 1e-9;

/// Ordered category labels of one demographic attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct AttributeSchema {
    name: String,
    categories: Vec<String>,
}

#[derive(Deserialize)]
struct RawSchema {
    name: String,
    categories: Vec<String>,
}

impl TryFrom<RawSchema> for AttributeSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        AttributeSchema::new(raw.name, raw.categories)
    }
}

impl AttributeSchema {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let name = name.into();
        let categories: Vec<String> = categories.into_iter().map(Into::into).collect();
        if categories.len() < 2 {
            return Err(Error::InvalidSchema(format!(
                "attribute `{name}` needs at least two categories, got {}",
                categories.len()
            )));
        }
        for (i, c) in categories.iter().enumerate() {
            if categories[..i].contains(c) {
                return Err(Error::InvalidSchema(format!(
                    "attribute `{name}` repeats category `{c}`"
                )));
            }
        }
        Ok(Self { name, categories })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    pub fn contains(&self, category: &str) -> bool {
        self.index_of(category).is_some()
    }

    /// Position of category `i` on the unit interval.
    pub fn support_point(&self, i: usize) -> f64 {
        i as f64 / (self.categories.len() - 1) as f64
    }
}

/// Probability weights over the categories of an [`AttributeSchema`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoricalDistribution {
    schema: AttributeSchema,
    weights: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(schema: AttributeSchema, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != schema.len() {
            return Err(Error::InvalidDistribution(format!(
                "`{}` has {} categories but {} weights were given",
                schema.name(),
                schema.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "weight {w} for `{}` is not a nonnegative number",
                schema.name()
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "weights for `{}` sum to {total}",
                schema.name()
            )));
        }
        Ok(Self { schema, weights })
    }

    /// Builds a distribution from `(category, weight)` pairs; categories not
    /// listed get weight zero.
    pub fn from_pairs<K: AsRef<str>>(
        schema: AttributeSchema,
        pairs: impl IntoIterator<Item = (K, f64)>,
    ) -> Result<Self> {
        let mut weights = vec![0.0; schema.len()];
        for (k, w) in pairs {
            let i = schema.index_of(k.as_ref()).ok_or_else(|| {
                Error::SchemaMismatch(format!(
                    "category `{}` is not part of `{}`",
                    k.as_ref(),
                    schema.name()
                ))
            })?;
            weights[i] += w;
        }
        Self::new(schema, weights)
    }

    pub fn uniform(schema: AttributeSchema) -> Self {
        let n = schema.len();
        Self {
            schema,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, category: &str) -> Option<f64> {
        self.schema.index_of(category).map(|i| self.weights[i])
    }
}

impl fmt::Display for CategoricalDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.schema.name())?;
        for (i, (c, w)) in self
            .schema
            .categories()
            .iter()
            .zip(&self.weights)
            .enumerate()
        {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}: {w:.4}")?;
        }
        write!(f, ")")
    }
}

/// Turns category counts into a distribution in schema order.
pub fn normalize_counts<K: AsRef<str>>(
    counts: impl IntoIterator<Item = (K, u64)>,
    schema: &AttributeSchema,
) -> Result<CategoricalDistribution> {
    let mut tally = vec![0u64; schema.len()];
    for (k, n) in counts {
        let i = schema.index_of(k.as_ref()).ok_or_else(|| {
            Error::SchemaMismatch(format!(
                "category `{}` is not part of `{}`",
                k.as_ref(),
                schema.name()
            ))
        })?;
        tally[i] += n;
    }
    let total: u64 = tally.iter().sum();
    if total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let weights = tally.iter().map(|&n| n as f64 / total as f64).collect();
    Ok(CategoricalDistribution {
        schema: schema.clone(),
        weights,
    })
}

/// 1-Wasserstein distance on the equally spaced unit-interval support.
///
/// On a line the optimal transport cost is the L1 distance between the two
/// cumulative distribution functions; with spacing `1 / (n - 1)` between
/// neighbouring categories that is the CDF gap summed over the first `n - 1`
/// categories, divided by `n - 1`.
pub fn wasserstein1(p: &CategoricalDistribution, q: &CategoricalDistribution) -> Result<f64> {
    if p.schema != q.schema {
        return Err(Error::SchemaMismatch(format!(
            "cannot compare `{}` with `{}`",
            p.schema.name(),
            q.schema.name()
        )));
    }
    let n = p.weights.len();
    let mut cdf_p = 0.0;
    let mut cdf_q = 0.0;
    let mut gap = 0.0;
    for i in 0..n - 1 {
        cdf_p += p.weights[i];
        cdf_q += q.weights[i];
        gap += (cdf_p - cdf_q).abs();
    }
    Ok((gap / (n - 1) as f64).clamp(0.0, 1.0))
}

/// Per-attribute distances and the resulting diversity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub deltas: BTreeMap<String, f64>,
    /// `-scale * sum(deltas)`; zero means every attribute matches its target.
    pub score: f64,
    pub scale: f64,
}

impl DiversityReport {
    pub fn mismatch(&self) -> f64 {
        self.deltas.values().sum()
    }
}

fn checked_deltas<'a, K: AsRef<str>>(
    deltas: impl IntoIterator<Item = (K, &'a f64)>,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (k, &v) in deltas {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidDelta {
                attribute: k.as_ref().to_owned(),
                value: v,
            });
        }
        out.insert(k.as_ref().to_owned(), v);
    }
    Ok(out)
}

/// Negated, scaled total mismatch. Higher (closer to zero) is better.
pub fn diversity_score<'a, K: AsRef<str>>(
    deltas: impl IntoIterator<Item = (K, &'a f64)>,
    scale: f64,
) -> Result<DiversityReport> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "score scale must be positive, got {scale}"
        )));
    }
    let deltas = checked_deltas(deltas)?;
    let mismatch: f64 = deltas.values().sum();
    Ok(DiversityReport {
        deltas,
        score: -scale * mismatch,
        scale,
    })
}

/// Language quality traded against total demographic mismatch:
/// `quality - lambda * sum(deltas)`.
pub fn combined_reward<'a, K: 'a>(
    quality: f64,
    deltas: impl IntoIterator<Item = (K, &'a f64)>,
    lambda: f64,
) -> f64 {
    let mismatch: f64 = deltas.into_iter().map(|(_, v)| *v).sum();
    if lambda == 0.0 {
        return quality;
    }
    quality - lambda * mismatch
}

/// Pluggable language-quality scorer for [`combined_reward`].
pub trait QualityScorer: Send + Sync {
    fn score(&self, text: &str) -> f64;
}

/// Scores every text the same.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantQuality(pub f64);

impl Default for ConstantQuality {
    fn default() -> Self {
        ConstantQuality(1.0)
    }
}

impl QualityScorer for ConstantQuality {
    fn score(&self, _text: &str) -> f64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn gender() -> AttributeSchema {
        AttributeSchema::new("gender", ["female", "male"]).unwrap()
    }

    #[test]
    fn schema_rejects_single_category_and_duplicates() {
        assert!(matches!(
            AttributeSchema::new("x", ["a"]),
            Err(Error::InvalidSchema(_))
        ));
        assert!(matches!(
            AttributeSchema::new("x", ["a", "b", "a"]),
            Err(Error::InvalidSchema(_))
        ));
    }

    #[test]
    fn schema_deserialization_validates() {
        let bad: std::result::Result<AttributeSchema, _> =
            serde_json::from_str(r#"{"name":"g","categories":["a"]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn normalize_counts_ratio() {
        let counts = HashMap::from([("female", 7u64), ("male", 3)]);
        let d = normalize_counts(counts, &gender()).unwrap();
        assert_eq!(d.weights(), &[0.7, 0.3]);
    }

    #[test]
    fn normalize_counts_missing_category_gets_zero() {
        let d = normalize_counts([("female", 10u64)], &gender()).unwrap();
        assert_eq!(d.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn normalize_counts_errors() {
        let empty: [(&str, u64); 0] = [];
        assert!(matches!(
            normalize_counts(empty, &gender()),
            Err(Error::EmptyDistribution)
        ));
        assert!(matches!(
            normalize_counts([("female", 0u64)], &gender()),
            Err(Error::EmptyDistribution)
        ));
        assert!(matches!(
            normalize_counts([("other", 1u64)], &gender()),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn distribution_validation() {
        assert!(CategoricalDistribution::new(gender(), vec![0.6, 0.6]).is_err());
        assert!(CategoricalDistribution::new(gender(), vec![1.2, -0.2]).is_err());
        assert!(CategoricalDistribution::new(gender(), vec![1.0]).is_err());
        assert!(CategoricalDistribution::new(gender(), vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn wasserstein_examples() {
        let p = CategoricalDistribution::new(gender(), vec![0.7, 0.3]).unwrap();
        let q = CategoricalDistribution::new(gender(), vec![0.5, 0.5]).unwrap();
        assert_eq!(wasserstein1(&p, &p).unwrap(), 0.0);
        assert!((wasserstein1(&p, &q).unwrap() - 0.2).abs() < 1e-12);

        let five = AttributeSchema::new("geo", ["a", "b", "c", "d", "e"]).unwrap();
        let first =
            CategoricalDistribution::new(five.clone(), vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let last = CategoricalDistribution::new(five, vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(wasserstein1(&first, &last).unwrap(), 1.0);
    }

    #[test]
    fn wasserstein_schema_mismatch() {
        let other = AttributeSchema::new("gender", ["male", "female"]).unwrap();
        let p = CategoricalDistribution::uniform(gender());
        let q = CategoricalDistribution::uniform(other);
        assert!(matches!(
            wasserstein1(&p, &q),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn diversity_score_examples() {
        let zero = diversity_score([("gender", &0.0), ("geo", &0.0)], 1.0).unwrap();
        assert_eq!(zero.score, 0.0);
        let some = diversity_score([("gender", &0.2), ("geo", &0.3)], 1.0).unwrap();
        assert!((some.score + 0.5).abs() < 1e-12);
        let worst = diversity_score([("gender", &1.0), ("geo", &1.0)], 1.0).unwrap();
        assert_eq!(worst.score, -2.0);
    }

    #[test]
    fn diversity_score_rejects_bad_input() {
        assert!(matches!(
            diversity_score([("gender", &1.5)], 1.0),
            Err(Error::InvalidDelta { .. })
        ));
        assert!(matches!(
            diversity_score([("gender", &f64::NAN)], 1.0),
            Err(Error::InvalidDelta { .. })
        ));
        assert!(diversity_score([("gender", &0.5)], 0.0).is_err());
    }

    #[test]
    fn combined_reward_examples() {
        let none: [(&str, &f64); 0] = [];
        assert_eq!(combined_reward(0.8, [("gender", &0.4)], 0.0), 0.8);
        assert!((combined_reward(0.0, [("g", &0.2), ("l", &0.3)], 1.0) + 0.5).abs() < 1e-12);
        assert_eq!(combined_reward(0.8, [("g", &0.0), ("l", &0.0)], 1.0), 0.8);
        assert_eq!(combined_reward(0.8, none, 3.0), 0.8);
    }
}

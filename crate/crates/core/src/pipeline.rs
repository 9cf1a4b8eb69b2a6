//! The evaluator: embeds a description, retrieves the candidate pool and
//! its selected prefix, and measures how far the pool's demographics are
//! from the targets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::fairness::{
    diversity_score, normalize_counts, wasserstein1, CategoricalDistribution, DiversityReport,
};
use crate::ingest::CandidateProfile;
use crate::matchengine::{CandidateIndex, HardFilter, Match};
use crate::metrics::{impact_ratio, selection_rates, GroupedMatchSet};

/// Profile field an attribute is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileField {
    Gender,
    Geolocation,
}

impl ProfileField {
    pub fn name(self) -> &'static str {
        match self {
            ProfileField::Gender => "gender",
            ProfileField::Geolocation => "geolocation",
        }
    }

    pub fn value(self, c: &CandidateProfile) -> &str {
        match self {
            ProfileField::Gender => &c.gender,
            ProfileField::Geolocation => &c.geolocation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTarget {
    pub field: ProfileField,
    pub target: CategoricalDistribution,
}

/// Per-token advantage annotation of a rewrite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAdvantage {
    pub token: String,
    pub advantage: f64,
}

/// Everything measured for one description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResponse {
    pub diversity: DiversityReport,
    /// attribute -> group -> impact ratio of the selected set within the pool.
    pub impact_ratios: BTreeMap<String, BTreeMap<String, f64>>,
    /// attribute -> category -> count among the selected candidates.
    pub selected_histogram: BTreeMap<String, BTreeMap<String, u64>>,
    /// attribute -> category -> count in the whole pool.
    pub pool_histogram: BTreeMap<String, BTreeMap<String, u64>>,
    /// The selected candidates, best first.
    pub top_candidates: Vec<Match>,
    pub pool_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_advantages: Option<Vec<TokenAdvantage>>,
}

/// Retrieval plus demographic scoring over one candidate index.
pub struct Evaluator {
    pub attributes: Vec<AttributeTarget>,
    pub index: CandidateIndex,
    pub embedder: Box<dyn Embedder>,
    pub filter: HardFilter,
    pub k_pool: usize,
    pub k_select: usize,
    pub scale: f64,
}

/// Counts of each category among `members`, with every schema category
/// present; values outside the schema are counted under their own label.
fn histogram<'a>(
    field: ProfileField,
    schema_categories: &[String],
    members: impl Iterator<Item = &'a CandidateProfile>,
) -> BTreeMap<String, u64> {
    let mut h: BTreeMap<String, u64> = schema_categories.iter().map(|c| (c.clone(), 0)).collect();
    for c in members {
        *h.entry(field.value(c).to_owned()).or_default() += 1;
    }
    h
}

impl Evaluator {
    /// Ranked pool for `text`.
    pub fn retrieve(&self, text: &str) -> Result<Vec<Match>> {
        let query = self.embedder.embed(text)?;
        self.index.top_k(&self.filter, &query, self.k_pool)
    }

    /// Demographic distribution of `pool` over one attribute.
    pub fn realized(
        &self,
        attr: &AttributeTarget,
        pool: &[Match],
    ) -> Result<CategoricalDistribution> {
        let schema = attr.target.schema();
        let counts = pool
            .iter()
            .map(|m| attr.field.value(self.index.profile(m.row)))
            .filter(|v| schema.contains(v))
            .map(|v| (v, 1u64));
        normalize_counts(counts, schema)
    }

    pub fn evaluate(&self, text: &str) -> Result<EvaluationResponse> {
        let pool = self.retrieve(text)?;
        let selected = &pool[..self.k_select.min(pool.len())];

        let mut deltas = BTreeMap::new();
        let mut impact_ratios = BTreeMap::new();
        let mut selected_histogram = BTreeMap::new();
        let mut pool_histogram = BTreeMap::new();
        for attr in &self.attributes {
            let name = attr.target.schema().name().to_owned();
            let realized = self.realized(attr, &pool)?;
            deltas.insert(name.clone(), wasserstein1(&realized, &attr.target)?);

            let ms = self.match_set(attr.field, "", &pool, selected.len())?;
            let rates = selection_rates(&ms);
            match impact_ratio(&rates) {
                Ok(ir) => {
                    impact_ratios.insert(name.clone(), ir);
                }
                Err(Error::UndefinedIr) => {}
                Err(e) => return Err(e),
            }
            let cats = attr.target.schema().categories();
            selected_histogram.insert(
                name.clone(),
                histogram(
                    attr.field,
                    cats,
                    selected.iter().map(|m| self.index.profile(m.row)),
                ),
            );
            pool_histogram.insert(
                name,
                histogram(
                    attr.field,
                    cats,
                    pool.iter().map(|m| self.index.profile(m.row)),
                ),
            );
        }
        let diversity = diversity_score(deltas.iter(), self.scale)?;
        Ok(EvaluationResponse {
            diversity,
            impact_ratios,
            selected_histogram,
            pool_histogram,
            top_candidates: selected.to_vec(),
            pool_size: pool.len(),
            token_advantages: None,
        })
    }

    /// Pool/selection split of `pool` grouped by `field`, with relevance
    /// left empty.
    pub fn match_set(
        &self,
        field: ProfileField,
        job_id: &str,
        pool: &[Match],
        n_selected: usize,
    ) -> Result<GroupedMatchSet> {
        let ids: Vec<String> = pool.iter().map(|m| m.id.clone()).collect();
        let group_of = pool
            .iter()
            .map(|m| {
                (
                    m.id.clone(),
                    field.value(self.index.profile(m.row)).to_owned(),
                )
            })
            .collect();
        let selected = ids[..n_selected.min(ids.len())].to_vec();
        GroupedMatchSet::new(job_id, ids, selected, group_of, Default::default())
    }

    /// Lowest attainable score: every attribute maximally mismatched.
    pub fn worst_score(&self) -> f64 {
        -self.scale * self.attributes.len() as f64
    }

    /// Diversity score used as the training reward. Text with no tokens
    /// (an immediately terminated generation) gets [`Self::worst_score`].
    pub fn reward(&self, text: &str) -> Result<f64> {
        match self.evaluate(text) {
            Ok(r) => Ok(r.diversity.score),
            Err(Error::EmptyText) => Ok(self.worst_score()),
            Err(e) => Err(e),
        }
    }
}

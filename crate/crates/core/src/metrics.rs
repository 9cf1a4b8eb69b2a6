//! Audit and ranking statistics over matched candidate sets.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of selected candidates taken from the pool.
pub const DEFAULT_SELECT_K: usize = 10;

/// A job's retrieved pool, the selected prefix of it, and per-candidate
/// group labels and relevance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedMatchSet {
    pub job_id: String,
    pub pool: Vec<String>,
    pub selected: Vec<String>,
    pub group_of: HashMap<String, String>,
    #[serde(default)]
    pub relevant: HashMap<String, bool>,
}

impl GroupedMatchSet {
    pub fn new(
        job_id: impl Into<String>,
        pool: Vec<String>,
        selected: Vec<String>,
        group_of: HashMap<String, String>,
        relevant: HashMap<String, bool>,
    ) -> Result<Self> {
        if let Some(id) = selected.iter().find(|id| !pool.contains(id)) {
            return Err(Error::InvalidParameter(format!(
                "selected candidate `{id}` is not in the pool"
            )));
        }
        if let Some(id) = pool.iter().find(|id| !group_of.contains_key(*id)) {
            return Err(Error::InvalidParameter(format!(
                "pool candidate `{id}` has no group label"
            )));
        }
        Ok(Self {
            job_id: job_id.into(),
            pool,
            selected,
            group_of,
            relevant,
        })
    }

    fn in_group<'a>(&'a self, ids: &'a [String], g: &'a str) -> impl Iterator<Item = &'a String> {
        ids.iter()
            .filter(move |id| self.group_of.get(*id).is_some_and(|x| x == g))
    }

    fn is_relevant(&self, id: &str) -> bool {
        self.relevant.get(id).copied().unwrap_or(false)
    }

    /// Distinct group labels present in the pool, sorted.
    pub fn groups(&self) -> Vec<String> {
        let mut gs: Vec<String> = self
            .pool
            .iter()
            .filter_map(|id| self.group_of.get(id).cloned())
            .collect();
        gs.sort();
        gs.dedup();
        gs
    }
}

/// Share of group `g`'s pooled candidates that reach the selected set.
pub fn selection_rate(ms: &GroupedMatchSet, g: &str) -> Result<f64> {
    let pooled = ms.in_group(&ms.pool, g).count();
    if pooled == 0 {
        return Err(Error::UndefinedRate(g.to_owned()));
    }
    let selected = ms.in_group(&ms.selected, g).count();
    Ok(selected as f64 / pooled as f64)
}

/// Selection rates for every group present in the pool.
pub fn selection_rates(ms: &GroupedMatchSet) -> BTreeMap<String, f64> {
    ms.groups()
        .into_iter()
        .filter_map(|g| selection_rate(ms, &g).ok().map(|r| (g, r)))
        .collect()
}

/// Each group's selection rate relative to the best group's.
pub fn impact_ratio(rates: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let best = rates.values().copied().fold(0.0f64, f64::max);
    if best <= 0.0 {
        return Err(Error::UndefinedIr);
    }
    Ok(rates.iter().map(|(g, &r)| (g.clone(), r / best)).collect())
}

/// Share of group `g`'s relevant pooled candidates that appear among the
/// first `k` selected.
pub fn tpr(ms: &GroupedMatchSet, g: &str, k: usize) -> Result<f64> {
    let relevant = ms
        .in_group(&ms.pool, g)
        .filter(|id| ms.is_relevant(id))
        .count();
    if relevant == 0 {
        return Err(Error::UndefinedTpr(g.to_owned()));
    }
    let top = &ms.selected[..k.min(ms.selected.len())];
    let hits = ms.in_group(top, g).filter(|id| ms.is_relevant(id)).count();
    Ok(hits as f64 / relevant as f64)
}

/// How per-group TPRs are compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapMode {
    /// Best minus worst group; never negative.
    MaxMin,
    /// `tpr[first] - tpr[second]`.
    Signed(String, String),
}

pub fn tpr_gap(tprs: &BTreeMap<String, f64>, mode: &GapMode) -> Result<f64> {
    match mode {
        GapMode::MaxMin => {
            if tprs.len() < 2 {
                return Err(Error::MissingGroup(format!(
                    "max-min gap needs two groups, got {}",
                    tprs.len()
                )));
            }
            let max = tprs.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = tprs.values().copied().fold(f64::INFINITY, f64::min);
            Ok(max - min)
        }
        GapMode::Signed(a, b) => {
            let ta = tprs.get(a).ok_or_else(|| Error::MissingGroup(a.clone()))?;
            let tb = tprs.get(b).ok_or_else(|| Error::MissingGroup(b.clone()))?;
            Ok(ta - tb)
        }
    }
}

/// Binary relevance of one job's ranked results, rank 1 first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedRelevance {
    pub job_id: String,
    pub ranks: Vec<bool>,
}

impl RankedRelevance {
    pub fn new(job_id: impl Into<String>, ranks: Vec<bool>) -> Self {
        Self {
            job_id: job_id.into(),
            ranks,
        }
    }
}

fn check_ranking_input(rankings: &[RankedRelevance], k: usize) -> Result<()> {
    if rankings.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    Ok(())
}

fn reciprocal_rank(ranks: &[bool], k: usize) -> f64 {
    ranks
        .iter()
        .take(k)
        .position(|&r| r)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

fn dcg(ranks: impl Iterator<Item = bool>) -> f64 {
    ranks
        .enumerate()
        .filter(|(_, r)| *r)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum()
}

fn ndcg_one(ranks: &[bool], k: usize) -> f64 {
    let actual = dcg(ranks.iter().take(k).copied());
    let relevant = ranks.iter().filter(|&&r| r).count();
    let ideal = dcg((0..ranks.len()).map(|i| i < relevant).take(k));
    if ideal == 0.0 {
        0.0
    } else {
        actual / ideal
    }
}

/// Mean reciprocal rank of the first relevant result within the top `k`.
pub fn mrr_at_k(rankings: &[RankedRelevance], k: usize) -> Result<f64> {
    check_ranking_input(rankings, k)?;
    let total: f64 = rankings.iter().map(|r| reciprocal_rank(&r.ranks, k)).sum();
    Ok(total / rankings.len() as f64)
}

/// Mean unnormalized discounted cumulative gain over the top `k`.
pub fn dcg_at_k(rankings: &[RankedRelevance], k: usize) -> Result<f64> {
    check_ranking_input(rankings, k)?;
    let total: f64 = rankings
        .iter()
        .map(|r| dcg(r.ranks.iter().take(k).copied()))
        .sum();
    Ok(total / rankings.len() as f64)
}

/// Mean NDCG over the top `k`; a job with no relevant results scores 0.
pub fn ndcg_at_k(rankings: &[RankedRelevance], k: usize) -> Result<f64> {
    check_ranking_input(rankings, k)?;
    let total: f64 = rankings.iter().map(|r| ndcg_one(&r.ranks, k)).sum();
    Ok(total / rankings.len() as f64)
}

/// Which direction of change counts as an improvement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

/// One-sided exact sign test on `(before, after)` pairs. Ties are dropped;
/// returns `P(X >= improvements)` for `X ~ Binomial(untied, 0.5)`.
pub fn binomial_improvement_test(pairs: &[(f64, f64)], direction: Direction) -> Result<f64> {
    let mut untied = 0u64;
    let mut improved = 0u64;
    for &(before, after) in pairs {
        if before == after {
            continue;
        }
        untied += 1;
        let better = match direction {
            Direction::HigherIsBetter => after > before,
            Direction::LowerIsBetter => after < before,
        };
        if better {
            improved += 1;
        }
    }
    if untied == 0 {
        return Err(Error::UndefinedTest);
    }
    if improved == 0 {
        return Ok(1.0);
    }
    Ok(fair_coin_upper_tail(untied, improved))
}

/// `P(X >= k)` for `X ~ Binomial(n, 0.5)`, summed exactly in log space.
fn fair_coin_upper_tail(n: u64, k: u64) -> f64 {
    let mut ln_choose = 0.0;
    let mut terms = Vec::with_capacity((n - k + 1) as usize);
    for i in 0..=n {
        if i >= k {
            terms.push(ln_choose);
        }
        if i < n {
            ln_choose += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln() - n as f64 * std::f64::consts::LN_2)
        .exp()
        .clamp(0.0, 1.0)
}

/// Mean and population standard deviation; `None` for an empty slice.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

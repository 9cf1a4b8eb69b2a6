//! Sensitivity of matching to an explicit statement of gender in the
//! candidate profile.

use std::collections::BTreeMap;

use crate::embed::{Embedder, IDENTITY_PREFIX};
use crate::error::Result;
use crate::ingest::{CandidateProfile, JobPosting};
use crate::matchengine::{build_index, HardFilter};

/// Profile text with the self-identification sentence in front.
pub fn gendered_text(gender: &str, text: &str) -> String {
    format!("{IDENTITY_PREFIX}{gender}. {text}")
}

fn embedded(
    candidates: &[CandidateProfile],
    embedder: &dyn Embedder,
    text_of: impl Fn(&CandidateProfile) -> String,
) -> Result<Vec<CandidateProfile>> {
    candidates
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.embedding = Some(embedder.embed(&text_of(&c))?);
            Ok(c)
        })
        .collect()
}

/// For each job title, the change in each gender's probability of reaching
/// the top `k` when profiles state their gender, relative to the neutral
/// profiles. Negative values mean the statement lowered the probability.
/// Jobs sharing a title are averaged. Candidates of unknown gender are left
/// out.
pub fn gender_probe(
    jobs: &[JobPosting],
    candidates: &[CandidateProfile],
    embedder: &dyn Embedder,
    filter: &HardFilter,
    k: usize,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    if jobs.is_empty() {
        return Ok(BTreeMap::new());
    }
    let known: Vec<CandidateProfile> = candidates
        .iter()
        .filter(|c| c.has_known_gender())
        .cloned()
        .collect();
    let mut group_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &known {
        *group_sizes.entry(c.gender.as_str()).or_default() += 1;
    }
    let neutral = build_index(embedded(&known, embedder, |c| c.text.clone())?)?;
    let gendered = build_index(embedded(&known, embedder, |c| {
        gendered_text(&c.gender, &c.text)
    })?)?;

    let mut sums: BTreeMap<String, (BTreeMap<String, f64>, usize)> = BTreeMap::new();
    for job in jobs {
        let query = embedder.embed(&job.text)?;
        let rate = |index: &crate::matchengine::CandidateIndex| -> Result<BTreeMap<&str, f64>> {
            let mut hits: BTreeMap<&str, usize> = group_sizes.keys().map(|g| (*g, 0)).collect();
            for m in index.top_k(filter, &query, k)? {
                *hits
                    .get_mut(index.profile(m.row).gender.as_str())
                    .expect("known gender") += 1;
            }
            Ok(hits
                .into_iter()
                .map(|(g, h)| (g, h as f64 / group_sizes[g] as f64))
                .collect())
        };
        let before = rate(&neutral)?;
        let after = rate(&gendered)?;
        let (acc, n) = sums.entry(job.title.clone()).or_default();
        for (g, b) in before {
            *acc.entry(g.to_owned()).or_default() += after[g] - b;
        }
        *n += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(title, (acc, n))| {
            (
                title,
                acc.into_iter().map(|(g, d)| (g, d / n as f64)).collect(),
            )
        })
        .collect())
}
